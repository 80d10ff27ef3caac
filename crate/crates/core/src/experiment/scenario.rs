use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adversarial::{PerturbationBudget, DEFAULT_RELATIVE_ACCURACY};
use crate::channel::{calibrate_noise, effective_gain, make_channel, snr, ChannelVector, InteractionVector, RisConfig};
use crate::error::{invalid, Result};
use crate::signals::{linear_to_db, NoiseModel, PowerDbm};

/// Which node is listening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Receiver,
    Eavesdropper,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Receiver, Side::Eavesdropper];

    pub fn tag(self) -> u64 {
        match self {
            Side::Receiver => 0,
            Side::Eavesdropper => 1,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Side::Receiver => "rx",
            Side::Eavesdropper => "eve",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rx" | "receiver" => Ok(Side::Receiver),
            "eve" | "eavesdropper" => Ok(Side::Eavesdropper),
            other => Err(format!("unknown side '{other}' (expected rx or eve)")),
        }
    }
}

/// Node placement around the surface. Transmitter and receiver are fixed;
/// the eavesdropper moves with `theta_re_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub theta_tr_deg: f64,
    pub theta_ri_deg: f64,
    pub theta_re_deg: f64,
    pub ris: RisConfig,
    pub rho_tr: f64,
    pub rho_ri: f64,
    pub rho_re: f64,
}

impl Topology {
    /// Eavesdropper angles of the three reference layouts (a), (b), (c).
    pub const REFERENCE_EVE_ANGLES: [f64; 3] = [10.0, 40.0, 70.0];

    /// Reference layout: θ_tr = 45°, θ_ri = 30°, unit path loss, 16 lossless elements.
    pub fn reference(theta_re_deg: f64) -> Self {
        Self {
            theta_tr_deg: 45.0,
            theta_ri_deg: 30.0,
            theta_re_deg,
            ris: RisConfig::default(),
            rho_tr: 1.0,
            rho_ri: 1.0,
            rho_re: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ris.validate()?;
        for (name, a) in [
            ("theta_tr_deg", self.theta_tr_deg),
            ("theta_ri_deg", self.theta_ri_deg),
            ("theta_re_deg", self.theta_re_deg),
        ] {
            if !(a > 0.0 && a < 180.0) {
                return Err(invalid(format!("{name} must lie in (0, 180), got {a}")));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> Result<(ChannelVector, ChannelVector, ChannelVector)> {
        let r = &self.ris;
        Ok((
            make_channel(self.theta_tr_deg, self.rho_tr, r.n, r.d_phase)?,
            make_channel(self.theta_ri_deg, self.rho_ri, r.n, r.d_phase)?,
            make_channel(self.theta_re_deg, self.rho_re, r.n, r.d_phase)?,
        ))
    }
}

/// A topology together with its operating point: the codebook gains of both
/// links and the test-time noise floors calibrated from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub frame_len: usize,
    pub signal_power: PowerDbm,
    /// Codebook-average SNR at which each side's noise floor is set.
    pub test_snr_db: f64,
    /// Bisection tolerance relative to `sqrt(E_max)`.
    pub eps_acc_rel: f64,
    codebook: Vec<InteractionVector>,
    gains_rx: Vec<Complex64>,
    gains_eve: Vec<Complex64>,
    noise_rx: NoiseModel,
    noise_eve: NoiseModel,
}

impl Scenario {
    pub fn new(topology: Topology, frame_len: usize, signal_power: PowerDbm, test_snr_db: f64) -> Result<Self> {
        topology.validate()?;
        if frame_len == 0 {
            return Err(invalid("frame length must be >= 1"));
        }
        let (h_tr, h_ri, h_re) = topology.channels()?;
        let codebook = topology.ris.codebook();
        let kappa = topology.ris.kappa;
        let gains = |h_out: &ChannelVector| -> Result<Vec<Complex64>> {
            codebook.iter().map(|cw| effective_gain(&h_tr, cw, h_out, kappa)).collect()
        };
        let gains_rx = gains(&h_ri)?;
        let gains_eve = gains(&h_re)?;
        let noise_rx = calibrate_noise(&gains_rx, signal_power, test_snr_db)?;
        let noise_eve = calibrate_noise(&gains_eve, signal_power, test_snr_db)?;
        Ok(Self {
            topology,
            frame_len,
            signal_power,
            test_snr_db,
            eps_acc_rel: DEFAULT_RELATIVE_ACCURACY,
            codebook,
            gains_rx,
            gains_eve,
            noise_rx,
            noise_eve,
        })
    }

    /// Reference layout at 30 dBm, 16-sample frames, 5 dB average SNR.
    pub fn reference(theta_re_deg: f64) -> Result<Self> {
        Self::new(Topology::reference(theta_re_deg), 16, PowerDbm(30.0), 5.0)
    }

    pub fn codebook(&self) -> &[InteractionVector] {
        &self.codebook
    }

    pub fn codebook_len(&self) -> usize {
        self.codebook.len()
    }

    pub fn gains(&self, side: Side) -> &[Complex64] {
        match side {
            Side::Receiver => &self.gains_rx,
            Side::Eavesdropper => &self.gains_eve,
        }
    }

    pub fn gain(&self, side: Side, ris_index: usize) -> Result<Complex64> {
        self.gains(side)
            .get(ris_index)
            .copied()
            .ok_or_else(|| invalid(format!("RIS index {ris_index} outside codebook of {}", self.codebook.len())))
    }

    /// Test-time noise floor of one side.
    pub fn noise(&self, side: Side) -> NoiseModel {
        match side {
            Side::Receiver => self.noise_rx,
            Side::Eavesdropper => self.noise_eve,
        }
    }

    pub fn snr_db(&self, side: Side, ris_index: usize) -> Result<f64> {
        Ok(linear_to_db(snr(self.gain(side, ris_index)?, self.signal_power, &self.noise(side))))
    }

    pub fn budget(&self, p_max: PowerDbm) -> Result<PerturbationBudget> {
        PerturbationBudget::relative(p_max, self.frame_len, self.eps_acc_rel)
    }
}
