//! Line-of-sight RIS channels, interaction codebooks and end-to-end gains.
//!
//! A link into or out of the surface is `h = sqrt(rho * N) * a(theta)` with
//! the uniform-linear-array response `a`. The surface applies
//! `Phi = diag(kappa * psi)`, so a transmitter→RIS→node path collapses to the
//! scalar `g = h_out^T Phi h_in`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signals::{db_to_linear, NoiseModel, PowerDbm};

/// Steering vector `sqrt(1/n) [1, e^{j d cos θ}, ..., e^{j d (n-1) cos θ}]`.
pub fn array_response(theta_deg: f64, n: usize, d_phase: f64) -> Vec<Complex64> {
    let amp = (1.0 / n as f64).sqrt();
    steering(theta_deg, n, d_phase, amp)
}

fn steering(theta_deg: f64, n: usize, d_phase: f64, amp: f64) -> Vec<Complex64> {
    let step = d_phase * theta_deg.to_radians().cos();
    (0..n).map(|k| Complex64::from_polar(amp, step * k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub h: Vec<Complex64>,
    pub theta_deg: f64,
    pub rho: f64,
}

impl ChannelVector {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `h = sqrt(rho * n) * a(theta)`; every element has magnitude `sqrt(rho)`.
pub fn make_channel(theta_deg: f64, rho: f64, n: usize, d_phase: f64) -> Result<ChannelVector> {
    if n == 0 {
        return Err(invalid("RIS must have at least one element"));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid(format!("path loss must be finite and >= 0, got {rho}")));
    }
    // sqrt(rho n) * sqrt(1/n) folded into one factor keeps h[0] == sqrt(rho) exactly
    Ok(ChannelVector { h: steering(theta_deg, n, d_phase, rho.sqrt()), theta_deg, rho })
}

/// One RIS configuration: unit-modulus phase per element.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionVector {
    pub psi: Vec<Complex64>,
    pub index: usize,
}

/// DFT codebook: codeword `i` has k-th entry `e^{j 2π k i / n}`.
pub fn dft_codebook(n: usize) -> Vec<InteractionVector> {
    (0..n)
        .map(|i| InteractionVector {
            psi: (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * ((k * i) % n) as f64 / n as f64)).collect(),
            index: i,
        })
        .collect()
}

/// DFT codebook quantized to 1-bit phases (0 or π): each entry becomes the
/// sign of its real part, with ties going to +1.
pub fn one_bit_codebook(n: usize) -> Vec<InteractionVector> {
    dft_codebook(n)
        .into_iter()
        .map(|cw| InteractionVector {
            psi: cw.psi.iter().map(|p| Complex64::new(if p.re >= -1e-12 { 1.0 } else { -1.0 }, 0.0)).collect(),
            index: cw.index,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookKind {
    #[default]
    Dft,
    OneBit,
}

/// Surface hardware parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RisConfig {
    pub n: usize,
    /// Per-element reflection loss, in (0, 1].
    pub kappa: f64,
    /// Electrical inter-element spacing; π for half-wavelength spacing.
    pub d_phase: f64,
    pub codebook: CodebookKind,
}

impl Default for RisConfig {
    fn default() -> Self {
        Self { n: 16, kappa: 1.0, d_phase: PI, codebook: CodebookKind::Dft }
    }
}

impl RisConfig {
    pub fn codebook(&self) -> Vec<InteractionVector> {
        match self.codebook {
            CodebookKind::Dft => dft_codebook(self.n),
            CodebookKind::OneBit => one_bit_codebook(self.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("ris.n must be >= 1"));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(invalid(format!("ris.kappa must lie in (0, 1], got {}", self.kappa)));
        }
        if !self.d_phase.is_finite() {
            return Err(invalid("ris.d_phase must be finite"));
        }
        Ok(())
    }
}

/// `g = sum_k h_out[k] * kappa * psi[k] * h_in[k]`.
pub fn effective_gain(
    h_in: &ChannelVector,
    psi: &InteractionVector,
    h_out: &ChannelVector,
    kappa: f64,
) -> Result<Complex64> {
    let n = psi.psi.len();
    if h_in.len() != n || h_out.len() != n {
        return Err(invalid(format!("length mismatch: h_in {}, psi {}, h_out {}", h_in.len(), n, h_out.len())));
    }
    let sum: Complex64 = h_out.h.iter().zip(&psi.psi).zip(&h_in.h).map(|((o, p), i)| o * p * i).sum();
    Ok(sum * kappa)
}

/// Noise variance giving an arithmetic-mean SNR of `target_snr_db` over `gains`.
pub fn calibrate_noise(gains: &[Complex64], signal_power: PowerDbm, target_snr_db: f64) -> Result<NoiseModel> {
    if gains.is_empty() {
        return Err(invalid("no gains to calibrate against"));
    }
    let mean_gain = gains.iter().map(|g| g.norm_sqr()).sum::<f64>() / gains.len() as f64;
    if mean_gain == 0.0 {
        return Err(Error::DegenerateChannel("all gains are zero".into()));
    }
    NoiseModel::new(mean_gain * signal_power.watts() / db_to_linear(target_snr_db))
}

/// Linear SNR `|g|^2 P / σ^2` of one path.
pub fn snr(gain: Complex64, signal_power: PowerDbm, noise: &NoiseModel) -> f64 {
    gain.norm_sqr() * signal_power.watts() / noise.variance()
}
