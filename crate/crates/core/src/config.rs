//! Run configuration: one TOML file drives the full pipeline for one topology.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [angles]
//! theta_re_deg = 70.0
//!
//! [sweep]
//! powers_dbm = [5.0, 10.0, 15.0, 20.0, 25.0]
//! n_trials = 1000
//! ```
//!
//! Every section and key is optional; omitted values take the reference setup.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::DEFAULT_RELATIVE_ACCURACY;
use crate::channel::RisConfig;
use crate::detector::{Architecture, TrainConfig};
use crate::error::{Error, Result};
use crate::experiment::{DatasetSpec, Scenario, Side, Topology};
use crate::signals::{derive_seed, PowerDbm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnglesSection {
    pub theta_tr_deg: f64,
    pub theta_ri_deg: f64,
    pub theta_re_deg: f64,
}

impl Default for AnglesSection {
    fn default() -> Self {
        Self { theta_tr_deg: 45.0, theta_ri_deg: 30.0, theta_re_deg: 70.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathlossSection {
    pub rho_tr: f64,
    pub rho_ri: f64,
    pub rho_re: f64,
}

impl Default for PathlossSection {
    fn default() -> Self {
        Self { rho_tr: 1.0, rho_ri: 1.0, rho_re: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub frame_len: usize,
    pub power_dbm: f64,
    /// Codebook-average SNR of the test-time noise floor.
    pub test_snr_db: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self { frame_len: 16, power_dbm: 30.0, test_snr_db: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub filters: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self { filters: 16, hidden: 64, dropout: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples_per_cell: usize,
    pub paper_scale_samples: usize,
    pub snr_levels_db: Vec<f64>,
    pub include_noise_class: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            samples_per_cell: 500,
            paper_scale_samples: 5000,
            snr_levels_db: vec![3.0, 5.0, 7.0],
            include_noise_class: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { epochs: t.epochs, batch_size: t.batch_size, learning_rate: t.learning_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub powers_dbm: Vec<f64>,
    /// Adds an unperturbed column to the grid.
    pub include_baseline: bool,
    /// Power at which the covert codeword is chosen; defaults to the largest sweep power.
    pub selection_dbm: Option<f64>,
    pub n_trials: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            powers_dbm: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            include_baseline: true,
            selection_dbm: None,
            n_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// Bisection tolerance relative to the square root of the frame-energy budget.
    pub eps_acc_rel: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self { eps_acc_rel: DEFAULT_RELATIVE_ACCURACY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub ris: RisConfig,
    pub angles: AnglesSection,
    pub pathloss: PathlossSection,
    pub signal: SignalSection,
    pub detector: DetectorSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub budget: BudgetSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            ris: RisConfig::default(),
            angles: AnglesSection::default(),
            pathloss: PathlossSection::default(),
            signal: SignalSection::default(),
            detector: DetectorSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            sweep: SweepSection::default(),
            budget: BudgetSection::default(),
        }
    }
}

const DATA_TAG: u64 = 10;
const TRAIN_TAG: u64 = 11;
const SWEEP_TAG: u64 = 12;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.topology().validate().map_err(cfg_err)?;
        self.architecture().validate().map_err(cfg_err)?;
        self.dataset_spec().validate().map_err(cfg_err)?;
        self.train_config(Side::Receiver).validate().map_err(cfg_err)?;
        if !(0.0..1.0).contains(&self.detector.dropout) {
            return Err(Error::Config(format!("detector.dropout must lie in [0, 1), got {}", self.detector.dropout)));
        }
        if self.sweep.n_trials == 0 {
            return Err(Error::Config("sweep.n_trials must be >= 1".into()));
        }
        if self.sweep_powers().is_empty() {
            return Err(Error::Config("sweep needs at least one power or the baseline".into()));
        }
        if self.sweep.powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("sweep.powers_dbm must be finite".into()));
        }
        if !self.sweep_powers().contains(&self.selection_power()) {
            return Err(Error::Config("sweep.selection_dbm must be one of sweep.powers_dbm".into()));
        }
        if !(self.budget.eps_acc_rel > 0.0 && self.budget.eps_acc_rel < 1.0) {
            return Err(Error::Config("budget.eps_acc_rel must lie in (0, 1)".into()));
        }
        if !self.signal.power_dbm.is_finite() || !self.signal.test_snr_db.is_finite() {
            return Err(Error::Config("signal power and SNR must be finite".into()));
        }
        Ok(())
    }

    /// Switches the dataset to the full-size recipe.
    pub fn paper_scale(mut self) -> Self {
        self.dataset.samples_per_cell = self.dataset.paper_scale_samples;
        self
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }

    pub fn topology(&self) -> Topology {
        Topology {
            theta_tr_deg: self.angles.theta_tr_deg,
            theta_ri_deg: self.angles.theta_ri_deg,
            theta_re_deg: self.angles.theta_re_deg,
            ris: self.ris,
            rho_tr: self.pathloss.rho_tr,
            rho_ri: self.pathloss.rho_ri,
            rho_re: self.pathloss.rho_re,
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::new(
            self.topology(),
            self.signal.frame_len,
            PowerDbm(self.signal.power_dbm),
            self.signal.test_snr_db,
        )?;
        s.eps_acc_rel = self.budget.eps_acc_rel;
        Ok(s)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { frame_len: self.signal.frame_len, filters: self.detector.filters, hidden: self.detector.hidden }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            samples_per_cell: self.dataset.samples_per_cell,
            snr_levels_db: self.dataset.snr_levels_db.clone(),
            signal_power: PowerDbm(self.signal.power_dbm),
            include_noise_class: self.dataset.include_noise_class,
        }
    }

    pub fn dataset_seed(&self) -> u64 {
        derive_seed(self.seed, &[DATA_TAG])
    }

    /// Both detectors share the architecture but not the initialization.
    pub fn train_config(&self, side: Side) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: derive_seed(self.seed, &[TRAIN_TAG, side.tag()]),
        }
    }

    pub fn sweep_seed(&self) -> u64 {
        derive_seed(self.seed, &[SWEEP_TAG])
    }

    /// Grid columns: the baseline (if enabled) followed by the configured powers.
    pub fn sweep_powers(&self) -> Vec<Option<PowerDbm>> {
        let base = self.sweep.include_baseline.then_some(None);
        base.into_iter().chain(self.sweep.powers_dbm.iter().map(|&p| Some(PowerDbm(p)))).collect()
    }

    pub fn selection_power(&self) -> Option<PowerDbm> {
        match self.sweep.selection_dbm {
            Some(p) => Some(PowerDbm(p)),
            None => self.sweep.powers_dbm.iter().copied().reduce(f64::max).map(PowerDbm),
        }
    }
}
