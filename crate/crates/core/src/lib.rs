//! Covert communication over a reconfigurable intelligent surface (RIS).
//!
//! A transmitter reaches a receiver through an RIS whose phase profile is
//! drawn from a codebook. An eavesdropper at another angle runs a CNN signal
//! detector on what it overhears. The transmitter picks the codeword that
//! keeps the receiver's detector confident while the eavesdropper's is not,
//! and adds a minimal adversarial perturbation that pushes the eavesdropper
//! toward labeling the frame as noise.
//!
//! Modules follow the pipeline: [`signals`] and [`channel`] model the link,
//! [`detector`] is the trainable classifier, [`adversarial`] crafts the
//! perturbation, [`experiment`] runs the Monte-Carlo studies and [`config`]
//! binds one run together.

pub mod adversarial;
pub mod channel;
pub mod config;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod signals;

pub use adversarial::{apply_perturbation, craft, fgm_direction, CraftedPerturbation, PerturbationBudget};
pub use channel::{effective_gain, make_channel, ChannelVector, CodebookKind, InteractionVector, RisConfig};
pub use config::RunConfig;
pub use detector::{Architecture, DetectorModel, IqTensor, Label, LabeledExample};
pub use error::{Error, Result};
pub use experiment::{DetectionReport, Scenario, Side, Topology};
pub use signals::{ComplexFrame, NoiseModel, PowerDbm};
