//! Training data for the detectors and its on-disk format.
//!
//! Every (codeword, SNR level) cell contributes `samples_per_cell` signal
//! frames. The cell's noise is calibrated from that codeword's own gain so
//! the SNR is exact, and the cell is then rescaled so its noise floor matches
//! the side's test-time floor. An equal number of pure-noise frames at that
//! floor forms the noise class.
//!
//! File layout (little-endian): `b"RISS"`, version u32, M u32, count u64,
//! train_len u64, `count * 2M` f32 I/Q values (row-major per example), then
//! `count` label bytes (0 = signal, 1 = noise).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, Side};
use crate::channel::calibrate_noise;
use crate::detector::{IqTensor, Label, LabeledExample};
use crate::error::{invalid, Error, Result};
use crate::signals::{add_noise, qpsk_frame, scale_to_power, stream, ComplexFrame, PowerDbm};

pub const DATASET_MAGIC: [u8; 4] = *b"RISS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub samples_per_cell: usize,
    pub snr_levels_db: Vec<f64>,
    pub signal_power: PowerDbm,
    pub include_noise_class: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            samples_per_cell: 500,
            snr_levels_db: vec![3.0, 5.0, 7.0],
            signal_power: PowerDbm(30.0),
            include_noise_class: true,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_cell == 0 {
            return Err(invalid("samples_per_cell must be >= 1"));
        }
        if self.snr_levels_db.is_empty() {
            return Err(invalid("at least one SNR level is required"));
        }
        Ok(())
    }
}

/// Shuffled examples; the first `train_len` are the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frame_len: usize,
    pub examples: Vec<LabeledExample>,
    pub train_len: usize,
}

impl Dataset {
    pub fn train(&self) -> &[LabeledExample] {
        &self.examples[..self.train_len]
    }

    pub fn validation(&self) -> &[LabeledExample] {
        &self.examples[self.train_len..]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }
}

const NOISE_TAG: u64 = u64::MAX;
const SHUFFLE_TAG: u64 = u64::MAX - 1;

pub fn generate_dataset(scenario: &Scenario, spec: &DatasetSpec, side: Side, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let m = scenario.frame_len;
    let floor = scenario.noise(side);
    let mut examples = Vec::new();

    for (i, &gain) in scenario.gains(side).iter().enumerate() {
        for (s, &snr_db) in spec.snr_levels_db.iter().enumerate() {
            let cell_noise = calibrate_noise(&[gain], spec.signal_power, snr_db)?;
            let rescale = Complex64::new((floor.variance() / cell_noise.variance()).sqrt(), 0.0);
            let mut rng = stream(seed, &[side.tag(), i as u64, s as u64]);
            for _ in 0..spec.samples_per_cell {
                let x = scale_to_power(&qpsk_frame(m, &mut rng)?, spec.signal_power);
                let y = add_noise(&x.scaled(gain), &cell_noise, &mut rng).scaled(rescale);
                examples.push(LabeledExample { input: IqTensor::from_frame(&y), label: Label::Signal });
            }
        }
    }

    if spec.include_noise_class {
        let n_noise = examples.len();
        let mut rng = stream(seed, &[side.tag(), NOISE_TAG]);
        let zeros = ComplexFrame::zeros(m);
        for _ in 0..n_noise {
            let y = add_noise(&zeros, &floor, &mut rng);
            examples.push(LabeledExample { input: IqTensor::from_frame(&y), label: Label::Noise });
        }
    }

    examples.shuffle(&mut stream(seed, &[side.tag(), SHUFFLE_TAG]));
    let train_len = examples.len() / 2;
    Ok(Dataset { frame_len: m, examples, train_len })
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(28 + ds.len() * (8 * ds.frame_len + 1));
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.frame_len as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.train_len as u64).to_le_bytes());
    for ex in &ds.examples {
        for &v in ex.input.as_slice() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf.extend(ds.examples.iter().map(|e| e.label.index() as u8));
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let fmt = |m: String| Error::Format(m);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 28 {
        return Err(fmt("truncated dataset header".into()));
    }
    if bytes[..4] != DATASET_MAGIC {
        return Err(fmt("not a dataset file (bad magic)".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != DATASET_VERSION {
        return Err(fmt(format!("unsupported dataset version {version}")));
    }
    let m = u32_at(8) as usize;
    let count = u64_at(12) as usize;
    let train_len = u64_at(20) as usize;
    if m == 0 || train_len > count {
        return Err(fmt(format!("inconsistent header: M={m}, count={count}, train_len={train_len}")));
    }
    let body = count.checked_mul(8 * m + 1).ok_or_else(|| fmt("dataset size overflows".into()))?;
    if bytes.len() - 28 != body {
        return Err(fmt(format!("expected {body} bytes of examples, found {}", bytes.len() - 28)));
    }
    let values = &bytes[28..28 + count * 8 * m];
    let labels = &bytes[28 + count * 8 * m..];
    let mut examples = Vec::with_capacity(count);
    for (k, chunk) in values.chunks_exact(8 * m).enumerate() {
        let data = chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        let label = match labels[k] {
            0 => Label::Signal,
            1 => Label::Noise,
            other => return Err(fmt(format!("bad label byte {other} at example {k}"))),
        };
        examples.push(LabeledExample { input: IqTensor::new(m, data)?, label });
    }
    Ok(Dataset { frame_len: m, examples, train_len })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?)
}
