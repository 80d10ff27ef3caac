//! End-to-end experiments: detection probability per codeword, covert
//! codeword selection, SNR/detection correlation and perturbation sweeps.
//!
//! Every (codeword, perturbation power) cell owns its own RNG streams derived
//! from the master seed, so cells can be evaluated in any order or in
//! parallel with identical results. Within a cell, both sides observe the
//! same transmitted frames and perturbations; only their noise differs.

mod dataset;
mod report;
mod scenario;

pub use dataset::{
    generate_dataset, load_dataset, read_dataset, save_dataset, write_dataset, Dataset, DatasetSpec, DATASET_MAGIC,
    DATASET_VERSION,
};
pub use report::{DetectionReport, ReportCell, CSV_HEADER};
pub use scenario::{Scenario, Side, Topology};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{apply_perturbation, craft};
use crate::detector::{DetectorModel, Label};
use crate::error::{invalid, Error, Result};
use crate::signals::{
    add_noise, derive_seed, linear_to_db, qpsk_frame, scale_to_power, stream, ComplexFrame, PowerDbm,
};

/// Perturbation crafted at the transmitter against `eve_model`.
#[derive(Debug, Clone, Copy)]
pub struct Attack<'a> {
    pub eve_model: &'a DetectorModel,
    pub power: PowerDbm,
}

const TX_TAG: u64 = 0;
const NOISE_TAG: u64 = 1;
const FALSE_ALARM_TAG: u64 = 2;

/// Seed of one grid cell; `None` is the unperturbed baseline.
pub fn cell_seed(master: u64, ris_index: usize, power: Option<PowerDbm>) -> u64 {
    let p = power.map_or(u64::MAX, |p| p.0.to_bits());
    derive_seed(master, &[ris_index as u64, p])
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    detected: usize,
    snr_sum: f64,
}

/// Runs `n_trials` transmissions and tallies detections for each requested side.
fn run_cell(
    models: &[(Side, &DetectorModel)],
    scenario: &Scenario,
    ris_index: usize,
    attack: Option<Attack<'_>>,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<Tally>> {
    if n_trials == 0 {
        return Err(invalid("n_trials must be >= 1"));
    }
    let m = scenario.frame_len;
    let g_eve = scenario.gain(Side::Eavesdropper, ris_index)?;
    let budget = attack.map(|a| scenario.budget(a.power)).transpose()?;
    let sides: Vec<_> = models
        .iter()
        .map(|&(side, model)| Ok((side, model, scenario.gain(side, ris_index)?, scenario.noise(side))))
        .collect::<Result<_>>()?;

    let mut tx_rng = stream(seed, &[TX_TAG]);
    let mut noise_rngs: Vec<_> = sides.iter().map(|s| stream(seed, &[NOISE_TAG, s.0.tag()])).collect();
    let mut tallies = vec![Tally::default(); sides.len()];

    for _ in 0..n_trials {
        let mut x = scale_to_power(&qpsk_frame(m, &mut tx_rng)?, scenario.signal_power);
        if let (Some(a), Some(b)) = (attack, budget.as_ref()) {
            let crafted = craft(a.eve_model, &x, g_eve, b)?;
            x = apply_perturbation(&x, &crafted)?;
        }
        for (k, &(_, model, gain, noise)) in sides.iter().enumerate() {
            let clean = x.scaled(gain);
            tallies[k].snr_sum += clean.mean_power() / noise.variance();
            let y = add_noise(&clean, &noise, &mut noise_rngs[k]);
            if model.predict_label(&y)? == Label::Signal {
                tallies[k].detected += 1;
            }
        }
    }
    Ok(tallies)
}

/// Fraction of signal-bearing frames that `model` labels signal at `side`.
pub fn detection_probability(
    model: &DetectorModel,
    scenario: &Scenario,
    side: Side,
    ris_index: usize,
    attack: Option<Attack<'_>>,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    let t = run_cell(&[(side, model)], scenario, ris_index, attack, n_trials, seed)?;
    Ok(t[0].detected as f64 / n_trials as f64)
}

/// Fraction of pure-noise frames that `model` labels signal at `side`.
pub fn false_alarm_rate(
    model: &DetectorModel,
    scenario: &Scenario,
    side: Side,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if n_trials == 0 {
        return Err(invalid("n_trials must be >= 1"));
    }
    let noise = scenario.noise(side);
    let zeros = ComplexFrame::zeros(scenario.frame_len);
    let mut rng = stream(seed, &[FALSE_ALARM_TAG, side.tag()]);
    let mut hits = 0;
    for _ in 0..n_trials {
        if model.predict_label(&add_noise(&zeros, &noise, &mut rng))? == Label::Signal {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_trials as f64)
}

/// Objectives closer than this are treated as tied.
const OBJECTIVE_TIE: f64 = 1e-12;

/// Index maximizing `p_rx - p_eve`; ties go to the higher `p_rx`, then the lower index.
pub fn select_from_table(p_rx: &[f64], p_eve: &[f64]) -> Result<usize> {
    if p_rx.is_empty() || p_rx.len() != p_eve.len() {
        return Err(invalid(format!("selection table sizes {} and {}", p_rx.len(), p_eve.len())));
    }
    let mut best = 0;
    for i in 1..p_rx.len() {
        let (oi, ob) = (p_rx[i] - p_eve[i], p_rx[best] - p_eve[best]);
        if oi > ob + OBJECTIVE_TIE || ((oi - ob).abs() <= OBJECTIVE_TIE && p_rx[i] > p_rx[best] + OBJECTIVE_TIE) {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: usize,
    pub power: Option<PowerDbm>,
    pub p_rx: Vec<f64>,
    pub p_eve: Vec<f64>,
}

impl Selection {
    pub fn objective(&self, i: usize) -> f64 {
        self.p_rx[i] - self.p_eve[i]
    }

    pub fn objectives(&self) -> Vec<f64> {
        (0..self.p_rx.len()).map(|i| self.objective(i)).collect()
    }
}

fn evaluate_cell(
    rx: &DetectorModel,
    eve: &DetectorModel,
    scenario: &Scenario,
    ris_index: usize,
    power: Option<PowerDbm>,
    n_trials: usize,
    master: u64,
) -> Result<ReportCell> {
    let attack = power.map(|power| Attack { eve_model: eve, power });
    let seed = cell_seed(master, ris_index, power);
    let t = run_cell(&[(Side::Receiver, rx), (Side::Eavesdropper, eve)], scenario, ris_index, attack, n_trials, seed)?;
    let n = n_trials as f64;
    Ok(ReportCell {
        ris_index,
        perturb_dbm: power,
        p_det_rx: t[0].detected as f64 / n,
        p_det_eve: t[1].detected as f64 / n,
        snr_rx_db: linear_to_db(t[0].snr_sum / n),
        snr_eve_db: linear_to_db(t[1].snr_sum / n),
    })
}

fn evaluate_grid(
    rx: &DetectorModel,
    eve: &DetectorModel,
    scenario: &Scenario,
    powers: &[Option<PowerDbm>],
    n_trials: usize,
    master: u64,
) -> Result<Vec<ReportCell>> {
    let cells: Vec<(usize, Option<PowerDbm>)> =
        (0..scenario.codebook_len()).flat_map(|i| powers.iter().map(move |&p| (i, p))).collect();
    cells.into_par_iter().map(|(i, p)| evaluate_cell(rx, eve, scenario, i, p, n_trials, master)).collect()
}

/// Covert codeword choice at one perturbation power (`None` for no perturbation).
pub fn select_ris(
    rx: &DetectorModel,
    eve: &DetectorModel,
    scenario: &Scenario,
    power: Option<PowerDbm>,
    n_trials: usize,
    seed: u64,
) -> Result<Selection> {
    let cells = evaluate_grid(rx, eve, scenario, &[power], n_trials, seed)?;
    let p_rx: Vec<f64> = cells.iter().map(|c| c.p_det_rx).collect();
    let p_eve: Vec<f64> = cells.iter().map(|c| c.p_det_eve).collect();
    Ok(Selection { selected: select_from_table(&p_rx, &p_eve)?, power, p_rx, p_eve })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need two equal-length series, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a series has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub ris_index: usize,
    pub snr_rx_db: f64,
    pub p_rx: f64,
    pub p_eve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStudy {
    pub rows: Vec<CorrelationRow>,
    /// corr(receiver SNR in dB, receiver detection).
    pub corr_rx: f64,
    /// corr(receiver SNR in dB, eavesdropper detection).
    pub corr_eve: f64,
}

/// Correlates the analytic receiver SNR of each codeword with the unperturbed
/// detection probability at both sides.
pub fn correlation_study(
    rx: &DetectorModel,
    eve: &DetectorModel,
    scenario: &Scenario,
    n_trials: usize,
    seed: u64,
) -> Result<CorrelationStudy> {
    let sel = select_ris(rx, eve, scenario, None, n_trials, seed)?;
    let rows = (0..scenario.codebook_len())
        .map(|i| {
            Ok(CorrelationRow {
                ris_index: i,
                snr_rx_db: scenario.snr_db(Side::Receiver, i)?,
                p_rx: sel.p_rx[i],
                p_eve: sel.p_eve[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let snr: Vec<f64> = rows.iter().map(|r| r.snr_rx_db).collect();
    Ok(CorrelationStudy { corr_rx: pearson(&snr, &sel.p_rx)?, corr_eve: pearson(&snr, &sel.p_eve)?, rows })
}

/// Full codeword x perturbation-power grid plus the covert selection at
/// `selection_power`, which must be one of `powers`.
pub fn sweep(
    rx: &DetectorModel,
    eve: &DetectorModel,
    scenario: &Scenario,
    powers: &[Option<PowerDbm>],
    selection_power: Option<PowerDbm>,
    n_trials: usize,
    seed: u64,
) -> Result<DetectionReport> {
    if powers.is_empty() {
        return Err(invalid("sweep needs at least one perturbation power"));
    }
    let column = powers
        .iter()
        .position(|p| *p == selection_power)
        .ok_or_else(|| invalid("selection power is not part of the sweep"))?;
    let cells = evaluate_grid(rx, eve, scenario, powers, n_trials, seed)?;
    let k = powers.len();
    let p_rx: Vec<f64> = cells.iter().skip(column).step_by(k).map(|c| c.p_det_rx).collect();
    let p_eve: Vec<f64> = cells.iter().skip(column).step_by(k).map(|c| c.p_det_eve).collect();
    let selection = Selection { selected: select_from_table(&p_rx, &p_eve)?, power: selection_power, p_rx, p_eve };
    Ok(DetectionReport {
        powers: powers.to_vec(),
        cells,
        n_trials,
        seed,
        selection,
        false_alarm_rx: false_alarm_rate(rx, scenario, Side::Receiver, n_trials, seed)?,
        false_alarm_eve: false_alarm_rate(eve, scenario, Side::Eavesdropper, n_trials, seed)?,
        gains_rx: scenario.gains(Side::Receiver).iter().map(|g| [g.re, g.im]).collect(),
        gains_eve: scenario.gains(Side::Eavesdropper).iter().map(|g| [g.re, g.im]).collect(),
        noise_rx: scenario.noise(Side::Receiver).variance(),
        noise_eve: scenario.noise(Side::Eavesdropper).variance(),
    })
}
