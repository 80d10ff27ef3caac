use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Selection;
use crate::error::{Error, Result};
use crate::signals::PowerDbm;

pub const CSV_HEADER: [&str; 8] =
    ["ris_index", "perturb_dbm", "p_det_rx", "p_det_eve", "snr_rx_db", "snr_eve_db", "n_trials", "seed"];

/// One (codeword, perturbation power) grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub ris_index: usize,
    /// `None` is the unperturbed baseline.
    pub perturb_dbm: Option<PowerDbm>,
    pub p_det_rx: f64,
    pub p_det_eve: f64,
    /// Mean received SNR over the cell's frames, perturbation included.
    pub snr_rx_db: f64,
    pub snr_eve_db: f64,
}

/// Codeword-major grid of detection probabilities and the covert selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub powers: Vec<Option<PowerDbm>>,
    pub cells: Vec<ReportCell>,
    pub n_trials: usize,
    pub seed: u64,
    pub selection: Selection,
    pub false_alarm_rx: f64,
    pub false_alarm_eve: f64,
    pub gains_rx: Vec<[f64; 2]>,
    pub gains_eve: Vec<[f64; 2]>,
    pub noise_rx: f64,
    pub noise_eve: f64,
}

fn power_label(p: Option<PowerDbm>) -> String {
    p.map_or_else(|| "off".to_string(), |p| p.0.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

impl DetectionReport {
    pub fn codebook_len(&self) -> usize {
        self.cells.len() / self.powers.len().max(1)
    }

    pub fn cell(&self, ris_index: usize, power: Option<PowerDbm>) -> Option<&ReportCell> {
        let col = self.powers.iter().position(|p| *p == power)?;
        self.cells.get(ris_index * self.powers.len() + col)
    }

    /// All cells of one codeword, in sweep-power order.
    pub fn row(&self, ris_index: usize) -> &[ReportCell] {
        let k = self.powers.len();
        &self.cells[ris_index * k..(ris_index + 1) * k]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER).map_err(csv_err)?;
        for c in &self.cells {
            out.write_record([
                c.ris_index.to_string(),
                power_label(c.perturb_dbm),
                c.p_det_rx.to_string(),
                c.p_det_eve.to_string(),
                c.snr_rx_db.to_string(),
                c.snr_eve_db.to_string(),
                self.n_trials.to_string(),
                self.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Wide plot table for one side: a row per sweep power, a column per codeword.
    pub fn write_series<W: Write>(&self, rx_side: bool, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let k = self.codebook_len();
        let mut header = vec!["perturb_dbm".to_string()];
        header.extend((0..k).map(|i| format!("ris_{i}")));
        out.write_record(&header).map_err(csv_err)?;
        for (col, &p) in self.powers.iter().enumerate() {
            let mut rec = vec![power_label(p)];
            for i in 0..k {
                let c = &self.cells[i * self.powers.len() + col];
                rec.push((if rx_side { c.p_det_rx } else { c.p_det_eve }).to_string());
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Selection verdict, objectives and calibration data for audit.
    pub fn summary(&self, config_hash: &str) -> serde_json::Value {
        let sel = &self.selection;
        json!({
            "config_hash": config_hash,
            "seed": self.seed,
            "n_trials": self.n_trials,
            "selection_power_dbm": power_label(sel.power),
            "selected_ris": sel.selected,
            "selected_objective": sel.objective(sel.selected),
            "objectives": sel.objectives(),
            "p_det_rx": sel.p_rx,
            "p_det_eve": sel.p_eve,
            "false_alarm_rx": self.false_alarm_rx,
            "false_alarm_eve": self.false_alarm_eve,
            "gains_rx": self.gains_rx,
            "gains_eve": self.gains_eve,
            "noise_variance_rx": self.noise_rx,
            "noise_variance_eve": self.noise_eve,
        })
    }
}
