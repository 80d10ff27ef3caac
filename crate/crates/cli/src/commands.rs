use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use riscovert::detector::{self, load_model, save_model, DetectorModel, Label};
use riscovert::experiment::{self, generate_dataset, load_dataset, save_dataset};
use riscovert::{Error, RunConfig, Side};

use crate::manifest::{write_output, Manifest};
use crate::CliError;

fn dataset_file(side: Side) -> String {
    format!("data_{}.bin", side.short())
}

fn model_file(side: Side) -> String {
    format!("model_{}.bin", side.short())
}

fn info(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    write_output(&dir.join(name), text.as_bytes())
}

/// Records the effective configuration next to the artifacts it produced.
fn record_config(cfg: &RunConfig, manifest: &mut Manifest) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let text = format!("# config hash {}\n{}", cfg.hash(), cfg.to_toml());
    write_output(&dir.join("config.toml"), text.as_bytes())?;
    manifest.record(dir, "config.toml", &cfg.hash(), cfg.seed, BTreeMap::new())
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let mut manifest = Manifest::load(dir)?;
    let scenario = cfg.scenario()?;
    let spec = cfg.dataset_spec();
    for side in Side::BOTH {
        let ds = generate_dataset(&scenario, &spec, side, cfg.dataset_seed())?;
        let name = dataset_file(side);
        save_dataset(&ds, &dir.join(&name)).map_err(|e| CliError::config(format!("cannot write {name}: {e}")))?;
        let (signal, noise) = (ds.count(Label::Signal), ds.count(Label::Noise));
        println!(
            "{name}: {} examples ({signal} signal / {noise} noise), {} train / {} validation",
            ds.len(),
            ds.train().len(),
            ds.validation().len()
        );
        manifest.record(
            dir,
            &name,
            &cfg.hash(),
            cfg.seed,
            info(&[
                ("total", json!(ds.len())),
                ("signal", json!(signal)),
                ("noise", json!(noise)),
                ("train", json!(ds.train().len())),
                ("validation", json!(ds.validation().len())),
                ("samples_per_cell", json!(spec.samples_per_cell)),
            ]),
        )?;
    }
    record_config(cfg, &mut manifest)?;
    manifest.save(dir)
}

pub fn train(cfg: &RunConfig, side: Side) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let mut manifest = Manifest::load(dir)?;
    let data = dataset_file(side);
    manifest.check(dir, &data)?;
    let ds = load_dataset(&dir.join(&data)).map_err(|e| CliError::artifact(format!("{data}: {e}")))?;
    let arch = cfg.architecture();
    if ds.frame_len != arch.frame_len {
        return Err(CliError::artifact(format!(
            "{data} holds {}-sample frames but the config expects {}",
            ds.frame_len, arch.frame_len
        )));
    }
    let (model, report) =
        detector::train(arch, cfg.detector.dropout, ds.train(), ds.validation(), &cfg.train_config(side)).map_err(
            |e| match e {
                Error::InvalidDataset(m) => CliError::artifact(format!("{data}: {m}")),
                other => CliError::numeric(other.to_string()),
            },
        )?;

    let mut metrics = String::from("epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n");
    for m in &report.history {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        writeln!(
            metrics,
            "{},{},{},{},{}",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            opt(m.validation_loss),
            opt(m.validation_accuracy)
        )
        .unwrap();
        println!(
            "{} epoch {:>2}: train loss {:.4} acc {:.4}, validation acc {}",
            side.short(),
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.validation_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    let last_val = report.last().and_then(|m| m.validation_accuracy);

    let (model_name, metrics_name) = (model_file(side), format!("metrics_{}.csv", side.short()));
    save_model(&model, &dir.join(&model_name))
        .map_err(|e| CliError::config(format!("cannot write {model_name}: {e}")))?;
    write_output(&dir.join(&metrics_name), metrics.as_bytes())?;
    let hash = cfg.hash();
    manifest.record(dir, &model_name, &hash, cfg.seed, info(&[("validation_accuracy", json!(last_val))]))?;
    manifest.record(dir, &metrics_name, &hash, cfg.seed, info(&[("epochs", json!(report.history.len()))]))?;
    record_config(cfg, &mut manifest)?;
    manifest.save(dir)
}

fn load_models(cfg: &RunConfig, manifest: &Manifest) -> Result<(DetectorModel, DetectorModel), CliError> {
    let dir = &cfg.output_dir;
    let load = |side: Side| -> Result<DetectorModel, CliError> {
        let name = model_file(side);
        manifest.check(dir, &name)?;
        let model = load_model(&dir.join(&name)).map_err(|e| CliError::artifact(format!("{name}: {e}")))?;
        if model.arch != cfg.architecture() {
            return Err(CliError::artifact(format!("{name} does not match the configured detector architecture")));
        }
        Ok(model)
    };
    Ok((load(Side::Receiver)?, load(Side::Eavesdropper)?))
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let mut manifest = Manifest::load(dir)?;
    let (rx, eve) = load_models(cfg, &manifest)?;
    let scenario = cfg.scenario()?;
    let report = experiment::sweep(
        &rx,
        &eve,
        &scenario,
        &cfg.sweep_powers(),
        cfg.selection_power(),
        cfg.sweep.n_trials,
        cfg.sweep_seed(),
    )?;

    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_output(&dir.join("report.csv"), &csv)?;
    for (rx_side, name) in [(true, "series_rx.csv"), (false, "series_eve.csv")] {
        let mut buf = Vec::new();
        report.write_series(rx_side, &mut buf)?;
        write_output(&dir.join(name), &buf)?;
    }
    let mut summary = report.summary(&cfg.hash());
    summary["master_seed"] = json!(cfg.seed);
    write_json(dir, "summary.json", &summary)?;

    let hash = cfg.hash();
    manifest.record(dir, "report.csv", &hash, cfg.seed, info(&[("rows", json!(report.cells.len()))]))?;
    for name in ["series_rx.csv", "series_eve.csv", "summary.json"] {
        manifest.record(dir, name, &hash, cfg.seed, BTreeMap::new())?;
    }
    record_config(cfg, &mut manifest)?;
    manifest.save(dir)?;

    let sel = &report.selection;
    println!(
        "selected codeword {} at {}: receiver {:.3}, eavesdropper {:.3}, objective {:.3}",
        sel.selected,
        sel.power.map_or("no perturbation".into(), |p| format!("{} dBm", p.0)),
        sel.p_rx[sel.selected],
        sel.p_eve[sel.selected],
        sel.objective(sel.selected)
    );
    println!("false alarms: receiver {:.3}, eavesdropper {:.3}", report.false_alarm_rx, report.false_alarm_eve);
    Ok(())
}

pub fn correlate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let mut manifest = Manifest::load(dir)?;
    let (rx, eve) = load_models(cfg, &manifest)?;
    let study = experiment::correlation_study(&rx, &eve, &cfg.scenario()?, cfg.sweep.n_trials, cfg.sweep_seed())?;

    let mut table = String::from("ris_index,snr_rx_db,p_det_rx,p_det_eve\n");
    for r in &study.rows {
        writeln!(table, "{},{},{},{}", r.ris_index, r.snr_rx_db, r.p_rx, r.p_eve).unwrap();
    }
    write_output(&dir.join("correlation.csv"), table.as_bytes())?;
    write_json(
        dir,
        "correlation.json",
        &json!({
            "config_hash": cfg.hash(),
            "master_seed": cfg.seed,
            "n_trials": cfg.sweep.n_trials,
            "corr_rx": study.corr_rx,
            "corr_eve": study.corr_eve,
        }),
    )?;
    let hash = cfg.hash();
    manifest.record(dir, "correlation.csv", &hash, cfg.seed, info(&[("rows", json!(study.rows.len()))]))?;
    manifest.record(dir, "correlation.json", &hash, cfg.seed, BTreeMap::new())?;
    record_config(cfg, &mut manifest)?;
    manifest.save(dir)?;
    println!("corr(SNR_rx, P_rx) = {:.3}, corr(SNR_rx, P_eve) = {:.3}", study.corr_rx, study.corr_eve);
    Ok(())
}

pub fn select_ris(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let mut manifest = Manifest::load(dir)?;
    let (rx, eve) = load_models(cfg, &manifest)?;
    let power = cfg.selection_power();
    let sel = experiment::select_ris(&rx, &eve, &cfg.scenario()?, power, cfg.sweep.n_trials, cfg.sweep_seed())?;
    write_json(
        dir,
        "selection.json",
        &json!({
            "config_hash": cfg.hash(),
            "master_seed": cfg.seed,
            "n_trials": cfg.sweep.n_trials,
            "selection_power_dbm": power.map_or(json!("off"), |p| json!(p.0)),
            "selected_ris": sel.selected,
            "objectives": sel.objectives(),
            "p_det_rx": sel.p_rx,
            "p_det_eve": sel.p_eve,
        }),
    )?;
    manifest.record(dir, "selection.json", &cfg.hash(), cfg.seed, BTreeMap::new())?;
    record_config(cfg, &mut manifest)?;
    manifest.save(dir)?;
    println!(
        "selected codeword {}: receiver {:.3}, eavesdropper {:.3}",
        sel.selected, sel.p_rx[sel.selected], sel.p_eve[sel.selected]
    );
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let manifest = Manifest::load(dir)?;
    if manifest.artifacts.is_empty() {
        return Err(CliError::artifact(format!("no artifacts recorded in {}", dir.display())));
    }
    let hash = cfg.hash();
    let mut problems = 0;
    for (name, rec) in &manifest.artifacts {
        let status = match manifest.check(dir, name) {
            Err(e) => e.to_string(),
            Ok(()) if rec.config_hash != hash => {
                format!("produced under config {}, current config is {hash}", rec.config_hash)
            }
            Ok(()) if rec.seed != cfg.seed => format!("produced with seed {}, current seed is {}", rec.seed, cfg.seed),
            Ok(()) => String::new(),
        };
        if status.is_empty() {
            println!("ok        {name}");
        } else {
            problems += 1;
            println!("MISMATCH  {name}: {status}");
        }
    }
    if problems > 0 {
        return Err(CliError::artifact(format!("{problems} artifact(s) failed verification")));
    }
    println!("all {} artifacts verified against config {hash}", manifest.artifacts.len());
    Ok(())
}
