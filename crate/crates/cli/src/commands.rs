use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fate_core::analysis::{
    ablation_with_train_mean, correlation_matrix_lenient, kmeans_best_of, modulation_report,
};
use fate_core::data::{self, load_dataset, load_numeric_table, prepare, save_dataset, PreparedData};
use fate_core::model::{load_checkpoint, save_checkpoint, Checkpoint, FateWeights, ModelConfig};
use fate_core::tensor::BackwardFault;
use fate_core::train::{self, check_dims, evaluate, gradcheck_config, gradient_check, Evaluation};
use fate_core::FateError;
use serde::Serialize;
use serde_json::json;

use crate::config::{InputFormat, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FateError::io(dir, e).into())
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| FateError::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// CSV preceded by a `# config_hash=…` provenance line.
fn write_csv(path: &Path, hash: &str, body: &str) -> Result<()> {
    write_text(path, &format!("# config_hash={hash}\n{body}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(FateError::from)?;
    s.push('\n');
    write_text(path, &s)
}

fn model_config(cfg: &RunConfig, data: &PreparedData) -> ModelConfig {
    let ds = &data.dataset;
    cfg.model
        .model_config(ds.lag, ds.stations.len(), ds.features.len(), ds.n_targets())
}

fn load_cache(cfg: &RunConfig) -> Result<PreparedData> {
    let path = cfg.cache_path()?;
    if !path.exists() {
        return Err(CliError::Core(FateError::contract(format!(
            "dataset cache {} not found; run `fate ingest` first",
            path.display()
        ))));
    }
    let (data, hash) = load_dataset(&path)?;
    if hash.as_deref() != Some(cfg.hash().as_str()) {
        log::warn!("dataset cache was written under a different configuration");
    }
    Ok(data)
}

fn checkpoint_path(cfg: &RunConfig, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| cfg.out_dir().join("model.fate"), Path::to_path_buf)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let d = cfg.data()?;
    let opts = cfg.prepare_options()?;
    let outcome = match d.format {
        InputFormat::Wide => {
            let files: Vec<(String, PathBuf)> = d.files.iter().map(|f| (f.feature.clone(), f.path.clone())).collect();
            data::load_wide(&files)?
        }
        InputFormat::Long => data::load_long(d.path.as_ref().expect("validated"))?,
    };
    for r in &outcome.rejected {
        log::warn!("rejected {}:{}: {}", r.file.display(), r.line, r.reason);
    }
    let coords = d.coords.as_deref().map(data::load_coordinates).transpose()?;
    let prepared = prepare(outcome, coords.as_ref(), &opts)?;
    let hash = cfg.hash();
    ensure_dir(cfg.out_dir())?;
    save_dataset(&cfg.cache_path()?, &prepared, Some(&hash))?;
    write_json(
        &cfg.out_dir().join("ingest_report.json"),
        &json!({ "config_hash": hash, "report": prepared.report }),
    )?;
    let r = &prepared.report;
    println!(
        "samples={} train={} val={} test={} rejected_rows={} imputed={}",
        r.samples,
        r.split.train,
        r.split.val,
        r.split.test,
        r.rejected_rows.len(),
        r.imputed_total
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = load_cache(cfg)?;
    let mcfg = model_config(cfg, &data);
    let (tr, va, _) = data.splits()?;
    let init = FateWeights::init(&mcfg, cfg.seed)?;
    let out = train::train(&mcfg, &init, &tr, &va, &cfg.train_config())?;
    let h = &out.history;
    let hash = cfg.hash();
    ensure_dir(cfg.out_dir())?;
    let mut metadata = BTreeMap::new();
    metadata.insert("config_hash".to_string(), json!(hash));
    metadata.insert("best_epoch".to_string(), json!(h.best_epoch));
    save_checkpoint(
        &cfg.out_dir().join("model.fate"),
        &Checkpoint {
            config: mcfg.clone(),
            weights: out.weights.clone(),
            metadata,
        },
    )?;
    write_csv(&cfg.out_dir().join("history.csv"), &hash, &h.history_csv())?;
    write_csv(&cfg.out_dir().join("timing.csv"), &hash, &h.timing_csv())?;
    let best = h.best();
    let val = evaluate(&out.weights, &mcfg, &va)?;
    write_json(
        &cfg.out_dir().join("train_summary.json"),
        &json!({
            "config_hash": hash,
            "best_epoch": h.best_epoch,
            "stopped_epoch": h.stopped_epoch,
            "max_epochs": cfg.train.max_epochs,
            "stop_reason": h.stop_reason,
            "steps": h.epochs.last().map_or(0, |e| e.steps),
            "train_mse": best.train_mse,
            "val_mse": best.val_mse,
            "val_original_units": val,
        }),
    )?;
    println!(
        "best_epoch={} stopped_epoch={} train_mse={:e} val_mse={:e}",
        h.best_epoch, h.stopped_epoch, best.train_mse, best.val_mse
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

fn evaluation_csv(ev: &Evaluation) -> String {
    let mut s = String::from("station,feature,horizon,mae,mse\n");
    for t in &ev.per_target {
        s.push_str(&format!("{},{},{},{},{}\n", t.station, t.feature, t.horizon, t.mae, t.mse));
    }
    s
}

pub fn evaluate_cmd(cfg: &RunConfig, checkpoint: Option<&Path>, split: SplitName) -> Result<()> {
    let data = load_cache(cfg)?;
    let ckpt = load_checkpoint(&checkpoint_path(cfg, checkpoint))?;
    let (tr, va, te) = data.splits()?;
    let ds = match split {
        SplitName::Train => tr,
        SplitName::Val => va,
        SplitName::Test => te,
    };
    check_dims(&ckpt.config, &ds)?;
    let ev = evaluate(&ckpt.weights, &ckpt.config, &ds)?;
    let hash = cfg.hash();
    ensure_dir(cfg.out_dir())?;
    write_csv(&cfg.out_dir().join("evaluation.csv"), &hash, &evaluation_csv(&ev))?;
    write_json(
        &cfg.out_dir().join("evaluation.json"),
        &json!({ "config_hash": hash, "split": split, "evaluation": ev }),
    )?;
    for t in &ev.per_target {
        println!("{} {} +{}: mae={:e} mse={:e}", t.station, t.feature, t.horizon, t.mae, t.mse);
    }
    Ok(())
}

pub fn analyze(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let hash = cfg.hash();
    let a = &cfg.analysis;
    let mut produced = 0;
    ensure_dir(cfg.out_dir())?;

    if let Some(p) = &a.correlation_input {
        let (labels, cols) = load_numeric_table(p)?;
        let m = correlation_matrix_lenient(&labels, &cols)?;
        if !m.degenerate.is_empty() {
            log::warn!("constant column(s) left undefined: {}", m.degenerate.join(", "));
        }
        write_csv(&cfg.out_dir().join("correlation.csv"), &hash, &m.to_csv())?;
        println!("correlation: {}x{}", labels.len(), labels.len());
        produced += 1;
    }

    if let Some(p) = &a.kmeans_input {
        let (_, cols) = load_numeric_table(p)?;
        let n = cols.first().map_or(0, Vec::len);
        let points: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        if points.is_empty() {
            return Err(FateError::contract(format!("{}: no points", p.display())).into());
        }
        let r = kmeans_best_of(&points, a.k, a.max_iter, a.tol, cfg.seed, a.restarts)?;
        write_json(&cfg.out_dir().join("kmeans.json"), &json!({ "config_hash": hash, "result": r }))?;
        println!("kmeans: k={} objective={}", r.k, r.objective());
        produced += 1;
    }

    let ckpt_path = checkpoint_path(cfg, checkpoint);
    if cfg.data.is_some() && ckpt_path.exists() {
        let data = load_cache(cfg)?;
        let ckpt = load_checkpoint(&ckpt_path)?;
        let (tr, va, te) = data.splits()?;
        let eval = if te.is_empty() { va } else { te };
        check_dims(&ckpt.config, &eval)?;
        let mut report = modulation_report(&ckpt.weights, &ckpt.config, &eval, a.layer)?;
        let params = if a.ablate.is_empty() { eval.features.clone() } else { a.ablate.clone() };
        for p in &params {
            report
                .parameter_effects
                .push(ablation_with_train_mean(&ckpt.weights, &ckpt.config, &tr, &eval, p)?);
        }
        write_csv(&cfg.out_dir().join("modulation.csv"), &hash, &report.to_csv())?;
        write_json(
            &cfg.out_dir().join("modulation.json"),
            &json!({ "config_hash": hash, "report": report }),
        )?;
        println!("modulation: {} heads x {} stations", report.scores.len(), report.stations.len());
        produced += 1;
    } else {
        log::info!("no checkpoint at {}; skipping modulation scores", ckpt_path.display());
    }

    if produced == 0 {
        return Err(CliError::config(
            "nothing to analyze: set analysis.correlation_input, analysis.kmeans_input, or train a model first",
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    Softmax,
}

pub fn gradcheck(cfg: &RunConfig, fault: Option<Fault>) -> Result<()> {
    let mcfg = gradcheck_config(cfg.model.softmax_axis);
    let fault = fault.map(|f| match f {
        Fault::Softmax => BackwardFault::Softmax,
    });
    let report = gradient_check(&mcfg, cfg.seed, fault)?;
    for t in &report.tensors {
        println!("{:<24} max_rel_error={:.3e}", t.name, t.max_rel_error);
    }
    println!(
        "max_rel_error={:.3e} worst={} tolerance={:e} {}",
        report.max_rel_error,
        report.worst,
        train::GRADCHECK_TOLERANCE,
        if report.passed { "PASS" } else { "FAIL" }
    );
    ensure_dir(cfg.out_dir())?;
    write_json(
        &cfg.out_dir().join("gradcheck.json"),
        &json!({ "config_hash": cfg.hash(), "report": report }),
    )?;
    if !report.passed {
        return Err(CliError::CheckFailed(format!(
            "gradient mismatch in {} (max relative error {:.3e})",
            report.worst, report.max_rel_error
        )));
    }
    Ok(())
}
