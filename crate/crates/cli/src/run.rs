use std::fs;
use std::path::{Path, PathBuf};

use fpo_core::envsim::Environment;
use fpo_core::fpocore::{IterationRecord, Trainer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Env, ExperimentConfig};
use crate::Error;

/// Overrides `output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "FPO_OUTPUT_ROOT";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One line of a history file.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub psi: Vec<f64>,
    pub j: f64,
    pub fp_mean: Vec<f64>,
    pub fp_std: Vec<f64>,
    pub kl: f64,
    pub seconds: f64,
}

impl HistoryRow {
    fn from_record(r: &IterationRecord, record_wall_time: bool) -> Self {
        Self {
            iteration: r.iteration,
            psi: r.psi.clone(),
            j: r.j,
            fp_mean: r.fingerprint.mean.clone(),
            fp_std: r.fingerprint.std.clone(),
            kl: r.kl,
            seconds: if record_wall_time { r.seconds } else { 0.0 },
        }
    }

    /// Mean of θ under the sampling distribution: `ψ₁/(ψ₁+ψ₂)` for a Beta
    /// ψ, ψ itself for a probability.
    pub fn sampling_mean(&self) -> Option<f64> {
        match self.psi.as_slice() {
            [p] => Some(*p),
            [a, b] => Some(a / (a + b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub method: String,
    pub environment: String,
    pub seeds: Vec<u64>,
    pub history_files: Vec<String>,
    /// The fully resolved configuration, defaults included.
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub histories: Vec<PathBuf>,
}

pub fn history_file_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// `FPO_OUTPUT_ROOT` if set, else the configured output directory.
pub fn output_root(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.clone())
}

fn train<E: Environment>(
    env: E,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<HistoryRow>, Error> {
    let mut trainer = Trainer::new(env, config.fpo_config(), config.iterations)?;
    let mut rows = Vec::with_capacity(config.iterations);
    trainer.run(seed, config.iterations, |r| {
        rows.push(HistoryRow::from_record(r, config.record_wall_time))
    })?;
    Ok(rows)
}

/// Trains one seed and returns its history.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<HistoryRow>, Error> {
    match config.build_env()? {
        Env::Cliff(env) => train(env, config, seed),
        Env::Toy(env) => train(env, config, seed),
    }
}

/// Validates `config`, trains every seed and writes
/// `<root>/<name>/{manifest.json, seed_<s>.csv}`.
pub fn run(config: &ExperimentConfig, root: &Path) -> Result<RunOutput, Error> {
    config.validate()?;
    let dir = root.join(&config.name);
    fs::create_dir_all(&dir).map_err(|e| Error::Io(dir.clone(), e))?;
    let histories: Vec<PathBuf> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let rows = run_seed(config, seed)?;
            let path = dir.join(history_file_name(seed));
            write_history(&path, &rows)?;
            Ok(path)
        })
        .collect::<Result<_, Error>>()?;
    let manifest = Manifest {
        name: config.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        method: config.method.to_string(),
        environment: config.environment.name().to_string(),
        seeds: config.seeds.clone(),
        history_files: config.seeds.iter().map(|&s| history_file_name(s)).collect(),
        config: config.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json(path.clone(), e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::Io(path, e))?;
    Ok(RunOutput { dir, histories })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, Error> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(path.clone(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json(path, e))
}

fn header(psi_dim: usize, fp_dim: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string()];
    h.extend((1..=psi_dim).map(|i| format!("psi_{i}")));
    h.push("J".into());
    h.extend((1..=fp_dim).map(|i| format!("fp_mean_{i}")));
    h.extend((1..=fp_dim).map(|i| format!("fp_std_{i}")));
    h.push("kl".into());
    h.push("seconds".into());
    h
}

/// Columns: `iteration, psi_1.., J, fp_mean_1.., fp_std_1.., kl, seconds`.
pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), Error> {
    let csv_err = |e| Error::Csv(path.to_path_buf(), e);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let (psi_dim, fp_dim) = rows
        .first()
        .map_or((0, 0), |r| (r.psi.len(), r.fp_mean.len()));
    w.write_record(header(psi_dim, fp_dim)).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.iteration.to_string()];
        rec.extend(r.psi.iter().map(f64::to_string));
        rec.push(r.j.to_string());
        rec.extend(r.fp_mean.iter().map(f64::to_string));
        rec.extend(r.fp_std.iter().map(f64::to_string));
        rec.push(r.kl.to_string());
        rec.push(r.seconds.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(path.to_path_buf(), e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>, Error> {
    let bad = |msg: String| Error::History(path.to_path_buf(), msg);
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Csv(path.to_path_buf(), e))?;
    let head = r
        .headers()
        .map_err(|e| Error::Csv(path.to_path_buf(), e))?
        .clone();
    let psi_dim = head.iter().filter(|h| h.starts_with("psi_")).count();
    let fp_dim = head.iter().filter(|h| h.starts_with("fp_mean_")).count();
    let expected = header(psi_dim, fp_dim);
    if head.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(format!("unexpected header {head:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Csv(path.to_path_buf(), e))?;
        let num = |i: usize| -> Result<f64, Error> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad value in column {i}")))
        };
        let iteration = rec
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad iteration".into()))?;
        let mut col = 1;
        let mut take = |k: usize| -> Result<Vec<f64>, Error> {
            let v = (col..col + k).map(num).collect();
            col += k;
            v
        };
        let psi = take(psi_dim)?;
        let j = take(1)?[0];
        let fp_mean = take(fp_dim)?;
        let fp_std = take(fp_dim)?;
        let kl = take(1)?[0];
        let seconds = take(1)?[0];
        rows.push(HistoryRow {
            iteration,
            psi,
            j,
            fp_mean,
            fp_std,
            kl,
            seconds,
        });
    }
    Ok(rows)
}
