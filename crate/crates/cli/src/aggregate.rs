use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::run::{read_history, read_manifest, HistoryRow};
use crate::Error;

/// Nearest-rank quantile of sorted values: `sorted[⌈p·n⌉ − 1]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Nearest-rank `(Q1, median, Q3)`.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some((
        nearest_rank(&v, 0.25),
        nearest_rank(&v, 0.5),
        nearest_rank(&v, 0.75),
    ))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quartiles(values).map(|q| q.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: String,
    pub environment: String,
    pub seeds: Vec<u64>,
    /// `J` after the last iteration, per seed.
    pub final_j: Vec<f64>,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Median over seeds of `J` at each iteration.
    pub median_curve: Vec<f64>,
    /// Median over seeds of the sampling-distribution mean of θ at each
    /// iteration (the Beta mean for a continuous θ).
    pub psi_mean_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json(path.to_path_buf(), e))
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Json(path.to_path_buf(), e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::Io(path.to_path_buf(), e))
    }

    pub fn get(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }
}

fn per_iteration_median(
    histories: &[Vec<HistoryRow>],
    f: impl Fn(&HistoryRow) -> Option<f64>,
) -> Vec<f64> {
    let len = histories.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map_while(|i| {
            let v: Option<Vec<f64>> = histories.iter().map(|h| f(&h[i])).collect();
            median(&v?)
        })
        .collect()
}

/// Summarises one run directory.
pub fn summarise_run(dir: &Path) -> Result<MethodSummary, Error> {
    let manifest = read_manifest(dir)?;
    let histories: Vec<Vec<HistoryRow>> = manifest
        .history_files
        .iter()
        .map(|f| read_history(&dir.join(f)))
        .collect::<Result<_, _>>()?;
    let final_j: Vec<f64> = histories
        .iter()
        .map(|h| h.last().map(|r| r.j))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Empty(format!("{} has an empty history", dir.display())))?;
    let (q1, median, q3) = quartiles(&final_j)
        .ok_or_else(|| Error::Empty(format!("{} has no seeds", dir.display())))?;
    Ok(MethodSummary {
        label: manifest.name,
        method: manifest.method,
        environment: manifest.environment,
        seeds: manifest.seeds,
        final_j,
        q1,
        median,
        q3,
        median_curve: per_iteration_median(&histories, |r| Some(r.j)),
        psi_mean_curve: per_iteration_median(&histories, HistoryRow::sampling_mean),
    })
}

/// Summarises every run directory, in the order given.
pub fn aggregate(dirs: &[PathBuf]) -> Result<Summary, Error> {
    if dirs.is_empty() {
        return Err(Error::Empty("no run directories given".into()));
    }
    Ok(Summary {
        methods: dirs
            .iter()
            .map(|d| summarise_run(d))
            .collect::<Result<_, _>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sample_quartiles() {
        assert_eq!(quartiles(&[3.0, 5.0, 1.0, 4.0, 2.0]), Some((2.0, 3.0, 4.0)));
        assert_eq!(quartiles(&[7.0]), Some((7.0, 7.0, 7.0)));
        assert_eq!(quartiles(&[]), None);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
    }

    #[test]
    fn no_directories_is_an_error() {
        assert!(aggregate(&[]).is_err());
    }
}
