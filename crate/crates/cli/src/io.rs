//! Checkpoints, manifests and CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use jointlab_core::evaluation::{AllocationGrid, TableRow};
use jointlab_core::training::{HistoryRow, TrainState};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Error;

/// A trained network with everything needed to evaluate or resume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let ckpt: Checkpoint = read_json(path)?;
        if !ckpt.state.net.is_valid() {
            return Err(Error::Invariant(format!("{}: network shapes do not match its configuration", path.display())));
        }
        let setting = ckpt.config.setting();
        if setting.n_bundles != ckpt.state.net.n_bundles() || setting.ctrs != ckpt.state.net.config.ctrs {
            return Err(Error::Invariant(format!("{}: network does not fit setting {}", path.display(), setting.label)));
        }
        Ok(ckpt)
    }
}

/// Run metadata written next to every output set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub git_describe: String,
    pub wall_time_secs: f64,
    pub workers: usize,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, wall: Duration, workers: usize, outputs: &[PathBuf]) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: config.hash(),
            seed: config.seed,
            git_describe: git_describe(),
            wall_time_secs: wall.as_secs_f64(),
            workers,
            outputs: outputs
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
                .collect(),
        }
    }
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

pub fn ensure_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(dir.display().to_string(), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(path.display().to_string(), e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::Io(path.display().to_string(), e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, Error> {
    csv::Writer::from_path(path).map_err(|e| Error::Format(path.display().to_string(), e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(path.display().to_string(), e.to_string())
}

/// `setting,mechanism,revenue,stderr,regret,samples,seed`; a missing regret
/// is an empty field.
pub fn write_table(path: &Path, rows: &[TableRow]) -> Result<(), Error> {
    let mut w = csv_writer(path)?;
    w.write_record(["setting", "mechanism", "revenue", "stderr", "regret", "samples", "seed"]).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.setting.clone(),
            r.mechanism.clone(),
            r.revenue.to_string(),
            r.stderr.to_string(),
            r.regret.map_or_else(String::new, |x| x.to_string()),
            r.samples.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::Io(path.display().to_string(), e))
}

pub fn read_table(path: &Path) -> Result<Vec<TableRow>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| field(i).parse::<f64>().map_err(|e| Error::Format(path.display().to_string(), e.to_string()));
        rows.push(TableRow {
            setting: field(0).to_string(),
            mechanism: field(1).to_string(),
            revenue: num(2)?,
            stderr: num(3)?,
            regret: if field(4).is_empty() { None } else { Some(num(4)?) },
            samples: num(5)? as usize,
            seed: field(6).parse().map_err(|e: std::num::ParseIntError| Error::Format(path.display().to_string(), e.to_string()))?,
        });
    }
    Ok(rows)
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), Error> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "pass", "revenue", "mean_regret", "max_edge_regret", "loss", "rho"]).map_err(csv_err(path))?;
    for h in rows {
        w.write_record([
            h.step.to_string(),
            h.pass.to_string(),
            h.revenue.to_string(),
            h.mean_regret.to_string(),
            h.max_edge_regret.to_string(),
            h.loss.to_string(),
            h.rho.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::Io(path.display().to_string(), e))
}

/// Long format `x,y,win` plus, when present, `y,boundary` in a second file.
pub fn write_grid(path: &Path, boundary_path: &Path, grid: &AllocationGrid) -> Result<(), Error> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "win"]).map_err(csv_err(path))?;
    for (iy, y) in grid.axis.iter().enumerate() {
        for (ix, x) in grid.axis.iter().enumerate() {
            w.write_record([x.to_string(), y.to_string(), grid.at(ix, iy).to_string()]).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::Io(path.display().to_string(), e))?;
    if let Some(b) = &grid.boundary {
        let mut w = csv_writer(boundary_path)?;
        w.write_record(["y", "boundary"]).map_err(csv_err(boundary_path))?;
        for (y, t) in grid.axis.iter().zip(b) {
            w.write_record([y.to_string(), t.map_or_else(String::new, |t| t.to_string())])
                .map_err(csv_err(boundary_path))?;
        }
        w.flush().map_err(|e| Error::Io(boundary_path.display().to_string(), e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![
            TableRow {
                setting: "U_2".into(),
                mechanism: "optimal".into(),
                revenue: 0.1 + 0.2,
                stderr: 1e-3,
                regret: None,
                samples: 10,
                seed: 4,
            },
            TableRow {
                setting: "U_2".into(),
                mechanism: "bundlenet".into(),
                revenue: 0.5286,
                stderr: 2e-3,
                regret: Some(6e-4),
                samples: 10,
                seed: 4,
            },
        ];
        write_table(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("setting,mechanism,revenue,stderr,regret,samples,seed\n"));
        assert_eq!(read_table(&path).unwrap(), rows);
    }
}
