use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the training log, written at every evaluation.
///
/// Loss columns are means over the updates since the previous row (NaN when
/// no update of that kind ran).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub relabel_steps: u64,
    pub episodes: u64,
    pub loss_lower_critic: f64,
    pub loss_lower_actor: f64,
    pub loss_lower_reg: f64,
    pub loss_lower_disc: f64,
    pub loss_higher_critic: f64,
    pub loss_higher_actor: f64,
    pub loss_higher_reg: f64,
    pub loss_higher_disc: f64,
    pub success: f64,
    pub dg_size: usize,
    pub subgoals_per_demo: f64,
    /// Higher updates since the previous row that ran without regularization
    /// because `D_g` was empty.
    pub pure_rl_updates: u64,
    pub skipped_updates: u64,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Running mean that reports NaN when empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Mean {
    sum: f64,
    n: u64,
}

impl Mean {
    pub fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    pub fn take(&mut self) -> f64 {
        let m = if self.n == 0 { f64::NAN } else { self.sum / self.n as f64 };
        *self = Mean::default();
        m
    }
}
