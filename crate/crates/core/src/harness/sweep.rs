//! Grid sweeps over config keys, archived one directory per (point, seed).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{parse_pairs, RunConfig};
use super::metrics::{read_metrics, MetricsRow};
use super::trainer::train;
use crate::demos::DemoDataset;
use crate::error::{Error, Result};

/// Cartesian grid over config keys. File format: one `key = v1, v2, ...`
/// line per axis, plus an optional `seeds = ...` line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        let mut seeds = vec![0];
        for (line, key, value) in parse_pairs(text)? {
            let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                return Err(Error::Parse {
                    path: PathBuf::new(),
                    line,
                    message: format!("axis {key} has no values"),
                });
            }
            if key == "seeds" || key == "seed" {
                seeds = values
                    .iter()
                    .map(|v| {
                        v.parse().map_err(|_| Error::Parse {
                            path: PathBuf::new(),
                            line,
                            message: format!("bad seed {v:?}"),
                        })
                    })
                    .collect::<Result<_>>()?;
            } else {
                axes.push((key, values));
            }
        }
        Ok(Self { axes, seeds })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every grid point as a list of overrides, in row-major order.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

pub fn point_label(point: &[(String, String)]) -> String {
    if point.is_empty() {
        return "base".into();
    }
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

/// Base config with `point` and the seed applied on top.
pub fn point_config(base: &RunConfig, point: &[(String, String)], seed: u64) -> Result<RunConfig> {
    let mut text = String::new();
    let overridden: Vec<&str> = point.iter().map(|(k, _)| k.as_str()).chain(["seed"]).collect();
    for line in base.to_text().lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        if !overridden.contains(&key) {
            text.push_str(line);
            text.push('\n');
        }
    }
    for (k, v) in point {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str(&format!("seed = {seed}\n"));
    RunConfig::parse(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub point: String,
    pub overrides: Vec<(String, String)>,
    pub seed: u64,
    /// Run directory relative to the archive root.
    pub dir: PathBuf,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn load(root: &Path) -> Result<Self> {
        let p = root.join("index.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: p,
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn save(&self, root: &Path) -> Result<()> {
        let p = root.join("index.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    pub fn metrics(&self, root: &Path, entry: &ArchiveEntry) -> Result<Vec<MetricsRow>> {
        read_metrics(&root.join(&entry.dir).join("metrics.csv"))
    }

    /// Distinct point labels in first-seen order.
    pub fn point_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.point) {
                out.push(e.point.clone());
            }
        }
        out
    }
}

/// Runs every grid point for every seed, one after another. A failing run is
/// recorded in the archive and the sweep moves on. The index is rewritten
/// after every run so an interrupted sweep leaves a readable archive.
pub fn sweep(base: &RunConfig, grid: &Grid, root: &Path, demos: Option<&DemoDataset>) -> Result<Archive> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut archive = Archive { entries: Vec::new() };
    for (pi, point) in grid.points().iter().enumerate() {
        for &seed in &grid.seeds {
            let dir = PathBuf::from(format!("point-{pi:03}")).join(format!("seed-{seed}"));
            let status = match point_config(base, point, seed).and_then(|cfg| {
                train(cfg, demos.cloned(), Some(&root.join(&dir)))
            }) {
                Ok(_) => RunStatus::Completed,
                Err(e) => {
                    log::warn!("run {} seed {seed} failed: {e}", point_label(point));
                    RunStatus::Failed(e.to_string())
                }
            };
            archive.entries.push(ArchiveEntry {
                point: point_label(point),
                overrides: point.clone(),
                seed,
                dir,
                status,
            });
            archive.save(root)?;
        }
    }
    Ok(archive)
}
