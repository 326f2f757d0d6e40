//! SVG figures from a sweep archive: success curves (mean line with a
//! min-max band across seeds) and subgoal-curriculum snapshots.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::config::RunConfig;
use super::metrics::MetricsRow;
use super::sweep::{Archive, RunStatus};
use crate::envs::{EnvConfig, MazeEnv};
use crate::error::{Error, Result};
use crate::relabel::load_subgoals;

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Seeds were logged at different steps and had to be interpolated.
    pub interpolated: bool,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.iter().position(|&v| v >= x) {
        Some(0) => ys[0],
        Some(i) => {
            let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + t * (ys[i] - ys[i - 1])
        }
        None => *ys.last().unwrap_or(&f64::NAN),
    }
}

/// Aggregates one success curve per seed. When the step grids differ, every
/// run is linearly interpolated onto the first run's grid, truncated to the
/// shortest run.
pub fn aggregate(label: &str, runs: &[Vec<MetricsRow>]) -> Result<Curve> {
    let runs: Vec<&Vec<MetricsRow>> = runs.iter().filter(|r| !r.is_empty()).collect();
    let first = runs.first().ok_or_else(|| Error::EmptyDataset(format!("no metrics for {label}")))?;
    let grid: Vec<f64> = first.iter().map(|r| r.step as f64).collect();
    let same = runs
        .iter()
        .all(|r| r.len() == first.len() && r.iter().zip(first.iter()).all(|(a, b)| a.step == b.step));
    let end = runs.iter().map(|r| r.last().map_or(0.0, |x| x.step as f64)).fold(f64::INFINITY, f64::min);
    let steps: Vec<f64> = if same { grid } else { grid.into_iter().filter(|&s| s <= end).collect() };
    let mut curve = Curve {
        label: label.to_string(),
        mean: Vec::with_capacity(steps.len()),
        min: Vec::with_capacity(steps.len()),
        max: Vec::with_capacity(steps.len()),
        steps,
        interpolated: !same,
    };
    for (i, &s) in curve.steps.iter().enumerate() {
        let vals: Vec<f64> = runs
            .iter()
            .map(|r| {
                if same {
                    r[i].success
                } else {
                    let xs: Vec<f64> = r.iter().map(|m| m.step as f64).collect();
                    let ys: Vec<f64> = r.iter().map(|m| m.success).collect();
                    interp(&xs, &ys, s)
                }
            })
            .collect();
        curve.mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
        curve.min.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
        curve.max.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(curve)
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Serialization(format!("plotting: {e}"))
}

pub fn success_figure(curves: &[Curve], path: &Path) -> Result<()> {
    let x_max = curves
        .iter()
        .flat_map(|c| c.steps.last().copied())
        .fold(1.0, f64::max);
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..x_max, 0.0..1.05)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("env steps")
        .y_desc("success rate")
        .draw()
        .map_err(plot_err)?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i);
        let band: Vec<(f64, f64)> = c
            .steps
            .iter()
            .zip(&c.max)
            .map(|(&x, &y)| (x, y))
            .chain(c.steps.iter().zip(&c.min).rev().map(|(&x, &y)| (x, y)))
            .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
            .map_err(plot_err)?;
        let label = if c.interpolated { format!("{} (interpolated)", c.label) } else { c.label.clone() };
        chart
            .draw_series(LineSeries::new(c.steps.iter().copied().zip(c.mean.iter().copied()), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Draws `D_g` subgoals of the chosen epochs over the maze layout, one panel
/// per epoch.
pub fn curriculum_figure(env: &MazeEnv, snapshots: &[(u64, Vec<[f64; 2]>)], path: &Path) -> Result<()> {
    let n = snapshots.len().max(1);
    let root = SVGBackend::new(path, (300 * n as u32, 330)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((1, n));
    let world = env.world();
    let (w, h) = (world.grid.width as f64 * world.cell_size, world.grid.height as f64 * world.cell_size);
    for (panel, (epoch, points)) in panels.iter().zip(snapshots) {
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("step {epoch}"), ("sans-serif", 16))
            .margin(10)
            .build_cartesian_2d(0.0..w, 0.0..h)
            .map_err(plot_err)?;
        let cs = world.cell_size;
        let walls = (0..world.grid.height).flat_map(|r| (0..world.grid.width).map(move |c| (c, r)));
        chart
            .draw_series(walls.filter(|&(c, r)| world.grid.is_wall(c, r)).map(|(c, r)| {
                let (x, y) = (c as f64 * cs, r as f64 * cs);
                Rectangle::new([(x, y), (x + cs, y + cs)], BLACK.mix(0.6).filled())
            }))
            .map_err(plot_err)?;
        chart
            .draw_series(points.iter().map(|p| Circle::new((p[0], p[1]), 2, RED.filled())))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

/// Evenly spaced picks (always including the first and last) from a sorted list.
pub fn pick_epochs(epochs: &[PathBuf], k: usize) -> Vec<PathBuf> {
    if epochs.len() <= k {
        return epochs.to_vec();
    }
    (0..k).map(|i| epochs[i * (epochs.len() - 1) / (k - 1).max(1)].clone()).collect()
}

/// Writes `success.svg` for the whole archive and, for maze runs, one
/// `curriculum-<point>.svg` from the first completed seed of each point.
pub fn plot_archive(root: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let archive = Archive::load(root)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut curves = Vec::new();
    let mut written = Vec::new();
    for (pi, label) in archive.point_labels().into_iter().enumerate() {
        let entries: Vec<_> = archive
            .entries
            .iter()
            .filter(|e| e.point == label && e.status == RunStatus::Completed)
            .collect();
        let runs = entries.iter().map(|e| archive.metrics(root, e)).collect::<Result<Vec<_>>>()?;
        if runs.iter().all(|r| r.is_empty()) {
            continue;
        }
        let curve = aggregate(&label, &runs)?;
        if curve.interpolated {
            log::warn!("{label}: seeds logged at different steps; interpolated onto a common grid");
        }
        curves.push(curve);
        if let Some(e) = entries.first() {
            let dir = root.join(&e.dir);
            if let Some(p) = curriculum_for_run(&dir, &out.join(format!("curriculum-{pi:03}.svg")))? {
                written.push(p);
            }
        }
    }
    if curves.is_empty() {
        return Err(Error::EmptyDataset("archive has no completed runs".into()));
    }
    let p = out.join("success.svg");
    success_figure(&curves, &p)?;
    written.insert(0, p);
    Ok(written)
}

fn curriculum_for_run(dir: &Path, path: &Path) -> Result<Option<PathBuf>> {
    let cfg = RunConfig::from_file(&dir.join("config.txt"))?;
    let EnvConfig::Maze(mc) = &cfg.env else {
        return Ok(None);
    };
    let dg_dir = dir.join("dg");
    let Ok(read) = std::fs::read_dir(&dg_dir) else {
        return Ok(None);
    };
    let mut files: Vec<PathBuf> = read.filter_map(|e| e.ok().map(|e| e.path())).collect();
    files.sort();
    if files.is_empty() {
        return Ok(None);
    }
    let env = MazeEnv::new(mc.clone())?;
    let mut snaps = Vec::new();
    for f in pick_epochs(&files, 4) {
        let dg = load_subgoals(&f)?;
        let epoch = dg.provenance.as_ref().map_or(0, |p| p.epoch);
        snaps.push((epoch, dg.transitions.iter().map(|t| [t.subgoal.0[0], t.subgoal.0[1]]).collect()));
    }
    curriculum_figure(&env, &snaps, path)?;
    Ok(Some(path.to_path_buf()))
}
