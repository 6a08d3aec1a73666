//! Experiment runner: configuration, dispatch to the simulator, and
//! persistence of CSV tables plus a TOML manifest.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use config::{ExperimentConfig, RawConfig};
use error::{HarnessError, Result};
use output::{write_atomic, Manifest, OutputEntry, PointEntry};

/// Validates `raw`, runs the experiment, then writes every CSV and the
/// manifest. Nothing touches the filesystem until the computation succeeded.
pub fn execute(raw: &RawConfig) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = raw.resolve()?;
    let start = Instant::now();
    let out = experiments::run(&cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let rendered: Vec<(PathBuf, Vec<u8>)> =
        out.tables.iter().map(|t| Ok((cfg.output_dir.join(&t.name), t.render(cfg.experiment.name())?))).collect::<Result<_>>()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    for (path, bytes) in &rendered {
        write_atomic(path, bytes)?;
    }
    let manifest = Manifest {
        software: "nubs".into(),
        version: output::VERSION.into(),
        experiment: cfg.experiment.name().into(),
        wall_time_s: wall,
        workers: cfg.workers,
        config: raw.clone(),
        points: cfg
            .points
            .iter()
            .enumerate()
            .map(|(index, p)| PointEntry {
                index,
                theta1: p.theta1,
                theta2: p.theta2,
                gamma: p.gamma,
                exp_gamma: p.exp_gamma(),
                sites: p.sites,
            })
            .collect(),
        outputs: out
            .tables
            .iter()
            .map(|t| OutputEntry { path: t.name.clone().into(), columns: t.columns.clone(), rows: t.rows.len(), point: t.point })
            .collect(),
        scalars: out.scalars,
    };
    let path = manifest.write(&cfg.output_dir)?;
    log::info!("wrote {} tables and {}", manifest.outputs.len(), path.display());
    Ok((cfg, path))
}
