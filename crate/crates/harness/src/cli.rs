//! Command-line front end. Flags build a [`RawConfig`]; a `--config` file is
//! layered on top and wins where both set a field.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_photons, Experiment, Number, OneOrMany, OptionsSpec, ParamsSpec, RawConfig, TimeSpec};
use crate::error::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(name = "nubs", version, about = "Non-unitary boson sampling experiments on a PT-symmetric quantum walk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Quasi-energy dispersion and phase diagnostics
    Spectrum,
    /// Single-photon variance and kurtosis over time
    SinglePhoton,
    /// Exact, distinguishable and dominant-mode output distributions
    Distributions,
    /// L1 distances between the three distributions over time
    L1Curve,
    /// Short- and long-time transition times with their bounds
    Thresholds,
    /// Transition times against lattice size
    Scaling,
    /// Numerical rank of the propagator against the analytic cutoff
    RankExperiment,
}

impl Command {
    pub fn experiment(self) -> Experiment {
        match self {
            Self::Spectrum => Experiment::Spectrum,
            Self::SinglePhoton => Experiment::SinglePhoton,
            Self::Distributions => Experiment::Distributions,
            Self::L1Curve => Experiment::L1Curve,
            Self::Thresholds => Experiment::Thresholds,
            Self::Scaling => Experiment::Scaling,
            Self::RankExperiment => Experiment::RankExperiment,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML experiment file; its fields override flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true, env = "NUBS_WORKERS")]
    pub workers: Option<usize>,
    /// Distance threshold
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Coin angle(s), e.g. 0.65pi; comma-separated values sweep
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta1: Vec<String>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta2: Vec<String>,
    /// Gain/loss rate(s)
    #[arg(long, global = true, value_delimiter = ',', conflicts_with = "exp_gamma")]
    pub gamma: Vec<f64>,
    /// Gain factor(s) e^gamma
    #[arg(long, global = true, value_delimiter = ',')]
    pub exp_gamma: Vec<f64>,
    /// Lattice size(s)
    #[arg(long, global = true, value_delimiter = ',')]
    pub sites: Vec<usize>,
    /// Input photons as "x:pol[:count],..." with 1-based sites such as L/2
    #[arg(long, global = true)]
    pub photons: Option<String>,
    /// End of the time grid
    #[arg(long, global = true)]
    pub t_max: Option<u64>,
    /// Time grid: lin:start:stop:step, geom:start:stop:per_decade or list:t1,t2,...
    #[arg(long, global = true)]
    pub t_grid: Option<String>,
}

fn many<T: Clone>(v: &[T]) -> Option<OneOrMany<T>> {
    match v.len() {
        0 => None,
        1 => Some(OneOrMany::One(v[0].clone())),
        _ => Some(OneOrMany::Many(v.to_vec())),
    }
}

impl Flags {
    pub fn to_raw(&self, experiment: Experiment) -> Result<RawConfig> {
        let angles = |v: &[String]| many(&v.iter().map(|s| Number::Text(s.clone())).collect::<Vec<_>>());
        let params = ParamsSpec {
            theta1: angles(&self.theta1),
            theta2: angles(&self.theta2),
            gamma: many(&self.gamma),
            exp_gamma: many(&self.exp_gamma),
            sites: many(&self.sites),
        };
        let times = match (&self.t_grid, self.t_max) {
            (Some(g), t_max) => {
                let g = TimeSpec::parse(g)?;
                Some(match t_max {
                    Some(t) => match g {
                        TimeSpec::List { .. } => return Err(HarnessError::config("t_max", "cannot combine with a list grid")),
                        g => with_stop(g, t),
                    },
                    None => g,
                })
            }
            (None, Some(t)) => Some(TimeSpec::Geom { start: 1, stop: t, per_decade: 20 }),
            (None, None) => None,
        };
        Ok(RawConfig {
            experiment: Some(experiment),
            output_dir: self.out.clone(),
            workers: self.workers,
            delta: self.delta,
            params: (params != ParamsSpec::default()).then_some(params),
            photons: self.photons.as_deref().map(parse_photons).transpose()?,
            times,
            options: None::<OptionsSpec>,
        })
    }
}

fn with_stop(g: TimeSpec, stop: u64) -> TimeSpec {
    match g {
        TimeSpec::Lin { start, step, .. } => TimeSpec::Lin { start, stop, step },
        TimeSpec::Geom { start, per_decade, .. } => TimeSpec::Geom { start, stop, per_decade },
        list => list,
    }
}

/// Merged configuration for a parsed command line.
pub fn build_config(cli: &Cli) -> Result<RawConfig> {
    let experiment = cli.command.experiment();
    let flags = cli.flags.to_raw(experiment)?;
    let Some(path) = &cli.flags.config else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config("config", format!("{}: {e}", path.display())))?;
    let file = RawConfig::from_toml(&text, path)?;
    if let Some(e) = file.experiment.filter(|&e| e != experiment) {
        return Err(HarnessError::config("experiment", format!("config file is for '{e}' but the subcommand is '{experiment}'")));
    }
    Ok(file.over(flags))
}
