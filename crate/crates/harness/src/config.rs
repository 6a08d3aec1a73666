//! Experiment configuration: the raw TOML/flag form and its validated,
//! resolved counterpart.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use nubs::analytics::BoundConstant;
use nubs::fock::FockConfig;
use nubs::walk::{Mode, Polarization, WalkParams};
use nubs::C64;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    SinglePhoton,
    Distributions,
    L1Curve,
    Thresholds,
    Scaling,
    RankExperiment,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::SinglePhoton => "single_photon",
            Self::Distributions => "distributions",
            Self::L1Curve => "l1_curve",
            Self::Thresholds => "thresholds",
            Self::Scaling => "scaling",
            Self::RankExperiment => "rank_experiment",
        }
    }

    fn needs_photons(self) -> bool {
        !matches!(self, Self::Spectrum | Self::SinglePhoton | Self::RankExperiment)
    }

    fn needs_times(self) -> bool {
        !matches!(self, Self::Spectrum)
    }

    fn default_delta(self) -> f64 {
        match self {
            Self::Scaling | Self::Thresholds => 1e-10,
            _ => 1e-6,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar or a list; lists become sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(x) => vec![x.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

/// A number, or an angle written like `"0.65pi"` or `"pi/4"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Value(f64),
    Text(String),
}

impl Number {
    pub fn resolve(&self, field: &str) -> Result<f64> {
        match self {
            Self::Value(v) => Ok(*v),
            Self::Text(s) => parse_angle(s).ok_or_else(|| HarnessError::config(field, format!("cannot read '{s}' as a number"))),
        }
    }
}

/// `1.2`, `pi`, `0.65pi`, `0.65*pi`, `-pi/4`, `3pi/4`.
pub fn parse_angle(s: &str) -> Option<f64> {
    let s = s.trim().to_ascii_lowercase();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim().to_string(), d.trim().parse::<f64>().ok()?),
        None => (s.clone(), 1.0),
    };
    let value = match num.strip_suffix("pi").or_else(|| num.strip_suffix('π')) {
        Some(coef) => {
            let coef = coef.trim().trim_end_matches('*').trim();
            let c = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().ok()?,
            };
            c * PI
        }
        None => num.parse::<f64>().ok()?,
    };
    let v = value / den;
    v.is_finite().then_some(v)
}

/// A 1-based site index, absolute or as a fraction of `L` (`"L"`, `"L/2"`, `"5L/6"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteExpr {
    Index(usize),
    Text(String),
}

impl SiteExpr {
    /// The 0-based site on a ring of `sites`.
    pub fn resolve(&self, sites: usize, field: &str) -> Result<usize> {
        let one_based = match self {
            Self::Index(i) => *i,
            Self::Text(s) => parse_site(s, sites).ok_or_else(|| {
                HarnessError::config(
                    field,
                    format!("'{s}' is not a site expression like 7, L, L/2 or 5L/6 (or not integral for L={sites})"),
                )
            })?,
        };
        if one_based == 0 || one_based > sites {
            return Err(HarnessError::config(field, format!("site {one_based} outside 1..={sites}")));
        }
        Ok(one_based - 1)
    }
}

fn parse_site(s: &str, sites: usize) -> Option<usize> {
    let s = s.trim();
    let Some(pos) = s.find(['L', 'l']) else {
        return s.parse().ok();
    };
    let coef = s[..pos].trim().trim_end_matches('*').trim();
    let coef: usize = if coef.is_empty() { 1 } else { coef.parse().ok()? };
    let rest = s[pos + 1..].trim();
    let div: usize = match rest.strip_prefix('/') {
        Some(d) => d.trim().parse().ok()?,
        None if rest.is_empty() => 1,
        None => return None,
    };
    let num = coef * sites;
    (div > 0 && num % div == 0).then(|| num / div)
}

fn parse_pol(s: &str, field: &str) -> Result<Polarization> {
    match s.trim().to_ascii_lowercase().as_str() {
        "h" => Ok(Polarization::H),
        "v" => Ok(Polarization::V),
        other => Err(HarnessError::config(field, format!("polarization must be h or v, got '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonSpec {
    pub site: SiteExpr,
    pub pol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

/// Parses `"x:pol[:count],..."`.
pub fn parse_photons(s: &str) -> Result<Vec<PhotonSpec>> {
    let field = "photons";
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let bits: Vec<&str> = part.split(':').map(str::trim).collect();
            if !(2..=3).contains(&bits.len()) {
                return Err(HarnessError::config(field, format!("'{part}' is not x:pol[:count]")));
            }
            let site = match bits[0].parse::<usize>() {
                Ok(i) => SiteExpr::Index(i),
                Err(_) => SiteExpr::Text(bits[0].to_string()),
            };
            let count = match bits.get(2) {
                Some(c) => Some(c.parse().map_err(|_| HarnessError::config(field, format!("bad photon count '{c}'")))?),
                None => None,
            };
            Ok(PhotonSpec { site, pol: bits[1].to_string(), count })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeSpec {
    Lin { start: u64, stop: u64, step: u64 },
    Geom { start: u64, stop: u64, per_decade: usize },
    List { values: Vec<u64> },
}

impl TimeSpec {
    /// Parses `lin:start:stop:step`, `geom:start:stop:per_decade` or `list:t1,t2,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let field = "t_grid";
        let (kind, rest) = s.split_once(':').ok_or_else(|| HarnessError::config(field, format!("'{s}' has no kind prefix")))?;
        let nums = |sep: char| -> Result<Vec<u64>> {
            rest.split(sep)
                .filter(|x| !x.trim().is_empty())
                .map(|x| x.trim().parse().map_err(|_| HarnessError::config(field, format!("bad time '{x}'"))))
                .collect()
        };
        match kind.trim() {
            "lin" => match nums(':')?.as_slice() {
                &[start, stop, step] => Ok(Self::Lin { start, stop, step }),
                _ => Err(HarnessError::config(field, "lin needs start:stop:step")),
            },
            "geom" => match nums(':')?.as_slice() {
                &[start, stop, per_decade] => Ok(Self::Geom { start, stop, per_decade: per_decade as usize }),
                _ => Err(HarnessError::config(field, "geom needs start:stop:per_decade")),
            },
            "list" => Ok(Self::List { values: nums(',')? }),
            other => Err(HarnessError::config(field, format!("unknown grid kind '{other}'"))),
        }
    }

    pub fn times(&self) -> Vec<u64> {
        match *self {
            Self::Lin { start, stop, step } => (start..=stop).step_by(step.max(1) as usize).collect(),
            Self::Geom { start, stop, per_decade } => {
                let mut g = nubs::analytics::geometric_grid(start, stop, per_decade);
                if start == 0 && stop > 0 {
                    g.insert(0, 0);
                }
                g
            }
            Self::List { ref values } => values.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let field = "times";
        match *self {
            Self::Lin { step: 0, .. } => return Err(HarnessError::config(field, "step must be positive")),
            Self::Geom { per_decade: 0, .. } => return Err(HarnessError::config(field, "per_decade must be positive")),
            _ => {}
        }
        let t = self.times();
        if t.is_empty() {
            return Err(HarnessError::config(field, "time grid is empty"));
        }
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::config(field, "times must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<OneOrMany<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<OneOrMany<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_gamma: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<OneOrMany<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSpec {
    /// Hard cap for adaptive time-window doubling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_cap: Option<u64>,
    /// `"4n"` (default) or `"8n"` in the short-time bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_constant: Option<String>,
    /// Single-photon start site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<SiteExpr>,
    /// Single-photon polarization as `[[re, im], [re, im]]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<[[f64; 2]; 2]>,
    /// Variance fit window `[t_lo, t_hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[u64; 2]>,
    /// Truncation ranks compared with the exact distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    /// Relative singular-value tolerance, also used as the rank cutoff weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    /// Keep doubling a geometric grid until both transitions fire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extend: Option<bool>,
}

/// The on-disk and command-line form; every field optional so that a file can
/// be layered over flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photons: Option<Vec<PhotonSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<TimeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsSpec>,
}

impl RawConfig {
    pub fn from_toml(text: &str, path: &std::path::Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Parse { path: path.into(), message: e.to_string() })
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: RawConfig) -> RawConfig {
        let params = match (self.params, base.params) {
            (Some(a), Some(b)) => Some({
                // a file that picks one gain parametrization replaces both flags
                let own = a.gamma.is_some() || a.exp_gamma.is_some();
                ParamsSpec {
                    theta1: a.theta1.or(b.theta1),
                    theta2: a.theta2.or(b.theta2),
                    gamma: if own { a.gamma } else { b.gamma },
                    exp_gamma: if own { a.exp_gamma } else { b.exp_gamma },
                    sites: a.sites.or(b.sites),
                }
            }),
            (a, b) => a.or(b),
        };
        let options = match (self.options, base.options) {
            (Some(a), Some(b)) => Some(OptionsSpec {
                t_cap: a.t_cap.or(b.t_cap),
                bound_constant: a.bound_constant.or(b.bound_constant),
                x0: a.x0.or(b.x0),
                sigma: a.sigma.or(b.sigma),
                fit_window: a.fit_window.or(b.fit_window),
                ranks: a.ranks.or(b.ranks),
                rank_tol: a.rank_tol.or(b.rank_tol),
                extend: a.extend.or(b.extend),
            }),
            (a, b) => a.or(b),
        };
        RawConfig {
            experiment: self.experiment.or(base.experiment),
            output_dir: self.output_dir.or(base.output_dir),
            workers: self.workers.or(base.workers),
            delta: self.delta.or(base.delta),
            params,
            photons: self.photons.or(base.photons),
            times: self.times.or(base.times),
            options,
        }
    }

    /// Validates everything and expands sweeps. Nothing is written to disk.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let experiment = self.experiment.ok_or_else(|| HarnessError::config("experiment", "no experiment selected"))?;
        let output_dir =
            self.output_dir.clone().ok_or_else(|| HarnessError::config("output_dir", "no output directory given"))?;
        let workers = self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(HarnessError::config("workers", "must be at least 1"));
        }
        let delta = self.delta.unwrap_or(experiment.default_delta());
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(HarnessError::config("delta", format!("must be positive, got {delta}")));
        }

        let params = self.params.clone().unwrap_or_default();
        let angles = |v: &Option<OneOrMany<Number>>, field: &str, default: f64| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![default]),
                Some(v) => v.to_vec().iter().map(|n| n.resolve(field)).collect(),
            }
        };
        let theta1 = angles(&params.theta1, "params.theta1", 0.65 * PI)?;
        let theta2 = angles(&params.theta2, "params.theta2", 0.25 * PI)?;
        let gammas: Vec<f64> = match (&params.gamma, &params.exp_gamma) {
            (Some(_), Some(_)) => return Err(HarnessError::config("params", "give gamma or exp_gamma, not both")),
            (Some(g), None) => g.to_vec(),
            (None, Some(e)) => {
                let e = e.to_vec();
                if let Some(bad) = e.iter().find(|&&x| !(x >= 1.0 && x.is_finite())) {
                    return Err(HarnessError::config("params.exp_gamma", format!("must be >= 1, got {bad}")));
                }
                e.iter().map(|x| x.ln()).collect()
            }
            (None, None) => vec![1.5f64.ln()],
        };
        let sites = params.sites.as_ref().map_or(vec![60], |s| s.to_vec());
        for (name, len) in [("theta1", theta1.len()), ("theta2", theta2.len()), ("gamma", gammas.len()), ("sites", sites.len())] {
            if len == 0 {
                return Err(HarnessError::config(format!("params.{name}"), "empty sweep list"));
            }
        }
        let mut points = Vec::new();
        for &t1 in &theta1 {
            for &t2 in &theta2 {
                for &g in &gammas {
                    for &l in &sites {
                        let p = WalkParams::new(t1, t2, g, l).map_err(|e| HarnessError::config("params", e.to_string()))?;
                        points.push(p);
                    }
                }
            }
        }

        let photons = self.photons.clone().unwrap_or_default();
        if experiment.needs_photons() && photons.is_empty() {
            return Err(HarnessError::config("photons", "at least one input photon is required"));
        }
        for (i, ph) in photons.iter().enumerate() {
            parse_pol(&ph.pol, &format!("photons[{i}].pol"))?;
            if ph.count == Some(0) {
                return Err(HarnessError::config(format!("photons[{i}].count"), "must be at least 1"));
            }
            for p in &points {
                ph.site.resolve(p.sites, &format!("photons[{i}].site"))?;
            }
        }

        let times = self.times.clone().unwrap_or(TimeSpec::Geom { start: 1, stop: 1000, per_decade: 20 });
        if experiment.needs_times() {
            times.validate()?;
        }

        let o = self.options.clone().unwrap_or_default();
        let bound_constant = match o.bound_constant.as_deref().map(str::trim) {
            None | Some("4n") => BoundConstant::FourN,
            Some("8n") => BoundConstant::EightN,
            Some(other) => {
                return Err(HarnessError::config("options.bound_constant", format!("expected 4n or 8n, got '{other}'")))
            }
        };
        let x0 = o.x0.clone().unwrap_or(SiteExpr::Text("L/2".into()));
        for p in &points {
            x0.resolve(p.sites, "options.x0")?;
        }
        let sigma = match o.sigma {
            Some([[a, b], [c, d]]) => {
                let s = [C64::new(a, b), C64::new(c, d)];
                if s[0].norm_sqr() + s[1].norm_sqr() == 0.0 {
                    return Err(HarnessError::config("options.sigma", "polarization vector is zero"));
                }
                s
            }
            None => [C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0), C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2)],
        };
        let fit_window = match o.fit_window {
            Some([a, b]) if a < b => Some(a..=b),
            Some(w) => return Err(HarnessError::config("options.fit_window", format!("{w:?} is not an increasing pair"))),
            None => None,
        };
        let rank_tol = o.rank_tol.unwrap_or(1e-6);
        if !(rank_tol > 0.0 && rank_tol < 1.0) {
            return Err(HarnessError::config("options.rank_tol", format!("must be in (0, 1), got {rank_tol}")));
        }
        let ranks = o.ranks.clone().unwrap_or_default();
        if ranks.contains(&0) {
            return Err(HarnessError::config("options.ranks", "ranks must be positive"));
        }
        if experiment == Experiment::RankExperiment {
            if times.times().contains(&0) {
                return Err(HarnessError::config("times", "rank experiments need t >= 1"));
            }
            if !ranks.is_empty() && photons.is_empty() {
                return Err(HarnessError::config("options.ranks", "truncation comparisons need input photons"));
            }
        }
        let t_cap = o.t_cap.unwrap_or(100_000);

        Ok(ExperimentConfig {
            experiment,
            points,
            photons,
            times,
            delta,
            output_dir,
            workers,
            bound_constant,
            x0,
            sigma,
            fit_window,
            ranks,
            rank_tol,
            t_cap,
            extend: o.extend.unwrap_or(true),
        })
    }
}

/// Validated configuration with sweeps expanded into `points`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Cartesian product of θ₁ × θ₂ × γ × L, in that nesting order.
    pub points: Vec<WalkParams>,
    pub photons: Vec<PhotonSpec>,
    pub times: TimeSpec,
    pub delta: f64,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub bound_constant: BoundConstant,
    pub x0: SiteExpr,
    pub sigma: [C64; 2],
    pub fit_window: Option<std::ops::RangeInclusive<u64>>,
    pub ranks: Vec<usize>,
    pub rank_tol: f64,
    pub t_cap: u64,
    pub extend: bool,
}

impl ExperimentConfig {
    /// Input state on the lattice of `p`; sites were checked in `resolve`.
    pub fn inputs(&self, p: &WalkParams) -> FockConfig {
        let mut modes = Vec::new();
        for (i, ph) in self.photons.iter().enumerate() {
            let x = ph.site.resolve(p.sites, "photons").expect("validated");
            let pol = parse_pol(&ph.pol, &format!("photons[{i}].pol")).expect("validated");
            let j = Mode::new(x, pol).index();
            modes.extend(std::iter::repeat(j).take(ph.count.unwrap_or(1) as usize));
        }
        FockConfig::from_photons(&modes)
    }

    pub fn x0(&self, p: &WalkParams) -> usize {
        self.x0.resolve(p.sites, "options.x0").expect("validated")
    }
}
