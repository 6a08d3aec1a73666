//! L1-distance curves and threshold scans over time.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::{distribution_dominant, distribution_pair, l1_distance, Distribution, Enumeration, FockConfig};
use crate::spectral::dominant_mode;
use crate::walk::{PropagatorRows, WalkParams};

use super::{detect_threshold, linear_fit, Direction, ThresholdResult, MIN_FIT_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    ExactVsDistinguishable,
    ExactVsDominant,
    DistinguishableVsDominant,
}

impl Comparison {
    pub fn name(self) -> &'static str {
        match self {
            Comparison::ExactVsDistinguishable => "exact_vs_distinguishable",
            Comparison::ExactVsDominant => "exact_vs_dominant",
            Comparison::DistinguishableVsDominant => "distinguishable_vs_dominant",
        }
    }

    fn needs_dominant(self) -> bool {
        !matches!(self, Comparison::ExactVsDistinguishable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    pub t: u64,
    pub exact_dis: f64,
    pub exact_dom: Option<f64>,
    pub dis_dom: Option<f64>,
}

impl DistanceSample {
    pub fn get(&self, c: Comparison) -> Result<f64> {
        let v = match c {
            Comparison::ExactVsDistinguishable => Some(self.exact_dis),
            Comparison::ExactVsDominant => self.exact_dom,
            Comparison::DistinguishableVsDominant => self.dis_dom,
        };
        v.ok_or_else(|| Error::Domain(format!("{} requested but no dominant distribution was built", c.name())))
    }
}

/// Advances the input rows of `U(t)` and compares the exact, distinguishable
/// and (optionally) dominant-mode distributions at requested times.
#[derive(Debug, Clone)]
pub struct DistanceTracker {
    inputs: FockConfig,
    enumeration: Enumeration,
    rows: PropagatorRows,
    dominant: Option<Arc<Distribution>>,
}

impl DistanceTracker {
    /// The enumeration is restricted to the inputs' parity sector when they
    /// share one. The dominant distribution needs that.
    pub fn new(p: &WalkParams, inputs: &FockConfig, with_dominant: bool) -> Result<Self> {
        if let Some(j) = inputs.max_mode().filter(|&j| j >= p.modes()) {
            return Err(Error::ModeOutOfRange { mode: j, modes: p.modes() });
        }
        let enumeration = Enumeration::for_inputs(p.sites, inputs, true)?;
        let dominant = if with_dominant {
            let sector = inputs.common_parity().ok_or_else(|| {
                Error::Domain("inputs span both site-parity sublattices; no single dominant mode governs them".into())
            })?;
            Some(Arc::new(distribution_dominant(&dominant_mode(p, sector)?, &enumeration)?))
        } else {
            None
        };
        let rows = PropagatorRows::new(p, &inputs.photons())?;
        Ok(Self { inputs: inputs.clone(), enumeration, rows, dominant })
    }

    pub fn time(&self) -> u64 {
        self.rows.time()
    }

    pub fn enumeration(&self) -> &Enumeration {
        &self.enumeration
    }

    pub fn dominant(&self) -> Option<&Distribution> {
        self.dominant.as_deref()
    }

    /// Exact and distinguishable distributions at `t ≥ self.time()`.
    pub fn distributions(&mut self, t: u64) -> Result<(Distribution, Distribution)> {
        self.rows.advance_to(t)?;
        distribution_pair(&self.rows, Some(t), &self.inputs, &self.enumeration)
    }

    pub fn sample(&mut self, t: u64) -> Result<DistanceSample> {
        let (exact, dis) = self.distributions(t)?;
        let exact_dis = l1_distance(&exact, &dis)?;
        let (exact_dom, dis_dom) = match &self.dominant {
            Some(dom) => (Some(l1_distance(&exact, dom)?), Some(l1_distance(&dis, dom)?)),
            None => (None, None),
        };
        Ok(DistanceSample { t, exact_dis, exact_dom, dis_dom })
    }
}

/// Distances at each listed time (strictly increasing).
pub fn l1_series(p: &WalkParams, inputs: &FockConfig, times: &[u64], with_dominant: bool) -> Result<Vec<DistanceSample>> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("times must be strictly increasing".into()));
    }
    let mut tr = DistanceTracker::new(p, inputs, with_dominant)?;
    times.iter().map(|&t| tr.sample(t)).collect()
}

/// Integers `≈ lo·10^{i/per_decade}` from `lo` to `hi` inclusive, deduplicated.
pub fn geometric_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let lo = lo.max(1);
    if hi < lo {
        return Vec::new();
    }
    let ratio = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut out = vec![lo];
    let mut x = lo as f64;
    loop {
        x *= ratio;
        let t = x.round() as u64;
        if t >= hi {
            break;
        }
        if t > *out.last().unwrap() {
            out.push(t);
        }
    }
    if *out.last().unwrap() < hi {
        out.push(hi);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Geometric samples per decade of time.
    pub per_decade: usize,
    /// Initial end of the time window.
    pub t_max: u64,
    /// The window doubles until the predicate fires or this cap is reached.
    pub t_cap: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { per_decade: 20, t_max: 1000, t_cap: 100_000 }
    }
}

/// Finds the first time the chosen distance crosses `delta`: geometric
/// sampling until the predicate holds, then a step-by-step scan between the
/// last two samples.
pub fn scan_threshold(
    tracker: &DistanceTracker,
    comparison: Comparison,
    delta: f64,
    direction: Direction,
    opts: ScanOptions,
) -> Result<ThresholdResult> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    if comparison.needs_dominant() && tracker.dominant.is_none() {
        return Err(Error::Domain(format!("{} needs a tracker built with the dominant distribution", comparison.name())));
    }
    let mut tr = tracker.clone();
    let mut samples: Vec<(u64, f64)> = Vec::new();
    let mut lo = tr.time() + 1;
    let mut hi = opts.t_max.max(lo);
    let finish = |mut s: Vec<(u64, f64)>| {
        s.sort_by_key(|x| x.0);
        let (times, dists) = s.into_iter().unzip();
        detect_threshold(times, dists, delta, direction)
    };
    loop {
        for t in geometric_grid(lo, hi, opts.per_decade) {
            let snapshot = tr.clone();
            let d = tr.sample(t)?.get(comparison)?;
            samples.push((t, d));
            if direction.holds(d, delta) {
                let mut r = snapshot;
                for u in r.time() + 1..t {
                    let d = r.sample(u)?.get(comparison)?;
                    samples.push((u, d));
                    if direction.holds(d, delta) {
                        break;
                    }
                }
                return finish(samples);
            }
        }
        if hi >= opts.t_cap {
            log::warn!("{} never crossed {delta:e} up to t={hi}", comparison.name());
            return finish(samples);
        }
        lo = hi + 1;
        hi = (2 * hi).min(opts.t_cap);
    }
}

/// Exponential decay rate of a distance curve, fitted on the points strictly
/// between `lower` and `upper`.
pub fn decay_rate_fit(times: &[u64], distances: &[f64], lower: f64, upper: f64) -> Result<f64> {
    let (t, ld): (Vec<f64>, Vec<f64>) =
        times.iter().zip(distances).filter(|(_, &d)| d > lower && d < upper).map(|(&t, &d)| (t as f64, d.ln())).unzip();
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_FIT_POINTS, got: t.len() });
    }
    Ok(-linear_fit(&t, &ld).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_is_increasing_and_covers_ends() {
        let g = geometric_grid(1, 1000, 20);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() > 40 && g.len() < 70);
        assert_eq!(geometric_grid(5, 5, 20), vec![5]);
        assert!(geometric_grid(6, 5, 20).is_empty());
    }

    #[test]
    fn scan_matches_exhaustive_search() {
        let p = WalkParams::with_exp_gamma(0.65 * PI, 0.25 * PI, 1.5, 24).unwrap();
        let inputs = FockConfig::from_photons(&[2 * 11, 2 * 23 + 1]);
        let tr = DistanceTracker::new(&p, &inputs, true).unwrap();
        let opts = ScanOptions { per_decade: 20, t_max: 8, t_cap: 4000 };
        let r = scan_threshold(&tr, Comparison::ExactVsDistinguishable, 1e-10, Direction::FirstExceeds, opts).unwrap();
        let times: Vec<u64> = (1..=r.threshold_t.unwrap()).collect();
        let series = l1_series(&p, &inputs, &times, false).unwrap();
        let first = series.iter().find(|s| s.exact_dis > 1e-10).unwrap().t;
        assert_eq!(r.threshold_t, Some(first));

        let r = scan_threshold(&tr, Comparison::ExactVsDominant, 1e-3, Direction::FirstBelow, opts).unwrap();
        let t = r.threshold_t.unwrap();
        let series = l1_series(&p, &inputs, &[t - 1, t], true).unwrap();
        assert!(series[0].exact_dom.unwrap() >= 1e-3 && series[1].exact_dom.unwrap() < 1e-3);
    }

    #[test]
    fn dominant_needs_single_parity() {
        let p = WalkParams::with_exp_gamma(0.65 * PI, 0.25 * PI, 1.5, 12).unwrap();
        let mixed = FockConfig::from_photons(&[0, 2]);
        assert!(DistanceTracker::new(&p, &mixed, true).is_err());
        assert!(DistanceTracker::new(&p, &mixed, false).is_ok());
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let times: Vec<u64> = (0..200).map(|i| i * 10).collect();
        let d: Vec<f64> = times.iter().map(|&t| 0.7 * (-0.013 * t as f64).exp()).collect();
        let r = decay_rate_fit(&times, &d, 1e-12, 1e-2).unwrap();
        assert!((r - 0.013).abs() < 1e-12);
        assert!(decay_rate_fit(&times[..5], &d[..5], 1e-12, 1.0).is_err());
    }
}
