//! Single-photon spreading, fits, threshold detection and analytic bounds.

mod pipeline;
mod truncation;

pub use pipeline::*;
pub use truncation::*;

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::spectral::{diffusion_constant, pt_phase, PtPhase};
use crate::walk::{StepOperator, WalkParams, C64};

/// Probability mass near the antipode above which moments are flagged as
/// contaminated by the periodic wrap.
pub const ANTIPODE_WARN_MASS: f64 = 1e-6;

/// Normalized single-photon state at time `t`, indexed by mode.
#[derive(Debug, Clone)]
pub struct Wavefunction {
    pub t: u64,
    pub amps: Vec<C64>,
}

impl Wavefunction {
    pub fn sites(&self) -> usize {
        self.amps.len() / 2
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Site occupation `Σ_σ |ψ(x,σ)|²`.
    pub fn site_probabilities(&self) -> Vec<f64> {
        self.amps.chunks(2).map(|c| c[0].norm_sqr() + c[1].norm_sqr()).collect()
    }
}

/// `ψ(t+1) = Vψ(t) / ‖Vψ(t)‖`, one step at a time.
#[derive(Debug, Clone)]
pub struct SinglePhotonWalk {
    op: StepOperator,
    psi: Wavefunction,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

impl SinglePhotonWalk {
    /// Starts at site `x0` (0-based) with polarization `sigma_in`, which is normalized here.
    pub fn new(p: &WalkParams, x0: usize, sigma_in: [C64; 2]) -> Result<Self> {
        if x0 >= p.sites {
            return Err(Error::Domain(format!("start site {x0} outside [0, {})", p.sites)));
        }
        let nrm = (sigma_in[0].norm_sqr() + sigma_in[1].norm_sqr()).sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::Domain("polarization vector must be nonzero".into()));
        }
        let mut amps = vec![C64::new(0.0, 0.0); p.modes()];
        amps[2 * x0] = sigma_in[0] / nrm;
        amps[2 * x0 + 1] = sigma_in[1] / nrm;
        Ok(Self {
            op: StepOperator::new(p),
            psi: Wavefunction { t: 0, amps },
            buf: vec![C64::new(0.0, 0.0); p.modes()],
            scratch: vec![C64::new(0.0, 0.0); p.modes()],
        })
    }

    pub fn state(&self) -> &Wavefunction {
        &self.psi
    }

    pub fn step(&mut self) {
        self.op.apply(&self.psi.amps, &mut self.buf, &mut self.scratch);
        let n = self.buf.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (a, b) in self.psi.amps.iter_mut().zip(&self.buf) {
            *a = b / n;
        }
        self.psi.t += 1;
    }
}

/// States for `t = 0..=t_max`.
pub fn single_photon_evolve(p: &WalkParams, x0: usize, sigma_in: [C64; 2], t_max: u64) -> Result<Vec<Wavefunction>> {
    let mut walk = SinglePhotonWalk::new(p, x0, sigma_in)?;
    let mut out = Vec::with_capacity(t_max as usize + 1);
    out.push(walk.state().clone());
    for _ in 0..t_max {
        walk.step();
        out.push(walk.state().clone());
    }
    Ok(out)
}

/// Signed minimal periodic displacement of `x` from `origin`, in `(−L/2, L/2]`.
pub fn displacement(x: usize, origin: usize, sites: usize) -> i64 {
    let d = ((x + sites - origin % sites) % sites) as i64;
    let half = (sites / 2) as i64;
    if d > half {
        d - sites as i64
    } else {
        d
    }
}

/// Mass within `L/10` sites of the antipode of `origin`.
pub fn antipode_mass(psi: &Wavefunction, origin: usize) -> f64 {
    let l = psi.sites();
    let band = (l / 10) as i64;
    let half = (l / 2) as i64;
    psi.site_probabilities()
        .iter()
        .enumerate()
        .filter(|(x, _)| half - displacement(*x, origin, l).abs() <= band)
        .map(|(_, p)| p)
        .sum()
}

/// `⟨x^m⟩` with `x` measured as the periodic displacement from `origin`.
/// Logs a warning when the wrap-around region carries noticeable mass.
pub fn position_moments(psi: &Wavefunction, m: u32, origin: usize) -> f64 {
    let l = psi.sites();
    let mass = antipode_mass(psi, origin);
    if mass > ANTIPODE_WARN_MASS {
        log::warn!("t={}: mass {mass:.2e} within L/10 of the antipode; moments are wrap-contaminated", psi.t);
    }
    psi.site_probabilities().iter().enumerate().map(|(x, p)| (displacement(x, origin, l) as f64).powi(m as i32) * p).sum()
}

fn raw_moments(psi: &Wavefunction, origin: usize) -> [f64; 4] {
    let l = psi.sites();
    let mut out = [0.0; 4];
    for (x, p) in psi.site_probabilities().iter().enumerate() {
        let d = displacement(x, origin, l) as f64;
        let mut pw = 1.0;
        for o in out.iter_mut() {
            pw *= d;
            *o += pw * p;
        }
    }
    out
}

/// Raw moments `⟨x⟩..⟨x⁴⟩` and variance along a single-photon run.
#[derive(Debug, Clone, Default)]
pub struct MomentSeries {
    pub times: Vec<u64>,
    /// `moments[i][m−1] = ⟨x^m⟩` at `times[i]`.
    pub moments: Vec<[f64; 4]>,
    pub variance: Vec<f64>,
    /// Largest antipode mass seen over the run.
    pub max_antipode_mass: f64,
}

impl MomentSeries {
    pub fn moment(&self, i: usize, m: u32) -> f64 {
        self.moments[i][(m - 1) as usize]
    }

    /// `⟨(x − μ)⁴⟩ / σ⁴`.
    pub fn kurtosis(&self, i: usize) -> f64 {
        let [m1, m2, m3, m4] = self.moments[i];
        let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
        c4 / (self.variance[i] * self.variance[i])
    }

    fn window(&self, window: &RangeInclusive<u64>) -> (Vec<f64>, Vec<f64>) {
        self.times.iter().zip(&self.variance).filter(|(t, _)| window.contains(t)).map(|(&t, &v)| (t as f64, v)).unzip()
    }
}

/// Evolves from `x0` and records moments about `x0` at each listed time.
pub fn moment_series(p: &WalkParams, x0: usize, sigma_in: [C64; 2], times: &[u64]) -> Result<MomentSeries> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("moment times must be strictly increasing".into()));
    }
    let mut walk = SinglePhotonWalk::new(p, x0, sigma_in)?;
    let mut s = MomentSeries::default();
    for &t in times {
        while walk.state().t < t {
            walk.step();
        }
        let psi = walk.state();
        let m = raw_moments(psi, x0);
        s.max_antipode_mass = s.max_antipode_mass.max(antipode_mass(psi, x0));
        s.times.push(t);
        s.variance.push(m[1] - m[0] * m[0]);
        s.moments.push(m);
    }
    if s.max_antipode_mass > ANTIPODE_WARN_MASS {
        log::warn!("antipode mass reached {:.2e}; enlarge the lattice", s.max_antipode_mass);
    }
    Ok(s)
}

/// Moments of a centred Gaussian with variance `Dt/2`.
pub fn gaussian_moment_prediction(d: f64, t: f64, m: u32) -> Result<f64> {
    if !(d > 0.0) || !(t >= 1.0) {
        return Err(Error::Domain(format!("need D > 0 and t >= 1, got D={d}, t={t}")));
    }
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let var = d * t / 2.0;
    let double_fact: f64 = (1..m).step_by(2).map(|k| k as f64).product();
    Ok(double_fact * var.powi((m / 2) as i32))
}

/// Ordinary least squares `y = a + b x`; returns `(b, a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
}

/// `variance ≈ prefactor · t^exponent` by least squares in log-log.
pub fn fit_power_law(series: &MomentSeries, window: RangeInclusive<u64>) -> Result<PowerLawFit> {
    let (t, v) = series.window(&window);
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_FIT_POINTS, got: t.len() });
    }
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("power-law fit needs positive variances".into()));
    }
    let lt: Vec<f64> = t.iter().map(|x| x.ln()).collect();
    let lv: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let (exponent, intercept) = linear_fit(&lt, &lv);
    Ok(PowerLawFit { exponent, prefactor: intercept.exp() })
}

/// One-parameter fit `variance ≈ a · t^power` through the origin.
pub fn fit_scaled_power(series: &MomentSeries, window: RangeInclusive<u64>, power: i32) -> Result<f64> {
    let (t, v) = series.window(&window);
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_FIT_POINTS, got: t.len() });
    }
    let num: f64 = t.iter().zip(&v).map(|(t, v)| v * t.powi(power)).sum();
    let den: f64 = t.iter().map(|t| t.powi(2 * power)).sum();
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    FirstExceeds,
    FirstBelow,
}

impl Direction {
    pub fn holds(self, distance: f64, delta: f64) -> bool {
        match self {
            Direction::FirstExceeds => distance > delta,
            Direction::FirstBelow => distance < delta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::FirstExceeds => "first_exceeds",
            Direction::FirstBelow => "first_below",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub delta: f64,
    pub times: Vec<u64>,
    pub distances: Vec<f64>,
    pub threshold_t: Option<u64>,
    pub direction: Direction,
}

/// Smallest listed time at which the distance satisfies the predicate.
pub fn detect_threshold(times: Vec<u64>, distances: Vec<f64>, delta: f64, direction: Direction) -> Result<ThresholdResult> {
    if times.len() != distances.len() {
        return Err(Error::Domain(format!("{} times but {} distances", times.len(), distances.len())));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("threshold times must be strictly increasing".into()));
    }
    let threshold_t = times.iter().zip(&distances).find(|(_, &d)| direction.holds(d, delta)).map(|(&t, _)| t);
    Ok(ThresholdResult { delta, times, distances, threshold_t, direction })
}

/// Which constant sits under `δ` in the logarithm of the short-time bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundConstant {
    /// `δ/4n`, from the full derivation.
    #[default]
    FourN,
    /// `δ/8n`, as quoted in the condensed statement.
    EightN,
}

impl BoundConstant {
    fn factor(self) -> f64 {
        match self {
            BoundConstant::FourN => 4.0,
            BoundConstant::EightN => 8.0,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Lower bound `L² / (2 D n² |ln(δ/cn)|)` on the short-time threshold in the PT-broken phase.
pub fn bound_t_dis_broken(d: f64, n: usize, sites: usize, delta: f64, constant: BoundConstant) -> Result<f64> {
    check_positive("D", d)?;
    check_positive("delta", delta)?;
    let cn = constant.factor() * n as f64;
    if n == 0 || sites == 0 || delta >= cn {
        return Err(Error::Domain(format!("need n, L > 0 and delta < {cn}")));
    }
    let l = sites as f64;
    Ok(l * l / (2.0 * d * (n * n) as f64 * (delta / cn).ln().abs()))
}

/// Upper bound `2 L² |ln(δ/8n)| / (D (2π)²)` on the long-time threshold.
pub fn bound_t_max(d: f64, n: usize, sites: usize, delta: f64) -> Result<f64> {
    check_positive("D", d)?;
    check_positive("delta", delta)?;
    let cn = 8.0 * n as f64;
    if n == 0 || sites == 0 || delta >= cn {
        return Err(Error::Domain(format!("need n, L > 0 and delta < {cn}")));
    }
    let l = sites as f64;
    Ok(2.0 * l * l * (delta / cn).ln().abs() / (d * 4.0 * PI * PI))
}

/// Number of momenta whose weight `exp(−D k² t / 2)` is still above `δ̃`:
/// `r = max(1, ⌊2k̃L/2π⌋)` with `k̃ = √(2|ln δ̃|/(D t))`, capped at the `L`
/// modes of one parity sector.
pub fn rank_cutoff(p: &WalkParams, t: u64, delta_tilde: f64) -> Result<usize> {
    if pt_phase(p) == PtPhase::Symmetric {
        return Err(Error::PtSymmetricPhase);
    }
    if !(delta_tilde > 0.0 && delta_tilde < 1.0) || t == 0 {
        return Err(Error::Domain(format!("need t >= 1 and delta_tilde in (0, 1), got t={t}, {delta_tilde}")));
    }
    let d = diffusion_constant(p)?;
    let k = (2.0 * delta_tilde.ln().abs() / (d * t as f64)).sqrt();
    let r = (2.0 * k * p.sites as f64 / (2.0 * PI)).floor() as usize;
    Ok(r.clamp(1, p.sites))
}

/// Time after which the rank drops to `r_c`: `2|ln δ̃| (L/r_c)² / (D π²)`.
pub fn t_rank_estimate(d: f64, sites: usize, delta_tilde: f64, r_c: usize) -> Result<f64> {
    check_positive("D", d)?;
    if !(delta_tilde > 0.0 && delta_tilde < 1.0) || r_c == 0 {
        return Err(Error::Domain("need delta_tilde in (0, 1) and r_c >= 1".into()));
    }
    let ratio = sites as f64 / r_c as f64;
    Ok(2.0 * delta_tilde.ln().abs() * ratio * ratio / (d * PI * PI))
}
