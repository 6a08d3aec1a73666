//! One driver per experiment kind. Drivers only compute; writing happens
//! after every sweep point has succeeded.

use std::collections::BTreeMap;

use nubs::analytics::{
    bound_t_dis_broken, bound_t_max, fit_power_law, fit_scaled_power, geometric_grid, loglog_slope, moment_series, rank_cutoff,
    scan_threshold, sector_block, truncated_distribution, Comparison, Direction, DistanceSample, DistanceTracker, ScanOptions,
    MIN_FIT_POINTS,
};
use nubs::fock::{l1_distance, Distribution, Enumeration, FockConfig};
use nubs::permanent::numerical_rank;
use nubs::spectral::{
    ballistic_coefficient, diffusion_constant, full_spectrum, pt_phase, pt_threshold_gamma, spectral_gap, PtPhase,
};
use nubs::walk::{evolve_propagator, EvolutionMethod, Parity, WalkParams};
use rayon::prelude::*;
use toml::Value;

use crate::config::{Experiment, ExperimentConfig, TimeSpec};
use crate::error::{Context, Result};
use crate::output::Table;

#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub scalars: BTreeMap<String, Value>,
}

#[derive(Debug, Default)]
struct PointOutput {
    tables: Vec<Table>,
    scalars: Vec<(String, Value)>,
}

impl PointOutput {
    fn scalar(&mut self, key: &str, v: impl Into<Value>) {
        self.scalars.push((key.to_string(), v.into()));
    }

    fn time(&mut self, key: &str, t: Option<u64>) {
        match t {
            Some(t) => self.scalar(key, t as i64),
            None => self.scalar(key, "not_reached"),
        }
    }
}

fn fmt(x: f64) -> String {
    x.to_string()
}

fn describe(p: &WalkParams) -> String {
    format!("params: theta1={} theta2={} gamma={} exp_gamma={} sites={}", p.theta1, p.theta2, p.gamma, p.exp_gamma(), p.sites)
}

fn where_(i: usize, p: &WalkParams) -> impl Fn() -> String + '_ {
    move || format!("sweep point {i} ({})", describe(p))
}

fn broken(p: &WalkParams) -> bool {
    pt_phase(p) == PtPhase::Broken
}

/// The dominant distribution exists only in the broken phase and for inputs on
/// one sublattice.
fn with_dominant(p: &WalkParams, inputs: &FockConfig) -> bool {
    broken(p) && inputs.common_parity().is_some()
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().expect("thread pool");
    pool.install(|| {
        let per_point = |f: fn(&ExperimentConfig, usize, &WalkParams) -> Result<PointOutput>| -> Result<Vec<PointOutput>> {
            cfg.points.par_iter().enumerate().map(|(i, p)| f(cfg, i, p)).collect()
        };
        let points = match cfg.experiment {
            Experiment::Spectrum => per_point(spectrum)?,
            Experiment::SinglePhoton => per_point(single_photon)?,
            Experiment::Distributions => per_point(distributions)?,
            Experiment::L1Curve => per_point(l1_curve)?,
            Experiment::Thresholds => per_point(thresholds)?,
            Experiment::RankExperiment => per_point(rank_experiment)?,
            Experiment::Scaling => return scaling(cfg),
        };
        let mut out = RunOutput::default();
        if cfg.experiment == Experiment::Spectrum {
            if let Some(p) = cfg.points.first() {
                if let Ok(g) = pt_threshold_gamma(p.theta1, p.theta2) {
                    out.scalars.insert("exp_gamma_pt".into(), Value::Float(g.exp()));
                }
            }
        }
        for (i, po) in points.into_iter().enumerate() {
            out.tables.extend(po.tables.into_iter().map(|t| t.at_point(i)));
            for (k, v) in po.scalars {
                out.scalars.insert(format!("p{i:03}.{k}"), v);
            }
        }
        Ok(out)
    })
}

fn spectrum(_: &ExperimentConfig, i: usize, p: &WalkParams) -> Result<PointOutput> {
    let spec = full_spectrum(p).context(where_(i, p))?;
    let mut t = Table::new(format!("spectrum_p{i:03}.csv"), &["k", "band", "re_eps", "im_eps", "abs_lambda"]).meta(describe(p));
    for b in &spec.points {
        t.push(vec![fmt(b.k), b.band.name().into(), fmt(b.eps.re), fmt(b.eps.im), fmt(b.lambda.norm())]);
    }
    let mut o = PointOutput { tables: vec![t], ..Default::default() };
    o.scalar("pt_phase", if spec.pt_phase == PtPhase::Broken { "broken" } else { "symmetric" });
    o.scalar("abs_lambda_max", spec.lambda_max.norm());
    if spec.pt_phase == PtPhase::Broken {
        o.scalar("diffusion_constant", diffusion_constant(p).context(where_(i, p))?);
        let gap = spectral_gap(p).context(where_(i, p))?;
        o.scalar("gap_numeric", gap.numeric);
        o.scalar("gap_analytic", gap.analytic);
    }
    Ok(o)
}

fn series_table(name: String, p: &WalkParams, what: &str, times: &[u64], values: &[f64]) -> Table {
    let mut t = Table::new(name, &["t", "value"]).meta(describe(p)).meta(format!("value: {what}"));
    for (x, v) in times.iter().zip(values) {
        t.push(vec![x.to_string(), fmt(*v)]);
    }
    t
}

fn single_photon(cfg: &ExperimentConfig, i: usize, p: &WalkParams) -> Result<PointOutput> {
    let times = cfg.times.times();
    let x0 = cfg.x0(p);
    let s = moment_series(p, x0, cfg.sigma, &times).context(where_(i, p))?;
    let kurt: Vec<f64> = (0..s.times.len()).map(|j| s.kurtosis(j)).collect();
    let mut o = PointOutput::default();
    let origin = format!("origin: site {} (1-based)", x0 + 1);
    o.tables
        .push(series_table(format!("variance_p{i:03}.csv"), p, "position variance", &s.times, &s.variance).meta(origin.clone()));
    o.tables.push(series_table(format!("kurtosis_p{i:03}.csv"), p, "position kurtosis", &s.times, &kurt).meta(origin));
    o.scalar("max_antipode_mass", s.max_antipode_mass);

    let last = *times.last().unwrap();
    let window = cfg.fit_window.clone().unwrap_or(20..=last);
    let in_window = times.iter().filter(|t| window.contains(t)).count();
    if in_window < MIN_FIT_POINTS {
        log::warn!("point {i}: only {in_window} times in fit window {window:?}; skipping fits");
        return Ok(o);
    }
    let fit = fit_power_law(&s, window.clone()).context(where_(i, p))?;
    o.scalar("fit_window_lo", *window.start() as i64);
    o.scalar("fit_window_hi", *window.end() as i64);
    o.scalar("variance_exponent", fit.exponent);
    o.scalar("variance_prefactor", fit.prefactor);
    if broken(p) {
        let d = diffusion_constant(p).context(where_(i, p))?;
        o.scalar("variance_over_t", fit_scaled_power(&s, window, 1).context(where_(i, p))?);
        o.scalar("predicted_variance_over_t", d / 2.0);
    } else {
        o.scalar("variance_over_t2", fit_scaled_power(&s, window, 2).context(where_(i, p))?);
        o.scalar("predicted_variance_over_t2", ballistic_coefficient(p, cfg.sigma).context(where_(i, p))?);
    }
    Ok(o)
}

fn distribution_table(name: String, p: &WalkParams, inputs: &FockConfig, d: &Distribution) -> Table {
    let mut t = Table::new(name, &["config", "prob"])
        .meta(describe(p))
        .meta(format!("inputs: {inputs}"))
        .meta(format!("kind: {}", d.kind.name()))
        .meta(format!("enumeration: {}", d.enumeration.id()))
        .meta("config: mode:count pairs, mode j = 2x + pol with 0-based site x and pol h=0, v=1");
    if let Some(time) = d.t {
        t = t.meta(format!("t: {time}"));
    }
    for (outs, prob) in d.enumeration.iter().zip(&d.probs) {
        t.push(vec![FockConfig::from_photons(&outs).to_string(), fmt(*prob)]);
    }
    t
}

fn distributions(cfg: &ExperimentConfig, i: usize, p: &WalkParams) -> Result<PointOutput> {
    let inputs = cfg.inputs(p);
    let dom = with_dominant(p, &inputs);
    let mut tr = DistanceTracker::new(p, &inputs, dom).context(where_(i, p))?;
    let mut o = PointOutput::default();
    if let Some(d) = tr.dominant() {
        o.tables.push(distribution_table(format!("dist_p{i:03}_dominant.csv"), p, &inputs, d));
    }
    for t in cfg.times.times() {
        let (exact, dis) = tr.distributions(t).context(where_(i, p))?;
        o.scalar(&format!("l1_exact_vs_distinguishable.t{t}"), l1_distance(&exact, &dis).context(where_(i, p))?);
        if let Some(d) = tr.dominant() {
            o.scalar(&format!("l1_exact_vs_dominant.t{t}"), l1_distance(&exact, d).context(where_(i, p))?);
        }
        o.tables.push(distribution_table(format!("dist_p{i:03}_t{t}_exact.csv"), p, &inputs, &exact));
        o.tables.push(distribution_table(format!("dist_p{i:03}_t{t}_distinguishable.csv"), p, &inputs, &dis));
    }
    Ok(o)
}

fn comparisons(dom: bool) -> Vec<Comparison> {
    let mut c = vec![Comparison::ExactVsDistinguishable];
    if dom {
        c.extend([Comparison::ExactVsDominant, Comparison::DistinguishableVsDominant]);
    }
    c
}

fn first(samples: &[DistanceSample], c: Comparison, delta: f64, dir: Direction) -> Option<u64> {
    samples.iter().find(|s| s.get(c).is_ok_and(|d| dir.holds(d, delta))).map(|s| s.t)
}

fn bounds(cfg: &ExperimentConfig, i: usize, p: &WalkParams, n: usize, o: &mut PointOutput) -> Result<()> {
    if broken(p) {
        let d = diffusion_constant(p).context(where_(i, p))?;
        o.scalar("bound_t_dis", bound_t_dis_broken(d, n, p.sites, cfg.delta, cfg.bound_constant).context(where_(i, p))?);
        o.scalar("bound_t_max", bound_t_max(d, n, p.sites, cfg.delta).context(where_(i, p))?);
    }
    Ok(())
}

fn l1_curve(cfg: &ExperimentConfig, i: usize, p: &WalkParams) -> Result<PointOutput> {
    let inputs = cfg.inputs(p);
    let dom = with_dominant(p, &inputs);
    let mut tr = DistanceTracker::new(p, &inputs, dom).context(where_(i, p))?;
    let mut samples = Vec::new();
    for t in cfg.times.times() {
        samples.push(tr.sample(t).context(where_(i, p))?);
    }
    let fired = |s: &[DistanceSample]| {
        first(s, Comparison::ExactVsDistinguishable, cfg.delta, Direction::FirstExceeds).is_some()
            && (!dom || first(s, Comparison::ExactVsDominant, cfg.delta, Direction::FirstBelow).is_some())
    };
    // adaptive extension for geometric grids: double the window until both
    // transitions are bracketed or the cap is hit
    if let TimeSpec::Geom { per_decade, .. } = cfg.times {
        while cfg.extend && !fired(&samples) {
            let last = tr.time();
            if last >= cfg.t_cap {
                log::warn!("point {i}: transitions not bracketed by t={last}");
                break;
            }
            for t in geometric_grid(last + 1, (2 * last).clamp(last + 1, cfg.t_cap), per_decade) {
                samples.push(tr.sample(t).context(where_(i, p))?);
            }
        }
    }
    let times: Vec<u64> = samples.iter().map(|s| s.t).collect();
    let mut o = PointOutput::default();
    for c in comparisons(dom) {
        let v: Vec<f64> = samples.iter().map(|s| s.get(c).expect("available comparison")).collect();
        let t = series_table(format!("l1_p{i:03}_{}.csv", c.name()), p, &format!("L1 distance, {}", c.name()), &times, &v)
            .meta(format!("inputs: {inputs}"))
            .meta(format!("delta: {:e}", cfg.delta));
        o.tables.push(t);
    }
    o.time("t_dis", first(&samples, Comparison::ExactVsDistinguishable, cfg.delta, Direction::FirstExceeds));
    if dom {
        o.time("t_max", first(&samples, Comparison::ExactVsDominant, cfg.delta, Direction::FirstBelow));
        o.time("t_dis_to_max", first(&samples, Comparison::DistinguishableVsDominant, cfg.delta, Direction::FirstBelow));
    }
    bounds(cfg, i, p, inputs.photon_count(), &mut o)?;
    Ok(o)
}

fn scan_options(cfg: &ExperimentConfig) -> ScanOptions {
    let (per_decade, t_max) = match cfg.times {
        TimeSpec::Geom { per_decade, stop, .. } => (per_decade, stop),
        TimeSpec::Lin { stop, .. } => (20, stop),
        TimeSpec::List { ref values } => (20, values.last().copied().unwrap_or(1000)),
    };
    ScanOptions { per_decade, t_max: t_max.max(1), t_cap: cfg.t_cap.max(t_max) }
}

struct Thresholds {
    t_dis: Option<u64>,
    t_max: Option<u64>,
    tables: Vec<Table>,
}

fn scan_point(cfg: &ExperimentConfig, i: usize, p: &WalkParams, tag: &str) -> Result<Thresholds> {
    let inputs = cfg.inputs(p);
    let dom = with_dominant(p, &inputs);
    let tr = DistanceTracker::new(p, &inputs, dom).context(where_(i, p))?;
    let opts = scan_options(cfg);
    let mut jobs = vec![(Comparison::ExactVsDistinguishable, Direction::FirstExceeds, "t_dis")];
    if dom {
        jobs.push((Comparison::ExactVsDominant, Direction::FirstBelow, "t_max"));
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(c, dir, _)| scan_threshold(&tr, c, cfg.delta, dir, opts))
        .collect::<nubs::Result<_>>()
        .context(where_(i, p))?;
    let mut out = Thresholds { t_dis: None, t_max: None, tables: Vec::new() };
    for ((c, dir, name), r) in jobs.iter().zip(results) {
        let t =
            series_table(format!("{tag}_p{i:03}_{name}.csv"), p, &format!("L1 distance, {}", c.name()), &r.times, &r.distances)
                .meta(format!("inputs: {inputs}"))
                .meta(format!("delta: {:e}", cfg.delta))
                .meta(format!("direction: {}", dir.name()))
                .meta(format!("threshold_t: {}", r.threshold_t.map_or("not_reached".into(), |t| t.to_string())));
        out.tables.push(t);
        match *name {
            "t_dis" => out.t_dis = r.threshold_t,
            _ => out.t_max = r.threshold_t,
        }
    }
    Ok(out)
}

fn thresholds(cfg: &ExperimentConfig, i: usize, p: &WalkParams) -> Result<PointOutput> {
    let r = scan_point(cfg, i, p, "threshold")?;
    let mut o = PointOutput { tables: r.tables, ..Default::default() };
    o.time("t_dis", r.t_dis);
    if with_dominant(p, &cfg.inputs(p)) {
        o.time("t_max", r.t_max);
    }
    bounds(cfg, i, p, cfg.inputs(p).photon_count(), &mut o)?;
    Ok(o)
}

/// Thresholds per lattice size, grouped by the remaining parameters, with
/// log-log slopes against `L`.
fn scaling(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let per: Vec<Thresholds> =
        cfg.points.par_iter().enumerate().map(|(i, p)| scan_point(cfg, i, p, "scaling")).collect::<Result<_>>()?;
    let mut groups: Vec<(WalkParams, Vec<usize>)> = Vec::new();
    for (i, p) in cfg.points.iter().enumerate() {
        let key = (p.theta1, p.theta2, p.gamma);
        match groups.iter_mut().find(|(q, _)| (q.theta1, q.theta2, q.gamma) == key) {
            Some((_, v)) => v.push(i),
            None => groups.push((*p, vec![i])),
        }
    }
    let mut out = RunOutput::default();
    for (i, th) in per.iter().enumerate() {
        out.tables.extend(th.tables.iter().cloned().map(|t| t.at_point(i)));
    }
    for (g, (p0, members)) in groups.iter().enumerate() {
        let n = cfg.inputs(p0).photon_count();
        let mut t = Table::new(format!("scaling_g{g:02}.csv"), &["sites", "t_dis", "bound_t_dis", "t_max", "bound_t_max"])
            .meta(format!("params: theta1={} theta2={} gamma={} exp_gamma={}", p0.theta1, p0.theta2, p0.gamma, p0.exp_gamma()))
            .meta(format!("delta: {:e}", cfg.delta))
            .meta("empty cells: threshold not reached or bound undefined in this phase");
        let mut ls = Vec::new();
        let mut tds = Vec::new();
        let mut tms = Vec::new();
        for &i in members {
            let p = &cfg.points[i];
            let (bd, bm) = if broken(p) {
                let d = diffusion_constant(p).context(where_(i, p))?;
                (
                    Some(bound_t_dis_broken(d, n, p.sites, cfg.delta, cfg.bound_constant).context(where_(i, p))?),
                    Some(bound_t_max(d, n, p.sites, cfg.delta).context(where_(i, p))?),
                )
            } else {
                (None, None)
            };
            let cell = |x: Option<u64>| x.map_or(String::new(), |v| v.to_string());
            let fcell = |x: Option<f64>| x.map_or(String::new(), fmt);
            t.push(vec![p.sites.to_string(), cell(per[i].t_dis), fcell(bd), cell(per[i].t_max), fcell(bm)]);
            if let Some(td) = per[i].t_dis {
                ls.push(p.sites as f64);
                tds.push(td as f64);
            }
            if let Some(tm) = per[i].t_max {
                tms.push((p.sites as f64, tm as f64));
            }
        }
        out.tables.push(t);
        out.scalars.insert(format!("g{g:02}.exp_gamma"), Value::Float(p0.exp_gamma()));
        if ls.len() >= 2 {
            out.scalars.insert(format!("g{g:02}.slope_t_dis"), Value::Float(loglog_slope(&ls, &tds)));
        }
        if tms.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = tms.into_iter().unzip();
            out.scalars.insert(format!("g{g:02}.slope_t_max"), Value::Float(loglog_slope(&x, &y)));
        }
    }
    Ok(out)
}

fn rank_experiment(cfg: &ExperimentConfig, i: usize, p: &WalkParams) -> Result<PointOutput> {
    let inputs = cfg.inputs(p);
    let sector = if inputs.photon_count() > 0 {
        inputs.common_parity().ok_or_else(|| {
            crate::error::HarnessError::config("photons", "rank experiments need all photons on one site-parity sublattice")
        })?
    } else {
        Parity::Even
    };
    let mut cols: Vec<String> = ["t", "numerical_rank", "rank_cutoff"].map(String::from).to_vec();
    cols.extend(cfg.ranks.iter().map(|r| format!("l1_rank{r}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(format!("rank_p{i:03}.csv"), &col_refs)
        .meta(describe(p))
        .meta(format!("sector: {} sites", sector.name()))
        .meta(format!("rank_tol: {}", cfg.rank_tol));
    let enumeration =
        if cfg.ranks.is_empty() { None } else { Some(Enumeration::for_inputs(p.sites, &inputs, true).context(where_(i, p))?) };
    let mut tracker = match &enumeration {
        Some(_) => Some(DistanceTracker::new(p, &inputs, false).context(where_(i, p))?),
        None => None,
    };
    for time in cfg.times.times() {
        let u = evolve_propagator(p, time, EvolutionMethod::RealSpace);
        let nr = numerical_rank(&sector_block(&u, sector), cfg.rank_tol).context(where_(i, p))?;
        let rc = rank_cutoff(p, time, cfg.rank_tol).context(where_(i, p))?;
        let mut row = vec![time.to_string(), nr.to_string(), rc.to_string()];
        if let (Some(e), Some(tr)) = (&enumeration, tracker.as_mut()) {
            let (exact, _) = tr.distributions(time).context(where_(i, p))?;
            for &r in &cfg.ranks {
                let d = truncated_distribution(p, &inputs, time, r, e).context(where_(i, p))?;
                row.push(fmt(l1_distance(&d, &exact).context(where_(i, p))?));
            }
        }
        t.push(row);
    }
    Ok(PointOutput { tables: vec![t], scalars: Vec::new() })
}
