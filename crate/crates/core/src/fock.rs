//! Multi-photon configurations and output distributions.
//!
//! Weights are kept as logarithms until the very end: a configuration's
//! weight carries `|λ_max|^{2nt}`, far outside `f64` range at long times.
//! Normalization subtracts the largest log-weight before exponentiating.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::combinatorics::{ln_factorial, multiset_count, multiset_next, multiset_rank, multiset_unrank};
use crate::error::{Error, Result};
use crate::permanent::permanent_rows_scaled;
use crate::spectral::DominantMode;
use crate::walk::{Amplitudes, Parity, C64};

/// Configurations per parallel work unit; also the leaf size of the fixed
/// summation tree.
pub const CHUNK: usize = 4096;
/// Largest enumeration we agree to materialize.
pub const MAX_CONFIGS: u128 = 1 << 32;

/// Occupation pattern: ascending modes with counts ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockConfig {
    occupations: Vec<(usize, u32)>,
}

impl FockConfig {
    /// From a list of photon modes; order and repetition are free.
    pub fn from_photons(photons: &[usize]) -> Self {
        let mut sorted = photons.to_vec();
        sorted.sort_unstable();
        let mut occupations: Vec<(usize, u32)> = Vec::new();
        for j in sorted {
            match occupations.last_mut() {
                Some((m, c)) if *m == j => *c += 1,
                _ => occupations.push((j, 1)),
            }
        }
        Self { occupations }
    }

    pub fn from_occupations(occ: &[(usize, u32)]) -> Result<Self> {
        if occ.iter().any(|&(_, c)| c == 0) {
            return Err(Error::Domain("occupation counts must be at least 1".into()));
        }
        let photons: Vec<usize> = occ.iter().flat_map(|&(j, c)| std::iter::repeat_n(j, c as usize)).collect();
        Ok(Self::from_photons(&photons))
    }

    pub fn occupations(&self) -> &[(usize, u32)] {
        &self.occupations
    }

    pub fn photon_count(&self) -> usize {
        self.occupations.iter().map(|&(_, c)| c as usize).sum()
    }

    /// Photon modes, ascending, repeated by count.
    pub fn photons(&self) -> Vec<usize> {
        self.occupations.iter().flat_map(|&(j, c)| std::iter::repeat_n(j, c as usize)).collect()
    }

    /// `ln Π_j n_j!`.
    pub fn ln_factorials(&self) -> f64 {
        self.occupations.iter().map(|&(_, c)| ln_factorial(c as usize)).sum()
    }

    pub fn max_mode(&self) -> Option<usize> {
        self.occupations.last().map(|&(j, _)| j)
    }

    /// Shared site parity of all photons, if there is one.
    pub fn common_parity(&self) -> Option<Parity> {
        let first = Parity::of_mode(self.occupations.first()?.0);
        self.occupations.iter().all(|&(j, _)| Parity::of_mode(j) == first).then_some(first)
    }

    /// Parses the `mode:count;mode:count` form written by `Display`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut occ = Vec::new();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (m, c) = part.split_once(':').ok_or_else(|| Error::Domain(format!("bad occupation '{part}'")))?;
            let m = m.trim().parse().map_err(|_| Error::Domain(format!("bad mode '{m}'")))?;
            let c = c.trim().parse().map_err(|_| Error::Domain(format!("bad count '{c}'")))?;
            occ.push((m, c));
        }
        Self::from_occupations(&occ)
    }
}

impl fmt::Display for FockConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (j, c)) in self.occupations.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{j}:{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSet {
    All,
    Sector(Parity),
}

/// All `n`-photon configurations over a set of modes, in colex order of the
/// ascending photon tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    total_modes: usize,
    photons: usize,
    set: ModeSet,
    modes: Vec<usize>,
    len: u64,
}

impl Enumeration {
    fn build(total_modes: usize, photons: usize, set: ModeSet, modes: Vec<usize>) -> Result<Self> {
        if photons == 0 || modes.is_empty() {
            return Err(Error::Domain("enumeration needs at least one mode and one photon".into()));
        }
        let count = multiset_count(modes.len(), photons)
            .filter(|&c| c <= MAX_CONFIGS)
            .ok_or(Error::EnumerationOverflow { modes: modes.len(), photons })?;
        Ok(Self { total_modes, photons, set, modes, len: count as u64 })
    }

    pub fn full(total_modes: usize, photons: usize) -> Result<Self> {
        Self::build(total_modes, photons, ModeSet::All, (0..total_modes).collect())
    }

    /// Only the modes on one site-parity sublattice of a lattice with `sites` sites.
    pub fn sector(sites: usize, photons: usize, parity: Parity) -> Result<Self> {
        Self::build(2 * sites, photons, ModeSet::Sector(parity), parity.modes(sites))
    }

    /// The enumeration reachable from `inputs`: its parity sector when
    /// `filter` is set and all photons share a parity, the full space otherwise.
    pub fn for_inputs(sites: usize, inputs: &FockConfig, filter: bool) -> Result<Self> {
        match inputs.common_parity() {
            Some(par) if filter => Self::sector(sites, inputs.photon_count(), par),
            _ => Self::full(2 * sites, inputs.photon_count()),
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn total_modes(&self) -> usize {
        self.total_modes
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn mode_set(&self) -> ModeSet {
        self.set
    }

    /// Identifies mode count, photon number, mode subset and ordering; two
    /// distributions are comparable iff their ids match.
    pub fn id(&self) -> String {
        let set = match self.set {
            ModeSet::All => "all".to_string(),
            ModeSet::Sector(p) => format!("{}-sites", p.name()),
        };
        format!("colex/M={}/n={}/{}", self.total_modes, self.photons, set)
    }

    /// Photon modes of configuration `index`, ascending.
    pub fn photons_at(&self, index: u64) -> Vec<usize> {
        let mut t = vec![0usize; self.photons];
        multiset_unrank(index as u128, self.modes.len(), &mut t);
        t.iter().map(|&a| self.modes[a]).collect()
    }

    pub fn config(&self, index: u64) -> FockConfig {
        FockConfig::from_photons(&self.photons_at(index))
    }

    /// Position of `config`, or `None` if it is not in this enumeration.
    pub fn rank(&self, config: &FockConfig) -> Option<u64> {
        if config.photon_count() != self.photons {
            return None;
        }
        let local: Option<Vec<usize>> = config.photons().iter().map(|j| self.modes.binary_search(j).ok()).collect();
        Some(multiset_rank(&local?) as u64)
    }

    /// Streams every configuration as an ascending photon-mode tuple.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let k = self.modes.len();
        let mut t = vec![0usize; self.photons];
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let out = t.iter().map(|&a| self.modes[a]).collect();
            done = !multiset_next(&mut t, k);
            Some(out)
        })
    }

    /// Evaluates `f` on every configuration in order, in parallel over fixed
    /// chunks. `f` receives the ascending photon modes and a per-chunk scratch.
    pub fn map<T, S, I, F>(&self, init: I, f: F) -> Vec<T>
    where
        T: Send + Default + Clone,
        I: Fn() -> S + Sync,
        F: Fn(&[usize], &mut S) -> T + Sync,
    {
        let k = self.modes.len();
        let mut out = vec![T::default(); self.len as usize];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, slice)| {
            let mut t = vec![0usize; self.photons];
            multiset_unrank((ci * CHUNK) as u128, k, &mut t);
            let mut photons = vec![0usize; self.photons];
            let mut scratch = init();
            for v in slice.iter_mut() {
                for (p, &a) in photons.iter_mut().zip(&t) {
                    *p = self.modes[a];
                }
                *v = f(&photons, &mut scratch);
                multiset_next(&mut t, k);
            }
        });
        out
    }
}

/// Sum with a summation tree fixed by the data length alone.
pub fn fixed_sum(xs: &[f64]) -> f64 {
    let partial: Vec<f64> = xs.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    Exact,
    Distinguishable,
    Dominant,
    /// Exact formula applied to a rank-truncated propagator.
    Truncated {
        rank: usize,
    },
}

impl DistributionKind {
    pub fn name(&self) -> String {
        match self {
            DistributionKind::Exact => "exact".into(),
            DistributionKind::Distinguishable => "distinguishable".into(),
            DistributionKind::Dominant => "dominant".into(),
            DistributionKind::Truncated { rank } => format!("truncated-r{rank}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Distribution {
    pub kind: DistributionKind,
    pub t: Option<u64>,
    pub enumeration: Enumeration,
    pub probs: Vec<f64>,
    /// Log of the normalizing sum of unnormalized weights, including the
    /// propagator scale. For a unitary walk this is 0.
    pub norm_log: f64,
}

impl Distribution {
    /// Normalizes log-weights. `offset` is added to `norm_log` only.
    pub fn from_log_weights(
        kind: DistributionKind,
        t: Option<u64>,
        enumeration: Enumeration,
        log_weights: Vec<f64>,
        offset: f64,
    ) -> Result<Self> {
        let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Domain(format!("all {} weights of the {} distribution vanish", log_weights.len(), kind.name())));
        }
        let mut probs: Vec<f64> = log_weights;
        probs.par_iter_mut().for_each(|w| *w = (*w - top).exp());
        let total = fixed_sum(&probs);
        probs.par_iter_mut().for_each(|w| *w /= total);
        Ok(Self { kind, t, enumeration, probs, norm_log: top + total.ln() + offset })
    }

    pub fn total(&self) -> f64 {
        fixed_sum(&self.probs)
    }

    pub fn prob(&self, config: &FockConfig) -> Option<f64> {
        self.enumeration.rank(config).map(|i| self.probs[i as usize])
    }
}

/// `W` together with the log-scale shared by its entries.
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    pub matrix: DMatrix<C64>,
    pub log_scale: f64,
}

/// `W[p][q] = U[In_p][Out_q]` with photons listed in ascending mode order.
pub fn build_w<A: Amplitudes>(u: &A, inputs: &FockConfig, outputs: &FockConfig) -> Result<ScaledMatrix> {
    let (ni, no) = (inputs.photon_count(), outputs.photon_count());
    if ni != no {
        return Err(Error::PhotonNumberMismatch { inputs: ni, outputs: no });
    }
    let m = u.modes();
    let outs = outputs.photons();
    if let Some(&j) = outs.iter().find(|&&j| j >= m) {
        return Err(Error::ModeOutOfRange { mode: j, modes: m });
    }
    let mut w = DMatrix::zeros(ni, ni);
    for (p, inp) in inputs.photons().into_iter().enumerate() {
        let row = u.input_row(inp)?;
        for (q, &o) in outs.iter().enumerate() {
            w[(p, q)] = row[o];
        }
    }
    Ok(ScaledMatrix { matrix: w, log_scale: u.log_scale() })
}

/// Input rows `U[In_p][·]`, one per photon, copied out once per distribution.
fn gather_rows<A: Amplitudes>(u: &A, inputs: &FockConfig) -> Result<Vec<Vec<C64>>> {
    inputs.photons().into_iter().map(|j| u.input_row(j).map(|r| r.into_owned())).collect()
}

fn check_enumeration(inputs: &FockConfig, enumeration: &Enumeration, modes: usize) -> Result<()> {
    if inputs.photon_count() != enumeration.photons() {
        return Err(Error::PhotonNumberMismatch { inputs: inputs.photon_count(), outputs: enumeration.photons() });
    }
    if enumeration.total_modes() != modes {
        return Err(Error::EnumerationMismatch(enumeration.id(), format!("propagator with M={modes}")));
    }
    Ok(())
}

fn ln_out_factorials(photons: &[usize]) -> f64 {
    let mut s = 0.0;
    let mut run = 1usize;
    for i in 1..=photons.len() {
        if i < photons.len() && photons[i] == photons[i - 1] {
            run += 1;
        } else {
            if run > 1 {
                s += ln_factorial(run);
            }
            run = 1;
        }
    }
    s
}

/// Log-weights `ln|Per W|²` (exact) and `ln Per|W|²` (distinguishable), both
/// without factorials.
fn pair_log_weights(rows: &[Vec<C64>], enumeration: &Enumeration, exact: bool, dis: bool) -> Vec<[f64; 2]> {
    let n = rows.len();
    enumeration.map(
        || vec![vec![C64::new(0.0, 0.0); n]; n],
        |outs, buf| {
            let lf = ln_out_factorials(outs);
            let mut r = [f64::NEG_INFINITY; 2];
            if exact {
                for (p, row) in rows.iter().enumerate() {
                    for (q, &o) in outs.iter().enumerate() {
                        buf[p][q] = row[o];
                    }
                }
                if let Ok(per) = permanent_rows_scaled(buf) {
                    r[0] = 2.0 * per.ln_abs() - lf;
                }
            }
            if dis {
                for (p, row) in rows.iter().enumerate() {
                    for (q, &o) in outs.iter().enumerate() {
                        buf[p][q] = C64::new(row[o].norm_sqr(), 0.0);
                    }
                }
                if let Ok(per) = permanent_rows_scaled(buf) {
                    r[1] = per.ln_abs() - lf;
                }
            }
            r
        },
    )
}

/// Indistinguishable-photon distribution `|Per W|² / Π n_in! n_out!`.
pub fn distribution_exact<A: Amplitudes>(
    u: &A,
    t: Option<u64>,
    inputs: &FockConfig,
    enumeration: &Enumeration,
) -> Result<Distribution> {
    Ok(distributions(u, t, inputs, enumeration, true, false)?.0.unwrap())
}

/// Distinguishable-photon distribution `Per|W|² / Π n_in! n_out!`.
pub fn distribution_distinguishable<A: Amplitudes>(
    u: &A,
    t: Option<u64>,
    inputs: &FockConfig,
    enumeration: &Enumeration,
) -> Result<Distribution> {
    Ok(distributions(u, t, inputs, enumeration, false, true)?.1.unwrap())
}

/// Both distributions from a single pass over the enumeration.
pub fn distribution_pair<A: Amplitudes>(
    u: &A,
    t: Option<u64>,
    inputs: &FockConfig,
    enumeration: &Enumeration,
) -> Result<(Distribution, Distribution)> {
    let (a, b) = distributions(u, t, inputs, enumeration, true, true)?;
    Ok((a.unwrap(), b.unwrap()))
}

fn distributions<A: Amplitudes>(
    u: &A,
    t: Option<u64>,
    inputs: &FockConfig,
    enumeration: &Enumeration,
    exact: bool,
    dis: bool,
) -> Result<(Option<Distribution>, Option<Distribution>)> {
    check_enumeration(inputs, enumeration, u.modes())?;
    let rows = gather_rows(u, inputs)?;
    let lw = pair_log_weights(&rows, enumeration, exact, dis);
    // restore the propagator scale and input factorials in the normalization
    let offset = 2.0 * inputs.photon_count() as f64 * u.log_scale() - inputs.ln_factorials();
    let pick = |i: usize, kind| -> Result<Option<Distribution>> {
        let w: Vec<f64> = lw.iter().map(|x| x[i]).collect();
        Distribution::from_log_weights(kind, t, enumeration.clone(), w, offset).map(Some)
    };
    let a = if exact { pick(0, DistributionKind::Exact)? } else { None };
    let b = if dis { pick(1, DistributionKind::Distinguishable)? } else { None };
    Ok((a, b))
}

/// `Π_p |φ_R(Out_p)|² / Π n_out!`: the long-time limit when one mode dominates.
pub fn distribution_dominant(mode: &DominantMode, enumeration: &Enumeration) -> Result<Distribution> {
    distribution_from_vector(&mode.phi_r, enumeration, DistributionKind::Dominant)
}

pub fn distribution_from_vector(phi: &DVector<C64>, enumeration: &Enumeration, kind: DistributionKind) -> Result<Distribution> {
    if phi.len() != enumeration.total_modes() {
        return Err(Error::EnumerationMismatch(enumeration.id(), format!("mode vector of length {}", phi.len())));
    }
    let ln_abs2: Vec<f64> = phi.iter().map(|z| z.norm_sqr().ln()).collect();
    let lw = enumeration.map(|| (), |outs, _| outs.iter().map(|&o| ln_abs2[o]).sum::<f64>() - ln_out_factorials(outs));
    Distribution::from_log_weights(kind, None, enumeration.clone(), lw, 0.0)
}

/// `Σ |P − Q|`.
pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.enumeration != q.enumeration {
        return Err(Error::EnumerationMismatch(p.enumeration.id(), q.enumeration.id()));
    }
    let diffs: Vec<f64> = p.probs.par_iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).collect();
    Ok(fixed_sum(&diffs))
}
