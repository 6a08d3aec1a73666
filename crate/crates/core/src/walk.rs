//! Single-photon operators of the two-polarization walk and overflow-safe
//! propagator evolution.
//!
//! Modes are indexed `j = 2x + pol` with `pol = 0` for h and `1` for v, so each
//! site owns a contiguous 2-block. One step is
//! `V = C(θ₁/2) S G(γ) C(θ₂) G(−γ) S C(θ₁/2)` where `S` moves h one site left
//! and v one site right with periodic wrap.

use std::borrow::Cow;
use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scaled::{binary_exponent, pow2};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub theta1: f64,
    pub theta2: f64,
    pub gamma: f64,
    pub sites: usize,
}

impl WalkParams {
    pub fn new(theta1: f64, theta2: f64, gamma: f64, sites: usize) -> Result<Self> {
        let p = Self { theta1, theta2, gamma, sites };
        p.validate()?;
        Ok(p)
    }

    /// Same as [`WalkParams::new`] with the gain given as `e^γ`.
    pub fn with_exp_gamma(theta1: f64, theta2: f64, exp_gamma: f64, sites: usize) -> Result<Self> {
        if !(exp_gamma.is_finite() && exp_gamma >= 1.0) {
            return Err(Error::InvalidParams(format!("e^gamma must be finite and >= 1, got {exp_gamma}")));
        }
        Self::new(theta1, theta2, exp_gamma.ln(), sites)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta1.is_finite() || !self.theta2.is_finite() {
            return Err(Error::InvalidParams("coin angles must be finite".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidParams(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.sites < 4 || self.sites % 2 != 0 {
            return Err(Error::InvalidParams(format!("sites must be even and >= 4, got {}", self.sites)));
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        2 * self.sites
    }

    pub fn exp_gamma(&self) -> f64 {
        self.gamma.exp()
    }

    pub fn with_sites(&self, sites: usize) -> Result<Self> {
        Self::new(self.theta1, self.theta2, self.gamma, sites)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.theta1, self.theta2, gamma, self.sites)
    }

    /// Grid momentum `2πm/L`.
    pub fn momentum(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.sites as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn offset(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub site: usize,
    pub pol: Polarization,
}

impl Mode {
    pub fn new(site: usize, pol: Polarization) -> Self {
        Self { site, pol }
    }

    pub fn index(&self) -> usize {
        2 * self.site + self.pol.offset()
    }

    pub fn from_index(j: usize) -> Self {
        let pol = if j % 2 == 0 { Polarization::H } else { Polarization::V };
        Self { site: j / 2, pol }
    }
}

/// Site-parity sublattice. The two shifts per step move every photon by an
/// even number of sites, so the sublattices never mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_site(x: usize) -> Self {
        if x % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn of_mode(j: usize) -> Self {
        Self::of_site(j / 2)
    }

    pub fn first_site(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    /// Mode indices on this sublattice, ascending.
    pub fn modes(self, sites: usize) -> Vec<usize> {
        (self.first_site()..sites).step_by(2).flat_map(|x| [2 * x, 2 * x + 1]).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// Rotation `e^{−iθσ₂}`.
pub fn build_coin(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `e^{γσ₃}`.
pub fn build_gain_loss(gamma: f64) -> Matrix2<f64> {
    Matrix2::new(gamma.exp(), 0.0, 0.0, (-gamma).exp())
}

/// Single-photon map of a partially polarizing beam splitter after
/// postselecting an empty environment: `diag(1, cos ζ)`.
pub fn postselect_ppbs(zeta: f64) -> Result<Matrix2<f64>> {
    let c = zeta.cos();
    // cos(π/2) evaluates to ~6e-17, not 0; treat anything that small as total loss
    if !(c > 1e-12 && c <= 1.0 + 1e-15) {
        return Err(Error::Domain(format!("cos(zeta) must lie in (0, 1], got {c}")));
    }
    Ok(Matrix2::new(1.0, 0.0, 0.0, c.min(1.0)))
}

/// Gain-loss strength realized by a postselected splitter: `γ = −½ ln cos ζ`.
pub fn ppbs_gamma(zeta: f64) -> Result<f64> {
    let m = postselect_ppbs(zeta)?;
    Ok(-0.5 * m[(1, 1)].ln())
}

/// Sparse step operator; applies `V` to a vector in `O(M)`.
#[derive(Debug, Clone)]
pub struct StepOperator {
    sites: usize,
    outer: Matrix2<f64>,
    inner: Matrix2<f64>,
}

#[inline]
fn mul2(m: &Matrix2<f64>, a: C64, b: C64) -> (C64, C64) {
    (a * m[(0, 0)] + b * m[(0, 1)], a * m[(1, 0)] + b * m[(1, 1)])
}

impl StepOperator {
    pub fn new(p: &WalkParams) -> Self {
        let outer = build_coin(p.theta1 / 2.0);
        let inner = build_gain_loss(p.gamma) * build_coin(p.theta2) * build_gain_loss(-p.gamma);
        Self { sites: p.sites, outer, inner }
    }

    pub fn modes(&self) -> usize {
        2 * self.sites
    }

    /// `dst = V src`. `scratch` must have length `M`.
    pub fn apply(&self, src: &[C64], dst: &mut [C64], scratch: &mut [C64]) {
        let l = self.sites;
        debug_assert!(src.len() == 2 * l && dst.len() == 2 * l && scratch.len() == 2 * l);
        // coin then shift: h picks up from the right neighbour, v from the left
        for y in 0..l {
            let r = (y + 1) % l;
            let lft = (y + l - 1) % l;
            let (h, _) = mul2(&self.outer, src[2 * r], src[2 * r + 1]);
            let (_, v) = mul2(&self.outer, src[2 * lft], src[2 * lft + 1]);
            scratch[2 * y] = h;
            scratch[2 * y + 1] = v;
        }
        for y in 0..l {
            let r = (y + 1) % l;
            let lft = (y + l - 1) % l;
            let (h, _) = mul2(&self.inner, scratch[2 * r], scratch[2 * r + 1]);
            let (_, v) = mul2(&self.inner, scratch[2 * lft], scratch[2 * lft + 1]);
            let (a, b) = mul2(&self.outer, h, v);
            dst[2 * y] = a;
            dst[2 * y + 1] = b;
        }
    }
}

/// Dense `M×M` matrix of `V`, built column by column from the sparse operator.
pub fn build_step_operator(p: &WalkParams) -> DMatrix<C64> {
    let op = StepOperator::new(p);
    let m = p.modes();
    let mut v = DMatrix::<C64>::zeros(m, m);
    let mut e = vec![ZERO; m];
    let mut col = vec![ZERO; m];
    let mut scratch = vec![ZERO; m];
    for j in 0..m {
        e[j] = ONE;
        op.apply(&e, &mut col, &mut scratch);
        v.column_mut(j).copy_from_slice(&col);
        e[j] = ZERO;
    }
    v
}

fn to_c(m: &Matrix2<f64>) -> Matrix2<C64> {
    m.map(|x| C64::new(x, 0.0))
}

fn bloch_factors(p: &WalkParams, k: f64) -> (Matrix2<C64>, Matrix2<C64>, Matrix2<C64>, Matrix2<C64>) {
    let c1 = to_c(&build_coin(p.theta1 / 2.0));
    let c2 = to_c(&build_coin(p.theta2));
    let a = C64::new(p.gamma, k);
    let b = C64::new(-p.gamma, k);
    let e1 = Matrix2::new(a.exp(), ZERO, ZERO, (-a).exp());
    let e2 = Matrix2::new(b.exp(), ZERO, ZERO, (-b).exp());
    (c1, e1, c2, e2)
}

/// Bloch matrix `Ṽ(k)` acting on the polarization of the plane wave
/// `Σₓ e^{ikx}|x⟩`.
pub fn bloch_step(p: &WalkParams, k: f64) -> Matrix2<C64> {
    let (c1, e1, c2, e2) = bloch_factors(p, k);
    c1 * e1 * c2 * e2 * c1
}

/// Exact `dṼ/dk`.
pub fn bloch_step_derivative(p: &WalkParams, k: f64) -> Matrix2<C64> {
    let (c1, e1, c2, e2) = bloch_factors(p, k);
    let is3 = Matrix2::new(C64::i(), ZERO, ZERO, -C64::i());
    c1 * (is3 * e1) * c2 * e2 * c1 + c1 * e1 * c2 * (is3 * e2) * c1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMethod {
    RealSpace,
    Momentum,
}

/// `U(t) = e^{log_scale} · matrix`, with `Uᵀ = Vᵗ`.
#[derive(Debug, Clone)]
pub struct ScaledPropagator {
    pub matrix: DMatrix<C64>,
    pub log_scale: f64,
    pub t: u64,
}

impl ScaledPropagator {
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// Same propagator with the scale folded differently: `matrix·c`, `log_scale − ln c`.
    pub fn rescaled(&self, c: f64) -> Self {
        Self { matrix: &self.matrix * C64::new(c, 0.0), log_scale: self.log_scale - c.ln(), t: self.t }
    }
}

/// Divides `data` by the power of two that puts its largest modulus in
/// `[0.5, 1)`, returning the exponent removed.
fn normalize_pow2(data: &mut [C64]) -> i32 {
    let max = data.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 || !max.is_finite() {
        return 0;
    }
    let e = binary_exponent(max);
    let f = pow2(-e);
    for z in data.iter_mut() {
        *z *= f;
    }
    e
}

pub fn evolve_propagator(p: &WalkParams, t: u64, method: EvolutionMethod) -> ScaledPropagator {
    match method {
        EvolutionMethod::RealSpace => evolve_real_space(p, t),
        EvolutionMethod::Momentum => evolve_momentum(p, t),
    }
}

fn evolve_real_space(p: &WalkParams, t: u64) -> ScaledPropagator {
    let m = p.modes();
    let op = StepOperator::new(p);
    // column-major: column j of `r` is Vᵗ e_j, which is row j of U
    let mut r = DMatrix::<C64>::identity(m, m);
    let mut next = DMatrix::<C64>::zeros(m, m);
    let mut log_scale = 0.0;
    for _ in 0..t {
        next.as_mut_slice()
            .par_chunks_mut(m)
            .zip(r.as_slice().par_chunks(m))
            .for_each_init(|| vec![ZERO; m], |scratch, (dst, src)| op.apply(src, dst, scratch));
        std::mem::swap(&mut r, &mut next);
        let e = normalize_pow2(r.as_mut_slice());
        log_scale += e as f64 * LN_2;
    }
    ScaledPropagator { matrix: r.transpose(), log_scale, t }
}

fn evolve_momentum(p: &WalkParams, t: u64) -> ScaledPropagator {
    let l = p.sites;
    let m = p.modes();
    if t == 0 {
        return ScaledPropagator { matrix: DMatrix::identity(m, m), log_scale: 0.0, t };
    }
    // Ṽ(k)ᵗ per grid momentum, each with its own power-of-two exponent
    let powers: Vec<(Matrix2<C64>, i64)> = (0..l)
        .into_par_iter()
        .map(|mm| {
            let vk = bloch_step(p, p.momentum(mm));
            let mut acc = Matrix2::<C64>::identity();
            let mut exp = 0i64;
            for _ in 0..t {
                acc = vk * acc;
                exp += normalize_pow2(acc.as_mut_slice()) as i64;
            }
            (acc, exp)
        })
        .collect();
    let e_max = powers.iter().map(|(_, e)| *e).max().unwrap_or(0);
    let aligned: Vec<Matrix2<C64>> = powers
        .iter()
        .map(|(a, e)| {
            let shift = (*e - e_max).max(-2000) as i32;
            a * C64::new(pow2(shift), 0.0)
        })
        .collect();
    let twiddle: Vec<C64> = (0..l).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / l as f64)).collect();
    let inv_l = 1.0 / l as f64;
    // B_dx = (1/L) Σ_k e^{ik·dx} Ṽ(k)ᵗ
    let blocks: Vec<Matrix2<C64>> = (0..l)
        .into_par_iter()
        .map(|dx| {
            let mut b = Matrix2::<C64>::zeros();
            for (mm, a) in aligned.iter().enumerate() {
                b += a * twiddle[(mm * dx) % l];
            }
            b * C64::new(inv_l, 0.0)
        })
        .collect();
    // Vᵗ[(x',σ'),(x,σ)] = B_{x'−x}[σ'][σ]; U is its transpose
    let mut u = DMatrix::<C64>::zeros(m, m);
    for x in 0..l {
        for xp in 0..l {
            let b = &blocks[(xp + l - x) % l];
            for s in 0..2 {
                for sp in 0..2 {
                    u[(2 * x + s, 2 * xp + sp)] = b[(sp, s)];
                }
            }
        }
    }
    let e = normalize_pow2(u.as_mut_slice());
    ScaledPropagator { matrix: u, log_scale: (e_max + e as i64) as f64 * LN_2, t }
}

/// Read access to the rows `U[input][·]` of a scaled propagator.
pub trait Amplitudes {
    fn modes(&self) -> usize;
    /// Natural-log scale shared by every row.
    fn log_scale(&self) -> f64;
    fn input_row(&self, input: usize) -> Result<Cow<'_, [C64]>>;
}

impl Amplitudes for ScaledPropagator {
    fn modes(&self) -> usize {
        self.matrix.nrows()
    }

    fn log_scale(&self) -> f64 {
        self.log_scale
    }

    fn input_row(&self, input: usize) -> Result<Cow<'_, [C64]>> {
        let m = self.matrix.nrows();
        if input >= m {
            return Err(Error::ModeOutOfRange { mode: input, modes: m });
        }
        Ok(Cow::Owned(self.matrix.row(input).iter().copied().collect()))
    }
}

/// Only the rows of `U(t)` that belong to a fixed set of input modes,
/// advanced one step at a time. Each row is the single-photon evolution of
/// its input mode, so a step costs `O(n·M)` instead of `O(M²)`.
#[derive(Debug, Clone)]
pub struct PropagatorRows {
    op: StepOperator,
    inputs: Vec<usize>,
    rows: Vec<Vec<C64>>,
    log_scale: f64,
    t: u64,
}

impl PropagatorRows {
    pub fn new(p: &WalkParams, inputs: &[usize]) -> Result<Self> {
        let m = p.modes();
        let mut uniq: Vec<usize> = inputs.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let mut rows = Vec::with_capacity(uniq.len());
        for &j in &uniq {
            if j >= m {
                return Err(Error::ModeOutOfRange { mode: j, modes: m });
            }
            let mut r = vec![ZERO; m];
            r[j] = ONE;
            rows.push(r);
        }
        Ok(Self { op: StepOperator::new(p), inputs: uniq, rows, log_scale: 0.0, t: 0 })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self) {
        let m = self.op.modes();
        let mut scratch = vec![ZERO; m];
        let mut out = vec![ZERO; m];
        for r in self.rows.iter_mut() {
            self.op.apply(r, &mut out, &mut scratch);
            std::mem::swap(r, &mut out);
        }
        let max = self.rows.iter().flatten().fold(0.0f64, |a, z| a.max(z.norm()));
        if max > 0.0 && max.is_finite() {
            let e = binary_exponent(max);
            let f = pow2(-e);
            for z in self.rows.iter_mut().flatten() {
                *z *= f;
            }
            self.log_scale += e as f64 * LN_2;
        }
        self.t += 1;
    }

    /// Steps forward to time `t`; a no-op if already there. Going back is not possible.
    pub fn advance_to(&mut self, t: u64) -> Result<()> {
        if t < self.t {
            return Err(Error::Domain(format!("cannot rewind propagator rows from t={} to t={t}", self.t)));
        }
        while self.t < t {
            self.step();
        }
        Ok(())
    }
}

impl Amplitudes for PropagatorRows {
    fn modes(&self) -> usize {
        self.op.modes()
    }

    fn log_scale(&self) -> f64 {
        self.log_scale
    }

    fn input_row(&self, input: usize) -> Result<Cow<'_, [C64]>> {
        match self.inputs.binary_search(&input) {
            Ok(i) => Ok(Cow::Borrowed(&self.rows[i])),
            Err(_) => Err(Error::MissingInputRow(input)),
        }
    }
}
