//! Band structure of the Bloch operator and the spectral quantities built on
//! it: PT phase, threshold gain, diffusion constant, gap, dominant mode and
//! ballistic coefficient.
//!
//! `Ṽ(k + π) = Ṽ(k)`, because the walk only ever hops by an even number of
//! sites. Every value on the full grid therefore appears twice, once per
//! parity sublattice. Gap and dominant-mode questions are asked on the
//! reduced zone `m ∈ [0, L/2)`, where each sublattice sees each band once.

use nalgebra::{DVector, Matrix2, RowVector2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::walk::{bloch_step, bloch_step_derivative, Parity, WalkParams, C64};

/// `|λ| = 1` tolerance used to call a spectrum PT-symmetric.
pub const PT_UNIT_CIRCLE_TOL: f64 = 1e-8;
/// Relative tolerance under which a competitor of `|λ_max|` counts as degenerate.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Plus,
    Minus,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Plus => "plus",
            Band::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtPhase {
    Symmetric,
    Broken,
}

/// `d(k) = tr Ṽ(k) / 2`.
pub fn band_function_d(p: &WalkParams, k: f64) -> f64 {
    let (s1, c1) = p.theta1.sin_cos();
    let (s2, c2) = p.theta2.sin_cos();
    c1 * c2 * (2.0 * k).cos() - s1 * s2 * (2.0 * p.gamma).cosh()
}

/// Principal branch of `i·log λ`, real part folded into `(−π, π]`.
pub fn quasi_energy(lambda: C64) -> C64 {
    let mut re = -lambda.arg();
    if re <= -std::f64::consts::PI {
        re = std::f64::consts::PI;
    }
    C64::new(re, lambda.norm().ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandEigenvalues {
    pub lambda_plus: C64,
    pub lambda_minus: C64,
    pub eps_plus: C64,
    pub eps_minus: C64,
}

/// `λ± = d ± √(d² − 1)`. Since `d` is real, the principal root of the real
/// number `d² − 1` is continuous in `k` away from exceptional points and the
/// labels never swap.
pub fn band_eigenvalues(p: &WalkParams, k: f64) -> BandEigenvalues {
    let d = band_function_d(p, k);
    let disc = d * d - 1.0;
    let root = if disc >= 0.0 { C64::new(disc.sqrt(), 0.0) } else { C64::new(0.0, (-disc).sqrt()) };
    let lp = d + root;
    let lm = d - root;
    BandEigenvalues { lambda_plus: lp, lambda_minus: lm, eps_plus: quasi_energy(lp), eps_minus: quasi_energy(lm) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub m: usize,
    pub k: f64,
    pub band: Band,
    pub lambda: C64,
    pub eps: C64,
    pub right_vec: Vector2<C64>,
    /// Covector with `left_vec · right_vec = 1`.
    pub left_vec: RowVector2<C64>,
}

/// Right and left eigenvectors of a 2×2 matrix for a known eigenvalue,
/// biorthonormalized. `None` at an exceptional point.
pub fn eigenpair_2x2(a: &Matrix2<C64>, lambda: C64, band: Band) -> Option<(Vector2<C64>, RowVector2<C64>)> {
    let (m00, m01, m10, m11) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let scale = a.camax().max(1e-300);
    let tiny = 1e-13 * scale;
    let pick2 = |x: Vector2<C64>, y: Vector2<C64>| if x.norm() >= y.norm() { x } else { y };
    let mut v = pick2(Vector2::new(m01, lambda - m00), Vector2::new(lambda - m11, m10));
    let mut u = {
        let x = RowVector2::new(m10, lambda - m00);
        let y = RowVector2::new(lambda - m11, m01);
        if x.norm() >= y.norm() {
            x
        } else {
            y
        }
    };
    if v.norm() < tiny || u.norm() < tiny {
        // scalar matrix: any basis diagonalizes it
        let e = match band {
            Band::Plus => 0,
            Band::Minus => 1,
        };
        v = Vector2::zeros();
        v[e] = C64::new(1.0, 0.0);
        u = RowVector2::zeros();
        u[e] = C64::new(1.0, 0.0);
        return Some((v, u));
    }
    v /= C64::new(v.norm(), 0.0);
    let overlap = (u * v)[(0, 0)];
    if overlap.norm() < 1e-10 * u.norm() {
        return None;
    }
    u /= overlap;
    Some((v, u))
}

/// Both band points at grid index `m`.
pub fn band_points(p: &WalkParams, m: usize) -> Result<[BandPoint; 2]> {
    let k = p.momentum(m);
    let ev = band_eigenvalues(p, k);
    let vk = bloch_step(p, k);
    let make = |band: Band, lambda: C64, eps: C64| -> Result<BandPoint> {
        let (right_vec, left_vec) = eigenpair_2x2(&vk, lambda, band).ok_or(Error::ExceptionalPoint { k })?;
        Ok(BandPoint { m, k, band, lambda, eps, right_vec, left_vec })
    };
    Ok([make(Band::Plus, ev.lambda_plus, ev.eps_plus)?, make(Band::Minus, ev.lambda_minus, ev.eps_minus)?])
}

#[derive(Debug, Clone)]
pub struct SpectrumData {
    pub params: WalkParams,
    /// Grid order: `m = 0..L`, plus band before minus band.
    pub points: Vec<BandPoint>,
    pub pt_phase: PtPhase,
    pub lambda_max: C64,
    pub gap_numeric: f64,
}

impl SpectrumData {
    /// Points with `m < L/2`, one copy of each distinct Bloch matrix.
    pub fn reduced_zone(&self) -> &[BandPoint] {
        &self.points[..self.params.sites]
    }
}

fn classify(eigs: impl Iterator<Item = C64>) -> PtPhase {
    let dev = eigs.fold(0.0f64, |m, l| m.max((l.norm() - 1.0).abs()));
    if dev < PT_UNIT_CIRCLE_TOL {
        PtPhase::Symmetric
    } else {
        PtPhase::Broken
    }
}

/// PT phase from the closed-form eigenvalues alone.
pub fn pt_phase(p: &WalkParams) -> PtPhase {
    classify((0..p.sites / 2).flat_map(|m| {
        let e = band_eigenvalues(p, p.momentum(m));
        [e.lambda_plus, e.lambda_minus]
    }))
}

/// Largest minus second-largest `Im ε`, taken over distinct points.
fn gap_from(points: &[BandPoint]) -> f64 {
    let mut im: Vec<f64> = points.iter().map(|b| b.eps.im).collect();
    im.sort_by(|a, b| b.total_cmp(a));
    if im.len() < 2 {
        0.0
    } else {
        (im[0] - im[1]).max(0.0)
    }
}

/// Eigenvalues and biorthonormal eigenvectors on the full grid.
///
/// Fails only if a grid momentum sits exactly on an exceptional point.
pub fn full_spectrum(p: &WalkParams) -> Result<SpectrumData> {
    let per_k: Vec<[BandPoint; 2]> = (0..p.sites).into_par_iter().map(|m| band_points(p, m)).collect::<Result<_>>()?;
    let points: Vec<BandPoint> = per_k.into_iter().flatten().collect();
    let pt_phase = classify(points.iter().map(|b| b.lambda));
    let lambda_max = points.iter().max_by(|a, b| a.lambda.norm().total_cmp(&b.lambda.norm())).map(|b| b.lambda).unwrap();
    let gap_numeric = gap_from(&points[..p.sites]);
    Ok(SpectrumData { params: *p, points, pt_phase, lambda_max, gap_numeric })
}

/// Threshold gain `γ_PT` above which the spectrum leaves the unit circle;
/// 0 when it is broken for any `γ > 0`.
pub fn pt_threshold_gamma(theta1: f64, theta2: f64) -> Result<f64> {
    let s = theta1.sin() * theta2.sin();
    if s.abs() < 1e-14 {
        return Err(Error::Domain("sin(theta1)·sin(theta2) = 0: no finite PT threshold".into()));
    }
    let arg = (1.0 + theta1.cos() * theta2.cos()) / s;
    Ok(if arg >= 1.0 { 0.5 * arg.acosh() } else { 0.0 })
}

/// `D = |4 cos θ₁ cos θ₂ / √(d²(0) − 1)|`, the curvature of `Im ε₋` at `k = 0`.
pub fn diffusion_constant(p: &WalkParams) -> Result<f64> {
    let d0 = band_function_d(p, 0.0);
    let disc = d0 * d0 - 1.0;
    if disc <= 0.0 {
        return Err(Error::PtSymmetricPhase);
    }
    Ok((4.0 * p.theta1.cos() * p.theta2.cos() / disc.sqrt()).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGap {
    pub analytic: f64,
    pub numeric: f64,
}

/// `Δ_analytic = (D/2)(2π/L)²` and `Δ_numeric = Im ε₋(0) − Im ε₋(2π/L)`.
pub fn spectral_gap(p: &WalkParams) -> Result<SpectralGap> {
    let d = diffusion_constant(p)?;
    if pt_phase(p) == PtPhase::Symmetric {
        return Err(Error::PtSymmetricPhase);
    }
    let q = 2.0 * std::f64::consts::PI / p.sites as f64;
    let analytic = 0.5 * d * q * q;
    let numeric = band_eigenvalues(p, 0.0).eps_minus.im - band_eigenvalues(p, q).eps_minus.im;
    Ok(SpectralGap { analytic, numeric })
}

/// The dominant eigenpair of `V` restricted to one parity sublattice.
///
/// `phi_r` and `phi_l` are plane waves on the sublattice sites and vanish on
/// the other one; `phi_l · phi_r = 1`.
#[derive(Debug, Clone)]
pub struct DominantMode {
    pub lambda_max: C64,
    pub k: f64,
    pub band: Band,
    pub sector: Parity,
    pub phi_r: DVector<C64>,
    pub phi_l: DVector<C64>,
    pub gap: f64,
}

/// Lifts a Bloch eigenpair to sublattice plane waves.
pub fn sector_plane_wave(p: &WalkParams, point: &BandPoint, sector: Parity) -> (DVector<C64>, DVector<C64>) {
    let half = (p.sites / 2) as f64;
    let norm = 1.0 / half.sqrt();
    let mut r = DVector::<C64>::zeros(p.modes());
    let mut l = DVector::<C64>::zeros(p.modes());
    for x in (sector.first_site()..p.sites).step_by(2) {
        let ph = C64::from_polar(norm, point.k * x as f64);
        for s in 0..2 {
            r[2 * x + s] = ph * point.right_vec[s];
            l[2 * x + s] = ph.conj() * point.left_vec[s];
        }
    }
    (r, l)
}

/// Reduced-zone band points sorted by `|λ|` descending, ties in grid order.
pub fn modes_by_magnitude(p: &WalkParams) -> Result<Vec<BandPoint>> {
    let spec = full_spectrum(p)?;
    let mut pts = spec.reduced_zone().to_vec();
    pts.sort_by(|a, b| b.lambda.norm().total_cmp(&a.lambda.norm()));
    Ok(pts)
}

pub fn dominant_mode(p: &WalkParams, sector: Parity) -> Result<DominantMode> {
    let spec = full_spectrum(p)?;
    if spec.pt_phase == PtPhase::Symmetric {
        return Err(Error::PtSymmetricPhase);
    }
    let zone = spec.reduced_zone();
    let (imax, best) = zone.iter().enumerate().max_by(|a, b| a.1.lambda.norm().total_cmp(&b.1.lambda.norm())).unwrap();
    let top = best.lambda.norm();
    for (i, pt) in zone.iter().enumerate() {
        if i != imax && pt.lambda.norm() >= top * (1.0 - DEGENERACY_REL_TOL) {
            return Err(Error::DegenerateDominantEigenvalue { k: pt.k, rel_tol: DEGENERACY_REL_TOL });
        }
    }
    let (phi_r, phi_l) = sector_plane_wave(p, best, sector);
    Ok(DominantMode { lambda_max: best.lambda, k: best.k, band: best.band, sector, phi_r, phi_l, gap: spec.gap_numeric })
}

/// Long-time `t²` coefficient of the single-photon variance in the
/// PT-symmetric phase, `Σ (dε/dk)² f / Σ f` with
/// `f = |⟨φ^L|σ⟩|² ⟨φ^R|φ^R⟩`.
///
/// The group velocity uses the exact derivative `dε/dk = i ⟨φ^L|dṼ/dk|φ^R⟩ / λ`.
/// A finite difference of `ε` misbehaves wherever two bands cross, which
/// happens on the grid in the unitary limit.
pub fn ballistic_coefficient(p: &WalkParams, sigma_in: [C64; 2]) -> Result<f64> {
    if pt_phase(p) == PtPhase::Broken {
        return Err(Error::PtBrokenPhase);
    }
    let sigma = Vector2::new(sigma_in[0], sigma_in[1]);
    let terms: Vec<(f64, f64)> = (0..p.sites)
        .into_par_iter()
        .map(|m| -> Result<(f64, f64)> {
            let k = p.momentum(m);
            let dv = bloch_step_derivative(p, k);
            let mut num = 0.0;
            let mut den = 0.0;
            for pt in band_points(p, m)? {
                let dl = (pt.left_vec * dv * pt.right_vec)[(0, 0)];
                let deps = Complex64::i() * dl / pt.lambda;
                let f = (pt.left_vec * sigma)[(0, 0)].norm_sqr() * pt.right_vec.norm_squared();
                num += deps.re * deps.re * f;
                den += f;
            }
            Ok((num, den))
        })
        .collect::<Result<_>>()?;
    let (num, den) = terms.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(num / den)
}
