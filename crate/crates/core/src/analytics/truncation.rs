//! Rank-`r` spectral truncation of the propagator on one parity sector.
//!
//! Within a sector, `Vᵗ = Σ λᵢᵗ |φᵢ^R⟩⟨φᵢ^L|` over the `L` sublattice plane
//! waves. Keeping the `r` modes of largest `|λ|` makes every `W` a product
//! `A·B` of an `n×r` and an `r×n` factor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{Distribution, DistributionKind, Enumeration, FockConfig};
use crate::permanent::{permanent_rows_scaled, LinearFormProduct};
use crate::spectral::{modes_by_magnitude, sector_plane_wave, PtPhase, DEGENERACY_REL_TOL};
use crate::walk::{Parity, ScaledPropagator, WalkParams, C64};

/// Rows and columns of `U` on one sublattice.
pub fn sector_block(u: &ScaledPropagator, sector: Parity) -> DMatrix<C64> {
    let modes = sector.modes(u.matrix.nrows() / 2);
    DMatrix::from_fn(modes.len(), modes.len(), |i, j| u.matrix[(modes[i], modes[j])])
}

/// The `r` leading eigenmodes of `V` on a sector, with `λᵢᵗ` relative to `|λ₁|ᵗ`.
#[derive(Debug, Clone)]
pub struct SpectralTruncation {
    pub sector: Parity,
    pub rank: usize,
    pub t: u64,
    /// `ln|λ₁|ᵗ`, the scale divided out of `weights`.
    pub log_scale: f64,
    pub weights: Vec<C64>,
    pub phi_r: Vec<nalgebra::DVector<C64>>,
    pub phi_l: Vec<nalgebra::DVector<C64>>,
}

impl SpectralTruncation {
    pub fn new(p: &WalkParams, sector: Parity, t: u64, rank: usize) -> Result<Self> {
        let pts = modes_by_magnitude(p)?;
        if rank == 0 || rank > pts.len() {
            return Err(Error::Domain(format!("truncation rank must be in [1, {}], got {rank}", pts.len())));
        }
        if rank < pts.len() {
            let (lo, hi) = (pts[rank - 1].lambda.norm(), pts[rank].lambda.norm());
            if hi >= lo * (1.0 - DEGENERACY_REL_TOL) {
                return Err(Error::DegenerateTruncation { rank, lower: lo, upper: hi });
            }
        }
        let top = pts[0].lambda.norm().ln();
        let tf = t as f64;
        let mut weights = Vec::with_capacity(rank);
        let mut phi_r = Vec::with_capacity(rank);
        let mut phi_l = Vec::with_capacity(rank);
        for pt in &pts[..rank] {
            weights.push((pt.lambda.ln() * tf - top * tf).exp());
            let (r, l) = sector_plane_wave(p, pt, sector);
            phi_r.push(r);
            phi_l.push(l);
        }
        Ok(Self { sector, rank, t, log_scale: top * tf, weights, phi_r, phi_l })
    }

    /// `A[p][i] = φᵢ^L(In_p) λᵢᵗ`.
    pub fn left_factor(&self, inputs: &[usize]) -> DMatrix<C64> {
        DMatrix::from_fn(inputs.len(), self.rank, |p, i| self.phi_l[i][inputs[p]] * self.weights[i])
    }

    /// Truncated `U` on all modes; mainly for checks.
    pub fn propagator(&self) -> DMatrix<C64> {
        let m = self.phi_r[0].len();
        let mut u = DMatrix::zeros(m, m);
        for i in 0..self.rank {
            u += (&self.phi_l[i] * self.weights[i]) * self.phi_r[i].transpose();
        }
        u
    }
}

/// Exact-formula distribution on the rank-`r` truncated propagator. Uses the
/// low-rank permanent when `r < n`.
pub fn truncated_distribution(
    p: &WalkParams,
    inputs: &FockConfig,
    t: u64,
    rank: usize,
    enumeration: &Enumeration,
) -> Result<Distribution> {
    if crate::spectral::pt_phase(p) == PtPhase::Symmetric {
        return Err(Error::PtSymmetricPhase);
    }
    let sector = inputs
        .common_parity()
        .ok_or_else(|| Error::Domain("spectral truncation needs all input photons on one site-parity sublattice".into()))?;
    if inputs.photon_count() != enumeration.photons() {
        return Err(Error::PhotonNumberMismatch { inputs: inputs.photon_count(), outputs: enumeration.photons() });
    }
    let tr = SpectralTruncation::new(p, sector, t, rank)?;
    let photons = inputs.photons();
    let n = photons.len();
    let a = tr.left_factor(&photons);
    let offset = 2.0 * n as f64 * tr.log_scale - inputs.ln_factorials();
    let ln_fact_out = |outs: &[usize]| FockConfig::from_photons(outs).ln_factorials();
    let lw: Vec<f64> = if rank < n {
        let a_exp = LinearFormProduct::from_rows(&a)?;
        enumeration.map(
            || vec![vec![C64::new(0.0, 0.0); rank]; n],
            |outs, forms| {
                for (q, &o) in outs.iter().enumerate() {
                    for i in 0..rank {
                        forms[q][i] = tr.phi_r[i][o];
                    }
                }
                match LinearFormProduct::new(forms, rank).and_then(|b| a_exp.pair(&b)) {
                    Ok(per) => 2.0 * per.ln_abs() - ln_fact_out(outs),
                    Err(_) => f64::NEG_INFINITY,
                }
            },
        )
    } else {
        enumeration.map(
            || vec![vec![C64::new(0.0, 0.0); n]; n],
            |outs, w| {
                for p in 0..n {
                    for (q, &o) in outs.iter().enumerate() {
                        w[p][q] = (0..rank).map(|i| a[(p, i)] * tr.phi_r[i][o]).sum();
                    }
                }
                match permanent_rows_scaled(w) {
                    Ok(per) => 2.0 * per.ln_abs() - ln_fact_out(outs),
                    Err(_) => f64::NEG_INFINITY,
                }
            },
        )
    };
    Distribution::from_log_weights(DistributionKind::Truncated { rank }, Some(t), enumeration.clone(), lw, offset)
}
