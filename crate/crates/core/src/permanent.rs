//! Matrix permanents: a permutation-sum oracle, Glynn's formula with Gray-code
//! updates, and a polynomial-time expansion for low-rank products `A·B`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::combinatorics::{factorial, multiset_count, multiset_next, multiset_rank};
use crate::error::{Error, Result};
use crate::scaled::{binary_exponent, pow2, ScaledComplex};
use crate::walk::C64;

pub const NAIVE_LIMIT: usize = 9;
pub const EXACT_LIMIT: usize = 30;
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Gray-code terms per parallel chunk. Fixed so the summation tree does not
/// depend on the number of threads.
const CHUNK_TERMS: u64 = 1 << 14;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn check_square(w: &DMatrix<C64>) -> Result<usize> {
    if w.nrows() != w.ncols() {
        return Err(Error::NotSquare { rows: w.nrows(), cols: w.ncols() });
    }
    Ok(w.nrows())
}

/// Sum over all permutations. Only meant as a test oracle.
pub fn permanent_naive(w: &DMatrix<C64>) -> Result<C64> {
    let n = check_square(w)?;
    if n > NAIVE_LIMIT {
        return Err(Error::PermanentTooLarge { n, limit: NAIVE_LIMIT });
    }
    fn rec(w: &DMatrix<C64>, row: usize, used: u32, acc: C64) -> C64 {
        let n = w.nrows();
        if row == n {
            return acc;
        }
        let mut s = ZERO;
        for col in 0..n {
            if used & (1 << col) == 0 {
                s += rec(w, row + 1, used | (1 << col), acc * w[(row, col)]);
            }
        }
        s
    }
    Ok(rec(w, 0, 0, ONE))
}

fn small_permanent(a: &[Vec<C64>]) -> Option<C64> {
    match a.len() {
        0 => Some(ONE),
        1 => Some(a[0][0]),
        2 => Some(a[0][0] * a[1][1] + a[0][1] * a[1][0]),
        3 => Some(
            a[0][0] * (a[1][1] * a[2][2] + a[1][2] * a[2][1])
                + a[0][1] * (a[1][0] * a[2][2] + a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] + a[1][1] * a[2][0]),
        ),
        _ => None,
    }
}

/// Glynn terms for Gray-code indices `g in [start, end)`. Bit `b` of the Gray
/// code set means `δ_{b+1} = −1`; row 0 always has `δ = +1`.
fn glynn_range(rows: &[Vec<C64>], start: u64, end: u64) -> C64 {
    let n = rows.len();
    let gray = start ^ (start >> 1);
    let mut sums: Vec<C64> = (0..n)
        .map(|j| rows.iter().enumerate().map(|(i, r)| if i > 0 && gray & (1 << (i - 1)) != 0 { -r[j] } else { r[j] }).sum())
        .collect();
    let mut sign = if gray.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    let mut total = sums.iter().product::<C64>() * sign;
    let mut g = gray;
    for idx in start + 1..end {
        let bit = idx.trailing_zeros() as usize;
        g ^= 1 << bit;
        let row = &rows[bit + 1];
        if g & (1 << bit) != 0 {
            for (s, a) in sums.iter_mut().zip(row) {
                *s -= a * 2.0;
            }
        } else {
            for (s, a) in sums.iter_mut().zip(row) {
                *s += a * 2.0;
            }
        }
        sign = -sign;
        total += sums.iter().product::<C64>() * sign;
    }
    total
}

fn pairwise_sum(mut v: Vec<C64>) -> C64 {
    while v.len() > 1 {
        v = v.chunks(2).map(|c| c.iter().sum()).collect();
    }
    v.first().copied().unwrap_or(ZERO)
}

fn glynn(rows: &[Vec<C64>]) -> C64 {
    if let Some(p) = small_permanent(rows) {
        return p;
    }
    let n = rows.len();
    let terms = 1u64 << (n - 1);
    let total = if terms <= CHUNK_TERMS {
        glynn_range(rows, 0, terms)
    } else {
        let chunks = terms / CHUNK_TERMS;
        let parts: Vec<C64> =
            (0..chunks).into_par_iter().map(|c| glynn_range(rows, c * CHUNK_TERMS, (c + 1) * CHUNK_TERMS)).collect();
        pairwise_sum(parts)
    };
    total / terms as f64
}

fn rows_of(w: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..w.nrows()).map(|i| w.row(i).iter().copied().collect()).collect()
}

/// Glynn's formula, `O(2ⁿ n)`.
pub fn permanent_exact(w: &DMatrix<C64>) -> Result<C64> {
    let n = check_square(w)?;
    if n > EXACT_LIMIT {
        return Err(Error::PermanentTooLarge { n, limit: EXACT_LIMIT });
    }
    Ok(glynn(&rows_of(w)))
}

/// Scales every row, then every column, by a power of two so its largest
/// entry lies in `[0.5, 1)`. Returns the natural log of the removed factor,
/// or `None` if some row or column vanishes (the permanent is then 0).
fn balance_rows_cols(rows: &mut [Vec<C64>]) -> Option<f64> {
    let n = rows.len();
    let mut e_total: i64 = 0;
    for r in rows.iter_mut() {
        let m = r.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if m == 0.0 {
            return None;
        }
        let e = binary_exponent(m);
        let f = pow2(-e);
        r.iter_mut().for_each(|z| *z *= f);
        e_total += e as i64;
    }
    for j in 0..n {
        let m = rows.iter().fold(0.0f64, |a, r| a.max(r[j].norm()));
        if m == 0.0 {
            return None;
        }
        let e = binary_exponent(m);
        let f = pow2(-e);
        rows.iter_mut().for_each(|r| r[j] *= f);
        e_total += e as i64;
    }
    Some(e_total as f64 * std::f64::consts::LN_2)
}

/// Per(w) as mantissa and log-magnitude, immune to over- and underflow of
/// the entries' scale. Rows are slices of length `n`.
pub fn permanent_rows_scaled(rows: &mut [Vec<C64>]) -> Result<ScaledComplex> {
    let n = rows.len();
    if n > EXACT_LIMIT {
        return Err(Error::PermanentTooLarge { n, limit: EXACT_LIMIT });
    }
    if n == 0 {
        return Ok(ScaledComplex::from_value(ONE));
    }
    match balance_rows_cols(rows) {
        None => Ok(ScaledComplex::zero()),
        Some(log_mag) => Ok(ScaledComplex::new(glynn(rows), log_mag)),
    }
}

pub fn permanent_exact_scaled(w: &DMatrix<C64>) -> Result<ScaledComplex> {
    check_square(w)?;
    permanent_rows_scaled(&mut rows_of(w))
}

/// `W = left · right` with `left` of shape `n×r` and `right` of shape `r×n`.
#[derive(Debug, Clone)]
pub struct FactoredMatrix {
    pub left: DMatrix<C64>,
    pub right: DMatrix<C64>,
}

impl FactoredMatrix {
    pub fn new(left: DMatrix<C64>, right: DMatrix<C64>) -> Result<Self> {
        let (n, r) = left.shape();
        if right.nrows() != r || right.ncols() != n {
            return Err(Error::Domain(format!(
                "factor shapes {}x{} and {}x{} do not form a square product",
                n,
                r,
                right.nrows(),
                right.ncols()
            )));
        }
        if r == 0 {
            return Err(Error::Domain("factorization rank must be at least 1".into()));
        }
        Ok(Self { left, right })
    }

    pub fn order(&self) -> usize {
        self.left.nrows()
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        &self.left * &self.right
    }
}

/// Coefficients of `Π_p (Σ_l x_{p,l} z_l)` over the monomials `z^α` with
/// `|α| = n`, indexed by the colex rank of `α` read as a multiset of size `n`
/// over the `r` variables. Kept in scaled form.
#[derive(Debug, Clone)]
pub struct LinearFormProduct {
    degree: usize,
    vars: usize,
    coeffs: Vec<C64>,
    log_mag: f64,
}

impl LinearFormProduct {
    /// `forms[p][l]` is the coefficient of `z_l` in the `p`th factor.
    pub fn new(forms: &[Vec<C64>], vars: usize) -> Result<Self> {
        let n = forms.len();
        let size = multiset_count(vars, n)
            .filter(|&c| c <= u32::MAX as u128)
            .ok_or(Error::EnumerationOverflow { modes: vars, photons: n })? as usize;
        let mut log_mag = 0.0;
        // degree-d coefficients in colex order of multisets of size d
        let mut cur = vec![ONE];
        for (d, form) in forms.iter().enumerate() {
            let m = form.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            if m == 0.0 {
                return Ok(Self { degree: n, vars, coeffs: vec![ZERO; size], log_mag: 0.0 });
            }
            let e = binary_exponent(m);
            let f = pow2(-e);
            log_mag += e as f64 * std::f64::consts::LN_2;
            let next_len = multiset_count(vars, d + 1).unwrap() as usize;
            let mut next = vec![ZERO; next_len];
            let mut tuple = vec![0usize; d];
            let mut ext = vec![0usize; d + 1];
            for &c in cur.iter() {
                if c != ZERO {
                    for (l, &x) in form.iter().enumerate() {
                        if x == ZERO {
                            continue;
                        }
                        // insert l into the ascending tuple
                        let pos = tuple.partition_point(|&a| a <= l);
                        ext[..pos].copy_from_slice(&tuple[..pos]);
                        ext[pos] = l;
                        ext[pos + 1..].copy_from_slice(&tuple[pos..]);
                        next[multiset_rank(&ext) as usize] += c * x * f;
                    }
                }
                if d > 0 {
                    multiset_next(&mut tuple, vars);
                }
            }
            cur = next;
        }
        Ok(Self { degree: n, vars, coeffs: cur, log_mag })
    }

    pub fn from_rows(a: &DMatrix<C64>) -> Result<Self> {
        Self::new(&rows_of(a), a.ncols())
    }

    pub fn from_columns(b: &DMatrix<C64>) -> Result<Self> {
        let forms: Vec<Vec<C64>> = (0..b.ncols()).map(|j| b.column(j).iter().copied().collect()).collect();
        Self::new(&forms, b.nrows())
    }

    /// `Σ_α α! · self(α) · other(α)`, which is `Per(A·B)` when `self` comes
    /// from the rows of `A` and `other` from the columns of `B`.
    pub fn pair(&self, other: &LinearFormProduct) -> Result<ScaledComplex> {
        if self.degree != other.degree || self.vars != other.vars {
            return Err(Error::Domain("linear-form products of different shapes".into()));
        }
        let n = self.degree;
        let mut tuple = vec![0usize; n];
        let mut acc = ZERO;
        let mut idx = 0usize;
        loop {
            let (a, b) = (self.coeffs[idx], other.coeffs[idx]);
            if a != ZERO && b != ZERO {
                acc += a * b * multiplicity_factorial(&tuple);
            }
            idx += 1;
            if !multiset_next(&mut tuple, self.vars) {
                break;
            }
        }
        Ok(ScaledComplex::new(acc, self.log_mag + other.log_mag))
    }
}

/// `α!` for the multiplicities of an ascending tuple.
fn multiplicity_factorial(tuple: &[usize]) -> f64 {
    let mut out = 1.0;
    let mut run = 1usize;
    for i in 1..=tuple.len() {
        if i < tuple.len() && tuple[i] == tuple[i - 1] {
            run += 1;
        } else {
            out *= factorial(run);
            run = 1;
        }
    }
    out
}

/// `Per(A·B)` through the monomial expansion
/// `Per(A·B) = Σ_{|α|=n} α! [z^α]Π_p(Σ_l A_pl z_l) · [z^α]Π_q(Σ_l B_lq z_l)`,
/// with `C(n+r−1, r−1)` terms.
pub fn permanent_low_rank(f: &FactoredMatrix) -> Result<ScaledComplex> {
    let a = LinearFormProduct::from_rows(&f.left)?;
    let b = LinearFormProduct::from_columns(&f.right)?;
    a.pair(&b)
}

/// Number of singular values above `tol` times the largest one.
pub fn numerical_rank(w: &DMatrix<C64>, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("rank tolerance must be positive, got {tol}")));
    }
    let sv = w.clone().singular_values();
    let top = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * top).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> DMatrix<C64> {
        DMatrix::from_fn(r, cols, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
    }

    #[test]
    fn naive_examples() {
        assert_eq!(permanent_naive(&DMatrix::identity(3, 3)).unwrap(), ONE);
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        assert_eq!(permanent_naive(&m).unwrap(), c(10.0));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bs = DMatrix::from_row_slice(2, 2, &[c(r), c(r), c(r), c(-r)]);
        assert!(permanent_naive(&bs).unwrap().norm() < 1e-16);
        assert!(permanent_naive(&DMatrix::identity(10, 10)).is_err());
    }

    #[test]
    fn exact_examples() {
        for (n, f) in [(3usize, 6.0), (5, 120.0), (8, 40320.0)] {
            let ones = DMatrix::from_element(n, n, ONE);
            assert!(rel(permanent_exact(&ones).unwrap(), c(f)) < 1e-12);
        }
        let mut p = DMatrix::<C64>::zeros(6, 6);
        for (i, j) in [(0, 3), (1, 0), (2, 5), (3, 1), (4, 2), (5, 4)] {
            p[(i, j)] = ONE;
        }
        assert!(rel(permanent_exact(&p).unwrap(), ONE) < 1e-14);
        assert!(permanent_exact(&DMatrix::identity(31, 31)).is_err());
        assert!(permanent_exact(&DMatrix::<C64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn exact_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8 {
            for _ in 0..10 {
                let w = random(&mut rng, n, n);
                let e = permanent_exact(&w).unwrap();
                let v = permanent_naive(&w).unwrap();
                assert!(rel(e, v) < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn chunked_glynn_is_consistent() {
        // 2^(n−1) above the chunk size forces the parallel path
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random(&mut rng, 17, 17);
        let a = permanent_exact(&w).unwrap();
        let b = glynn_range(&rows_of(&w), 0, 1 << 16) / (1u64 << 16) as f64;
        assert!(rel(a, b) < 1e-10);
        let ones = DMatrix::from_element(16, 16, ONE);
        assert!(rel(permanent_exact(&ones).unwrap(), c(factorial(16))) < 1e-10);
    }

    #[test]
    fn scaled_survives_extreme_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random(&mut rng, 5, 5);
        let plain = permanent_exact(&w).unwrap();
        let big = &w * c(1e200);
        let s = permanent_exact_scaled(&big).unwrap();
        let expected = plain.norm().ln() + 5.0 * 1e200f64.ln();
        assert!((s.ln_abs() - expected).abs() < 1e-10);
        assert!(rel(s.mantissa / s.mantissa.norm(), plain / plain.norm()) < 1e-10);
        let mut z = w.clone();
        z.row_mut(2).fill(ZERO);
        assert!(permanent_exact_scaled(&z).unwrap().is_zero());
    }

    #[test]
    fn low_rank_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random(&mut rng, 6, 1);
        let v = random(&mut rng, 1, 6);
        let f = FactoredMatrix::new(u.clone(), v.clone()).unwrap();
        let expected = u.iter().product::<C64>() * v.iter().product::<C64>() * 720.0;
        assert!(f.rank() == 1 && f.order() == 6);
        assert!(permanent_low_rank(&f).unwrap().relative_difference(&ScaledComplex::from_value(expected)) < 1e-10);

        let a = random(&mut rng, 8, 2);
        let b = random(&mut rng, 2, 8);
        let f = FactoredMatrix::new(a, b).unwrap();
        let exact = ScaledComplex::from_value(permanent_exact(&f.reconstruct()).unwrap());
        assert!(permanent_low_rank(&f).unwrap().relative_difference(&exact) < 1e-8);

        let w = random(&mut rng, 7, 7);
        let f = FactoredMatrix::new(w.clone(), DMatrix::identity(7, 7)).unwrap();
        let exact = ScaledComplex::from_value(permanent_exact(&w).unwrap());
        assert!(permanent_low_rank(&f).unwrap().relative_difference(&exact) < 1e-8);

        assert!(FactoredMatrix::new(random(&mut rng, 3, 2), random(&mut rng, 2, 4)).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::<C64>::identity(7, 7), DEFAULT_RANK_TOL).unwrap(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let outer = random(&mut rng, 6, 1) * random(&mut rng, 1, 6);
        assert_eq!(numerical_rank(&outer, DEFAULT_RANK_TOL).unwrap(), 1);
        assert_eq!(numerical_rank(&DMatrix::<C64>::zeros(3, 3), 1e-8).unwrap(), 0);
        assert!(numerical_rank(&outer, 0.0).is_err());
    }
}
