//! Numbers carried as a mantissa times `exp(log_mag)`.
//!
//! Propagator entries grow like `|lambda_max|^t` in the PT-broken phase and
//! permanents like `|lambda_max|^(n t)`, so neither fits in an `f64` at the
//! time scales of interest. Rescaling is done by powers of two, which is exact.

use num_complex::Complex64;

/// Binary exponent `e` with `x = m * 2^e`, `|m|` in `[0.5, 1)`. Zero and
/// non-finite inputs give 0.
pub fn binary_exponent(x: f64) -> i32 {
    if x == 0.0 || !x.is_finite() {
        return 0;
    }
    let bits = x.abs().to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // subnormal
        let lz = (bits << 12).leading_zeros() as i32;
        -1022 - lz
    } else {
        biased - 1022
    }
}

/// `2^e` as an `f64`, valid over the whole normal and subnormal range.
pub fn pow2(e: i32) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        2f64.powi(e)
    }
}

/// A complex number `mantissa * exp(log_mag)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledComplex {
    pub mantissa: Complex64,
    pub log_mag: f64,
}

impl ScaledComplex {
    pub fn new(mantissa: Complex64, log_mag: f64) -> Self {
        Self { mantissa, log_mag }
    }

    pub fn from_value(value: Complex64) -> Self {
        Self::new(value, 0.0)
    }

    pub fn zero() -> Self {
        Self::new(Complex64::new(0.0, 0.0), 0.0)
    }

    /// The plain value; overflows to infinity or underflows to zero when out of range.
    pub fn value(&self) -> Complex64 {
        self.mantissa * self.log_mag.exp()
    }

    /// `ln |z|`, `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.log_mag
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.norm() == 0.0
    }

    /// Relative difference `|a - b| / max(|a|, |b|)`, computed without leaving
    /// the scaled representation.
    pub fn relative_difference(&self, other: &ScaledComplex) -> f64 {
        if self.is_zero() && other.is_zero() {
            return 0.0;
        }
        let reference = self.ln_abs().max(other.ln_abs());
        let a = self.mantissa * (self.log_mag - reference).exp();
        let b = other.mantissa * (other.log_mag - reference).exp();
        (a - b).norm()
    }
}

impl std::ops::Mul for ScaledComplex {
    type Output = ScaledComplex;
    fn mul(self, rhs: ScaledComplex) -> ScaledComplex {
        ScaledComplex::new(self.mantissa * rhs.mantissa, self.log_mag + rhs.log_mag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_exponent_matches_frexp_convention() {
        assert_eq!(binary_exponent(1.0), 1);
        assert_eq!(binary_exponent(0.5), 0);
        assert_eq!(binary_exponent(0.75), 0);
        assert_eq!(binary_exponent(3.0), 2);
        assert_eq!(binary_exponent(-3.0), 2);
        let tiny = f64::MIN_POSITIVE / 8.0;
        let e = binary_exponent(tiny);
        let m = tiny / pow2(e);
        assert!((0.5..1.0).contains(&m), "mantissa {m}");
    }

    #[test]
    fn pow2_is_exact() {
        for e in [-1074, -1022, -5, 0, 7, 1023] {
            assert_eq!(pow2(e), 2f64.powi(e));
        }
    }

    #[test]
    fn relative_difference_survives_huge_magnitudes() {
        let a = ScaledComplex::new(Complex64::new(1.0, 0.0), 5000.0);
        let b = ScaledComplex::new(Complex64::new(0.5, 0.0), 5000.0 + std::f64::consts::LN_2);
        assert!(a.relative_difference(&b) < 1e-12);
        assert!(a.value().re.is_infinite());
    }
}
