//! Multisets of size `n` over `[0, k)`, stored as ascending tuples and ranked
//! in colexicographic order through the stars-and-bars bijection
//! `c_i = a_i + i`, which makes the tuple strictly increasing.

/// `C(n, k)` in `u128`; `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Number of multisets of size `n` over `k` items.
pub fn multiset_count(k: usize, n: usize) -> Option<u128> {
    if k == 0 {
        return Some(if n == 0 { 1 } else { 0 });
    }
    binomial((k + n - 1) as u64, n as u64)
}

/// Colex rank of an ascending tuple.
pub fn multiset_rank(tuple: &[usize]) -> u128 {
    tuple.iter().enumerate().map(|(i, &a)| binomial((a + i) as u64, (i + 1) as u64).unwrap_or(u128::MAX)).sum()
}

/// Inverse of [`multiset_rank`] for tuples of length `out.len()` over `[0, k)`.
pub fn multiset_unrank(mut rank: u128, k: usize, out: &mut [usize]) {
    let n = out.len();
    for i in (0..n).rev() {
        // largest c in [i, k - 1 + i] with C(c, i + 1) <= rank
        let (mut lo, mut hi) = (i, k - 1 + i);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if binomial(mid as u64, (i + 1) as u64).unwrap_or(u128::MAX) <= rank {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        rank -= binomial(lo as u64, (i + 1) as u64).unwrap_or(0);
        out[i] = lo - i;
    }
}

/// Advances an ascending tuple over `[0, k)` to its colex successor.
/// Returns `false` after the last tuple.
pub fn multiset_next(tuple: &mut [usize], k: usize) -> bool {
    let n = tuple.len();
    for i in 0..n {
        let bound = if i + 1 < n { tuple[i + 1] } else { k - 1 };
        if tuple[i] < bound {
            tuple[i] += 1;
            for a in tuple[..i].iter_mut() {
                *a = 0;
            }
            return true;
        }
    }
    false
}

/// `ln(m!)` for small `m`.
pub fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

pub fn factorial(m: usize) -> f64 {
    (2..=m).map(|i| i as f64).product()
}
