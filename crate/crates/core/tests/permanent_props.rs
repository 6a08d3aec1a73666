use nalgebra::DMatrix;
use nubs::permanent::{permanent_exact, permanent_low_rank, permanent_naive, FactoredMatrix};
use nubs::scaled::ScaledComplex;
use nubs::C64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<C64>> {
    proptest::collection::vec(complex(), rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn square(max: usize) -> impl Strategy<Value = DMatrix<C64>> {
    (1..=max).prop_flat_map(|n| matrix(n, n))
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn glynn_agrees_with_permutation_sum(w in square(7)) {
        let a = permanent_exact(&w).unwrap();
        let b = permanent_naive(&w).unwrap();
        prop_assert!(rel(a, b) < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn invariant_under_row_and_column_permutations(
        (w, pr, pc) in (2usize..=7).prop_flat_map(|n| (matrix(n, n), permutation(n), permutation(n)))
    ) {
        let n = w.nrows();
        let shuffled = DMatrix::from_fn(n, n, |i, j| w[(pr[i], pc[j])]);
        prop_assert!(rel(permanent_exact(&w).unwrap(), permanent_exact(&shuffled).unwrap()) < 1e-10);
    }

    #[test]
    fn linear_in_each_row(
        (w, u, v, row) in matrix(5, 5).prop_flat_map(|w| (Just(w), matrix(1, 5), matrix(1, 5), 0usize..5)),
        a in complex(),
        b in complex(),
    ) {
        let with = |r: &DMatrix<C64>| {
            let mut m = w.clone();
            m.set_row(row, &r.row(0));
            permanent_exact(&m).unwrap()
        };
        let mixed = &u * a + &v * b;
        let lhs = with(&mixed);
        let rhs = with(&u) * a + with(&v) * b;
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn homogeneous_of_degree_n(w in square(7), c in complex()) {
        prop_assume!(c.norm() > 1e-3);
        let n = w.nrows() as i32;
        let lhs = permanent_exact(&(&w * c)).unwrap();
        let rhs = permanent_exact(&w).unwrap() * c.powi(n);
        prop_assert!(rel(lhs, rhs) < 1e-10);
    }

    #[test]
    fn low_rank_expansion_agrees_with_glynn(
        (a, b) in (1usize..=3, 1usize..=10).prop_flat_map(|(r, n)| (matrix(n, r), matrix(r, n)))
    ) {
        let f = FactoredMatrix::new(a, b).unwrap();
        let exact = ScaledComplex::from_value(permanent_exact(&f.reconstruct()).unwrap());
        let low = permanent_low_rank(&f).unwrap();
        let scale = f.reconstruct().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        // relative to the permanent, unless catastrophic cancellation makes it tiny
        let tol = 1e-8 * exact.value().norm().max(1e-6 * scale.powi(f.order() as i32));
        prop_assert!((low.value() - exact.value()).norm() <= tol, "{:?} vs {:?}", low.value(), exact.value());
    }
}

#[test]
fn all_ones_gives_factorial() {
    let mut f = 1.0;
    for n in 1..=12usize {
        f *= n as f64;
        let ones = DMatrix::from_element(n, n, C64::new(1.0, 0.0));
        assert!(rel(permanent_exact(&ones).unwrap(), C64::new(f, 0.0)) < 1e-12);
    }
}
