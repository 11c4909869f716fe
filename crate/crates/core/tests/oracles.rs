//! Independent numerical oracles for the eigensolver and Bessel functions.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use num_complex::Complex64;
use nvmpr::bessel::{bessel_j, bessel_j_orders};
use nvmpr::linalg::{eigh, CMatrix};
use proptest::prelude::*;

/// Number of eigenvalues of a Hermitian `h` below `x`, from the signs of the
/// pivots of an LDL† factorization of h − x·I (Sylvester's law of inertia).
fn count_below(h: &[Vec<Complex64>], x: f64) -> usize {
    let n = h.len();
    let mut a: Vec<Vec<Complex64>> = h.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= x;
    }
    let mut negative = 0;
    for k in 0..n {
        let mut pivot = a[k][k].re;
        if pivot == 0.0 {
            pivot = -1e-300;
        }
        if pivot < 0.0 {
            negative += 1;
        }
        for i in k + 1..n {
            let factor = a[i][k] / pivot;
            for j in k + 1..n {
                let sub = factor * a[k][j];
                a[i][j] -= sub;
            }
        }
    }
    negative
}

/// k-th smallest eigenvalue by bisection on the inertia count.
fn bisect_eigenvalue(h: &[Vec<Complex64>], k: usize, bound: f64) -> f64 {
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(h, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * bound {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn hermitian(entries: &[(f64, f64)]) -> Vec<Vec<Complex64>> {
    let n = 6;
    let mut h = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut it = entries.iter();
    for i in 0..n {
        for j in i..n {
            let &(re, im) = it.next().unwrap();
            if i == j {
                h[i][i] = Complex64::new(re, 0.0);
            } else {
                h[i][j] = Complex64::new(re, im);
                h[j][i] = Complex64::new(re, -im);
            }
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_match_inertia_bisection(
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 21),
        scale in prop::sample::select(vec![1.0, 1e3, 2.0e10]),
    ) {
        let h: Vec<Vec<Complex64>> = hermitian(&entries)
            .into_iter()
            .map(|r| r.into_iter().map(|z| z * scale).collect())
            .collect();
        let m = CMatrix::from_fn(6, |i, j| h[i][j]);
        let eig = eigh(&m).unwrap();
        // Gershgorin bound
        let bound = h.iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max) * 1.01;
        let radius = eig.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in 0..6 {
            let oracle = bisect_eigenvalue(&h, k, bound);
            prop_assert!((eig.values[k] - oracle).abs() <= 1e-8 * radius, "k = {}: {} vs {}", k, eig.values[k], oracle);
        }
    }
}

#[test]
fn degenerate_spectrum_matches_oracle() {
    // diag(1, 1, 1, -2, -2, 5) rotated by a fixed unitary built from a Householder reflector
    let v: Vec<Complex64> = (0..6)
        .map(|i| Complex64::new(1.0 + i as f64, 0.5 * i as f64 - 1.0))
        .collect();
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let u = |i: usize, j: usize| {
        let delta = if i == j { 1.0 } else { 0.0 };
        Complex64::new(delta, 0.0) - v[i] * v[j].conj() * (2.0 / norm2)
    };
    let d = [1.0, 1.0, 1.0, -2.0, -2.0, 5.0];
    let h: Vec<Vec<Complex64>> = (0..6)
        .map(|i| {
            (0..6)
                .map(|j| (0..6).map(|k| u(i, k) * d[k] * u(j, k).conj()).sum())
                .collect()
        })
        .collect();
    let eig = eigh(&CMatrix::from_fn(6, |i, j| h[i][j])).unwrap();
    let mut sorted = d;
    sorted.sort_by(f64::total_cmp);
    for k in 0..6 {
        assert!((eig.values[k] - sorted[k]).abs() < 1e-12);
        assert!((eig.values[k] - bisect_eigenvalue(&h, k, 10.0)).abs() < 1e-10);
    }
}

/// J_n(z) = (1/π)∫₀^π cos(nτ − z sin τ) dτ by the trapezoid rule, which
/// converges geometrically for this periodic integrand.
fn bessel_integral(n: i32, z: f64) -> f64 {
    let m = 2000;
    let h = PI / m as f64;
    let f = |t: f64| (n as f64 * t - z * t.sin()).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for i in 1..m {
        s += f(i as f64 * h);
    }
    s * h / PI
}

#[test]
fn bessel_matches_integral_representation() {
    let mut worst = 0.0f64;
    for n in -25..=25 {
        for i in 0..=80 {
            let z = -40.0 + i as f64;
            worst = worst.max((bessel_j(n, z).unwrap() - bessel_integral(n, z)).abs());
        }
    }
    assert!(worst < 1e-12, "worst {worst:e}");
}

#[test]
fn bessel_orders_agree_with_single_order() {
    for &z in &[0.0, 0.3, 1.5, 7.0, 19.9, 49.0] {
        let all = bessel_j_orders(40, z).unwrap();
        for (n, v) in all.iter().enumerate() {
            assert!((v - bessel_j(n as i32, z).unwrap()).abs() < 1e-14, "n = {n}, z = {z}");
        }
    }
}

proptest! {
    #[test]
    fn bessel_integral_random(n in -30i32..30, z in -49.0f64..49.0) {
        prop_assert!((bessel_j(n, z).unwrap() - bessel_integral(n, z)).abs() < 1e-12);
    }
}
