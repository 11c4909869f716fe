//! Bessel functions of the first kind J_n(z) for integer order, by Miller's
//! backward recurrence normalized with J_0 + 2ΣJ_2k = 1.

use crate::error::{Error, Result};

/// Arguments with |z| at or above this are rejected.
pub const MAX_ARGUMENT: f64 = 50.0;

const RESCALE_ABOVE: f64 = 1e250;

fn check_argument(z: f64) -> Result<()> {
    if z.is_finite() && z.abs() < MAX_ARGUMENT {
        Ok(())
    } else {
        Err(Error::UnsupportedRange { z })
    }
}

/// J_0(z), …, J_{n_max}(z).
pub fn bessel_j_orders(n_max: usize, z: f64) -> Result<Vec<f64>> {
    check_argument(z)?;
    let mut out = vec![0.0; n_max + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    let x = z.abs();

    let top = n_max.max(x.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;

    // Backward recurrence J_{k-1} = (2k/x) J_k − J_{k+1} from an arbitrary seed.
    let mut next = 0.0; // J_{k+1}
    let mut current = 1e-30; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = current;
        }
        if k % 2 == 0 {
            norm += 2.0 * current;
        }
        let prev = 2.0 * k as f64 / x * current - next;
        next = current;
        current = prev;
        if current.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            current *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = current;
    norm += current;

    for (n, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if z < 0.0 && n % 2 == 1 {
            *v = -*v;
        }
    }
    Ok(out)
}

/// J_n(z) for any integer n, |z| < 50. Accurate to ~1e-13 absolute.
pub fn bessel_j(n: i32, z: f64) -> Result<f64> {
    let order = n.unsigned_abs() as usize;
    let value = bessel_j_orders(order, z)?[order];
    Ok(if n < 0 && order % 2 == 1 { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Power series Σ (−1)^m (z/2)^{2m+n} / (m! (m+n)!), summed until the
    /// terms stop mattering.
    fn series(n: u32, z: f64) -> f64 {
        let half = z / 2.0;
        let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        let mut m = 0.0;
        loop {
            m += 1.0;
            term *= -half * half / (m * (m + n as f64));
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1e-300) && m > half {
                return sum;
            }
        }
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        for l in 1..10 {
            assert_eq!(bessel_j(l, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn matches_series_at_small_arguments() {
        for z in [0.1, 0.5, 1.0, 1.5, 2.404_825_557_695_773, 3.0, 5.0] {
            for n in 0..12 {
                let a = bessel_j(n as i32, z).unwrap();
                let b = series(n, z);
                assert!((a - b).abs() < 1e-12, "J_{n}({z}): {a} vs {b}");
            }
        }
        assert!(bessel_j(0, 2.404_825_557_695_773).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_large_arguments() {
        assert!(matches!(bessel_j(0, 50.0), Err(Error::UnsupportedRange { .. })));
        assert!(bessel_j(0, f64::NAN).is_err());
        assert!(bessel_j(3, -49.9).is_ok());
    }

    proptest! {
        #[test]
        fn order_reflection(n in 0i32..=20, z in -20.0f64..20.0) {
            let pos = bessel_j(n, z).unwrap();
            let neg = bessel_j(-n, z).unwrap();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((neg - sign * pos).abs() <= 1e-12);
        }

        #[test]
        fn three_term_recurrence(n in 1i32..30, z in 0.1f64..45.0) {
            let lhs = bessel_j(n - 1, z).unwrap() + bessel_j(n + 1, z).unwrap();
            let rhs = 2.0 * n as f64 / z * bessel_j(n, z).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + 2.0 * n as f64 / z));
        }
    }
}
