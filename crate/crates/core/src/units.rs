//! Conversions between the I/O units (MHz, mT, degrees) and the internal
//! ones (rad/s, tesla, radians). Nothing outside the config and output
//! layers should need these.

use std::f64::consts::TAU;

const RAD_S_PER_MHZ: f64 = TAU * 1e6;

/// Ordinary frequency in MHz to angular frequency in rad/s.
pub fn mhz_to_rad_s(f_mhz: f64) -> f64 {
    f_mhz * RAD_S_PER_MHZ
}

/// Angular frequency in rad/s to ordinary frequency in MHz.
pub fn rad_s_to_mhz(omega: f64) -> f64 {
    omega / RAD_S_PER_MHZ
}

pub fn hz_to_rad_s(f_hz: f64) -> f64 {
    f_hz * TAU
}

pub fn rad_s_to_hz(omega: f64) -> f64 {
    omega / TAU
}

pub fn mt_to_tesla(b_mt: f64) -> f64 {
    b_mt * 1e-3
}

pub fn tesla_to_mt(b_t: f64) -> f64 {
    b_t * 1e3
}

/// Per cm³ to per m³.
pub fn per_cm3_to_per_m3(n: f64) -> f64 {
    n * 1e6
}

pub fn per_m3_to_per_cm3(n: f64) -> f64 {
    n * 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn zero_field_splitting() {
        let d = mhz_to_rad_s(2870.0);
        assert!((d - TAU * 2.87e9).abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn mhz_round_trip_within_one_ulp(f in 1e-6f64..1e5) {
            prop_assert!(ulps(rad_s_to_mhz(mhz_to_rad_s(f)), f) <= 1);
        }
    }
}
