//! Closed-form resonance structure near the NV level anti-crossing (LAC):
//! the multiphoton hyperbolas, the P1 hyperfine splitting, the f_{k,l} peak
//! grid with its field positions, and the P1–P1–NV tripolar rate.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::spin::P1Params;

/// Above this tilt the small-angle LAC expansion is not trustworthy.
pub const SMALL_ANGLE_LIMIT: f64 = 0.2;

/// P1 density per unit relative nitrogen concentration: 1.8×10²³ cm⁻³.
pub const DIAMOND_ATOM_DENSITY_PER_M3: f64 = 1.8e29;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LacParams {
    /// Angle between B_S and [111] (rad).
    pub theta_s: f64,
    /// Zero-field splitting (rad/s).
    pub d: f64,
    /// Gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma_e: f64,
}

impl LacParams {
    pub fn new(theta_s: f64, d: f64, gamma_e: f64) -> Result<Self> {
        if !(theta_s > 0.0 && theta_s.is_finite()) {
            return Err(Error::invalid(format!("theta_S must be > 0, got {theta_s}")));
        }
        if !(d > 0.0 && gamma_e > 0.0) {
            return Err(Error::invalid("D and gamma_e must be positive"));
        }
        Ok(Self { theta_s, d, gamma_e })
    }

    /// False when θ_S is too large for the leading-order expansion.
    pub fn is_small_angle(&self) -> bool {
        self.theta_s <= SMALL_ANGLE_LIMIT
    }

    /// B_S at the anti-crossing, D/γ_e (T).
    pub fn lac_field(&self) -> f64 {
        self.d / self.gamma_e
    }

    /// Minimum gap ω_a0 = √2·D·θ_S (rad/s).
    pub fn omega_a0(&self) -> f64 {
        2f64.sqrt() * self.d * self.theta_s
    }

    /// Dimensionless detuning η = γ_e δB / ω_a0.
    pub fn eta(&self, delta_b: f64) -> f64 {
        self.gamma_e * delta_b / self.omega_a0()
    }

    /// δB = B_S − D/γ_e.
    pub fn delta_b(&self, b_s: f64) -> f64 {
        b_s - self.lac_field()
    }
}

/// ω_a = ω_a0 √(1 + η²) (rad/s).
pub fn lac_frequency(params: &LacParams, delta_b: f64) -> f64 {
    params.omega_a0() * params.eta(delta_b).hypot(1.0)
}

/// Frequency of the l'th multiphoton hyperbola, f_l = ω_a / 2πl (Hz).
pub fn hyperbola_frequency(params: &LacParams, delta_b: f64, l: i64) -> Result<f64> {
    if l < 1 {
        return Err(Error::invalid(format!("hyperbola order must be >= 1, got {l}")));
    }
    Ok(lac_frequency(params, delta_b) / (TAU * l as f64))
}

/// First-order P1 hyperfine splitting ω_en = √(A_∥² cos²θ_B + A_⊥² sin²θ_B).
pub fn hyperfine_splitting(params: &P1Params, theta_b: f64) -> f64 {
    (params.a_par * theta_b.cos()).hypot(params.a_perp * theta_b.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakGridParams {
    /// Beat frequency f_m (Hz).
    pub f_m: f64,
    pub l_max: u32,
    pub k_max: u32,
    /// Also emit the half-order frequencies k·f_m/(2l) associated with
    /// stimulated nuclear rotation.
    pub nuclear_rotation: bool,
}

impl PeakGridParams {
    pub fn new(f_m: f64, l_max: u32, k_max: u32) -> Result<Self> {
        let p = Self {
            f_m,
            l_max,
            k_max,
            nuclear_rotation: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_m > 0.0 && self.f_m.is_finite()) {
            return Err(Error::invalid(format!("f_m must be > 0, got {}", self.f_m)));
        }
        if self.l_max < 1 || self.k_max < 1 {
            return Err(Error::invalid("l_max and k_max must be >= 1"));
        }
        Ok(())
    }
}

/// One cross symbol: f = (numerator/denominator)·f_m on hyperbola `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEntry {
    pub k: u32,
    pub l: u32,
    /// Reduced ratio f/f_m.
    pub numerator: u32,
    pub denominator: u32,
    /// Frequency (Hz).
    pub frequency: f64,
    /// True for the k·f_m/(2l) nuclear-rotation entries.
    pub half_order: bool,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// f_{k,l} = (k/l)·f_m for 1 ≤ k ≤ k_max, 1 ≤ l ≤ l_max. Equal ratios are
/// kept once, at their smallest l.
pub fn peak_grid(params: &PeakGridParams) -> Result<Vec<PeakEntry>> {
    params.validate()?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut push = |k: u32, l: u32, num: u32, den: u32, half_order: bool, out: &mut Vec<PeakEntry>| {
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if seen.insert((num, den)) {
            out.push(PeakEntry {
                k,
                l,
                numerator: num,
                denominator: den,
                frequency: num as f64 * params.f_m / den as f64,
                half_order,
            });
        }
    };
    for l in 1..=params.l_max {
        for k in 1..=params.k_max {
            push(k, l, k, l, false, &mut out);
        }
        if params.nuclear_rotation {
            for k in 1..=params.k_max {
                push(k, l, k, 2 * l, true, &mut out);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OmitReason {
    /// f_{k,l} lies below the vertex ω_a0/2πl of hyperbola l.
    BelowHyperbolaMinimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CrossingOutcome {
    /// Field offsets δB (T) where hyperbola l reaches f_{k,l}, as (−, +).
    Crossing {
        delta_b: [f64; 2],
    },
    Omitted(OmitReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCrossing {
    pub peak: PeakEntry,
    pub outcome: CrossingOutcome,
}

/// Solves f_{k,l} = f_l(δB) for each grid entry:
/// δB = ±(ω_a0/γ_e)·√((2π l f_{k,l}/ω_a0)² − 1).
pub fn peak_field_positions(lac: &LacParams, grid: &PeakGridParams) -> Result<Vec<PeakCrossing>> {
    let omega_a0 = lac.omega_a0();
    Ok(peak_grid(grid)?
        .into_iter()
        .map(|peak| {
            let ratio = TAU * peak.l as f64 * peak.frequency / omega_a0;
            let outcome = if ratio < 1.0 {
                CrossingOutcome::Omitted(OmitReason::BelowHyperbolaMinimum)
            } else {
                let db = omega_a0 / lac.gamma_e * (ratio * ratio - 1.0).sqrt();
                CrossingOutcome::Crossing { delta_b: [-db, db] }
            };
            PeakCrossing { peak, outcome }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripolarParams {
    /// Relative nitrogen concentration.
    pub p_n: f64,
    /// NV density over P1 density.
    pub nv_fraction: f64,
    /// Zero-field splitting (rad/s).
    pub d: f64,
    pub constants: PhysicalConstants,
}

impl TripolarParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_n) {
            return Err(Error::invalid(format!("p_N must lie in [0, 1), got {}", self.p_n)));
        }
        if !(self.nv_fraction > 0.0) {
            return Err(Error::invalid("nv_fraction must be > 0"));
        }
        Ok(())
    }

    /// n_S,P1 (m⁻³).
    pub fn p1_density(&self) -> f64 {
        DIAMOND_ATOM_DENSITY_PER_M3 * self.p_n
    }

    /// NV density (m⁻³).
    pub fn nv_density(&self) -> f64 {
        self.p1_density() * self.nv_fraction
    }
}

/// Density at which the mean dipolar coupling equals D:
/// n_D = 4πD / (μ_0 γ_e² ħ), in m⁻³.
pub fn dipolar_density(d: f64, constants: &PhysicalConstants) -> f64 {
    4.0 * PI * d / (constants.mu0() * constants.gamma_e().powi(2) * constants.hbar())
}

/// Second-order P1–P1–NV Rabi rate ω ≃ (n_S,P1 / n_D)²·D (rad/s).
pub fn tripolar_rate(params: &TripolarParams) -> Result<f64> {
    params.validate()?;
    let ratio = params.p1_density() / dipolar_density(params.d, &params.constants);
    Ok(ratio * ratio * params.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice;
    use crate::units::{mhz_to_rad_s, per_m3_to_per_cm3, rad_s_to_hz, rad_s_to_mhz};

    fn lac() -> LacParams {
        LacParams::new(
            1.5f64.to_radians(),
            mhz_to_rad_s(2870.0),
            PhysicalConstants::default().gamma_e(),
        )
        .unwrap()
    }

    #[test]
    fn lac_frequency_at_vertex() {
        let p = lac();
        assert_eq!(lac_frequency(&p, 0.0), p.omega_a0());
        // √2 × 2.87 GHz × 0.0261799 rad
        assert!((rad_s_to_mhz(p.omega_a0()) - 106.26).abs() < 0.01);
    }

    #[test]
    fn eta_sqrt3_doubles_frequency() {
        let p = lac();
        let db = 3f64.sqrt() * p.omega_a0() / p.gamma_e;
        assert!((lac_frequency(&p, db) - 2.0 * p.omega_a0()).abs() < 1e-9 * p.omega_a0());
    }

    #[test]
    fn hyperbola_orders() {
        let p = lac();
        let f1 = hyperbola_frequency(&p, 0.0, 1).unwrap();
        assert_eq!(f1, p.omega_a0() / TAU);
        assert_eq!(hyperbola_frequency(&p, 0.0, 2).unwrap(), p.omega_a0() / (2.0 * TAU));
        assert!(hyperbola_frequency(&p, 0.0, 0).is_err());
        assert!(hyperbola_frequency(&p, 0.0, -3).is_err());
    }

    #[test]
    fn tenth_hyperbola_is_symmetric_with_minimum_at_zero() {
        let p = lac();
        let f0 = hyperbola_frequency(&p, 0.0, 10).unwrap();
        for i in 1..=70 {
            let db = i as f64 * 1e-4;
            let plus = hyperbola_frequency(&p, db, 10).unwrap();
            let minus = hyperbola_frequency(&p, -db, 10).unwrap();
            assert_eq!(plus, minus);
            assert!(plus > f0);
        }
    }

    #[test]
    fn hyperbola_scaling_with_order() {
        let p = lac();
        for db in [-5e-3, -1e-3, 0.0, 2e-3, 7e-3] {
            let base = hyperbola_frequency(&p, db, 1).unwrap();
            for l in 2..=10 {
                let f = hyperbola_frequency(&p, db, l).unwrap();
                assert!((f * l as f64 - base).abs() <= 1e-12 * base);
            }
        }
    }

    #[test]
    fn hyperfine_splitting_values() {
        let p = crate::spin::P1Params::nitrogen14(lattice::nv_axes()[0]);
        assert!((rad_s_to_mhz(hyperfine_splitting(&p, 0.0)) - 114.03).abs() < 1e-9);
        let unparallel = (1.0f64 / 3.0).acos();
        let expected = (114.03f64.powi(2) / 9.0 + 81.33f64.powi(2) * 8.0 / 9.0).sqrt();
        let got = rad_s_to_mhz(hyperfine_splitting(&p, unparallel));
        assert!((got - expected).abs() < 1e-9);
        assert!((got - 85.58).abs() < 0.01);
        assert!((hyperfine_splitting(&p, PI / 2.0) - p.a_perp).abs() < 1e-6);
    }

    #[test]
    fn hyperfine_splitting_monotone_in_angle() {
        let p = crate::spin::P1Params::nitrogen14(lattice::nv_axes()[0]);
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let w = hyperfine_splitting(&p, i as f64 * PI / 400.0);
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn peak_grid_values_and_dedup() {
        let grid = peak_grid(&PeakGridParams::new(86e6, 4, 6).unwrap()).unwrap();
        let find = |num: u32, den: u32| {
            grid.iter()
                .find(|e| e.numerator == num && e.denominator == den)
                .copied()
        };
        assert_eq!(find(1, 1).unwrap().frequency, 86e6);
        assert_eq!(find(2, 1).unwrap().frequency, 172e6);
        assert_eq!(find(3, 2).unwrap().frequency, 129e6);
        // 2/2 collapses onto 1/1 at l = 1.
        let one = find(1, 1).unwrap();
        assert_eq!((one.k, one.l), (1, 1));
        let ratios: std::collections::HashSet<_> = grid.iter().map(|e| (e.numerator, e.denominator)).collect();
        assert_eq!(ratios.len(), grid.len());
    }

    #[test]
    fn nuclear_rotation_entries() {
        let mut p = PeakGridParams::new(86e6, 2, 3).unwrap();
        p.nuclear_rotation = true;
        let grid = peak_grid(&p).unwrap();
        let halves: Vec<_> = grid.iter().filter(|e| e.half_order).collect();
        assert!(halves
            .iter()
            .any(|e| e.numerator == 1 && e.denominator == 4 && e.l == 2));
        assert!(halves.iter().all(|e| e.denominator % 2 == 0));
    }

    #[test]
    fn peak_field_positions_vertex_and_omission() {
        let p = lac();
        // f equal to the l = 1 vertex gives δB = 0.
        let grid = PeakGridParams::new(p.omega_a0() / TAU, 1, 1).unwrap();
        let c = peak_field_positions(&p, &grid).unwrap();
        match c[0].outcome {
            CrossingOutcome::Crossing { delta_b } => {
                assert_eq!(delta_b[0], -delta_b[1]);
                assert!(delta_b[1].abs() < 1e-12);
            }
            _ => panic!("expected a crossing"),
        }
        // 86 MHz is below the 106 MHz vertex of the first hyperbola.
        let grid = PeakGridParams::new(86e6, 1, 1).unwrap();
        let c = peak_field_positions(&p, &grid).unwrap();
        assert_eq!(
            c[0].outcome,
            CrossingOutcome::Omitted(OmitReason::BelowHyperbolaMinimum)
        );
    }

    #[test]
    fn peak_field_positions_solve_hyperbola() {
        let p = lac();
        let grid = PeakGridParams::new(86e6, 10, 20).unwrap();
        for c in peak_field_positions(&p, &grid).unwrap() {
            if let CrossingOutcome::Crossing { delta_b } = c.outcome {
                assert_eq!(delta_b[0], -delta_b[1]);
                for db in delta_b {
                    let f = hyperbola_frequency(&p, db, c.peak.l as i64).unwrap();
                    assert!((f - c.peak.frequency).abs() < 1e-9 * f);
                }
            }
        }
    }

    fn tripolar(p_n: f64) -> TripolarParams {
        TripolarParams {
            p_n,
            nv_fraction: 0.01,
            d: mhz_to_rad_s(2870.0),
            constants: PhysicalConstants::default(),
        }
    }

    #[test]
    fn dipolar_density_value() {
        let n_d = per_m3_to_per_cm3(dipolar_density(mhz_to_rad_s(2870.0), &PhysicalConstants::default()));
        assert!((n_d - 5.5e22).abs() < 0.02 * 5.5e22, "{n_d:e}");
    }

    #[test]
    fn tripolar_rate_values() {
        let hz = rad_s_to_hz(tripolar_rate(&tripolar(1e-4)).unwrap());
        assert!((hz - 307.0).abs() < 0.1 * 307.0, "{hz}");
        assert_eq!(tripolar_rate(&tripolar(0.0)).unwrap(), 0.0);
        let r1 = tripolar_rate(&tripolar(1e-4)).unwrap();
        let r2 = tripolar_rate(&tripolar(2e-4)).unwrap();
        assert_eq!(r2 / r1, 4.0);
        assert!(tripolar_rate(&tripolar(1.5)).is_err());
    }
}
