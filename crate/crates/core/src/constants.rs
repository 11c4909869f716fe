use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Physical constants used by every model. Fields are private so a value,
/// once built, cannot be mutated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    gamma_e: f64,
    mu0: f64,
    hbar: f64,
}

impl PhysicalConstants {
    /// Electron gyromagnetic ratio γ_e/2π in GHz/T.
    pub const GAMMA_E_GHZ_PER_T: f64 = 28.03;
    pub const MU0: f64 = 1.256_637_062_12e-6;
    pub const HBAR: f64 = 1.054_571_817e-34;

    pub fn new(gamma_e: f64, mu0: f64, hbar: f64) -> Self {
        Self { gamma_e, mu0, hbar }
    }

    /// Builds the constants from γ_e/2π in GHz/T.
    pub fn with_gamma_e_ghz_per_t(ghz_per_t: f64) -> Self {
        Self::new(TAU * ghz_per_t * 1e9, Self::MU0, Self::HBAR)
    }

    /// Gyromagnetic ratio in rad s⁻¹ T⁻¹.
    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::with_gamma_e_ghz_per_t(Self::GAMMA_E_GHZ_PER_T)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_e_is_28_03_ghz_per_tesla() {
        let c = PhysicalConstants::default();
        assert_eq!(c.gamma_e() / TAU, 28.03e9);
    }
}
