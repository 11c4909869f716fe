//! Driven Bloch equations coupled to a single damped cavity mode, and the
//! closed-form superharmonic steady state derived from them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::bessel::{bessel_j, bessel_j_orders, MAX_ARGUMENT};
use crate::error::{Error, Result};
use crate::ode::{DormandPrince, StepStats};

/// Samples per averaging window.
pub const WINDOW_SAMPLES: usize = 64;
/// Largest allowed drive phase advance per integrator step.
pub const MAX_PHASE_STEP: f64 = 0.1;
/// Slack on |P_z|, |P_+| before the state is declared unphysical.
pub const STATE_BOUND_TOL: f64 = 1e-6;

/// All frequencies and rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochCavityParams {
    pub omega_c: f64,
    pub gamma_c: f64,
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_l: f64,
    pub omega_delta: f64,
    pub omega_1: f64,
    pub omega_t: f64,
    pub g: f64,
    pub p_zs: f64,
}

impl BlochCavityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega_c,
            self.gamma_c,
            self.gamma_1,
            self.gamma_2,
            self.omega_a,
            self.omega_b,
            self.omega_l,
            self.omega_delta,
            self.omega_1,
            self.omega_t,
            self.g,
            self.p_zs,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Bloch-cavity parameters must be finite"));
        }
        if self.gamma_1 < 0.0 || self.g < 0.0 || self.omega_l < 0.0 {
            return Err(Error::invalid("gamma_1, g and omega_L must be non-negative"));
        }
        if self.gamma_2 <= 0.0 || self.gamma_c <= 0.0 {
            return Err(Error::invalid("gamma_2 and gamma_c must be positive"));
        }
        if self.p_zs.abs() > 1.0 {
            return Err(Error::invalid(format!("|P_zs| = {} exceeds 1", self.p_zs.abs())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OispParams {
    pub gamma_1t: f64,
    pub gamma_1o: f64,
    pub p_zst: f64,
    pub p_zso: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochCavityState {
    pub alpha: Complex64,
    pub p_z: f64,
    pub p_plus: Complex64,
    pub t: f64,
}

impl BlochCavityState {
    /// Empty cavity, fully relaxed spin.
    pub fn relaxed(p_zs: f64) -> Self {
        Self {
            alpha: Complex64::new(0.0, 0.0),
            p_z: p_zs,
            p_plus: Complex64::new(0.0, 0.0),
            t: 0.0,
        }
    }

    fn to_array(self) -> [f64; 5] {
        [self.alpha.re, self.alpha.im, self.p_z, self.p_plus.re, self.p_plus.im]
    }

    fn from_array(y: &[f64; 5], t: f64) -> Self {
        Self {
            alpha: Complex64::new(y[0], y[1]),
            p_z: y[2],
            p_plus: Complex64::new(y[3], y[4]),
            t,
        }
    }
}

/// Time derivative of a [`BlochCavityState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub d_alpha: Complex64,
    pub d_p_z: f64,
    pub d_p_plus: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperharmonicPoint {
    pub l: u32,
    pub beta_cl: f64,
    pub beta_al: f64,
    pub beta_delta: f64,
    pub kappa: f64,
    pub z: f64,
}

impl SuperharmonicPoint {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::invalid("superharmonic order l must be >= 1"));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!(
                "kappa = {} must be finite and >= 0",
                self.kappa
            )));
        }
        if ![self.beta_cl, self.beta_al, self.beta_delta]
            .iter()
            .all(|b| b.is_finite())
        {
            return Err(Error::invalid("beta coefficients must be finite"));
        }
        if !(self.z.abs() < MAX_ARGUMENT) {
            return Err(Error::UnsupportedRange { z: self.z });
        }
        Ok(())
    }

    /// Time-domain parameters that realise this point with the given damping
    /// rates and drive frequency. The resonance offsets are placed above the
    /// l-th harmonic: ω_a = lω_L + β_al γ_2, ω_c = lω_L + β_cl γ_c.
    pub fn to_params(&self, rates: &ScaledRates, p_zs: f64) -> Result<BlochCavityParams> {
        self.validate()?;
        let ScaledRates {
            gamma_1,
            gamma_2,
            gamma_c,
            omega_l,
        } = *rates;
        let harmonic = self.l as f64 * omega_l;
        let params = BlochCavityParams {
            omega_c: harmonic + self.beta_cl * gamma_c,
            gamma_c,
            gamma_1,
            gamma_2,
            omega_a: harmonic + self.beta_al * gamma_2,
            omega_b: self.z * omega_l,
            omega_l,
            omega_delta: self.beta_delta * (gamma_1 * gamma_2).sqrt(),
            omega_1: 0.0,
            omega_t: 0.0,
            g: (self.kappa * gamma_2 * gamma_c).sqrt(),
            p_zs,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Damping rates and drive frequency used to map a dimensionless
/// [`SuperharmonicPoint`] back to the time domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRates {
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub gamma_c: f64,
    pub omega_l: f64,
}

impl Default for ScaledRates {
    fn default() -> Self {
        Self {
            gamma_1: 1.0,
            gamma_2: 10.0,
            gamma_c: 10.0,
            omega_l: 1000.0,
        }
    }
}

pub fn derivatives(state: &BlochCavityState, p: &BlochCavityParams) -> StateDerivative {
    let i = Complex64::i();
    let t = state.t;
    let alpha = state.alpha;
    let p_plus = state.p_plus;
    let p_minus = p_plus.conj();

    let rotating = Complex64::from_polar(p.omega_1, -p.omega_t * t);
    let omega_1 = -i * (rotating + p.omega_delta + 2.0 * p.g * alpha);
    let omega_0 = p.omega_a - p.omega_b * (p.omega_l * t).sin();

    let d_alpha = -(i * p.omega_c + p.gamma_c) * alpha - i * p.g * p_minus;
    let d_p_z = 2.0 * (omega_1 * p_plus).re - p.gamma_1 * (state.p_z - p.p_zs);
    let d_p_plus = i * omega_0 * p_plus - 0.5 * omega_1.conj() * state.p_z - p.gamma_2 * p_plus;
    StateDerivative {
        d_alpha,
        d_p_z,
        d_p_plus,
    }
}

fn flow(p: &BlochCavityParams) -> impl Fn(f64, &[f64; 5]) -> [f64; 5] + '_ {
    move |t, y| {
        let d = derivatives(&BlochCavityState::from_array(y, t), p);
        [d.d_alpha.re, d.d_alpha.im, d.d_p_z, d.d_p_plus.re, d.d_p_plus.im]
    }
}

/// One explicit Dormand–Prince step of size `h` (may be negative).
pub fn step(state: &BlochCavityState, params: &BlochCavityParams, h: f64) -> BlochCavityState {
    let f = flow(params);
    let (y, _) = crate::ode::dp_step(&f, state.t, &state.to_array(), h);
    BlochCavityState::from_array(&y, state.t + h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    /// P_z averaged over the last window.
    pub mean_p_z: f64,
    pub periods: usize,
    pub converged: bool,
    /// |ΔP̄_z| between the last two windows.
    pub last_change: f64,
    pub window: f64,
    pub final_state: BlochCavityState,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SteadyStateReport {
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                periods: self.periods,
                last_change: self.last_change,
            })
        }
    }
}

/// Integrates until the window-averaged P_z settles.
///
/// The window is one drive period 2π/ω_L (or 2π/max(|ω_a|+|ω_Δ|, γ_2) when
/// ω_L = 0). A window counts as settled when the change of its mean is below
/// `tolerance·|P̄|·min(1, γ_min·T)`, where γ_min is the slowest relaxation
/// rate; three consecutive settled windows end the run, no earlier than
/// 1/γ_min. Running out of `max_periods` is reported with `converged = false`.
pub fn integrate_to_steady_state(
    params: &BlochCavityParams,
    initial: BlochCavityState,
    tolerance: f64,
    max_periods: usize,
) -> Result<SteadyStateReport> {
    params.validate()?;
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if params.omega_b != 0.0 && params.omega_l == 0.0 {
        return Err(Error::invalid("omega_L must be positive when omega_b is non-zero"));
    }
    let window = if params.omega_l > 0.0 {
        TAU / params.omega_l
    } else {
        TAU / (params.omega_a.abs() + params.omega_delta.abs()).max(params.gamma_2)
    };
    let mut gamma_min = params.gamma_2;
    if params.gamma_1 > 0.0 {
        gamma_min = gamma_min.min(params.gamma_1);
    }
    if params.g != 0.0 {
        gamma_min = gamma_min.min(params.gamma_c);
    }
    let settle_scale = (gamma_min * window).min(1.0);
    let min_time = 1.0 / gamma_min;

    let solver = DormandPrince {
        rtol: 1e-9,
        atol: 1e-11,
        max_step: if params.omega_l > 0.0 {
            MAX_PHASE_STEP / params.omega_l
        } else {
            window / 8.0
        },
        max_steps: 10_000_000,
    };
    let f = flow(params);
    let dt = window / WINDOW_SAMPLES as f64;

    let mut y = initial.to_array();
    let mut t = initial.t;
    let mut h = 0.0;
    let mut stats = StepStats::default();
    let mut previous: Option<f64> = None;
    let mut settled = 0;
    let mut mean = y[2];
    let mut last_change = f64::INFINITY;
    let t_start = t;

    for period in 1..=max_periods {
        let window_start = t;
        let mut sum = 0.5 * y[2];
        for k in 1..=WINDOW_SAMPLES {
            let t_next = window_start + k as f64 * dt;
            y = solver.integrate(&f, t, y, t_next, &mut h, &mut stats)?;
            t = t_next;
            check_bounds(&y, t)?;
            sum += if k == WINDOW_SAMPLES { 0.5 * y[2] } else { y[2] };
        }
        mean = sum / WINDOW_SAMPLES as f64;
        if let Some(prev) = previous {
            last_change = (mean - prev).abs();
            let threshold = tolerance * mean.abs().max(f64::MIN_POSITIVE) * settle_scale;
            settled = if last_change < threshold { settled + 1 } else { 0 };
            if settled >= 3 && t - t_start >= min_time {
                return Ok(report(mean, period, true, last_change, window, &y, t, stats));
            }
        }
        previous = Some(mean);
    }
    Ok(report(mean, max_periods, false, last_change, window, &y, t, stats))
}

#[allow(clippy::too_many_arguments)]
fn report(
    mean: f64,
    periods: usize,
    converged: bool,
    last_change: f64,
    window: f64,
    y: &[f64; 5],
    t: f64,
    stats: StepStats,
) -> SteadyStateReport {
    SteadyStateReport {
        mean_p_z: mean,
        periods,
        converged,
        last_change,
        window,
        final_state: BlochCavityState::from_array(y, t),
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
    }
}

fn check_bounds(y: &[f64; 5], t: f64) -> Result<()> {
    let p_plus = y[3].hypot(y[4]);
    if y[2].abs() > 1.0 + STATE_BOUND_TOL || p_plus > 1.0 + STATE_BOUND_TOL {
        return Err(Error::Integration {
            t,
            reason: format!("polarization left the unit ball (P_z = {}, |P_+| = {p_plus})", y[2]),
        });
    }
    Ok(())
}

/// ζ_a = i^{-(1+l)} e^{-iz} J_{-l}(z) (1 + κJ_0²(z)P_zs / ((1+iβ_cl)(1+iβ_al))).
pub fn zeta_a(point: &SuperharmonicPoint, p_zs: f64) -> Result<Complex64> {
    point.validate()?;
    let l = point.l as i32;
    let j0 = bessel_j(0, point.z)?;
    let j_minus_l = bessel_j(-l, point.z)?;
    let i = Complex64::i();
    let detuning = (1.0 + i * point.beta_cl) * (1.0 + i * point.beta_al);
    let bracket = 1.0 + point.kappa * j0 * j0 * p_zs / detuning;
    let prefactor = i.powi(-(1 + l)) * Complex64::from_polar(1.0, -point.z);
    Ok(prefactor * j_minus_l * bracket)
}

/// Steady-state P_z/P_zs at a superharmonic point.
pub fn closed_form_pz(point: &SuperharmonicPoint, p_zs: f64) -> Result<f64> {
    let zeta = zeta_a(point, p_zs)?;
    let drive = point.beta_delta * point.beta_delta * zeta.norm_sqr();
    Ok(1.0 - drive / (1.0 + drive + point.beta_al * point.beta_al))
}

/// Combined longitudinal rate and target polarization of thermal relaxation
/// plus optical pumping.
pub fn effective_oisp(params: &OispParams) -> Result<(f64, f64)> {
    let OispParams {
        gamma_1t,
        gamma_1o,
        p_zst,
        p_zso,
    } = *params;
    if gamma_1t < 0.0 || gamma_1o < 0.0 || !gamma_1t.is_finite() || !gamma_1o.is_finite() {
        return Err(Error::invalid("OISP rates must be finite and non-negative"));
    }
    if p_zst.abs() > 1.0 || p_zso.abs() > 1.0 {
        return Err(Error::invalid("OISP polarizations must lie in [-1, 1]"));
    }
    let gamma_1 = gamma_1t + gamma_1o;
    if gamma_1 == 0.0 {
        return Err(Error::invalid("gamma_1T + gamma_1O must be positive"));
    }
    Ok((gamma_1, (gamma_1t * p_zst + gamma_1o * p_zso) / gamma_1))
}

/// κ = g²/(γ_2 γ_c).
pub fn cooperativity(g: f64, gamma_2: f64, gamma_c: f64) -> Result<f64> {
    let denom = gamma_2 * gamma_c;
    if !(denom > 0.0) || !denom.is_finite() || g < 0.0 || !g.is_finite() {
        return Err(Error::invalid(format!(
            "cooperativity needs g >= 0 and positive damping (g = {g}, gamma_2 = {gamma_2}, gamma_c = {gamma_c})"
        )));
    }
    Ok(g * g / denom)
}

/// |e^{iz cos θ} − Σ_{n=−N}^{N} iⁿ J_n(z) e^{inθ}|.
pub fn jacobi_anger_check(z: f64, theta: f64, n_terms: usize) -> Result<f64> {
    if n_terms < 1 {
        return Err(Error::invalid("n_terms must be >= 1"));
    }
    let j = bessel_j_orders(n_terms, z)?;
    let i = Complex64::i();
    let mut sum = Complex64::new(j[0], 0.0);
    for (n, &jn) in j.iter().enumerate().skip(1) {
        let nf = n as f64;
        let i_n = i.powi(n as i32);
        // J_{-n} = (-1)^n J_n and i^{-n}(-1)^n = i^n, so both terms share i^n J_n.
        sum += i_n * jn * (Complex64::from_polar(1.0, nf * theta) + Complex64::from_polar(1.0, -nf * theta));
    }
    Ok((Complex64::from_polar(1.0, z * theta.cos()) - sum).norm())
}
