//! Adaptive Dormand–Prince 5(4) integration for fixed-size real systems.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (equal to the last row of A).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded fourth-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step of size `h` (which may be negative). Returns the
/// fifth-order solution and the difference to the embedded fourth-order one.
pub fn dp_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> ([f64; N], [f64; N]) {
    let mut k = [[0.0; N]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; N];
    for s in 0..7 {
        for i in 0..N {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    (y5, err)
}

#[derive(Debug, Clone, Copy)]
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|.
    pub max_step: f64,
    /// Steps allowed per `integrate` call.
    pub max_steps: usize,
}

impl Default for DormandPrince {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

impl DormandPrince {
    fn error_norm<const N: usize>(&self, y: &[f64; N], y_new: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            acc += (err[i] / scale).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    /// Integrates from `t0` to exactly `t1` (forward only). `h` carries the
    /// step size between calls and is updated in place.
    pub fn integrate<const N: usize>(
        &self,
        f: &impl Fn(f64, &[f64; N]) -> [f64; N],
        t0: f64,
        y0: [f64; N],
        t1: f64,
        h: &mut f64,
        stats: &mut StepStats,
    ) -> Result<[f64; N]> {
        let mut t = t0;
        let mut y = y0;
        if t1 <= t0 {
            return Ok(y);
        }
        if !(*h > 0.0) || !h.is_finite() {
            *h = ((t1 - t0) * 1e-3).min(self.max_step);
        }
        let mut steps = 0;
        while t < t1 {
            if steps == self.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {} steps", self.max_steps),
                });
            }
            steps += 1;
            let remaining = t1 - t;
            let last = *h >= remaining;
            let dt = if last { remaining } else { h.min(self.max_step) };
            let (y_new, err) = dp_step(f, t, &y, dt);
            let e = self.error_norm(&y, &y_new, &err);
            if !e.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            let factor = if e == 0.0 {
                5.0
            } else {
                (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
            };
            if e <= 1.0 {
                t = if last { t1 } else { t + dt };
                y = y_new;
                stats.accepted += 1;
                if !last {
                    *h = (dt * factor).min(self.max_step);
                }
            } else {
                stats.rejected += 1;
                *h = dt * factor;
                if *h < 1e-14 * t.abs().max(t1 - t0) {
                    return Err(Error::Integration {
                        t,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let f = |_t: f64, y: &[f64; 1]| [-2.0 * y[0]];
        let mut h = 0.0;
        let mut stats = StepStats::default();
        let y = DormandPrince::default()
            .integrate(&f, 0.0, [1.0], 3.0, &mut h, &mut stats)
            .unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-9);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let w = 7.0;
        let f = move |_t: f64, y: &[f64; 2]| [y[1], -w * w * y[0]];
        let solver = DormandPrince {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let mut h = 0.0;
        let mut stats = StepStats::default();
        let period = std::f64::consts::TAU / w;
        let y = solver
            .integrate(&f, 0.0, [1.0, 0.0], 10.0 * period, &mut h, &mut stats)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7 && y[1].abs() < 1e-6 * w);
    }

    #[test]
    fn single_step_is_fifth_order() {
        // y' = cos t, exact y = sin t
        let f = |t: f64, _y: &[f64; 1]| [t.cos()];
        let err = |h: f64| (dp_step(&f, 0.3, &[0.3f64.sin()], h).0[0] - (0.3 + h).sin()).abs();
        let ratio = err(0.2) / err(0.1);
        // local error O(h^6)
        assert!(ratio > 40.0, "ratio {ratio}");
    }

    #[test]
    fn respects_max_steps() {
        let f = |_t: f64, y: &[f64; 1]| [y[0]];
        let solver = DormandPrince {
            max_step: 1e-3,
            max_steps: 10,
            ..Default::default()
        };
        let mut h = 0.0;
        let r = solver.integrate(&f, 0.0, [1.0], 1.0, &mut h, &mut StepStats::default());
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
