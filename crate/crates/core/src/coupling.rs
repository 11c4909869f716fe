//! Spin-ensemble to cavity coupling from a sampled cavity field.

use nalgebra::Vector3;
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::units::per_cm3_to_per_m3;

/// Default ensemble polarization when none is given.
pub const DEFAULT_P_Z: f64 = 0.15;
/// Below this observed order a refinement sequence is flagged as slow.
pub const SLOW_ORDER: f64 = 1.5;

const PAIRWISE_BLOCK: usize = 256;
const PARALLEL_THRESHOLD: usize = 1 << 14;

/// Regular grid of cell-centre samples, x index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub dims: [usize; 3],
    /// Cell size (m).
    pub spacing: [f64; 3],
    /// Position of sample (0, 0, 0) (m).
    pub origin: [f64; 3],
    /// Cavity field per sample (T, arbitrary normalization).
    pub b: Vec<Vector3<f64>>,
    /// Samples inside the diamond.
    pub mask: Vec<bool>,
}

impl FieldMap {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + ix as f64 * self.spacing[0],
            self.origin[1] + iy as f64 * self.spacing[1],
            self.origin[2] + iz as f64 * self.spacing[2],
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidField("grid has no points".into()));
        }
        if self.b.len() != n || self.mask.len() != n {
            return Err(Error::InvalidField(format!(
                "expected {n} samples, got {} field values and {} mask flags",
                self.b.len(),
                self.mask.len()
            )));
        }
        if !self.spacing.iter().all(|&d| d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidField(format!(
                "spacings must be positive, got {:?}",
                self.spacing
            )));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidField("origin must be finite".into()));
        }
        if let Some(i) = self.b.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidField(format!("non-finite field at sample {i}")));
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(Error::InvalidField("diamond mask is empty".into()));
        }
        Ok(())
    }

    /// Plain-text table: a header `# nx ny nz dx dy dz`, then one
    /// `x y z Bx By Bz mask` row per sample, x fastest, SI units, mask 0/1.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let [nx, ny, nz] = self.dims;
        let [dx, dy, dz] = self.spacing;
        writeln!(out, "# {nx} {ny} {nz} {dx:?} {dy:?} {dz:?}").unwrap();
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = self.index(ix, iy, iz);
                    let p = self.position(ix, iy, iz);
                    let b = self.b[i];
                    writeln!(
                        out,
                        "{:?} {:?} {:?} {:?} {:?} {:?} {}",
                        p.x, p.y, p.z, b.x, b.y, b.z, self.mask[i] as u8
                    )
                    .unwrap();
                }
            }
        }
        out
    }

    /// Parses the text format described in `docs/fieldmap-format.md`.
    pub fn from_text(text: &str) -> Result<FieldMap> {
        let err = |line: usize, msg: String| Error::InvalidField(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidField("empty field map".into()))?;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| err(hline + 1, "header must start with '#'".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(err(hline + 1, format!("header needs 6 fields, found {}", h.len())));
        }
        let mut dims = [0usize; 3];
        let mut spacing = [0.0; 3];
        for k in 0..3 {
            dims[k] = h[k]
                .parse()
                .map_err(|e| err(hline + 1, format!("bad grid size {:?}: {e}", h[k])))?;
            spacing[k] = h[k + 3]
                .parse()
                .map_err(|e| err(hline + 1, format!("bad spacing {:?}: {e}", h[k + 3])))?;
        }
        let n: usize = dims.iter().product();
        let mut b = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        for (lno, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(err(lno + 1, format!("expected 7 columns, found {}", f.len())));
            }
            let mut v = [0.0; 6];
            for k in 0..6 {
                v[k] = f[k]
                    .parse()
                    .map_err(|e| err(lno + 1, format!("bad number {:?}: {e}", f[k])))?;
            }
            let m = match f[6] {
                "0" => false,
                "1" => true,
                other => return Err(err(lno + 1, format!("mask must be 0 or 1, found {other:?}"))),
            };
            positions.push(Vector3::new(v[0], v[1], v[2]));
            b.push(Vector3::new(v[3], v[4], v[5]));
            mask.push(m);
        }
        if b.len() != n {
            return Err(Error::InvalidField(format!(
                "header declares {n} samples, found {}",
                b.len()
            )));
        }
        let origin = [positions[0].x, positions[0].y, positions[0].z];
        let map = FieldMap {
            dims,
            spacing,
            origin,
            b,
            mask,
        };
        map.validate()?;
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let i = map.index(ix, iy, iz);
                    let expect = map.position(ix, iy, iz);
                    let tol = 1e-6 * spacing.iter().cloned().fold(f64::INFINITY, f64::min) + 1e-12 * expect.norm();
                    if (positions[i] - expect).amax() > tol {
                        return Err(Error::InvalidField(format!(
                            "sample {i} at {:?} is off the declared grid (expected {:?})",
                            positions[i].as_slice(),
                            expect.as_slice()
                        )));
                    }
                }
            }
        }
        Ok(map)
    }

    pub fn read(path: &Path) -> Result<FieldMap> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FieldMap::from_text(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Per-sample spin density (cm⁻³), polarization and angle φ between the NV
/// axis and the local cavity field.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMap {
    pub n_s: Vec<f64>,
    pub p_z: Vec<f64>,
    pub phi: Vec<f64>,
}

impl EnsembleMap {
    pub fn constant(len: usize, n_s: f64, p_z: f64, phi: f64) -> Self {
        Self {
            n_s: vec![n_s; len],
            p_z: vec![p_z; len],
            phi: vec![phi; len],
        }
    }

    /// Uniform density and polarization; φ from a single NV axis. Points
    /// where the field vanishes get φ = π/2 (they carry no weight).
    pub fn uniform_with_axis(field: &FieldMap, n_s: f64, p_z: f64, axis: &Vector3<f64>) -> Result<Self> {
        let norm = axis.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("NV axis must be a non-zero vector"));
        }
        let axis = axis / norm;
        let phi = field
            .b
            .iter()
            .map(|b| {
                let bn = b.norm();
                if bn == 0.0 {
                    FRAC_PI_2
                } else {
                    (axis.dot(b) / bn).clamp(-1.0, 1.0).acos()
                }
            })
            .collect();
        Ok(Self {
            n_s: vec![n_s; field.len()],
            p_z: vec![p_z; field.len()],
            phi,
        })
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.n_s.len() != len || self.p_z.len() != len || self.phi.len() != len {
            return Err(Error::invalid(format!(
                "ensemble map sizes ({}, {}, {}) do not match the field grid ({len})",
                self.n_s.len(),
                self.p_z.len(),
                self.phi.len()
            )));
        }
        if let Some(i) = self.n_s.iter().position(|&n| !(n >= 0.0) || !n.is_finite()) {
            return Err(Error::invalid(format!("n_S at sample {i} must be finite and >= 0")));
        }
        if let Some(i) = self.p_z.iter().position(|&p| !(p.abs() <= 1.0)) {
            return Err(Error::invalid(format!("|P_z| at sample {i} exceeds 1")));
        }
        if let Some(i) = self.phi.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("phi at sample {i} is not finite")));
        }
        Ok(())
    }
}

/// Pairwise sum with fixed split points, so the result does not depend on
/// the number of worker threads.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    if values.len() >= PARALLEL_THRESHOLD {
        let (a, b) = rayon::join(|| pairwise_sum(lo), || pairwise_sum(hi));
        a + b
    } else {
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// g (rad/s) by midpoint quadrature: the numerator runs over the diamond
/// mask, the normalization over the whole map.
pub fn coupling_g(
    field: &FieldMap,
    ensemble: &EnsembleMap,
    omega_c: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    field.validate()?;
    ensemble.validate(field.len())?;
    // The common cell volume cancels in the ratio.
    weighted_g(field, ensemble, omega_c, constants, |_| 1.0)
}

fn weighted_g(
    field: &FieldMap,
    ensemble: &EnsembleMap,
    omega_c: f64,
    constants: &PhysicalConstants,
    weight: impl Fn(usize) -> f64 + Sync,
) -> Result<f64> {
    if !(omega_c > 0.0) || !omega_c.is_finite() {
        return Err(Error::invalid(format!("omega_c must be positive, got {omega_c}")));
    }
    let energy: Vec<f64> = field
        .b
        .iter()
        .enumerate()
        .map(|(i, b)| weight(i) * b.norm_squared())
        .collect();
    let weighted: Vec<f64> = (0..field.len())
        .map(|i| {
            if field.mask[i] {
                let s = ensemble.phi[i].sin();
                per_cm3_to_per_m3(ensemble.n_s[i]) * ensemble.p_z[i] * energy[i] * s * s
            } else {
                0.0
            }
        })
        .collect();
    let denom = pairwise_sum(&energy);
    if !(denom > 0.0) {
        return Err(Error::InvalidField("field energy integral vanishes".into()));
    }
    let ratio = pairwise_sum(&weighted) / denom;
    let ge = constants.gamma_e();
    let g2 = ge * ge * constants.mu0() * constants.hbar() * omega_c * ratio;
    if g2 < 0.0 {
        return Err(Error::invalid(format!(
            "g^2 = {g2:e} is negative (net inverted polarization in the mask)"
        )));
    }
    Ok(g2.sqrt())
}

/// Weights (in units of the fine spacing) for integrating over all `n`
/// fine cells using only every `step`-th sample. Interior samples get
/// `step`; the two end weights are fixed so constants and linear functions
/// come out exact, which keeps the covered interval identical to the full
/// grid's.
fn coarse_weights(n: usize, step: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n == 1 || step == 1 {
        w.iter_mut().for_each(|v| *v = 1.0);
        return w;
    }
    let kept: Vec<usize> = (0..n).step_by(step).collect();
    let m = kept.len() - 1;
    // sample i sits at u = i + 1/2 on the interval [0, n]
    let u = |i: usize| i as f64 + 0.5;
    let interior = &kept[1..m];
    let r0 = n as f64 - step as f64 * interior.len() as f64;
    let r1 = 0.5 * (n * n) as f64 - step as f64 * interior.iter().map(|&i| u(i)).sum::<f64>();
    let (first, last) = (kept[0], kept[m]);
    let w_last = (r1 - u(first) * r0) / (u(last) - u(first));
    w[first] = r0 - w_last;
    w[last] = w_last;
    for &i in interior {
        w[i] = step as f64;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub step: usize,
    /// Samples used along each axis.
    pub dims: [usize; 3],
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    /// Full grid, every 2nd sample, every 4th sample.
    pub levels: Vec<RefinementLevel>,
    /// |g_2 − g_1|/g_1.
    pub rel_diff_half: f64,
    /// |g_4 − g_2|/g_1.
    pub rel_diff_quarter: f64,
    /// log₂ of the ratio of successive differences, when both are
    /// above rounding level.
    pub observed_order: Option<f64>,
    pub slow_convergence: bool,
}

/// Quadrature convergence estimate: g from the full grid and from every
/// 2nd and every 4th sample along each non-singleton axis. The coarse
/// levels reweight their end samples so all levels integrate over the same
/// box; a smooth integrand then shows second-order convergence, while a
/// mask edge cutting through cells drops to first order and is flagged.
pub fn refine_check(
    field: &FieldMap,
    ensemble: &EnsembleMap,
    omega_c: f64,
    constants: &PhysicalConstants,
) -> Result<RefinementReport> {
    field.validate()?;
    ensemble.validate(field.len())?;
    if field.dims.iter().all(|&n| n <= 1) || field.dims.iter().any(|&n| n > 1 && n < 5) {
        return Err(Error::invalid(format!(
            "refinement needs at least 5 points on every non-singleton axis, got {:?}",
            field.dims
        )));
    }
    let [nx, ny, nz] = field.dims;
    let mut levels = Vec::new();
    for step in [1, 2, 4] {
        let (wx, wy, wz) = (
            coarse_weights(nx, step),
            coarse_weights(ny, step),
            coarse_weights(nz, step),
        );
        let used = |w: &[f64]| w.iter().filter(|&&v| v != 0.0).count();
        let dims = [used(&wx), used(&wy), used(&wz)];
        let weight = |i: usize| wx[i % nx] * wy[(i / nx) % ny] * wz[i / (nx * ny)];
        let g = weighted_g(field, ensemble, omega_c, constants, weight)?;
        levels.push(RefinementLevel { step, dims, g });
    }
    let g1 = levels[0].g;
    let scale = if g1 != 0.0 { g1.abs() } else { 1.0 };
    let rel_half = (levels[1].g - g1).abs() / scale;
    let rel_quarter = (levels[2].g - levels[1].g).abs() / scale;
    let rounding = 1e-12;
    let observed_order = if rel_half > rounding && rel_quarter > rounding {
        Some((rel_quarter / rel_half).log2())
    } else {
        None
    };
    let slow_convergence = match observed_order {
        Some(p) => p < SLOW_ORDER,
        None => false,
    };
    Ok(RefinementReport {
        levels,
        rel_diff_half: rel_half,
        rel_diff_quarter: rel_quarter,
        observed_order,
        slow_convergence,
    })
}

/// Geometry of the built-in resonator model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralGeometry {
    /// Loop radii run from `r_inner` to `r_outer` (m).
    pub r_inner: f64,
    pub r_outer: f64,
    pub turns: usize,
    /// Core radius regularizing the wire singularity (m).
    pub softening: f64,
    /// Box half-widths (m).
    pub half_box: [f64; 3],
    /// Diamond slab: |x|, |y| ≤ half_width, z_min ≤ z ≤ z_max (m).
    pub diamond_half_width: f64,
    pub diamond_z: [f64; 2],
}

impl Default for SpiralGeometry {
    fn default() -> Self {
        Self {
            r_inner: 0.7e-3,
            r_outer: 1.5e-3,
            turns: 9,
            softening: 20e-6,
            half_box: [2.0e-3, 2.0e-3, 1.5e-3],
            diamond_half_width: 1.5e-3,
            diamond_z: [0.05e-3, 0.55e-3],
        }
    }
}

const LOOP_SEGMENTS: usize = 128;

/// Field of concentric planar current loops (unit current, z = 0 plane) by
/// softened Biot–Savart, sampled on a cell-centred grid of `dims` points
/// filling the geometry's box.
pub fn synthetic_spiral_field_map(geometry: &SpiralGeometry, dims: [usize; 3]) -> Result<FieldMap> {
    if dims.contains(&0) {
        return Err(Error::invalid("field map dimensions must be positive"));
    }
    if geometry.turns == 0 || !(geometry.r_inner > 0.0) || geometry.r_outer < geometry.r_inner {
        return Err(Error::invalid("spiral needs turns >= 1 and 0 < r_inner <= r_outer"));
    }
    let mut spacing = [0.0; 3];
    let mut origin = [0.0; 3];
    for k in 0..3 {
        spacing[k] = 2.0 * geometry.half_box[k] / dims[k] as f64;
        origin[k] = -geometry.half_box[k] + 0.5 * spacing[k];
    }
    let radii: Vec<f64> = (0..geometry.turns)
        .map(|t| {
            if geometry.turns == 1 {
                geometry.r_inner
            } else {
                geometry.r_inner + (geometry.r_outer - geometry.r_inner) * t as f64 / (geometry.turns - 1) as f64
            }
        })
        .collect();
    // (midpoint, dl) for every wire segment
    let segments: Vec<(Vector3<f64>, Vector3<f64>)> = radii
        .iter()
        .flat_map(|&r| {
            (0..LOOP_SEGMENTS).map(move |s| {
                let a0 = std::f64::consts::TAU * s as f64 / LOOP_SEGMENTS as f64;
                let a1 = std::f64::consts::TAU * (s + 1) as f64 / LOOP_SEGMENTS as f64;
                let p0 = Vector3::new(r * a0.cos(), r * a0.sin(), 0.0);
                let p1 = Vector3::new(r * a1.cos(), r * a1.sin(), 0.0);
                (0.5 * (p0 + p1), p1 - p0)
            })
        })
        .collect();
    let eps2 = geometry.softening * geometry.softening;
    let prefactor = PhysicalConstants::MU0 / (4.0 * std::f64::consts::PI);

    let n: usize = dims.iter().product();
    use rayon::prelude::*;
    let samples: Vec<(Vector3<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ix = i % dims[0];
            let iy = (i / dims[0]) % dims[1];
            let iz = i / (dims[0] * dims[1]);
            let p = Vector3::new(
                origin[0] + ix as f64 * spacing[0],
                origin[1] + iy as f64 * spacing[1],
                origin[2] + iz as f64 * spacing[2],
            );
            let mut b = Vector3::zeros();
            for (mid, dl) in &segments {
                let r = p - mid;
                let d2 = r.norm_squared() + eps2;
                b += dl.cross(&r) / (d2 * d2.sqrt());
            }
            let inside = p.x.abs() <= geometry.diamond_half_width
                && p.y.abs() <= geometry.diamond_half_width
                && p.z >= geometry.diamond_z[0]
                && p.z <= geometry.diamond_z[1];
            (b * prefactor, inside)
        })
        .collect();
    let (b, mask) = samples.into_iter().unzip();
    let map = FieldMap {
        dims,
        spacing,
        origin,
        b,
        mask,
    };
    map.validate()?;
    Ok(map)
}
