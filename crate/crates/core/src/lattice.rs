//! Diamond lattice directions. Vectors are expressed in the cubic crystal
//! frame.

use nalgebra::Vector3;

/// The four ⟨111⟩ bond directions: [111], [1̄11], [11̄1], [111̄].
pub fn nv_axes() -> [Vector3<f64>; 4] {
    let s = 1.0 / 3f64.sqrt();
    [
        Vector3::new(s, s, s),
        Vector3::new(-s, s, s),
        Vector3::new(s, -s, s),
        Vector3::new(s, s, -s),
    ]
}

/// Index into [`nv_axes`] of the direction parallel or antiparallel to `axis`.
pub fn orientation_index(axis: &Vector3<f64>) -> Option<usize> {
    let n = axis.norm();
    if n == 0.0 {
        return None;
    }
    nv_axes().iter().position(|a| (a.dot(axis) / n).abs() > 1.0 - 1e-9)
}

/// Cosine of the angle between two distinct ⟨111⟩ directions, from the
/// lattice vectors themselves.
pub fn inter_axis_cosine() -> f64 {
    let [a, b, ..] = nv_axes();
    a.dot(&b).abs()
}

/// Unit vector tilted by `theta` from `axis` toward `toward` (which is first
/// projected onto the plane normal to `axis`).
pub fn tilted(axis: &Vector3<f64>, toward: &Vector3<f64>, theta: f64) -> Vector3<f64> {
    let z = axis.normalize();
    let perp = (toward - z * z.dot(toward)).normalize();
    z * theta.cos() + perp * theta.sin()
}

/// Default tilt direction for fields near [111]: along [1̄10], the loop
/// antenna direction.
pub fn default_tilt_direction() -> Vector3<f64> {
    Vector3::new(-1.0, 1.0, 0.0).normalize()
}

/// Field of magnitude `b` tesla at angle `theta` from [111], tilted toward
/// [1̄10].
pub fn field_near_111(b: f64, theta: f64) -> Vector3<f64> {
    tilted(&nv_axes()[0], &default_tilt_direction(), theta) * b
}

/// Right-handed orthonormal frame (x, y, z) with z along `axis`. The x axis
/// is chosen deterministically from the crystal axis least aligned with z.
pub fn frame(axis: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let z = axis.normalize();
    let candidates = [Vector3::x(), Vector3::y(), Vector3::z()];
    let helper = candidates
        .iter()
        .min_by(|a, b| a.dot(&z).abs().total_cmp(&b.dot(&z).abs()))
        .copied()
        .unwrap_or_else(Vector3::x);
    let x = (helper - z * z.dot(&helper)).normalize();
    let y = z.cross(&x);
    [x, y, z]
}
