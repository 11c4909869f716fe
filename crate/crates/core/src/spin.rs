//! NV⁻ triplet and P1 electron–nuclear spin Hamiltonians, their
//! diagonalization, and labeled ESR transitions.
//!
//! All energies are angular frequencies (rad/s) and fields are in tesla.
//! Each defect Hamiltonian is written in a local frame whose z axis is the
//! defect axis; the transverse x axis comes from [`lattice::frame`].

use std::fmt;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::lattice;
use crate::linalg::{eigh, CMatrix, Eigen};

const AXIS_NORM_TOLERANCE: f64 = 1e-12;

/// Overlap below which a state's (m_S, m_I) character is called ambiguous.
pub const LABEL_OVERLAP_THRESHOLD: f64 = 0.5;

/// Sign in front of the electron Zeeman term. The NV Hamiltonian is written
/// with −γ_e B·S and the P1 Hamiltonian with +γ_e B·S; transition
/// frequencies do not depend on it, level labels do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeemanSign {
    Minus,
    Plus,
}

impl ZeemanSign {
    fn factor(self) -> f64 {
        match self {
            ZeemanSign::Minus => -1.0,
            ZeemanSign::Plus => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvParams {
    /// Zero-field splitting (rad/s).
    pub d: f64,
    /// Strain splitting (rad/s).
    pub e: f64,
    pub axis: Vector3<f64>,
    pub zeeman_sign: ZeemanSign,
}

impl NvParams {
    pub fn new(d: f64, e: f64, axis: Vector3<f64>) -> Result<Self> {
        let p = Self {
            d,
            e,
            axis,
            zeeman_sign: ZeemanSign::Minus,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid(format!(
                "NV zero-field splitting must be > 0, got {}",
                self.d
            )));
        }
        if !(self.e >= 0.0 && self.e.is_finite()) {
            return Err(Error::invalid(format!(
                "NV strain splitting must be >= 0, got {}",
                self.e
            )));
        }
        check_axis(&self.axis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1Params {
    /// Longitudinal hyperfine constant (rad/s).
    pub a_par: f64,
    /// Transverse hyperfine constant (rad/s).
    pub a_perp: f64,
    /// Jahn-Teller axis.
    pub axis: Vector3<f64>,
}

impl P1Params {
    pub fn new(a_par: f64, a_perp: f64, axis: Vector3<f64>) -> Result<Self> {
        let p = Self { a_par, a_perp, axis };
        p.validate()?;
        Ok(p)
    }

    /// ¹⁴N hyperfine constants A_∥/2π = 114.03 MHz, A_⊥/2π = 81.33 MHz.
    pub fn nitrogen14(axis: Vector3<f64>) -> Self {
        Self {
            a_par: crate::units::mhz_to_rad_s(114.03),
            a_perp: crate::units::mhz_to_rad_s(81.33),
            axis,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_par.is_finite() && self.a_perp.is_finite()) {
            return Err(Error::invalid("P1 hyperfine constants must be finite"));
        }
        check_axis(&self.axis)
    }
}

fn check_axis(axis: &Vector3<f64>) -> Result<()> {
    let n = axis.norm();
    if (n - 1.0).abs() > AXIS_NORM_TOLERANCE {
        return Err(Error::invalid(format!(
            "defect axis must be a unit vector, |axis| = {n}"
        )));
    }
    Ok(())
}

fn check_field(b: &Vector3<f64>) -> Result<()> {
    if b.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("magnetic field must be finite"))
    }
}

/// Basis-state label: m_S for the NV triplet, (m_S, m_I) for P1. Electron
/// m_S of the P1 is stored doubled so it stays integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    Nv { m_s: i8 },
    P1 { twice_m_s: i8, m_i: i8 },
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StateLabel::Nv { m_s } => write!(f, "m_S={m_s:+}"),
            StateLabel::P1 { twice_m_s, m_i } => write!(f, "(m_S={twice_m_s:+}/2,m_I={m_i:+})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpinHamiltonian {
    pub matrix: CMatrix,
    pub basis_labels: Vec<StateLabel>,
    pub zeeman_sign: ZeemanSign,
}

impl SpinHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Angular frequency (rad/s), non-negative.
    pub frequency: f64,
    pub from: StateLabel,
    pub to: StateLabel,
    /// Index into [`lattice::nv_axes`] when the defect axis is a ⟨111⟩ direction.
    pub orientation: Option<usize>,
    /// Set when either endpoint had no dominant basis character.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionSet {
    pub entries: Vec<Transition>,
}

impl TransitionSet {
    fn from_entries(mut entries: Vec<Transition>) -> Self {
        entries.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        Self { entries }
    }

    pub fn merge(sets: impl IntoIterator<Item = TransitionSet>) -> Self {
        Self::from_entries(sets.into_iter().flat_map(|s| s.entries).collect())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|t| t.frequency).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn any_ambiguous(&self) -> bool {
        self.entries.iter().any(|t| t.ambiguous)
    }
}

/// Spin matrices (S_x, S_y, S_z) in units of ħ for spin `twice_s / 2`, in
/// the basis m = s, s−1, …, −s.
pub fn spin_matrices(twice_s: usize) -> [CMatrix; 3] {
    let n = twice_s + 1;
    let s = twice_s as f64 / 2.0;
    let m = |i: usize| s - i as f64;
    // S+ |m⟩ = sqrt(s(s+1) − m(m+1)) |m+1⟩; |m+1⟩ has index i−1.
    let mut plus = CMatrix::zeros(n);
    for i in 1..n {
        let mi = m(i);
        plus[(i - 1, i)] = Complex64::new((s * (s + 1.0) - mi * (mi + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let sx = (&plus + &minus).scale(0.5);
    let sy = (&plus - &minus).scale_complex(Complex64::new(0.0, -0.5));
    let sz = CMatrix::from_real_diagonal(&(0..n).map(m).collect::<Vec<_>>());
    [sx, sy, sz]
}

fn to_local(frame: &[Vector3<f64>; 3], v: &Vector3<f64>) -> [f64; 3] {
    [frame[0].dot(v), frame[1].dot(v), frame[2].dot(v)]
}

fn dot_ops(v: [f64; 3], ops: &[CMatrix; 3]) -> CMatrix {
    let mut out = ops[0].scale(v[0]);
    out = &out + &ops[1].scale(v[1]);
    &out + &ops[2].scale(v[2])
}

/// H/ħ = D S_z² + E(S_+² + S_−²)/2 − γ_e B·S, with z along the NV axis.
pub fn build_nv_hamiltonian(
    params: &NvParams,
    b: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Result<SpinHamiltonian> {
    params.validate()?;
    check_field(b)?;
    let frame = lattice::frame(&params.axis);
    let [sx, sy, sz] = spin_matrices(2);
    let sz2 = &sz * &sz;
    // (S_+² + S_−²)/2 = S_x² − S_y²
    let strain = &(&sx * &sx) - &(&sy * &sy);
    let zeeman = dot_ops(to_local(&frame, b), &[sx, sy, sz]);
    let matrix = &(&sz2.scale(params.d) + &strain.scale(params.e))
        + &zeeman.scale(params.zeeman_sign.factor() * constants.gamma_e());
    Ok(SpinHamiltonian {
        matrix,
        basis_labels: [1, 0, -1].into_iter().map(|m_s| StateLabel::Nv { m_s }).collect(),
        zeeman_sign: params.zeeman_sign,
    })
}

/// H/ħ = γ_e B·S + A_⊥(S_x I_x + S_y I_y) + A_∥ S_z I_z for electron spin ½
/// and nuclear spin 1, z along the P1 axis. Basis order is electron-major:
/// (+½,+1), (+½,0), (+½,−1), (−½,+1), …
pub fn build_p1_hamiltonian(
    params: &P1Params,
    b: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Result<SpinHamiltonian> {
    params.validate()?;
    check_field(b)?;
    let frame = lattice::frame(&params.axis);
    let s = spin_matrices(1);
    let i = spin_matrices(2);
    let id_s = CMatrix::identity(2);
    let id_i = CMatrix::identity(3);

    let s_full: Vec<CMatrix> = s.iter().map(|op| op.kron(&id_i)).collect();
    let i_full: Vec<CMatrix> = i.iter().map(|op| id_s.kron(op)).collect();

    let bl = to_local(&frame, b);
    let mut h = CMatrix::zeros(6);
    for k in 0..3 {
        h = &h + &s_full[k].scale(constants.gamma_e() * bl[k]);
    }
    let transverse = &(&s_full[0] * &i_full[0]) + &(&s_full[1] * &i_full[1]);
    h = &h + &transverse.scale(params.a_perp);
    h = &h + &(&s_full[2] * &i_full[2]).scale(params.a_par);

    let mut labels = Vec::with_capacity(6);
    for twice_m_s in [1, -1] {
        for m_i in [1, 0, -1] {
            labels.push(StateLabel::P1 { twice_m_s, m_i });
        }
    }
    Ok(SpinHamiltonian {
        matrix: h,
        basis_labels: labels,
        zeeman_sign: ZeemanSign::Plus,
    })
}

/// Eigenvalues (ascending, rad/s) and eigenvectors of a spin Hamiltonian.
pub fn diagonalize(h: &SpinHamiltonian) -> Result<Eigen> {
    eigh(&h.matrix)
}

/// Greedy maximal-overlap assignment of eigenvectors to reference states.
/// Returns, per eigenvector, the reference index and the overlap |⟨ref|ψ⟩|².
fn assign_labels(eigen: &Eigen, reference: &[Vec<Complex64>]) -> Vec<(usize, f64)> {
    let n = reference.len();
    let mut overlap = vec![vec![0.0; n]; n];
    for (k, row) in overlap.iter_mut().enumerate() {
        let psi = eigen.vector(k);
        for (r, slot) in row.iter_mut().enumerate() {
            *slot = crate::linalg::inner(&reference[r], &psi).norm_sqr();
        }
    }
    let mut result = vec![(usize::MAX, 0.0); n];
    let mut state_free = vec![true; n];
    let mut ref_free = vec![true; n];
    for _ in 0..n {
        let mut best = (0, 0, -1.0);
        for k in (0..n).filter(|&k| state_free[k]) {
            for r in (0..n).filter(|&r| ref_free[r]) {
                if overlap[k][r] > best.2 {
                    best = (k, r, overlap[k][r]);
                }
            }
        }
        let (k, r, ov) = best;
        state_free[k] = false;
        ref_free[r] = false;
        result[k] = (r, ov);
    }
    result
}

fn unit_vector(n: usize, i: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[i] = Complex64::new(1.0, 0.0);
    v
}

/// The two ESR transitions of one NV orientation, from the state with
/// dominant m_S = 0 character to the other two eigenstates.
pub fn nv_transitions(params: &NvParams, b: &Vector3<f64>, constants: &PhysicalConstants) -> Result<TransitionSet> {
    let h = build_nv_hamiltonian(params, b, constants)?;
    let eigen = diagonalize(&h)?;
    let reference: Vec<_> = (0..3).map(|i| unit_vector(3, i)).collect();
    let assignment = assign_labels(&eigen, &reference);

    let zero_ref = h
        .basis_labels
        .iter()
        .position(|l| *l == StateLabel::Nv { m_s: 0 })
        .expect("NV basis contains m_S = 0");
    let zero_state = assignment
        .iter()
        .position(|&(r, _)| r == zero_ref)
        .expect("every reference state is assigned");
    let zero_ambiguous = assignment[zero_state].1 < LABEL_OVERLAP_THRESHOLD;
    let orientation = lattice::orientation_index(&params.axis);

    let entries = (0..3)
        .filter(|&k| k != zero_state)
        .map(|k| Transition {
            frequency: (eigen.values[k] - eigen.values[zero_state]).abs(),
            from: h.basis_labels[zero_ref],
            to: h.basis_labels[assignment[k].0],
            orientation,
            ambiguous: zero_ambiguous || assignment[k].1 < LABEL_OVERLAP_THRESHOLD,
        })
        .collect();
    Ok(TransitionSet::from_entries(entries))
}

/// NV transitions for all four ⟨111⟩ orientations sharing D and E.
pub fn nv_transitions_all_orientations(
    d: f64,
    e: f64,
    b: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Result<TransitionSet> {
    let sets = lattice::nv_axes()
        .into_iter()
        .map(|axis| nv_transitions(&NvParams::new(d, e, axis)?, b, constants))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionSet::merge(sets))
}

/// Eigenvectors of u·S (u a unit vector) ordered from m = +s down to −s.
fn quantized_along(u: &Vector3<f64>, ops: &[CMatrix; 3]) -> Result<Vec<Vec<Complex64>>> {
    let proj = dot_ops([u.x, u.y, u.z], ops);
    let e = eigh(&proj)?;
    Ok((0..proj.dim()).rev().map(|k| e.vector(k)).collect())
}

/// The three m_I-conserving ESR transitions of a P1 centre.
///
/// Eigenstates are labeled by overlap with product states whose electron
/// spin is quantized along B and whose nuclear spin is quantized along the
/// hyperfine field A·b̂. At B = 0 every entry is flagged ambiguous.
pub fn p1_transitions(params: &P1Params, b: &Vector3<f64>, constants: &PhysicalConstants) -> Result<TransitionSet> {
    let h = build_p1_hamiltonian(params, b, constants)?;
    let eigen = diagonalize(&h)?;
    let frame = lattice::frame(&params.axis);
    let zero_field = b.norm() == 0.0;

    let b_hat = if zero_field {
        Vector3::z()
    } else {
        let l = to_local(&frame, b);
        Vector3::new(l[0], l[1], l[2]).normalize()
    };
    let hyperfine_field = Vector3::new(params.a_perp * b_hat.x, params.a_perp * b_hat.y, params.a_par * b_hat.z);
    let n_hat = if hyperfine_field.norm() > 0.0 {
        hyperfine_field.normalize()
    } else {
        b_hat
    };

    let electron = quantized_along(&b_hat, &spin_matrices(1))?;
    let nucleus = quantized_along(&n_hat, &spin_matrices(2))?;
    let mut reference = Vec::with_capacity(6);
    for e in &electron {
        for n in &nucleus {
            reference.push(e.iter().flat_map(|a| n.iter().map(move |b| a * b)).collect::<Vec<_>>());
        }
    }
    let assignment = assign_labels(&eigen, &reference);
    let state_of = |r: usize| assignment.iter().position(|&(rr, _)| rr == r).expect("assigned");

    let orientation = lattice::orientation_index(&params.axis);
    let entries = (0..3)
        .map(|nuc| {
            let upper = state_of(nuc);
            let lower = state_of(3 + nuc);
            Transition {
                frequency: (eigen.values[upper] - eigen.values[lower]).abs(),
                from: h.basis_labels[3 + nuc],
                to: h.basis_labels[nuc],
                orientation,
                ambiguous: zero_field
                    || assignment[upper].1 < LABEL_OVERLAP_THRESHOLD
                    || assignment[lower].1 < LABEL_OVERLAP_THRESHOLD,
            }
        })
        .collect();
    Ok(TransitionSet::from_entries(entries))
}

/// Half the separation of the outer (m_I = ±1) P1 lines: the exact
/// counterpart of the high-field hyperfine splitting ω_en.
pub fn p1_satellite_splitting(set: &TransitionSet) -> Option<f64> {
    let outer = |m: i8| {
        set.entries
            .iter()
            .find(|t| matches!(t.to, StateLabel::P1 { m_i, .. } if m_i == m))
            .map(|t| t.frequency)
    };
    Some(((outer(1)? - outer(-1)?) / 2.0).abs())
}
