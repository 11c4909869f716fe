//! One entry point per run mode, shared by the binary and the tests.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::{self, hyperbola_frequency, peak_field_positions, CrossingOutcome, PeakEntry};
use crate::bloch::{closed_form_pz, cooperativity, integrate_to_steady_state, BlochCavityState, SuperharmonicPoint};
use crate::config::{linspace, Mode, RunConfig, Species};
use crate::coupling::{self, EnsembleMap, FieldMap, RefinementReport, SpiralGeometry};
use crate::error::{Error, Result};
use crate::lattice;
use crate::output::Table;
use crate::spin::{self, NvParams, P1Params, StateLabel};
use crate::units::{mt_to_tesla, per_m3_to_per_cm3, rad_s_to_hz, rad_s_to_mhz, tesla_to_mt};

fn require(config: &RunConfig, mode: Mode) -> Result<()> {
    if config.mode() == mode {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "config has mode = {}, expected {mode}",
            config.mode()
        )))
    }
}

fn meta(config: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config.echo(),
    })
}

/// Transition frequencies (MHz) against |B| (mT) for a field tilted from
/// [111] by `transitions.theta_deg`: both lines of each NV orientation and
/// the three m_I lines of a P1 along [111] and along an unparallel axis.
pub fn transitions(config: &RunConfig) -> Result<Table> {
    require(config, Mode::Transitions)?;
    let t = &config.file.transitions;
    let m = &config.model;
    let theta = t.theta_deg.unwrap_or(config.file.physics.theta_s_deg).to_radians();
    let axes = lattice::nv_axes();
    let with_nv = t.species != Species::P1;
    let with_p1 = t.species != Species::Nv;

    let mut columns = vec!["b_mt".to_string()];
    if with_nv {
        for o in 0..4 {
            columns.push(format!("nv{o}_lower_mhz"));
            columns.push(format!("nv{o}_upper_mhz"));
        }
    }
    let p1_axes = [(axes[0], "par"), (axes[1], "unpar")];
    if with_p1 {
        for (_, name) in &p1_axes {
            for mi in ["p", "0", "m"] {
                columns.push(format!("p1_{name}_mi{mi}_mhz"));
            }
        }
    }
    columns.push("ambiguous".into());

    let fields = linspace(t.b_min_mt, t.b_max_mt, t.b_points);
    let rows = fields
        .par_iter()
        .map(|&b_mt| -> Result<Vec<f64>> {
            let b = lattice::field_near_111(mt_to_tesla(b_mt), theta);
            let mut row = vec![b_mt];
            let mut ambiguous = 0usize;
            if with_nv {
                for axis in &axes {
                    let set = spin::nv_transitions(&NvParams::new(m.d, m.e, *axis)?, &b, &m.constants)?;
                    ambiguous += set.entries.iter().filter(|e| e.ambiguous).count();
                    row.extend(set.frequencies().into_iter().map(rad_s_to_mhz));
                }
            }
            if with_p1 {
                for (axis, _) in &p1_axes {
                    let set = spin::p1_transitions(&P1Params::new(m.a_par, m.a_perp, *axis)?, &b, &m.constants)?;
                    ambiguous += set.entries.iter().filter(|e| e.ambiguous).count();
                    for mi in [1, 0, -1] {
                        let f = set
                            .entries
                            .iter()
                            .find(|e| matches!(e.to, StateLabel::P1 { m_i, .. } if m_i == mi))
                            .map_or(f64::NAN, |e| rad_s_to_mhz(e.frequency));
                        row.push(f);
                    }
                }
            }
            row.push(ambiguous as f64);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        columns,
        rows,
        metadata: meta(config),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperbolaCurve {
    pub l: u32,
    pub f_mhz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakRow {
    #[serde(flatten)]
    pub peak: PeakEntry,
    pub f_mhz: f64,
    /// (δB₋, δB₊) in mT, absent when the peak lies below the hyperbola vertex.
    pub delta_b_mt: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AtlasReport {
    pub lac_field_mt: f64,
    pub f_a0_mhz: f64,
    pub small_angle: bool,
    pub delta_b_mt: Vec<f64>,
    pub hyperbolas: Vec<HyperbolaCurve>,
    pub p1_splitting_parallel_mhz: f64,
    pub p1_splitting_unparallel_mhz: f64,
    pub peaks: Vec<PeakRow>,
    pub dipolar_density_cm3: f64,
    pub tripolar_rate_hz: f64,
    pub metadata: serde_json::Value,
}

impl AtlasReport {
    /// Peak-grid rows for CSV output.
    pub fn peak_table(&self) -> Table {
        let columns = [
            "k",
            "l",
            "numerator",
            "denominator",
            "f_mhz",
            "half_order",
            "delta_b_minus_mt",
            "delta_b_plus_mt",
        ]
        .map(String::from)
        .to_vec();
        let rows = self
            .peaks
            .iter()
            .map(|p| {
                let [lo, hi] = p.delta_b_mt.unwrap_or([f64::NAN; 2]);
                vec![
                    p.peak.k as f64,
                    p.peak.l as f64,
                    p.peak.numerator as f64,
                    p.peak.denominator as f64,
                    p.f_mhz,
                    p.peak.half_order as u8 as f64,
                    lo,
                    hi,
                ]
            })
            .collect();
        Table {
            columns,
            rows,
            metadata: self.metadata.clone(),
        }
    }
}

pub fn atlas(config: &RunConfig) -> Result<AtlasReport> {
    require(config, Mode::Atlas)?;
    let a = &config.file.atlas;
    let m = &config.model;
    let lac = m.lac()?;
    let grid = config.peak_grid()?;
    let delta_b_mt = linspace(a.delta_b_min_mt, a.delta_b_max_mt, a.delta_b_points);
    let hyperbolas = (1..=a.l_max)
        .map(|l| {
            let f_mhz = delta_b_mt
                .iter()
                .map(|&db| hyperbola_frequency(&lac, mt_to_tesla(db), l as i64).map(|hz| hz * 1e-6))
                .collect::<Result<Vec<_>>>()?;
            Ok(HyperbolaCurve { l, f_mhz })
        })
        .collect::<Result<Vec<_>>>()?;
    let p1 = P1Params::new(m.a_par, m.a_perp, Vector3::z())?;
    let peaks = peak_field_positions(&lac, &grid)?
        .into_iter()
        .map(|c| PeakRow {
            peak: c.peak,
            f_mhz: c.peak.frequency * 1e-6,
            delta_b_mt: match c.outcome {
                CrossingOutcome::Crossing { delta_b } => Some(delta_b.map(tesla_to_mt)),
                CrossingOutcome::Omitted(_) => None,
            },
        })
        .collect();
    let tri = config.tripolar();
    Ok(AtlasReport {
        lac_field_mt: tesla_to_mt(lac.lac_field()),
        f_a0_mhz: rad_s_to_mhz(lac.omega_a0()),
        small_angle: lac.is_small_angle(),
        delta_b_mt,
        hyperbolas,
        p1_splitting_parallel_mhz: rad_s_to_mhz(atlas::hyperfine_splitting(&p1, 0.0)),
        p1_splitting_unparallel_mhz: rad_s_to_mhz(atlas::hyperfine_splitting(&p1, lattice::inter_axis_cosine().acos())),
        peaks,
        dipolar_density_cm3: per_m3_to_per_cm3(atlas::dipolar_density(m.d, &m.constants)),
        tripolar_rate_hz: rad_s_to_hz(atlas::tripolar_rate(&tri)?),
        metadata: meta(config),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeCheckRow {
    pub point: SuperharmonicPoint,
    pub eta: f64,
    pub closed_form: f64,
    pub ode: f64,
    pub rel_error: f64,
    pub periods: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeCheckReport {
    pub rows: Vec<OdeCheckRow>,
    pub max_rel_error: f64,
    pub all_converged: bool,
    /// All converged and every row within `ode_check.agreement`.
    pub passed: bool,
    pub metadata: serde_json::Value,
}

impl OdeCheckReport {
    pub fn table(&self) -> Table {
        let columns = [
            "l",
            "eta",
            "kappa",
            "beta_delta",
            "beta_al",
            "beta_cl",
            "z",
            "closed_form",
            "ode",
            "rel_error",
            "periods",
            "converged",
        ]
        .map(String::from)
        .to_vec();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let p = &r.point;
                vec![
                    p.l as f64,
                    r.eta,
                    p.kappa,
                    p.beta_delta,
                    p.beta_al,
                    p.beta_cl,
                    p.z,
                    r.closed_form,
                    r.ode,
                    r.rel_error,
                    r.periods as f64,
                    r.converged as u8 as f64,
                ]
            })
            .collect();
        Table {
            columns,
            rows,
            metadata: self.metadata.clone(),
        }
    }
}

/// The (l, κ, η) points of an ode-check run.
pub fn ode_check_points(config: &RunConfig) -> Vec<(f64, SuperharmonicPoint)> {
    let o = &config.file.ode_check;
    let etas = linspace(o.eta_min, o.eta_max, o.eta_points);
    let mut points = Vec::new();
    for &l in &o.l {
        for &kappa in &o.kappa {
            for &eta in &etas {
                points.push((
                    eta,
                    SuperharmonicPoint {
                        l,
                        beta_cl: o.beta_cl,
                        beta_al: o.beta_al_per_eta * eta,
                        beta_delta: o.beta_delta0 * eta / eta.hypot(1.0),
                        kappa,
                        z: o.z,
                    },
                ));
            }
        }
    }
    points
}

/// Integrates the Bloch–cavity equations at every configured point and
/// compares the period-averaged P_z with the closed form.
pub fn ode_check(config: &RunConfig) -> Result<OdeCheckReport> {
    require(config, Mode::OdeCheck)?;
    let o = &config.file.ode_check;
    let rates = config.scaled_rates();
    let rows = ode_check_points(config)
        .into_par_iter()
        .map(|(eta, point)| {
            let params = point.to_params(&rates, o.p_zs)?;
            let closed = closed_form_pz(&point, o.p_zs)?;
            let report =
                integrate_to_steady_state(&params, BlochCavityState::relaxed(o.p_zs), o.tolerance, o.max_periods)?;
            let ode = report.mean_p_z / o.p_zs;
            Ok(OdeCheckRow {
                point,
                eta,
                closed_form: closed,
                ode,
                rel_error: (ode - closed).abs() / closed.abs(),
                periods: report.periods,
                converged: report.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let all_converged = rows.iter().all(|r| r.converged);
    Ok(OdeCheckReport {
        passed: all_converged && max_rel_error <= o.agreement,
        rows,
        max_rel_error,
        all_converged,
        metadata: meta(config),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub source: String,
    pub dims: [usize; 3],
    pub masked_points: usize,
    pub n_s_cm3: f64,
    pub p_z: f64,
    pub omega_c_mhz: f64,
    /// g in rad/s.
    pub g_rad_s: f64,
    pub g_over_2pi_mhz: f64,
    /// g²/(γ_2 γ_c) with the model's damping rates.
    pub kappa: f64,
    pub refinement: Option<RefinementReport>,
    pub metadata: serde_json::Value,
}

/// NV spin density for an NV fraction of lattice sites.
pub fn nv_density_cm3(p_nv: f64) -> f64 {
    per_m3_to_per_cm3(atlas::DIAMOND_ATOM_DENSITY_PER_M3) * p_nv
}

pub fn coupling(config: &RunConfig) -> Result<CouplingReport> {
    require(config, Mode::Coupling)?;
    let c = &config.file.coupling;
    let m = &config.model;
    let (field, source) = match &config.field_map {
        Some(path) => (FieldMap::read(path)?, path.display().to_string()),
        None => (
            coupling::synthetic_spiral_field_map(&SpiralGeometry::default(), c.synthetic_dims)?,
            "synthetic spiral".to_string(),
        ),
    };
    let n_s = c.n_s_cm3.unwrap_or_else(|| nv_density_cm3(c.p_nv));
    let axis = Vector3::from(c.nv_axis);
    let ensemble = EnsembleMap::uniform_with_axis(&field, n_s, c.p_z, &axis)?;
    let g = coupling::coupling_g(&field, &ensemble, m.omega_c, &m.constants)?;
    let refinement = if c.refine {
        Some(coupling::refine_check(&field, &ensemble, m.omega_c, &m.constants)?)
    } else {
        None
    };
    Ok(CouplingReport {
        source,
        dims: field.dims,
        masked_points: field.mask.iter().filter(|&&x| x).count(),
        n_s_cm3: n_s,
        p_z: c.p_z,
        omega_c_mhz: rad_s_to_mhz(m.omega_c),
        g_rad_s: g,
        g_over_2pi_mhz: rad_s_to_mhz(g),
        kappa: cooperativity(g, m.gamma_2, m.gamma_c)?,
        refinement,
        metadata: meta(config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn transitions_table_shape() {
        let cfg = parse_config("mode = \"transitions\"\n[transitions]\nb_min_mt = 0\nb_max_mt = 120\nb_points = 7\n")
            .unwrap();
        let t = transitions(&cfg).unwrap();
        assert_eq!(t.columns.len(), 1 + 8 + 6 + 1);
        assert_eq!(t.rows.len(), 7);
        // zero field: NV lines at D, P1 flagged ambiguous
        let z = &t.rows[0];
        assert!((z[1] - 2870.0).abs() < 1e-6 && (z[2] - 2870.0).abs() < 1e-6);
        assert!(z[15] > 0.0);
    }

    #[test]
    fn nv_only_transitions() {
        let cfg = parse_config("mode = \"transitions\"\n[transitions]\nspecies = \"nv\"\nb_points = 3\n").unwrap();
        assert_eq!(transitions(&cfg).unwrap().columns.len(), 10);
    }

    #[test]
    fn atlas_report_values() {
        let cfg = parse_config("mode = \"atlas\"\n").unwrap();
        let r = atlas(&cfg).unwrap();
        assert!((r.lac_field_mt - 102.39).abs() < 0.01);
        assert!((r.f_a0_mhz - 106.26).abs() < 0.01);
        assert!((r.p1_splitting_parallel_mhz - 114.03).abs() < 1e-9);
        assert!((r.p1_splitting_unparallel_mhz - 85.58).abs() < 0.01);
        assert_eq!(r.hyperbolas.len(), 10);
        assert!(r.peaks.iter().any(|p| p.delta_b_mt.is_none()));
        assert_eq!(r.peak_table().rows.len(), r.peaks.len());
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let cfg = parse_config("mode = \"sweep\"\n").unwrap();
        assert!(matches!(atlas(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn small_ode_check() {
        let cfg = parse_config(
            "mode = \"ode-check\"\n[ode_check]\nl = [2]\neta_min = -1\neta_max = 1\neta_points = 3\nkappa = [0.0, 0.4]\n",
        )
        .unwrap();
        let r = ode_check(&cfg).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert!(r.passed, "{:?}", r.rows);
        assert_eq!(r.table().rows.len(), 6);
    }

    #[test]
    fn coupling_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let map = coupling::synthetic_spiral_field_map(&SpiralGeometry::default(), [10, 10, 8]).unwrap();
        map.write(&dir.path().join("map.txt")).unwrap();
        let text = "mode = \"coupling\"\n[coupling]\nfield_map = \"map.txt\"\nrefine = false\n";
        let cfg = crate::config::parse_config_in(text, dir.path()).unwrap();
        let r = coupling(&cfg).unwrap();
        assert_eq!(r.dims, [10, 10, 8]);
        assert!(r.g_rad_s > 0.0 && r.refinement.is_none());
    }
}
