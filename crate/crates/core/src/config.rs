//! Run configuration: a TOML document in I/O units (MHz, mT, degrees),
//! validated and converted to internal units (rad/s, tesla, radians).
//!
//! Every key is documented in `docs/config.md`.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::atlas::{LacParams, PeakGridParams, TripolarParams};
use crate::bloch::ScaledRates;
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::units::mhz_to_rad_s;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Transitions,
    Atlas,
    Sweep,
    OdeCheck,
    Coupling,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Transitions => "transitions",
            Mode::Atlas => "atlas",
            Mode::Sweep => "sweep",
            Mode::OdeCheck => "ode-check",
            Mode::Coupling => "coupling",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LMode {
    /// Only the order with the smallest |β_al| per cell.
    #[default]
    Dominant,
    /// Product of P_z/P_zs over l = 1..l_max.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Nv,
    P1,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub d_mhz: f64,
    pub e_mhz: f64,
    pub gamma_e_ghz_per_t: f64,
    /// Tilt of B_S away from [111].
    pub theta_s_deg: f64,
    pub a_par_mhz: f64,
    pub a_perp_mhz: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            d_mhz: 2870.0,
            e_mhz: 0.0,
            gamma_e_ghz_per_t: PhysicalConstants::GAMMA_E_GHZ_PER_T,
            theta_s_deg: 1.5,
            a_par_mhz: 114.03,
            a_perp_mhz: 81.33,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub omega_c_mhz: f64,
    pub gamma_c_mhz: f64,
    pub gamma_1_mhz: f64,
    pub gamma_2_mhz: f64,
    pub g_mhz: f64,
    pub beta_delta0: f64,
    /// Fixed Bessel argument ω_b/ω_L; mutually exclusive with `omega_b_mhz`.
    pub bessel_z: Option<f64>,
    /// Fixed longitudinal drive amplitude.
    pub omega_b_mhz: Option<f64>,
    pub p_zs: f64,
    pub l_max: u32,
    pub l_mode: LMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            omega_c_mhz: 276.0,
            gamma_c_mhz: 2.87,
            gamma_1_mhz: 2e-5,
            gamma_2_mhz: 30.0,
            g_mhz: 8.0,
            beta_delta0: 10.0,
            bessel_z: None,
            omega_b_mhz: None,
            p_zs: 1.0,
            l_max: 10,
            l_mode: LMode::Dominant,
        }
    }
}

pub const DEFAULT_BESSEL_Z: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub b_min_mt: f64,
    pub b_max_mt: f64,
    pub b_points: usize,
    pub f_min_mhz: f64,
    pub f_max_mhz: f64,
    pub f_points: usize,
    /// Also differentiate along f_LA.
    pub derivative: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            b_min_mt: 92.0,
            b_max_mt: 113.0,
            b_points: 200,
            f_min_mhz: 10.0,
            f_max_mhz: 300.0,
            f_points: 300,
            derivative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionsSection {
    pub b_min_mt: f64,
    pub b_max_mt: f64,
    pub b_points: usize,
    /// Field tilt from [111]; defaults to `physics.theta_s_deg`.
    pub theta_deg: Option<f64>,
    pub species: Species,
}

impl Default for TransitionsSection {
    fn default() -> Self {
        Self {
            b_min_mt: 0.0,
            b_max_mt: 150.0,
            b_points: 151,
            theta_deg: None,
            species: Species::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtlasSection {
    pub f_m_mhz: f64,
    pub l_max: u32,
    pub k_max: u32,
    pub nuclear_rotation: bool,
    pub p_n: f64,
    /// NV density as a fraction of the P1 density.
    pub nv_fraction: f64,
    pub delta_b_min_mt: f64,
    pub delta_b_max_mt: f64,
    pub delta_b_points: usize,
}

impl Default for AtlasSection {
    fn default() -> Self {
        Self {
            f_m_mhz: 86.0,
            l_max: 10,
            k_max: 10,
            nuclear_rotation: false,
            p_n: 1e-4,
            nv_fraction: 0.01,
            delta_b_min_mt: -10.0,
            delta_b_max_mt: 10.0,
            delta_b_points: 201,
        }
    }
}

/// Time-domain cross-check of the closed form at scaled rates. The rates
/// here are plain numbers (s⁻¹), not MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeCheckSection {
    pub l: Vec<u32>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub eta_points: usize,
    pub beta_delta0: f64,
    /// β_al = beta_al_per_eta · η.
    pub beta_al_per_eta: f64,
    pub beta_cl: f64,
    pub kappa: Vec<f64>,
    pub z: f64,
    pub p_zs: f64,
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub gamma_c: f64,
    pub omega_l: f64,
    pub tolerance: f64,
    pub max_periods: usize,
    /// Relative agreement required between ODE and closed form.
    pub agreement: f64,
}

impl Default for OdeCheckSection {
    fn default() -> Self {
        let r = ScaledRates::default();
        Self {
            l: vec![1, 2, 3],
            eta_min: -3.0,
            eta_max: 3.0,
            eta_points: 7,
            beta_delta0: 2.0,
            beta_al_per_eta: 0.5,
            beta_cl: 0.0,
            kappa: vec![0.0],
            z: 1.2,
            p_zs: 1.0,
            gamma_1: r.gamma_1,
            gamma_2: r.gamma_2,
            gamma_c: r.gamma_c,
            omega_l: r.omega_l,
            tolerance: 1e-4,
            max_periods: 200_000,
            agreement: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    /// Plain-text field map; the built-in spiral model is used when absent.
    /// Relative paths resolve against the config file's directory.
    pub field_map: Option<PathBuf>,
    pub synthetic_dims: [usize; 3],
    /// NV fraction of lattice sites; ignored when `n_s_cm3` is given.
    pub p_nv: f64,
    pub n_s_cm3: Option<f64>,
    pub p_z: f64,
    pub nv_axis: [f64; 3],
    pub refine: bool,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            field_map: None,
            synthetic_dims: [40, 40, 30],
            p_nv: 1e-6,
            n_s_cm3: None,
            p_z: crate::coupling::DEFAULT_P_Z,
            nv_axis: [1.0, 1.0, 1.0],
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// The document as written, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Mode,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub transitions: TransitionsSection,
    #[serde(default)]
    pub atlas: AtlasSection,
    #[serde(default)]
    pub ode_check: OdeCheckSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ConfigFile {
    pub fn defaults(mode: Mode) -> Self {
        Self {
            mode,
            physics: Default::default(),
            model: Default::default(),
            sweep: Default::default(),
            transitions: Default::default(),
            atlas: Default::default(),
            ode_check: Default::default(),
            coupling: Default::default(),
            output: Default::default(),
        }
    }
}

/// Longitudinal drive used by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Drive {
    BesselArgument(f64),
    /// ω_b (rad/s).
    Amplitude(f64),
}

/// Physics and model values in internal units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    pub constants: PhysicalConstants,
    pub d: f64,
    pub e: f64,
    pub theta_s: f64,
    pub a_par: f64,
    pub a_perp: f64,
    pub omega_c: f64,
    pub gamma_c: f64,
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub g: f64,
    pub beta_delta0: f64,
    pub drive: Drive,
    pub p_zs: f64,
    pub l_max: u32,
    pub l_mode: LMode,
}

impl ModelParams {
    pub fn lac(&self) -> Result<LacParams> {
        LacParams::new(self.theta_s, self.d, self.constants.gamma_e())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub model: ModelParams,
    /// Resolved field-map path, if any.
    pub field_map: Option<PathBuf>,
}

impl RunConfig {
    pub fn mode(&self) -> Mode {
        self.file.mode
    }

    /// The full configuration, defaults included, as JSON.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(&self.file).expect("config serializes")
    }

    pub fn peak_grid(&self) -> Result<PeakGridParams> {
        let a = &self.file.atlas;
        let mut p = PeakGridParams::new(a.f_m_mhz * 1e6, a.l_max, a.k_max)?;
        p.nuclear_rotation = a.nuclear_rotation;
        Ok(p)
    }

    pub fn tripolar(&self) -> TripolarParams {
        TripolarParams {
            p_n: self.file.atlas.p_n,
            nv_fraction: self.file.atlas.nv_fraction,
            d: self.model.d,
            constants: self.model.constants,
        }
    }

    pub fn scaled_rates(&self) -> ScaledRates {
        let o = &self.file.ode_check;
        ScaledRates {
            gamma_1: o.gamma_1,
            gamma_2: o.gamma_2,
            gamma_c: o.gamma_c,
            omega_l: o.omega_l,
        }
    }
}

/// Parses and validates a config; relative file paths resolve against the
/// current directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, Path::new("."))
}

pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    build(file, Some(text), base_dir)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_in(&text, base).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Validates an in-memory [`ConfigFile`] (no source text, so errors carry
/// only the key).
pub fn from_file(file: ConfigFile, base_dir: &Path) -> Result<RunConfig> {
    build(file, None, base_dir)
}

/// 1-based line of `key` inside `[section]`, if the source has it.
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let lhs = t.split('=').next().unwrap_or("").trim();
        if current == section && lhs == key {
            return Some(i + 1);
        }
    }
    None
}

struct Checker<'a> {
    text: Option<&'a str>,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        let loc = self
            .text
            .and_then(|t| line_of(t, section, key))
            .map(|l| format!("line {l}, "))
            .unwrap_or_default();
        Error::Config(format!("{loc}key `{section}.{key}`: {msg}"))
    }

    fn finite(&self, section: &str, key: &str, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(section, key, format!("must be finite, got {v}")))
        }
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(section, key, format!("must be a positive rate, got {v}")))
        }
    }

    fn non_negative(&self, section: &str, key: &str, v: f64) -> Result<f64> {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(section, key, format!("must be >= 0, got {v}")))
        }
    }

    fn range(&self, section: &str, lo_key: &str, lo: f64, hi: f64, n_key: &str, n: usize) -> Result<()> {
        self.finite(section, lo_key, lo)?;
        if !(hi > lo) || !hi.is_finite() {
            return Err(self.fail(section, lo_key, format!("range [{lo}, {hi}] is degenerate")));
        }
        if n < 2 {
            return Err(self.fail(section, n_key, format!("needs at least 2 points, got {n}")));
        }
        Ok(())
    }
}

fn build(mut file: ConfigFile, text: Option<&str>, base_dir: &Path) -> Result<RunConfig> {
    let c = Checker { text };
    let ph = &file.physics;
    let d = c.positive("physics", "d_mhz", ph.d_mhz)?;
    let e = c.non_negative("physics", "e_mhz", ph.e_mhz)?;
    let ge = c.positive("physics", "gamma_e_ghz_per_t", ph.gamma_e_ghz_per_t)?;
    let theta = c.non_negative("physics", "theta_s_deg", ph.theta_s_deg)?;
    if theta >= 90.0 {
        return Err(c.fail("physics", "theta_s_deg", "must be below 90 degrees"));
    }
    let a_par = c.positive("physics", "a_par_mhz", ph.a_par_mhz)?;
    let a_perp = c.positive("physics", "a_perp_mhz", ph.a_perp_mhz)?;

    let m = &mut file.model;
    let s = "model";
    c.positive(s, "omega_c_mhz", m.omega_c_mhz)?;
    c.positive(s, "gamma_c_mhz", m.gamma_c_mhz)?;
    c.positive(s, "gamma_1_mhz", m.gamma_1_mhz)?;
    c.positive(s, "gamma_2_mhz", m.gamma_2_mhz)?;
    c.non_negative(s, "g_mhz", m.g_mhz)?;
    c.finite(s, "beta_delta0", m.beta_delta0)?;
    if m.p_zs.abs() > 1.0 || !m.p_zs.is_finite() {
        return Err(c.fail(s, "p_zs", format!("must lie in [-1, 1], got {}", m.p_zs)));
    }
    if m.l_max < 1 {
        return Err(c.fail(s, "l_max", "must be >= 1"));
    }
    let drive = match (m.bessel_z, m.omega_b_mhz) {
        (Some(_), Some(_)) => return Err(c.fail(s, "omega_b_mhz", "give either bessel_z or omega_b_mhz, not both")),
        (Some(z), None) => Drive::BesselArgument(c.finite(s, "bessel_z", z)?),
        (None, Some(wb)) => Drive::Amplitude(mhz_to_rad_s(c.non_negative(s, "omega_b_mhz", wb)?)),
        (None, None) => {
            m.bessel_z = Some(DEFAULT_BESSEL_Z);
            Drive::BesselArgument(DEFAULT_BESSEL_Z)
        }
    };
    if let Drive::BesselArgument(z) = drive {
        if z.abs() >= crate::bessel::MAX_ARGUMENT {
            return Err(c.fail(
                s,
                "bessel_z",
                format!("|z| must be below {}", crate::bessel::MAX_ARGUMENT),
            ));
        }
    }

    let sw = &file.sweep;
    c.range("sweep", "b_min_mt", sw.b_min_mt, sw.b_max_mt, "b_points", sw.b_points)?;
    c.range(
        "sweep",
        "f_min_mhz",
        sw.f_min_mhz,
        sw.f_max_mhz,
        "f_points",
        sw.f_points,
    )?;
    if sw.f_min_mhz <= 0.0 {
        return Err(c.fail("sweep", "f_min_mhz", "drive frequencies must be positive"));
    }
    if sw.derivative && sw.f_points < 3 {
        return Err(c.fail("sweep", "f_points", "derivative maps need at least 3 points"));
    }

    let tr = &mut file.transitions;
    c.range(
        "transitions",
        "b_min_mt",
        tr.b_min_mt,
        tr.b_max_mt,
        "b_points",
        tr.b_points,
    )?;
    if tr.b_min_mt < 0.0 {
        return Err(c.fail("transitions", "b_min_mt", "field magnitudes must be >= 0"));
    }
    let tdeg = c.finite("transitions", "theta_deg", tr.theta_deg.unwrap_or(theta))?;
    tr.theta_deg = Some(tdeg);

    let at = &file.atlas;
    c.positive("atlas", "f_m_mhz", at.f_m_mhz)?;
    if at.l_max < 1 {
        return Err(c.fail("atlas", "l_max", "must be >= 1"));
    }
    if at.k_max < 1 {
        return Err(c.fail("atlas", "k_max", "must be >= 1"));
    }
    if !(0.0..1.0).contains(&at.p_n) {
        return Err(c.fail("atlas", "p_n", format!("must lie in [0, 1), got {}", at.p_n)));
    }
    c.positive("atlas", "nv_fraction", at.nv_fraction)?;
    c.range(
        "atlas",
        "delta_b_min_mt",
        at.delta_b_min_mt,
        at.delta_b_max_mt,
        "delta_b_points",
        at.delta_b_points,
    )?;

    let oc = &file.ode_check;
    let s = "ode_check";
    if oc.l.is_empty() || oc.l.contains(&0) {
        return Err(c.fail(s, "l", "needs at least one order, all >= 1"));
    }
    c.range(s, "eta_min", oc.eta_min, oc.eta_max, "eta_points", oc.eta_points)?;
    c.finite(s, "beta_delta0", oc.beta_delta0)?;
    c.finite(s, "beta_al_per_eta", oc.beta_al_per_eta)?;
    c.finite(s, "beta_cl", oc.beta_cl)?;
    if oc.kappa.is_empty() || oc.kappa.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(c.fail(s, "kappa", "needs at least one value, all >= 0"));
    }
    if !(oc.z.abs() < crate::bessel::MAX_ARGUMENT) {
        return Err(c.fail(s, "z", format!("|z| must be below {}", crate::bessel::MAX_ARGUMENT)));
    }
    if oc.p_zs.abs() > 1.0 {
        return Err(c.fail(s, "p_zs", "must lie in [-1, 1]"));
    }
    c.positive(s, "gamma_1", oc.gamma_1)?;
    c.positive(s, "gamma_2", oc.gamma_2)?;
    c.positive(s, "gamma_c", oc.gamma_c)?;
    c.positive(s, "omega_l", oc.omega_l)?;
    c.positive(s, "tolerance", oc.tolerance)?;
    c.positive(s, "agreement", oc.agreement)?;
    if oc.max_periods < 2 {
        return Err(c.fail(s, "max_periods", "must be >= 2"));
    }

    let cp = &file.coupling;
    let s = "coupling";
    if cp.synthetic_dims.contains(&0) {
        return Err(c.fail(s, "synthetic_dims", "all dimensions must be >= 1"));
    }
    if !(0.0..=1.0).contains(&cp.p_nv) {
        return Err(c.fail(s, "p_nv", "must lie in [0, 1]"));
    }
    if let Some(n) = cp.n_s_cm3 {
        c.non_negative(s, "n_s_cm3", n)?;
    }
    if !(cp.p_z.abs() <= 1.0) {
        return Err(c.fail(s, "p_z", "must lie in [-1, 1]"));
    }
    let axis_norm = cp.nv_axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(axis_norm > 0.0) || !axis_norm.is_finite() {
        return Err(c.fail(s, "nv_axis", "must be a non-zero vector"));
    }
    let field_map = match &cp.field_map {
        Some(p) => {
            let resolved = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            if !resolved.is_file() {
                return Err(c.fail(s, "field_map", format!("file {} does not exist", resolved.display())));
            }
            Some(resolved)
        }
        None => None,
    };

    let m = &file.model;
    let model = ModelParams {
        constants: PhysicalConstants::with_gamma_e_ghz_per_t(ge),
        d: mhz_to_rad_s(d),
        e: mhz_to_rad_s(e),
        theta_s: theta.to_radians(),
        a_par: mhz_to_rad_s(a_par),
        a_perp: mhz_to_rad_s(a_perp),
        omega_c: mhz_to_rad_s(m.omega_c_mhz),
        gamma_c: mhz_to_rad_s(m.gamma_c_mhz),
        gamma_1: mhz_to_rad_s(m.gamma_1_mhz),
        gamma_2: mhz_to_rad_s(m.gamma_2_mhz),
        g: mhz_to_rad_s(m.g_mhz),
        beta_delta0: m.beta_delta0,
        drive,
        p_zs: m.p_zs,
        l_max: m.l_max,
        l_mode: m.l_mode,
    };
    Ok(RunConfig { file, model, field_map })
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}
