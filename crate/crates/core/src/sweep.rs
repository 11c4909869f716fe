//! (B_S, f_LA) maps of the closed-form steady-state polarization and their
//! derivative along the drive frequency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::atlas::{lac_frequency, LacParams};
use crate::bloch::{closed_form_pz, cooperativity, SuperharmonicPoint};
use crate::config::{linspace, Drive, LMode, Mode, ModelParams, RunConfig};
use crate::error::{Error, Result};
use crate::units::{mhz_to_rad_s, mt_to_tesla};

pub const B_AXIS: &str = "b_s_mt";
pub const F_AXIS: &str = "f_la_mhz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// P_z/P_zs.
    PzRatio,
    /// d(P_z/P_zs)/df_LA per MHz.
    DerivativePerMhz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFlag {
    pub row: usize,
    pub col: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub quantity: Quantity,
    pub version: String,
    pub config: serde_json::Value,
}

/// Row-major 2-D map. `rows` labels the slow index, `cols` the fast one;
/// NaN cells always have a matching entry in `flags`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub rows: Axis,
    pub cols: Axis,
    pub values: Vec<f64>,
    pub flags: Vec<CellFlag>,
    pub metadata: GridMetadata,
}

impl SweepGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.values.len(), self.cols.values.len())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols.values.len() + col]
    }

    pub fn validate(&self) -> Result<()> {
        let (nr, nc) = self.shape();
        if self.values.len() != nr * nc {
            return Err(Error::invalid(format!(
                "grid holds {} values for a {nr}x{nc} shape",
                self.values.len()
            )));
        }
        for (i, v) in self.values.iter().enumerate() {
            if v.is_nan() && !self.flags.iter().any(|f| f.row * nc + f.col == i) {
                return Err(Error::invalid(format!(
                    "unflagged NaN at row {}, col {}",
                    i / nc,
                    i % nc
                )));
            }
        }
        Ok(())
    }

    /// Swaps the two axes, carrying labels and flags along.
    pub fn transpose(&self) -> SweepGrid {
        let (nr, nc) = self.shape();
        let mut values = vec![0.0; nr * nc];
        for r in 0..nr {
            for c in 0..nc {
                values[c * nr + r] = self.values[r * nc + c];
            }
        }
        let mut flags: Vec<CellFlag> = self
            .flags
            .iter()
            .map(|f| CellFlag {
                row: f.col,
                col: f.row,
                reason: f.reason.clone(),
            })
            .collect();
        flags.sort_by_key(|f| (f.row, f.col));
        SweepGrid {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            values,
            flags,
            metadata: self.metadata.clone(),
        }
    }
}

/// Per-run constants derived once from the model.
#[derive(Debug, Clone, Copy)]
pub struct CellModel<'a> {
    pub model: &'a ModelParams,
    pub lac: LacParams,
    pub kappa: f64,
}

impl<'a> CellModel<'a> {
    pub fn new(model: &'a ModelParams) -> Result<Self> {
        Ok(Self {
            model,
            lac: model.lac()?,
            kappa: cooperativity(model.g, model.gamma_2, model.gamma_c)?,
        })
    }

    /// Superharmonic point of order `l` at field offset δB (T) and drive
    /// frequency ω_L (rad/s).
    pub fn point(&self, delta_b: f64, omega_l: f64, l: u32) -> SuperharmonicPoint {
        let m = self.model;
        let eta = self.lac.eta(delta_b);
        let omega_a = lac_frequency(&self.lac, delta_b);
        let harmonic = l as f64 * omega_l;
        let z = match m.drive {
            Drive::BesselArgument(z) => z,
            Drive::Amplitude(omega_b) => omega_b / omega_l,
        };
        SuperharmonicPoint {
            l,
            beta_cl: (m.omega_c - harmonic) / m.gamma_c,
            beta_al: (omega_a - harmonic) / m.gamma_2,
            beta_delta: m.beta_delta0 * eta / eta.hypot(1.0),
            kappa: self.kappa,
            z,
        }
    }

    /// Order with the smallest |ω_a − lω_L|; ties go to the lower order.
    pub fn dominant_order(&self, delta_b: f64, omega_l: f64) -> u32 {
        let omega_a = lac_frequency(&self.lac, delta_b);
        (1..=self.model.l_max)
            .min_by(|&a, &b| {
                let da = (omega_a - a as f64 * omega_l).abs();
                let db = (omega_a - b as f64 * omega_l).abs();
                da.total_cmp(&db)
            })
            .unwrap_or(1)
    }

    /// P_z/P_zs at a cell.
    pub fn value(&self, delta_b: f64, omega_l: f64) -> Result<f64> {
        let p_zs = self.model.p_zs;
        match self.model.l_mode {
            LMode::Dominant => {
                let l = self.dominant_order(delta_b, omega_l);
                closed_form_pz(&self.point(delta_b, omega_l, l), p_zs)
            }
            LMode::All => (1..=self.model.l_max).try_fold(1.0, |acc, l| {
                Ok(acc * closed_form_pz(&self.point(delta_b, omega_l, l), p_zs)?)
            }),
        }
    }
}

fn metadata(config: &RunConfig, quantity: Quantity) -> GridMetadata {
    GridMetadata {
        quantity,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.echo(),
    }
}

/// Evaluates the closed-form map over the configured (B_S, f_LA) grid.
/// Rows are B_S values, columns f_LA values. Cells whose evaluation fails
/// are NaN with a flag; the run itself only fails on invalid model input.
pub fn run_sweep(config: &RunConfig) -> Result<SweepGrid> {
    if config.mode() != Mode::Sweep {
        return Err(Error::invalid(format!(
            "run_sweep needs mode = sweep, got {}",
            config.mode()
        )));
    }
    let cells = CellModel::new(&config.model)?;
    let s = &config.file.sweep;
    let b_axis = linspace(s.b_min_mt, s.b_max_mt, s.b_points);
    let f_axis = linspace(s.f_min_mhz, s.f_max_mhz, s.f_points);

    let rows: Vec<(Vec<f64>, Vec<CellFlag>)> = b_axis
        .par_iter()
        .enumerate()
        .map(|(r, &b_mt)| {
            let delta_b = cells.lac.delta_b(mt_to_tesla(b_mt));
            let mut flags = Vec::new();
            let vals = f_axis
                .iter()
                .enumerate()
                .map(|(c, &f_mhz)| match cells.value(delta_b, mhz_to_rad_s(f_mhz)) {
                    Ok(v) if v.is_finite() => v,
                    Ok(v) => {
                        flags.push(CellFlag {
                            row: r,
                            col: c,
                            reason: format!("non-finite value {v}"),
                        });
                        f64::NAN
                    }
                    Err(e) => {
                        flags.push(CellFlag {
                            row: r,
                            col: c,
                            reason: e.to_string(),
                        });
                        f64::NAN
                    }
                })
                .collect();
            (vals, flags)
        })
        .collect();

    let mut values = Vec::with_capacity(b_axis.len() * f_axis.len());
    let mut flags = Vec::new();
    for (v, f) in rows {
        values.extend(v);
        flags.extend(f);
    }
    Ok(SweepGrid {
        rows: Axis {
            label: B_AXIS.into(),
            values: b_axis,
        },
        cols: Axis {
            label: F_AXIS.into(),
            values: f_axis,
        },
        values,
        flags,
        metadata: metadata(config, Quantity::PzRatio),
    })
}

/// Derivative along the f_LA axis (whichever way the grid is laid out):
/// central differences inside, one-sided at the two ends.
pub fn derivative_map(grid: &SweepGrid) -> Result<SweepGrid> {
    grid.validate()?;
    if grid.metadata.quantity != Quantity::PzRatio {
        return Err(Error::invalid("grid is already a derivative map"));
    }
    if grid.cols.label == F_AXIS {
        differentiate_cols(grid)
    } else if grid.rows.label == F_AXIS {
        Ok(differentiate_cols(&grid.transpose())?.transpose())
    } else {
        Err(Error::invalid(format!(
            "no {F_AXIS} axis (axes are {} and {})",
            grid.rows.label, grid.cols.label
        )))
    }
}

fn differentiate_cols(grid: &SweepGrid) -> Result<SweepGrid> {
    let (nr, nc) = grid.shape();
    if nc < 3 {
        return Err(Error::invalid(format!(
            "derivative needs at least 3 points along {F_AXIS}, got {nc}"
        )));
    }
    let x = &grid.cols.values;
    let mut values = vec![0.0; nr * nc];
    let mut flags = Vec::new();
    for r in 0..nr {
        let row = &grid.values[r * nc..(r + 1) * nc];
        for c in 0..nc {
            let (lo, hi) = match c {
                0 => (0, 1),
                _ if c == nc - 1 => (nc - 2, nc - 1),
                _ => (c - 1, c + 1),
            };
            let d = (row[hi] - row[lo]) / (x[hi] - x[lo]);
            values[r * nc + c] = if d.is_finite() {
                d
            } else {
                flags.push(CellFlag {
                    row: r,
                    col: c,
                    reason: format!("difference stencil touches flagged cell ({lo}..={hi})"),
                });
                f64::NAN
            };
        }
    }
    let mut metadata = grid.metadata.clone();
    metadata.quantity = Quantity::DerivativePerMhz;
    Ok(SweepGrid {
        rows: grid.rows.clone(),
        cols: grid.cols.clone(),
        values,
        flags,
        metadata,
    })
}

/// Field offset δB (T) at which hyperbola `l` crosses f (MHz), if it does.
pub fn hyperbola_field_offset(lac: &LacParams, l: u32, f_mhz: f64) -> Option<f64> {
    let ratio = TAU * l as f64 * f_mhz * 1e6 / lac.omega_a0();
    (ratio >= 1.0).then(|| lac.omega_a0() / lac.gamma_e * (ratio * ratio - 1.0).sqrt())
}
