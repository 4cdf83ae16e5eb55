//! Run configuration: a JSON file with sections `system`, `dispersion`,
//! `profile`, `grid`, `solver` and `sweep`. Matrices are nested arrays of
//! decimal strings; unknown keys are rejected.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::solvers::{snap_epsilon, Problem, SimConfig, Splitting, Variant, DEFAULT_BLOWUP_FACTOR, DEFAULT_ENV_STEPS, DEFAULT_REF_STEPS_PER_EPS, DEFAULT_SNAPSHOTS};
use crate::system::{
    builtin_klein_gordon, builtin_maxwell_lorentz_1d, find_dispersion, BranchSelector, EnvelopeProfile, ProfileKind, SystemSpec,
    Trilinear, C64,
};

/// Real matrix, row-major, entries as decimal strings.
pub type MatrixText = Vec<Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub dispersion: DispersionConfig,
    pub profile: ProfileConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    KleinGordon {
        #[serde(default = "one")]
        nu: f64,
        /// Defaults to the rotation `[[0, -1], [1, 0]]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<MatrixText>,
    },
    MaxwellLorentz1d {},
    Custom {
        name: String,
        /// One matrix per space dimension.
        a: Vec<MatrixText>,
        e: MatrixText,
        nonlinearity: NonlinearityConfig,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Zero {},
    /// `T(a, b, c) = (a . b) M c`.
    NormSquaredTimes { m: MatrixText },
    /// `T(a, b, c)_target = a_s b_s c_s` with `s = source`.
    CubicComponent { source: usize, target: usize },
    /// Dense coefficients `T[i][p][q][r]`, flattened in that order.
    Tensor { coeffs: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    pub kappa: Vec<f64>,
    #[serde(default)]
    pub branch: BranchConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchConfig {
    #[default]
    SmallestPositive,
    Index(usize),
    Nearest(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Gaussian {
        amplitude: f64,
        #[serde(default)]
        center: f64,
        width: f64,
    },
    /// Scalar samples on the envelope grid `x_m = -L/2 + m L / N`.
    Samples { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Torus length; give either this or `length_over_pi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_over_pi: Option<f64>,
    pub env_modes: usize,
    /// Chosen from the carrier and the band when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_modes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub t_end_slow: f64,
    /// `h_ref = h_ref_over_eps * eps`.
    pub h_ref_over_eps: f64,
    /// Slow-time envelope step; `t_end_slow / 16000` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_env: Option<f64>,
    pub snapshots: usize,
    pub variants: Vec<Variant>,
    pub exec: Exec,
    pub blowup_factor: f64,
    pub splitting: Splitting,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_end_slow: 0.5,
            h_ref_over_eps: 1.0 / DEFAULT_REF_STEPS_PER_EPS,
            h_env: None,
            snapshots: DEFAULT_SNAPSHOTS,
            variants: vec![Variant::J3, Variant::Svea1],
            exec: Exec::default(),
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
            splitting: Splitting::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { epsilons: vec![0.1, 0.05, 0.025] }
    }
}

fn one() -> f64 {
    1.0
}

fn cfg_err(path: impl Into<String>, msg: impl std::fmt::Display) -> Error {
    Error::Config { path: path.into(), msg: msg.to_string() }
}

fn parse_decimal(path: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| cfg_err(path, format!("`{s}` is not a decimal number")))?;
    if !v.is_finite() {
        return Err(cfg_err(path, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn parse_matrix(path: &str, rows: &MatrixText) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(cfg_err(path, "matrix is empty"));
    }
    let mut m = DMatrix::zeros(nr, nc);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != nc {
            return Err(cfg_err(format!("{path}[{i}]"), format!("row has {} entries, expected {nc}", row.len())));
        }
        for (j, s) in row.iter().enumerate() {
            m[(i, j)] = parse_decimal(&format!("{path}[{i}][{j}]"), s)?;
        }
    }
    Ok(m)
}

/// Inverse of [`parse_matrix`]; round-trip exact.
pub fn matrix_text(m: &DMatrix<f64>) -> MatrixText {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect()).collect()
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemSpec> {
        let wrap = |path: &str, e: Error| match e {
            Error::Config { .. } => e,
            other => cfg_err(path, other),
        };
        match self {
            SystemConfig::KleinGordon { nu, m } => {
                let m = match m {
                    Some(t) => parse_matrix("system.klein_gordon.m", t)?,
                    None => DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
                };
                builtin_klein_gordon(*nu, m).map_err(|e| wrap("system.klein_gordon", e))
            }
            SystemConfig::MaxwellLorentz1d {} => Ok(builtin_maxwell_lorentz_1d()),
            SystemConfig::Custom { name, a, e, nonlinearity } => {
                let a = a
                    .iter()
                    .enumerate()
                    .map(|(l, m)| parse_matrix(&format!("system.custom.a[{l}]"), m))
                    .collect::<Result<Vec<_>>>()?;
                let e = parse_matrix("system.custom.e", e)?;
                let n = e.nrows();
                let path = "system.custom.nonlinearity";
                let t = match nonlinearity {
                    NonlinearityConfig::Zero {} => Trilinear::Zero,
                    NonlinearityConfig::NormSquaredTimes { m } => {
                        Trilinear::NormSquaredTimes(parse_matrix(&format!("{path}.norm_squared_times.m"), m)?)
                    }
                    NonlinearityConfig::CubicComponent { source, target } => {
                        if *source >= n || *target >= n {
                            return Err(cfg_err(format!("{path}.cubic_component"), format!("indices must be < {n}")));
                        }
                        Trilinear::CubicComponent { source: *source, target: *target }
                    }
                    NonlinearityConfig::Tensor { coeffs } => {
                        if coeffs.len() != n.pow(4) {
                            return Err(cfg_err(
                                format!("{path}.tensor.coeffs"),
                                format!("expected n^4 = {} entries, got {}", n.pow(4), coeffs.len()),
                            ));
                        }
                        let coeffs = coeffs
                            .iter()
                            .enumerate()
                            .map(|(i, s)| parse_decimal(&format!("{path}.tensor.coeffs[{i}]"), s))
                            .collect::<Result<Vec<_>>>()?;
                        Trilinear::Tensor { n, coeffs }
                    }
                };
                SystemSpec::new(name.clone(), a, e, t).map_err(|e| wrap("system.custom", e))
            }
        }
    }
}

impl GridConfig {
    pub fn length(&self) -> Result<f64> {
        let l = match (self.length, self.length_over_pi) {
            (Some(l), None) => l,
            (None, Some(q)) => q * std::f64::consts::PI,
            (None, None) => return Err(cfg_err("grid", "one of `length` or `length_over_pi` is required")),
            (Some(_), Some(_)) => return Err(cfg_err("grid", "give only one of `length` and `length_over_pi`")),
        };
        if !(l > 0.0 && l.is_finite()) {
            return Err(cfg_err("grid.length", format!("must be positive, got {l}")));
        }
        Ok(l)
    }
}

/// A parsed and validated configuration.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub raw: RunConfig,
    pub problem: Problem,
    pub length: f64,
}

impl LoadedConfig {
    pub fn from_raw(raw: RunConfig) -> Result<LoadedConfig> {
        let spec = raw.system.build()?;
        if raw.dispersion.kappa.len() != spec.d {
            return Err(cfg_err(
                "dispersion.kappa",
                format!("has {} entries, the system has d = {}", raw.dispersion.kappa.len(), spec.d),
            ));
        }
        let selector = match raw.dispersion.branch {
            BranchConfig::SmallestPositive => BranchSelector::SmallestPositive,
            BranchConfig::Index(i) => BranchSelector::Index(i),
            BranchConfig::Nearest(w) => BranchSelector::Nearest(w),
        };
        let disp = find_dispersion(&spec, &raw.dispersion.kappa, selector).map_err(|e| cfg_err("dispersion", e))?;
        let length = raw.grid.length()?;
        let polarization: Vec<C64> = disp.kernel_vec.clone();
        let profile = match &raw.profile {
            ProfileConfig::Gaussian { amplitude, center, width } => {
                if !(*width > 0.0) {
                    return Err(cfg_err("profile.gaussian.width", "must be positive"));
                }
                EnvelopeProfile::gaussian(*amplitude, *center, *width, polarization)
            }
            ProfileConfig::Samples { values } => {
                if values.len() != raw.grid.env_modes {
                    return Err(cfg_err(
                        "profile.samples.values",
                        format!("expected {} samples (grid.env_modes), got {}", raw.grid.env_modes, values.len()),
                    ));
                }
                EnvelopeProfile { kind: ProfileKind::Sampled { samples: values.clone() }, polarization }
            }
        };
        let s = &raw.solver;
        if !(s.t_end_slow >= 0.0 && s.t_end_slow.is_finite()) {
            return Err(cfg_err("solver.t_end_slow", "must be finite and >= 0"));
        }
        if !(s.h_ref_over_eps > 0.0) {
            return Err(cfg_err("solver.h_ref_over_eps", "must be positive"));
        }
        if matches!(s.h_env, Some(h) if !(h > 0.0)) {
            return Err(cfg_err("solver.h_env", "must be positive"));
        }
        if s.snapshots == 0 {
            return Err(cfg_err("solver.snapshots", "must be >= 1"));
        }
        if s.variants.is_empty() {
            return Err(cfg_err("solver.variants", "must name at least one variant"));
        }
        if !(s.blowup_factor > 1.0) {
            return Err(cfg_err("solver.blowup_factor", "must exceed 1"));
        }
        let problem = Problem { spec, disp, profile };
        problem
            .profile
            .validate(&problem.disp, &crate::spectral::Grid::new(length, raw.grid.env_modes).map_err(|e| cfg_err("grid.env_modes", e))?)
            .map_err(|e| cfg_err("profile", e))?;
        Ok(LoadedConfig { raw, problem, length })
    }

    /// Nearest commensurable epsilon; warns when it moved.
    pub fn snap(&self, eps: f64) -> Result<f64> {
        let kappa = self.problem.disp.kappa[0];
        let (snapped, m) = snap_epsilon(eps, kappa, self.length)?;
        if (snapped - eps).abs() > 1e-12 * eps {
            log::warn!("epsilon {eps} snapped to {snapped} (carrier mode {m})");
        }
        Ok(snapped)
    }

    /// Simulation settings for one (already snapped) epsilon.
    pub fn sim_config(&self, eps: f64, variant: Variant) -> SimConfig {
        let s = &self.raw.solver;
        let mut cfg = SimConfig::new(eps, s.t_end_slow, variant, self.problem.disp.kappa[0], self.length, self.raw.grid.env_modes);
        cfg.h_ref = s.h_ref_over_eps * eps;
        cfg.h_env = s.h_env.unwrap_or(if s.t_end_slow > 0.0 { s.t_end_slow / DEFAULT_ENV_STEPS as f64 } else { 1.0 });
        cfg.n_snap = s.snapshots;
        cfg.exec = s.exec;
        cfg.blowup_factor = s.blowup_factor;
        cfg.splitting = s.splitting;
        if let Some(r) = self.raw.grid.ref_modes {
            cfg.ref_modes = r;
        }
        cfg
    }
}

/// Parses JSON text into a validated configuration.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(if path == "." { String::from("<root>") } else { path }, e.into_inner())
    })?;
    LoadedConfig::from_raw(raw)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
