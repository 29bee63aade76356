//! Run configuration: TOML with nested sections and dotted overrides.

use std::path::{Path, PathBuf};

use lyapunov::{Sign, WVariant, Weight, WeightFunction};
use model_core::{
    isotropic_mass_flex, near_transparent_k, transparent_k, BeamParameters, IsotropicSection, Mat6, Vec3, Vec6,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// 6×6 data given as a diagonal list or as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, field: &str) -> Result<Mat6, CliError> {
        match self {
            Self::Diagonal(d) if d.len() == 6 => Ok(Mat6::from_diagonal(&Vec6::from_column_slice(d))),
            Self::Rows(r) if r.len() == 6 && r.iter().all(|row| row.len() == 6) => {
                Ok(Mat6::from_fn(|i, j| r[i][j]))
            }
            _ => Err(CliError::config(field, "expected 6 diagonal entries or 6 rows of 6")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub density: f64,
    pub area: f64,
    pub young: f64,
    pub shear: f64,
    pub i2: f64,
    pub i3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl From<SectionSpec> for IsotropicSection {
    fn from(s: SectionSpec) -> Self {
        IsotropicSection {
            density: s.density,
            area: s.area,
            young: s.young,
            shear: s.shear,
            i2: s.i2,
            i3: s.i3,
            k1: s.k1,
            k2: s.k2,
            k3: s.k3,
        }
    }
}

/// Beam data; `preset = "hesse2012"` fills anything left unset, `preset = "none"` fills nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<MatrixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flexibility: Option<MatrixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precurvature: Option<[f64; 3]>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            preset: Some("hesse2012".into()),
            length: None,
            mass: None,
            flexibility: None,
            section: None,
            precurvature: None,
        }
    }
}

impl BeamConfig {
    pub fn parameters(&self) -> Result<BeamParameters, CliError> {
        let base = match self.preset.as_deref() {
            Some("hesse2012") => Some(BeamParameters::hesse2012()),
            Some("none") => None,
            Some(other) => return Err(CliError::config("beam.preset", format!("unknown preset {other:?}"))),
            None => Some(BeamParameters::hesse2012()),
        };
        let (mut mass, mut flex) = match &base {
            Some(b) => (Some(b.mass), Some(b.flexibility)),
            None => (None, None),
        };
        if let Some(s) = self.section {
            if self.mass.is_some() || self.flexibility.is_some() {
                return Err(CliError::config("beam.section", "give either a section or mass/flexibility"));
            }
            let (m, c) = isotropic_mass_flex(&s.into()).map_err(|e| CliError::config("beam.section", e.to_string()))?;
            mass = Some(m);
            flex = Some(c);
        }
        if let Some(m) = &self.mass {
            mass = Some(m.to_matrix("beam.mass")?);
        }
        if let Some(c) = &self.flexibility {
            flex = Some(c.to_matrix("beam.flexibility")?);
        }
        let mass = mass.ok_or_else(|| CliError::config("beam.mass", "missing (no preset)"))?;
        let flex = flex.ok_or_else(|| CliError::config("beam.flexibility", "missing (no preset)"))?;
        let length = self.length.or(base.as_ref().map(|b| b.length)).ok_or_else(|| CliError::config("beam.length", "missing (no preset)"))?;
        let pre = self
            .precurvature
            .map(Vec3::from)
            .or(base.as_ref().map(|b| b.precurvature))
            .unwrap_or_else(Vec3::zeros);
        BeamParameters::new(length, mass, flex, pre).map_err(|e| CliError::config("beam", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    /// `free`, `transparent`, `near_transparent`, `diag` or `explicit`.
    pub mode: String,
    /// `(μ₁, μ₂)` for `diag`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self { mode: "near_transparent".into(), mu: None, matrix: None }
    }
}

impl FeedbackConfig {
    pub fn matrix(&self, params: &BeamParameters) -> Result<Mat6, CliError> {
        let x = params.length;
        let k = match self.mode.as_str() {
            "free" => Mat6::zeros(),
            "transparent" => transparent_k(params, x).map_err(|e| CliError::config("feedback.mode", e.to_string()))?,
            "near_transparent" => {
                near_transparent_k(params, x).map_err(|e| CliError::config("feedback.mode", e.to_string()))?
            }
            "diag" => {
                let [m1, m2] = self.mu.ok_or_else(|| CliError::config("feedback.mu", "required for mode diag"))?;
                Mat6::from_diagonal(&Vec6::new(m1, m1, m1, m2, m2, m2))
            }
            "explicit" => self
                .matrix
                .as_ref()
                .ok_or_else(|| CliError::config("feedback.matrix", "required for mode explicit"))?
                .to_matrix("feedback.matrix")?,
            other => return Err(CliError::config("feedback.mode", format!("unknown mode {other:?}"))),
        };
        check_feedback(&k, "feedback")?;
        Ok(k)
    }
}

fn check_feedback(k: &Mat6, field: &str) -> Result<(), CliError> {
    if !model_core::linalg::is_symmetric(k, model_core::SYMMETRY_TOL) {
        return Err(CliError::config(field, "feedback must be symmetric"));
    }
    if k.iter().any(|v| !v.is_finite()) || model_core::linalg::min_eigenvalue(k) < -1e-12 * k.amax().max(1.0) {
        return Err(CliError::config(field, "feedback must be positive semidefinite"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub ne: usize,
    pub nt: usize,
    pub horizon: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self { ne: 20, nt: 1001, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// `helix_zero_velocity` (default without a file), `helix_compatible_velocity` or `zero`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Nodal state table with header `x,v1..v6,z1..z6`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { preset: None, file: None }
    }
}

impl InitialConfig {
    /// Preset in effect; `None` when the state comes from a file.
    pub fn preset_name(&self) -> Option<&str> {
        match (&self.preset, &self.file) {
            (Some(p), _) => Some(p.as_str()),
            (None, None) => Some("helix_zero_velocity"),
            (None, Some(_)) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub max_iter: usize,
    pub tol_rel: f64,
    /// Defaults to `1e-12 √N_f`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_abs: Option<f64>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { max_iter: 20, tol_rel: 1e-10, tol_abs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Any of `states`, `energy`, `frames`.
    pub series: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("igeb_out"), series: vec!["states".into(), "energy".into(), "frames".into()] }
    }
}

impl OutputConfig {
    pub fn wants(&self, name: &str) -> bool {
        self.series.iter().any(|s| s == name)
    }
}

/// Weight family with its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Zero,
    Constant { value: f64 },
    ExpPos { a: f64, b: f64, eta: f64 },
    ExpNeg { a: f64, b: f64, eta: f64 },
    PolyPlus { n: u32, eta: f64 },
    PolyMinus { n: u32, eta: f64 },
}

impl WeightSpec {
    pub fn weight(&self, length: f64, field: &str) -> Result<Weight, CliError> {
        let err = |e: lyapunov::LyapunovError| CliError::config(field, e.to_string());
        Ok(match *self {
            Self::Zero => Weight::zero(),
            Self::Constant { value } => Weight::constant(value),
            Self::ExpPos { a, b, eta } => WeightFunction::exp(a, b, eta, length, Sign::Pos).map_err(err)?.shifted(),
            Self::ExpNeg { a, b, eta } => WeightFunction::exp(a, b, eta, length, Sign::Neg).map_err(err)?.shifted(),
            Self::PolyPlus { n, eta } => WeightFunction::poly(n, eta, length, Sign::Pos).map_err(err)?.shifted(),
            Self::PolyMinus { n, eta } => WeightFunction::poly(n, eta, length, Sign::Neg).map_err(err)?.shifted(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub rho: f64,
    pub weight: WeightSpec,
    /// `identity`, `mc` or `sqrt`.
    pub variant: String,
    pub grid_pts: usize,
    /// Raise `ρ` to the sufficient bound `w(ℓ) − w(0) < χ ρ`.
    pub rescale_rho: bool,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            rho: 1.5,
            weight: WeightSpec::ExpPos { a: 0.0, b: 1.0, eta: 5.0 },
            variant: "sqrt".into(),
            grid_pts: lyapunov::DEFAULT_GRID,
            rescale_rho: true,
        }
    }
}

impl LyapunovConfig {
    pub fn variant(&self) -> Result<WVariant, CliError> {
        WVariant::parse(&self.variant).ok_or_else(|| CliError::config("lyapunov.variant", format!("unknown variant {:?}", self.variant)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    /// `time`, `space` or `both`.
    pub method: String,
    pub parallel: bool,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { method: "both".into(), parallel: true }
    }
}

/// Star or serial network of copies of the configured beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// `star` or `serial`.
    pub topology: String,
    pub rho: f64,
    /// Node 0 kind: `controlled`, `free` or `clamped`.
    pub root: String,
    /// Kinds of nodes `2..=N`.
    pub tips: Vec<String>,
    /// Angle of each beam frame about `e₃`, in radians.
    pub angles: Vec<f64>,
    pub weights: Vec<WeightSpec>,
    /// Feedback at the joint: `free` (zero) or the `[feedback]` matrix.
    pub joint: String,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let third = 2.0 * std::f64::consts::PI / 3.0;
        Self {
            topology: "star".into(),
            rho: 1.5,
            root: "controlled".into(),
            tips: vec!["controlled".into(), "controlled".into()],
            angles: vec![0.0, third, -third],
            weights: vec![
                WeightSpec::ExpNeg { a: -1.0, b: 0.0, eta: 5.0 },
                WeightSpec::ExpPos { a: 0.0, b: 1.0, eta: 5.0 },
                WeightSpec::ExpPos { a: 0.0, b: 1.0, eta: 5.0 },
            ],
            joint: "free".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub beam: BeamConfig,
    pub feedback: FeedbackConfig,
    pub discretization: DiscretizationConfig,
    pub initial: InitialConfig,
    pub newton: NewtonConfig,
    pub output: OutputConfig,
    pub lyapunov: LyapunovConfig,
    pub reconstruct: ReconstructConfig,
    pub network: NetworkConfig,
}

/// Sets `key = value` at a dotted path; `value` is read as TOML, else as a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config("--override", format!("expected KEY=VALUE, got {assignment:?}")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config("--override", format!("bad key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(key, format!("{p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::config("config", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config("config", e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::config("--config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks cross-field constraints before any run.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.beam.parameters()?;
        let k = self.feedback.matrix(&p)?;
        let d = &self.discretization;
        if d.ne == 0 {
            return Err(CliError::config("discretization.ne", "must be at least 1"));
        }
        if d.nt < 2 {
            return Err(CliError::config("discretization.nt", "must be at least 2"));
        }
        if !(d.horizon.is_finite() && d.horizon > 0.0) {
            return Err(CliError::config("discretization.horizon", "must be positive"));
        }
        match (&self.initial.preset, &self.initial.file) {
            (Some(_), Some(_)) => return Err(CliError::config("initial", "give either preset or file")),
            (_, None) => match self.initial.preset_name().unwrap_or_default() {
                "helix_zero_velocity" | "zero" => {}
                "helix_compatible_velocity" => {
                    if k.determinant().abs() <= 1e-300 || model_core::linalg::min_eigenvalue(&k) <= 0.0 {
                        return Err(CliError::config("initial.preset", "helix_compatible_velocity needs an invertible feedback"));
                    }
                }
                other => return Err(CliError::config("initial.preset", format!("unknown preset {other:?}"))),
            },
            (None, Some(f)) => {
                if !f.exists() {
                    return Err(CliError::config("initial.file", format!("{} does not exist", f.display())));
                }
            }
        }
        let n = &self.newton;
        if n.max_iter == 0 || !(n.tol_rel > 0.0) || n.tol_abs.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::config("newton", "max_iter ≥ 1 and positive tolerances required"));
        }
        for s in &self.output.series {
            if !["states", "energy", "frames"].contains(&s.as_str()) {
                return Err(CliError::config("output.series", format!("unknown series {s:?}")));
            }
        }
        let l = &self.lyapunov;
        if !(l.rho.is_finite() && l.rho > 0.0) {
            return Err(CliError::config("lyapunov.rho", "must be positive"));
        }
        if l.grid_pts < 2 {
            return Err(CliError::config("lyapunov.grid_pts", "must be at least 2"));
        }
        l.variant()?;
        l.weight.weight(p.length, "lyapunov.weight")?;
        if !["time", "space", "both"].contains(&self.reconstruct.method.as_str()) {
            return Err(CliError::config("reconstruct.method", format!("unknown method {:?}", self.reconstruct.method)));
        }
        Ok(())
    }
}
