//! Scenario documents: parsing, validation with field paths, and resolution
//! into library types.

use std::f64::consts::PI;
use std::fmt;

use impulse_heat::control::{ControlPair, InstantSequence};
use impulse_heat::heat::{DomainSpec, ImpulseSchedule, SpectralState, SystemSpec};
use impulse_heat::policy::DEFAULT_MODES;
use impulse_heat::{MatrixReal, RankTolerance};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Analyze,
    Simulate,
    SteerApprox,
    SteerNull,
    SteerOde,
    Reproduce,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Analyze => "analyze",
            Task::Simulate => "simulate",
            Task::SteerApprox => "steer-approx",
            Task::SteerNull => "steer-null",
            Task::SteerOde => "steer-ode",
            Task::Reproduce => "reproduce",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_length")]
    pub length: f64,
    /// Control region as a list of `[lo, hi]`; the whole interval when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

fn default_length() -> f64 {
    PI
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            length: PI,
            omega: None,
            modes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub instants: Vec<f64>,
}

/// Spatial profile with `n` (state) or `m` (control) components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    /// Sine coefficients, one row per mode; missing trailing modes are zero.
    Coefficients { values: Vec<Vec<f64>> },
    /// `amplitude · φ_mode` in one component, or in all when `component` is absent.
    SingleMode {
        mode: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        component: Option<usize>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Smooth compactly supported bump `amplitude · exp(1 − 1/(1 − r²))`, `r = (x − center)/width`.
    Bump {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Spatially constant vector.
    Constant { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute singular-value cut; the relative default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Uniform sample times in `(0, T)` added to the trajectory.
    pub points: usize,
}

/// Rotation-pair parameters for the reproduction runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationConfig {
    #[serde(default)]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub d: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            c: 1.0,
            d: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Profile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<RotationConfig>,
}

/// First violated field, with a dotted path such as `system.A[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub type Checked<T> = std::result::Result<T, ValidationError>;

fn fail<T>(path: impl Into<String>, message: impl Into<String>) -> Checked<T> {
    Err(ValidationError {
        path: path.into(),
        message: message.into(),
    })
}

fn require<'a, T>(value: &'a Option<T>, path: &str, task: Task) -> Checked<&'a T> {
    match value {
        Some(v) => Ok(v),
        None => fail(path, format!("required for task {task}")),
    }
}

fn finite(values: &[f64], path: &str) -> Checked<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => fail(format!("{path}[{i}]"), "must be a finite number"),
        None => Ok(()),
    }
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Checked<MatrixReal> {
    if rows.is_empty() {
        return fail(path, "must have at least one row");
    }
    let cols = rows[0].len();
    if cols == 0 {
        return fail(format!("{path}[0]"), "must have at least one column");
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return fail(
                format!("{path}[{i}]"),
                format!("has {} entries, expected {cols} like the first row", row.len()),
            );
        }
        finite(row, &format!("{path}[{i}]"))?;
    }
    MatrixReal::from_rows(rows).or_else(|e| fail(path, e.to_string()))
}

/// Validated pieces of a scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: SystemSpec,
    pub schedule: ImpulseSchedule,
    pub tol: RankTolerance,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Checked<Self> {
        serde_json::from_str(text).or_else(|e| {
            fail(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config types serialize")
    }

    pub fn rank_tolerance(&self, override_tol: Option<f64>) -> Checked<RankTolerance> {
        let tol = override_tol.or(self.tolerances.as_ref().and_then(|t| t.rank));
        match tol {
            None => Ok(RankTolerance::Relative),
            Some(t) if t.is_finite() && t >= 0.0 => Ok(RankTolerance::Absolute(t)),
            Some(_) => fail("tolerances.rank", "must be a finite non-negative number"),
        }
    }

    pub fn pair(&self, task: Task) -> Checked<ControlPair> {
        let system = require(&self.system, "system", task)?;
        let a = matrix(&system.a, "system.A")?;
        if !a.is_square() {
            return fail(
                "system.A",
                format!("must be square, got {}x{}", a.rows(), a.cols()),
            );
        }
        let b = matrix(&system.b, "system.B")?;
        if b.rows() != a.rows() {
            return fail(
                "system.B",
                format!("must have {} rows to match A, got {}", a.rows(), b.rows()),
            );
        }
        ControlPair::new(a, b).or_else(|e| fail("system", e.to_string()))
    }

    pub fn domain(&self, modes_override: Option<usize>) -> Checked<DomainSpec> {
        let cfg = self.domain.clone().unwrap_or_default();
        if !(cfg.length.is_finite() && cfg.length > 0.0) {
            return fail("domain.length", "must be a positive finite number");
        }
        let modes = modes_override.or(cfg.modes).unwrap_or(DEFAULT_MODES);
        if modes == 0 {
            return fail(
                if modes_override.is_some() { "--modes" } else { "domain.modes" },
                "must be at least 1",
            );
        }
        let omega = match &cfg.omega {
            None => vec![(0.0, cfg.length)],
            Some(list) => {
                if list.is_empty() {
                    return fail("domain.omega", "must contain at least one interval");
                }
                for (i, [lo, hi]) in list.iter().enumerate() {
                    if !(lo.is_finite() && hi.is_finite() && 0.0 <= *lo && lo < hi && *hi <= cfg.length) {
                        return fail(
                            format!("domain.omega[{i}]"),
                            format!("[{lo}, {hi}] must satisfy 0 ≤ lo < hi ≤ length = {}", cfg.length),
                        );
                    }
                }
                list.iter().map(|&[lo, hi]| (lo, hi)).collect()
            }
        };
        DomainSpec::new(cfg.length, omega, modes).or_else(|e| fail("domain.omega", e.to_string()))
    }

    pub fn schedule(&self, task: Task) -> Checked<ImpulseSchedule> {
        let s = require(&self.schedule, "schedule", task)?;
        if !(s.horizon.is_finite() && s.horizon > 0.0) {
            return fail("schedule.T", "must be a positive finite number");
        }
        finite(&s.instants, "schedule.instants")?;
        for (i, &t) in s.instants.iter().enumerate() {
            if t < 0.0 || t >= s.horizon {
                return fail(
                    format!("schedule.instants[{i}]"),
                    format!("{t} must lie in [0, T) with T = {}", s.horizon),
                );
            }
            if i > 0 && t <= s.instants[i - 1] {
                return fail(format!("schedule.instants[{i}]"), "instants must be strictly increasing");
            }
        }
        ImpulseSchedule::new(s.instants.clone(), s.horizon)
            .or_else(|e| fail("schedule.instants", e.to_string()))
    }

    pub fn instants_with_horizon(&self, task: Task) -> Checked<InstantSequence> {
        self.schedule(task)?
            .to_sequence()
            .or_else(|e| fail("schedule", e.to_string()))
    }

    pub fn resolve(&self, task: Task, modes: Option<usize>, tol: Option<f64>) -> Checked<Resolved> {
        let pair = self.pair(task)?;
        let domain = self.domain(modes)?;
        let schedule = self.schedule(task)?;
        Ok(Resolved {
            spec: SystemSpec::new(pair, domain),
            schedule,
            tol: self.rank_tolerance(tol)?,
        })
    }

    pub fn sample_points(&self) -> usize {
        self.sampling.as_ref().map_or(50, |s| s.points)
    }
}

impl Profile {
    /// Coefficients on the `N`-mode sine basis with `components` columns.
    pub fn resolve(&self, spec: &SystemSpec, components: usize, path: &str) -> Checked<SpectralState> {
        let modes = spec.modes();
        let domain = spec.domain();
        match self {
            Profile::Zero => Ok(SpectralState::zeros(modes, components)),
            Profile::Coefficients { values } => {
                if values.len() > modes {
                    return fail(
                        format!("{path}.values"),
                        format!("has {} rows but only {modes} modes are kept", values.len()),
                    );
                }
                let mut c = DMatrix::zeros(modes, components);
                for (j, row) in values.iter().enumerate() {
                    if row.len() != components {
                        return fail(
                            format!("{path}.values[{j}]"),
                            format!("has {} entries, expected {components}", row.len()),
                        );
                    }
                    finite(row, &format!("{path}.values[{j}]"))?;
                    for (i, v) in row.iter().enumerate() {
                        c[(j, i)] = *v;
                    }
                }
                SpectralState::new(c).or_else(|e| fail(path, e.to_string()))
            }
            Profile::SingleMode {
                mode,
                component,
                amplitude,
            } => {
                if *mode == 0 || *mode > modes {
                    return fail(format!("{path}.mode"), format!("must lie in 1..={modes}"));
                }
                if let Some(ci) = component {
                    if *ci == 0 || *ci > components {
                        return fail(format!("{path}.component"), format!("must lie in 1..={components}"));
                    }
                }
                if !amplitude.is_finite() {
                    return fail(format!("{path}.amplitude"), "must be finite");
                }
                let mut c = DMatrix::zeros(modes, components);
                for i in 0..components {
                    if component.is_none_or(|ci| ci == i + 1) {
                        c[(mode - 1, i)] = *amplitude;
                    }
                }
                SpectralState::new(c).or_else(|e| fail(path, e.to_string()))
            }
            Profile::Bump {
                center,
                width,
                amplitude,
                weights,
            } => {
                let length = domain.length();
                if !(center.is_finite() && *center > 0.0 && *center < length) {
                    return fail(format!("{path}.center"), format!("must lie in (0, {length})"));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return fail(format!("{path}.width"), "must be positive");
                }
                if !amplitude.is_finite() {
                    return fail(format!("{path}.amplitude"), "must be finite");
                }
                let w = match weights {
                    None => DVector::from_element(components, 1.0),
                    Some(w) if w.len() == components => {
                        finite(w, &format!("{path}.weights"))?;
                        DVector::from_column_slice(w)
                    }
                    Some(w) => {
                        return fail(
                            format!("{path}.weights"),
                            format!("has {} entries, expected {components}", w.len()),
                        )
                    }
                };
                let lo = (center - width).max(0.0);
                let hi = (center + width).min(length);
                let shape = |x: f64| {
                    let r = (x - center) / width;
                    if r.abs() >= 1.0 {
                        0.0
                    } else {
                        amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                    }
                };
                let basis = spec.basis();
                let c = DMatrix::from_fn(modes, components, |j, i| {
                    w[i] * simpson(|x| shape(x) * basis.phi(j + 1, x), lo, hi, 2000)
                });
                SpectralState::new(c).or_else(|e| fail(path, e.to_string()))
            }
            Profile::Constant { values } => {
                if values.len() != components {
                    return fail(
                        format!("{path}.values"),
                        format!("has {} entries, expected {components}", values.len()),
                    );
                }
                finite(values, &format!("{path}.values"))?;
                Ok(SpectralState::constant_profile(domain, &DVector::from_column_slice(values)))
            }
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}
