//! Sine-basis realization of the coupled heat system on an interval `(0, L)`
//! with homogeneous Dirichlet conditions.
//!
//! A state is the coefficient block `c ∈ ℝ^{N×n}` of
//! `y(x) = Σ_j φ_j(x) c_j`, `φ_j(x) = √(2/L) sin(jπx/L)`. Between instants each
//! mode evolves by `c_j ← e^{−λ_j t} e^{−At} c_j`; an impulse adds
//! `Σ_l W_{jl} B d_l`, where `W` is the Gram matrix of the basis on `ω`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::control::{ControlPair, InstantSequence};
use crate::error::{Error, Result};
use crate::linalg::{expm, MatrixReal};

/// Interval `(0, L)`, control region `ω` as disjoint open subintervals, and
/// the number of retained modes `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    length: f64,
    omega: Vec<(f64, f64)>,
    modes: usize,
}

impl DomainSpec {
    pub fn new(length: f64, omega: Vec<(f64, f64)>, modes: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "length {length} must be positive and finite"
            )));
        }
        if modes == 0 {
            return Err(Error::InvalidDomain("at least one mode is required".into()));
        }
        if omega.is_empty() {
            return Err(Error::InvalidDomain("control region ω must be non-empty".into()));
        }
        let mut omega = omega;
        for &(lo, hi) in &omega {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= length) {
                return Err(Error::InvalidDomain(format!(
                    "interval ({lo}, {hi}) must satisfy 0 ≤ α < β ≤ {length}"
                )));
            }
        }
        omega.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in omega.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidDomain(format!(
                    "intervals ({}, {}) and ({}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self {
            length,
            omega,
            modes,
        })
    }

    /// `ω = (0, L)`.
    pub fn full(length: f64, modes: usize) -> Result<Self> {
        Self::new(length, vec![(0.0, length)], modes)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn omega(&self) -> &[(f64, f64)] {
        &self.omega
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        Self::new(self.length, self.omega.clone(), modes)
    }

    /// `ω` covers `(0, L)` up to finitely many points.
    pub fn is_full(&self) -> bool {
        let mut reach = 0.0;
        for &(lo, hi) in &self.omega {
            if lo > reach {
                return false;
            }
            reach = hi;
        }
        reach >= self.length
    }

    pub fn contains_in_omega(&self, x: f64) -> bool {
        self.omega.iter().any(|&(lo, hi)| lo < x && x < hi)
    }
}

/// Dirichlet eigenpairs `λ_j = (jπ/L)²`, `φ_j = √(2/L) sin(jπx/L)`, `j = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    length: f64,
    eigenvalues: Vec<f64>,
}

impl Eigenbasis {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `φ_j(x)` for the one-based mode index `j`.
    pub fn phi(&self, j: usize, x: f64) -> f64 {
        (2.0 / self.length).sqrt() * (j as f64 * PI * x / self.length).sin()
    }
}

pub fn eigenbasis(domain: &DomainSpec) -> Eigenbasis {
    let l = domain.length;
    Eigenbasis {
        length: l,
        eigenvalues: (1..=domain.modes)
            .map(|j| (j as f64 * PI / l).powi(2))
            .collect(),
    }
}

/// `W_{jl} = ∫_ω φ_j φ_l dx`, the Galerkin matrix of multiplication by `χ_ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaGram(DMatrix<f64>);

impl OmegaGram {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Closed-form Gram matrix; exactly the identity when `ω` covers the interval.
pub fn omega_gram(domain: &DomainSpec) -> OmegaGram {
    let n = domain.modes;
    if domain.is_full() {
        return OmegaGram(DMatrix::identity(n, n));
    }
    let l = domain.length;
    let k = PI / l;
    let mut w = DMatrix::zeros(n, n);
    for &(lo, hi) in &domain.omega {
        for j in 1..=n {
            let jf = j as f64;
            // ∫ sin² = x/2 − sin(2jkx)/(4jk)
            let diag = |x: f64| x / 2.0 - (2.0 * jf * k * x).sin() / (4.0 * jf * k);
            w[(j - 1, j - 1)] += diag(hi) - diag(lo);
            for l_idx in (j + 1)..=n {
                let lf = l_idx as f64;
                let d = (jf - lf) * k;
                let s = (jf + lf) * k;
                let anti = |x: f64| (d * x).sin() / (2.0 * d) - (s * x).sin() / (2.0 * s);
                let v = anti(hi) - anti(lo);
                w[(j - 1, l_idx - 1)] += v;
                w[(l_idx - 1, j - 1)] += v;
            }
        }
    }
    OmegaGram(w * (2.0 / l))
}

/// Coefficient block `N×n` (or `N×m` for controls): row `j` belongs to `φ_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState(DMatrix<f64>);

/// Control coefficients `N×m` for one impulse.
pub type SpectralControl = SpectralState;

/// One control block per impulse, in instant order.
pub type ControlSet = Vec<SpectralControl>;

impl SpectralState {
    pub fn new(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "coefficient block must be non-empty".into(),
            ));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self(coeffs))
    }

    pub fn zeros(modes: usize, components: usize) -> Self {
        Self(DMatrix::zeros(modes, components))
    }

    /// Spatially constant profile `y(x) ≡ α`, projected onto the first `N` modes.
    pub fn constant_profile(domain: &DomainSpec, alpha: &DVector<f64>) -> Self {
        let l = domain.length;
        let weights = DVector::from_fn(domain.modes, |i, _| {
            let j = (i + 1) as f64;
            if (i + 1) % 2 == 1 {
                2.0 * (2.0 * l).sqrt() / (j * PI)
            } else {
                0.0
            }
        });
        Self(weights * alpha.transpose())
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_coeffs(self) -> DMatrix<f64> {
        self.0
    }

    pub fn modes(&self) -> usize {
        self.0.nrows()
    }

    pub fn components(&self) -> usize {
        self.0.ncols()
    }

    /// `L²` norm, by Parseval.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn inner(&self, other: &SpectralState) -> f64 {
        self.0.dot(&other.0)
    }

    /// Euclidean norm of each mode's coefficient vector.
    pub fn mode_norms(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.norm()).collect()
    }

    /// `L²` norm of each component.
    pub fn component_norms(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.norm()).collect()
    }

    /// Point value `y(x) ∈ ℝ^n`.
    pub fn evaluate(&self, basis: &Eigenbasis, x: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.components());
        for (j, row) in self.0.row_iter().enumerate() {
            out += row.transpose() * basis.phi(j + 1, x);
        }
        out
    }

    /// Flattened mode-major vector: index `j·n + i`.
    pub fn to_vector(&self) -> DVector<f64> {
        let (rows, cols) = self.0.shape();
        DVector::from_fn(rows * cols, |idx, _| self.0[(idx / cols, idx % cols)])
    }

    pub fn from_vector(v: &DVector<f64>, modes: usize, components: usize) -> Result<Self> {
        if v.len() != modes * components {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {modes}x{components} block",
                v.len()
            )));
        }
        Self::new(DMatrix::from_fn(modes, components, |j, i| {
            v[j * components + i]
        }))
    }

    fn require_shape(&self, modes: usize, components: usize, what: &str) -> Result<()> {
        if self.0.shape() != (modes, components) {
            return Err(Error::DimensionMismatch(format!(
                "{what} is {}x{}, expected {modes}x{components}",
                self.0.nrows(),
                self.0.ncols()
            )));
        }
        Ok(())
    }
}

fn require_nonnegative(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} must be non-negative and finite"
        )));
    }
    Ok(())
}

fn modal_flow(state: &SpectralState, generator: &MatrixReal, eigenvalues: &[f64], dt: f64) -> Result<SpectralState> {
    require_nonnegative(dt)?;
    state.require_shape(eigenvalues.len(), generator.rows(), "state")?;
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let flow = expm(generator, dt)?;
    let mut out = state.0.clone() * flow.as_inner().transpose();
    for (j, mut row) in out.row_iter_mut().enumerate() {
        row *= (-eigenvalues[j] * dt).exp();
    }
    SpectralState::new(out)
}

/// `e^{𝒜 dt}` with `𝒜 = Δ − A`: `c_j ← e^{−λ_j dt} e^{−A dt} c_j`.
pub fn free_flow(state: &SpectralState, a: &MatrixReal, eigenvalues: &[f64], dt: f64) -> Result<SpectralState> {
    modal_flow(state, &a.scale(-1.0)?, eigenvalues, dt)
}

/// `e^{𝒜* dt}`: `c_j ← e^{−λ_j dt} e^{−Aᵀ dt} c_j`.
pub fn adjoint_flow(state: &SpectralState, a: &MatrixReal, eigenvalues: &[f64], dt: f64) -> Result<SpectralState> {
    modal_flow(state, &a.transpose().scale(-1.0)?, eigenvalues, dt)
}

/// Jump `c_j ← c_j + Σ_l W_{jl} B d_l`.
pub fn apply_impulse(
    state: &SpectralState,
    gram: &OmegaGram,
    b: &MatrixReal,
    control: &SpectralControl,
) -> Result<SpectralState> {
    let modes = gram.dim();
    state.require_shape(modes, b.rows(), "state")?;
    control.require_shape(modes, b.cols(), "control")?;
    SpectralState::new(&state.0 + gram.matrix() * &control.0 * b.as_inner().transpose())
}

/// Control instants in `(0, T)` together with the horizon `T`; may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSchedule {
    instants: Vec<f64>,
    horizon: f64,
}

impl ImpulseSchedule {
    pub fn new(instants: Vec<f64>, horizon: f64) -> Result<Self> {
        if instants.is_empty() {
            if !(horizon.is_finite() && horizon > 0.0) {
                return Err(Error::InvalidInstants(format!(
                    "horizon {horizon} must be positive and finite"
                )));
            }
            return Ok(Self { instants, horizon });
        }
        let seq = InstantSequence::with_horizon(instants, horizon)?;
        Ok(Self {
            instants: seq.instants().to_vec(),
            horizon,
        })
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn to_sequence(&self) -> Result<InstantSequence> {
        InstantSequence::with_horizon(self.instants.clone(), self.horizon)
    }
}

impl TryFrom<&InstantSequence> for ImpulseSchedule {
    type Error = Error;

    fn try_from(seq: &InstantSequence) -> Result<Self> {
        let horizon = seq.horizon().ok_or(Error::MissingHorizon)?;
        Self::new(seq.instants().to_vec(), horizon)
    }
}

/// The pair `(A, B)` together with the spatial discretisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pair: ControlPair,
    domain: DomainSpec,
    basis: Eigenbasis,
    gram: OmegaGram,
}

impl SystemSpec {
    pub fn new(pair: ControlPair, domain: DomainSpec) -> Self {
        let basis = eigenbasis(&domain);
        let gram = omega_gram(&domain);
        Self {
            pair,
            domain,
            basis,
            gram,
        }
    }

    pub fn pair(&self) -> &ControlPair {
        &self.pair
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn basis(&self) -> &Eigenbasis {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.basis.eigenvalues()
    }

    pub fn gram(&self) -> &OmegaGram {
        &self.gram
    }

    pub fn modes(&self) -> usize {
        self.domain.modes
    }

    pub fn state_dim(&self) -> usize {
        self.pair.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.pair.control_dim()
    }

    pub fn zero_state(&self) -> SpectralState {
        SpectralState::zeros(self.modes(), self.state_dim())
    }

    pub fn zero_control(&self) -> SpectralControl {
        SpectralState::zeros(self.modes(), self.control_dim())
    }

    pub fn free_flow(&self, state: &SpectralState, dt: f64) -> Result<SpectralState> {
        free_flow(state, self.pair.a(), self.eigenvalues(), dt)
    }

    pub fn adjoint_flow(&self, state: &SpectralState, dt: f64) -> Result<SpectralState> {
        adjoint_flow(state, self.pair.a(), self.eigenvalues(), dt)
    }

    pub fn apply_impulse(&self, state: &SpectralState, control: &SpectralControl) -> Result<SpectralState> {
        apply_impulse(state, &self.gram, self.pair.b(), control)
    }

    fn check_inputs(
        &self,
        y0: &SpectralState,
        schedule: &ImpulseSchedule,
        controls: &[SpectralControl],
    ) -> Result<()> {
        y0.require_shape(self.modes(), self.state_dim(), "initial state")?;
        if controls.len() != schedule.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} control blocks for {} instants",
                controls.len(),
                schedule.len()
            )));
        }
        for (k, u) in controls.iter().enumerate() {
            u.require_shape(self.modes(), self.control_dim(), &format!("control {}", k + 1))?;
        }
        Ok(())
    }
}

/// Where a recorded state sits relative to the impulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointKind {
    Initial,
    /// Left limit `y(τ_k−)`; zero-based impulse index.
    BeforeImpulse(usize),
    /// `y(τ_k)` after the jump.
    AfterImpulse(usize),
    /// A requested sampling time between events.
    Sample,
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub kind: PointKind,
    pub state: SpectralState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpectralState {
        &self
            .points
            .last()
            .expect("a trajectory always holds the initial and final states")
            .state
    }
}

/// Alternates free flow and jumps; records `y(0)`, `y(τ_k−)`, `y(τ_k)` and `y(T)`.
pub fn evolve(
    spec: &SystemSpec,
    y0: &SpectralState,
    schedule: &ImpulseSchedule,
    controls: &[SpectralControl],
) -> Result<Trajectory> {
    evolve_on_grid(spec, y0, schedule, controls, &[])
}

/// As [`evolve`], additionally recording the state at each grid time in `(0, T)`.
pub fn evolve_on_grid(
    spec: &SystemSpec,
    y0: &SpectralState,
    schedule: &ImpulseSchedule,
    controls: &[SpectralControl],
    grid: &[f64],
) -> Result<Trajectory> {
    spec.check_inputs(y0, schedule, controls)?;
    let horizon = schedule.horizon();
    let mut samples: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|t| t.is_finite() && *t > 0.0 && *t < horizon)
        .collect();
    samples.sort_by(f64::total_cmp);
    samples.dedup();

    let mut points = vec![TrajectoryPoint {
        time: 0.0,
        kind: PointKind::Initial,
        state: y0.clone(),
    }];
    let mut state = y0.clone();
    let mut now = 0.0;
    let mut next_sample = samples.into_iter().peekable();
    let mut record_samples_until = |limit: f64,
                                    state: &SpectralState,
                                    now: f64,
                                    points: &mut Vec<TrajectoryPoint>|
     -> Result<()> {
        while let Some(&t) = next_sample.peek() {
            if t >= limit {
                break;
            }
            next_sample.next();
            points.push(TrajectoryPoint {
                time: t,
                kind: PointKind::Sample,
                state: spec.free_flow(state, t - now)?,
            });
        }
        Ok(())
    };

    for (k, (&tau, control)) in schedule.instants().iter().zip(controls).enumerate() {
        record_samples_until(tau, &state, now, &mut points)?;
        state = spec.free_flow(&state, tau - now)?;
        now = tau;
        points.push(TrajectoryPoint {
            time: tau,
            kind: PointKind::BeforeImpulse(k),
            state: state.clone(),
        });
        state = spec.apply_impulse(&state, control)?;
        points.push(TrajectoryPoint {
            time: tau,
            kind: PointKind::AfterImpulse(k),
            state: state.clone(),
        });
    }
    record_samples_until(horizon, &state, now, &mut points)?;
    state = spec.free_flow(&state, horizon - now)?;
    points.push(TrajectoryPoint {
        time: horizon,
        kind: PointKind::Final,
        state,
    });
    Ok(Trajectory { points })
}

/// Both sides of `⟨y(T), z⟩ = ⟨y_0, e^{𝒜*T} z⟩ + Σ_k ⟨u_k, χ_ω B* e^{𝒜*(T−τ_k)} z⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    /// `⟨y(T), z⟩` from a forward evolution.
    pub direct: f64,
    /// The adjoint-side expression.
    pub dual: f64,
    pub defect: f64,
}

pub fn duality_pairing(
    spec: &SystemSpec,
    y0: &SpectralState,
    schedule: &ImpulseSchedule,
    controls: &[SpectralControl],
    z: &SpectralState,
) -> Result<DualityReport> {
    z.require_shape(spec.modes(), spec.state_dim(), "test state")?;
    let forward = evolve(spec, y0, schedule, controls)?;
    let direct = forward.final_state().inner(z);

    let horizon = schedule.horizon();
    let mut dual = y0.inner(&spec.adjoint_flow(z, horizon)?);
    let b = spec.pair().b().as_inner();
    for (&tau, u) in schedule.instants().iter().zip(controls) {
        let w = spec.adjoint_flow(z, horizon - tau)?;
        let observed = spec.gram().matrix() * w.coeffs() * b;
        dual += u.coeffs().dot(&observed);
    }
    Ok(DualityReport {
        direct,
        dual,
        defect: (direct - dual).abs(),
    })
}
