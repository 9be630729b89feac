//! Finite-dimensional controllability of the impulse-controlled ODE
//! `z' = Az`, `z(τ_k) = z(τ_k−) + B u_k`.
//!
//! Besides the classical Kalman test this module provides the critical window
//! `d_A = min π/|Im λ|`, the sampled controllability matrices built from
//! `e^{Aτ_k}B`, the expansion `e^{At} = Σ f̂_i(t) A^i` through the companion
//! matrix of the characteristic polynomial, and minimum-norm impulse steering.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    char_poly, eigenvalues, expm, min_norm_lstsq, numerical_rank, CharPoly, MatrixReal,
    RankTolerance,
};
use crate::policy::{EXACT_STEERING_RESIDUAL, REAL_EIGENVALUE_CUT, WINDOW_BOUNDARY_BAND};

/// The coupling pair `(A, B)` with `A` of size `n×n` and `B` of size `n×m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    a: MatrixReal,
    b: MatrixReal,
}

impl ControlPair {
    pub fn new(a: MatrixReal, b: MatrixReal) -> Result<Self> {
        let n = a.require_square()?;
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows but A is {n}x{n}",
                b.rows()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &MatrixReal {
        &self.a
    }

    pub fn b(&self) -> &MatrixReal {
        &self.b
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    /// Control dimension `m`.
    pub fn control_dim(&self) -> usize {
        self.b.cols()
    }

    /// Same `A`, input matrix scaled by `factor`.
    pub fn with_scaled_input(&self, factor: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.scale(factor)?)
    }
}

/// Strictly increasing control instants with an optional horizon `T`.
///
/// Without a horizon any finite increasing sequence is accepted. With a
/// horizon the instants must lie in `(0, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantSequence {
    instants: Vec<f64>,
    horizon: Option<f64>,
}

impl InstantSequence {
    pub fn new(instants: Vec<f64>, horizon: Option<f64>) -> Result<Self> {
        if instants.is_empty() {
            return Err(Error::InvalidInstants("at least one instant is required".into()));
        }
        if let Some(t) = instants.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidInstants(format!("instant {t} is not finite")));
        }
        for (k, w) in instants.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::InvalidInstants(format!(
                    "instants must be strictly increasing: τ_{} = {} is not above τ_{} = {}",
                    k + 2,
                    w[1],
                    k + 1,
                    w[0]
                )));
            }
        }
        if let Some(horizon) = horizon {
            if !(horizon.is_finite() && horizon > 0.0) {
                return Err(Error::InvalidInstants(format!(
                    "horizon {horizon} must be positive and finite"
                )));
            }
            if instants[0] <= 0.0 {
                return Err(Error::InvalidInstants(format!(
                    "first instant {} must be positive",
                    instants[0]
                )));
            }
            let last = instants[instants.len() - 1];
            if last >= horizon {
                return Err(Error::InvalidInstants(format!(
                    "last instant {last} must be below the horizon {horizon}"
                )));
            }
        }
        Ok(Self { instants, horizon })
    }

    pub fn free(instants: Vec<f64>) -> Result<Self> {
        Self::new(instants, None)
    }

    pub fn with_horizon(instants: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::new(instants, Some(horizon))
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// `τ_p − τ_1`.
    pub fn window(&self) -> f64 {
        self.instants[self.instants.len() - 1] - self.instants[0]
    }

    fn require_horizon(&self) -> Result<f64> {
        self.horizon.ok_or(Error::MissingHorizon)
    }
}

/// Which exponential weights the sampled matrix uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Blocks `e^{Aτ_k} B`.
    Forward,
    /// Blocks `e^{A(T−τ_k)} B`.
    TimeReversed,
}

/// Kalman matrix `(B, AB, …, A^{n−1}B)` of size `n × nm`.
pub fn kalman_matrix(pair: &ControlPair) -> MatrixReal {
    let n = pair.state_dim();
    let m = pair.control_dim();
    let a = pair.a.as_inner();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = pair.b.as_inner().clone();
    for k in 0..n {
        out.columns_mut(k * m, m).copy_from(&block);
        block = a * block;
    }
    MatrixReal::new(out).expect("products of finite matrices stay finite at this size")
}

pub fn kalman_rank(pair: &ControlPair, tol: RankTolerance) -> Result<usize> {
    numerical_rank(&kalman_matrix(pair), tol)
}

pub fn is_kalman_controllable(pair: &ControlPair, tol: RankTolerance) -> Result<bool> {
    Ok(kalman_rank(pair, tol)? == pair.state_dim())
}

/// `d_A = min π/|Im λ|` over the spectrum of `A`; `+∞` for a real spectrum.
pub fn critical_window(a: &MatrixReal) -> Result<f64> {
    let spectrum = eigenvalues(a)?;
    Ok(spectrum
        .eigenvalues
        .iter()
        .filter(|z| z.im.abs() > REAL_EIGENVALUE_CUT * (1.0 + z.norm()))
        .map(|z| std::f64::consts::PI / z.im.abs())
        .fold(f64::INFINITY, f64::min))
}

/// Block matrix `(e^{Aτ_1}B, …, e^{Aτ_p}B)` or its time-reversed variant.
pub fn sampled_controllability_matrix(
    pair: &ControlPair,
    instants: &InstantSequence,
    mode: SamplingMode,
) -> Result<MatrixReal> {
    let n = pair.state_dim();
    let m = pair.control_dim();
    let horizon = match mode {
        SamplingMode::Forward => None,
        SamplingMode::TimeReversed => Some(instants.require_horizon()?),
    };
    let mut out = DMatrix::zeros(n, instants.len() * m);
    for (k, &tau) in instants.instants().iter().enumerate() {
        let t = horizon.map_or(tau, |h| h - tau);
        let block = expm(&pair.a, t)?.as_inner() * pair.b.as_inner();
        out.columns_mut(k * m, m).copy_from(&block);
    }
    MatrixReal::new(out)
}

/// Outcome of testing the full-rank property for `n` instants.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRankReport {
    pub critical_window: f64,
    pub window: f64,
    /// `τ_n − τ_1 < d_A`, strict.
    pub window_ok: bool,
    /// The window lies within the boundary band of `d_A`.
    pub at_boundary: bool,
    pub kalman_controllable: bool,
    pub rank: usize,
    pub rank_full: bool,
}

impl WindowRankReport {
    /// False only when a controllable pair with an admissible window
    /// nevertheless shows a rank drop.
    pub fn is_consistent(&self) -> bool {
        !(self.kalman_controllable && self.window_ok) || self.rank_full
    }
}

/// Checks full rank of `(e^{Aτ_1}B, …, e^{Aτ_n}B)` against the window condition.
pub fn check_window_rank(
    pair: &ControlPair,
    instants: &InstantSequence,
    tol: RankTolerance,
) -> Result<WindowRankReport> {
    let n = pair.state_dim();
    if instants.len() != n {
        return Err(Error::InstantCount {
            expected: n,
            got: instants.len(),
        });
    }
    let critical = critical_window(&pair.a)?;
    let window = instants.window();
    // e^{Aτ_1} is invertible, so the rank is read off the shifted blocks e^{A(τ_k−τ_1)}B
    let first = instants.instants()[0];
    let shifted = InstantSequence::free(instants.instants().iter().map(|t| t - first).collect())?;
    let sampled = sampled_controllability_matrix(pair, &shifted, SamplingMode::Forward)?;
    let rank = numerical_rank(&sampled, tol)?;
    Ok(WindowRankReport {
        critical_window: critical,
        window,
        window_ok: window < critical,
        at_boundary: (window - critical).abs() < WINDOW_BOUNDARY_BAND,
        kalman_controllable: is_kalman_controllable(pair, tol)?,
        rank,
        rank_full: rank == n,
    })
}

/// Minimum-norm impulse controls for the ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSteering {
    /// One control vector in `ℝ^m` per instant.
    pub controls: Vec<DVector<f64>>,
    /// `‖Σ e^{A(T−τ_k)}B u_k − (z_1 − e^{AT} z_0)‖`.
    pub residual: f64,
    /// `max(1, ‖z_1 − e^{AT} z_0‖)`, the scale the residual is judged against.
    pub scale: f64,
    /// Rank of the time-reversed sampled matrix.
    pub rank: usize,
}

impl OdeSteering {
    /// Residual below `EXACT_STEERING_RESIDUAL · scale`.
    pub fn is_exact(&self) -> bool {
        self.residual <= EXACT_STEERING_RESIDUAL * self.scale
    }
}

/// Steers `z_0` at time 0 towards `z_1` at time `T` with impulses at the instants.
pub fn steer_ode(
    pair: &ControlPair,
    instants: &InstantSequence,
    z0: &DVector<f64>,
    z1: &DVector<f64>,
    tol: RankTolerance,
) -> Result<OdeSteering> {
    let n = pair.state_dim();
    let m = pair.control_dim();
    if z0.len() != n || z1.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial and target states must have length {n}, got {} and {}",
            z0.len(),
            z1.len()
        )));
    }
    let horizon = instants.require_horizon()?;
    let free = expm(&pair.a, horizon)?.as_inner() * z0;
    let rhs = z1 - free;
    let sampled = sampled_controllability_matrix(pair, instants, SamplingMode::TimeReversed)?;
    let sol = min_norm_lstsq(&sampled, &rhs, tol)?;
    let controls = (0..instants.len())
        .map(|k| sol.x.rows(k * m, m).into_owned())
        .collect();
    Ok(OdeSteering {
        controls,
        residual: sol.residual,
        scale: rhs.norm().max(1.0),
        rank: numerical_rank(&sampled, tol)?,
    })
}

/// Endpoint `e^{AT}z_0 + Σ e^{A(T−τ_k)} B u_k` of the impulse-controlled ODE.
pub fn simulate_ode(
    pair: &ControlPair,
    instants: &InstantSequence,
    z0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let horizon = instants.require_horizon()?;
    if controls.len() != instants.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} controls for {} instants",
            controls.len(),
            instants.len()
        )));
    }
    // step through the jumps in time order
    let b = pair.b.as_inner();
    let mut state = z0.clone();
    let mut t = 0.0;
    for (&tau, u) in instants.instants().iter().zip(controls) {
        if u.len() != pair.control_dim() {
            return Err(Error::DimensionMismatch(format!(
                "control of length {} for m = {}",
                u.len(),
                pair.control_dim()
            )));
        }
        state = expm(&pair.a, tau - t)?.as_inner() * state + b * u;
        t = tau;
    }
    Ok(expm(&pair.a, horizon - t)?.as_inner() * state)
}

/// The characteristic polynomial of `A` together with its companion matrix `Â`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSystem {
    poly: CharPoly,
    companion: MatrixReal,
}

impl CompanionSystem {
    pub fn from_matrix(a: &MatrixReal) -> Result<Self> {
        let poly = char_poly(a)?;
        let companion = poly.companion();
        Ok(Self { poly, companion })
    }

    pub fn coeffs(&self) -> &[f64] {
        self.poly.coeffs()
    }

    pub fn matrix(&self) -> &MatrixReal {
        &self.companion
    }

    /// `f̂(t) = e^{Ât} e_1`.
    pub fn coefficient_functions(&self, t: f64) -> Result<DVector<f64>> {
        Ok(expm(&self.companion, t)?.as_inner().column(0).into_owned())
    }
}

/// Coefficients `f̂_i(t)` with `e^{At} = Σ_{i<n} f̂_i(t) A^i`.
pub fn expm_companion_coeffs(a: &MatrixReal, t: f64) -> Result<DVector<f64>> {
    CompanionSystem::from_matrix(a)?.coefficient_functions(t)
}

/// `Σ f̂_i A^i` for given coefficients.
pub fn companion_reconstruction(a: &MatrixReal, coeffs: &DVector<f64>) -> Result<MatrixReal> {
    let n = a.require_square()?;
    if coeffs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a {n}x{n} matrix",
            coeffs.len()
        )));
    }
    let mut acc = DMatrix::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    for &c in coeffs.iter() {
        acc += &power * c;
        power = a.as_inner() * power;
    }
    MatrixReal::new(acc)
}

/// The matrix `[f̂_i(τ_k)]` (row `i`, column `k`) and its numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSampleMatrix {
    pub matrix: MatrixReal,
    pub rank: usize,
}

pub fn companion_sample_matrix(
    a: &MatrixReal,
    instants: &InstantSequence,
    tol: RankTolerance,
) -> Result<CompanionSampleMatrix> {
    let n = a.require_square()?;
    if instants.len() != n {
        return Err(Error::InstantCount {
            expected: n,
            got: instants.len(),
        });
    }
    let system = CompanionSystem::from_matrix(a)?;
    let mut out = DMatrix::zeros(n, n);
    for (k, &tau) in instants.instants().iter().enumerate() {
        out.set_column(k, &system.coefficient_functions(tau)?);
    }
    let matrix = MatrixReal::new(out)?;
    let rank = numerical_rank(&matrix, tol)?;
    Ok(CompanionSampleMatrix { matrix, rank })
}

/// The pair `φ_1, φ_2` factorising `d²/dt² − 2b d/dt + (b² + c²)` into two
/// first-order conjugated derivatives on `(t_0 − π/(2|c|), t_0 + π/(2|c|))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationPair {
    b: f64,
    c: f64,
    t0: f64,
}

/// Values of `φ_1, φ_2` and their first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationSample {
    pub phi1: f64,
    pub phi2: f64,
    pub dphi1: f64,
    pub dphi2: f64,
    pub ddphi1: f64,
    pub ddphi2: f64,
}

impl FactorizationPair {
    pub fn new(b: f64, c: f64, t0: f64) -> Result<Self> {
        if !(b.is_finite() && c.is_finite() && t0.is_finite()) {
            return Err(Error::InvalidArgument("b, c and t_0 must be finite".into()));
        }
        if c == 0.0 {
            return Err(Error::InvalidArgument(
                "c = 0 reduces to a first-order shift; no factorisation pair is needed".into(),
            ));
        }
        Ok(Self { b, c, t0 })
    }

    pub fn half_width(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.c.abs()
    }

    pub fn contains(&self, t: f64) -> bool {
        (t - self.t0).abs() < self.half_width()
    }

    /// `φ_1(t) = −b(t−t_0) + ln cos c(t−t_0)`, `φ_2(t) = −b(t−t_0) − ln cos c(t−t_0)`.
    pub fn sample(&self, t: f64) -> FactorizationSample {
        let (b, c) = (self.b, self.c);
        let u = c * (t - self.t0);
        let tan = u.tan();
        let sec2 = 1.0 / (u.cos() * u.cos());
        let log_cos = u.cos().ln();
        FactorizationSample {
            phi1: -b * (t - self.t0) + log_cos,
            phi2: -b * (t - self.t0) - log_cos,
            dphi1: -b - c * tan,
            dphi2: -b + c * tan,
            ddphi1: -c * c * sec2,
            ddphi2: c * c * sec2,
        }
    }

    /// Largest absolute defect of `φ_1' + φ_2' = −2b` and
    /// `φ_1'φ_2' + φ_2'' = b² + c²` at `t`.
    ///
    /// Both sides are formed from the same rounded `tan c(t−t_0)` in
    /// double-double arithmetic, so the defect reflects the formulas rather
    /// than cancellation between terms of size `c² tan²`.
    pub fn defect(&self, t: f64) -> f64 {
        let (b, c) = (self.b, self.c);
        let tan = (c * (t - self.t0)).tan();
        let ctan = dd::mul(dd::from(c), dd::from(tan));
        let dphi1 = dd::sub(dd::from(-b), ctan);
        let dphi2 = dd::add(dd::from(-b), ctan);
        let sum_defect = dd::add(dd::add(dphi1, dphi2), dd::from(2.0 * b));
        let c2 = dd::mul(dd::from(c), dd::from(c));
        let sec2 = dd::add(dd::from(1.0), dd::mul(dd::from(tan), dd::from(tan)));
        let ddphi2 = dd::mul(c2, sec2);
        let lhs = dd::add(dd::mul(dphi1, dphi2), ddphi2);
        let rhs = dd::add(dd::mul(dd::from(b), dd::from(b)), c2);
        let prod_defect = dd::sub(lhs, rhs);
        dd::to_f64(sum_defect).abs().max(dd::to_f64(prod_defect).abs())
    }

    /// `(e^{−φ_1} d/dt e^{φ_1}) ∘ (e^{−φ_2} d/dt e^{φ_2})` applied to `h`,
    /// given `h, h', h''` at `t`.
    pub fn apply_composed(&self, t: f64, h: f64, dh: f64, ddh: f64) -> f64 {
        let s = self.sample(t);
        // inner factor: k = h' + φ_2' h
        let k = dh + s.dphi2 * h;
        let dk = ddh + s.ddphi2 * h + s.dphi2 * dh;
        dk + s.dphi1 * k
    }

    /// `h'' − 2b h' + (b² + c²) h`.
    pub fn apply_target(&self, h: f64, dh: f64, ddh: f64) -> f64 {
        ddh - 2.0 * self.b * dh + (self.b * self.b + self.c * self.c) * h
    }

    /// Evenly spaced points inside the interval, kept `margin · half_width`
    /// away from both ends.
    pub fn sample_points(&self, count: usize, margin: f64) -> Vec<f64> {
        let reach = self.half_width() * (1.0 - margin);
        match count {
            0 => Vec::new(),
            1 => vec![self.t0],
            _ => (0..count)
                .map(|i| self.t0 - reach + 2.0 * reach * i as f64 / (count - 1) as f64)
                .collect(),
        }
    }
}

/// Max defect of both factorisation identities over `samples` points spread
/// across the admissible interval with a margin of `1e-3` of the half-width.
pub fn factorization_coeff_check(b: f64, c: f64, t0: f64, samples: usize) -> Result<f64> {
    let pair = FactorizationPair::new(b, c, t0)?;
    Ok(pair
        .sample_points(samples, 1e-3)
        .into_iter()
        .map(|t| pair.defect(t))
        .fold(0.0, f64::max))
}

/// Error-free transformations for a compensated evaluation.
mod dd {
    pub type Dd = (f64, f64);

    pub fn from(x: f64) -> Dd {
        (x, 0.0)
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    pub fn add(x: Dd, y: Dd) -> Dd {
        let (s, e) = two_sum(x.0, y.0);
        let e = e + x.1 + y.1;
        two_sum(s, e)
    }

    pub fn sub(x: Dd, y: Dd) -> Dd {
        add(x, (-y.0, -y.1))
    }

    pub fn mul(x: Dd, y: Dd) -> Dd {
        let p = x.0 * y.0;
        let e = x.0.mul_add(y.0, -p);
        let e = e + x.0 * y.1 + x.1 * y.0;
        two_sum(p, e)
    }

    pub fn to_f64(x: Dd) -> f64 {
        x.0 + x.1
    }
}
