//! Control synthesis on the truncated heat system: the reachability map
//! `G_T`, minimum-norm approximate steering, the exact null control available
//! when `ω` is the whole interval, and obstruction witnesses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    critical_window, is_kalman_controllable, kalman_matrix, kalman_rank,
    sampled_controllability_matrix, ControlPair, InstantSequence, SamplingMode,
};
use crate::error::{Error, Result};
use crate::heat::{
    evolve, DomainSpec, ImpulseSchedule, SpectralControl, SpectralState, SystemSpec,
};
use crate::linalg::{
    expm, min_norm_lstsq, null_space_left, numerical_rank, pinv, singular_values, MatrixReal,
    RankTolerance,
};
use crate::policy::REACHABILITY_ENTRY_GUARD;

/// Linear map from stacked impulse controls to the control part of `y(T)`.
///
/// Rows follow [`SpectralState::to_vector`] (index `j·n + i`); the column of
/// unit control `(k, l, i)` sits at `k·N·m + l·m + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityMap {
    matrix: MatrixReal,
    modes: usize,
    state_dim: usize,
    control_dim: usize,
    impulses: usize,
}

impl ReachabilityMap {
    pub fn matrix(&self) -> &MatrixReal {
        &self.matrix
    }

    pub fn impulses(&self) -> usize {
        self.impulses
    }

    pub fn column_index(&self, impulse: usize, mode: usize, input: usize) -> usize {
        impulse * self.modes * self.control_dim + mode * self.control_dim + input
    }

    pub fn flatten_controls(&self, controls: &[SpectralControl]) -> Result<DVector<f64>> {
        if controls.len() != self.impulses {
            return Err(Error::DimensionMismatch(format!(
                "{} control blocks for {} impulses",
                controls.len(),
                self.impulses
            )));
        }
        let block = self.modes * self.control_dim;
        let mut out = DVector::zeros(self.impulses * block);
        for (k, u) in controls.iter().enumerate() {
            if u.coeffs().shape() != (self.modes, self.control_dim) {
                return Err(Error::DimensionMismatch(format!(
                    "control {} is {}x{}, expected {}x{}",
                    k + 1,
                    u.modes(),
                    u.components(),
                    self.modes,
                    self.control_dim
                )));
            }
            out.rows_mut(k * block, block).copy_from(&u.to_vector());
        }
        Ok(out)
    }

    pub fn unflatten_controls(&self, v: &DVector<f64>) -> Result<Vec<SpectralControl>> {
        let block = self.modes * self.control_dim;
        if v.len() != self.impulses * block {
            return Err(Error::DimensionMismatch(format!(
                "control vector of length {}, expected {}",
                v.len(),
                self.impulses * block
            )));
        }
        (0..self.impulses)
            .map(|k| {
                SpectralState::from_vector(
                    &v.rows(k * block, block).into_owned(),
                    self.modes,
                    self.control_dim,
                )
            })
            .collect()
    }

    /// `G u` as a state.
    pub fn apply(&self, controls: &[SpectralControl]) -> Result<SpectralState> {
        let u = self.flatten_controls(controls)?;
        SpectralState::from_vector(&(self.matrix.as_inner() * u), self.modes, self.state_dim)
    }

    /// Numerical rank of `G`, equal to the rank of the Gramian `G Gᵀ`.
    pub fn rank(&self, tol: RankTolerance) -> Result<usize> {
        numerical_rank(&self.matrix, tol)
    }

    /// True when `G Gᵀ` is positive definite at the given rank tolerance.
    pub fn gramian_is_definite(&self, tol: RankTolerance) -> Result<bool> {
        Ok(self.rank(tol)? == self.modes * self.state_dim)
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        singular_values(&self.matrix)
    }
}

/// Assembles `G_T` column by column in closed form: the column of unit control
/// `φ_l e_i` at instant `τ_k` has mode-`j` block `e^{−λ_j(T−τ_k)} e^{−A(T−τ_k)} B e_i W_{jl}`.
pub fn assemble_reachability(spec: &SystemSpec, schedule: &ImpulseSchedule) -> Result<ReachabilityMap> {
    let modes = spec.modes();
    let n = spec.state_dim();
    let m = spec.control_dim();
    let p = schedule.len();
    let entries = modes * n * p * m;
    if entries > REACHABILITY_ENTRY_GUARD {
        return Err(Error::TooLarge(entries));
    }
    if p == 0 {
        return Err(Error::InvalidInstants("reachability needs at least one instant".into()));
    }
    let gram = spec.gram().matrix();
    let lambdas = spec.eigenvalues();
    let horizon = schedule.horizon();
    let mut g = DMatrix::zeros(modes * n, p * modes * m);
    let neg_a = spec.pair().a().scale(-1.0)?;
    for (k, &tau) in schedule.instants().iter().enumerate() {
        let dt = horizon - tau;
        let eb = expm(&neg_a, dt)?.as_inner() * spec.pair().b().as_inner();
        for l in 0..modes {
            for j in 0..modes {
                let w = gram[(j, l)];
                if w == 0.0 {
                    continue;
                }
                let weight = (-lambdas[j] * dt).exp() * w;
                for i in 0..m {
                    let col = k * modes * m + l * m + i;
                    for r in 0..n {
                        g[(j * n + r, col)] = weight * eb[(r, i)];
                    }
                }
            }
        }
    }
    Ok(ReachabilityMap {
        matrix: MatrixReal::new(g)?,
        modes,
        state_dim: n,
        control_dim: m,
        impulses: p,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringResult {
    pub controls: Vec<SpectralControl>,
    /// `‖y(T) − y_1‖` with `y(T)` recomputed by forward evolution.
    pub residual: f64,
    /// Euclidean norm of all control coefficients.
    pub control_norm: f64,
    pub achieved: SpectralState,
    /// Singular directions of `G_T` kept by the truncation.
    pub rank: usize,
}

/// Minimum-norm least-squares controls for `G u ≈ y_1 − e^{𝒜T} y_0`.
pub fn steer_approx(
    spec: &SystemSpec,
    schedule: &ImpulseSchedule,
    y0: &SpectralState,
    y1: &SpectralState,
    tol: RankTolerance,
) -> Result<SteeringResult> {
    let map = assemble_reachability(spec, schedule)?;
    steer_with_map(spec, schedule, &map, y0, y1, tol)
}

/// As [`steer_approx`] with a pre-assembled map.
pub fn steer_with_map(
    spec: &SystemSpec,
    schedule: &ImpulseSchedule,
    map: &ReachabilityMap,
    y0: &SpectralState,
    y1: &SpectralState,
    tol: RankTolerance,
) -> Result<SteeringResult> {
    if y1.coeffs().shape() != (spec.modes(), spec.state_dim()) {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, expected {}x{}",
            y1.modes(),
            y1.components(),
            spec.modes(),
            spec.state_dim()
        )));
    }
    let free = spec.free_flow(y0, schedule.horizon())?;
    let rhs = y1.to_vector() - free.to_vector();
    let sol = min_norm_lstsq(map.matrix(), &rhs, tol)?;
    let controls = map.unflatten_controls(&sol.x)?;
    let achieved = evolve(spec, y0, schedule, &controls)?.final_state().clone();
    Ok(SteeringResult {
        residual: (achieved.coeffs() - y1.coeffs()).norm(),
        control_norm: sol.x.norm(),
        controls,
        achieved,
        rank: sol.rank,
    })
}

/// Minimum-norm decomposition `I = Σ_k P_k` with `Range P_k ⊆ Range e^{Aτ_k}B`.
pub fn build_projections(
    pair: &ControlPair,
    instants: &InstantSequence,
    tol: RankTolerance,
) -> Result<Vec<MatrixReal>> {
    let n = pair.state_dim();
    let m = pair.control_dim();
    let sampled = sampled_controllability_matrix(pair, instants, SamplingMode::Forward)?;
    let rank = numerical_rank(&sampled, tol)?;
    if rank < n {
        return Err(Error::RankDeficient { rank, dim: n });
    }
    // column j of the right inverse solves Σ_k e^{Aτ_k} B β_k = e_j with least norm
    let right_inverse = pinv(&sampled, tol)?;
    let s = sampled.as_inner();
    let x = right_inverse.as_inner();
    (0..instants.len())
        .map(|k| MatrixReal::new(s.columns(k * m, m) * x.rows(k * m, m)))
        .collect()
}

/// Exact null control for `ω = (0, L)`:
/// `d_j^{(k)} = −C e^{−λ_j τ_k} e^{−Aτ_k} P_k c_j(0)` with `C = B⁺`.
pub fn null_control_full_domain(
    spec: &SystemSpec,
    schedule: &ImpulseSchedule,
    y0: &SpectralState,
    tol: RankTolerance,
) -> Result<Vec<SpectralControl>> {
    if !spec.domain().is_full() {
        return Err(Error::RegionNotFull);
    }
    let pair = spec.pair();
    let n = pair.state_dim();
    if schedule.len() != n {
        return Err(Error::InstantCount {
            expected: n,
            got: schedule.len(),
        });
    }
    if y0.coeffs().shape() != (spec.modes(), n) {
        return Err(Error::DimensionMismatch(format!(
            "initial state is {}x{}, expected {}x{n}",
            y0.modes(),
            y0.components(),
            spec.modes()
        )));
    }
    let rank = kalman_rank(pair, tol)?;
    if rank < n {
        return Err(Error::NotControllable { rank, dim: n });
    }
    let instants = schedule.to_sequence()?;
    let critical = critical_window(pair.a())?;
    let window = instants.window();
    if !(window < critical) {
        return Err(Error::WindowViolated { window, critical });
    }
    let projections = build_projections(pair, &instants, tol)?;
    let c = pinv(pair.b(), tol)?;
    let neg_a = pair.a().scale(-1.0)?;
    let lambdas = spec.eigenvalues();
    schedule
        .instants()
        .iter()
        .zip(&projections)
        .map(|(&tau, p)| {
            // rows of the result are (K c_j)ᵀ with K = −C e^{−Aτ} P
            let k = -(c.as_inner() * expm(&neg_a, tau)?.as_inner() * p.as_inner());
            let mut d = y0.coeffs() * k.transpose();
            for (j, mut row) in d.row_iter_mut().enumerate() {
                row *= (-lambdas[j] * tau).exp();
            }
            SpectralState::new(d)
        })
        .collect()
}

/// Nonzero `ẑ` annihilated by every reachable direction of a non-Kalman pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionWitness {
    /// Unit vector in the common kernel of `B*(A*)^k`, `k < n`.
    pub alpha: DVector<f64>,
    /// Constant spatial profile `ẑ(x) ≡ α`, truncated to `N` modes.
    pub zhat: SpectralState,
    /// Largest `|⟨ẑ, g⟩|` over the columns `g` of `G_T`.
    pub defect: f64,
}

impl ObstructionWitness {
    /// `|⟨ẑ, G u⟩|` for one control set.
    pub fn pairing(&self, map: &ReachabilityMap, controls: &[SpectralControl]) -> Result<f64> {
        Ok(map.apply(controls)?.inner(&self.zhat).abs())
    }
}

pub fn obstruction_witness(
    spec: &SystemSpec,
    schedule: &ImpulseSchedule,
    tol: RankTolerance,
) -> Result<ObstructionWitness> {
    let pair = spec.pair();
    if is_kalman_controllable(pair, tol)? {
        return Err(Error::Controllable);
    }
    let kernel = null_space_left(&kalman_matrix(pair), tol)?;
    let alpha = kernel
        .into_iter()
        .next()
        .expect("a rank-deficient Kalman matrix has a left kernel");
    let zhat = SpectralState::constant_profile(spec.domain(), &alpha);
    let map = assemble_reachability(spec, schedule)?;
    let z = zhat.to_vector();
    let defect = map
        .matrix()
        .as_inner()
        .column_iter()
        .map(|col| col.dot(&z).abs())
        .fold(0.0, f64::max);
    Ok(ObstructionWitness {
        alpha,
        zhat,
        defect,
    })
}

/// Parameters of the rotation pair `A = [[a, −b], [b, a]]`, `B = (c, d)ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationPair {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for RotationPair {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            c: 1.0,
            d: 0.0,
        }
    }
}

impl RotationPair {
    pub fn pair(&self) -> Result<ControlPair> {
        let RotationPair { a, b, c, d } = *self;
        ControlPair::new(
            MatrixReal::from_rows(&[[a, -b], [b, a]])?,
            MatrixReal::column(&[c, d])?,
        )
    }

    /// `π/|b|`.
    pub fn critical_window(&self) -> f64 {
        PI / self.b.abs()
    }

    /// Closed form of `det(e^{Aτ_1}B, e^{Aτ_2}B)`.
    pub fn sampled_determinant(&self, tau1: f64, tau2: f64) -> f64 {
        (self.a * (tau1 + tau2)).exp()
            * (self.c * self.c + self.d * self.d)
            * (self.b * (tau2 - tau1)).sin()
    }

    fn require_nondegenerate(&self) -> Result<()> {
        if self.b * (self.c * self.c + self.d * self.d) == 0.0 {
            return Err(Error::InvalidArgument(
                "rotation pair needs b(c² + d²) ≠ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Configuration of the two-impulse obstruction run.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionSetup {
    pub rotation: RotationPair,
    pub horizon: f64,
    pub first_instant: f64,
    pub domain: DomainSpec,
    /// Random control sets used to probe the pairing.
    pub probes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionReport {
    pub critical_window: f64,
    pub instants: [f64; 2],
    /// Rank of `(e^{Aτ_1}B, e^{Aτ_2}B)` at spacing `d_A`.
    pub sampled_rank: usize,
    /// Largest `|⟨ẑ_T, G u⟩|` over the probes and the columns of `G`.
    pub pairing_defect: f64,
    /// `‖e^{ΔT/2} ẑ_T‖² / ‖ẑ_T‖`.
    pub lower_bound: f64,
    /// Best residual `‖y(T)‖` found by minimum-norm steering towards zero.
    pub min_residual_found: f64,
    /// Steering towards zero from the same `y_0` with spacing `d_A / 2`.
    pub contrast_residual: f64,
    /// Generate-and-recover residual with spacing `d_A / 2`.
    pub contrast_recover_residual: f64,
}

impl ObstructionReport {
    pub fn bound_respected(&self, slack: f64) -> bool {
        self.min_residual_found >= self.lower_bound - slack
    }
}

fn random_controls(spec: &SystemSpec, count: usize, rng: &mut ChaCha8Rng) -> Vec<SpectralControl> {
    (0..count)
        .map(|_| {
            let d = DMatrix::from_fn(spec.modes(), spec.control_dim(), |_, _| {
                rng.gen_range(-1.0..1.0)
            });
            SpectralState::new(d).expect("uniform samples are finite")
        })
        .collect()
}

/// Runs the obstruction experiment at instant spacing exactly `d_A`:
/// builds `α̂ ⊥ span{e^{Aτ_k}B}`, `ẑ_T ≡ e^{AᵀT} α̂` and `y_0 ≡ e^{AT} ẑ_T`,
/// probes `⟨ẑ_T, G u⟩`, and compares the best steering residual towards zero
/// with the lower bound `‖e^{ΔT/2} ẑ_T‖² / ‖ẑ_T‖`.
pub fn rotation_obstruction_experiment(
    setup: &ObstructionSetup,
    tol: RankTolerance,
) -> Result<ObstructionReport> {
    let rot = setup.rotation;
    rot.require_nondegenerate()?;
    let pair = rot.pair()?;
    let critical = rot.critical_window();
    let t1 = setup.first_instant;
    let instants = [t1, t1 + critical];
    let schedule = ImpulseSchedule::new(instants.to_vec(), setup.horizon)?;
    let spec = SystemSpec::new(pair.clone(), setup.domain.clone());

    let sampled = sampled_controllability_matrix(&pair, &schedule.to_sequence()?, SamplingMode::Forward)?;
    let sampled_rank = numerical_rank(&sampled, tol)?;
    let alpha = null_space_left(&sampled, tol)?
        .into_iter()
        .next()
        .unwrap_or_else(|| {
            // rank counted as full: fall back to the weakest direction
            let mut padded = sampled.as_inner().clone();
            padded = padded.clone() * padded.transpose();
            let eig = padded.symmetric_eigen();
            let (idx, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("2x2");
            eig.eigenvectors.column(idx).into_owned()
        });

    let horizon = setup.horizon;
    let e_at = expm(pair.a(), horizon)?;
    let zhat_dir = e_at.as_inner().transpose() * &alpha;
    let zhat = SpectralState::constant_profile(&setup.domain, &zhat_dir);
    let y0 = SpectralState::new(zhat.coeffs() * e_at.as_inner().transpose())?;

    let map = assemble_reachability(&spec, &schedule)?;
    let z = zhat.to_vector();
    let mut pairing_defect = map
        .matrix()
        .as_inner()
        .column_iter()
        .map(|col| col.dot(&z).abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    for _ in 0..setup.probes {
        let u = random_controls(&spec, 2, &mut rng);
        pairing_defect = pairing_defect.max(map.apply(&u)?.inner(&zhat).abs());
    }

    let lambdas = spec.eigenvalues();
    let smoothed: f64 = zhat
        .coeffs()
        .row_iter()
        .enumerate()
        .map(|(j, row)| (-lambdas[j] * horizon).exp() * row.norm_squared())
        .sum();
    let lower_bound = smoothed / zhat.norm();

    let target = spec.zero_state();
    let steer = steer_with_map(&spec, &schedule, &map, &y0, &target, tol)?;

    let contrast_schedule = ImpulseSchedule::new(vec![t1, t1 + critical / 2.0], horizon)?;
    let contrast_map = assemble_reachability(&spec, &contrast_schedule)?;
    let contrast = steer_with_map(&spec, &contrast_schedule, &contrast_map, &y0, &target, tol)?;
    let known = random_controls(&spec, 2, &mut rng);
    let generated = evolve(&spec, &y0, &contrast_schedule, &known)?.final_state().clone();
    let recovered = steer_with_map(&spec, &contrast_schedule, &contrast_map, &y0, &generated, tol)?;

    Ok(ObstructionReport {
        critical_window: critical,
        instants,
        sampled_rank,
        pairing_defect,
        lower_bound,
        min_residual_found: steer.residual,
        contrast_residual: contrast.residual,
        contrast_recover_residual: recovered.residual,
    })
}
