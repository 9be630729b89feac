//! Task dispatch.

use std::f64::consts::PI;
use std::time::Instant;

use impulse_heat::control::{
    check_window_rank, companion_sample_matrix, critical_window, is_kalman_controllable,
    kalman_rank, sampled_controllability_matrix, simulate_ode, steer_ode, InstantSequence,
    SamplingMode,
};
use impulse_heat::heat::{evolve_on_grid, DomainSpec, SpectralState, SystemSpec};
use impulse_heat::linalg::{eigenvalues, numerical_rank};
use impulse_heat::synthesis::{
    assemble_reachability, null_control_full_domain, rotation_obstruction_experiment,
    steer_approx, ObstructionSetup, RotationPair,
};
use impulse_heat::{Error, RankTolerance};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error as ThisError;

use crate::config::{Resolved, ScenarioConfig, Task, ValidationError};
use crate::report::{num, Assertion, Provenance, Report, TrajectoryTable};

pub const REPRODUCTIONS: [&str; 2] = ["example-2.3", "example-5.2"];

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub modes: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Validation(ValidationError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Validation(e)
    }
}

/// Library errors: non-convergence is numerical, everything else a violated
/// precondition attributed to the field that controls it.
fn lib(path: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| {
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        let path = match &e {
            Error::WindowViolated { .. } | Error::InstantCount { .. } | Error::RankDeficient { .. } => {
                "schedule.instants"
            }
            Error::RegionNotFull => "domain.omega",
            Error::NotControllable { .. } | Error::Controllable => "system",
            _ => path,
        };
        CliError::Validation(ValidationError {
            path: path.to_string(),
            message: e.to_string(),
        })
    }
}

pub struct Outcome {
    pub report: Report,
    pub trajectory: Option<TrajectoryTable>,
}

type Run = Result<(Value, Vec<Assertion>, Option<TrajectoryTable>), CliError>;

pub fn run(task: Task, name: Option<&str>, cfg: &ScenarioConfig, opts: &Options) -> Result<Outcome, CliError> {
    if let Some(requested) = cfg.task {
        if requested != task {
            return Err(CliError::Validation(ValidationError {
                path: "task".into(),
                message: format!("config requests {requested} but the command is {task}"),
            }));
        }
    }
    let clock = Instant::now();
    let tol = cfg.rank_tolerance(opts.tol)?;
    let (results, assertions, trajectory) = match task {
        Task::Analyze => analyze(cfg, opts)?,
        Task::Simulate => simulate(cfg, opts)?,
        Task::SteerApprox => steer_approx_task(cfg, opts)?,
        Task::SteerNull => steer_null(cfg, opts)?,
        Task::SteerOde => steer_ode_task(cfg, opts)?,
        Task::Reproduce => reproduce(name.unwrap_or(""), cfg, opts, tol)?,
    };
    let seed = matches!(task, Task::Reproduce).then(|| opts.seed.unwrap_or(0));
    let mut provenance = Provenance::new(tol, seed);
    provenance.wall_time_seconds = clock.elapsed().as_secs_f64();
    let echo = (cfg != &ScenarioConfig::default()).then(|| cfg.clone());
    Ok(Outcome {
        report: Report {
            task: match name {
                Some(n) if task == Task::Reproduce => format!("reproduce {n}"),
                _ => task.name().to_string(),
            },
            config: echo,
            results,
            assertions,
            provenance,
        },
        trajectory,
    })
}

fn rows(state: &SpectralState) -> Value {
    Value::from(
        state
            .coeffs()
            .row_iter()
            .map(|r| r.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn vector(v: &DVector<f64>) -> Value {
    Value::from(v.iter().copied().collect::<Vec<f64>>())
}

fn grid(cfg: &ScenarioConfig, horizon: f64) -> Vec<f64> {
    let points = cfg.sample_points();
    (1..=points).map(|i| horizon * i as f64 / (points + 1) as f64).collect()
}

fn trajectory(r: &Resolved, cfg: &ScenarioConfig, y0: &SpectralState, controls: &[SpectralState]) -> Result<TrajectoryTable, CliError> {
    let traj = evolve_on_grid(&r.spec, y0, &r.schedule, controls, &grid(cfg, r.schedule.horizon()))
        .map_err(lib("schedule"))?;
    Ok(TrajectoryTable::from_trajectory(&traj))
}

fn initial_state(cfg: &ScenarioConfig, r: &Resolved, required: Option<Task>) -> Result<SpectralState, CliError> {
    match (&cfg.initial, required) {
        (Some(p), _) => Ok(p.resolve(&r.spec, r.spec.state_dim(), "initial")?),
        (None, Some(task)) => Err(CliError::Validation(ValidationError {
            path: "initial".into(),
            message: format!("required for task {task}"),
        })),
        (None, None) => Ok(r.spec.zero_state()),
    }
}

fn analyze(cfg: &ScenarioConfig, opts: &Options) -> Run {
    let task = Task::Analyze;
    let pair = cfg.pair(task)?;
    let tol = cfg.rank_tolerance(opts.tol)?;
    let n = pair.state_dim();
    let spectrum = eigenvalues(pair.a()).map_err(lib("system.A"))?;
    let d_a = critical_window(pair.a()).map_err(lib("system.A"))?;
    let mut results = json!({
        "state_dim": n,
        "control_dim": pair.control_dim(),
        "kalman_rank": kalman_rank(&pair, tol).map_err(lib("system"))?,
        "is_controllable": is_kalman_controllable(&pair, tol).map_err(lib("system"))?,
        "d_A": num(d_a),
        "eigenvalues": spectrum.eigenvalues.iter().map(|z| vec![z.re, z.im]).collect::<Vec<_>>(),
    });
    if let Some(s) = &cfg.schedule {
        let seq = cfg.instants_with_horizon(task)?;
        let forward = sampled_controllability_matrix(&pair, &seq, SamplingMode::Forward).map_err(lib("schedule"))?;
        let reversed = sampled_controllability_matrix(&pair, &seq, SamplingMode::TimeReversed).map_err(lib("schedule"))?;
        results["instant_count"] = json!(s.instants.len());
        results["sampled_rank_forward"] = json!(numerical_rank(&forward, tol).map_err(lib("schedule"))?);
        results["sampled_rank_time_reversed"] = json!(numerical_rank(&reversed, tol).map_err(lib("schedule"))?);
        if s.instants.len() == n {
            let report = check_window_rank(&pair, &seq, tol).map_err(lib("schedule"))?;
            let companion = companion_sample_matrix(pair.a(), &seq, tol).map_err(lib("system.A"))?;
            results["window"] = num(report.window);
            results["window_ok"] = json!(report.window_ok);
            results["at_boundary"] = json!(report.at_boundary);
            results["window_rank"] = json!(report.rank);
            results["companion_sample_rank"] = json!(companion.rank);
        }
        if !s.instants.is_empty() {
            let r = cfg.resolve(task, opts.modes, opts.tol)?;
            let map = assemble_reachability(&r.spec, &r.schedule).map_err(lib("domain.modes"))?;
            let rank = map.rank(tol).map_err(lib("schedule"))?;
            results["modes"] = json!(r.spec.modes());
            results["reachability_rank"] = json!(rank);
            results["gramian_definite"] = json!(rank == r.spec.modes() * n);
        }
    }
    Ok((results, vec![], None))
}

fn simulate(cfg: &ScenarioConfig, opts: &Options) -> Run {
    let task = Task::Simulate;
    let r = cfg.resolve(task, opts.modes, opts.tol)?;
    let y0 = initial_state(cfg, &r, None)?;
    let m = r.spec.control_dim();
    let controls = match &cfg.controls {
        None => vec![r.spec.zero_control(); r.schedule.len()],
        Some(list) => {
            if list.len() != r.schedule.len() {
                return Err(CliError::Validation(ValidationError {
                    path: "controls".into(),
                    message: format!("{} profiles for {} instants", list.len(), r.schedule.len()),
                }));
            }
            list.iter()
                .enumerate()
                .map(|(k, p)| p.resolve(&r.spec, m, &format!("controls[{k}]")))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let table = trajectory(&r, cfg, &y0, &controls)?;
    let final_norm = table.rows.last().map_or(0.0, |row| row[1]);
    let results = json!({
        "modes": r.spec.modes(),
        "initial_norm": y0.norm(),
        "final_norm": final_norm,
        "times": table.rows.iter().map(|row| row[0]).collect::<Vec<_>>(),
        "total_norms": table.rows.iter().map(|row| row[1]).collect::<Vec<_>>(),
    });
    Ok((results, vec![], Some(table)))
}

fn steer_approx_task(cfg: &ScenarioConfig, opts: &Options) -> Run {
    let task = Task::SteerApprox;
    let r = cfg.resolve(task, opts.modes, opts.tol)?;
    let y0 = initial_state(cfg, &r, None)?;
    let target = match &cfg.target {
        Some(p) => p.resolve(&r.spec, r.spec.state_dim(), "target")?,
        None => {
            return Err(CliError::Validation(ValidationError {
                path: "target".into(),
                message: format!("required for task {task}"),
            }))
        }
    };
    let res = steer_approx(&r.spec, &r.schedule, &y0, &target, r.tol).map_err(lib("schedule"))?;
    let table = trajectory(&r, cfg, &y0, &res.controls)?;
    let results = json!({
        "modes": r.spec.modes(),
        "residual": res.residual,
        "control_norm": res.control_norm,
        "rank": res.rank,
        "target_norm": target.norm(),
        "achieved_norm": res.achieved.norm(),
        "controls": res.controls.iter().map(rows).collect::<Vec<_>>(),
    });
    Ok((results, vec![], Some(table)))
}

fn steer_null(cfg: &ScenarioConfig, opts: &Options) -> Run {
    let task = Task::SteerNull;
    let r = cfg.resolve(task, opts.modes, opts.tol)?;
    let y0 = initial_state(cfg, &r, Some(task))?;
    let controls = null_control_full_domain(&r.spec, &r.schedule, &y0, r.tol).map_err(lib("schedule"))?;
    let table = trajectory(&r, cfg, &y0, &controls)?;
    let final_norm = table.rows.last().map_or(0.0, |row| row[1]);
    let results = json!({
        "modes": r.spec.modes(),
        "initial_norm": y0.norm(),
        "final_norm": final_norm,
        "relative_final_norm": if y0.norm() > 0.0 { final_norm / y0.norm() } else { 0.0 },
        "controls": controls.iter().map(rows).collect::<Vec<_>>(),
    });
    Ok((results, vec![], Some(table)))
}

fn steer_ode_task(cfg: &ScenarioConfig, opts: &Options) -> Run {
    let task = Task::SteerOde;
    let pair = cfg.pair(task)?;
    let seq = cfg.instants_with_horizon(task)?;
    let tol = cfg.rank_tolerance(opts.tol)?;
    let ode = cfg.ode.as_ref().ok_or_else(|| {
        CliError::Validation(ValidationError {
            path: "ode".into(),
            message: format!("required for task {task}"),
        })
    })?;
    let n = pair.state_dim();
    for (field, v) in [("ode.z0", &ode.z0), ("ode.z1", &ode.z1)] {
        if v.len() != n {
            return Err(CliError::Validation(ValidationError {
                path: field.into(),
                message: format!("has {} entries, expected {n}", v.len()),
            }));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Validation(ValidationError {
                path: field.into(),
                message: "entries must be finite".into(),
            }));
        }
    }
    let z0 = DVector::from_column_slice(&ode.z0);
    let z1 = DVector::from_column_slice(&ode.z1);
    let plan = steer_ode(&pair, &seq, &z0, &z1, tol).map_err(lib("ode"))?;
    let end = simulate_ode(&pair, &seq, &z0, &plan.controls).map_err(lib("ode"))?;
    let results = json!({
        "rank": plan.rank,
        "residual": plan.residual,
        "scale": plan.scale,
        "exact": plan.is_exact(),
        "endpoint": vector(&end),
        "endpoint_error": (end - &z1).norm(),
        "controls": plan.controls.iter().map(vector).collect::<Vec<_>>(),
    });
    Ok((results, vec![], None))
}

fn reproduce(name: &str, cfg: &ScenarioConfig, opts: &Options, tol: RankTolerance) -> Run {
    let params = cfg.rotation.unwrap_or_default();
    let rot = RotationPair {
        a: params.a,
        b: params.b,
        c: params.c,
        d: params.d,
    };
    if !(rot.b * (rot.c * rot.c + rot.d * rot.d) != 0.0 && [rot.a, rot.b, rot.c, rot.d].iter().all(|v| v.is_finite())) {
        return Err(CliError::Validation(ValidationError {
            path: "rotation".into(),
            message: "parameters must be finite with b(c² + d²) ≠ 0".into(),
        }));
    }
    let seed = opts.seed.unwrap_or(0);
    match name {
        "example-2.3" => reproduce_rotation_rank(rot, seed, tol),
        "example-5.2" => reproduce_obstruction(rot, opts.modes.unwrap_or(32), seed, tol),
        other => Err(CliError::Validation(ValidationError {
            path: "name".into(),
            message: format!("unknown reproduction {other:?}; expected one of {REPRODUCTIONS:?}"),
        })),
    }
}

fn reproduce_rotation_rank(rot: RotationPair, seed: u64, tol: RankTolerance) -> Run {
    let pair = rot.pair().map_err(lib("rotation"))?;
    let d_a = critical_window(pair.a()).map_err(lib("rotation"))?;
    let expected = PI / rot.b.abs();
    let kalman = kalman_rank(&pair, tol).map_err(lib("rotation"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t1: f64 = rng.gen_range(-2.0..2.0);
        let t2: f64 = rng.gen_range(-2.0..2.0);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        if lo == hi {
            continue;
        }
        let seq = InstantSequence::free(vec![lo, hi]).map_err(lib("rotation"))?;
        let det = sampled_controllability_matrix(&pair, &seq, SamplingMode::Forward)
            .map_err(lib("rotation"))?
            .as_inner()
            .determinant();
        worst = worst.max((det - rot.sampled_determinant(lo, hi)).abs());
    }
    let rank_at = |spacing: f64| -> Result<usize, CliError> {
        let seq = InstantSequence::free(vec![0.0, spacing]).map_err(lib("rotation"))?;
        Ok(check_window_rank(&pair, &seq, tol).map_err(lib("rotation"))?.rank)
    };
    let at_critical = rank_at(expected)?;
    let at_half = rank_at(expected / 2.0)?;

    let assertions = vec![
        Assertion::new(
            "critical window equals pi/|b|",
            (d_a - expected).abs() <= 1e-12 * expected,
            format!("d_A = {d_a}, pi/|b| = {expected}"),
        ),
        Assertion::new("Kalman rank is 2", kalman == 2, format!("rank {kalman}")),
        Assertion::new(
            "determinant law within 1e-10",
            worst <= 1e-10,
            format!("max error {worst:.3e} over 200 random instant pairs"),
        ),
        Assertion::new(
            "rank drops to 1 at spacing d_A",
            at_critical == 1,
            format!("rank {at_critical}"),
        ),
        Assertion::new(
            "full rank at spacing d_A/2",
            at_half == 2,
            format!("rank {at_half}"),
        ),
    ];
    let results = json!({
        "d_A": num(d_a),
        "kalman_rank": kalman,
        "max_determinant_error": worst,
        "rank_at_d_A": at_critical,
        "rank_at_half_d_A": at_half,
    });
    Ok((results, assertions, None))
}

fn reproduce_obstruction(rot: RotationPair, modes: usize, seed: u64, tol: RankTolerance) -> Run {
    if modes == 0 {
        return Err(CliError::Validation(ValidationError {
            path: "--modes".into(),
            message: "must be at least 1".into(),
        }));
    }
    let domain = DomainSpec::new(PI, vec![(0.5, 2.0)], modes).map_err(lib("domain"))?;
    let horizon = 4.0_f64.max(0.5 + rot.critical_window() + 0.5);
    let setup = ObstructionSetup {
        rotation: rot,
        horizon,
        first_instant: 0.5,
        domain,
        probes: 1000,
        seed,
    };
    let r = rotation_obstruction_experiment(&setup, tol).map_err(lib("rotation"))?;
    let assertions = vec![
        Assertion::new(
            "pairing defect within 1e-10",
            r.pairing_defect <= 1e-10,
            format!("max |<z_T, G u>| = {:.3e}", r.pairing_defect),
        ),
        Assertion::new(
            "best residual respects the lower bound",
            r.bound_respected(1e-8),
            format!("residual {:.6e} vs bound {:.6e}", r.min_residual_found, r.lower_bound),
        ),
        Assertion::new(
            "generate-and-recover at spacing d_A/2 within 1e-6",
            r.contrast_recover_residual <= 1e-6,
            format!("residual {:.3e}", r.contrast_recover_residual),
        ),
    ];
    let spec_modes = SystemSpec::new(rot.pair().map_err(lib("rotation"))?, setup.domain.clone()).modes();
    let results = json!({
        "d_A": num(r.critical_window),
        "instants": r.instants,
        "horizon": horizon,
        "modes": spec_modes,
        "sampled_rank": r.sampled_rank,
        "pairing_defect": r.pairing_defect,
        "lower_bound": r.lower_bound,
        "min_residual_found": r.min_residual_found,
        "contrast_residual": r.contrast_residual,
        "contrast_recover_residual": r.contrast_recover_residual,
    });
    Ok((results, assertions, None))
}
