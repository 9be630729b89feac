mod common;

use std::f64::consts::PI;

use common::*;
use impulse_heat::control::{critical_window, kalman_rank, sampled_controllability_matrix, InstantSequence, SamplingMode};
use impulse_heat::heat::{
    evolve, omega_gram, DomainSpec, ImpulseSchedule, SpectralState, SystemSpec,
};
use impulse_heat::linalg::{char_poly, eigenvalues, expm, singular_values};
use impulse_heat::synthesis::{assemble_reachability, steer_approx, RotationPair};
use impulse_heat::{MatrixReal, RankTolerance};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: RankTolerance = RankTolerance::Relative;

/// Cyclic Jacobi rotations for a symmetric matrix; eigenvalues ascending.
fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)] == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn taylor_expm(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..60 {
        term = &term * m * (t / k as f64);
        sum += &term;
    }
    sum
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

#[test]
fn symmetric_spectrum_matches_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for n in 1..=7 {
        let x = uniform_matrix(&mut rng, n, n, 1.0).into_inner();
        let sym = MatrixReal::new(&x + x.transpose()).unwrap();
        let mut ours: Vec<f64> = eigenvalues(&sym).unwrap().eigenvalues.iter().map(|z| {
            assert!(z.im.abs() < 1e-8);
            z.re
        }).collect();
        ours.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(jacobi_eigenvalues(sym.as_inner())) {
            assert!((a - b).abs() < 1e-8, "n = {n}: {a} vs {b}");
        }
    }
}

#[test]
fn singular_values_match_gram_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (rows, cols) in [(3, 3), (4, 2), (2, 5), (6, 6)] {
        let m = uniform_matrix(&mut rng, rows, cols, 1.0);
        let gram = m.as_inner().transpose() * m.as_inner();
        let mut oracle: Vec<f64> = jacobi_eigenvalues(&gram).into_iter().map(|v| v.max(0.0).sqrt()).collect();
        oracle.reverse();
        let ours = singular_values(&m).unwrap();
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }
}

#[test]
fn char_poly_matches_root_product() {
    let roots = [0.5, -1.25, 2.0, 3.0];
    let mut m = DMatrix::zeros(4, 4);
    for (i, r) in roots.iter().enumerate() {
        m[(i, i)] = *r;
        if i + 1 < 4 {
            m[(i, i + 1)] = 0.7;
        }
    }
    // expand Π (x − r_i) with coefficients of x^0..x^{n−1} for the monic polynomial
    let mut poly = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; poly.len() + 1];
        for (k, c) in poly.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= r * c;
        }
        poly = next;
    }
    let ours = char_poly(&MatrixReal::new(m).unwrap()).unwrap();
    let coeffs = ours.coeffs();
    let n = coeffs.len();
    let (low, high) = (&poly[..4], &poly[1..]);
    let matches_low = coeffs.iter().zip(low).all(|(a, b)| (a - b).abs() < 1e-10);
    let matches_high = coeffs.iter().zip(high.iter().rev()).all(|(a, b)| (a - b).abs() < 1e-10);
    assert_eq!(n, 4);
    assert!(matches_low || matches_high, "{coeffs:?} vs {poly:?}");
}

#[test]
fn expm_matches_taylor_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for n in 1..=5 {
        let m = uniform_matrix(&mut rng, n, n, 0.8);
        let t = rng.gen_range(-1.0..1.0);
        let err = (expm(&m, t).unwrap().as_inner() - taylor_expm(m.as_inner(), t)).amax();
        assert!(err < 1e-13, "err {err}");
    }
}

#[test]
fn rotation_pair_closed_forms() {
    for (a, b, c, d) in [(0.0, 1.0, 1.0, 0.0), (0.3, -2.0, 0.5, 1.5), (-1.0, 0.5, 0.0, 2.0)] {
        let rot = RotationPair { a, b, c, d };
        let pair = rot.pair().unwrap();
        assert!((critical_window(pair.a()).unwrap() - PI / f64::abs(b)).abs() < 1e-12);
        assert_eq!(kalman_rank(&pair, TOL).unwrap(), 2);
        for t in [-1.5, 0.4, 2.7] {
            let e = expm(pair.a(), t).unwrap();
            let exact = [
                [(a * t).exp() * (b * t).cos(), -(a * t).exp() * (b * t).sin()],
                [(a * t).exp() * (b * t).sin(), (a * t).exp() * (b * t).cos()],
            ];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((e.get(i, j) - exact[i][j]).abs() < 1e-12);
                }
            }
        }
        let inst = InstantSequence::free(vec![0.2, 1.1]).unwrap();
        let s = sampled_controllability_matrix(&pair, &inst, SamplingMode::Forward).unwrap();
        let det = s.as_inner().determinant();
        let law = (a * 1.3).exp() * (c * c + d * d) * (b * 0.9).sin();
        assert!((det - law).abs() < 1e-12);
    }
}

#[test]
fn gram_matches_quadrature() {
    let domain = DomainSpec::new(2.0, vec![(0.1, 0.6), (1.2, 1.7)], 6).unwrap();
    let spec = SystemSpec::new(RotationPair::default().pair().unwrap(), domain.clone());
    let w = omega_gram(&domain);
    for j in 0..6 {
        for l in 0..6 {
            let f = |x: f64| spec.basis().phi(j + 1, x) * spec.basis().phi(l + 1, x);
            let q: f64 = domain.omega().iter().map(|&(lo, hi)| simpson(f, lo, hi, 400)).sum();
            assert!((w.matrix()[(j, l)] - q).abs() < 1e-10);
        }
    }
}

#[test]
fn parseval_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let domain = DomainSpec::full(1.7, 10).unwrap();
    let spec = SystemSpec::new(RotationPair::default().pair().unwrap(), domain);
    let y = random_state(&mut rng, 10, 2, 0.0);
    let quad = simpson(|x| y.evaluate(spec.basis(), x).norm_squared(), 0.0, 1.7, 2000);
    assert!((y.norm() - quad.sqrt()).abs() < 1e-8);
}

#[test]
fn diagonal_evolution_closed_form() {
    let a = [0.4, -0.9];
    let pair = impulse_heat::control::ControlPair::new(
        MatrixReal::from_rows(&[[a[0], 0.0], [0.0, a[1]]]).unwrap(),
        MatrixReal::from_rows(&[[1.0], [1.0]]).unwrap(),
    )
    .unwrap();
    let length = 2.0;
    let spec = SystemSpec::new(pair, DomainSpec::full(length, 5).unwrap());
    let y0 = SpectralState::new(DMatrix::from_fn(5, 2, |j, i| (j + 1) as f64 - i as f64)).unwrap();
    let u = SpectralState::new(DMatrix::from_fn(5, 1, |j, _| 0.1 * (j as f64 + 1.0))).unwrap();
    let (tau, horizon) = (0.3, 0.8);
    let sched = ImpulseSchedule::new(vec![tau], horizon).unwrap();
    let end = evolve(&spec, &y0, &sched, &[u.clone()]).unwrap().final_state().clone();
    for j in 0..5 {
        let lam = ((j + 1) as f64 * PI / length).powi(2);
        for i in 0..2 {
            let expect = (-(lam + a[i]) * horizon).exp() * y0.coeffs()[(j, i)]
                + (-(lam + a[i]) * (horizon - tau)).exp() * u.coeffs()[(j, 0)];
            assert!((end.coeffs()[(j, i)] - expect).abs() < 1e-13);
        }
    }
}

fn random_system(rng: &mut ChaCha8Rng) -> (SystemSpec, ImpulseSchedule) {
    let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=2));
    let pair = random_pair(rng, n, m, 1.5);
    let lo = rng.gen_range(0.0..1.5);
    let spec = SystemSpec::new(pair, DomainSpec::new(PI, vec![(lo, lo + 1.2)], 10).unwrap());
    let p = rng.gen_range(1..=3);
    let inst = instants_with_window(rng, 0.1, 0.5, p);
    (spec, ImpulseSchedule::new(inst, 0.9).unwrap())
}

#[test]
fn reachability_columns_match_unit_control_evolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..5 {
        let (spec, sched) = random_system(&mut rng);
        let map = assemble_reachability(&spec, &sched).unwrap();
        let (modes, m) = (spec.modes(), spec.control_dim());
        for k in 0..sched.len() {
            for l in 0..modes {
                for i in 0..m {
                    let mut controls: Vec<_> = (0..sched.len()).map(|_| spec.zero_control()).collect();
                    let mut d = DMatrix::zeros(modes, m);
                    d[(l, i)] = 1.0;
                    controls[k] = SpectralState::new(d).unwrap();
                    let end = evolve(&spec, &spec.zero_state(), &sched, &controls).unwrap();
                    let col = map.matrix().as_inner().column(map.column_index(k, l, i)).into_owned();
                    assert!((end.final_state().to_vector() - col).amax() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn reachability_map_agrees_with_evolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let (spec, sched) = random_system(&mut rng);
    let map = assemble_reachability(&spec, &sched).unwrap();
    let y0 = random_state(&mut rng, spec.modes(), spec.state_dim(), 1.0);
    let free = spec.free_flow(&y0, sched.horizon()).unwrap();
    for _ in 0..10 {
        let u: Vec<_> = (0..sched.len())
            .map(|_| random_state(&mut rng, spec.modes(), spec.control_dim(), 0.0))
            .collect();
        let via_map = map.apply(&u).unwrap().coeffs() + free.coeffs();
        let end = evolve(&spec, &y0, &sched, &u).unwrap();
        assert!((end.final_state().coeffs() - via_map).amax() < 1e-10);
    }
}

#[test]
fn steering_result_is_consistent_with_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let (spec, sched) = random_system(&mut rng);
    let y0 = random_state(&mut rng, spec.modes(), spec.state_dim(), 1.0);
    let y1 = random_state(&mut rng, spec.modes(), spec.state_dim(), 2.0);
    let res = steer_approx(&spec, &sched, &y0, &y1, TOL).unwrap();
    let map = assemble_reachability(&spec, &sched).unwrap();
    let predicted = map.apply(&res.controls).unwrap().coeffs() + spec.free_flow(&y0, sched.horizon()).unwrap().coeffs();
    // arbitrary targets need huge controls; compare relative to their size
    let err = (res.achieved.coeffs() - &predicted).amax();
    assert!(err <= 1e-10 * res.control_norm.max(1.0), "err {err}");

    let known: Vec<_> = (0..sched.len())
        .map(|_| random_state(&mut rng, spec.modes(), spec.control_dim(), 0.0))
        .collect();
    let reachable = evolve(&spec, &y0, &sched, &known).unwrap().final_state().clone();
    let res_ok = steer_approx(&spec, &sched, &y0, &reachable, TOL).unwrap();
    let predicted = map.apply(&res_ok.controls).unwrap().coeffs() + spec.free_flow(&y0, sched.horizon()).unwrap().coeffs();
    assert!((res_ok.achieved.coeffs() - predicted).amax() < 1e-10);
    assert!((res.residual - (res.achieved.coeffs() - y1.coeffs()).norm()).abs() < 1e-14);
}
