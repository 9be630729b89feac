#![allow(dead_code)]

use impulse_heat::control::{critical_window, is_kalman_controllable, ControlPair};
use impulse_heat::heat::SpectralState;
use impulse_heat::{MatrixReal, RankTolerance};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> MatrixReal {
    MatrixReal::new(DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))).unwrap()
}

pub fn random_pair(rng: &mut ChaCha8Rng, n: usize, m: usize, bound: f64) -> ControlPair {
    ControlPair::new(uniform_matrix(rng, n, n, bound), uniform_matrix(rng, n, m, bound)).unwrap()
}

/// Draws pairs until one is Kalman-controllable.
pub fn random_controllable_pair(rng: &mut ChaCha8Rng, n: usize, m: usize, bound: f64) -> ControlPair {
    loop {
        let pair = random_pair(rng, n, m, bound);
        if is_kalman_controllable(&pair, RankTolerance::Relative).unwrap() {
            return pair;
        }
    }
}

/// `count` increasing instants starting at `start` whose spread is `window`.
pub fn instants_with_window(rng: &mut ChaCha8Rng, start: f64, window: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let mut inner: Vec<f64> = (0..count - 2).map(|_| rng.gen_range(0.0..1.0)).collect();
    inner.sort_by(f64::total_cmp);
    let mut out = vec![start];
    out.extend(inner.iter().map(|s| start + s * window));
    out.push(start + window);
    out
}

/// Window strictly inside `(0, min(d_A − margin, cap))`.
pub fn admissible_window(rng: &mut ChaCha8Rng, pair: &ControlPair, margin: f64, cap: f64) -> f64 {
    let limit = (critical_window(pair.a()).unwrap() - margin).min(cap);
    rng.gen_range(0.2..0.95) * limit
}

pub fn random_state(rng: &mut ChaCha8Rng, modes: usize, components: usize, decay: f64) -> SpectralState {
    SpectralState::new(DMatrix::from_fn(modes, components, |j, _| {
        rng.gen_range(-1.0..1.0) / ((j + 1) as f64).powf(decay)
    }))
    .unwrap()
}
