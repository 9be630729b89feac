//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! of degree 3, 5, 7, 9 or 13, selected from the 1-norm of the argument.

use nalgebra::DMatrix;

use super::matrix::{one_norm, MatrixReal};
use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Returns `e^{M t}`.
pub fn expm(m: &MatrixReal, t: f64) -> Result<MatrixReal> {
    let n = m.require_square()?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} is not finite")));
    }
    let a = m.as_inner() * t;
    let out = expm_dense(&a, n)?;
    MatrixReal::new(out)
}

pub(crate) fn expm_dense(a: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let norm = one_norm(a);
    let eye = DMatrix::<f64>::identity(n, n);
    if norm == 0.0 {
        return Ok(eye);
    }

    let a2 = a * a;
    let low_order = [
        (THETA_3, &PADE_3[..]),
        (THETA_5, &PADE_5[..]),
        (THETA_7, &PADE_7[..]),
        (THETA_9, &PADE_9[..]),
    ];
    for (theta, coeffs) in low_order {
        if norm <= theta {
            let (u, v) = pade_low(a, &a2, coeffs, &eye);
            return solve_pade(&u, &v);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = 2f64.powi(-squarings);
    let a = a * scale;
    let a2 = a2 * (scale * scale);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE_13;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];

    let mut r = solve_pade(&u, &v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    coeffs: &[f64],
    eye: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut u_acc = DMatrix::<f64>::zeros(n, n);
    let mut v_acc = DMatrix::<f64>::zeros(n, n);
    let mut power = eye.clone();
    for pair in coeffs.chunks(2) {
        v_acc += &power * pair[0];
        u_acc += &power * pair[1];
        power = &power * a2;
    }
    (a * u_acc, v_acc)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or_else(|| {
        Error::NoConvergence("singular Padé denominator in matrix exponential".into())
    })
}
