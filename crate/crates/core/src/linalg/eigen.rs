//! Characteristic polynomial (Faddeev–LeVerrier) and eigenvalues by
//! Aberth–Ehrlich root finding on that polynomial.
//!
//! Intended for the small systems this crate deals with; the dimension is
//! capped at [`EIGEN_MAX_DIM`](crate::policy::EIGEN_MAX_DIM).

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::matrix::{one_norm, MatrixReal};
use crate::error::{Error, Result};
use crate::policy::{EIGEN_MAX_DIM, EIGEN_RESIDUAL};

const ABERTH_MAX_ITER: usize = 2000;

/// Monic polynomial `λ^n + Σ_{i<n} a_i λ^i`, stored as `a_0..a_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPoly {
    coeffs: Vec<f64>,
}

impl CharPoly {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("polynomial of degree zero".into()));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self { coeffs })
    }

    /// Lower coefficients `a_0..a_{n-1}`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(1.0, 0.0), |acc, &a| acc * z + a)
    }

    fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(1.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &a in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + a;
        }
        (p, dp)
    }

    /// `Σ |a_i| |x|^i + |x|^n`, the scale of rounding errors in `g(x)`.
    fn magnitude(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(1.0, |acc, &a| acc * x.abs() + a.abs())
    }

    /// `g(M) = M^n + Σ a_i M^i` by Horner's scheme.
    pub fn eval_matrix(&self, m: &MatrixReal) -> Result<MatrixReal> {
        let n = m.require_square()?;
        let a = m.as_inner();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut acc = eye.clone();
        for &c in self.coeffs.iter().rev() {
            acc = a * acc + &eye * c;
        }
        MatrixReal::new(acc)
    }

    /// Companion matrix: ones on the subdiagonal, last column `−a_0..−a_{n-1}`.
    pub fn companion(&self) -> MatrixReal {
        let n = self.degree();
        let mut c = DMatrix::zeros(n, n);
        for i in 1..n {
            c[(i, i - 1)] = 1.0;
        }
        for (i, &a) in self.coeffs.iter().enumerate() {
            c[(i, n - 1)] = -a;
        }
        MatrixReal::new(c).expect("finite coefficients give a finite companion matrix")
    }

    /// All roots, multiplicity counted.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if n == 1 {
            return Ok(vec![Complex64::new(-self.coeffs[0], 0.0)]);
        }
        let mut z = self.initial_guesses();
        let mut converged = vec![false; n];
        for _ in 0..ABERTH_MAX_ITER {
            let mut all_done = true;
            for k in 0..n {
                if converged[k] {
                    continue;
                }
                let (p, dp) = self.eval_with_derivative(z[k]);
                if p == Complex64::new(0.0, 0.0) {
                    converged[k] = true;
                    continue;
                }
                let newton = p / dp;
                let repulsion: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| 1.0 / (z[k] - z[j]))
                    .sum();
                let step = newton / (1.0 - newton * repulsion);
                if !step.re.is_finite() || !step.im.is_finite() {
                    return Err(Error::NoConvergence(
                        "Aberth correction became non-finite".into(),
                    ));
                }
                z[k] -= step;
                if step.norm() <= 2.0 * f64::EPSILON * (1.0 + z[k].norm()) {
                    converged[k] = true;
                } else {
                    all_done = false;
                }
            }
            if all_done {
                break;
            }
        }
        for &root in &z {
            let bound = EIGEN_RESIDUAL * (1.0 + root.norm()).powi(n as i32);
            let res = self.eval(root).norm();
            if !(res <= bound) {
                return Err(Error::NoConvergence(format!(
                    "root {root} leaves residual {res:e} above {bound:e}"
                )));
            }
        }
        Ok(self.symmetrize(z))
    }

    fn initial_guesses(&self) -> Vec<Complex64> {
        let n = self.degree();
        let center = -self.coeffs[n - 1] / n as f64;
        // Fujiwara-type bound on root moduli about the origin
        let radius = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let power = (n - i) as f64;
                let a = if i == 0 { a.abs() / 2.0 } else { a.abs() };
                2.0 * a.powf(1.0 / power)
            })
            .fold(0.0, f64::max)
            .max(1e-3);
        (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
                Complex64::new(center, 0.0) + Complex64::from_polar(radius, theta)
            })
            .collect()
    }

    /// Enforces conjugate symmetry and collapses conjugate pairs that are
    /// numerically a repeated real root.
    fn symmetrize(&self, roots: Vec<Complex64>) -> Vec<Complex64> {
        let mut real = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for z in roots {
            if z.im.abs() <= 1e-12 * (1.0 + z.norm()) {
                real.push(Complex64::new(z.re, 0.0));
            } else if z.im > 0.0 {
                upper.push(z);
            } else {
                lower.push(z);
            }
        }
        let by_abs_im = |a: &Complex64, b: &Complex64| a.im.abs().total_cmp(&b.im.abs());
        upper.sort_by(by_abs_im);
        lower.sort_by(by_abs_im);
        while upper.len() > lower.len() {
            let z = upper.remove(0);
            real.push(Complex64::new(z.re, 0.0));
        }
        while lower.len() > upper.len() {
            let z = lower.remove(0);
            real.push(Complex64::new(z.re, 0.0));
        }

        let mut out = real;
        let mut remaining = lower;
        for z in upper {
            let (idx, _) = remaining
                .iter()
                .enumerate()
                .map(|(i, w)| (i, (w.conj() - z).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("equal counts of upper and lower roots");
            let w = remaining.swap_remove(idx);
            let mid = (z + w.conj()) / 2.0;
            let x = mid.re;
            let g = self.eval(Complex64::new(x, 0.0)).norm();
            if g <= 1e4 * f64::EPSILON * self.magnitude(x) {
                out.push(Complex64::new(x, 0.0));
                out.push(Complex64::new(x, 0.0));
            } else {
                out.push(mid);
                out.push(mid.conj());
            }
        }
        out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        out
    }
}

/// Characteristic polynomial `det(λI − M)` by the Faddeev–LeVerrier recursion,
/// applied to `M / s` for a power-of-two `s` near `‖M‖₁` and rescaled.
pub fn char_poly(m: &MatrixReal) -> Result<CharPoly> {
    let n = m.require_square()?;
    let norm = one_norm(m.as_inner());
    let scale = if norm > 0.0 {
        2f64.powi(norm.log2().round() as i32)
    } else {
        1.0
    };
    let a = m.as_inner() / scale;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut coeffs = vec![0.0; n];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let mut prev_coeff = 1.0;
    for k in 1..=n {
        mk = &a * &mk + &eye * prev_coeff;
        let c = -(&a * &mk).trace() / k as f64;
        coeffs[n - k] = c;
        prev_coeff = c;
    }
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c *= scale.powi((n - i) as i32);
    }
    CharPoly::from_coeffs(coeffs)
}

/// Multiplicity-counted spectrum of a real square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn sum(&self) -> Complex64 {
        self.eigenvalues.iter().sum()
    }

    /// Every non-real eigenvalue has its conjugate in the list (exact match).
    pub fn is_conjugate_closed(&self) -> bool {
        let mut pending: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .copied()
            .filter(|z| z.im != 0.0)
            .collect();
        while let Some(z) = pending.pop() {
            match pending.iter().position(|w| *w == z.conj()) {
                Some(i) => {
                    pending.swap_remove(i);
                }
                None => return false,
            }
        }
        true
    }
}

pub fn eigenvalues(m: &MatrixReal) -> Result<Spectrum> {
    let n = m.require_square()?;
    if n > EIGEN_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim: n,
            max: EIGEN_MAX_DIM,
        });
    }
    let poly = char_poly(m)?;
    Ok(Spectrum {
        eigenvalues: poly.roots()?,
    })
}
