//! Dense linear-algebra kernels for small real matrices.

mod eigen;
mod expm;
mod matrix;
mod svd;

pub use eigen::{char_poly, eigenvalues, CharPoly, Spectrum};
pub use expm::expm;
pub use matrix::MatrixReal;
pub use svd::{
    min_norm_lstsq, null_space_left, numerical_rank, pinv, singular_values, LstsqSolution,
    RankTolerance,
};
