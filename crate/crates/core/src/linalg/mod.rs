//! Dense linear-algebra kernels.

mod kernels;
mod krylov;
mod matrix;
mod polar;
mod qr;
mod svd;

pub use krylov::{block_krylov_topk, KrylovParams};
pub use matrix::Matrix;
pub use polar::{newton_schulz, polar_factor_exact, NsCoefficients, DEFAULT_NS_ITERS};
pub use qr::{qr_orthonormalize, RANK_TOL};
pub use svd::{thin_svd, SvdTriple};

