//! Polynomial and polynomial-matrix algebra: expression parsing, Wick
//! rotation, covariance and primality checks, and tensor assembly with
//! noise cumulants.

mod matrix;
mod parser;
mod poly;
mod tensor;

pub use matrix::{
    check_covariance, is_prime_wrt_factors, sample_rotation, variety_residual, CovarianceReport,
    PolyMatrix, PrimalityReport, Representation,
};
pub use parser::{parse_poly, MAX_EXPONENT};
pub use poly::{Mono, Polynomial, COEFF_PRUNE_TOL};
pub use tensor::{NoiseCumulantTensor, TensorPoly};

/// Assembles the rank-n tensor polynomial from the covariance numerator and
/// an order-n cumulant. Pass the Wick-rotated matrix for the Minkowski side.
pub fn tensor_assemble(
    q: PolyMatrix,
    cumulant: NoiseCumulantTensor,
    n: usize,
) -> Result<TensorPoly, crate::error::PolyError> {
    if cumulant.order != n {
        return Err(crate::error::PolyError::DimensionMismatch(format!(
            "cumulant order {} != requested order {n}",
            cumulant.order
        )));
    }
    TensorPoly::new(q, cumulant)
}
