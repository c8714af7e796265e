use nalgebra::DMatrix;

use super::{ensure_finite, symmetric_eigen, NumericsError, Result};

const PAIR_SUM_FLOOR: f64 = 1e-12;

/// Solves `A·W + W·B = C` for symmetric positive semi-definite `A` (r×r)
/// and `B` (d×d).
///
/// Both coefficients are diagonalized, `Uᵀ C V` is divided entrywise by
/// `λᵢ + νⱼ`, and the result is rotated back. Callers that need
/// regularization add the ridge to `B` themselves.
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.nrows() != a.nrows() || c.ncols() != b.nrows() {
        return Err(NumericsError::Dimension(format!(
            "Sylvester: A is {}x{}, B is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    ensure_finite(c, "solve_sylvester")?;
    let ea = symmetric_eigen(a)?;
    let eb = symmetric_eigen(b)?;
    let scale = ea.values.amax().max(eb.values.amax()).max(1.0);
    let threshold = PAIR_SUM_FLOOR * scale;

    let mut rotated = ea.vectors.transpose() * c * &eb.vectors;
    for j in 0..rotated.ncols() {
        for i in 0..rotated.nrows() {
            let sum = ea.values[i] + eb.values[j];
            if sum.abs() < threshold {
                return Err(NumericsError::Singular { sum, threshold });
            }
            rotated[(i, j)] /= sum;
        }
    }
    Ok(&ea.vectors * rotated * eb.vectors.transpose())
}
