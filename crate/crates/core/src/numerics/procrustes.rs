use nalgebra::DMatrix;

use super::{ensure_finite, NumericsError, Result};

/// The orthogonal `R` maximizing `tr(Rᵀ C)`: `R = P Qᵀ` for `C = P Σ Qᵀ`.
pub fn orthogonal_procrustes(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.nrows() != c.ncols() {
        return Err(NumericsError::Dimension(format!("Procrustes needs a square matrix, got {}x{}", c.nrows(), c.ncols())));
    }
    ensure_finite(c, "orthogonal_procrustes")?;
    if c.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let svd = c.clone().svd(true, true);
    let p = svd.u.expect("svd requested with u");
    let qt = svd.v_t.expect("svd requested with v_t");
    Ok(p * qt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::orthogonality_error;

    #[test]
    fn identity_maps_to_identity() {
        let r = orthogonal_procrustes(&DMatrix::identity(4, 4)).unwrap();
        assert!((r - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_with_negative_entry() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -3.0]);
        let r = orthogonal_procrustes(&c).unwrap();
        assert!((&r - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).norm() < 1e-12);
        assert!(((r.transpose() * &c).trace() - 5.0).abs() < 1e-12);
        // oracle: scan rotations and reflections on a 0.001 rad grid
        let mut best = f64::NEG_INFINITY;
        let steps = (2.0 * std::f64::consts::PI / 1e-3) as usize;
        for k in 0..=steps {
            let t = k as f64 * 1e-3;
            let (s, co) = t.sin_cos();
            let rot = DMatrix::from_row_slice(2, 2, &[co, -s, s, co]);
            let refl = DMatrix::from_row_slice(2, 2, &[co, s, s, -co]);
            best = best.max((rot.transpose() * &c).trace()).max((refl.transpose() * &c).trace());
        }
        assert!((best - 5.0).abs() < 1e-5);
    }

    #[test]
    fn scalar_is_sign() {
        let r = orthogonal_procrustes(&DMatrix::from_element(1, 1, -0.3)).unwrap();
        assert_eq!(r[(0, 0)], -1.0);
    }

    #[test]
    fn rejects_non_finite() {
        let c = DMatrix::from_element(2, 2, f64::NAN);
        assert!(orthogonal_procrustes(&c).is_err());
        let near_singular = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1e-300]);
        assert!(orthogonality_error(&orthogonal_procrustes(&near_singular).unwrap()) < 1e-10);
    }
}
