//! Coordinate-change laws for tensors at a point.
//!
//! With A the jacobian of a chart change, components transform as
//! v_y = A v_x, G_y = (A⁻¹)ᵀ G_x A⁻¹ (covariant), W_y = A W_x Aᵀ
//! (contravariant) and L_y = A L_x A⁻¹ ((1,1)-operators).

use nalgebra::{DMatrix, DVector};

use crate::error::{CovfieldError, Result};
use crate::spd::SpdMatrix;

/// Condition-number ceiling above which a jacobian is treated as singular.
pub const JACOBIAN_COND_LIMIT: f64 = 1e12;

/// A nonsingular chart-change jacobian with its inverse cached.
#[derive(Clone, Debug)]
pub struct ChartJacobian {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

impl ChartJacobian {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(CovfieldError::InvalidArgument(
                "jacobian must be square".into(),
            ));
        }
        let sv = a.clone().svd(false, false).singular_values;
        let (max, min) = (sv.amax(), sv.iter().copied().fold(f64::INFINITY, f64::min));
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if !cond.is_finite() || cond > JACOBIAN_COND_LIMIT {
            return Err(CovfieldError::SingularJacobian { cond });
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or(CovfieldError::SingularJacobian { cond })?;
        Ok(Self { a, a_inv })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
            a_inv: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn inverse(&self) -> ChartJacobian {
        ChartJacobian {
            a: self.a_inv.clone(),
            a_inv: self.a.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// v_y = A v_x.
pub fn transform_vector(v: &DVector<f64>, a: &ChartJacobian) -> Result<DVector<f64>> {
    if v.len() != a.dim() {
        return Err(CovfieldError::InvalidArgument(
            "vector length does not match the jacobian dimension".into(),
        ));
    }
    Ok(a.matrix() * v)
}

/// G_y = (A⁻¹)ᵀ G_x A⁻¹.
pub fn transform_metric(g: &SpdMatrix, a: &ChartJacobian) -> Result<SpdMatrix> {
    check_dim(g.dim(), a)?;
    let m = a.inverse_matrix().transpose() * g.entries() * a.inverse_matrix();
    SpdMatrix::new(symmetrize(m))
}

/// W_y = A W_x Aᵀ.
pub fn transform_contravariant(w: &SpdMatrix, a: &ChartJacobian) -> Result<SpdMatrix> {
    check_dim(w.dim(), a)?;
    let m = a.matrix() * w.entries() * a.matrix().transpose();
    SpdMatrix::new(symmetrize(m))
}

/// L_y = A L_x A⁻¹ (similarity; preserves the spectrum).
pub fn transform_operator(l: &DMatrix<f64>, a: &ChartJacobian) -> Result<DMatrix<f64>> {
    check_dim(l.nrows(), a)?;
    if l.nrows() != l.ncols() {
        return Err(CovfieldError::InvalidArgument(
            "operator matrix must be square".into(),
        ));
    }
    Ok(a.matrix() * l * a.inverse_matrix())
}

fn check_dim(n: usize, a: &ChartJacobian) -> Result<()> {
    if n != a.dim() {
        return Err(CovfieldError::InvalidArgument(
            "tensor dimension does not match the jacobian dimension".into(),
        ));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_jacobian_changes_nothing() {
        let a = ChartJacobian::identity(2);
        let v = DVector::from_vec(vec![1.5, -0.5]);
        assert_eq!(transform_vector(&v, &a).unwrap(), v);
        let g = SpdMatrix::from_diagonal(&[2.0, 3.0]);
        assert_eq!(transform_metric(&g, &a).unwrap().entries(), g.entries());
        assert_eq!(
            transform_contravariant(&g, &a).unwrap().entries(),
            g.entries()
        );
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert_eq!(transform_operator(&l, &a).unwrap(), l);
    }

    #[test]
    fn diagonal_vector_transform() {
        let a = ChartJacobian::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap();
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let w = transform_vector(&v, &a).unwrap();
        assert_eq!(w.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn vector_round_trip_through_inverse() {
        let a = ChartJacobian::new(DMatrix::from_row_slice(
            2,
            2,
            &[1.3, -0.4, 0.2, 0.9],
        ))
        .unwrap();
        let v = DVector::from_vec(vec![0.7, -1.9]);
        let w = transform_vector(&v, &a).unwrap();
        let back = transform_vector(&w, &a.inverse()).unwrap();
        assert_relative_eq!((back - v).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn operator_transform_preserves_spectrum() {
        let a = ChartJacobian::new(DMatrix::from_row_slice(
            2,
            2,
            &[0.8, 0.3, -0.1, 1.4],
        ))
        .unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let ly = transform_operator(&l, &a).unwrap();
        // Symmetric L: compare sorted real spectra via trace/determinant.
        assert_relative_eq!(ly.trace(), l.trace(), epsilon = 1e-10);
        assert_relative_eq!(ly.determinant(), l.determinant(), epsilon = 1e-10);
    }

    #[test]
    fn scaled_frame_metric_congruence() {
        // A = diag(1/2, 1) turns the identity metric into diag(4, 1).
        let a = ChartJacobian::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).unwrap();
        let g = transform_metric(&SpdMatrix::identity(2), &a).unwrap();
        assert_relative_eq!(g.entries()[(0, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(g.entries()[(1, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let res = ChartJacobian::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.0]));
        assert!(matches!(res, Err(CovfieldError::SingularJacobian { .. })));
    }
}
