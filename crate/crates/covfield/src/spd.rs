//! Symmetric positive (semi)definite matrices and the similarity-invariant
//! functions used to compare covariance operators.
//!
//! Every log, inverse and square root goes through one symmetric
//! eigendecomposition backend. Pairwise invariants are evaluated on the
//! whitened spectrum: the eigenvalues of Y^{−1/2} X Y^{−1/2}, which is
//! similar to XY⁻¹ but symmetric.

use nalgebra::{DMatrix, DVector};

use crate::error::{CovfieldError, Result};

/// Largest admissible relative asymmetry of a candidate matrix.
pub const ASYMMETRY_TOL: f64 = 1e-8;

/// Relative eigenvalue floor below which a matrix is rejected as not
/// strictly positive definite.
pub const SPD_EIG_TOL: f64 = 1e-12;

/// A symmetric matrix, symmetrized as (M + Mᵀ)/2 on construction.
/// Positive definiteness is context-dependent: semidefinite values are legal
/// wherever the caller says so (single outer products, degenerate fields),
/// and [`SpdMatrix::require_strict`] gates the strict uses.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(CovfieldError::InvalidArgument(
                "matrix must be square".into(),
            ));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(CovfieldError::InvalidArgument(
                "matrix entries must be finite".into(),
            ));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > ASYMMETRY_TOL * m.amax().max(1.0) {
            return Err(CovfieldError::NotSpd(format!(
                "asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { m: sym })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut e: Vec<f64> = self
            .m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        DVector::from_vec(e)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Strict positive definiteness relative to the spectral scale.
    pub fn is_strictly_pd(&self) -> bool {
        let e = self.eigenvalues();
        let scale = e.amax().max(f64::MIN_POSITIVE);
        e[0] > SPD_EIG_TOL * scale
    }

    pub fn require_strict(&self) -> Result<()> {
        if !self.is_strictly_pd() {
            return Err(CovfieldError::NotSpd(format!(
                "minimum eigenvalue {:.3e} is below the strict threshold",
                self.min_eigenvalue()
            )));
        }
        Ok(())
    }

    /// Spectral map: applies `f` to every eigenvalue.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let eig = self.m.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
        let m = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        SpdMatrix {
            m: (&m + m.transpose()) * 0.5,
        }
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        self.require_strict()?;
        Ok(self.spectral_map(|x| 1.0 / x))
    }

    pub fn sqrt(&self) -> Result<SpdMatrix> {
        self.require_strict()?;
        Ok(self.spectral_map(f64::sqrt))
    }

    pub fn inv_sqrt(&self) -> Result<SpdMatrix> {
        self.require_strict()?;
        Ok(self.spectral_map(|x| 1.0 / x.sqrt()))
    }

    /// Copy with `eps · tr/n` added to the diagonal.
    pub fn ridged(&self, eps: f64) -> SpdMatrix {
        let n = self.dim();
        let shift = eps * self.trace() / n as f64;
        let mut m = self.m.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        SpdMatrix { m }
    }
}

/// The similarity-invariant functions h on Sym_n⁺ pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvariantKind {
    /// |tr(Z⁻¹X − Z⁻¹Y)| for a fixed reference Z (default: identity).
    TrDif,
    /// tr²(Z⁻¹(X − Y)), the squared variant of `TrDif`.
    TrDifSq,
    /// {tr(ln²(XY⁻¹))}^{1/2}, the affine-invariant distance.
    TrLn2,
    /// tr(XY⁻¹) − ln|XY⁻¹| − n, the log-likelihood divergence.
    Lik,
    /// ln(tr((XY⁻¹ − YX⁻¹)²)).
    LnTr,
    /// ln(tr(XY⁻¹)·tr(YX⁻¹)).
    LnPr,
    /// tr((XY⁻¹ − YX⁻¹)²).
    TrSq,
}

impl InvariantKind {
    pub const ALL: [InvariantKind; 7] = [
        InvariantKind::TrDif,
        InvariantKind::TrDifSq,
        InvariantKind::TrLn2,
        InvariantKind::Lik,
        InvariantKind::LnTr,
        InvariantKind::LnPr,
        InvariantKind::TrSq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InvariantKind::TrDif => "trdif",
            InvariantKind::TrDifSq => "trdifsq",
            InvariantKind::TrLn2 => "trln2",
            InvariantKind::Lik => "lik",
            InvariantKind::LnTr => "lntr",
            InvariantKind::LnPr => "lnpr",
            InvariantKind::TrSq => "trsq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                CovfieldError::InvalidArgument(format!(
                    "unknown invariant {s:?} (expected one of trdif, trdifsq, trln2, lik, lntr, lnpr, trsq)"
                ))
            })
    }

    /// Kinds taking the fixed reference tensor Z.
    pub fn takes_reference(self) -> bool {
        matches!(self, InvariantKind::TrDif | InvariantKind::TrDifSq)
    }

    /// Kinds whose recovery functional H is convex on the simplex.
    pub fn is_convex(self) -> bool {
        matches!(
            self,
            InvariantKind::TrDifSq | InvariantKind::Lik | InvariantKind::TrSq
        )
    }
}

/// Logs of the eigenvalues of Y^{−1/2} X Y^{−1/2} (the whitened spectrum of
/// XY⁻¹). tr(ln²(XY⁻¹)) is the sum of their squares.
pub fn whiten_log(x: &SpdMatrix, y: &SpdMatrix) -> Result<DVector<f64>> {
    let lam = whitened_eigenvalues(x, y)?;
    Ok(lam.map(f64::ln))
}

/// Eigenvalues of Y^{−1/2} X Y^{−1/2}, ascending. They coincide with the
/// eigenvalues of XY⁻¹ and are strictly positive for strictly SPD inputs.
pub fn whitened_eigenvalues(x: &SpdMatrix, y: &SpdMatrix) -> Result<DVector<f64>> {
    if x.dim() != y.dim() {
        return Err(CovfieldError::InvalidArgument(
            "dimension mismatch between the invariant operands".into(),
        ));
    }
    x.require_strict()?;
    let w = y.inv_sqrt()?;
    let m = w.entries() * x.entries() * w.entries();
    let sym = SpdMatrix {
        m: (&m + m.transpose()) * 0.5,
    };
    let lam = sym.eigenvalues();
    let scale = lam.amax().max(f64::MIN_POSITIVE);
    if lam[0] <= SPD_EIG_TOL * scale {
        return Err(CovfieldError::NotSpd(format!(
            "whitened spectrum has eigenvalue {:.3e}",
            lam[0]
        )));
    }
    Ok(lam)
}

/// Evaluate a similarity invariant h(X, Y; Z). `z` is consulted only by the
/// `TrDif`/`TrDifSq` kinds and defaults to the identity (standing in for
/// G⁻¹ in an orthonormal chart).
pub fn invariant(
    kind: InvariantKind,
    x: &SpdMatrix,
    y: &SpdMatrix,
    z: Option<&SpdMatrix>,
) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(CovfieldError::InvalidArgument(
            "dimension mismatch between the invariant operands".into(),
        ));
    }
    let n = x.dim();
    match kind {
        InvariantKind::TrDif | InvariantKind::TrDifSq => {
            x.require_strict()?;
            y.require_strict()?;
            let t = match z {
                Some(zr) => {
                    if zr.dim() != n {
                        return Err(CovfieldError::InvalidArgument(
                            "reference tensor dimension mismatch".into(),
                        ));
                    }
                    let zi = zr.inverse()?;
                    (zi.entries() * (x.entries() - y.entries())).trace()
                }
                None => x.trace() - y.trace(),
            };
            Ok(if kind == InvariantKind::TrDif {
                t.abs()
            } else {
                t * t
            })
        }
        InvariantKind::TrLn2 => {
            let logs = whiten_log(x, y)?;
            Ok(logs.iter().map(|l| l * l).sum::<f64>().sqrt())
        }
        InvariantKind::Lik => {
            let lam = whitened_eigenvalues(x, y)?;
            Ok(lam.iter().map(|l| l - l.ln()).sum::<f64>() - n as f64)
        }
        InvariantKind::TrSq => {
            let lam = whitened_eigenvalues(x, y)?;
            Ok(lam.iter().map(|l| (l - 1.0 / l).powi(2)).sum())
        }
        InvariantKind::LnTr => {
            let t = invariant(InvariantKind::TrSq, x, y, None)?;
            // Rounding turns the exact zero at X = Y into ~1e-30.
            if t <= 1e-24 {
                return Err(CovfieldError::Domain(
                    "lntr is undefined at X = Y, where tr((XY⁻¹ − YX⁻¹)²) = 0".into(),
                ));
            }
            Ok(t.ln())
        }
        InvariantKind::LnPr => {
            let lam = whitened_eigenvalues(x, y)?;
            let fwd: f64 = lam.iter().sum();
            let bwd: f64 = lam.iter().map(|l| 1.0 / l).sum();
            Ok((fwd * bwd).ln())
        }
    }
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Singular values in descending order (for rank drift diagnostics).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(d: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(d)
    }

    #[test]
    fn construction_symmetrizes_and_rejects_gross_asymmetry() {
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 0.5 + 1e-10, 0.5, 2.0]);
        let s = SpdMatrix::new(near).unwrap();
        assert_eq!(s.entries()[(0, 1)], s.entries()[(1, 0)]);

        let gross = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.5, 2.0]);
        assert!(matches!(SpdMatrix::new(gross), Err(CovfieldError::NotSpd(_))));
    }

    #[test]
    fn lik_at_scaled_identity() {
        let x = diag(&[2.0, 2.0]);
        let y = SpdMatrix::identity(2);
        let v = invariant(InvariantKind::Lik, &x, &y, None).unwrap();
        assert_relative_eq!(v, 2.0 - 2.0 * 2.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn trln2_at_exponential_identity() {
        let e2 = std::f64::consts::E.powi(2);
        let x = diag(&[e2, e2]);
        let y = SpdMatrix::identity(2);
        let v = invariant(InvariantKind::TrLn2, &x, &y, None).unwrap();
        assert_relative_eq!(v, 2.0 * 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn trsq_at_doubled_identity() {
        let x = diag(&[2.0, 2.0]);
        let y = SpdMatrix::identity(2);
        let v = invariant(InvariantKind::TrSq, &x, &y, None).unwrap();
        assert_relative_eq!(v, 4.5, epsilon = 1e-12);
    }

    #[test]
    fn trdif_with_identity_reference() {
        let x = diag(&[3.0, 1.0]);
        let y = SpdMatrix::identity(2);
        let z = SpdMatrix::identity(2);
        let v = invariant(InvariantKind::TrDif, &x, &y, Some(&z)).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn lnpr_floor_at_equal_arguments() {
        // tr(A)tr(A⁻¹) ≥ n², so at X = Y the value is ln n², not zero.
        let x = SpdMatrix::identity(2);
        let v = invariant(InvariantKind::LnPr, &x, &x, None).unwrap();
        assert_relative_eq!(v, 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn lntr_rejects_equal_arguments() {
        let x = diag(&[1.5, 0.5]);
        assert!(matches!(
            invariant(InvariantKind::LnTr, &x, &x, None),
            Err(CovfieldError::Domain(_))
        ));
    }

    #[test]
    fn whiten_log_diagonal_case() {
        let e = std::f64::consts::E;
        let x = diag(&[e, e.powi(3)]);
        let y = SpdMatrix::identity(2);
        let logs = whiten_log(&x, &y).unwrap();
        assert_relative_eq!(logs[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(logs[1], 3.0, epsilon = 1e-12);

        let same = whiten_log(&x, &x).unwrap();
        assert!(same.amax() < 1e-12);
    }

    #[test]
    fn lik_is_asymmetric() {
        let x = diag(&[4.0, 1.0]);
        let y = SpdMatrix::identity(2);
        let fwd = invariant(InvariantKind::Lik, &x, &y, None).unwrap();
        let bwd = invariant(InvariantKind::Lik, &y, &x, None).unwrap();
        assert!((fwd - bwd).abs() > 0.5, "expected asymmetry, got {fwd} vs {bwd}");
    }

    #[test]
    fn numerical_rank_basics() {
        let id = DMatrix::<f64>::identity(6, 6);
        assert_eq!(numerical_rank(&id, 1e-9), 6);

        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = DVector::from_vec(vec![-1.0, 0.5, 4.0]);
        let outer = &u * v.transpose();
        assert_eq!(numerical_rank(&outer, 1e-9), 1);

        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-9), 0);
    }

    #[test]
    fn not_spd_detection() {
        let x = diag(&[1.0, 0.0]);
        assert!(x.require_strict().is_err());
        assert!(diag(&[2.0, 3.0]).require_strict().is_ok());
    }
}
