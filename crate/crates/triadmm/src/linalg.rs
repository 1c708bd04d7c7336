//! Dense vectors and operators with the validation this library relies on:
//! finite entries, enforced symmetry, PSD checks, and small eigenvalue
//! utilities. Everything is dense and desk-scale (dimensions up to ~2000).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::Error;

/// Relative asymmetry accepted before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// PSD slack: `lambda_min >= -PSD_TOL * lambda_max` passes construction.
pub const PSD_TOL: f64 = 1e-10;

/// A finite real vector. `NaN`/`Inf` entries are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(DVector<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self, Error> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("vector entry [{i}]"),
            });
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    pub fn from_dvector(v: DVector<f64>) -> Result<Self, Error> {
        if let Some(i) = v.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("vector entry [{i}]"),
            });
        }
        Ok(Self(v))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn ones(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn inf_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A linear map stored as the dense matrix of `A_i^*: X_i -> Z`
/// (rows = dim Z, columns = dim X_i). `apply` evaluates `A_i^* x`;
/// `adjoint` evaluates `A_i z = (A_i^*)^T z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinOp {
    mat: DMatrix<f64>,
}

impl LinOp {
    pub fn new(mat: DMatrix<f64>) -> Result<Self, Error> {
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "operator matrix entry".into(),
            });
        }
        Ok(Self { mat })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, Error> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension {
                    what: format!("row {i} has length {}, expected {ncols}", r.len()),
                });
            }
        }
        let mat = DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied());
        Self::new(mat)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            mat: DMatrix::zeros(rows, cols),
        }
    }

    /// dim Z
    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    /// dim X_i
    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|&v| v == 0.0)
    }

    /// `A^* x` (into Z).
    pub fn apply(&self, x: &Vector) -> Result<Vector, Error> {
        if x.len() != self.cols() {
            return Err(Error::Dimension {
                what: format!("apply: vector length {} vs {} columns", x.len(), self.cols()),
            });
        }
        Ok(Vector(&self.mat * x.as_dvector()))
    }

    /// `A z` (into X_i).
    pub fn adjoint(&self, z: &Vector) -> Result<Vector, Error> {
        if z.len() != self.rows() {
            return Err(Error::Dimension {
                what: format!("adjoint: vector length {} vs {} rows", z.len(), self.rows()),
            });
        }
        Ok(Vector(self.mat.tr_mul(z.as_dvector())))
    }

    /// `A A^*` as an operator on X_i (columns-space Gram matrix).
    pub fn gram(&self) -> SymOp {
        let g = self.mat.tr_mul(&self.mat);
        SymOp::new(g).expect("Gram matrix is symmetric by construction")
    }

    /// `A_i A_j^* = M_i^T M_j` mapping X_j -> X_i.
    pub fn cross_gram(&self, other: &LinOp) -> Result<DMatrix<f64>, Error> {
        if self.rows() != other.rows() {
            return Err(Error::Dimension {
                what: format!(
                    "cross_gram: operators map into spaces of dimension {} and {}",
                    self.rows(),
                    other.rows()
                ),
            });
        }
        Ok(self.mat.tr_mul(other.matrix()))
    }
}

/// A self-adjoint operator. Construction symmetrizes the input and rejects
/// matrices whose asymmetry exceeds `SYMMETRY_TOL` relative to their scale.
/// Use [`SymOp::new_psd`] where positive semi-definiteness is part of the
/// contract (the `Sigma_i` and `T_i` operators).
#[derive(Debug, Clone, PartialEq)]
pub struct SymOp {
    mat: DMatrix<f64>,
}

impl SymOp {
    pub fn new(mat: DMatrix<f64>) -> Result<Self, Error> {
        if !mat.is_square() {
            return Err(Error::Dimension {
                what: format!("symmetric operator must be square, got {}x{}", mat.nrows(), mat.ncols()),
            });
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "symmetric operator entry".into(),
            });
        }
        let scale = mat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                asym = asym.max((mat[(i, j)] - mat[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale.max(1.0) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let sym = 0.5 * (&mat + mat.transpose());
        Ok(Self { mat: sym })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, Error> {
        let ncols = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension {
                    what: format!("row {i} has length {}, expected {ncols}", r.len()),
                });
            }
        }
        Self::new(DMatrix::from_row_iterator(
            rows.len(),
            ncols,
            rows.iter().flatten().copied(),
        ))
    }

    /// Construct and additionally require `lambda_min >= -PSD_TOL * lambda_max`.
    pub fn new_psd(mat: DMatrix<f64>) -> Result<Self, Error> {
        let op = Self::new(mat)?;
        let (lo, hi) = op.eig_bounds();
        if lo < -PSD_TOL * hi.abs().max(1e-300) && lo < -PSD_TOL {
            return Err(Error::NotPsd { lambda_min: lo });
        }
        Ok(op)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            mat: DMatrix::zeros(n, n),
        }
    }

    pub fn identity_scaled(n: usize, s: f64) -> Self {
        Self {
            mat: DMatrix::from_diagonal_element(n, n, s),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|&v| v == 0.0)
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector, Error> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: format!("apply: vector length {} vs operator dim {}", x.len(), self.dim()),
            });
        }
        Ok(Vector(&self.mat * x.as_dvector()))
    }

    /// `<x, S x>`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (&self.mat * x).dot(x)
    }

    /// Smallest and largest eigenvalue via full symmetric eigendecomposition.
    pub fn eig_bounds(&self) -> (f64, f64) {
        if self.dim() == 0 {
            return (0.0, 0.0);
        }
        let eig = SymmetricEigen::new(self.mat.clone());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eig_bounds().0
    }

    pub fn spectral_norm(&self) -> f64 {
        let (lo, hi) = self.eig_bounds();
        lo.abs().max(hi.abs())
    }

    /// If this operator equals `s * I` (within `tol` relative to its scale),
    /// return `s`.
    pub fn as_scalar_identity(&self, tol: f64) -> Option<f64> {
        let n = self.dim();
        if n == 0 {
            return Some(0.0);
        }
        let diag_mean = self.mat.diagonal().mean();
        let scale = self.mat.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { diag_mean } else { 0.0 };
                if (self.mat[(i, j)] - target).abs() > tol * scale {
                    return None;
                }
            }
        }
        Some(diag_mean)
    }

    pub fn add(&self, other: &SymOp) -> Result<SymOp, Error> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                what: format!("add: operator dims {} vs {}", self.dim(), other.dim()),
            });
        }
        Ok(SymOp {
            mat: &self.mat + other.matrix(),
        })
    }

    pub fn scale(&self, s: f64) -> SymOp {
        SymOp { mat: s * &self.mat }
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration
/// (tolerance 1e-12, capped at 1e4 iterations), falling back to a full
/// symmetric eigendecomposition when the iteration stalls.
pub fn lambda_max_psd(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    if n == 0 {
        return 0.0;
    }
    if mat.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // Deterministic start with a mild skew so the iterate is unlikely to be
    // orthogonal to the dominant eigenvector.
    let mut v = DVector::from_iterator(n, (0..n).map(|i| 1.0 + (i as f64) * 1e-3));
    v /= v.norm();
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let w = mat * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&v);
        let new_v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
        v = new_v;
    }
    // Stalled (clustered leading eigenvalues); small dense fallback is cheap.
    SymmetricEigen::new(mat.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &v| m.max(v))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(k: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    k.clone().cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vector_rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn symop_symmetrizes_and_rejects() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0 + 1e-14, 2.0, 3.0]);
        let s = SymOp::new(m).unwrap();
        assert_eq!(s.matrix()[(0, 1)], s.matrix()[(1, 0)]);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 3.0]);
        assert!(matches!(SymOp::new(bad), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn psd_check() {
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(SymOp::new_psd(ok).is_ok());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SymOp::new_psd(indef), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn lambda_max_matches_eigen() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let by_power = lambda_max_psd(&m);
        let by_eig = SymmetricEigen::new(m).eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        assert!((by_power - by_eig).abs() <= 1e-10 * by_eig);
    }

    #[test]
    fn lambda_max_zero_and_identity() {
        assert_eq!(lambda_max_psd(&DMatrix::zeros(3, 3)), 0.0);
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((lambda_max_psd(&id) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scalar_identity_detection() {
        let s = SymOp::identity_scaled(3, 2.5);
        assert_eq!(s.as_scalar_identity(1e-12), Some(2.5));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(SymOp::new(m).unwrap().as_scalar_identity(1e-12), None);
    }

    proptest! {
        // <A* x, z> = <x, A z> up to roundoff for random dense operators.
        #[test]
        fn adjoint_consistency(seed in 0u64..500) {
            let mut gen = crate::zoo::SplitMix64::new(seed);
            let (m, n) = (3 + (gen.next_u64() % 4) as usize, 2 + (gen.next_u64() % 4) as usize);
            let a = LinOp::new(gen.matrix(m, n)).unwrap();
            let x = Vector::from_dvector(gen.dvector(n)).unwrap();
            let z = Vector::from_dvector(gen.dvector(m)).unwrap();
            let lhs = a.apply(&x).unwrap().dot(&z);
            let rhs = x.dot(&a.adjoint(&z).unwrap());
            let bound = 1e-12 * x.norm() * z.norm() * lambda_max_psd(a.gram().matrix()).sqrt().max(1.0);
            prop_assert!((lhs - rhs).abs() <= bound.max(1e-14));
        }
    }
}
