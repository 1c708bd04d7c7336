//! Cone descriptions and Euclidean projections.
//!
//! PSD cones act on the `svec` coordinates of symmetric matrices: the
//! column-lower-triangle vectorization with off-diagonal entries scaled by
//! sqrt(2), which makes the vector inner product equal the Frobenius inner
//! product, so Euclidean projection commutes with matrix projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConeSpec {
    /// `R^n_+`
    Orthant { dim: usize },
    /// Cone of symmetric PSD matrices of the given order, in svec coordinates.
    Psd { order: usize },
    /// Elementwise bounds `lower <= x <= upper`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ConeSpec {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            ConeSpec::Orthant { dim } if *dim == 0 => Err(Error::Config {
                what: "orthant cone needs a positive dimension".into(),
            }),
            ConeSpec::Psd { order } if *order == 0 => Err(Error::Config {
                what: "psd cone needs a positive order".into(),
            }),
            ConeSpec::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::Dimension {
                        what: format!("box bounds of lengths {} and {}", lower.len(), upper.len()),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| !l.is_finite() || !u.is_finite()) {
                    return Err(Error::NonFinite { what: "box bound".into() });
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::Config {
                        what: "box bounds must satisfy lower <= upper".into(),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Dimension of the ambient vector space.
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::Orthant { dim } => *dim,
            ConeSpec::Psd { order } => svec_dim(*order),
            ConeSpec::Box { lower, .. } => lower.len(),
        }
    }

    pub fn project(&self, x: &Vector) -> Vector {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            ConeSpec::Orthant { .. } => {
                Vector::from_dvector(x.as_dvector().map(|v| v.max(0.0))).expect("finite")
            }
            ConeSpec::Psd { order } => {
                let m = unsvec(x.as_dvector(), *order);
                let eig = SymmetricEigen::new(m);
                let clipped = DVector::from_iterator(*order, eig.eigenvalues.iter().map(|&v| v.max(0.0)));
                let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
                Vector::from_dvector(svec(&rebuilt)).expect("finite")
            }
            ConeSpec::Box { lower, upper } => Vector::from_dvector(DVector::from_iterator(
                x.len(),
                x.as_slice()
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&v, (&l, &u))| v.clamp(l, u)),
            ))
            .expect("finite"),
        }
    }

    /// Euclidean distance to the cone.
    pub fn distance(&self, x: &Vector) -> f64 {
        let p = self.project(x);
        (x.as_dvector() - p.as_dvector()).norm()
    }
}

pub fn svec_dim(order: usize) -> usize {
    order * (order + 1) / 2
}

/// svec of a symmetric matrix: columns of the lower triangle, off-diagonal
/// entries scaled by sqrt(2).
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(svec_dim(n));
    let mut k = 0;
    for j in 0..n {
        out[k] = m[(j, j)];
        k += 1;
        for i in (j + 1)..n {
            out[k] = std::f64::consts::SQRT_2 * m[(i, j)];
            k += 1;
        }
    }
    out
}

pub fn unsvec(v: &DVector<f64>, order: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(order, order);
    let mut k = 0;
    for j in 0..order {
        m[(j, j)] = v[k];
        k += 1;
        for i in (j + 1)..order {
            let val = v[k] / std::f64::consts::SQRT_2;
            m[(i, j)] = val;
            m[(j, i)] = val;
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orthant_projection_clips() {
        let cone = ConeSpec::Orthant { dim: 3 };
        let x = Vector::new(vec![-1.0, 0.5, 0.0]).unwrap();
        assert_eq!(cone.project(&x).to_vec(), vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn box_projection_clamps() {
        let cone = ConeSpec::Box {
            lower: vec![-1.0, 0.0],
            upper: vec![1.0, 2.0],
        };
        let x = Vector::new(vec![-3.0, 5.0]).unwrap();
        assert_eq!(cone.project(&x).to_vec(), vec![-1.0, 2.0]);
    }

    #[test]
    fn box_rejects_inverted_bounds() {
        let cone = ConeSpec::Box {
            lower: vec![1.0],
            upper: vec![0.0],
        };
        assert!(cone.validate().is_err());
    }

    #[test]
    fn svec_preserves_inner_products() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 2.0, -1.0, 3.0, 0.5, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 5.0, -2.0, 1.0, -2.0, 1.0]);
        let frob = (a.transpose() * &b).trace();
        assert_relative_eq!(svec(&a).dot(&svec(&b)), frob, max_relative = 1e-14);
        // round trip
        assert_relative_eq!((unsvec(&svec(&a), 3) - &a).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn psd_projection_clips_eigenvalues() {
        // diag(1, -2) projects to diag(1, 0)
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let cone = ConeSpec::Psd { order: 2 };
        let p = cone.project(&Vector::from_dvector(svec(&m)).unwrap());
        let back = unsvec(p.as_dvector(), 2);
        assert_relative_eq!(back[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(back[(1, 1)], 0.0, epsilon = 1e-14);
        // idempotent
        let again = cone.project(&p);
        assert_relative_eq!((again.as_dvector() - p.as_dvector()).norm(), 0.0, epsilon = 1e-13);
    }
}
