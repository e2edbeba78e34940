//! Mean field and matrix-valued covariance kernel of the random vector
//! field, plus the volume-weighted collocation matrix that feeds the
//! low-rank factorization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::kl::SymmetricMatrix;
use crate::mesh::TetMesh;
use crate::scalar::{real, Real};

/// Parameters of the covariance model
///
///   Cov(x,x') = amplitude · exp(−‖x−x'‖² / length_scale_denominator)
///               · diag(m₁, m₂·s₂(x,x'), m₃·s₃(x,x'))
///
/// with the boundary damping factors s_j(x,x') = 16·x_j(1−x_j)·x_j'(1−x_j').
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel<T: Real> {
    pub amplitude: T,
    pub length_scale_denominator: T,
    pub diagonal_multipliers: [T; 3],
    pub boundary_damping: bool,
    pub mean_vector: Vec3<T>,
}

impl<T: Real> Default for CovarianceModel<T> {
    fn default() -> Self {
        CovarianceModel {
            amplitude: real(0.01),
            length_scale_denominator: real(50.0),
            diagonal_multipliers: [T::one(), real(9.0), real(9.0)],
            boundary_damping: true,
            mean_vector: [T::one(), T::zero(), T::zero()],
        }
    }
}

impl<T: Real> CovarianceModel<T> {
    /// Mean of the vector field, constant over the cube.
    pub fn mean_field(&self, _x: Vec3<T>) -> Vec3<T> {
        self.mean_vector
    }

    /// The 3×3 (diagonal) covariance kernel between two points.
    pub fn kernel(&self, x: Vec3<T>, xp: Vec3<T>) -> Mat3<T> {
        let mut dist2 = T::zero();
        for k in 0..3 {
            let d = x[k] - xp[k];
            dist2 = dist2 + d * d;
        }
        let envelope = self.amplitude * (-dist2 / self.length_scale_denominator).exp();
        // s_j = 16·x_j(1−x_j)·x_j'(1−x_j'), evaluated as a product of two
        // per-point factors so that swapping the arguments is bit-exact.
        let four: T = real(4.0);
        let mut m = [[T::zero(); 3]; 3];
        for j in 0..3 {
            let damping = if self.boundary_damping && j > 0 {
                (four * x[j] * (T::one() - x[j])) * (four * xp[j] * (T::one() - xp[j]))
            } else {
                T::one()
            };
            m[j][j] = envelope * self.diagonal_multipliers[j] * damping;
        }
        m
    }
}

/// Resource guard on the collocation dimension 3·T (level 5 is ~4.7M).
pub const MAX_COLLOCATION_DIM: usize = 6_000_000;

/// Lazily evaluated covariance matrix collocated at element centroids with
/// √volume row/column scaling, so that its entries are
///
///   A[(3i+a),(3j+b)] = √|T_i| √|T_j| · kernel(c_i, c_j)[a][b].
///
/// The matrix is never materialized; the pivoted Cholesky factorization only
/// touches O(rank · dim) entries.
pub struct CovarianceCollocation<T: Real> {
    model: CovarianceModel<T>,
    centroids: Vec<Vec3<T>>,
    sqrt_volumes: Vec<T>,
}

impl<T: Real> CovarianceCollocation<T> {
    pub fn new(mesh: &Arc<TetMesh<T>>, model: CovarianceModel<T>) -> Result<Self> {
        let dim = mesh.tet_count() * 3;
        if dim > MAX_COLLOCATION_DIM {
            return Err(Error::ResourceLimit(format!(
                "collocation dimension {dim} exceeds the cap of {MAX_COLLOCATION_DIM}"
            )));
        }
        let centroids = (0..mesh.tet_count())
            .map(|i| mesh.tet_centroid(i))
            .collect();
        let sqrt_volumes = (0..mesh.tet_count())
            .map(|i| mesh.tet_volume(i).sqrt())
            .collect();
        Ok(CovarianceCollocation {
            model,
            centroids,
            sqrt_volumes,
        })
    }

    pub fn sqrt_volume(&self, tet: usize) -> T {
        self.sqrt_volumes[tet]
    }
}

impl<T: Real> SymmetricMatrix<T> for CovarianceCollocation<T> {
    fn dim(&self) -> usize {
        self.centroids.len() * 3
    }

    fn entry(&self, row: usize, col: usize) -> T {
        let (i, a) = (row / 3, row % 3);
        let (j, b) = (col / 3, col % 3);
        if a != b {
            return T::zero();
        }
        let k = self.model.kernel(self.centroids[i], self.centroids[j]);
        self.sqrt_volumes[i] * self.sqrt_volumes[j] * k[a][b]
    }

    fn diag(&self, row: usize) -> T {
        let (i, a) = (row / 3, row % 3);
        let k = self.model.kernel(self.centroids[i], self.centroids[i]);
        self.sqrt_volumes[i] * self.sqrt_volumes[i] * k[a][a]
    }
}
