//! Truncated Karhunen–Loève expansion via pivoted Cholesky factorization
//! with relative trace-error stopping.
//!
//! The factor columns are used directly as the combined modes σ_k ψ_k; no
//! eigendecomposition is performed. The per-level stopping tolerance is
//! 1e-4 · 4^{-level}.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::covariance::{CovarianceCollocation, CovarianceModel};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::TetMesh;
use crate::scalar::{pairwise_sum, real, Real};

/// Symmetric matrix exposed through entry/diagonal evaluation only.
pub trait SymmetricMatrix<T> {
    fn dim(&self) -> usize;
    fn entry(&self, row: usize, col: usize) -> T;
    fn diag(&self, row: usize) -> T;
}

/// Dense symmetric matrix, mainly for tests and small checks.
#[derive(Debug, Clone)]
pub struct DenseSymmetric<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseSymmetric<T> {
    /// Builds from row-major data; the strict lower triangle is ignored and
    /// mirrored from the upper one.
    pub fn from_rows(n: usize, rows: &[T]) -> Self {
        assert_eq!(rows.len(), n * n);
        let mut data = rows.to_vec();
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        DenseSymmetric { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

impl<T: Real> SymmetricMatrix<T> for DenseSymmetric<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn entry(&self, row: usize, col: usize) -> T {
        self.get(row, col)
    }

    fn diag(&self, row: usize) -> T {
        self.get(row, row)
    }
}

/// How a pivoted Cholesky run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative residual trace dropped below the tolerance.
    Tolerance,
    /// The rank cap was reached first; the factor is usable but the
    /// tolerance contract does not hold.
    RankCap,
}

/// Partial Cholesky factor L (column list) of a symmetric PSD matrix.
#[derive(Debug, Clone)]
pub struct LowRankFactor<T> {
    pub columns: Vec<Vec<T>>,
    pub pivot_order: Vec<usize>,
    pub initial_trace: T,
    pub residual_trace: T,
    /// Residual trace after 0, 1, ..., rank steps.
    pub residual_history: Vec<T>,
    pub termination: Termination,
}

impl<T: Real> LowRankFactor<T> {
    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn relative_residual(&self) -> T {
        if self.initial_trace > T::zero() {
            self.residual_trace / self.initial_trace
        } else {
            T::zero()
        }
    }
}

/// Greedy pivoted Cholesky: repeatedly pivots on the largest residual
/// diagonal entry (ties broken by smallest index) until the relative trace
/// error drops below `rel_tol` or `max_rank` columns have been produced.
pub fn pivoted_cholesky<T, M>(matrix: &M, rel_tol: T, max_rank: usize) -> Result<LowRankFactor<T>>
where
    T: Real,
    M: SymmetricMatrix<T> + ?Sized,
{
    if !(rel_tol > T::zero() && rel_tol <= T::one()) {
        return Err(Error::Domain(format!(
            "relative tolerance must lie in (0, 1], got {rel_tol}"
        )));
    }
    if max_rank == 0 {
        return Err(Error::Domain("max_rank must be at least 1".into()));
    }

    let n = matrix.dim();
    let mut diag: Vec<T> = (0..n).map(|i| matrix.diag(i)).collect();
    let initial_trace = pairwise_sum(&diag);
    let neg_tol = real::<T>(1e-12) * initial_trace;
    for (i, d) in diag.iter_mut().enumerate() {
        if *d < -neg_tol {
            return Err(Error::NotPsd(format!(
                "diagonal entry {i} is {d}, below the round-off allowance"
            )));
        }
        if *d < T::zero() {
            *d = T::zero();
        }
    }

    let mut residual = pairwise_sum(&diag);
    let mut history = vec![residual];
    let mut columns: Vec<Vec<T>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();

    if initial_trace <= T::zero() {
        return Ok(LowRankFactor {
            columns,
            pivot_order: pivots,
            initial_trace,
            residual_trace: T::zero(),
            residual_history: history,
            termination: Termination::Tolerance,
        });
    }

    while residual / initial_trace > rel_tol && columns.len() < max_rank {
        // Largest residual diagonal entry, first occurrence on ties.
        let mut pivot = 0usize;
        for i in 1..n {
            if diag[i] > diag[pivot] {
                pivot = i;
            }
        }
        if diag[pivot] <= T::zero() {
            // Numerically exhausted; the residual trace is round-off.
            residual = T::zero();
            history.push(residual);
            break;
        }

        let scale = diag[pivot].sqrt();
        let mut col: Vec<T> = (0..n).map(|i| matrix.entry(i, pivot)).collect();
        for prev in &columns {
            let coeff = prev[pivot];
            for (c, &p) in col.iter_mut().zip(prev.iter()) {
                *c = *c - coeff * p;
            }
        }
        let inv = T::one() / scale;
        for c in col.iter_mut() {
            *c = *c * inv;
        }

        for (i, d) in diag.iter_mut().enumerate() {
            *d = *d - col[i] * col[i];
            if *d < -neg_tol {
                return Err(Error::NotPsd(format!(
                    "residual diagonal entry {i} dropped to {d} after {} steps",
                    columns.len() + 1
                )));
            }
            if *d < T::zero() {
                *d = T::zero();
            }
        }
        diag[pivot] = T::zero();

        columns.push(col);
        pivots.push(pivot);
        residual = pairwise_sum(&diag);
        history.push(residual);
    }

    let termination = if residual / initial_trace <= rel_tol {
        Termination::Tolerance
    } else {
        Termination::RankCap
    };
    Ok(LowRankFactor {
        columns,
        pivot_order: pivots,
        initial_trace,
        residual_trace: residual,
        residual_history: history,
        termination,
    })
}

/// Truncated expansion of the random vector field on a fixed mesh:
/// mode 0 is the mean, modes 1..=M are the combined σ_k ψ_k as piecewise
/// constant vector fields, sampled as mode₀ + Σ_k mode_k·y_k with y uniform
/// on [−1,1]^M.
#[derive(Debug)]
pub struct KlExpansion<T: Real> {
    mesh: Arc<TetMesh<T>>,
    /// modes[k][tet]; modes[0] is the mean field.
    modes: Vec<Vec<Vec3<T>>>,
    /// gamma[k] = max over tets of ‖modes[k]‖₂.
    gamma: Vec<T>,
    residual_rel_trace: T,
    tolerance: T,
}

impl<T: Real> KlExpansion<T> {
    /// Wraps explicitly given mode fields (mode 0 is the mean).
    pub fn from_modes(mesh: Arc<TetMesh<T>>, modes: Vec<Vec<Vec3<T>>>) -> Self {
        assert!(!modes.is_empty(), "a mean mode is required");
        for m in &modes {
            assert_eq!(m.len(), mesh.tet_count());
        }
        let gamma = modes
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&v| geom::norm(v))
                    .fold(T::zero(), |a, b| a.max(b))
            })
            .collect();
        KlExpansion {
            mesh,
            modes,
            gamma,
            residual_rel_trace: T::zero(),
            tolerance: T::one(),
        }
    }

    pub fn mesh(&self) -> &Arc<TetMesh<T>> {
        &self.mesh
    }

    /// Truncation rank M.
    pub fn mode_count(&self) -> usize {
        self.modes.len() - 1
    }

    /// γ₀..γ_M.
    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn residual_rel_trace(&self) -> T {
        self.residual_rel_trace
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    /// Value of mode k on a tetrahedron (k = 0 is the mean).
    pub fn mode_value(&self, k: usize, tet: usize) -> Vec3<T> {
        self.modes[k][tet]
    }

    /// All mode values on one tetrahedron, mean first.
    pub fn modes_at(&self, tet: usize) -> Vec<Vec3<T>> {
        self.modes.iter().map(|m| m[tet]).collect()
    }

    /// Field value on a tetrahedron at parameter y ∈ [−1,1]^M.
    pub fn value_at(&self, tet: usize, y: &[T]) -> Result<Vec3<T>> {
        self.check_parameter(y)?;
        Ok(self.value_at_unchecked(tet, y))
    }

    pub(crate) fn value_at_unchecked(&self, tet: usize, y: &[T]) -> Vec3<T> {
        let mut v = self.modes[0][tet];
        for (k, &yk) in y.iter().enumerate() {
            let m = self.modes[k + 1][tet];
            v = [v[0] + m[0] * yk, v[1] + m[1] * yk, v[2] + m[2] * yk];
        }
        v
    }

    pub(crate) fn check_parameter(&self, y: &[T]) -> Result<()> {
        if y.len() != self.mode_count() {
            return Err(Error::Domain(format!(
                "parameter has dimension {}, expansion has {} modes",
                y.len(),
                self.mode_count()
            )));
        }
        if y.iter().any(|v| v.abs() > T::one()) {
            return Err(Error::Domain(
                "parameter lies outside the cube [-1,1]^M".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the truncated expansion on the given mesh with the per-level
/// relative trace tolerance 1e-4 · 4^{-level}.
pub fn build_kl<T: Real>(
    mesh: &Arc<TetMesh<T>>,
    model: &CovarianceModel<T>,
    level: u32,
) -> Result<KlExpansion<T>> {
    if mesh.level() != level {
        return Err(Error::Structure(format!(
            "mesh has level {}, expected {level}",
            mesh.level()
        )));
    }
    let tolerance = real::<T>(1e-4) * real::<T>(4.0).powi(-(level as i32));
    let colloc = CovarianceCollocation::new(mesh, model.clone())?;
    let max_rank = colloc.dim().min(1024);
    let factor = pivoted_cholesky(&colloc, tolerance, max_rank)?;
    if factor.termination == Termination::RankCap {
        return Err(Error::FactorizationTruncated {
            rank: factor.rank(),
            achieved: factor.relative_residual().to_f64().unwrap_or(f64::NAN),
            tolerance: tolerance.to_f64().unwrap_or(f64::NAN),
        });
    }

    let tet_count = mesh.tet_count();
    let mean: Vec<Vec3<T>> = (0..tet_count)
        .map(|i| model.mean_field(mesh.tet_centroid(i)))
        .collect();

    // Column entries are √volume-weighted; undo that and rescale by √3 so
    // that y_k uniform on [−1,1] carries the variance λ_k.
    let sqrt3: T = real(3.0_f64.sqrt());
    let mut modes = Vec::with_capacity(factor.rank() + 1);
    modes.push(mean);
    let residual_rel = factor.relative_residual();
    for col in factor.columns {
        let mut field = Vec::with_capacity(tet_count);
        for i in 0..tet_count {
            let w = sqrt3 / colloc.sqrt_volume(i);
            field.push([w * col[3 * i], w * col[3 * i + 1], w * col[3 * i + 2]]);
        }
        modes.push(field);
    }

    let gamma: Vec<T> = modes
        .iter()
        .map(|m| {
            m.iter()
                .map(|&v| geom::norm(v))
                .fold(T::zero(), |a, b| a.max(b))
        })
        .collect();

    Ok(KlExpansion {
        mesh: Arc::clone(mesh),
        modes,
        gamma,
        residual_rel_trace: residual_rel,
        tolerance,
    })
}

/// Empirical and certified bounds on ‖V‖₂ over the parameter box.
#[derive(Debug, Clone, Copy)]
pub struct EllipticityEstimate<T> {
    /// Smallest sampled field norm.
    pub probe_min: T,
    /// Largest sampled field norm.
    pub probe_max: T,
    /// max(0, min over tets of ‖mode₀‖ − Σ_{k≥1} ‖mode_k‖): a guaranteed
    /// lower bound when positive.
    pub certified_low: T,
    /// Σ_k γ_k, a guaranteed upper bound.
    pub certified_high: T,
}

impl<T: Real> EllipticityEstimate<T> {
    /// Whether the uniform ellipticity condition is certifiable from the
    /// mode norms alone.
    pub fn is_certified(&self) -> bool {
        self.certified_low > T::zero()
    }
}

/// Probes ‖V(·, y)‖ at `n_probe` random parameters and evaluates the
/// analytic envelope from the per-tetrahedron mode norms.
pub fn ellipticity_bounds<T: Real>(
    kl: &KlExpansion<T>,
    n_probe: usize,
    seed: u64,
) -> Result<EllipticityEstimate<T>> {
    if n_probe == 0 {
        return Err(Error::Domain(
            "at least one probe sample is required".into(),
        ));
    }
    let m = kl.mode_count();
    let tet_count = kl.mesh().tet_count();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut probe_min = T::infinity();
    let mut probe_max = T::neg_infinity();
    let mut y = vec![T::zero(); m];
    for _ in 0..n_probe {
        for yk in y.iter_mut() {
            *yk = real(rng.random_range(-1.0..=1.0));
        }
        for tet in 0..tet_count {
            let n = geom::norm(kl.value_at_unchecked(tet, &y));
            probe_min = probe_min.min(n);
            probe_max = probe_max.max(n);
        }
    }

    let mut worst = T::infinity();
    for tet in 0..tet_count {
        let mut low = geom::norm(kl.mode_value(0, tet));
        for k in 1..=m {
            low = low - geom::norm(kl.mode_value(k, tet));
        }
        worst = worst.min(low);
    }
    let certified_low = worst.max(T::zero());
    let certified_high = pairwise_sum(kl.gamma());

    Ok(EllipticityEstimate {
        probe_min,
        probe_max,
        certified_low,
        certified_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;

    #[test]
    fn hand_example_rank_one() {
        let m = DenseSymmetric::from_rows(2, &[2.0, 1.0, 1.0, 1.0]);
        let f = pivoted_cholesky(&m, 0.2, 10).unwrap();
        assert_eq!(f.rank(), 1);
        assert_eq!(f.pivot_order, vec![0]);
        let c = &f.columns[0];
        assert!((c[0] - 2.0f64.sqrt()).abs() < 1e-14);
        assert!((c[1] - 1.0 / 2.0f64.sqrt()).abs() < 1e-14);
        assert!((f.residual_trace - 0.5).abs() < 1e-14);
        assert!((f.relative_residual() - 0.5 / 3.0).abs() < 1e-14);
        assert_eq!(f.termination, Termination::Tolerance);
    }

    #[test]
    fn exact_rank_one_matrix() {
        let m = DenseSymmetric::from_rows(2, &[4.0f64, 2.0, 2.0, 1.0]);
        let f = pivoted_cholesky(&m, 1e-12, 10).unwrap();
        assert_eq!(f.rank(), 1);
        for i in 0..2 {
            for j in 0..2 {
                let recon = f.columns[0][i] * f.columns[0][j];
                assert!((recon - m.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_full_rank() {
        let m = DenseSymmetric::from_rows(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let f = pivoted_cholesky(&m, 1e-14, 10).unwrap();
        assert_eq!(f.rank(), 3);
        assert_eq!(f.pivot_order, vec![0, 1, 2]);
        for i in 0..3 {
            for j in 0..3 {
                let recon: f64 = f.columns.iter().map(|c| c[i] * c[j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((recon - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let m = DenseSymmetric::from_rows(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            pivoted_cholesky(&m, 1e-10, 10),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn rank_cap_is_a_warning_not_an_error() {
        let m = DenseSymmetric::from_rows(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let f = pivoted_cholesky(&m, 1e-14, 1).unwrap();
        assert_eq!(f.rank(), 1);
        assert_eq!(f.termination, Termination::RankCap);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let m = DenseSymmetric::from_rows(1, &[1.0]);
        assert!(pivoted_cholesky(&m, 0.0, 1).is_err());
        assert!(pivoted_cholesky(&m, 1.5, 1).is_err());
    }

    #[test]
    fn mean_at_zero_parameter() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let kl = build_kl(&mesh, &CovarianceModel::default(), 0).unwrap();
        assert!(kl.mode_count() >= 1);
        assert!(kl.residual_rel_trace() <= 1e-4);
        let y = vec![0.0; kl.mode_count()];
        for tet in [0, 7, 23] {
            let v = kl.value_at(tet, &y).unwrap();
            assert_eq!(v, [1.0, 0.0, 0.0]);
        }
        assert!((kl.gamma()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linearity_in_parameter() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let kl = build_kl(&mesh, &CovarianceModel::default(), 0).unwrap();
        let m = kl.mode_count();
        let mut plus = vec![0.0; m];
        plus[0] = 1.0;
        let mut minus = vec![0.0; m];
        minus[0] = -1.0;
        for tet in 0..mesh.tet_count() {
            let vp = kl.value_at(tet, &plus).unwrap();
            let vm = kl.value_at(tet, &minus).unwrap();
            let mode = kl.mode_value(1, tet);
            for c in 0..3 {
                assert!((0.5 * (vp[c] - vm[c]) - mode[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_parameter_outside_cube() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let kl = build_kl(&mesh, &CovarianceModel::default(), 0).unwrap();
        let mut y = vec![0.0; kl.mode_count()];
        y[0] = 1.5;
        assert!(kl.value_at(0, &y).is_err());
    }

    #[test]
    fn constant_field_ellipticity() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let modes = vec![vec![[1.0, 0.0, 0.0]; mesh.tet_count()]];
        let kl = KlExpansion::from_modes(Arc::clone(&mesh), modes);
        let est = ellipticity_bounds(&kl, 5, 7).unwrap();
        assert!((est.probe_min - 1.0).abs() < 1e-15);
        assert!((est.probe_max - 1.0).abs() < 1e-15);
        assert!((est.certified_low - 1.0).abs() < 1e-15);
        assert!(est.is_certified());
        assert!(est.probe_min <= est.probe_max);
    }
}
