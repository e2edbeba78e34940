//! P1 finite elements on tetrahedral meshes: assembly of the stiffness
//! system for an element-wise constant diffusion tensor, conjugate gradient
//! solution, and the discrete norms used by the convergence studies.
//!
//! Since the diffusion tensor and the P1 gradients are constant per element,
//! all stiffness and load integrals are exact. Dirichlet conditions are
//! eliminated symmetrically (zero boundary values); pure Neumann problems
//! keep the singular system and project the discrete constant out of the
//! iterates instead.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};
use crate::kl::KlExpansion;
use crate::mesh::{BoundaryTag, TetMesh};
use crate::scalar::{real, Real};

pub const DEFAULT_CG_RTOL: f64 = 1e-10;
pub const DEFAULT_CG_MAX_ITER: usize = 50_000;

/// Nodal P1 scalar field on a mesh.
#[derive(Debug, Clone)]
pub struct FeFunction<T: Real> {
    mesh: Arc<TetMesh<T>>,
    values: Vec<T>,
}

/// Which norm `FeFunction::norm` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    H1Semi,
    W11,
}

impl<T: Real> FeFunction<T> {
    pub fn new(mesh: Arc<TetMesh<T>>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), mesh.vertex_count());
        FeFunction { mesh, values }
    }

    pub fn zero(mesh: Arc<TetMesh<T>>) -> Self {
        let n = mesh.vertex_count();
        FeFunction {
            mesh,
            values: vec![T::zero(); n],
        }
    }

    /// Nodal interpolant of a pointwise function.
    pub fn interpolate(mesh: Arc<TetMesh<T>>, f: impl Fn(Vec3<T>) -> T) -> Self {
        let values = mesh.vertices().iter().map(|&v| f(v)).collect();
        FeFunction { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<TetMesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Mass-weighted mean (u, 1)_{L²}.
    pub fn weighted_mean(&self) -> T {
        let quarter: T = real(0.25);
        let mut acc = T::zero();
        for (t, tet) in self.mesh.tets().iter().enumerate() {
            let w = self.mesh.tet_volume(t) * quarter;
            for &v in tet {
                acc = acc + w * self.values[v];
            }
        }
        acc
    }

    /// Nodal difference on the same mesh.
    pub fn sub(&self, other: &FeFunction<T>) -> FeFunction<T> {
        assert!(Arc::ptr_eq(&self.mesh, &other.mesh) || self.values.len() == other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        FeFunction {
            mesh: Arc::clone(&self.mesh),
            values,
        }
    }

    pub fn norm(&self, kind: NormKind) -> T {
        match kind {
            NormKind::L2 => self.l2_sq().sqrt(),
            NormKind::H1Semi => self.h1_semi_sq().sqrt(),
            NormKind::H1 => (self.l2_sq() + self.h1_semi_sq()).sqrt(),
            NormKind::W11 => self.w11(),
        }
    }

    fn l2_sq(&self) -> T {
        // Consistent P1 mass: ∫(Σuᵢφᵢ)² = |T|/20·[(Σuᵢ)² + Σuᵢ²].
        let twentieth: T = real(0.05);
        let mut acc = T::zero();
        for (t, tet) in self.mesh.tets().iter().enumerate() {
            let vol = self.mesh.tet_volume(t);
            let mut sum = T::zero();
            let mut sq = T::zero();
            for &v in tet {
                let u = self.values[v];
                sum = sum + u;
                sq = sq + u * u;
            }
            acc = acc + vol * twentieth * (sum * sum + sq);
        }
        acc
    }

    fn h1_semi_sq(&self) -> T {
        let mut acc = T::zero();
        for (t, tet) in self.mesh.tets().iter().enumerate() {
            let (grads, vol) = element_gradients(&self.mesh, t);
            let mut g = [T::zero(); 3];
            for (k, &v) in tet.iter().enumerate() {
                g = geom::add(g, geom::scale(self.values[v], grads[k]));
            }
            acc = acc + vol * geom::dot(g, g);
        }
        acc
    }

    fn w11(&self) -> T {
        // ∫|u| by vertex quadrature (exact when u does not change sign on an
        // element), plus ∫‖∇u‖₂ exactly.
        let quarter: T = real(0.25);
        let mut acc = T::zero();
        for (t, tet) in self.mesh.tets().iter().enumerate() {
            let (grads, vol) = element_gradients(&self.mesh, t);
            let mut g = [T::zero(); 3];
            let mut abs_sum = T::zero();
            for (k, &v) in tet.iter().enumerate() {
                g = geom::add(g, geom::scale(self.values[v], grads[k]));
                abs_sum = abs_sum + self.values[v].abs();
            }
            acc = acc + vol * (quarter * abs_sum + geom::norm(g));
        }
        acc
    }
}

/// Constant source, per-tag constant conormal data, and the Dirichlet tags.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpData<T> {
    pub source: T,
    /// Conormal datum per boundary tag (only used on non-Dirichlet tags).
    pub neumann: [T; 3],
    /// Which tags carry the homogeneous Dirichlet condition.
    pub dirichlet: [bool; 3],
}

impl<T: Real> BvpData<T> {
    /// Source ≡ 1 with homogeneous Dirichlet conditions on the whole boundary.
    pub fn example1() -> Self {
        BvpData {
            source: T::one(),
            neumann: [T::zero(); 3],
            dirichlet: [true, true, true],
        }
    }

    /// No source, conormal data +1 on Γ₀ and −1 on Γ₁, Dirichlet on Γ₂.
    pub fn example2() -> Self {
        BvpData {
            source: T::zero(),
            neumann: [T::one(), -T::one(), T::zero()],
            dirichlet: [false, false, true],
        }
    }

    /// The pure Neumann patch test: conormal data n₁ on the whole boundary.
    pub fn linear_patch() -> Self {
        BvpData {
            source: T::zero(),
            neumann: [T::one(), -T::one(), T::zero()],
            dirichlet: [false, false, false],
        }
    }

    pub fn is_pure_neumann(&self) -> bool {
        self.dirichlet.iter().all(|&d| !d)
    }

    pub fn dirichlet_tags(&self) -> Vec<BoundaryTag> {
        BoundaryTag::ALL
            .into_iter()
            .filter(|t| self.dirichlet[t.index()])
            .collect()
    }

    /// ∫f + ∫_{Γ_N} g, which must vanish for pure Neumann problems.
    fn compatibility_defect(&self, mesh: &TetMesh<T>) -> T {
        let mut total = self.source * mesh.total_volume();
        for tag in BoundaryTag::ALL {
            if !self.dirichlet[tag.index()] {
                total = total + self.neumann[tag.index()] * mesh.boundary_area(tag);
            }
        }
        total
    }
}

/// Gradients of the four barycentric basis functions and the volume.
fn element_gradients<T: Real>(mesh: &TetMesh<T>, tet: usize) -> ([Vec3<T>; 4], T) {
    let [a, b, c, d] = mesh.tets()[tet];
    let p0 = mesh.vertices()[a];
    let e1 = geom::sub(mesh.vertices()[b], p0);
    let e2 = geom::sub(mesh.vertices()[c], p0);
    let e3 = geom::sub(mesh.vertices()[d], p0);
    let det = geom::det3([e1, e2, e3]);
    let vol = det / real::<T>(6.0);
    // Rows of the inverse Jacobian via the adjugate.
    let inv_det = T::one() / det;
    let g1 = geom::scale(inv_det, geom::cross(e2, e3));
    let g2 = geom::scale(inv_det, geom::cross(e3, e1));
    let g3 = geom::scale(inv_det, geom::cross(e1, e2));
    let g0 = geom::scale(-T::one(), geom::add(geom::add(g1, g2), g3));
    ([g0, g1, g2, g3], vol)
}

/// Exact P1 element stiffness |T|·∇φᵢᵀ A ∇φⱼ for a constant tensor.
pub fn element_stiffness<T: Real>(vertices: [Vec3<T>; 4], tensor: Mat3<T>) -> [[T; 4]; 4] {
    let p0 = vertices[0];
    let e1 = geom::sub(vertices[1], p0);
    let e2 = geom::sub(vertices[2], p0);
    let e3 = geom::sub(vertices[3], p0);
    let det = geom::det3([e1, e2, e3]);
    let vol = det / real::<T>(6.0);
    let inv_det = T::one() / det;
    let g1 = geom::scale(inv_det, geom::cross(e2, e3));
    let g2 = geom::scale(inv_det, geom::cross(e3, e1));
    let g3 = geom::scale(inv_det, geom::cross(e1, e2));
    let g0 = geom::scale(-T::one(), geom::add(geom::add(g1, g2), g3));
    let grads = [g0, g1, g2, g3];
    let mut k = [[T::zero(); 4]; 4];
    for i in 0..4 {
        let agi = geom::mat_vec(tensor, grads[i]);
        for j in 0..4 {
            k[i][j] = vol * geom::dot(grads[j], agi);
        }
    }
    k
}

fn check_spd<T: Real>(m: &Mat3<T>, tet: usize) -> Result<()> {
    let tol = real::<T>(1e-12) * geom::frobenius(*m).max(T::one());
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (m[i][j] - m[j][i]).abs() > tol {
                return Err(Error::NotPsd(format!(
                    "element tensor on tet {tet} is not symmetric"
                )));
            }
        }
    }
    let m1 = m[0][0];
    let m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let m3 = geom::det3(*m);
    if !(m1 > T::zero() && m2 > T::zero() && m3 > T::zero()) {
        return Err(Error::NotPsd(format!(
            "element tensor on tet {tet} is not positive definite"
        )));
    }
    Ok(())
}

/// Everything about the discrete system that does not depend on the sampled
/// tensor: sparsity pattern, element geometry, constraints, and load.
pub struct AssemblyCache<T: Real> {
    mesh: Arc<TetMesh<T>>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// Slot of entry (tet-local i, tet-local j) in the CSR value array.
    tet_slots: Vec<[usize; 16]>,
    grads: Vec<[Vec3<T>; 4]>,
    vols: Vec<T>,
    constrained: Vec<bool>,
    /// Value slots zeroed by the symmetric Dirichlet elimination.
    zero_slots: Vec<usize>,
    /// Diagonal slots of constrained rows (set to one).
    unit_diag_slots: Vec<usize>,
    /// Assembled load with constrained entries already zeroed.
    rhs: Vec<T>,
    /// ∫φᵢ, the weights of the discrete mean.
    nodal_weights: Vec<T>,
    pure_neumann: bool,
}

impl<T: Real> AssemblyCache<T> {
    pub fn build(mesh: &Arc<TetMesh<T>>, bvp: &BvpData<T>) -> Result<Self> {
        let n = mesh.vertex_count();
        let pure_neumann = bvp.is_pure_neumann();
        if pure_neumann {
            let defect = bvp.compatibility_defect(mesh);
            let scale = T::one()
                .max(bvp.source.abs())
                .max(bvp.neumann.iter().fold(T::zero(), |a, &g| a.max(g.abs())));
            if defect.abs() > real::<T>(1e-10) * scale {
                return Err(Error::Domain(format!(
                    "pure Neumann data violate the compatibility condition: defect {defect}"
                )));
            }
        }

        // Adjacency (vertex stars) → CSR pattern.
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tet in mesh.tets() {
            for &i in tet {
                for &j in tet {
                    neighbors[i].push(j);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for list in neighbors.iter_mut() {
            list.sort_unstable();
            list.dedup();
            col_idx.extend_from_slice(list);
            row_ptr.push(col_idx.len());
        }

        let slot_of = |row: usize, col: usize| -> usize {
            let lo = row_ptr[row];
            let hi = row_ptr[row + 1];
            lo + col_idx[lo..hi]
                .binary_search(&col)
                .expect("entry in pattern")
        };

        let mut tet_slots = Vec::with_capacity(mesh.tet_count());
        let mut grads = Vec::with_capacity(mesh.tet_count());
        let mut vols = Vec::with_capacity(mesh.tet_count());
        for (t, tet) in mesh.tets().iter().enumerate() {
            let mut slots = [0usize; 16];
            for (li, &i) in tet.iter().enumerate() {
                for (lj, &j) in tet.iter().enumerate() {
                    slots[li * 4 + lj] = slot_of(i, j);
                }
            }
            tet_slots.push(slots);
            let (g, vol) = element_gradients(mesh, t);
            grads.push(g);
            vols.push(vol);
        }

        let constrained = mesh.boundary_vertices(&bvp.dirichlet_tags());

        let mut zero_slots = Vec::new();
        let mut unit_diag_slots = Vec::new();
        for row in 0..n {
            for s in row_ptr[row]..row_ptr[row + 1] {
                let col = col_idx[s];
                if constrained[row] {
                    if col == row {
                        unit_diag_slots.push(s);
                    } else {
                        zero_slots.push(s);
                    }
                } else if constrained[col] {
                    zero_slots.push(s);
                }
            }
        }

        // Exact load: |T|/4 per vertex for the constant source, area/3 per
        // vertex for the per-tag constant conormal data.
        let quarter: T = real(0.25);
        let third: T = T::one() / real::<T>(3.0);
        let mut rhs = vec![T::zero(); n];
        let mut nodal_weights = vec![T::zero(); n];
        for (t, tet) in mesh.tets().iter().enumerate() {
            let w = vols[t] * quarter;
            for &v in tet {
                nodal_weights[v] = nodal_weights[v] + w;
                rhs[v] = rhs[v] + bvp.source * w;
            }
        }
        for face in mesh.boundary_faces() {
            if bvp.dirichlet[face.tag.index()] {
                continue;
            }
            let g = bvp.neumann[face.tag.index()];
            if g == T::zero() {
                continue;
            }
            let w = mesh.face_area(face) * third * g;
            for &v in &face.vertices {
                rhs[v] = rhs[v] + w;
            }
        }
        for (v, flag) in constrained.iter().enumerate() {
            if *flag {
                rhs[v] = T::zero();
            }
        }

        Ok(AssemblyCache {
            mesh: Arc::clone(mesh),
            row_ptr,
            col_idx,
            tet_slots,
            grads,
            vols,
            constrained,
            zero_slots,
            unit_diag_slots,
            rhs,
            nodal_weights,
            pure_neumann,
        })
    }

    pub fn mesh(&self) -> &Arc<TetMesh<T>> {
        &self.mesh
    }

    /// Fills the stiffness values for the given per-element tensors and
    /// applies the constraints.
    pub fn assemble_values(&self, tensor_of: impl Fn(usize) -> Result<Mat3<T>>) -> Result<Vec<T>> {
        let mut values = vec![T::zero(); self.col_idx.len()];
        for (t, slots) in self.tet_slots.iter().enumerate() {
            let tensor = tensor_of(t)?;
            check_spd(&tensor, t)?;
            let grads = &self.grads[t];
            let vol = self.vols[t];
            for i in 0..4 {
                let agi = geom::mat_vec(tensor, grads[i]);
                for j in 0..4 {
                    let k = vol * geom::dot(grads[j], agi);
                    values[slots[i * 4 + j]] = values[slots[i * 4 + j]] + k;
                }
            }
        }
        for &s in &self.zero_slots {
            values[s] = T::zero();
        }
        for &s in &self.unit_diag_slots {
            values[s] = T::one();
        }
        Ok(values)
    }
}

/// Assembled, constrained sparse SPD system.
pub struct FemSystem<T: Real> {
    cache: Arc<AssemblyCache<T>>,
    values: Vec<T>,
    rhs: Vec<T>,
}

impl<T: Real> FemSystem<T> {
    pub fn mesh(&self) -> &Arc<TetMesh<T>> {
        &self.cache.mesh
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn constrained(&self) -> &[bool] {
        &self.cache.constrained
    }

    pub fn is_pure_neumann(&self) -> bool {
        self.cache.pure_neumann
    }

    pub fn multiply(&self, x: &[T]) -> Vec<T> {
        let n = self.rhs.len();
        let mut out = vec![T::zero(); n];
        for row in 0..n {
            let mut acc = T::zero();
            for s in self.cache.row_ptr[row]..self.cache.row_ptr[row + 1] {
                acc = acc + self.values[s] * x[self.cache.col_idx[s]];
            }
            out[row] = acc;
        }
        out
    }

    pub fn residual(&self, x: &[T]) -> Vec<T> {
        let ax = self.multiply(x);
        self.rhs.iter().zip(ax).map(|(&b, a)| b - a).collect()
    }

    fn diagonal(&self) -> Vec<T> {
        let n = self.rhs.len();
        let mut diag = vec![T::one(); n];
        for row in 0..n {
            for s in self.cache.row_ptr[row]..self.cache.row_ptr[row + 1] {
                if self.cache.col_idx[s] == row {
                    diag[row] = self.values[s];
                }
            }
        }
        diag
    }
}

/// Assembles the stiffness system for explicitly given per-element tensors.
pub fn assemble_system<T: Real>(
    mesh: &Arc<TetMesh<T>>,
    tensors: &[Mat3<T>],
    bvp: &BvpData<T>,
) -> Result<FemSystem<T>> {
    if tensors.len() != mesh.tet_count() {
        return Err(Error::Structure(format!(
            "{} tensors for {} tetrahedra",
            tensors.len(),
            mesh.tet_count()
        )));
    }
    let cache = Arc::new(AssemblyCache::build(mesh, bvp)?);
    let values = cache.assemble_values(|t| Ok(tensors[t]))?;
    let rhs = cache.rhs.clone();
    Ok(FemSystem { cache, values, rhs })
}

fn dot_vec<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn project_mean<T: Real>(v: &mut [T], weights: &[T]) {
    // Remove the weighted-mean component along the constant.
    let wsum: T = weights.iter().copied().sum();
    let mean = dot_vec(v, weights) / wsum;
    for x in v.iter_mut() {
        *x = *x - mean;
    }
}

/// Jacobi-preconditioned conjugate gradients on an abstract SPD operator,
/// down to a relative residual. When `mean_weights` is given, the system is
/// treated as singular along the constant vector, which is projected out of
/// the iterates after every update.
pub fn cg_solve<T: Real>(
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    diag: &[T],
    mean_weights: Option<&[T]>,
    rtol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let mut b = b.to_vec();
    let ones = vec![T::one(); n];
    if mean_weights.is_some() {
        // Kill the (round-off sized) incompatible component of the load.
        project_mean(&mut b, &ones);
    }

    let bnorm = dot_vec(&b, &b).sqrt();
    if bnorm == T::zero() {
        return Ok(vec![T::zero(); n]);
    }

    let inv_diag: Vec<T> = diag.iter().map(|&d| T::one() / d).collect();
    let mut x = vec![T::zero(); n];
    let mut r = b;
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot_vec(&r, &z);

    let finalize = |mut x: Vec<T>| {
        if let Some(w) = mean_weights {
            project_mean(&mut x, w);
        }
        x
    };

    for _iter in 0..max_iter {
        let rnorm = dot_vec(&r, &r).sqrt();
        if rnorm <= rtol * bnorm {
            return Ok(finalize(x));
        }

        let ap = apply(&p);
        let pap = dot_vec(&p, &ap);
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        if let Some(w) = mean_weights {
            project_mean(&mut x, w);
            project_mean(&mut r, &ones);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot_vec(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }

    let rnorm = dot_vec(&r, &r).sqrt();
    if rnorm <= rtol * bnorm {
        return Ok(finalize(x));
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: (rnorm / bnorm).to_f64().unwrap_or(f64::NAN),
        tolerance: rtol.to_f64().unwrap_or(f64::NAN),
    })
}

/// Solves the assembled system by conjugate gradients.
pub fn solve_cg<T: Real>(system: &FemSystem<T>, rtol: T, max_iter: usize) -> Result<FeFunction<T>> {
    let mesh = Arc::clone(&system.cache.mesh);
    let diag = system.diagonal();
    let weights = system
        .cache
        .pure_neumann
        .then_some(system.cache.nodal_weights.as_slice());
    let x = cg_solve(
        |v: &[T]| system.multiply(v),
        &system.rhs,
        &diag,
        weights,
        rtol,
        max_iter,
    )?;
    Ok(FeFunction::new(mesh, x))
}

/// Reusable per-sample solver: mesh geometry, sparsity pattern, constraints
/// and load are shared across samples; only the tensor values change.
pub struct SampleSolver<'a, T: Real> {
    kl: &'a KlExpansion<T>,
    a: T,
    cache: Arc<AssemblyCache<T>>,
    rtol: T,
    max_iter: usize,
}

impl<'a, T: Real> SampleSolver<'a, T> {
    pub fn new(
        kl: &'a KlExpansion<T>,
        a: T,
        bvp: &BvpData<T>,
        rtol: T,
        max_iter: usize,
    ) -> Result<Self> {
        let cache = Arc::new(AssemblyCache::build(kl.mesh(), bvp)?);
        Ok(SampleSolver {
            kl,
            a,
            cache,
            rtol,
            max_iter,
        })
    }

    pub fn solve(&self, y: &[T]) -> Result<FeFunction<T>> {
        self.kl.check_parameter(y)?;
        let values = self.cache.assemble_values(|t| {
            diffusion_tensor_checked(self.kl.value_at_unchecked(t, y), self.a)
        })?;
        let system = FemSystem {
            cache: Arc::clone(&self.cache),
            values,
            rhs: self.cache.rhs.clone(),
        };
        solve_cg(&system, self.rtol, self.max_iter)
    }
}

fn diffusion_tensor_checked<T: Real>(v: Vec3<T>, a: T) -> Result<Mat3<T>> {
    crate::diffusion::diffusion_tensor(v, a)
}

/// One-shot sample solve: realize the field at y, build the per-element
/// tensors, assemble, and solve.
pub fn solve_sample<T: Real>(
    kl: &KlExpansion<T>,
    a: T,
    y: &[T],
    bvp: &BvpData<T>,
    rtol: T,
    max_iter: usize,
) -> Result<FeFunction<T>> {
    SampleSolver::new(kl, a, bvp, rtol, max_iter)?.solve(y)
}
