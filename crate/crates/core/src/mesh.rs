//! Tetrahedral meshes of the unit cube (0,1)³.
//!
//! Level 0 splits a 2×2×2 cube grid into 6 tetrahedra per cube (Kuhn
//! subdivision, all cells sharing the same main diagonal direction), giving
//! 48 tetrahedra. Each refinement cuts every tetrahedron into 8 children:
//! 4 corner tetrahedra plus the inner octahedron split along the fixed
//! diagonal between the midpoints of edges (v0,v1) and (v2,v3). Meshes are
//! geometrically nested, so piecewise linear functions prolong exactly.
//!
//! All vertex coordinates are dyadic rationals; an integer lattice copy of
//! every vertex is kept so that deduplication and orientation checks are
//! exact.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::FeFunction;
use crate::geom::{self, Vec3};
use crate::scalar::{real, Real};

/// Hard cap on the refinement level (level 8 already has ~805M tetrahedra).
pub const MAX_LEVEL: u32 = 8;

/// Boundary part of ∂D: the face x₁=1, the face x₁=0, or the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Gamma0,
    Gamma1,
    Gamma2,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 3] = [
        BoundaryTag::Gamma0,
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma2,
    ];

    pub fn index(self) -> usize {
        match self {
            BoundaryTag::Gamma0 => 0,
            BoundaryTag::Gamma1 => 1,
            BoundaryTag::Gamma2 => 2,
        }
    }
}

impl std::fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryTag::Gamma0 => write!(f, "Gamma0"),
            BoundaryTag::Gamma1 => write!(f, "Gamma1"),
            BoundaryTag::Gamma2 => write!(f, "Gamma2"),
        }
    }
}

/// Classifies a point on ∂D by the face plane it lies in: x₁=1 is Gamma0,
/// x₁=0 is Gamma1, everything else on the boundary is Gamma2.
pub fn classify_boundary_face<T: Real>(centroid: Vec3<T>) -> Result<BoundaryTag> {
    let tol: T = real(1e-12);
    let one = T::one();
    let inside = centroid.iter().all(|&c| c >= -tol && c <= one + tol);
    if !inside {
        return Err(Error::Domain(format!(
            "point ({:?}) lies outside the closed unit cube",
            centroid
        )));
    }
    if (centroid[0] - one).abs() <= tol {
        return Ok(BoundaryTag::Gamma0);
    }
    if centroid[0].abs() <= tol {
        return Ok(BoundaryTag::Gamma1);
    }
    let on_other_face = centroid[1].abs() <= tol
        || (centroid[1] - one).abs() <= tol
        || centroid[2].abs() <= tol
        || (centroid[2] - one).abs() <= tol;
    if on_other_face {
        Ok(BoundaryTag::Gamma2)
    } else {
        Err(Error::Domain(format!(
            "point ({:?}) does not lie on the boundary of the unit cube",
            centroid
        )))
    }
}

/// A boundary triangle with its part tag.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub vertices: [usize; 3],
    pub tag: BoundaryTag,
}

/// Nested tetrahedral mesh of the unit cube.
///
/// Immutable once built; share it through the `Arc` returned by the
/// constructors.
#[derive(Debug)]
pub struct TetMesh<T: Real> {
    level: u32,
    vertices: Vec<Vec3<T>>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<BoundaryFace>,
    parent: Option<Arc<TetMesh<T>>>,
    /// Integer lattice coordinates of all vertices, scaled by 2^lattice_log2.
    lattice: Vec<[u32; 3]>,
    lattice_log2: u32,
    /// For vertices introduced by the last refinement: the endpoints (in both
    /// parent and child indexing) of the parent edge they bisect.
    midpoint_sources: Vec<(usize, usize)>,
}

impl<T: Real> TetMesh<T> {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn parent(&self) -> Option<&Arc<TetMesh<T>>> {
        self.parent.as_ref()
    }

    pub fn tet_volume(&self, tet: usize) -> T {
        let [a, b, c, d] = self.tets[tet];
        geom::tet_signed_volume(
            self.vertices[a],
            self.vertices[b],
            self.vertices[c],
            self.vertices[d],
        )
    }

    pub fn tet_centroid(&self, tet: usize) -> Vec3<T> {
        let [a, b, c, d] = self.tets[tet];
        let quarter: T = real(0.25);
        let mut c0 = [T::zero(); 3];
        for v in [a, b, c, d] {
            c0 = geom::add(c0, self.vertices[v]);
        }
        geom::scale(quarter, c0)
    }

    pub fn total_volume(&self) -> T {
        let vols: Vec<T> = (0..self.tet_count()).map(|i| self.tet_volume(i)).collect();
        crate::scalar::pairwise_sum(&vols)
    }

    pub fn face_area(&self, face: &BoundaryFace) -> T {
        let [a, b, c] = face.vertices;
        geom::triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Total boundary area carrying the given tag.
    pub fn boundary_area(&self, tag: BoundaryTag) -> T {
        let areas: Vec<T> = self
            .boundary_faces
            .iter()
            .filter(|f| f.tag == tag)
            .map(|f| self.face_area(f))
            .collect();
        crate::scalar::pairwise_sum(&areas)
    }

    /// Vertices lying on a boundary face whose tag is in `tags`.
    pub fn boundary_vertices(&self, tags: &[BoundaryTag]) -> Vec<bool> {
        let mut marked = vec![false; self.vertex_count()];
        for face in &self.boundary_faces {
            if tags.contains(&face.tag) {
                for &v in &face.vertices {
                    marked[v] = true;
                }
            }
        }
        marked
    }

    fn same_discretization(&self, other: &TetMesh<T>) -> bool {
        self.level == other.level && self.lattice == other.lattice && self.tets == other.tets
    }
}

fn lattice_to_coord<T: Real>(lat: [u32; 3], log2: u32) -> Vec3<T> {
    let den = T::from_u32(1u32 << log2).unwrap();
    [
        T::from_u32(lat[0]).unwrap() / den,
        T::from_u32(lat[1]).unwrap() / den,
        T::from_u32(lat[2]).unwrap() / den,
    ]
}

fn lattice_signed_volume(l: &[[u32; 3]], tet: [usize; 4]) -> i64 {
    let d = |i: usize, k: usize| l[tet[i]][k] as i64 - l[tet[0]][k] as i64;
    let m = [
        [d(1, 0), d(1, 1), d(1, 2)],
        [d(2, 0), d(2, 1), d(2, 2)],
        [d(3, 0), d(3, 1), d(3, 2)],
    ];
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn orient_positive(lattice: &[[u32; 3]], tet: &mut [usize; 4]) {
    let vol = lattice_signed_volume(lattice, *tet);
    debug_assert!(vol != 0, "degenerate tetrahedron");
    if vol < 0 {
        tet.swap(2, 3);
    }
}

/// Builds the level-0 mesh: the 2×2×2 cube grid with every cube cut into the
/// 6 Kuhn tetrahedra 0 ≤ x_{π(1)} ≤ x_{π(2)} ≤ x_{π(3)} ≤ 1.
fn build_level0<T: Real>() -> TetMesh<T> {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];

    let mut lattice: Vec<[u32; 3]> = Vec::new();
    let mut index: HashMap<[u32; 3], usize> = HashMap::new();
    let mut vertex_of = |lat: [u32; 3], lattice: &mut Vec<[u32; 3]>| -> usize {
        *index.entry(lat).or_insert_with(|| {
            lattice.push(lat);
            lattice.len() - 1
        })
    };

    let mut tets = Vec::with_capacity(48);
    for cx in 0..2u32 {
        for cy in 0..2u32 {
            for cz in 0..2u32 {
                let base = [cx, cy, cz];
                for perm in PERMS {
                    let mut corner = base;
                    let mut tet = [0usize; 4];
                    tet[0] = vertex_of(corner, &mut lattice);
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = vertex_of(corner, &mut lattice);
                    }
                    orient_positive(&lattice, &mut tet);
                    tets.push(tet);
                }
            }
        }
    }

    let vertices: Vec<Vec3<T>> = lattice.iter().map(|&l| lattice_to_coord(l, 1)).collect();

    // A face shared by two tetrahedra is interior; singly owned faces form ∂D.
    let mut face_count: HashMap<[usize; 3], u32> = HashMap::new();
    for tet in &tets {
        for f in tet_faces(tet) {
            *face_count.entry(sorted3(f)).or_insert(0) += 1;
        }
    }
    let mut boundary_faces = Vec::new();
    for tet in &tets {
        for f in tet_faces(tet) {
            if face_count[&sorted3(f)] == 1 {
                let centroid = triangle_centroid(&vertices, f);
                let tag =
                    classify_boundary_face(centroid).expect("boundary face centroid must classify");
                boundary_faces.push(BoundaryFace { vertices: f, tag });
            }
        }
    }

    TetMesh {
        level: 0,
        vertices,
        tets,
        boundary_faces,
        parent: None,
        lattice,
        lattice_log2: 1,
        midpoint_sources: Vec::new(),
    }
}

fn tet_faces(tet: &[usize; 4]) -> [[usize; 3]; 4] {
    [
        [tet[1], tet[2], tet[3]],
        [tet[0], tet[2], tet[3]],
        [tet[0], tet[1], tet[3]],
        [tet[0], tet[1], tet[2]],
    ]
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

fn triangle_centroid<T: Real>(vertices: &[Vec3<T>], f: [usize; 3]) -> Vec3<T> {
    let third: T = T::one() / real(3.0);
    let s = geom::add(geom::add(vertices[f[0]], vertices[f[1]]), vertices[f[2]]);
    geom::scale(third, s)
}

/// Builds the level-`level` mesh by refining the level-0 mesh `level` times,
/// keeping the whole parent chain.
pub fn build_cube_mesh<T: Real>(level: u32) -> Result<Arc<TetMesh<T>>> {
    if level > MAX_LEVEL {
        return Err(Error::ResourceLimit(format!(
            "mesh level {level} exceeds the maximum of {MAX_LEVEL}"
        )));
    }
    let mut mesh = Arc::new(build_level0());
    for _ in 0..level {
        mesh = refine(&mesh)?;
    }
    Ok(mesh)
}

/// Cuts every tetrahedron into 8 children. The inner octahedron is always
/// split along the diagonal joining the midpoints of edges (v0,v1) and
/// (v2,v3) of the parent.
pub fn refine<T: Real>(mesh: &Arc<TetMesh<T>>) -> Result<Arc<TetMesh<T>>> {
    if mesh.level + 1 > MAX_LEVEL {
        return Err(Error::ResourceLimit(format!(
            "refinement beyond level {MAX_LEVEL} is not supported"
        )));
    }
    let log2 = mesh.lattice_log2 + 1;

    // Parent vertices keep their indices; their lattice coordinates double.
    let mut lattice: Vec<[u32; 3]> = mesh
        .lattice
        .iter()
        .map(|l| [l[0] * 2, l[1] * 2, l[2] * 2])
        .collect();
    let mut vertices: Vec<Vec3<T>> = mesh.vertices.clone();
    let mut midpoint_sources: Vec<(usize, usize)> = Vec::new();

    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize,
                        b: usize,
                        lattice: &mut Vec<[u32; 3]>,
                        vertices: &mut Vec<Vec3<T>>,
                        midpoint_sources: &mut Vec<(usize, usize)>|
     -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        *midpoints.entry(key).or_insert_with(|| {
            let la = lattice[a];
            let lb = lattice[b];
            let lm = [
                (la[0] + lb[0]) / 2,
                (la[1] + lb[1]) / 2,
                (la[2] + lb[2]) / 2,
            ];
            lattice.push(lm);
            vertices.push(lattice_to_coord(lm, log2));
            midpoint_sources.push(key);
            lattice.len() - 1
        })
    };

    let mut tets = Vec::with_capacity(mesh.tet_count() * 8);
    for tet in &mesh.tets {
        let [v0, v1, v2, v3] = *tet;
        let m01 = midpoint(v0, v1, &mut lattice, &mut vertices, &mut midpoint_sources);
        let m02 = midpoint(v0, v2, &mut lattice, &mut vertices, &mut midpoint_sources);
        let m03 = midpoint(v0, v3, &mut lattice, &mut vertices, &mut midpoint_sources);
        let m12 = midpoint(v1, v2, &mut lattice, &mut vertices, &mut midpoint_sources);
        let m13 = midpoint(v1, v3, &mut lattice, &mut vertices, &mut midpoint_sources);
        let m23 = midpoint(v2, v3, &mut lattice, &mut vertices, &mut midpoint_sources);

        // 4 corner children, then the octahedron around the m01-m23 diagonal
        // with its equator cycle m02 → m03 → m13 → m12.
        let children = [
            [v0, m01, m02, m03],
            [m01, v1, m12, m13],
            [m02, m12, v2, m23],
            [m03, m13, m23, v3],
            [m01, m23, m02, m03],
            [m01, m23, m03, m13],
            [m01, m23, m13, m12],
            [m01, m23, m12, m02],
        ];
        for mut child in children {
            orient_positive(&lattice, &mut child);
            tets.push(child);
        }
    }

    let mut boundary_faces = Vec::with_capacity(mesh.boundary_faces.len() * 4);
    for face in &mesh.boundary_faces {
        let [a, b, c] = face.vertices;
        // All face edges are tetrahedron edges, so their midpoints exist.
        let mab = midpoints[&ordered(a, b)];
        let mac = midpoints[&ordered(a, c)];
        let mbc = midpoints[&ordered(b, c)];
        for child in [[a, mab, mac], [mab, b, mbc], [mac, mbc, c], [mab, mbc, mac]] {
            boundary_faces.push(BoundaryFace {
                vertices: child,
                tag: face.tag,
            });
        }
    }

    Ok(Arc::new(TetMesh {
        level: mesh.level + 1,
        vertices,
        tets,
        boundary_faces,
        parent: Some(Arc::clone(mesh)),
        lattice,
        lattice_log2: log2,
        midpoint_sources,
    }))
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Nodal interpolation of a piecewise linear function onto an iterated
/// refinement of its mesh. Exact on the coarse function's linear pieces.
pub fn prolong<T: Real>(
    coarse: &FeFunction<T>,
    fine_mesh: &Arc<TetMesh<T>>,
) -> Result<FeFunction<T>> {
    let coarse_mesh = coarse.mesh();
    if fine_mesh.level < coarse_mesh.level {
        return Err(Error::Structure(format!(
            "target level {} is below the source level {}",
            fine_mesh.level, coarse_mesh.level
        )));
    }

    // Walk the parent chain of the fine mesh down to the source level.
    let mut chain: Vec<Arc<TetMesh<T>>> = vec![Arc::clone(fine_mesh)];
    while chain.last().unwrap().level > coarse_mesh.level {
        let next = chain.last().unwrap().parent.as_ref().ok_or_else(|| {
            Error::Structure("target mesh has no parent chain down to the source level".into())
        })?;
        chain.push(Arc::clone(next));
    }
    let base = chain.last().unwrap();
    if !Arc::ptr_eq(base, coarse_mesh) && !base.same_discretization(coarse_mesh) {
        return Err(Error::Structure(
            "target mesh is not an iterated refinement of the source mesh".into(),
        ));
    }

    let mut values = coarse.values().to_vec();
    for mesh in chain.iter().rev().skip(1) {
        let parent_n = values.len();
        let mut next = Vec::with_capacity(mesh.vertex_count());
        next.extend_from_slice(&values);
        let half: T = real(0.5);
        for &(a, b) in &mesh.midpoint_sources {
            next.push(half * (values[a] + values[b]));
        }
        debug_assert_eq!(next.len(), mesh.vertex_count());
        debug_assert_eq!(parent_n + mesh.midpoint_sources.len(), mesh.vertex_count());
        values = next;
    }

    Ok(FeFunction::new(Arc::clone(fine_mesh), values))
}
