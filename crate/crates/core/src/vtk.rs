//! VTK legacy ASCII export (unstructured grids, cell type 10).

use std::io::Write;

use crate::error::Result;
use crate::fem::FeFunction;
use crate::mesh::TetMesh;
use crate::scalar::Real;

fn write_header<T: Real, W: Write>(w: &mut W, mesh: &TetMesh<T>, title: &str) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(w, "POINTS {} double", mesh.vertex_count())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v[0], v[1], v[2])?;
    }

    let t = mesh.tet_count();
    writeln!(w, "CELLS {t} {}", 5 * t)?;
    for tet in mesh.tets() {
        writeln!(w, "4 {} {} {} {}", tet[0], tet[1], tet[2], tet[3])?;
    }
    writeln!(w, "CELL_TYPES {t}")?;
    for _ in 0..t {
        writeln!(w, "10")?;
    }
    Ok(())
}

/// Writes the mesh alone.
pub fn write_mesh<T: Real, W: Write>(w: &mut W, mesh: &TetMesh<T>, title: &str) -> Result<()> {
    write_header(w, mesh, title)
}

/// Writes the mesh with named nodal scalar fields as POINT_DATA.
pub fn write_fields<T: Real, W: Write>(
    w: &mut W,
    mesh: &TetMesh<T>,
    title: &str,
    fields: &[(&str, &FeFunction<T>)],
) -> Result<()> {
    write_header(w, mesh, title)?;
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(w, "POINT_DATA {}", mesh.vertex_count())?;
    for (name, field) in fields {
        debug_assert_eq!(field.values().len(), mesh.vertex_count());
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in field.values() {
            writeln!(w, "{v}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;
    use std::sync::Arc;

    #[test]
    fn exports_level0_mesh_with_field() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let u = FeFunction::interpolate(Arc::clone(&mesh), |x| x[0]);
        let mut buf = Vec::new();
        write_fields(&mut buf, &mesh, "sample", &[("u", &u)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINTS 27 double"));
        assert!(text.contains("CELLS 48 240"));
        assert!(text.contains("CELL_TYPES 48"));
        assert!(text.contains("POINT_DATA 27"));
        assert!(text.contains("SCALARS u double 1"));
        let tens: usize = text.lines().filter(|l| *l == "10").count();
        assert!(tens >= 48);
    }
}
