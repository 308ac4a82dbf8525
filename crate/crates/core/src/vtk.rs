//! Legacy VTK (DataFile Version 3.0) writer for nodal vector fields on
//! tetrahedral meshes. ASCII, deterministic float formatting.

use std::io::Write;
use std::path::Path;

use crate::mesh::Mesh;
use crate::scalar::Real;

/// Shortest-roundtrip exponent formatting; stable across runs for equal
/// inputs.
fn fmt<T: Real>(v: T) -> String {
    format!("{:e}", v.as_f64())
}

/// Writes an unstructured tet grid with one or more nodal vector fields.
pub fn write_vector_fields<T: Real>(
    path: &Path,
    title: &str,
    mesh: &Mesh<T>,
    fields: &[(&str, &[[T; 3]])],
) -> std::io::Result<()> {
    for (name, data) in fields {
        assert_eq!(
            data.len(),
            mesh.num_nodes(),
            "field {name} does not cover every node"
        );
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.num_nodes())?;
    for node in mesh.nodes() {
        writeln!(out, "{} {} {}", fmt(node.x), fmt(node.y), fmt(node.z))?;
    }
    writeln!(out, "CELLS {} {}", mesh.num_tets(), 5 * mesh.num_tets())?;
    for tet in mesh.tets() {
        writeln!(
            out,
            "4 {} {} {} {}",
            tet.nodes[0], tet.nodes[1], tet.nodes[2], tet.nodes[3]
        )?;
    }
    writeln!(out, "CELL_TYPES {}", mesh.num_tets())?;
    for _ in 0..mesh.num_tets() {
        writeln!(out, "10")?;
    }
    writeln!(out, "POINT_DATA {}", mesh.num_nodes())?;
    for (name, data) in fields {
        writeln!(out, "VECTORS {name} double")?;
        for v in *data {
            writeln!(out, "{} {} {}", fmt(v[0]), fmt(v[1]), fmt(v[2]))?;
        }
    }
    out.flush()
}
