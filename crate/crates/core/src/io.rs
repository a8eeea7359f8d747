//! Legacy-VTK ASCII and CSV export of meshes and fields.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;

use crate::field::{Association, ScalarField};
use crate::mesh::Mesh2D;

/// A named field for export.
pub enum VtkField<'a> {
    Scalar(&'a str, &'a ScalarField),
    /// interleaved nodal displacement
    NodalVector(&'a str, &'a [f64]),
}

/// Render a mesh with point/cell data as a legacy-VTK ASCII unstructured grid.
pub fn vtk_unstructured(mesh: &Mesh2D, fields: &[VtkField]) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nlatticeopt field export\nASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_nodes());
    for n in &mesh.nodes {
        let _ = writeln!(s, "{} {} 0", n[0], n[1]);
    }
    let ne = mesh.num_elements();
    let _ = writeln!(s, "CELLS {} {}", ne, 5 * ne);
    for conn in &mesh.elements {
        let _ = writeln!(s, "4 {} {} {} {}", conn[0], conn[1], conn[2], conn[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        s.push_str("9\n");
    }

    let mut wrote_point_header = false;
    let mut wrote_cell_header = false;
    for f in fields {
        match f {
            VtkField::Scalar(name, field) => match field.association {
                Association::PerNode => {
                    if !wrote_point_header {
                        let _ = writeln!(s, "POINT_DATA {}", mesh.num_nodes());
                        wrote_point_header = true;
                    }
                    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                    for v in &field.values {
                        let _ = writeln!(s, "{v}");
                    }
                }
                Association::PerElement => {
                    if !wrote_cell_header {
                        let _ = writeln!(s, "CELL_DATA {ne}");
                        wrote_cell_header = true;
                    }
                    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                    for v in &field.values {
                        let _ = writeln!(s, "{v}");
                    }
                }
            },
            VtkField::NodalVector(name, u) => {
                if !wrote_point_header {
                    let _ = writeln!(s, "POINT_DATA {}", mesh.num_nodes());
                    wrote_point_header = true;
                }
                let _ = writeln!(s, "VECTORS {name} double");
                for n in 0..mesh.num_nodes() {
                    let _ = writeln!(s, "{} {} 0", u[2 * n], u[2 * n + 1]);
                }
            }
        }
    }
    s
}

/// CSV of per-element columns: `element,<name1>,<name2>,...`.
pub fn element_csv(columns: &[(&str, &[f64])]) -> String {
    let mut s = String::from("element");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    if let Some((_, first)) = columns.first() {
        for e in 0..first.len() {
            let _ = write!(s, "{e}");
            for (_, col) in columns {
                let _ = write!(s, ",{}", col[e]);
            }
            s.push('\n');
        }
    }
    s
}

/// Parse a per-element CSV produced by [`element_csv`]; returns the header
/// names and the column values.
pub fn parse_element_csv(text: &str) -> crate::error::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| crate::error::Error::Parse("empty csv".into()))?;
    let names: Vec<String> = header.split(',').skip(1).map(|s| s.to_string()).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        for (k, tok) in line.split(',').skip(1).enumerate() {
            if k >= cols.len() {
                return Err(crate::error::Error::Parse("row wider than header".into()));
            }
            cols[k].push(
                tok.parse::<f64>()
                    .map_err(|e| crate::error::Error::Parse(e.to_string()))?,
            );
        }
    }
    Ok((names, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    #[test]
    fn vtk_has_required_sections() {
        let mesh = build_rect_mesh(2, 2, 1.0, 1.0, &[]).unwrap();
        let f = ScalarField::constant(&mesh, Association::PerElement, 0.5);
        let out = vtk_unstructured(&mesh, &[VtkField::Scalar("theta", &f)]);
        assert!(out.contains("POINTS 9 double"));
        assert!(out.contains("CELL_TYPES 4"));
        assert!(out.contains("CELL_DATA 4"));
        assert!(out.contains("SCALARS theta double 1"));
    }

    #[test]
    fn element_csv_round_trip() {
        let a = [0.5, 1.0, 0.125];
        let b = [1.0 / 3.0, 2.0, -0.7];
        let csv = element_csv(&[("m1", &a), ("m2", &b)]);
        let (names, cols) = parse_element_csv(&csv).unwrap();
        assert_eq!(names, vec!["m1", "m2"]);
        assert_eq!(cols[0], a.to_vec());
        assert_eq!(cols[1], b.to_vec());
    }
}
