//! Legacy ASCII VTK output.
//!
//! Every element becomes its own quadratic triangle cell (type 22) with six
//! private points, so jumps and creases show up unsmoothed. Points are the
//! deformed positions; point data carries the deformation and the
//! displacement from the flat reference, cell data the curvature and the
//! crease region label.

use std::fmt::Write as _;
use std::path::Path;

use thinfold::dgspace::{DgField, DgSpace};

/// VTK_QUADRATIC_TRIANGLE
pub const QUADRATIC_TRIANGLE: u32 = 22;

/// VTK orders the midpoints (0,1), (1,2), (2,0); ours are opposite corners
/// 0, 1, 2.
const VTK_ORDER: [usize; 6] = [0, 1, 2, 5, 3, 4];

pub fn format_vtk(space: &DgSpace, field: &DgField, curvature: &[f64], title: &str) -> String {
    let mesh = space.mesh();
    let n_el = mesh.n_elements();
    let labels = mesh.fold_regions();
    let mut out = String::with_capacity(n_el * 600);
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = write!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", 6 * n_el);
    for t in 0..n_el {
        for &a in &VTK_ORDER {
            let y = field.node(t, a);
            let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", y.x, y.y, y.z);
        }
    }
    let _ = writeln!(out, "CELLS {} {}", n_el, 7 * n_el);
    for t in 0..n_el {
        let b = 6 * t;
        let _ = writeln!(out, "6 {} {} {} {} {} {}", b, b + 1, b + 2, b + 3, b + 4, b + 5);
    }
    let _ = writeln!(out, "CELL_TYPES {n_el}");
    for _ in 0..n_el {
        let _ = writeln!(out, "{QUADRATIC_TRIANGLE}");
    }
    let _ = writeln!(out, "POINT_DATA {}", 6 * n_el);
    let _ = writeln!(out, "VECTORS deformation double");
    for t in 0..n_el {
        for &a in &VTK_ORDER {
            let y = field.node(t, a);
            let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", y.x, y.y, y.z);
        }
    }
    let _ = writeln!(out, "VECTORS displacement double");
    for (t, el) in mesh.elements().iter().enumerate() {
        for &a in &VTK_ORDER {
            let (x, y) = (mesh.nodes()[el[a]], field.node(t, a));
            let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", y.x - x.x, y.y - x.y, y.z);
        }
    }
    let _ = writeln!(out, "CELL_DATA {n_el}");
    let _ = writeln!(out, "SCALARS curvature double 1\nLOOKUP_TABLE default");
    for k in curvature {
        let _ = writeln!(out, "{k:.17e}");
    }
    let _ = writeln!(out, "SCALARS region int 1\nLOOKUP_TABLE default");
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    out
}

pub fn write_vtk(space: &DgSpace, field: &DgField, curvature: &[f64], title: &str, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, format_vtk(space, field, curvature, title))
}

/// The parts of a legacy unstructured-grid file a reader needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkGrid {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u32>,
    pub point_vectors: Vec<(String, Vec<[f64; 3]>)>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
}

/// Minimal reader for the subset written above; checks counts and index
/// ranges the way a strict VTK reader does.
pub fn parse_vtk(text: &str) -> Result<VtkGrid, String> {
    let mut lines = text.lines();
    let magic = lines.next().ok_or("empty file")?;
    if !magic.starts_with("# vtk DataFile Version") {
        return Err(format!("bad magic line `{magic}`"));
    }
    lines.next().ok_or("missing title")?;
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    let mut tokens = lines.flat_map(str::split_whitespace);
    let mut next = || tokens.next().ok_or_else(|| "unexpected end of file".to_string());
    if (next()?, next()?) != ("DATASET", "UNSTRUCTURED_GRID") {
        return Err("expected DATASET UNSTRUCTURED_GRID".into());
    }
    let mut grid = VtkGrid::default();
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad number `{t}`"));
    let int = |t: &str| t.parse::<usize>().map_err(|_| format!("bad integer `{t}`"));
    let mut attribute_count = 0;
    let mut on_cells = false;
    while let Ok(keyword) = next() {
        match keyword {
            "POINTS" => {
                let n = int(next()?)?;
                next()?;
                for _ in 0..n {
                    grid.points.push([num(next()?)?, num(next()?)?, num(next()?)?]);
                }
            }
            "CELLS" => {
                let (n, size) = (int(next()?)?, int(next()?)?);
                let mut used = 0;
                for _ in 0..n {
                    let k = int(next()?)?;
                    let cell: Vec<usize> = (0..k).map(|_| next().and_then(int)).collect::<Result<_, _>>()?;
                    if cell.iter().any(|&i| i >= grid.points.len()) {
                        return Err("cell references a missing point".into());
                    }
                    used += k + 1;
                    grid.cells.push(cell);
                }
                if used != size {
                    return Err(format!("CELLS size {size} does not match {used}"));
                }
            }
            "CELL_TYPES" => {
                let n = int(next()?)?;
                for _ in 0..n {
                    grid.cell_types.push(next()?.parse().map_err(|_| "bad cell type".to_string())?);
                }
            }
            "POINT_DATA" => {
                attribute_count = int(next()?)?;
                on_cells = false;
                if attribute_count != grid.points.len() {
                    return Err("POINT_DATA count differs from POINTS".into());
                }
            }
            "CELL_DATA" => {
                attribute_count = int(next()?)?;
                on_cells = true;
                if attribute_count != grid.cells.len() {
                    return Err("CELL_DATA count differs from CELLS".into());
                }
            }
            "VECTORS" => {
                let name = next()?.to_string();
                next()?;
                let v: Vec<[f64; 3]> =
                    (0..attribute_count).map(|_| Ok([num(next()?)?, num(next()?)?, num(next()?)?])).collect::<Result<_, String>>()?;
                if on_cells {
                    return Err("cell vectors are not expected".into());
                }
                grid.point_vectors.push((name, v));
            }
            "SCALARS" => {
                let name = next()?.to_string();
                next()?;
                let mut lookup = next()?;
                if lookup == "1" {
                    lookup = next()?;
                }
                if lookup != "LOOKUP_TABLE" {
                    return Err("expected LOOKUP_TABLE".into());
                }
                next()?;
                let v: Vec<f64> = (0..attribute_count).map(|_| num(next()?)).collect::<Result<_, _>>()?;
                if !on_cells {
                    return Err("point scalars are not expected".into());
                }
                grid.cell_scalars.push((name, v));
            }
            other => return Err(format!("unexpected keyword `{other}`")),
        }
    }
    if grid.cell_types.len() != grid.cells.len() {
        return Err("CELL_TYPES count differs from CELLS".into());
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use thinfold::dgspace::DEFAULT_QUAD_ORDER;
    use thinfold::mesh::build_rect_mesh;

    #[test]
    fn flat_identity_points_are_reference_positions() {
        let sp = DgSpace::new(build_rect_mesh(1.0, 1.0, 0.5).unwrap(), DEFAULT_QUAD_ORDER).unwrap();
        let id = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        let curv = vec![0.0; sp.n_elements()];
        let grid = parse_vtk(&format_vtk(&sp, &id, &curv, "flat")).unwrap();
        assert_eq!(grid.cells.len(), sp.n_elements());
        assert!(grid.cell_types.iter().all(|&c| c == QUADRATIC_TRIANGLE));
        for (t, el) in sp.mesh().elements().iter().enumerate() {
            for (k, &a) in VTK_ORDER.iter().enumerate() {
                let p = grid.points[grid.cells[t][k]];
                let x = sp.mesh().nodes()[el[a]];
                assert_eq!([p[0], p[1], p[2]], [x.x, x.y, 0.0]);
            }
        }
        let disp = &grid.point_vectors.iter().find(|(n, _)| n == "displacement").unwrap().1;
        assert!(disp.iter().all(|d| d.iter().all(|c| c.abs() < 1e-15)));
    }

    #[test]
    fn vtk_midpoints_sit_on_their_edges() {
        let sp = DgSpace::new(build_rect_mesh(1.0, 1.0, 0.5).unwrap(), DEFAULT_QUAD_ORDER).unwrap();
        let id = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        let grid = parse_vtk(&format_vtk(&sp, &id, &vec![0.0; sp.n_elements()], "t")).unwrap();
        for cell in &grid.cells {
            for (m, (a, b)) in [(3, (0, 1)), (4, (1, 2)), (5, (2, 0))] {
                let (pa, pb, pm) = (grid.points[cell[a]], grid.points[cell[b]], grid.points[cell[m]]);
                for c in 0..3 {
                    assert!((0.5 * (pa[c] + pb[c]) - pm[c]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn reader_rejects_broken_files() {
        assert!(parse_vtk("").is_err());
        assert!(parse_vtk("# vtk DataFile Version 3.0\nt\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 1 double\n0 0 0\nCELLS 1 2\n1 5\n").is_err());
    }
}
