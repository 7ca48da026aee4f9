//! Native mesh files.
//!
//! ```text
//! # comment
//! NODES <n>
//! <i> <x> <y>                 i = 0 .. n-1 in order
//! ELEMENTS <m>
//! <t> <n0> <n1> <n2> <n3> <n4> <n5>
//! FOLD_EDGES <k>
//! <a> <b>                     vertex pair of an interior edge
//! DIRICHLET_VERTICES <d>
//! <v>
//! ```
//!
//! Element nodes are the three corners counterclockwise, then the midpoints
//! of the edges opposite corners 0, 1 and 2. `FOLD_EDGES` and
//! `DIRICHLET_VERTICES` may be omitted. Dirichlet vertices are pinned at
//! their reference position until a run configuration says otherwise.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use thinfold::geometry::Vec2;
use thinfold::mesh::{FoldMesh, MeshError};

#[derive(Debug, Error)]
pub enum MeshFileError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

const SECTIONS: [&str; 4] = ["NODES", "ELEMENTS", "FOLD_EDGES", "DIRICHLET_VERTICES"];

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self { inner: it.peekable() }
    }

    fn record(&mut self, section: &str) -> Result<(usize, Vec<&'a str>), MeshFileError> {
        match self.inner.next() {
            Some((n, l)) => Ok((n, l.split_whitespace().collect())),
            None => Err(MeshFileError::Syntax { line: 0, reason: format!("unexpected end of file in {section}") }),
        }
    }
}

fn syntax(line: usize, reason: impl Into<String>) -> MeshFileError {
    MeshFileError::Syntax { line, reason: reason.into() }
}

fn number<T: std::str::FromStr>(line: usize, token: &str, what: &str) -> Result<T, MeshFileError> {
    token.parse().map_err(|_| syntax(line, format!("cannot read {what} from `{token}`")))
}

fn fields(line: usize, tokens: &[&str], count: usize, section: &str) -> Result<(), MeshFileError> {
    if tokens.len() != count {
        return Err(syntax(line, format!("{section} record needs {count} fields, found {}", tokens.len())));
    }
    Ok(())
}

pub fn parse_mesh(text: &str) -> Result<FoldMesh, MeshFileError> {
    let mut lines = Lines::new(text);
    let mut nodes: Option<Vec<Vec2>> = None;
    let mut elements: Option<Vec<[usize; 6]>> = None;
    let mut folds: Vec<(usize, usize)> = Vec::new();
    let mut pinned: Vec<usize> = Vec::new();
    let mut seen: Vec<&str> = Vec::new();

    while let Some((line, header)) = lines.inner.next() {
        let mut head = header.split_whitespace();
        let name = head.next().unwrap_or("");
        let Some(&section) = SECTIONS.iter().find(|s| **s == name) else {
            return Err(syntax(line, format!("expected a section header, found `{header}`")));
        };
        if seen.contains(&section) {
            return Err(syntax(line, format!("section {section} appears twice")));
        }
        seen.push(section);
        let count: usize = match (head.next(), head.next()) {
            (Some(c), None) => number(line, c, "record count")?,
            _ => return Err(syntax(line, format!("{section} header needs exactly one count"))),
        };
        match section {
            "NODES" => {
                let mut out = Vec::with_capacity(count);
                for i in 0..count {
                    let (l, t) = lines.record(section)?;
                    fields(l, &t, 3, section)?;
                    let idx: usize = number(l, t[0], "node index")?;
                    if idx != i {
                        return Err(syntax(l, format!("node index {idx} out of order, expected {i}")));
                    }
                    out.push(Vec2::new(number(l, t[1], "x")?, number(l, t[2], "y")?));
                }
                nodes = Some(out);
            }
            "ELEMENTS" => {
                let mut out = Vec::with_capacity(count);
                for i in 0..count {
                    let (l, t) = lines.record(section)?;
                    fields(l, &t, 7, section)?;
                    let idx: usize = number(l, t[0], "element index")?;
                    if idx != i {
                        return Err(syntax(l, format!("element index {idx} out of order, expected {i}")));
                    }
                    let mut el = [0; 6];
                    for (slot, tok) in el.iter_mut().zip(&t[1..]) {
                        *slot = number(l, tok, "node index")?;
                    }
                    out.push(el);
                }
                elements = Some(out);
            }
            "FOLD_EDGES" => {
                for _ in 0..count {
                    let (l, t) = lines.record(section)?;
                    fields(l, &t, 2, section)?;
                    folds.push((number(l, t[0], "vertex index")?, number(l, t[1], "vertex index")?));
                }
            }
            _ => {
                for _ in 0..count {
                    let (l, t) = lines.record(section)?;
                    fields(l, &t, 1, section)?;
                    pinned.push(number(l, t[0], "vertex index")?);
                }
            }
        }
    }

    let nodes = nodes.ok_or_else(|| syntax(0, "missing NODES section"))?;
    let elements = elements.ok_or_else(|| syntax(0, "missing ELEMENTS section"))?;
    let targets: Vec<(usize, Vector3<f64>)> = pinned
        .iter()
        .map(|&v| (v, nodes.get(v).map_or(Vector3::zeros(), |p| Vector3::new(p.x, p.y, 0.0))))
        .collect();
    Ok(FoldMesh::new(nodes, elements, &folds)?.with_dirichlet(&targets)?)
}

pub fn load_mesh(path: &Path) -> Result<FoldMesh, MeshFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshFileError::Io { path: path.display().to_string(), source })?;
    parse_mesh(&text)
}

/// Coordinates are written with 17 significant digits, which round-trips
/// every `f64` exactly.
pub fn format_mesh(mesh: &FoldMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NODES {}", mesh.nodes().len());
    for (i, p) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(out, "{i} {:.16e} {:.16e}", p.x, p.y);
    }
    let _ = writeln!(out, "ELEMENTS {}", mesh.n_elements());
    for (t, el) in mesh.elements().iter().enumerate() {
        let _ = writeln!(out, "{t} {} {} {} {} {} {}", el[0], el[1], el[2], el[3], el[4], el[5]);
    }
    let folds = mesh.fold_vertex_pairs();
    let _ = writeln!(out, "FOLD_EDGES {}", folds.len());
    for (a, b) in folds {
        let _ = writeln!(out, "{a} {b}");
    }
    let _ = writeln!(out, "DIRICHLET_VERTICES {}", mesh.dirichlet().len());
    for d in mesh.dirichlet() {
        let _ = writeln!(out, "{}", d.vertex);
    }
    out
}

pub fn write_mesh(mesh: &FoldMesh, path: &Path) -> Result<(), MeshFileError> {
    std::fs::write(path, format_mesh(mesh)).map_err(|source| MeshFileError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use thinfold::geometry::FoldCurve;
    use thinfold::mesh::{build_rect_mesh, snap_to_curve};

    fn sample() -> FoldMesh {
        let mesh = build_rect_mesh(3.0, 2.0, 0.7).unwrap();
        let arc = FoldCurve::parabolic(Vec2::new(0.0, 1.0), Vec2::new(3.0, 1.0), Vec2::new(1.5, 1.6)).unwrap();
        let mesh = snap_to_curve(&mesh, &arc).unwrap();
        let v = mesh.nearest_vertex(Vec2::new(0.0, 0.0));
        let g = Vector3::new(0.0, 0.0, 0.0);
        mesh.with_dirichlet(&[(v, g)]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mesh = sample();
        let text = format_mesh(&mesh);
        let back = parse_mesh(&text).unwrap();
        assert_eq!(back.nodes(), mesh.nodes());
        assert_eq!(back.elements(), mesh.elements());
        assert_eq!(back.fold_vertex_pairs(), mesh.fold_vertex_pairs());
        assert_eq!(back.dirichlet().len(), 1);
        assert_eq!(format_mesh(&back), text);
    }

    #[test]
    fn repeated_node_names_the_element() {
        let text = "NODES 6\n0 0 0\n1 1 0\n2 0 1\n3 0.5 0.5\n4 0 0.5\n5 0.5 0\nELEMENTS 1\n0 0 1 2 3 4 4\n";
        let err = parse_mesh(text).unwrap_err();
        assert!(matches!(err, MeshFileError::Mesh(MeshError::BadElement { element: 0, .. })), "{err}");
        assert!(err.to_string().contains("element 0"));
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let text = "# header\nNODES 2\n0 0 0\n1 x 0\n";
        match parse_mesh(text).unwrap_err() {
            MeshFileError::Syntax { line, .. } => assert_eq!(line, 4),
            other => panic!("{other}"),
        }
        assert!(parse_mesh("ELEMENTS 0\n").is_err());
        assert!(parse_mesh("NODES 0\nNODES 0\n").is_err());
    }
}
