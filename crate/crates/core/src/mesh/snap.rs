//! Aligning a mesh with a fold curve.
//!
//! A chain of mesh vertices joining the two curve endpoints is selected by a
//! shortest-path search weighted with the distance to the curve, the chain is
//! projected onto the curve, and the edges between consecutive chain vertices
//! become fold edges. In curved mode their midpoint nodes are projected onto
//! the curve as well, which yields a piecewise-quadratic interpolant of the
//! crease.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::geometry::{FoldCurve, Vec2};

use super::{EdgeTag, FoldMesh, MeshError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Curved,
    Straight,
}

/// Snaps a vertex chain and the midpoints of its edges onto `curve`.
pub fn snap_to_curve(mesh: &FoldMesh, curve: &FoldCurve) -> Result<FoldMesh, MeshError> {
    snap(mesh, curve, Mode::Curved)
}

/// Like [`snap_to_curve`], but fold edges stay straight.
pub fn polyline_snap(mesh: &FoldMesh, curve: &FoldCurve) -> Result<FoldMesh, MeshError> {
    snap(mesh, curve, Mode::Straight)
}

#[derive(PartialEq)]
struct State(f64, usize);

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const DISTANCE_WEIGHT: f64 = 20.0;

fn snap(mesh: &FoldMesh, curve: &FoldCurve, mode: Mode) -> Result<FoldMesh, MeshError> {
    let diam = mesh.diameter();
    let fail = |reason: String| MeshError::SnapFailure { element: None, reason };

    let start = nearest_boundary_vertex(mesh, curve.start())?;
    let end = nearest_boundary_vertex(mesh, curve.end())?;
    if start == end {
        return Err(fail("curve endpoints map to the same boundary vertex".into()));
    }

    let n = mesh.nodes().len();
    let dist: Vec<f64> = (0..n)
        .map(|v| if mesh.is_vertex(v) { curve.closest_point(mesh.nodes()[v]).distance } else { 0.0 })
        .collect();

    // Dijkstra over interior edges, weighted by proximity to the curve
    let mut best = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    best[start] = 0.0;
    heap.push(State(0.0, start));
    while let Some(State(cost, v)) = heap.pop() {
        if v == end {
            break;
        }
        if cost > best[v] {
            continue;
        }
        for &e in mesh.vertex_edges(v) {
            let edge = &mesh.edges()[e];
            if edge.tag == EdgeTag::Boundary {
                continue;
            }
            let w = if edge.nodes[0] == v { edge.nodes[1] } else { edge.nodes[0] };
            let mid = 0.5 * (mesh.nodes()[v] + mesh.nodes()[w]);
            let dmid = curve.closest_point(mid).distance;
            let penalty = (dist[v] + dist[w] + dmid) / (3.0 * edge.h);
            let next = cost + edge.h * (1.0 + DISTANCE_WEIGHT * penalty);
            if next < best[w] {
                best[w] = next;
                prev[w] = v;
                heap.push(State(next, w));
            }
        }
    }
    if !best[end].is_finite() {
        return Err(fail("no interior path joins the curve endpoints".into()));
    }
    let mut chain = vec![end];
    while *chain.last().unwrap() != start {
        chain.push(prev[*chain.last().unwrap()]);
    }
    chain.reverse();

    // project the chain
    let mut nodes = mesh.nodes().to_vec();
    let mut params = Vec::with_capacity(chain.len());
    for (k, &v) in chain.iter().enumerate() {
        let (t, q) = if k == 0 {
            (0.0, curve.start())
        } else if k + 1 == chain.len() {
            (1.0, curve.end())
        } else {
            let p = curve.closest_point(nodes[v]);
            (p.t, p.point)
        };
        params.push(t);
        nodes[v] = q;
    }
    for kink in curve.kink_parameters() {
        let k = (1..chain.len() - 1)
            .min_by(|&a, &b| (params[a] - kink).abs().total_cmp(&(params[b] - kink).abs()))
            .ok_or_else(|| fail("chain too short to resolve curve kinks".into()))?;
        params[k] = kink;
        nodes[chain[k]] = curve.eval(kink);
    }
    if params.windows(2).any(|w| w[1] <= w[0]) {
        return Err(fail("vertex chain is not monotone along the curve".into()));
    }
    for &v in [start, end].iter() {
        let moved = (nodes[v] - mesh.nodes()[v]).norm();
        if moved > 1e-9 * diam && !boundary_is_straight_at(mesh, v) {
            return Err(fail(format!("curve endpoint would move boundary corner {v}")));
        }
    }

    let on_chain: HashSet<usize> = chain.iter().copied().collect();
    let moved: Vec<usize> =
        chain.iter().copied().filter(|&v| (nodes[v] - mesh.nodes()[v]).norm() > 1e-14 * diam).collect();

    // one Laplacian pass on free interior neighbours of moved chain vertices
    let mut relax: Vec<usize> = moved
        .iter()
        .flat_map(|&v| mesh.vertex_neighbors(v))
        .filter(|w| !on_chain.contains(w) && !mesh.is_boundary_vertex(*w))
        .collect();
    relax.sort_unstable();
    relax.dedup();
    let snapshot = nodes.clone();
    for &w in &relax {
        let nb: Vec<usize> = mesh.vertex_neighbors(w).collect();
        nodes[w] = nb.iter().map(|&u| snapshot[u]).sum::<Vec2>() / nb.len() as f64;
    }

    let touched: HashSet<usize> = moved.iter().chain(relax.iter()).copied().collect();
    let fold_pairs: Vec<(usize, usize)> = chain.windows(2).map(|w| (w[0], w[1])).collect();
    let fold_set: HashSet<(usize, usize)> = fold_pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    for edge in mesh.edges() {
        let [a, b, m] = edge.nodes;
        let is_fold = fold_set.contains(&(a.min(b), a.max(b)));
        if !is_fold && !touched.contains(&a) && !touched.contains(&b) {
            continue;
        }
        let chord_mid = 0.5 * (nodes[a] + nodes[b]);
        nodes[m] = if is_fold && mode == Mode::Curved { curve.closest_point(chord_mid).point } else { chord_mid };
    }

    mesh.with_nodes(nodes, &fold_pairs).map_err(|err| match err {
        MeshError::BadElement { element, reason } => MeshError::SnapFailure { element: Some(element), reason },
        other => other,
    })
}

fn nearest_boundary_vertex(mesh: &FoldMesh, p: Vec2) -> Result<usize, MeshError> {
    mesh.vertex_ids()
        .filter(|&v| mesh.is_boundary_vertex(v))
        .min_by(|&a, &b| (mesh.nodes()[a] - p).norm().total_cmp(&(mesh.nodes()[b] - p).norm()))
        .ok_or_else(|| MeshError::SnapFailure { element: None, reason: "mesh has no boundary vertices".into() })
}

/// True when the two boundary edges at `v` are collinear, so `v` may slide
/// along the boundary without changing the domain.
fn boundary_is_straight_at(mesh: &FoldMesh, v: usize) -> bool {
    let dirs: Vec<Vec2> = mesh
        .vertex_edges(v)
        .iter()
        .filter(|&&e| mesh.edges()[e].tag == EdgeTag::Boundary)
        .map(|&e| {
            let n = mesh.edges()[e].nodes;
            let w = if n[0] == v { n[1] } else { n[0] };
            (mesh.nodes()[w] - mesh.nodes()[v]).normalize()
        })
        .collect();
    dirs.len() == 2 && (dirs[0].x * dirs[1].y - dirs[0].y * dirs[1].x).abs() < 1e-12
}
