//! Isoparametric quadratic triangulations with edge topology, fold-edge tags
//! and pointwise Dirichlet data.

pub mod element;
pub mod quadrature;
mod rect;
mod snap;

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::Vec2;
use element::{local_edge, map_data, NODES};

pub use quadrature::{line_quadrature, ref_quadrature, LineRule, QuadratureRule};
pub use rect::build_rect_mesh;
pub use snap::{polyline_snap, snap_to_curve};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh resolution: {0}")]
    MeshResolution(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("element {element}: {reason}")]
    BadElement { element: usize, reason: String },
    #[error("topology: {0}")]
    Topology(String),
    #[error("snapping failed at element {element:?}: {reason}")]
    SnapFailure { element: Option<usize>, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Interior,
    Fold,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSide {
    pub element: usize,
    pub local: usize,
}

/// An element side. `nodes = [start, end, midpoint]` follows the
/// counterclockwise orientation of the `left` element, so the normal
/// `μ_e` points from `left` (`T⁺`) into `right` (`T⁻`).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub nodes: [usize; 3],
    pub left: EdgeSide,
    pub right: Option<EdgeSide>,
    /// Straight distance between the endpoint vertices.
    pub h: f64,
    /// Unit normal of the chord, pointing from `left` to `right`.
    pub normal: Vec2,
    pub tag: EdgeTag,
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.right.is_some()
    }
}

/// Pointwise boundary condition `Y(x_i) = g_i` at a mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPoint {
    pub vertex: usize,
    pub target: Vector3<f64>,
    /// Local mesh size: average of `h_e` over the incident edges.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMesh {
    nodes: Vec<Vec2>,
    is_vertex: Vec<bool>,
    elements: Vec<[usize; NODES]>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 3]>,
    vertex_edges: Vec<Vec<usize>>,
    dirichlet: Vec<DirichletPoint>,
}

const JACOBIAN_CHECK_ORDER: usize = 6;

impl FoldMesh {
    /// Builds and validates a mesh from six-node triangles.
    ///
    /// `fold_edges` lists vertex pairs (in any order) of interior edges that
    /// belong to the discrete fold curve.
    pub fn new(
        nodes: Vec<Vec2>,
        elements: Vec<[usize; NODES]>,
        fold_edges: &[(usize, usize)],
    ) -> Result<Self, MeshError> {
        let n_nodes = nodes.len();
        for (t, el) in elements.iter().enumerate() {
            for &n in el {
                if n >= n_nodes {
                    return Err(MeshError::BadElement {
                        element: t,
                        reason: format!("node index {n} out of range ({n_nodes} nodes)"),
                    });
                }
            }
            for a in 0..NODES {
                for b in a + 1..NODES {
                    if el[a] == el[b] {
                        return Err(MeshError::BadElement {
                            element: t,
                            reason: format!("repeated node index {}", el[a]),
                        });
                    }
                }
            }
        }

        let mut is_vertex = vec![false; n_nodes];
        for el in &elements {
            for &c in &el[..3] {
                is_vertex[c] = true;
            }
        }
        for (t, el) in elements.iter().enumerate() {
            for &m in &el[3..] {
                if is_vertex[m] {
                    return Err(MeshError::BadElement {
                        element: t,
                        reason: format!("node {m} is used both as corner and as edge midpoint"),
                    });
                }
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut element_edges = vec![[usize::MAX; 3]; elements.len()];
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, el) in elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b, m) = local_edge(i);
                let (va, vb, vm) = (el[a], el[b], el[m]);
                let key = (va.min(vb), va.max(vb));
                match lookup.get(&key) {
                    None => {
                        lookup.insert(key, edges.len());
                        element_edges[t][i] = edges.len();
                        edges.push(Edge {
                            nodes: [va, vb, vm],
                            left: EdgeSide { element: t, local: i },
                            right: None,
                            h: 0.0,
                            normal: Vec2::zeros(),
                            tag: EdgeTag::Boundary,
                        });
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.right.is_some() {
                            return Err(MeshError::Topology(format!(
                                "edge ({va}, {vb}) is shared by more than two elements"
                            )));
                        }
                        if edge.nodes[2] != vm {
                            return Err(MeshError::Topology(format!(
                                "elements {} and {t} disagree on the midpoint of edge ({va}, {vb})",
                                edge.left.element
                            )));
                        }
                        if edge.nodes[0] != vb {
                            return Err(MeshError::Topology(format!(
                                "elements {} and {t} have inconsistent orientation",
                                edge.left.element
                            )));
                        }
                        edge.right = Some(EdgeSide { element: t, local: i });
                        edge.tag = EdgeTag::Interior;
                        element_edges[t][i] = e;
                    }
                }
            }
        }

        for &(a, b) in fold_edges {
            let key = (a.min(b), a.max(b));
            let Some(&e) = lookup.get(&key) else {
                return Err(MeshError::Topology(format!("fold edge ({a}, {b}) is not a mesh edge")));
            };
            if edges[e].right.is_none() {
                return Err(MeshError::Topology(format!("fold edge ({a}, {b}) lies on the boundary")));
            }
            edges[e].tag = EdgeTag::Fold;
        }

        let mut vertex_edges = vec![Vec::new(); n_nodes];
        for (e, edge) in edges.iter_mut().enumerate() {
            let (pa, pb) = (nodes[edge.nodes[0]], nodes[edge.nodes[1]]);
            let chord = pb - pa;
            edge.h = chord.norm();
            edge.normal = Vec2::new(chord.y, -chord.x) / edge.h;
            vertex_edges[edge.nodes[0]].push(e);
            vertex_edges[edge.nodes[1]].push(e);
        }

        let mesh = Self { nodes, is_vertex, elements, edges, element_edges, vertex_edges, dirichlet: Vec::new() };
        mesh.check_jacobians()?;
        Ok(mesh)
    }

    /// Builds a mesh from three-node triangles by inserting straight edge
    /// midpoints.
    pub fn from_linear(
        vertices: Vec<Vec2>,
        triangles: &[[usize; 3]],
        fold_edges: &[(usize, usize)],
    ) -> Result<Self, MeshError> {
        let mut nodes = vertices;
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut elements = Vec::with_capacity(triangles.len());
        for tri in triangles {
            let mut el = [0; NODES];
            el[..3].copy_from_slice(tri);
            for i in 0..3 {
                let (a, b, m) = local_edge(i);
                let (va, vb) = (tri[a], tri[b]);
                let key = (va.min(vb), va.max(vb));
                el[m] = *mids.entry(key).or_insert_with(|| {
                    nodes.push(0.5 * (nodes[va] + nodes[vb]));
                    nodes.len() - 1
                });
            }
            elements.push(el);
        }
        Self::new(nodes, elements, fold_edges)
    }

    fn check_jacobians(&self) -> Result<(), MeshError> {
        let quad = ref_quadrature(JACOBIAN_CHECK_ORDER)?;
        for t in 0..self.elements.len() {
            let coords = self.element_coords(t);
            let corners = element::REF_CORNERS;
            let probes = (0..quad.len()).map(|q| quad.xi(q)).chain(corners);
            for xi in probes {
                let det = map_data(&coords, xi).det;
                if !(det > 0.0) {
                    return Err(MeshError::BadElement {
                        element: t,
                        reason: format!("non-positive Jacobian determinant {det:e}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn is_vertex(&self, node: usize) -> bool {
        self.is_vertex[node]
    }

    pub fn elements(&self) -> &[[usize; NODES]] {
        &self.elements
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }

    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[v]
    }

    pub fn element_coords(&self, t: usize) -> [Vec2; NODES] {
        self.elements[t].map(|n| self.nodes[n])
    }

    /// Elements sharing an interior edge with `t`.
    pub fn neighbors(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.element_edges[t].into_iter().filter_map(move |e| {
            let edge = &self.edges[e];
            let right = edge.right?;
            Some(if edge.left.element == t { right.element } else { edge.left.element })
        })
    }

    pub fn fold_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| self.edges[e].tag == EdgeTag::Fold)
    }

    pub fn fold_vertex_pairs(&self) -> Vec<(usize, usize)> {
        self.fold_edges().map(|e| (self.edges[e].nodes[0], self.edges[e].nodes[1])).collect()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_edges[v].iter().any(|&e| self.edges[e].tag == EdgeTag::Boundary)
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&n| self.is_vertex[n])
    }

    /// Vertices joined to `v` by an edge.
    pub fn vertex_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vertex_edges[v].iter().map(move |&e| {
            let n = self.edges[e].nodes;
            if n[0] == v {
                n[1]
            } else {
                n[0]
            }
        })
    }

    /// Lowest-index element containing vertex `v` and the local node index.
    pub fn first_element_of_vertex(&self, v: usize) -> Option<(usize, usize)> {
        self.vertex_edges[v]
            .iter()
            .flat_map(|&e| {
                let edge = &self.edges[e];
                std::iter::once(edge.left.element).chain(edge.right.map(|r| r.element))
            })
            .min()
            .map(|t| (t, self.elements[t].iter().position(|&n| n == v).expect("vertex in element")))
    }

    /// Vertex closest to `p`.
    pub fn nearest_vertex(&self, p: Vec2) -> usize {
        self.vertex_ids()
            .min_by(|&a, &b| (self.nodes[a] - p).norm().total_cmp(&(self.nodes[b] - p).norm()))
            .expect("mesh has vertices")
    }

    /// Average of `h_e` over the edges incident to vertex `v`.
    pub fn local_size(&self, v: usize) -> f64 {
        let e = &self.vertex_edges[v];
        e.iter().map(|&e| self.edges[e].h).sum::<f64>() / e.len() as f64
    }

    pub fn dirichlet(&self) -> &[DirichletPoint] {
        &self.dirichlet
    }

    pub fn dirichlet_point(&self, vertex: usize, target: Vector3<f64>) -> DirichletPoint {
        DirichletPoint { vertex, target, h: self.local_size(vertex) }
    }

    /// Replaces the Dirichlet data by `targets` (vertex, target) pairs.
    pub fn with_dirichlet(mut self, targets: &[(usize, Vector3<f64>)]) -> Result<Self, MeshError> {
        let mut points = Vec::with_capacity(targets.len());
        for &(v, g) in targets {
            if v >= self.nodes.len() || !self.is_vertex[v] {
                return Err(MeshError::Topology(format!("Dirichlet node {v} is not a mesh vertex")));
            }
            points.push(self.dirichlet_point(v, g));
        }
        self.dirichlet = points;
        Ok(self)
    }

    /// Total area by isoparametric quadrature.
    pub fn area(&self) -> f64 {
        let quad = ref_quadrature(JACOBIAN_CHECK_ORDER).expect("order 6 is supported");
        (0..self.n_elements())
            .map(|t| {
                let coords = self.element_coords(t);
                (0..quad.len()).map(|q| quad.weights[q] * map_data(&coords, quad.xi(q)).det).sum::<f64>()
            })
            .sum()
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Point on edge `e` at parameter `s` (start vertex at 0, end at 1).
    pub fn edge_point(&self, e: usize, s: f64) -> Vec2 {
        let [a, b, m] = self.edges[e].nodes;
        let (pa, pb, pm) = (self.nodes[a], self.nodes[b], self.nodes[m]);
        (1.0 - s) * (1.0 - 2.0 * s) * pa + s * (2.0 * s - 1.0) * pb + 4.0 * s * (1.0 - s) * pm
    }

    pub fn edge_tangent(&self, e: usize, s: f64) -> Vec2 {
        let [a, b, m] = self.edges[e].nodes;
        let (pa, pb, pm) = (self.nodes[a], self.nodes[b], self.nodes[m]);
        (4.0 * s - 3.0) * pa + (4.0 * s - 1.0) * pb + (4.0 - 8.0 * s) * pm
    }

    /// Unit normal at parameter `s`, pointing from `left` into `right`.
    pub fn edge_normal(&self, e: usize, s: f64) -> Vec2 {
        let t = self.edge_tangent(e, s);
        Vec2::new(t.y, -t.x) / t.norm()
    }

    /// Length of the (possibly curved) edge by Gauss quadrature.
    pub fn edge_length(&self, e: usize) -> f64 {
        let (x, w) = quadrature::gauss_legendre(8);
        x.iter().zip(&w).map(|(s, w)| w * self.edge_tangent(e, *s).norm()).sum()
    }

    /// Fold edges grouped into vertex-connected chains, each listed as a
    /// sequence of vertices.
    pub fn fold_chains(&self) -> Vec<Vec<usize>> {
        let fold: Vec<usize> = self.fold_edges().collect();
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for &e in &fold {
            let [a, b, _] = self.edges[e].nodes;
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut used = std::collections::HashSet::new();
        let mut chains = Vec::new();
        let mut starts: Vec<usize> = adj.iter().filter(|(_, n)| n.len() != 2).map(|(&v, _)| v).collect();
        starts.sort_unstable();
        // closed loops have no endpoint; start them anywhere
        let mut all: Vec<usize> = adj.keys().copied().collect();
        all.sort_unstable();
        starts.extend(all);
        for s in starts {
            for &first in &adj[&s] {
                let key = (s.min(first), s.max(first));
                if used.contains(&key) {
                    continue;
                }
                used.insert(key);
                let mut chain = vec![s, first];
                let mut cur = first;
                loop {
                    let next = adj[&cur].iter().copied().find(|&n| !used.contains(&(cur.min(n), cur.max(n))));
                    match next {
                        Some(n) if adj[&cur].len() == 2 => {
                            used.insert((cur.min(n), cur.max(n)));
                            chain.push(n);
                            cur = n;
                        }
                        _ => break,
                    }
                }
                chains.push(chain);
            }
        }
        chains
    }

    /// Labels the connected components of the element graph when fold edges
    /// are treated as cuts.
    pub fn fold_regions(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n_elements()];
        let mut next = 0;
        for seed in 0..self.n_elements() {
            if label[seed] != usize::MAX {
                continue;
            }
            let mut stack = vec![seed];
            label[seed] = next;
            while let Some(t) = stack.pop() {
                for e in self.element_edges[t] {
                    let edge = &self.edges[e];
                    if edge.tag != EdgeTag::Interior {
                        continue;
                    }
                    let right = edge.right.expect("interior edge").element;
                    let other = if edge.left.element == t { right } else { edge.left.element };
                    if label[other] == usize::MAX {
                        label[other] = next;
                        stack.push(other);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Rebuilds the mesh with moved nodes and a new fold-edge set, keeping the
    /// element connectivity.
    pub fn with_nodes(&self, nodes: Vec<Vec2>, fold_edges: &[(usize, usize)]) -> Result<Self, MeshError> {
        let mesh = Self::new(nodes, self.elements.clone(), fold_edges)?;
        let targets: Vec<(usize, Vector3<f64>)> = self.dirichlet.iter().map(|d| (d.vertex, d.target)).collect();
        mesh.with_dirichlet(&targets)
    }
}
