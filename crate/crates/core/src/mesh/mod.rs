//! Triangular meshes of the square `[-L, L]²`, optionally with a circular
//! hole carved out for the cell.
//!
//! Meshes are immutable once built. Every mesh carries a uniform-grid bucket
//! index so that point location is cheap enough to run once per Dirac source
//! and once per boundary sample at every time step.

mod generate;
mod io;
mod locate;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub use generate::{circle_segment_count, generate_mesh};
pub use locate::Location;

use crate::geometry::{circle_point, Point2};
use locate::BucketIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("at least 4 circle samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("mesh file parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Tag carried by a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum EdgeTag {
    OuterBoundary,
    CellBoundary,
}

impl EdgeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeTag::OuterBoundary => "OuterBoundary",
            EdgeTag::CellBoundary => "CellBoundary",
        }
    }
}

impl std::str::FromStr for EdgeTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OuterBoundary" => Ok(EdgeTag::OuterBoundary),
            "CellBoundary" => Ok(EdgeTag::CellBoundary),
            other => Err(format!("unknown edge tag `{other}`")),
        }
    }
}

/// Square domain `[-L, L]²` with a circular cell of radius `R` at `x_C`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainSpec {
    pub half_width: f64,
    pub cell_center: Point2,
    pub cell_radius: f64,
    /// Carve the cell out of the mesh (exclusion model) or keep it (point source model).
    pub with_hole: bool,
    pub target_h: f64,
    /// Insert graded rings of vertices around the cell circle.
    #[serde(default)]
    pub graded: bool,
}

impl DomainSpec {
    pub fn new(half_width: f64, cell_center: Point2, cell_radius: f64, with_hole: bool, target_h: f64) -> Self {
        Self { half_width, cell_center, cell_radius, with_hole, target_h, graded: false }
    }

    pub fn with_hole(mut self, with_hole: bool) -> Self {
        self.with_hole = with_hole;
        self
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let l = self.half_width;
        let r = self.cell_radius;
        let c = self.cell_center;
        if !(l.is_finite() && r.is_finite() && c.is_finite() && self.target_h.is_finite()) {
            return Err(MeshError::InvalidDomain("non-finite parameter".into()));
        }
        if !(r > 0.0 && l > r) {
            return Err(MeshError::InvalidDomain(format!("need L > R > 0, got L={l}, R={r}")));
        }
        if c.x.abs().max(c.y.abs()) + r >= l {
            return Err(MeshError::InvalidDomain("cell must lie strictly inside the square".into()));
        }
        if !(self.target_h > 0.0 && self.target_h < l) {
            return Err(MeshError::InvalidDomain(format!("target_h must lie in (0, L), got {}", self.target_h)));
        }
        Ok(())
    }

    pub fn tol_geom(&self) -> f64 {
        1e-9 * self.half_width
    }

    /// Exact area of the continuous domain.
    pub fn area(&self) -> f64 {
        let square = 4.0 * self.half_width * self.half_width;
        if self.with_hole {
            square - std::f64::consts::PI * self.cell_radius * self.cell_radius
        } else {
            square
        }
    }
}

/// A conforming P1 triangulation with tagged boundary edges.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    edge_tags: BTreeMap<(usize, usize), EdgeTag>,
    characteristic_size: f64,
    tol_geom: f64,
    index: BucketIndex,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh from raw arrays and checks the structural invariants.
    pub fn new(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        edge_tags: BTreeMap<(usize, usize), EdgeTag>,
        characteristic_size: f64,
    ) -> Result<Self, MeshError> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(MeshError::Invalid("empty mesh".into()));
        }
        let extent = vertices.iter().fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
        let edge_tags = edge_tags.into_iter().map(|((a, b), t)| (edge_key(a, b), t)).collect();
        let index = BucketIndex::build(&vertices, &triangles);
        let mesh = Self { vertices, triangles, edge_tags, characteristic_size, tol_geom: 1e-9 * extent, index };
        mesh.check()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edge_tags(&self) -> &BTreeMap<(usize, usize), EdgeTag> {
        &self.edge_tags
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn characteristic_size(&self) -> f64 {
        self.characteristic_size
    }

    pub fn tol_geom(&self) -> f64 {
        self.tol_geom
    }

    pub fn triangle_points(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).cross(c - a)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn tagged_edges(&self, tag: EdgeTag) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edge_tags.iter().filter(move |(_, t)| **t == tag).map(|(&e, _)| e)
    }

    pub fn has_tag(&self, tag: EdgeTag) -> bool {
        self.edge_tags.values().any(|t| *t == tag)
    }

    /// All undirected edges with the number of adjacent triangles.
    pub fn edge_adjacency(&self) -> BTreeMap<(usize, usize), usize> {
        let mut count = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        count
    }

    pub fn mean_edge_length(&self) -> f64 {
        let adj = self.edge_adjacency();
        let total: f64 = adj.keys().map(|&(a, b)| self.vertices[a].distance(self.vertices[b])).sum();
        total / adj.len() as f64
    }

    /// Structural invariants: orientation, tagging of boundary edges, closed tag loops.
    pub fn check(&self) -> Result<(), MeshError> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(MeshError::Invalid(format!("triangle {t} references a missing vertex")));
            }
            if self.signed_area(t) <= 0.0 {
                return Err(MeshError::Invalid(format!("triangle {t} is not positively oriented")));
            }
        }
        if let Some(p) = self.vertices.iter().find(|p| !p.is_finite()) {
            return Err(MeshError::Invalid(format!("non-finite vertex {p:?}")));
        }
        let adj = self.edge_adjacency();
        for (e, n) in &adj {
            if *n > 2 {
                return Err(MeshError::Invalid(format!("edge {e:?} is shared by {n} triangles")));
            }
            if *n == 1 && !self.edge_tags.contains_key(e) {
                return Err(MeshError::Invalid(format!("boundary edge {e:?} carries no tag")));
            }
        }
        for e in self.edge_tags.keys() {
            if adj.get(e) != Some(&1) {
                return Err(MeshError::Invalid(format!("tagged edge {e:?} is not a boundary edge")));
            }
        }
        for tag in [EdgeTag::OuterBoundary, EdgeTag::CellBoundary] {
            let edges: Vec<_> = self.tagged_edges(tag).collect();
            if !edges.is_empty() && !forms_single_loop(&edges) {
                return Err(MeshError::Invalid(format!("{} edges do not form one closed loop", tag.as_str())));
            }
        }
        Ok(())
    }

    /// Geometric invariants relative to the domain the mesh was generated for.
    pub fn check_against(&self, spec: &DomainSpec) -> Result<(), MeshError> {
        let tol = spec.tol_geom();
        let c = spec.cell_center;
        let r = spec.cell_radius;
        if spec.with_hole {
            if let Some(v) = self.vertices.iter().find(|v| v.distance(c) < r - tol) {
                return Err(MeshError::Invalid(format!("vertex {v:?} lies inside the cell")));
            }
            for (a, b) in self.tagged_edges(EdgeTag::CellBoundary) {
                for v in [a, b] {
                    if (self.vertices[v].distance(c) - r).abs() > tol {
                        return Err(MeshError::Invalid(format!("cell boundary vertex {v} is off the circle")));
                    }
                }
            }
            if !self.has_tag(EdgeTag::CellBoundary) {
                return Err(MeshError::Invalid("holed mesh has no cell boundary".into()));
            }
        } else if self.has_tag(EdgeTag::CellBoundary) {
            return Err(MeshError::Invalid("full mesh carries cell boundary tags".into()));
        }
        Ok(())
    }

    /// Containing triangle and barycentric coordinates of `p`.
    ///
    /// Points on shared edges or vertices resolve to the lowest triangle index.
    pub fn locate(&self, p: Point2) -> Option<Location> {
        self.index.locate(&self.vertices, &self.triangles, p, self.tol_geom)
    }

    /// Triangles whose centroid lies within `radius` of `p`.
    pub fn triangles_near(&self, p: Point2, radius: f64) -> Vec<usize> {
        self.index.triangles_near(&self.vertices, &self.triangles, p, radius)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.triangle_points(t);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    /// Evaluates the P1 interpolant of nodal `values` at a located point.
    pub fn interpolate(&self, loc: &Location, values: &[f64]) -> f64 {
        let tri = self.triangles[loc.triangle];
        (0..3).map(|k| loc.barycentric[k] * values[tri[k]]).sum()
    }

    /// Gradients of the three barycentric basis functions of triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangle_points(t);
        let area2 = (b - a).cross(c - a);
        let grad = |p: Point2, q: Point2| Point2::new(p.y - q.y, q.x - p.x) * (1.0 / area2);
        [grad(b, c), grad(c, a), grad(a, b)]
    }

    /// Constant gradient of the P1 interpolant on triangle `t`.
    pub fn gradient(&self, t: usize, values: &[f64]) -> Point2 {
        let g = self.basis_gradients(t);
        let tri = self.triangles[t];
        (0..3).fold(Point2::default(), |acc, k| acc + g[k] * values[tri[k]])
    }

    /// For each vertex, the vertex at its mirror image about `x = axis`, if
    /// every mirror image is itself a vertex (bitwise equal coordinates).
    pub fn mirror_vertex_map(&self, axis: f64) -> Option<Vec<usize>> {
        let key = |p: Point2| (p.x.to_bits(), p.y.to_bits());
        let index: HashMap<_, _> = self.vertices.iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
        self.vertices.iter().map(|&p| {
            let m = p.mirror_x(axis);
            // avoid distinguishing 0.0 from -0.0
            let m = Point2::new(m.x + 0.0, m.y);
            index.get(&key(m)).copied()
        })
        .collect()
    }
}

fn forms_single_loop(edges: &[(usize, usize)]) -> bool {
    let mut nbrs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        nbrs.entry(a).or_default().push(b);
        nbrs.entry(b).or_default().push(a);
    }
    if nbrs.values().any(|n| n.len() != 2) {
        return false;
    }
    let start = *nbrs.keys().next().unwrap();
    let (mut prev, mut cur) = (start, nbrs[&start][0]);
    let mut steps = 1;
    while cur != start {
        let n = &nbrs[&cur];
        let next = if n[0] == prev { n[1] } else { n[0] };
        prev = cur;
        cur = next;
        steps += 1;
        if steps > edges.len() {
            return false;
        }
    }
    steps == edges.len()
}

/// One equally spaced sample on the cell circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSample {
    pub theta: f64,
    pub point: Point2,
}

/// `m` equally spaced samples `θ_j = 2πj/m` on the circle.
pub fn cell_boundary_samples(center: Point2, radius: f64, m: usize) -> Result<Vec<CircleSample>, MeshError> {
    if m < 4 {
        return Err(MeshError::TooFewSamples(m));
    }
    Ok((0..m)
        .map(|j| CircleSample {
            theta: std::f64::consts::TAU * j as f64 / m as f64,
            point: circle_point(center, radius, j, m),
        })
        .collect())
}
