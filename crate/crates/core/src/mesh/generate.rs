use std::collections::BTreeMap;
use std::f64::consts::TAU;

use spade::{ConstrainedDelaunayTriangulation, Point2 as SpadePoint, Triangulation};

use super::{DomainSpec, EdgeTag, MeshError, TriMesh};
use crate::geometry::{circle_point, polar_angle, Point2};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;
// growth factor between consecutive graded rings
const RING_GROWTH: f64 = 1.25;

/// Number of polygon segments used for the cell circle at the spec's mesh size.
///
/// At least `max(64, ⌈2πR/h⌉)`, rounded up to a multiple of four so the
/// polygon contains the points at `θ = 0, π/2, π, 3π/2`.
pub fn circle_segment_count(spec: &DomainSpec) -> usize {
    let m = ((TAU * spec.cell_radius / spec.target_h).ceil() as usize).max(64);
    m.div_ceil(4) * 4
}

/// Constrained Delaunay mesh of the square, with or without the cell hole.
///
/// When the cell center lies on `x = 0` the mesh is built on the right half and
/// reflected, so it is exactly mirror-symmetric about the vertical axis through
/// the cell; mirrored triangles keep the same relative ordering.
///
/// Full meshes keep the cell circle polygon as an interior interface, and list
/// all triangles outside the cell before the ones inside it.
pub fn generate_mesh(spec: &DomainSpec) -> Result<TriMesh, MeshError> {
    spec.validate()?;
    let layout = Layout::new(spec);
    if spec.cell_center.x == 0.0 {
        layout.symmetric()
    } else {
        layout.full()
    }
}

struct Ring {
    radius: f64,
    count: usize,
}

struct Layout {
    spec: DomainSpec,
    h: f64,
    circle_n: usize,
    side_n: usize,
    outer_rings: Vec<Ring>,
    inner_rings: Vec<Ring>,
    // lattice exclusion band around the circle
    band_out: f64,
    band_in: f64,
}

#[derive(Default)]
struct Builder {
    points: Vec<Point2>,
    constraints: Vec<[usize; 2]>,
    outer: Vec<(usize, usize)>,
    cell: Vec<(usize, usize)>,
}

impl Builder {
    fn push(&mut self, p: Point2) -> usize {
        self.points.push(p);
        self.points.len() - 1
    }

    fn link(&mut self, a: usize, b: usize, tag: Option<EdgeTag>) {
        self.constraints.push([a, b]);
        match tag {
            Some(EdgeTag::OuterBoundary) => self.outer.push((a, b)),
            Some(EdgeTag::CellBoundary) => self.cell.push((a, b)),
            None => {}
        }
    }

    /// Appends the interior points of a chain and links it end to end.
    fn chain(&mut self, start: usize, interior: &[Point2], end: usize, tag: Option<EdgeTag>) {
        let mut prev = start;
        for &p in interior {
            let v = self.push(p);
            self.link(prev, v, tag);
            prev = v;
        }
        self.link(prev, end, tag);
    }
}

impl Layout {
    fn new(spec: &DomainSpec) -> Self {
        let h = spec.target_h;
        let r = spec.cell_radius;
        let circle_n = circle_segment_count(spec);
        let side_n = ((2.0 * spec.half_width / h).ceil() as usize).div_ceil(2) * 2;
        let (mut outer_rings, mut inner_rings) = (Vec::new(), Vec::new());
        if spec.graded {
            let spacing0 = TAU * r / circle_n as f64;
            let (mut rho, mut s) = (r, spacing0);
            while s < h {
                s = (s * RING_GROWTH).min(h);
                rho += s * SQRT3_2;
                outer_rings.push(Ring { radius: rho, count: ring_count(rho, s) });
            }
            if !spec.with_hole {
                let (mut rho, mut s) = (r, spacing0);
                loop {
                    s = (s * RING_GROWTH).min(h);
                    rho -= s * SQRT3_2;
                    if rho < 1.5 * s + 0.5 * h {
                        break;
                    }
                    inner_rings.push(Ring { radius: rho, count: ring_count(rho, s) });
                    if s >= h {
                        break;
                    }
                }
            }
        }
        let band_out = outer_rings.last().map_or(0.0, |g| g.radius - r) + 0.5 * h;
        let band_in = inner_rings.last().map_or(0.0, |g| r - g.radius) + 0.5 * h;
        Self { spec: *spec, h, circle_n, side_n, outer_rings, inner_rings, band_out, band_in }
    }

    fn center(&self) -> Point2 {
        self.spec.cell_center
    }

    fn keep_lattice_point(&self, p: Point2) -> bool {
        let l = self.spec.half_width;
        let margin = 0.4 * self.h;
        if p.x.abs() > l - margin || p.y.abs() > l - margin {
            return false;
        }
        let d = p.distance(self.center()) - self.spec.cell_radius;
        if d >= 0.0 {
            d >= self.band_out
        } else {
            !self.spec.with_hole && -d >= self.band_in
        }
    }

    /// Triangular lattice rows, symmetric about `x = 0`.
    fn lattice(&self, right_half_only: bool) -> Vec<Point2> {
        let l = self.spec.half_width;
        let h = self.h;
        let rows = ((2.0 * l / (h * SQRT3_2)).round() as usize).max(2);
        let dy = 2.0 * l / rows as f64;
        let imax = (l / h).ceil() as i64 + 1;
        let mut pts = Vec::new();
        for j in 1..rows {
            let y = -l + j as f64 * dy;
            let offset = if j % 2 == 1 { 0.5 } else { 0.0 };
            for i in -imax..=imax {
                let x = (i as f64 + offset) * h;
                if right_half_only && x < 0.4 * h {
                    continue;
                }
                let p = Point2::new(x, y);
                if self.keep_lattice_point(p) {
                    pts.push(p);
                }
            }
        }
        pts
    }

    fn circle_vertex(&self, radius: f64, j: usize, n: usize) -> Point2 {
        let p = circle_point(self.center(), radius, j, n);
        if 4 * (j % n) == n || 4 * (j % n) == 3 * n {
            Point2::new(self.center().x, p.y)
        } else {
            p
        }
    }

    fn ring_points(&self, right_half_only: bool) -> Vec<Point2> {
        let mut pts = Vec::new();
        for ring in self.outer_rings.iter().chain(&self.inner_rings) {
            for j in 0..ring.count {
                let p = self.circle_vertex(ring.radius, j, ring.count);
                let on_axis = 4 * j == ring.count || 4 * j == 3 * ring.count;
                // axis crossings are inserted with the axis chains
                if on_axis && right_half_only {
                    continue;
                }
                if !right_half_only || p.x > 0.0 {
                    pts.push(p);
                }
            }
        }
        pts
    }

    /// Interior points of an axis chain from `y0` to `y1` passing through the
    /// `anchors` (strictly between the ends), with gaps filled at spacing ≈ h.
    fn axis_interior(&self, y0: f64, y1: f64, anchors: &[f64]) -> Vec<Point2> {
        let dir = (y1 - y0).signum();
        let mut stops: Vec<f64> = anchors.to_vec();
        stops.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
        stops.push(y1);
        let mut out = Vec::new();
        let mut prev = y0;
        for (k, &stop) in stops.iter().enumerate() {
            let gap = stop - prev;
            let n = ((gap.abs() / self.h).ceil() as usize).max(1);
            out.extend((1..n).map(|i| prev + gap * i as f64 / n as f64));
            if k + 1 < stops.len() {
                out.push(stop);
            }
            prev = stop;
        }
        out.into_iter().map(|y| Point2::new(0.0, y)).collect()
    }

    fn symmetric(&self) -> Result<TriMesh, MeshError> {
        let l = self.spec.half_width;
        let c = self.center();
        let r = self.spec.cell_radius;
        let nc = self.circle_n;
        let half_side = self.side_n / 2;
        let mut b = Builder::default();

        let bottom_axis = b.push(Point2::new(0.0, -l));
        let mut outer_pts = Vec::new();
        outer_pts.extend((1..=half_side).map(|k| Point2::new(l * k as f64 / half_side as f64, -l)));
        outer_pts.extend((1..=self.side_n).map(|k| Point2::new(l, -l + 2.0 * l * k as f64 / self.side_n as f64)));
        outer_pts.extend((1..half_side).map(|k| Point2::new(l - l * k as f64 / half_side as f64, l)));
        let top_axis = b.push(Point2::new(0.0, l));
        b.chain(bottom_axis, &outer_pts, top_axis, Some(EdgeTag::OuterBoundary));

        let circle_top = b.push(self.circle_vertex(r, nc / 4, nc));
        let above: Vec<f64> = self.outer_rings.iter().map(|g| c.y + g.radius).collect();
        b.chain(top_axis, &self.axis_interior(l, c.y + r, &above), circle_top, None);

        let cell_tag = self.spec.with_hole.then_some(EdgeTag::CellBoundary);
        // right half-circle, clockwise from the top
        let arc: Vec<Point2> = (1..nc / 2).map(|k| self.circle_vertex(r, (nc / 4 + nc - k) % nc, nc)).collect();
        let circle_bottom_pt = self.circle_vertex(r, 3 * nc / 4, nc);
        let circle_bottom = b.push(circle_bottom_pt);
        b.chain(circle_top, &arc, circle_bottom, cell_tag);

        let below: Vec<f64> = self.outer_rings.iter().map(|g| c.y - g.radius).collect();
        b.chain(circle_bottom, &self.axis_interior(c.y - r, -l, &below), bottom_axis, None);

        if !self.spec.with_hole {
            let mut anchors = vec![c.y];
            for g in &self.inner_rings {
                anchors.push(c.y + g.radius);
                anchors.push(c.y - g.radius);
            }
            b.chain(circle_top, &self.axis_interior(c.y + r, c.y - r, &anchors), circle_bottom, None);
        }

        for p in self.ring_points(true).into_iter().chain(self.lattice(true)) {
            b.push(p);
        }

        let half = triangulate(&b)?;
        let (ext, disk) = self.split_by_cell(&b.points, half);

        // reflect everything strictly right of the axis
        let mut vertices = b.points.clone();
        let mut mirror = vec![0usize; vertices.len()];
        for (v, p) in b.points.iter().enumerate() {
            if p.x == 0.0 {
                mirror[v] = v;
            } else {
                mirror[v] = vertices.len();
                vertices.push(p.mirror_x(0.0));
            }
        }
        let reflect = |t: &[usize; 3]| [mirror[t[0]], mirror[t[2]], mirror[t[1]]];
        let mut triangles = ext.clone();
        triangles.extend(ext.iter().map(reflect));
        triangles.extend(disk.iter().copied());
        triangles.extend(disk.iter().map(reflect));

        let mut tags = BTreeMap::new();
        for &(a, bb) in &b.outer {
            tags.insert((a, bb), EdgeTag::OuterBoundary);
            tags.insert((mirror[a], mirror[bb]), EdgeTag::OuterBoundary);
        }
        for &(a, bb) in &b.cell {
            tags.insert((a, bb), EdgeTag::CellBoundary);
            tags.insert((mirror[a], mirror[bb]), EdgeTag::CellBoundary);
        }
        TriMesh::new(vertices, triangles, tags, self.h)
    }

    fn full(&self) -> Result<TriMesh, MeshError> {
        let l = self.spec.half_width;
        let r = self.spec.cell_radius;
        let nc = self.circle_n;
        let n = self.side_n;
        let mut b = Builder::default();

        let corner = b.push(Point2::new(-l, -l));
        let mut outer_pts = Vec::new();
        // corners must be exact so each side stays collinear
        let s = |k: usize| if k == n { l } else { -l + 2.0 * l * k as f64 / n as f64 };
        outer_pts.extend((1..=n).map(|k| Point2::new(s(k), -l)));
        outer_pts.extend((1..=n).map(|k| Point2::new(l, s(k))));
        outer_pts.extend((1..=n).map(|k| Point2::new(-s(k), l)));
        outer_pts.extend((1..n).map(|k| Point2::new(-l, -s(k))));
        b.chain(corner, &outer_pts, corner, Some(EdgeTag::OuterBoundary));

        let cell_tag = self.spec.with_hole.then_some(EdgeTag::CellBoundary);
        let first = b.push(self.circle_vertex(r, 0, nc));
        let arc: Vec<Point2> = (1..nc).map(|j| self.circle_vertex(r, j, nc)).collect();
        b.chain(first, &arc, first, cell_tag);

        for p in self.ring_points(false).into_iter().chain(self.lattice(false)) {
            b.push(p);
        }
        let tris = triangulate(&b)?;
        let (mut triangles, disk) = self.split_by_cell(&b.points, tris);
        triangles.extend(disk);

        let mut tags = BTreeMap::new();
        for &e in &b.outer {
            tags.insert(e, EdgeTag::OuterBoundary);
        }
        for &e in &b.cell {
            tags.insert(e, EdgeTag::CellBoundary);
        }
        TriMesh::new(b.points, triangles, tags, self.h)
    }

    /// Inside test against the circle polygon (not the circle itself).
    fn inside_cell_polygon(&self, p: Point2) -> bool {
        let c = self.center();
        let r = self.spec.cell_radius;
        if p.distance(c) >= r {
            return false;
        }
        let n = self.circle_n;
        let sector = ((polar_angle(c, p) / TAU * n as f64).floor() as usize).min(n - 1);
        let a = self.circle_vertex(r, sector, n);
        let b = self.circle_vertex(r, sector + 1, n);
        (b - a).cross(p - a) > 0.0
    }

    /// Splits triangles into (outside cell, inside cell); drops the inside ones for holed meshes.
    fn split_by_cell(&self, points: &[Point2], tris: Vec<[usize; 3]>) -> (Vec<[usize; 3]>, Vec<[usize; 3]>) {
        let (mut ext, mut disk) = (Vec::new(), Vec::new());
        for t in tris {
            let centroid = (points[t[0]] + points[t[1]] + points[t[2]]) * (1.0 / 3.0);
            if self.inside_cell_polygon(centroid) {
                if !self.spec.with_hole {
                    disk.push(t);
                }
            } else {
                ext.push(t);
            }
        }
        (ext, disk)
    }
}

fn ring_count(radius: f64, spacing: f64) -> usize {
    (((TAU * radius / spacing).round() as usize).max(8)).div_ceil(4) * 4
}

fn triangulate(b: &Builder) -> Result<Vec<[usize; 3]>, MeshError> {
    let verts: Vec<SpadePoint<f64>> = b.points.iter().map(|p| SpadePoint::new(p.x, p.y)).collect();
    let cdt = ConstrainedDelaunayTriangulation::<SpadePoint<f64>>::bulk_load_cdt(verts, b.constraints.clone())
        .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
    if cdt.num_vertices() != b.points.len() {
        return Err(MeshError::Triangulation("duplicate vertices in point set".into()));
    }
    let mut tris = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        let [a, bb, c] = face.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (b.points[a], b.points[bb], b.points[c]);
        if (pb - pa).cross(pc - pa) > 0.0 {
            tris.push([a, bb, c]);
        } else {
            tris.push([a, c, bb]);
        }
    }
    Ok(tris)
}
