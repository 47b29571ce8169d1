use crate::geometry::Point2;

/// Containing triangle plus barycentric weights (ordered like the triangle's vertices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

/// Uniform grid of buckets; each bucket lists (in ascending order) every
/// triangle whose bounding box overlaps it.
#[derive(Debug, Clone)]
pub(crate) struct BucketIndex {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl BucketIndex {
    pub(crate) fn build(vertices: &[Point2], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
        for p in vertices {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
        // about two triangles per bucket on average
        let target = ((triangles.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 2048);
        let cell = span / target as f64 * (1.0 + 1e-12);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut idx = Self { origin: lo, cell, nx, ny, offsets: Vec::new(), items: Vec::new() };

        let ranges: Vec<_> = triangles
            .iter()
            .map(|tri| {
                let pts = tri.map(|v| vertices[v]);
                let (x0, x1) = (pts[0].x.min(pts[1].x).min(pts[2].x), pts[0].x.max(pts[1].x).max(pts[2].x));
                let (y0, y1) = (pts[0].y.min(pts[1].y).min(pts[2].y), pts[0].y.max(pts[1].y).max(pts[2].y));
                let (i0, j0) = idx.cell_of(Point2::new(x0, y0));
                let (i1, j1) = idx.cell_of(Point2::new(x1, y1));
                // widen by one bucket so that tolerance-inflated containment tests never miss
                (i0.saturating_sub(1), (i1 + 1).min(nx - 1), j0.saturating_sub(1), (j1 + 1).min(ny - 1))
            })
            .collect();
        let mut counts = vec![0usize; nx * ny + 1];
        for &(i0, i1, j0, j1) in &ranges {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[nx * ny]];
        for (t, &(i0, i1, j0, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let b = j * nx + i;
                    items[fill[b]] = t as u32;
                    fill[b] += 1;
                }
            }
        }
        idx.offsets = counts;
        idx.items = items;
        idx
    }

    fn cell_of(&self, p: Point2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        let i = if fx.is_nan() || fx < 0.0 { 0 } else { (fx as usize).min(self.nx - 1) };
        let j = if fy.is_nan() || fy < 0.0 { 0 } else { (fy as usize).min(self.ny - 1) };
        (i, j)
    }

    fn bucket(&self, i: usize, j: usize) -> &[u32] {
        let b = j * self.nx + i;
        &self.items[self.offsets[b]..self.offsets[b + 1]]
    }

    pub(crate) fn locate(&self, vertices: &[Point2], triangles: &[[usize; 3]], p: Point2, tol: f64) -> Option<Location> {
        if !p.is_finite() {
            return None;
        }
        let (i, j) = self.cell_of(p);
        self.bucket(i, j)
            .iter()
            .find_map(|&t| barycentric_within(vertices, triangles[t as usize], p, tol).map(|b| (t as usize, b)))
            .map(|(triangle, barycentric)| Location { triangle, barycentric })
    }

    pub(crate) fn triangles_near(&self, vertices: &[Point2], triangles: &[[usize; 3]], p: Point2, radius: f64) -> Vec<usize> {
        let (i0, j0) = self.cell_of(Point2::new(p.x - radius, p.y - radius));
        let (i1, j1) = self.cell_of(Point2::new(p.x + radius, p.y + radius));
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &t in self.bucket(i, j) {
                    let tri = triangles[t as usize];
                    let c = (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) * (1.0 / 3.0);
                    if c.distance(p) <= radius {
                        out.push(t as usize);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Barycentric coordinates of `p` in `tri` if `p` lies inside it or within
/// distance `tol` of it.
pub(crate) fn barycentric_within(vertices: &[Point2], tri: [usize; 3], p: Point2, tol: f64) -> Option<[f64; 3]> {
    let [a, b, c] = tri.map(|v| vertices[v]);
    let area2 = (b - a).cross(c - a);
    let lam = [(b - p).cross(c - p) / area2, (c - p).cross(a - p) / area2, (a - p).cross(b - p) / area2];
    let edges = [(c - b).norm(), (a - c).norm(), (b - a).norm()];
    for k in 0..3 {
        // λ_k times the altitude is the signed distance to the opposite edge
        if lam[k] * area2 / edges[k] < -tol {
            return None;
        }
    }
    Some(lam)
}
