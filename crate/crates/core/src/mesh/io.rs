//! Plain-text mesh format:
//!
//! ```text
//! nv nt ne
//! x y            (nv lines)
//! i j k          (nt lines)
//! i j tag        (ne lines, tag = OuterBoundary | CellBoundary)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{EdgeTag, MeshError, TriMesh};
use crate::geometry::Point2;

impl TriMesh {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.vertices.len(), self.triangles.len(), self.edge_tags.len());
        for p in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", p.x, p.y);
        }
        for [a, b, c] in &self.triangles {
            let _ = writeln!(out, "{a} {b} {c}");
        }
        for (&(a, b), tag) in &self.edge_tags {
            let _ = writeln!(out, "{a} {b} {}", tag.as_str());
        }
        out
    }

    /// Parses the text format. `characteristic_size` is not stored in the
    /// file and is recomputed as the mean edge length.
    pub fn from_text(text: &str) -> Result<TriMesh, MeshError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: &str| MeshError::Parse { line: line + 1, msg: msg.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(hl, "bad header count")))
            .collect::<Result<_, _>>()?;
        let [nv, nt, ne] = counts[..] else {
            return Err(err(hl, "header must be `nv nt ne`"));
        };
        let mut fields = |n: usize| -> Result<(usize, Vec<String>), MeshError> {
            let (ln, l) = lines.next().ok_or_else(|| err(usize::MAX - 1, "unexpected end of file"))?;
            let f: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if f.len() != n {
                return Err(err(ln, &format!("expected {n} fields, found {}", f.len())));
            }
            Ok((ln, f))
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, f) = fields(2)?;
            let x = f[0].parse().map_err(|_| err(ln, "bad coordinate"))?;
            let y = f[1].parse().map_err(|_| err(ln, "bad coordinate"))?;
            vertices.push(Point2::new(x, y));
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, f) = fields(3)?;
            let mut t = [0usize; 3];
            for k in 0..3 {
                t[k] = f[k].parse().map_err(|_| err(ln, "bad vertex index"))?;
            }
            triangles.push(t);
        }
        let mut tags = BTreeMap::new();
        for _ in 0..ne {
            let (ln, f) = fields(3)?;
            let a = f[0].parse().map_err(|_| err(ln, "bad vertex index"))?;
            let b = f[1].parse().map_err(|_| err(ln, "bad vertex index"))?;
            let tag: EdgeTag = f[2].parse().map_err(|e: String| err(ln, &e))?;
            tags.insert((a, b), tag);
        }
        let mut mesh = TriMesh::new(vertices, triangles, tags, 0.0)?;
        mesh.characteristic_size = mesh.mean_edge_length();
        Ok(mesh)
    }
}
