//! Comparison quantities between the exclusion solution `u_S` (holed mesh)
//! and a point source solution `u_P` (full mesh).
//!
//! All comparisons happen on the holed mesh: `u_P` is interpolated onto its
//! vertices first.

use std::f64::consts::TAU;
use std::io::Write;

use thiserror::Error;

use crate::geometry::Point2;
use crate::mesh::{cell_boundary_samples, Location, MeshError, TriMesh};
use crate::source::FluxSpec;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("vertex {index} at ({}, {}) of the common mesh is not covered by the full mesh", .point.x, .point.y)]
    Unmapped { index: usize, point: Point2 },
    #[error("flux sample at ({}, {}) could not be located", .0.x, .0.y)]
    SampleOutsideMesh(Point2),
    #[error("solutions are at different times: {0} vs {1}")]
    TimeMismatch(f64, f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no exterior triangles near flux sample at ({}, {})", .0.x, .0.y)]
    EmptyPatch(Point2),
    #[error("time grid is not uniform")]
    NonUniformGrid,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Location in the full mesh of every vertex of the common mesh.
#[derive(Debug, Clone)]
pub struct CrossMeshMap {
    entries: Vec<Location>,
}

impl CrossMeshMap {
    pub fn entries(&self) -> &[Location] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Full-mesh values sampled at the common-mesh vertices.
    pub fn transfer(&self, full: &TriMesh, values: &[f64]) -> Result<Vec<f64>, MetricsError> {
        if values.len() != full.num_vertices() {
            return Err(MetricsError::Dimension(format!("{} values for {} vertices", values.len(), full.num_vertices())));
        }
        Ok(self.entries.iter().map(|loc| full.interpolate(loc, values)).collect())
    }
}

pub fn build_cross_mesh_map(common: &TriMesh, full: &TriMesh) -> Result<CrossMeshMap, MetricsError> {
    let entries = common
        .vertices()
        .iter()
        .enumerate()
        .map(|(index, &point)| {
            let mut loc = full.locate(point).ok_or(MetricsError::Unmapped { index, point })?;
            // points within tolerance of an edge get slightly negative weights
            let clamped = loc.barycentric.map(|w| w.clamp(0.0, 1.0));
            let s: f64 = clamped.iter().sum();
            loc.barycentric = clamped.map(|w| w / s);
            Ok(loc)
        })
        .collect::<Result<_, MetricsError>>()?;
    Ok(CrossMeshMap { entries })
}

/// Solution values at one time level.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub time: f64,
    pub values: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct NormDifference {
    pub l2: f64,
    /// Full H¹ norm (L² part plus gradient part).
    pub h1: f64,
    pub h1_semi: f64,
}

/// `‖e‖_{L²}` and `‖e‖_{H¹}` of a P1 field on `mesh`, integrated exactly.
pub fn p1_norms(mesh: &TriMesh, e: &[f64]) -> NormDifference {
    let (mut l2sq, mut semisq) = (0.0, 0.0);
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(k);
        let v = tri.map(|i| e[i]);
        let sum = v[0] + v[1] + v[2];
        l2sq += area / 12.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + sum * sum);
        semisq += area * mesh.gradient(k, e).norm_sq();
    }
    NormDifference { l2: l2sq.sqrt(), h1: (l2sq + semisq).sqrt(), h1_semi: semisq.sqrt() }
}

/// Differences of `u_S` and the interpolant of `u_P` on the common mesh.
pub fn l2_h1_difference(
    common: &TriMesh,
    u_s: Snapshot<'_>,
    full: &TriMesh,
    u_p: Snapshot<'_>,
    map: &CrossMeshMap,
) -> Result<NormDifference, MetricsError> {
    if (u_s.time - u_p.time).abs() > 1e-9 * u_s.time.abs().max(1.0) {
        return Err(MetricsError::TimeMismatch(u_s.time, u_p.time));
    }
    if u_s.values.len() != common.num_vertices() || map.len() != common.num_vertices() {
        return Err(MetricsError::Dimension("exclusion solution or map does not match the common mesh".into()));
    }
    let mapped = map.transfer(full, u_p.values)?;
    let e: Vec<f64> = u_s.values.iter().zip(&mapped).map(|(a, b)| a - b).collect();
    Ok(p1_norms(common, &e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxRecovery {
    /// Gradient of the triangle containing the sample.
    #[default]
    Direct,
    /// Area-weighted mean gradient of exterior triangles with centroid within `h` of the sample.
    Patch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSample {
    pub theta: f64,
    pub flux: f64,
}

/// Boundary flux produced by `u_P` at `m` equally spaced points of the cell circle.
///
/// The value is the mass flux leaving the cell, `D ∇u_P · n` with `n` the
/// unit normal of the exterior domain (pointing into the cell).
pub fn recover_boundary_flux(
    full: &TriMesh,
    values: &[f64],
    diffusivity: f64,
    cell_center: Point2,
    cell_radius: f64,
    m: usize,
    method: FluxRecovery,
) -> Result<Vec<FluxSample>, MetricsError> {
    if values.len() != full.num_vertices() {
        return Err(MetricsError::Dimension(format!("{} values for {} vertices", values.len(), full.num_vertices())));
    }
    let patch_radius = full.characteristic_size();
    cell_boundary_samples(cell_center, cell_radius, m)?
        .into_iter()
        .map(|s| {
            let grad = match method {
                FluxRecovery::Direct => {
                    let loc = full.locate(s.point).ok_or(MetricsError::SampleOutsideMesh(s.point))?;
                    full.gradient(loc.triangle, values)
                }
                FluxRecovery::Patch => {
                    let (mut acc, mut area) = (Point2::default(), 0.0);
                    for t in full.triangles_near(s.point, patch_radius) {
                        if full.centroid(t).distance(cell_center) > cell_radius {
                            let a = full.signed_area(t);
                            acc = acc + full.gradient(t, values) * a;
                            area += a;
                        }
                    }
                    if area == 0.0 {
                        return Err(MetricsError::EmptyPatch(s.point));
                    }
                    acc * (1.0 / area)
                }
            };
            let inward = (cell_center - s.point) * (1.0 / cell_radius);
            Ok(FluxSample { theta: s.theta, flux: diffusivity * grad.dot(inward) })
        })
        .collect()
}

/// `‖φ − recovered‖_{L²(∂Ω_C)}` by the periodic trapezoidal rule.
///
/// The samples must be equally spaced over `[0, 2π)`.
pub fn flux_deviation(samples: &[FluxSample], flux: &FluxSpec) -> Result<f64, MetricsError> {
    if samples.len() < 64 {
        return Err(MetricsError::Mesh(MeshError::TooFewSamples(samples.len())));
    }
    let dtheta = TAU / samples.len() as f64;
    let sum: f64 = samples.iter().map(|s| (flux.at(s.theta) - s.flux).powi(2)).sum();
    Ok((sum * flux.cell_radius * dtheta).sqrt())
}

/// Running trapezoidal integral of `values[k]`, sampled at `times[k]`.
///
/// `times[0]` is the first step; the first interval `[0, times[0]]` holds
/// the value constant, so a single step gives `values[0]·times[0]`.
pub fn cumulative_flux_deviation(times: &[f64], values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if times.len() != values.len() {
        return Err(MetricsError::Dimension(format!("{} times for {} values", times.len(), values.len())));
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let dt = times[0];
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(f64::MIN_POSITIVE));
    if !(dt > 0.0) || !uniform {
        return Err(MetricsError::NonUniformGrid);
    }
    let mut out = Vec::with_capacity(values.len());
    let mut acc = values[0] * times[0];
    out.push(acc);
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        out.push(acc);
    }
    Ok(out)
}

/// One row per time step.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct MetricSeries {
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    pub h1: Vec<f64>,
    pub h1_semi: Vec<f64>,
    pub flux_dev: Vec<f64>,
    pub c_star: Vec<f64>,
}

impl MetricSeries {
    pub fn push(&mut self, time: f64, norms: NormDifference, flux_dev: f64) {
        let prev = self.c_star.last().copied().unwrap_or(0.0);
        let step = match self.times.last() {
            Some(&t0) => 0.5 * (flux_dev + self.flux_dev.last().unwrap()) * (time - t0),
            None => flux_dev * time,
        };
        self.times.push(time);
        self.l2.push(norms.l2);
        self.h1.push(norms.h1);
        self.h1_semi.push(norms.h1_semi);
        self.flux_dev.push(flux_dev);
        self.c_star.push(prev + step);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "l2", "h1", "h1_semi", "flux_dev", "c_star"])?;
        for k in 0..self.len() {
            w.serialize((self.times[k], self.l2[k], self.h1[k], self.h1_semi[k], self.flux_dev[k], self.c_star[k]))?;
        }
        w.flush()?;
        Ok(())
    }
}
