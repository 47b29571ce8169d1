//! P1 finite elements for `∂u/∂t = D Δu` with backward Euler in time.
//!
//! Both models start from `u = 0`, have zero flux through the outer square
//! and differ only in the forcing: a prescribed boundary flux on the cell
//! circle (exclusion model, holed mesh) or Dirac sources inside the disk
//! (point source model, full mesh).

use std::io::Write;

use thiserror::Error;

use crate::geometry::Point2;
use crate::mesh::{EdgeTag, Location, MeshError, TriMesh};
use crate::source::{FluxSpec, IntensitySeries, SourceConfig, SourceError};
use crate::sparse::{dot, pcg, CgOptions, CsrMatrix, SolverError};

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("mesh has no edge tagged {0}")]
    MissingTag(&'static str),
    #[error("source at ({}, {}) lies outside the mesh", .0.x, .0.y)]
    SourceOutsideMesh(Point2),
    #[error("invalid time grid: {0}")]
    TimeGrid(String),
    #[error("linear solve failed at step {step} (t = {time}): {source}")]
    Solver { step: usize, time: f64, source: SolverError },
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Consistent P1 mass matrix: `(|T|/12)(1 + δ_ij)` per triangle.
pub fn assemble_mass(mesh: &TriMesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.num_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(k);
        for i in 0..3 {
            for j in 0..3 {
                let w = if i == j { a / 6.0 } else { a / 12.0 };
                t.push((tri[i], tri[j], w));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), t)
}

/// Row-sum lumped mass matrix, stored with the consistent sparsity pattern.
pub fn assemble_lumped_mass(mesh: &TriMesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.num_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(k);
        for i in 0..3 {
            for j in 0..3 {
                t.push((tri[i], tri[j], if i == j { a / 3.0 } else { 0.0 }));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), t)
}

/// P1 stiffness matrix `D ∫ ∇φ_i · ∇φ_j`.
pub fn assemble_stiffness(mesh: &TriMesh, diffusivity: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.num_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(k);
        let g = mesh.basis_gradients(k);
        for i in 0..3 {
            for j in 0..3 {
                t.push((tri[i], tri[j], diffusivity * a * g[i].dot(g[j])));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_vertices(), t)
}

/// `∫_Γ g φ_i ds` over the edges carrying `tag`, two Gauss points per edge.
pub fn assemble_neumann_load(mesh: &TriMesh, g: impl Fn(Point2) -> f64, tag: EdgeTag) -> Result<Vec<f64>, FemError> {
    if !mesh.has_tag(tag) {
        return Err(FemError::MissingTag(tag.as_str()));
    }
    let v = mesh.vertices();
    let mut b = vec![0.0; mesh.num_vertices()];
    let off = 0.5 / 3f64.sqrt();
    for (i, j) in mesh.tagged_edges(tag) {
        let (p, q) = (v[i], v[j]);
        let half_len = 0.5 * p.distance(q);
        for xi in [0.5 - off, 0.5 + off] {
            let w = half_len * g(p + (q - p) * xi);
            b[i] += w * (1.0 - xi);
            b[j] += w * xi;
        }
    }
    Ok(b)
}

/// Precomputed locations of point sources on a mesh.
#[derive(Debug, Clone)]
pub struct DiracLoad {
    locations: Vec<Location>,
    n: usize,
}

impl DiracLoad {
    pub fn new(mesh: &TriMesh, points: &[Point2]) -> Result<Self, FemError> {
        let locations = points
            .iter()
            .map(|&p| mesh.locate(p).ok_or(FemError::SourceOutsideMesh(p)))
            .collect::<Result<_, _>>()?;
        Ok(Self { locations, n: mesh.num_vertices() })
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    /// `b_i = Σ_k Φ_k φ_i(x_k)`
    pub fn assemble(&self, mesh: &TriMesh, intensities: &[f64]) -> Result<Vec<f64>, FemError> {
        if intensities.len() != self.locations.len() {
            return Err(FemError::Dimension(format!(
                "{} intensities for {} sources",
                intensities.len(),
                self.locations.len()
            )));
        }
        let mut b = vec![0.0; self.n];
        for (loc, &phi) in self.locations.iter().zip(intensities) {
            let tri = mesh.triangles()[loc.triangle];
            for k in 0..3 {
                b[tri[k]] += phi * loc.barycentric[k];
            }
        }
        Ok(b)
    }
}

pub fn assemble_dirac_load(mesh: &TriMesh, sources: &[(Point2, f64)]) -> Result<Vec<f64>, FemError> {
    let points: Vec<Point2> = sources.iter().map(|s| s.0).collect();
    let intensities: Vec<f64> = sources.iter().map(|s| s.1).collect();
    DiracLoad::new(mesh, &points)?.assemble(mesh, &intensities)
}

/// Uniform grid `t_k = k·dt`, `k = 0..=steps`, with `steps·dt = T`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_end: f64) -> Result<Self, FemError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(FemError::TimeGrid(format!("dt must be positive, got {dt}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(FemError::TimeGrid(format!("T must be positive, got {t_end}")));
        }
        let ratio = t_end / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(FemError::TimeGrid(format!("T = {t_end} is not an integer multiple of dt = {dt}")));
        }
        Ok(Self { dt, t_end, steps: steps as usize })
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum MassKind {
    #[default]
    Consistent,
    Lumped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub cg: CgOptions,
    pub mass: MassKind,
    /// Adds a constant after each solve so that `1ᵀM u` changes by exactly the injected mass.
    pub conserve_mass: bool,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self { cg: CgOptions::default(), mass: MassKind::Consistent, conserve_mass: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
}

/// `(M + dt·A) u_{k+1} = M u_k + dt·b_{k+1}` with fixed matrices.
#[derive(Debug, Clone)]
pub struct BackwardEuler {
    mass: CsrMatrix,
    system: CsrMatrix,
    dt: f64,
    mass_total: f64,
    opts: StepperOptions,
}

impl BackwardEuler {
    pub fn new(mass: CsrMatrix, stiffness: &CsrMatrix, dt: f64, opts: StepperOptions) -> Result<Self, FemError> {
        if !(dt > 0.0) {
            return Err(FemError::TimeGrid(format!("dt must be positive, got {dt}")));
        }
        let system = CsrMatrix::linear_combination(1.0, &mass, dt, stiffness)
            .map_err(|source| FemError::Solver { step: 0, time: 0.0, source })?;
        let mass_total = mass.sum();
        Ok(Self { mass, system, dt, mass_total, opts })
    }

    pub fn for_mesh(mesh: &TriMesh, diffusivity: f64, dt: f64, opts: StepperOptions) -> Result<Self, FemError> {
        if !(diffusivity.is_finite() && diffusivity > 0.0) {
            return Err(FemError::Parameter(format!("diffusivity must be positive, got {diffusivity}")));
        }
        let mass = match opts.mass {
            MassKind::Consistent => assemble_mass(mesh),
            MassKind::Lumped => assemble_lumped_mass(mesh),
        };
        Self::new(mass, &assemble_stiffness(mesh, diffusivity), dt, opts)
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step from `u_prev` with load `b_{k+1}`; CG is warm-started at `u_prev`.
    pub fn step(&self, u_prev: &[f64], load: &[f64]) -> Result<(Vec<f64>, StepStats), SolverError> {
        let n = self.system.dim();
        if u_prev.len() != n || load.len() != n {
            return Err(SolverError::Dimension(format!(
                "system is {n}x{n}, state {} and load {}",
                u_prev.len(),
                load.len()
            )));
        }
        let mut rhs = self.mass.mul_vec(u_prev);
        for (r, b) in rhs.iter_mut().zip(load) {
            *r += self.dt * b;
        }
        let mut u = u_prev.to_vec();
        let out = pcg(&self.system, &rhs, &mut u, self.opts.cg)?;
        if self.opts.conserve_mass {
            // the stiffness annihilates constants, so this zeroes 1ᵀ(rhs − S u)
            let su = self.system.mul_vec(&u);
            let defect: f64 = rhs.iter().zip(&su).map(|(r, s)| r - s).sum();
            let c = defect / self.mass_total;
            u.iter_mut().for_each(|v| *v += c);
        }
        Ok((u, StepStats { iterations: out.iterations, residual: out.residual }))
    }

    /// `1ᵀ M u`
    pub fn total_mass(&self, u: &[f64]) -> f64 {
        let mu = self.mass.mul_vec(u);
        mu.iter().sum()
    }
}

/// One backward Euler step with default solver options.
pub fn step_backward_euler(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    u_prev: &[f64],
    load: &[f64],
    dt: f64,
) -> Result<Vec<f64>, FemError> {
    let be = BackwardEuler::new(mass.clone(), stiffness, dt, StepperOptions::default())?;
    be.step(u_prev, load).map(|(u, _)| u).map_err(|source| FemError::Solver { step: 1, time: dt, source })
}

#[derive(Debug, Clone)]
enum Forcing {
    Fixed(Vec<f64>),
    Sources { load: DiracLoad, series: IntensitySeries },
}

/// Time stepper for either model, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct HeatStepper<'m> {
    mesh: &'m TriMesh,
    integrator: BackwardEuler,
    forcing: Forcing,
    grid: TimeGrid,
    diffusivity: f64,
    step: usize,
    u: Vec<f64>,
    intensities: Vec<f64>,
    injected: f64,
}

impl<'m> HeatStepper<'m> {
    /// Exclusion model: flux `φ` into the domain on the cell boundary.
    pub fn exclusion(
        mesh: &'m TriMesh,
        flux: &FluxSpec,
        diffusivity: f64,
        grid: TimeGrid,
        opts: StepperOptions,
    ) -> Result<Self, FemError> {
        let load = assemble_neumann_load(mesh, |p| flux.at_point(p), EdgeTag::CellBoundary)?;
        let integrator = BackwardEuler::for_mesh(mesh, diffusivity, grid.dt, opts)?;
        Ok(Self::with_forcing(mesh, integrator, Forcing::Fixed(load), grid, diffusivity))
    }

    /// Point source model for the given placement and intensity rule.
    pub fn point_source(
        mesh: &'m TriMesh,
        flux: &FluxSpec,
        sources: &SourceConfig,
        diffusivity: f64,
        grid: TimeGrid,
        opts: StepperOptions,
    ) -> Result<Self, FemError> {
        let series = IntensitySeries::for_config(flux, sources, diffusivity)?;
        let load = DiracLoad::new(mesh, &sources.locations())?;
        let integrator = BackwardEuler::for_mesh(mesh, diffusivity, grid.dt, opts)?;
        Ok(Self::with_forcing(mesh, integrator, Forcing::Sources { load, series }, grid, diffusivity))
    }

    fn with_forcing(mesh: &'m TriMesh, integrator: BackwardEuler, forcing: Forcing, grid: TimeGrid, diffusivity: f64) -> Self {
        Self {
            mesh,
            integrator,
            forcing,
            grid,
            diffusivity,
            step: 0,
            u: vec![0.0; mesh.num_vertices()],
            intensities: Vec::new(),
            injected: 0.0,
        }
    }

    pub fn mesh(&self) -> &'m TriMesh {
        self.mesh
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.grid.time(self.step)
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.grid.steps
    }

    /// Intensities used in the most recent step (empty for the exclusion model).
    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn total_mass(&self) -> f64 {
        self.integrator.total_mass(&self.u)
    }

    /// Mass added by the forcing so far, `Σ dt·1ᵀb_k`.
    pub fn injected_mass(&self) -> f64 {
        self.injected
    }

    pub fn advance(&mut self) -> Result<StepStats, FemError> {
        if self.is_finished() {
            return Err(FemError::TimeGrid("time grid exhausted".into()));
        }
        let t_next = self.grid.time(self.step + 1);
        let load = match &self.forcing {
            Forcing::Fixed(b) => b.clone(),
            Forcing::Sources { load, series } => {
                self.intensities = series.at(t_next)?;
                load.assemble(self.mesh, &self.intensities)?
            }
        };
        let (u, stats) = self
            .integrator
            .step(&self.u, &load)
            .map_err(|source| FemError::Solver { step: self.step + 1, time: t_next, source })?;
        self.injected += self.grid.dt * load.iter().sum::<f64>();
        self.u = u;
        self.step += 1;
        Ok(stats)
    }
}

/// Which time levels a solver keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOptions {
    /// Keep every `every`-th step; `t = 0` and `t = T` are always kept.
    pub every: usize,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self { every: 1 }
    }
}

/// Recorded nodal values of one model run.
#[derive(Debug, Clone)]
pub struct FieldSolution<'m> {
    pub mesh: &'m TriMesh,
    pub diffusivity: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Solver statistics of every step, recorded or not.
    pub stats: Vec<StepStats>,
}

impl FieldSolution<'_> {
    pub fn last(&self) -> (f64, &[f64]) {
        (*self.times.last().unwrap(), self.values.last().unwrap())
    }

    /// Values at the recorded time closest to `t`.
    pub fn at_time(&self, t: f64) -> Option<&[f64]> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol).map(|k| self.values[k].as_slice())
    }
}

fn run<'m>(mut stepper: HeatStepper<'m>, record: RecordOptions) -> Result<FieldSolution<'m>, FemError> {
    let every = record.every.max(1);
    let mut sol = FieldSolution {
        mesh: stepper.mesh(),
        diffusivity: stepper.diffusivity(),
        times: vec![0.0],
        values: vec![stepper.values().to_vec()],
        stats: Vec::with_capacity(stepper.grid().steps),
    };
    while !stepper.is_finished() {
        sol.stats.push(stepper.advance()?);
        if stepper.step_index().is_multiple_of(every) || stepper.is_finished() {
            sol.times.push(stepper.time());
            sol.values.push(stepper.values().to_vec());
        }
    }
    Ok(sol)
}

pub fn solve_exclusion_model<'m>(
    mesh: &'m TriMesh,
    flux: &FluxSpec,
    diffusivity: f64,
    grid: TimeGrid,
    opts: StepperOptions,
    record: RecordOptions,
) -> Result<FieldSolution<'m>, FemError> {
    run(HeatStepper::exclusion(mesh, flux, diffusivity, grid, opts)?, record)
}

pub fn solve_point_source_model<'m>(
    mesh: &'m TriMesh,
    flux: &FluxSpec,
    sources: &SourceConfig,
    diffusivity: f64,
    grid: TimeGrid,
    opts: StepperOptions,
    record: RecordOptions,
) -> Result<FieldSolution<'m>, FemError> {
    run(HeatStepper::point_source(mesh, flux, sources, diffusivity, grid, opts)?, record)
}

/// Writes `vertex_index,x,y,value` rows.
pub fn write_snapshot_csv(mesh: &TriMesh, values: &[f64], out: impl Write) -> Result<(), FemError> {
    if values.len() != mesh.num_vertices() {
        return Err(FemError::Dimension(format!("{} values for {} vertices", values.len(), mesh.num_vertices())));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vertex_index", "x", "y", "value"])?;
    for (i, (p, v)) in mesh.vertices().iter().zip(values).enumerate() {
        w.serialize((i, p.x, p.y, v))?;
    }
    w.flush()?;
    Ok(())
}

// Degree-5 seven-point rule on the reference triangle: (λ1, λ2, weight), λ3 = 1 − λ1 − λ2.
const QUAD7: [(f64, f64, f64); 7] = [
    (1.0 / 3.0, 1.0 / 3.0, 0.225),
    (0.059_715_871_789_770, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.470_142_064_105_115, 0.059_715_871_789_770, 0.132_394_152_788_506),
    (0.470_142_064_105_115, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827),
    (0.101_286_507_323_456, 0.797_426_985_353_087, 0.125_939_180_544_827),
    (0.101_286_507_323_456, 0.101_286_507_323_456, 0.125_939_180_544_827),
];

/// `‖u_h − u‖_{L²}` for a P1 field against an exact function.
pub fn l2_error_exact(mesh: &TriMesh, values: &[f64], exact: impl Fn(Point2) -> f64) -> f64 {
    let mut acc = 0.0;
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(k);
        let area = mesh.signed_area(k);
        for &(l1, l2, w) in &QUAD7 {
            let l3 = 1.0 - l1 - l2;
            let p = a * l1 + b * l2 + c * l3;
            let uh = l1 * values[tri[0]] + l2 * values[tri[1]] + l3 * values[tri[2]];
            acc += w * area * (uh - exact(p)).powi(2);
        }
    }
    acc.sqrt()
}

/// `1ᵀ M u` for the consistent mass matrix without assembling it.
pub fn integrate(mesh: &TriMesh, values: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(k, tri)| mesh.signed_area(k) * (values[tri[0]] + values[tri[1]] + values[tri[2]]) / 3.0)
        .sum()
}

/// Discrete energy `uᵀ A u`.
pub fn energy(stiffness: &CsrMatrix, u: &[f64]) -> f64 {
    dot(u, &stiffness.mul_vec(u))
}
