//! Point source surrogates for a cell with sinusoidal outflow.
//!
//! The cell boundary releases `φ(θ) = φ₀(1 + ρ sin nθ)` per unit length. A
//! centered Dirac source plus `n` off-center sources at the flux maxima are
//! given intensities such that the free-space boundary flux they produce
//! (with each intensity frozen at its current value) equals `φ` at the `2n`
//! extreme angles of `φ`.
//!
//! Fluxes here are outward mass fluxes across the cell circle, i.e. positive
//! for a source.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::Point2;

/// Condition number above which the matching system counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("invalid flux: {0}")]
    InvalidFlux(String),
    #[error("r must lie in (0,R): got r = {r}, R = {radius}")]
    OffsetOutOfRange { r: f64, radius: f64 },
    #[error("intensities are not integrable at t = 0; need t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("the closed-form intensities require mode n = 1, got n = {0}")]
    ModeMismatch(u32),
    #[error("matching system is singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("matching system has no exact solution (relative residual {0:e})")]
    Inconsistent(f64),
    #[error("invalid source configuration: {0}")]
    InvalidConfig(String),
    #[error("convolution quadrature did not converge (last relative change {0:e})")]
    QuadratureNotConverged(f64),
    #[error("truncation time must be positive, got {0}")]
    InvalidEpsilon(f64),
}

/// Prescribed flux density `φ(θ) = φ₀ + A sin(nθ)` on the circle of radius `R` around `x_C`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluxSpec {
    pub phi0: f64,
    pub amplitude: f64,
    pub mode: u32,
    pub rho: f64,
    pub cell_center: Point2,
    pub cell_radius: f64,
}

impl FluxSpec {
    pub fn new(phi0: f64, rho: f64, mode: u32, cell_center: Point2, cell_radius: f64) -> Result<Self, SourceError> {
        if !(phi0.is_finite() && phi0 > 0.0) {
            return Err(SourceError::InvalidFlux(format!("phi0 must be positive, got {phi0}")));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(SourceError::InvalidFlux(format!("rho must lie in [0, 1], got {rho}")));
        }
        if mode < 1 {
            return Err(SourceError::InvalidFlux("mode n must be at least 1".into()));
        }
        if !(cell_radius.is_finite() && cell_radius > 0.0 && cell_center.is_finite()) {
            return Err(SourceError::InvalidFlux("cell radius must be positive and finite".into()));
        }
        Ok(Self { phi0, amplitude: rho * phi0, mode, rho, cell_center, cell_radius })
    }

    /// `φ(θ)`
    pub fn at(&self, theta: f64) -> f64 {
        self.phi0 + self.amplitude * (self.mode as f64 * theta).sin()
    }

    /// `φ` at the polar angle of `p` around the cell center.
    pub fn at_point(&self, p: Point2) -> f64 {
        let d = p - self.cell_center;
        self.at(d.y.atan2(d.x))
    }

    /// `x_θ = x_C + R(cos θ, sin θ)`
    pub fn boundary_point(&self, theta: f64) -> Point2 {
        self.cell_center + Point2::new(theta.cos(), theta.sin()) * self.cell_radius
    }

    /// Same spec with a different mode.
    pub fn with_mode(&self, mode: u32) -> Result<Self, SourceError> {
        Self::new(self.phi0, self.rho, mode, self.cell_center, self.cell_radius)
    }

    /// Total release rate `2πRφ₀` (the sine part integrates to zero).
    pub fn total_rate(&self) -> f64 {
        TAU * self.cell_radius * self.phi0
    }
}

pub fn flux_at(spec: &FluxSpec, theta: f64) -> f64 {
    spec.at(theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeAngle {
    /// 1-based index `k`.
    pub k: usize,
    pub theta: f64,
    pub maximum: bool,
}

/// `θ_k = (k − ½)π/n` for `k = 1..2n`; maxima at odd `k`.
pub fn extreme_angles(n: u32) -> Vec<ExtremeAngle> {
    let n = n as usize;
    (1..=2 * n)
        .map(|k| ExtremeAngle { k, theta: (k as f64 - 0.5) * PI / n as f64, maximum: k % 2 == 1 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PointKind {
    Center,
    OffCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourcePoint {
    pub location: Point2,
    pub kind: PointKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum IntensityRule {
    /// One centered source releasing `2πRφ₀`.
    SingleDiracConstant,
    /// The explicit two-point solution for `n = 1`.
    ClosedFormN1,
    /// Extreme-point matching system; with `shared_off_center` all
    /// off-center points carry one common intensity.
    GeneralExtremeMatch { shared_off_center: bool },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceConfig {
    pub points: Vec<SourcePoint>,
    pub rule: IntensityRule,
    /// Off-center distance (0 for a center-only configuration).
    pub r: f64,
    /// Intensities are held at their value at `epsilon` on `(0, epsilon)`.
    pub epsilon: Option<f64>,
}

impl SourceConfig {
    /// The single centered source with constant intensity `2πRφ₀`.
    pub fn single_dirac(spec: &FluxSpec) -> Self {
        Self {
            points: vec![SourcePoint { location: spec.cell_center, kind: PointKind::Center }],
            rule: IntensityRule::SingleDiracConstant,
            r: 0.0,
            epsilon: None,
        }
    }

    /// A lone centered source whose intensity comes from the matching system.
    pub fn center_only(spec: &FluxSpec) -> Self {
        Self {
            rule: IntensityRule::GeneralExtremeMatch { shared_off_center: false },
            ..Self::single_dirac(spec)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self, SourceError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(SourceError::InvalidEpsilon(epsilon));
        }
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    pub fn locations(&self) -> Vec<Point2> {
        self.points.iter().map(|p| p.location).collect()
    }

    fn validate(&self, spec: &FluxSpec) -> Result<(), SourceError> {
        let centers = self.points.iter().filter(|p| p.kind == PointKind::Center).count();
        let tol = 1e-12 * spec.cell_radius;
        for p in &self.points {
            let d = p.location.distance(spec.cell_center);
            match p.kind {
                PointKind::Center if d > tol => {
                    return Err(SourceError::InvalidConfig("center point is not at the cell center".into()))
                }
                PointKind::OffCenter if !(d > 0.0 && d < spec.cell_radius) => {
                    return Err(SourceError::OffsetOutOfRange { r: d, radius: spec.cell_radius })
                }
                _ => {}
            }
        }
        if centers > 1 {
            return Err(SourceError::InvalidConfig("more than one center point".into()));
        }
        Ok(())
    }
}

fn check_offset(spec: &FluxSpec, r: f64) -> Result<(), SourceError> {
    if r > 0.0 && r < spec.cell_radius {
        Ok(())
    } else {
        Err(SourceError::OffsetOutOfRange { r, radius: spec.cell_radius })
    }
}

/// Symmetric placement: the center plus one point at distance `r` on each of
/// the `n` rays toward the maxima of `φ`.
pub fn place_sources(spec: &FluxSpec, r: f64, rule: IntensityRule) -> Result<SourceConfig, SourceError> {
    check_offset(spec, r)?;
    match rule {
        IntensityRule::ClosedFormN1 if spec.mode != 1 => return Err(SourceError::ModeMismatch(spec.mode)),
        IntensityRule::SingleDiracConstant => {
            return Err(SourceError::InvalidConfig("single-Dirac rule takes no off-center points".into()))
        }
        _ => {}
    }
    let c = spec.cell_center;
    let mut points = vec![SourcePoint { location: c, kind: PointKind::Center }];
    for e in extreme_angles(spec.mode).into_iter().filter(|e| e.maximum) {
        let location = if spec.mode == 1 {
            // exactly (x_c, y_c + r)
            Point2::new(c.x, c.y + r)
        } else {
            c + Point2::new(e.theta.cos(), e.theta.sin()) * r
        };
        points.push(SourcePoint { location, kind: PointKind::OffCenter });
    }
    Ok(SourceConfig { points, rule, r, epsilon: None })
}

/// General placement: the center plus `2n − 1` off-center points at distance `r`
/// toward the extreme angles `θ_1 … θ_{2n−1}`, each with its own intensity.
pub fn place_general(spec: &FluxSpec, r: f64) -> Result<SourceConfig, SourceError> {
    check_offset(spec, r)?;
    let c = spec.cell_center;
    let mut points = vec![SourcePoint { location: c, kind: PointKind::Center }];
    let angles = extreme_angles(spec.mode);
    for e in &angles[..angles.len() - 1] {
        points.push(SourcePoint { location: c + Point2::new(e.theta.cos(), e.theta.sin()) * r, kind: PointKind::OffCenter });
    }
    Ok(SourceConfig { points, rule: IntensityRule::GeneralExtremeMatch { shared_off_center: false }, r, epsilon: None })
}

/// `(Φ̃_D(t), Φ̃_C(t))` for one off-center point at `(x_c, y_c + r)`.
///
/// Evaluated in a rearranged form in which no two exponentially small terms
/// are subtracted; algebraically identical to the textbook expression.
pub fn closed_form_intensities_n1(spec: &FluxSpec, r: f64, d: f64, t: f64) -> Result<(f64, f64), SourceError> {
    if spec.mode != 1 {
        return Err(SourceError::ModeMismatch(spec.mode));
    }
    check_offset(spec, r)?;
    if !(t > 0.0) {
        return Err(SourceError::NonPositiveTime(t));
    }
    let big_r = spec.cell_radius;
    let a = spec.amplitude;
    let q = (-big_r * r / (d * t)).exp();
    let den = (big_r + r) - (big_r - r) * q;
    let phi_d = 4.0 * PI * a * (big_r + r) * (big_r - r) * ((big_r - r).powi(2) / (4.0 * d * t)).exp() / den;
    let bracket = spec.phi0 - a - 2.0 * a * (big_r - r) * q / den;
    let phi_c = TAU * big_r * (big_r * big_r / (4.0 * d * t)).exp() * bracket;
    Ok((phi_d, phi_c))
}

/// Kernel of the frozen-intensity boundary flux: contribution per unit
/// intensity at `x` on the circle from a source at `xi`.
pub fn flux_kernel(spec: &FluxSpec, xi: Point2, d: f64, x: Point2, t: f64) -> f64 {
    let dx = x - xi;
    let dist2 = dx.norm_sq();
    (x - spec.cell_center).dot(dx) / dist2 * (-dist2 / (4.0 * d * t)).exp() / (TAU * spec.cell_radius)
}

/// Unknown index of each point in the matching system.
fn unknown_map(config: &SourceConfig) -> (Vec<usize>, usize) {
    match config.rule {
        IntensityRule::GeneralExtremeMatch { shared_off_center: true } | IntensityRule::ClosedFormN1 => {
            let has_center = config.points.iter().any(|p| p.kind == PointKind::Center);
            let off = usize::from(has_center);
            let map = config
                .points
                .iter()
                .map(|p| if p.kind == PointKind::Center { 0 } else { off })
                .collect();
            let n = off + usize::from(config.points.iter().any(|p| p.kind == PointKind::OffCenter));
            (map, n)
        }
        _ => ((0..config.points.len()).collect(), config.points.len()),
    }
}

/// Intensities (one per point, in `config.points` order) that make the
/// frozen-intensity flux match `φ` at all `2n` extreme angles.
pub fn general_intensities(spec: &FluxSpec, config: &SourceConfig, d: f64, t: f64) -> Result<Vec<f64>, SourceError> {
    if !(t > 0.0) {
        return Err(SourceError::NonPositiveTime(t));
    }
    config.validate(spec)?;
    let (map, unknowns) = unknown_map(config);
    let angles = extreme_angles(spec.mode);
    if unknowns == 0 || unknowns > angles.len() {
        return Err(SourceError::InvalidConfig(format!(
            "{unknowns} unknown intensities for {} matching conditions",
            angles.len()
        )));
    }
    let scale = TAU * spec.cell_radius;
    let mut a = DMatrix::<f64>::zeros(angles.len(), unknowns);
    let mut b = DVector::<f64>::zeros(angles.len());
    for (row, e) in angles.iter().enumerate() {
        let x = spec.boundary_point(e.theta);
        for (p, &col) in config.points.iter().zip(&map) {
            a[(row, col)] += scale * flux_kernel(spec, p.location, d, x, t);
        }
        let target = if e.maximum { spec.phi0 + spec.amplitude } else { spec.phi0 - spec.amplitude };
        b[row] = scale * target;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(SourceError::IllConditioned(cond));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| SourceError::InvalidConfig(e.to_string()))?;
    let residual = (&a * &x - &b).norm() / b.norm().max(f64::MIN_POSITIVE);
    if residual > 1e-9 {
        return Err(SourceError::Inconsistent(residual));
    }
    Ok(map.iter().map(|&k| x[k]).collect())
}

/// Frozen-intensity boundary flux `φ̃(x_θ, t)`.
pub fn emergent_flux_tilde(spec: &FluxSpec, config: &SourceConfig, intensities: &[f64], d: f64, theta: f64, t: f64) -> f64 {
    let x = spec.boundary_point(theta);
    config.points.iter().zip(intensities).map(|(p, phi)| phi * flux_kernel(spec, p.location, d, x, t)).sum()
}

#[derive(Debug, Clone)]
enum SeriesKind {
    Constant(Vec<f64>),
    ClosedFormN1 { spec: FluxSpec, r: f64, d: f64 },
    ExtremeMatch { spec: FluxSpec, config: SourceConfig, d: f64 },
}

/// Time-dependent intensities of every point of a configuration.
#[derive(Debug, Clone)]
pub struct IntensitySeries {
    kind: SeriesKind,
    epsilon: Option<f64>,
}

impl IntensitySeries {
    pub fn constant(values: Vec<f64>) -> Self {
        Self { kind: SeriesKind::Constant(values), epsilon: None }
    }

    /// Intensities prescribed by the configuration's rule, truncated at the
    /// configuration's `epsilon` if it has one.
    pub fn for_config(spec: &FluxSpec, config: &SourceConfig, d: f64) -> Result<Self, SourceError> {
        let kind = match config.rule {
            IntensityRule::SingleDiracConstant => {
                if config.points.len() != 1 || config.points[0].kind != PointKind::Center {
                    return Err(SourceError::InvalidConfig("single-Dirac rule needs exactly the center point".into()));
                }
                SeriesKind::Constant(vec![spec.total_rate()])
            }
            IntensityRule::ClosedFormN1 => {
                if spec.mode != 1 {
                    return Err(SourceError::ModeMismatch(spec.mode));
                }
                let expected = [Point2::new(spec.cell_center.x, spec.cell_center.y + config.r)];
                let off: Vec<_> = config.points.iter().filter(|p| p.kind == PointKind::OffCenter).collect();
                let layout_ok = config.points.len() == 2
                    && config.points[0].kind == PointKind::Center
                    && off.len() == 1
                    && off[0].location.distance(expected[0]) <= 1e-12 * spec.cell_radius;
                if !layout_ok {
                    return Err(SourceError::InvalidConfig(
                        "closed form needs the center followed by one point at (x_c, y_c + r)".into(),
                    ));
                }
                check_offset(spec, config.r)?;
                SeriesKind::ClosedFormN1 { spec: *spec, r: config.r, d }
            }
            IntensityRule::GeneralExtremeMatch { .. } => {
                config.validate(spec)?;
                SeriesKind::ExtremeMatch { spec: *spec, config: config.clone(), d }
            }
        };
        let series = Self { kind, epsilon: None };
        match config.epsilon {
            Some(eps) => series.truncated(eps),
            None => Ok(series),
        }
    }

    /// `t ↦ series(max(t, ε))`
    pub fn truncated(mut self, epsilon: f64) -> Result<Self, SourceError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(SourceError::InvalidEpsilon(epsilon));
        }
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, SeriesKind::Constant(_))
    }

    pub fn at(&self, t: f64) -> Result<Vec<f64>, SourceError> {
        let t = self.epsilon.map_or(t, |e| t.max(e));
        match &self.kind {
            SeriesKind::Constant(v) => Ok(v.clone()),
            SeriesKind::ClosedFormN1 { spec, r, d } => {
                let (phi_d, phi_c) = closed_form_intensities_n1(spec, *r, *d, t)?;
                Ok(vec![phi_c, phi_d])
            }
            SeriesKind::ExtremeMatch { spec, config, d } => general_intensities(spec, config, *d, t),
        }
    }
}

pub fn truncate_intensity(series: IntensitySeries, epsilon: f64) -> Result<IntensitySeries, SourceError> {
    series.truncated(epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub initial_steps: usize,
    pub max_steps: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-6, initial_steps: 64, max_steps: 1 << 20 }
    }
}

/// Free-space boundary flux at `x_θ` produced by the intensity history on `[0, t]`.
///
/// Uses `s = t(1 − e^{−w})`, which grades the nodes toward `s = t`, and the
/// composite midpoint rule in `w`, doubling the node count until two
/// successive results agree to `rel_tol`. The `w` range is split at the
/// truncation time and cut off where the heat kernel underflows.
pub fn emergent_flux_convolution(
    spec: &FluxSpec,
    config: &SourceConfig,
    history: &IntensitySeries,
    d: f64,
    theta: f64,
    t: f64,
    opts: QuadratureOptions,
) -> Result<f64, SourceError> {
    if !(t > 0.0) {
        return Err(SourceError::NonPositiveTime(t));
    }
    let x = spec.boundary_point(theta);
    let big_r = spec.cell_radius;
    // split points in w: truncation time ε and the underflow cut-off
    let mut w_breaks = vec![0.0];
    if let Some(eps) = history.epsilon() {
        if eps < t {
            w_breaks.push(-(1.0 - eps / t).ln());
        }
    }
    let min_dist2 = config.locations().iter().map(|p| (x - *p).norm_sq()).fold(f64::INFINITY, f64::min);
    let tau_min = min_dist2 / (4.0 * d * 740.0);
    if tau_min >= t {
        return Ok(0.0);
    }
    let w_max = (t / tau_min).ln();
    w_breaks.retain(|&w| w < w_max);
    w_breaks.push(w_max);

    let integrand = |w: f64| -> Result<f64, SourceError> {
        let tau = t * (-w).exp();
        let phis = history.at(t - tau)?;
        let mut acc = 0.0;
        for (p, phi) in config.points.iter().zip(&phis) {
            let dx = x - p.location;
            let dist2 = dx.norm_sq();
            acc += phi * (-dist2 / (4.0 * d * tau)).exp() * dx.dot(x - spec.cell_center)
                / (8.0 * PI * d * tau * big_r);
        }
        Ok(acc)
    };
    let midpoint = |n: usize| -> Result<(f64, f64), SourceError> {
        let (mut total, mut magnitude) = (0.0, 0.0);
        for seg in w_breaks.windows(2) {
            let hw = (seg[1] - seg[0]) / n as f64;
            for i in 0..n {
                let v = integrand(seg[0] + (i as f64 + 0.5) * hw)? * hw;
                total += v;
                magnitude += v.abs();
            }
        }
        Ok((total, magnitude))
    };
    let mut n = opts.initial_steps.max(1);
    let (mut prev, _) = midpoint(n)?;
    let mut change = f64::INFINITY;
    while 2 * n <= opts.max_steps {
        n *= 2;
        let (cur, magnitude) = midpoint(n)?;
        if magnitude == 0.0 {
            return Ok(0.0);
        }
        change = (cur - prev).abs() / cur.abs().max(1e-12 * magnitude);
        if change < opts.rel_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SourceError::QuadratureNotConverged(change))
}
