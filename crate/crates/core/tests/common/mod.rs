#![allow(dead_code)]

use std::f64::consts::PI;

use cellflux::fem::{l2_error_exact, BackwardEuler, HeatStepper, StepperOptions};
use cellflux::geometry::Point2;
use cellflux::mesh::{generate_mesh, DomainSpec, TriMesh};
use cellflux::metrics::FluxSample;

/// `u = cos x cos y` on `[−π, π]²` decays by `(1 + 2D·dt)^{-k}` under exact
/// backward Euler; returns `(mean edge length, L² error at T)` per mesh size.
pub fn mms_errors(sizes: &[f64], d: f64, dt: f64, steps: usize) -> Vec<(f64, f64)> {
    sizes
        .iter()
        .map(|&h| {
            let mesh = generate_mesh(&DomainSpec::new(PI, Point2::default(), 1.0, false, h)).unwrap();
            let be = BackwardEuler::for_mesh(&mesh, d, dt, StepperOptions::default()).unwrap();
            let mut u: Vec<f64> = mesh.vertices().iter().map(|p| p.x.cos() * p.y.cos()).collect();
            let zero = vec![0.0; mesh.num_vertices()];
            for _ in 0..steps {
                u = be.step(&u, &zero).unwrap().0;
            }
            let decay = (1.0 + 2.0 * d * dt).powi(-(steps as i32));
            (mesh.mean_edge_length(), l2_error_exact(&mesh, &u, |p| p.x.cos() * p.y.cos() * decay))
        })
        .collect()
}

/// Observed convergence rates between successive levels.
pub fn rates(errors: &[(f64, f64)]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect()
}

/// Runs a stepper to completion; largest per-step mass-balance defect
/// `|Δ(1ᵀMu) − dt·1ᵀb| / max(|1ᵀMu_prev|, |1ᵀMu_next|)`.
pub fn worst_mass_defect(stepper: &mut HeatStepper<'_>) -> f64 {
    let mut worst = 0.0f64;
    while !stepper.is_finished() {
        let (m0, i0) = (stepper.total_mass(), stepper.injected_mass());
        stepper.advance().unwrap();
        let (m1, i1) = (stepper.total_mass(), stepper.injected_mass());
        let scale = m0.abs().max(m1.abs());
        if scale > 0.0 {
            worst = worst.max(((m1 - m0) - (i1 - i0)).abs() / scale);
        }
    }
    worst
}

/// `max |u_i − u_{σ(i)}| / max |u|` for the mirror permutation `σ`.
pub fn mirror_defect(values: &[f64], map: &[usize]) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = values.iter().enumerate().map(|(i, v)| (v - values[map[i]]).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Mirror defect of equally spaced flux samples: `θ_j ↔ π − θ_j`.
pub fn flux_mirror_defect(samples: &[FluxSample]) -> f64 {
    let m = samples.len();
    let scale = samples.iter().fold(0.0f64, |acc, s| acc.max(s.flux.abs()));
    let worst = (0..m).map(|j| (samples[j].flux - samples[(m / 2 + m - j) % m].flux).abs()).fold(0.0, f64::max);
    worst / scale
}

pub fn mesh_pair(spec: DomainSpec) -> (TriMesh, TriMesh) {
    (generate_mesh(&spec.with_hole(true)).unwrap(), generate_mesh(&spec.with_hole(false)).unwrap())
}
