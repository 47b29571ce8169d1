use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use proptest::prelude::*;

use cellflux::geometry::Point2;
use cellflux::mesh::{generate_mesh, DomainSpec, TriMesh};
use cellflux::metrics::{
    build_cross_mesh_map, cumulative_flux_deviation, flux_deviation, l2_h1_difference, p1_norms, recover_boundary_flux,
    FluxRecovery, FluxSample, MetricSeries, MetricsError, NormDifference, Snapshot,
};
use cellflux::source::FluxSpec;

const D: f64 = 5.0;

fn small_pair() -> &'static (TriMesh, TriMesh) {
    static PAIR: OnceLock<(TriMesh, TriMesh)> = OnceLock::new();
    PAIR.get_or_init(|| {
        let spec = DomainSpec::new(2.0, Point2::new(0.1, -0.05), 0.6, true, 0.3);
        (generate_mesh(&spec).unwrap(), generate_mesh(&spec.with_hole(false)).unwrap())
    })
}

fn paper_full_mesh() -> &'static TriMesh {
    static MESH: OnceLock<TriMesh> = OnceLock::new();
    MESH.get_or_init(|| generate_mesh(&DomainSpec::new(10.0, Point2::default(), 1.0, false, 0.0875)).unwrap())
}

fn unit_flux() -> FluxSpec {
    FluxSpec::new(1.0, 1.0, 1, Point2::default(), 1.0).unwrap()
}

/// Element-by-element norms without any shared code: the edge-midpoint rule
/// is exact for the quadratic `e²`, and the gradient solves the 2×2 system
/// of the plane through the three vertex values.
fn brute_force_norms(mesh: &TriMesh, e: &[f64]) -> (f64, f64) {
    let (mut l2, mut semi) = (0.0, 0.0);
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|i| mesh.vertices()[i]);
        let [ea, eb, ec] = tri.map(|i| e[i]);
        let (x1, y1, x2, y2) = (b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
        let det = x1 * y2 - x2 * y1;
        let area = 0.5 * det.abs();
        let mids = [0.5 * (ea + eb), 0.5 * (eb + ec), 0.5 * (ec + ea)];
        l2 += area / 3.0 * mids.iter().map(|m| m * m).sum::<f64>();
        let (d1, d2) = (eb - ea, ec - ea);
        let gx = (d1 * y2 - d2 * y1) / det;
        let gy = (x1 * d2 - x2 * d1) / det;
        semi += area * (gx * gx + gy * gy);
    }
    (l2.sqrt(), semi.sqrt())
}

fn random_field(mesh: &TriMesh, seed: u64) -> Vec<f64> {
    // small LCG keeps the strategy a single integer
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..mesh.num_vertices())
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

fn difference(u_s: &[f64], u_p: &[f64]) -> NormDifference {
    let (holed, full) = small_pair();
    let map = build_cross_mesh_map(holed, full).unwrap();
    l2_h1_difference(holed, Snapshot { time: 1.0, values: u_s }, full, Snapshot { time: 1.0, values: u_p }, &map).unwrap()
}

#[test]
fn identical_meshes_give_identity_map() {
    let (holed, _) = small_pair();
    let map = build_cross_mesh_map(holed, holed).unwrap();
    let values = random_field(holed, 7);
    for (v, loc) in map.entries().iter().enumerate() {
        let tri = holed.triangles()[loc.triangle];
        let k = tri.iter().position(|&i| i == v).expect("vertex belongs to its located triangle");
        assert!((loc.barycentric[k] - 1.0).abs() < 1e-12);
    }
    let moved = map.transfer(holed, &values).unwrap();
    for (a, b) in moved.iter().zip(&values) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn holed_vertices_outside_the_full_mesh_are_reported() {
    let (holed, _) = small_pair();
    let smaller = generate_mesh(&DomainSpec::new(1.5, Point2::new(0.1, -0.05), 0.6, false, 0.3)).unwrap();
    match build_cross_mesh_map(holed, &smaller) {
        Err(MetricsError::Unmapped { point, .. }) => assert!(point.x.abs().max(point.y.abs()) > 1.5),
        other => panic!("expected an unmapped vertex, got {other:?}"),
    }
}

#[test]
fn mismatched_times_are_rejected() {
    let (holed, full) = small_pair();
    let map = build_cross_mesh_map(holed, full).unwrap();
    let (us, up) = (vec![0.0; holed.num_vertices()], vec![0.0; full.num_vertices()]);
    let r = l2_h1_difference(holed, Snapshot { time: 1.0, values: &us }, full, Snapshot { time: 1.04, values: &up }, &map);
    assert!(matches!(r, Err(MetricsError::TimeMismatch(..))));
}

#[test]
fn constant_difference_has_closed_form_norms() {
    let (holed, full) = small_pair();
    let c = 0.75;
    // holed vertices are full-mesh vertices, so the mapped x² is exact there
    let us: Vec<f64> = holed.vertices().iter().map(|p| p.x * p.x + c).collect();
    let up: Vec<f64> = full.vertices().iter().map(|p| p.x * p.x).collect();
    let exact = c * holed.total_area().sqrt();
    let n = difference(&us, &up);
    assert!((n.l2 - exact).abs() < 1e-10 * exact);
    assert!((n.h1 - exact).abs() < 1e-10 * exact);
    assert!(n.h1_semi < 1e-10);
}

#[test]
fn linear_field_recovers_linear_flux() {
    let (_, full) = small_pair();
    let center = Point2::new(0.1, -0.05);
    let (a, b) = (0.4, -1.1);
    let u: Vec<f64> = full.vertices().iter().map(|p| a * p.x + b * p.y + 3.0).collect();
    for method in [FluxRecovery::Direct, FluxRecovery::Patch] {
        for s in recover_boundary_flux(full, &u, D, center, 0.6, 96, method).unwrap() {
            // mass leaving the cell: D∇u against the radial direction
            let expected = -D * (a * s.theta.cos() + b * s.theta.sin());
            assert!((s.flux - expected).abs() < 1e-10, "{method:?} θ={}", s.theta);
        }
    }
    let flat = vec![2.0; full.num_vertices()];
    assert!(recover_boundary_flux(full, &flat, D, center, 0.6, 96, FluxRecovery::Direct)
        .unwrap()
        .iter()
        .all(|s| s.flux.abs() < 1e-12));
}

#[test]
fn deviation_of_zero_flux_is_the_flux_norm() {
    let samples: Vec<FluxSample> = (0..360).map(|j| FluxSample { theta: TAU * j as f64 / 360.0, flux: 0.0 }).collect();
    let dev = flux_deviation(&samples, &unit_flux()).unwrap();
    assert!((dev - (3.0 * PI).sqrt()).abs() < 1e-12);
    let exact: Vec<FluxSample> = samples.iter().map(|s| FluxSample { flux: unit_flux().at(s.theta), ..*s }).collect();
    assert_eq!(flux_deviation(&exact, &unit_flux()).unwrap(), 0.0);
    assert!(flux_deviation(&samples[..63], &unit_flux()).is_err());
}

/// Radial profile of a centered heat kernel near the cell.
fn radial_field(mesh: &TriMesh) -> Vec<f64> {
    mesh.vertices().iter().map(|p| (-p.norm_sq() / 4.0).exp()).collect()
}

#[test]
fn patch_recovery_of_radial_field_is_nearly_uniform() {
    let full = paper_full_mesh();
    let samples = recover_boundary_flux(full, &radial_field(full), D, Point2::default(), 1.0, 360, FluxRecovery::Patch).unwrap();
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.flux), b.max(s.flux)));
    let mean = samples.iter().map(|s| s.flux).sum::<f64>() / samples.len() as f64;
    assert!(mean > 0.0);
    assert!(hi - lo <= 1e-2 * mean, "spread {} of mean {mean}", hi - lo);
}

#[test]
fn patch_recovered_deviation_is_converged_in_sample_count() {
    let full = paper_full_mesh();
    let u = radial_field(full);
    let dev = |m| {
        let s = recover_boundary_flux(full, &u, D, Point2::default(), 1.0, m, FluxRecovery::Patch).unwrap();
        flux_deviation(&s, &unit_flux()).unwrap()
    };
    let (coarse, fine) = (dev(360), dev(720));
    assert!((coarse - fine).abs() < 1e-4 * fine, "{coarse} vs {fine}");
}

#[test]
fn cumulative_deviation_trivial_series() {
    let times: Vec<f64> = (1..=50).map(|k| 0.04 * k as f64).collect();
    assert!(cumulative_flux_deviation(&times, &[0.0; 50]).unwrap().iter().all(|&c| c == 0.0));
    let c = cumulative_flux_deviation(&times, &[1.7; 50]).unwrap();
    for (ci, t) in c.iter().zip(&times) {
        assert!((ci - 1.7 * t).abs() < 1e-12);
    }
    assert!(cumulative_flux_deviation(&[0.1, 0.2, 0.4], &[1.0; 3]).is_err());
}

#[test]
fn cumulative_deviation_is_second_order() {
    let f = |t: f64| 2.0 + (3.0 * t).sin();
    // fine composite midpoint rule as the oracle
    let midpoint = |t: f64| {
        let n = 200_000;
        let h = t / n as f64;
        (0..n).map(|i| f(h * (i as f64 + 0.5))).sum::<f64>() * h
    };
    let exact = midpoint(2.0);
    let error = |dt: f64| {
        let steps = (2.0 / dt).round() as usize;
        let times: Vec<f64> = (1..=steps).map(|k| dt * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        (cumulative_flux_deviation(&times, &values).unwrap().last().unwrap() - exact).abs()
    };
    let (e1, e2) = (error(0.02), error(0.01));
    assert!(e1 < 0.02 * 0.02 * 10.0);
    assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
}

#[test]
fn metric_series_matches_batch_integral_and_csv() {
    let mut series = MetricSeries::default();
    let times: Vec<f64> = (1..=5).map(|k| 0.16 * k as f64).collect();
    let devs = [0.3, 0.1, 0.4, 0.0, 0.2];
    for (&t, &d) in times.iter().zip(&devs) {
        series.push(t, NormDifference { l2: d, h1: 2.0 * d, h1_semi: d }, d);
    }
    let batch = cumulative_flux_deviation(&times, &devs).unwrap();
    for (a, b) in series.c_star.iter().zip(&batch) {
        assert!((a - b).abs() < 1e-15);
    }
    let mut buf = Vec::new();
    series.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,l2,h1,h1_semi,flux_dev,c_star");
    assert_eq!(lines.len(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norms_match_brute_force_oracle(seed in any::<u64>()) {
        let (holed, _) = small_pair();
        let e = random_field(holed, seed);
        let n = p1_norms(holed, &e);
        let (l2, semi) = brute_force_norms(holed, &e);
        prop_assert!((n.l2 - l2).abs() <= 1e-10 * l2.max(1.0));
        prop_assert!((n.h1_semi - semi).abs() <= 1e-10 * semi.max(1.0));
        prop_assert!((n.h1 - (l2 * l2 + semi * semi).sqrt()).abs() <= 1e-10 * n.h1.max(1.0));
    }

    #[test]
    fn differences_are_homogeneous(seed in any::<u64>(), lambda in -50.0f64..50.0) {
        let (holed, full) = small_pair();
        let us = random_field(holed, seed);
        let up = random_field(full, seed ^ 0x9e37);
        let base = difference(&us, &up);
        let scaled = difference(
            &us.iter().map(|v| lambda * v).collect::<Vec<_>>(),
            &up.iter().map(|v| lambda * v).collect::<Vec<_>>(),
        );
        let k = lambda.abs();
        prop_assert!((scaled.l2 - k * base.l2).abs() <= 1e-12 * (1.0 + k * base.l2));
        prop_assert!((scaled.h1 - k * base.h1).abs() <= 1e-12 * (1.0 + k * base.h1));
    }

    #[test]
    fn l2_difference_obeys_triangle_inequality(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (holed, _) = small_pair();
        let (u, v, w) = (random_field(holed, a), random_field(holed, b), random_field(holed, c));
        let dist = |x: &[f64], y: &[f64]| p1_norms(holed, &x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
        let (uv, vw, uw) = (dist(&u, &v), dist(&v, &w), dist(&u, &w));
        prop_assert!(uw.l2 <= uv.l2 + vw.l2 + 1e-12);
        prop_assert!(uw.h1 <= uv.h1 + vw.h1 + 1e-12);
    }

    #[test]
    fn cumulative_deviation_never_decreases(values in prop::collection::vec(0.0f64..10.0, 1..200)) {
        let times: Vec<f64> = (1..=values.len()).map(|k| 0.04 * k as f64).collect();
        let c = cumulative_flux_deviation(&times, &values).unwrap();
        prop_assert!(c.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(c[0] >= 0.0);
    }
}
