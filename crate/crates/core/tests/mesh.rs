use std::f64::consts::PI;

use proptest::prelude::*;

use cellflux::geometry::Point2;
use cellflux::mesh::{cell_boundary_samples, generate_mesh, DomainSpec, EdgeTag, MeshError, TriMesh};

const GOLDEN: &str = include_str!("data/small_holed_mesh.txt");

fn small_spec() -> DomainSpec {
    DomainSpec::new(2.0, Point2::default(), 0.5, true, 0.5)
}

#[test]
fn generation_matches_golden_file() {
    let mesh = generate_mesh(&small_spec()).unwrap();
    assert_eq!(mesh.to_text(), GOLDEN);
    let parsed = TriMesh::from_text(GOLDEN).unwrap();
    assert_eq!(parsed.vertices(), mesh.vertices());
    assert_eq!(parsed.triangles(), mesh.triangles());
    parsed.check_against(&small_spec()).unwrap();
}

#[test]
fn paper_resolution_mesh_size() {
    let spec = DomainSpec::new(10.0, Point2::default(), 1.0, true, 0.0875);
    let mesh = generate_mesh(&spec).unwrap();
    mesh.check_against(&spec).unwrap();
    assert!((0.8e5..2.0e5).contains(&(mesh.num_triangles() as f64)), "{} triangles", mesh.num_triangles());
    assert!((mesh.mean_edge_length() - 0.0875).abs() < 0.1 * 0.0875);
    assert!(mesh.has_tag(EdgeTag::OuterBoundary) && mesh.has_tag(EdgeTag::CellBoundary));
}

#[test]
fn holed_area_approaches_square_minus_disk() {
    let exact = 400.0 - PI;
    let coarse = generate_mesh(&DomainSpec::new(10.0, Point2::default(), 1.0, true, 0.2)).unwrap().total_area();
    let fine = generate_mesh(&DomainSpec::new(10.0, Point2::default(), 1.0, true, 0.1)).unwrap().total_area();
    assert!((fine - exact).abs() / exact < 0.01);
    // the inscribed polygon always over-estimates the holed area
    assert!(fine >= exact && coarse >= fine - 1e-9);
}

#[test]
fn full_square_area() {
    let mesh = generate_mesh(&DomainSpec::new(1.0, Point2::default(), 0.5, false, 0.5)).unwrap();
    assert!((mesh.total_area() - 4.0).abs() < 1e-10);
    assert!(!mesh.has_tag(EdgeTag::CellBoundary));
}

#[test]
fn degenerate_domains_are_rejected() {
    for spec in [
        DomainSpec::new(1.0, Point2::default(), 0.0, true, 0.1),
        DomainSpec::new(1.0, Point2::default(), 1.5, true, 0.1),
        DomainSpec::new(1.0, Point2::new(0.8, 0.0), 0.5, true, 0.1),
        DomainSpec::new(1.0, Point2::default(), 0.5, true, 0.0),
    ] {
        assert!(matches!(generate_mesh(&spec), Err(MeshError::InvalidDomain(_))));
    }
}

#[test]
fn circle_samples_lie_on_the_circle() {
    let c = Point2::new(0.25, -0.5);
    let s = cell_boundary_samples(c, 1.5, 360).unwrap();
    assert_eq!(s.len(), 360);
    for (j, sample) in s.iter().enumerate() {
        assert!((sample.point.distance(c) - 1.5).abs() < 1e-14);
        assert!((sample.theta - 2.0 * PI * j as f64 / 360.0).abs() < 1e-15);
    }
    assert!(matches!(cell_boundary_samples(c, 1.0, 3), Err(MeshError::TooFewSamples(3))));
}

#[test]
fn holed_mesh_is_the_exterior_of_the_full_mesh() {
    let spec = DomainSpec::new(3.0, Point2::default(), 1.0, true, 0.3);
    let holed = generate_mesh(&spec).unwrap();
    let full = generate_mesh(&spec.with_hole(false)).unwrap();
    // every holed vertex is a full-mesh vertex
    let key = |p: &Point2| (p.x.to_bits(), p.y.to_bits());
    let full_keys: std::collections::HashSet<_> = full.vertices().iter().map(key).collect();
    assert!(holed.vertices().iter().all(|p| full_keys.contains(&key(p))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_meshes_satisfy_invariants(
        half_width in 1.5f64..4.0,
        radius in 0.2f64..0.8,
        cx in -0.4f64..0.4,
        cy in -0.4f64..0.4,
        h in 0.15f64..0.5,
        hole in any::<bool>(),
    ) {
        let spec = DomainSpec::new(half_width, Point2::new(cx, cy), radius, hole, h);
        let mesh = generate_mesh(&spec).unwrap();
        mesh.check_against(&spec).unwrap();
        for t in 0..mesh.num_triangles() {
            prop_assert!(mesh.signed_area(t) > 0.0);
        }
        let side = 2.0 * half_width;
        let polygon_area = mesh.total_area();
        let expected = if hole { side * side - PI * radius * radius } else { side * side };
        prop_assert!((polygon_area - expected).abs() / expected < 0.01);
        let round_trip = TriMesh::from_text(&mesh.to_text()).unwrap();
        prop_assert_eq!(round_trip.triangles(), mesh.triangles());
    }

    #[test]
    fn located_points_reproduce_coordinates(px in -0.99f64..0.99, py in -0.99f64..0.99) {
        let mesh = generate_mesh(&DomainSpec::new(1.0, Point2::new(0.1, 0.0), 0.3, false, 0.25)).unwrap();
        let p = Point2::new(px, py);
        let loc = mesh.locate(p).unwrap();
        let xs: Vec<f64> = mesh.vertices().iter().map(|v| v.x).collect();
        let ys: Vec<f64> = mesh.vertices().iter().map(|v| v.y).collect();
        prop_assert!((mesh.interpolate(&loc, &xs) - px).abs() < 1e-12);
        prop_assert!((mesh.interpolate(&loc, &ys) - py).abs() < 1e-12);
        prop_assert!(loc.barycentric.iter().all(|&w| w > -1e-9));
    }
}
