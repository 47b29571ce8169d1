//! Acceptance gate: one pass/fail line per criterion.
//!
//! The paper-resolution comparison (about seven minutes on one core) runs by
//! default; set `CELLFLUX_SKIP_PAPER=1` to skip it, which reports criterion 5
//! as incomplete rather than passed.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};

use cellflux::config::{ExperimentConfig, Preset};
use cellflux::experiment::{curve_summary, run_model_comparison, ComparisonReport};
use cellflux::fem::{BackwardEuler, DiracLoad, HeatStepper, StepperOptions};
use cellflux::geometry::Point2;
use cellflux::mesh::DomainSpec;
use cellflux::metrics::{recover_boundary_flux, FluxRecovery};
use cellflux::source::{
    closed_form_intensities_n1, general_intensities, place_sources, FluxSpec, IntensityRule, SourceConfig,
};

mod common;

const D: f64 = 5.0;
const EPS: f64 = 0.01;

#[derive(Clone)]
struct Outcome {
    passed: bool,
    detail: String,
    notes: Vec<String>,
    /// Overrides the measured time when the work happened elsewhere.
    timing: Option<String>,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into(), notes: Vec::new(), timing: None }
    }
}

fn flux(n: u32) -> FluxSpec {
    FluxSpec::new(1.0, 1.0, n, Point2::default(), 1.0).unwrap()
}

fn criterion_1() -> Outcome {
    let f = flux(1);
    let mut notes = Vec::new();

    let mut a_ok = true;
    for t in [EPS, 1.0, 40.0] {
        let near = closed_form_intensities_n1(&f, 1.0 - 1e-6, D, t).unwrap().0;
        let mid = closed_form_intensities_n1(&f, 0.5, D, t).unwrap().0;
        let ratio = near.abs() / mid.abs();
        a_ok &= ratio < 1e-4;
        notes.push(format!("(a) t={t}: |phi_D(1-1e-6)| / |phi_D(0.5)| = {ratio:.3e}"));
    }

    let mut b_worst = 0.0f64;
    for r in [0.01, 0.05, 0.1, 0.25, 0.5] {
        let (phi_d, phi_c) = closed_form_intensities_n1(&f, r, D, 1e6).unwrap();
        let lim_d = TAU * (1.0 - r * r) / r;
        let lim_c = TAU * (1.0 + 1.0 - (1.0 + r) / r);
        b_worst = b_worst.max(((phi_d - lim_d) / lim_d).abs()).max(((phi_c - lim_c) / lim_c).abs());
    }
    let b_ok = b_worst <= 1e-3;
    notes.push(format!("(b) worst relative distance to the large-t limits at t=1e6: {b_worst:.3e}"));

    let mut c_max = f64::NEG_INFINITY;
    for i in 1..=50 {
        let r = 0.01 * i as f64;
        let times = std::iter::once(EPS).chain((1..=1000).map(|k| 0.04 * k as f64));
        for t in times {
            c_max = c_max.max(closed_form_intensities_n1(&f, r, D, t).unwrap().1);
        }
    }
    let c_ok = c_max < 0.0;
    notes.push(format!("(c) largest phi_C over r in 0.01..0.5, t in [eps, 40]: {c_max:.3e}"));
    Outcome { passed: a_ok && b_ok && c_ok, detail: format!("limits (a) {a_ok}, (b) {b_ok}, (c) {c_ok}"), notes, timing: None }
}

fn criterion_2(seed: u64) -> Outcome {
    let f = flux(1);
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for _ in 0..20 {
        let r = rng.random_range(0.005..0.995);
        let t = rng.random_range(EPS..40.0);
        let cfg = place_sources(&f, r, IntensityRule::GeneralExtremeMatch { shared_off_center: true }).unwrap();
        let v = general_intensities(&f, &cfg, D, t).unwrap();
        let (phi_d, phi_c) = closed_form_intensities_n1(&f, r, D, t).unwrap();
        let err = ((v[0] - phi_c) / phi_c).abs().max(((v[1] - phi_d) / phi_d).abs());
        if err > worst {
            notes = vec![format!("worst pair r = {r:.4}, t = {t:.4}")];
        }
        worst = worst.max(err);
    }
    let mut o = Outcome::new(worst <= 1e-9, format!("worst relative difference {worst:.3e} over 20 random (r, t)"));
    o.notes = notes;
    o
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, radii, r_time) in [(1u32, &[0.25, 0.1, 0.05, 0.01][..], 0.05), (2, &[0.4, 0.2, 0.05][..], 0.2)] {
        let f = flux(n);
        let devs: Vec<f64> = radii.iter().map(|&r| curve_summary(&f, r, D, 40.0, 3600).unwrap().max_dev).collect();
        let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
        ok &= decreasing;
        notes.push(format!("n={n}: max deviation at t=40 along r={radii:?}: {devs:.3?}"));
        let mut extreme_worst = 0.0f64;
        let cases = radii.iter().map(|&r| (r, 40.0)).chain([0.5, 5.0, 40.0].iter().map(|&t| (r_time, t)));
        for (r, t) in cases {
            extreme_worst = extreme_worst.max(curve_summary(&f, r, D, t, 360).unwrap().max_dev_at_extremes);
        }
        ok &= extreme_worst <= 1e-9;
        notes.push(format!("n={n}: worst deviation at the extreme angles {extreme_worst:.3e}"));
    }
    Outcome { passed: ok, detail: "strictly decreasing in r, exact at extremes".into(), notes, timing: None }
}

fn criterion_4() -> Outcome {
    let mut notes = Vec::new();
    let errs = common::mms_errors(&[0.4, 0.2, 0.1], 1.0, 1e-3, 20);
    let rates = common::rates(&errs);
    let rate_ok = rates.iter().all(|&r| r >= 1.8);
    notes.push(format!("manufactured solution: (h, L2 error) = {errs:.3?}, rates {rates:.3?}"));

    let cfg = ExperimentConfig::preset(Preset::Ci);
    let (holed, full) = common::mesh_pair(cfg.domain_spec(true));
    let f = cfg.flux_spec();
    let grid = cfg.time_grid();
    let opts = StepperOptions::default();
    let mut worst = 0.0f64;
    let mut s = HeatStepper::exclusion(&holed, &f, D, grid, opts).unwrap();
    worst = worst.max(common::worst_mass_defect(&mut s));
    for sources in [
        SourceConfig::single_dirac(&f),
        place_sources(&f, 0.01, IntensityRule::ClosedFormN1).unwrap().with_epsilon(EPS).unwrap(),
        place_sources(&f, 0.25, IntensityRule::ClosedFormN1).unwrap().with_epsilon(EPS).unwrap(),
    ] {
        let mut p = HeatStepper::point_source(&full, &f, &sources, D, grid, opts).unwrap();
        worst = worst.max(common::worst_mass_defect(&mut p));
    }
    let mass_ok = worst <= 1e-9;
    notes.push(format!("worst per-step mass-balance defect over the exclusion and three point source runs: {worst:.3e}"));

    let mut zero_ok = true;
    for mesh in [&holed, &full] {
        let be = BackwardEuler::for_mesh(mesh, D, grid.dt, opts).unwrap();
        let load = DiracLoad::new(mesh, &[Point2::new(0.0, 3.0)]).unwrap().assemble(mesh, &[0.0]).unwrap();
        let mut u = vec![0.0; mesh.num_vertices()];
        for _ in 0..grid.steps {
            u = be.step(&u, &load).unwrap().0;
        }
        zero_ok &= u.iter().all(|&v| v == 0.0);
    }
    notes.push(format!("zero-data runs identically zero: {zero_ok}"));
    Outcome {
        passed: rate_ok && mass_ok && zero_ok,
        detail: format!("rate >= 1.8 {rate_ok}, mass balance {mass_ok}, zero data {zero_ok}"),
        notes,
        timing: None,
    }
}

fn check(report: &ComparisonReport, name: &str) -> Option<bool> {
    report.summary.checks.iter().find(|c| c.name.starts_with(name)).map(|c| c.passed)
}

/// Criterion 5 orderings for one preset; `late_required` asserts item (d).
fn orderings(report: &ComparisonReport, label: &str, late_required: bool, notes: &mut Vec<String>) -> bool {
    let a = check(report, "flux_dev: multi_dirac_r0.01 <= single_dirac").unwrap_or(false);
    let b = check(report, "l2: multi_dirac_r0.01 <= single_dirac").unwrap_or(false)
        && check(report, "h1: multi_dirac_r0.01 <= single_dirac").unwrap_or(false);
    let c = report.manifest.runs.iter().all(|r| r.metrics.c_star.windows(2).all(|w| w[1] >= w[0]))
        && !report.any_failed();
    let single = report.run("single_dirac").map(|r| r.metrics.l2.clone()).unwrap_or_default();
    let multi = report.run("multi_dirac_r0.25").map(|r| r.metrics.l2.clone()).unwrap_or_default();
    // late times: the last quarter of the recorded steps
    let late = single.len() * 3 / 4;
    let d = !single.is_empty() && single.len() == multi.len() && (late..single.len()).all(|k| multi[k] > single[k]);
    notes.push(format!(
        "{label}: (a) {a}, (b) {b}, (c) {c}, (d) {d}{}; l2(T) single = {:.4e}, multi r=0.25 = {:.4e}, multi r=0.01 = {:.4e}",
        if late_required { "" } else { " (informational)" },
        single.last().copied().unwrap_or(f64::NAN),
        multi.last().copied().unwrap_or(f64::NAN),
        report.run("multi_dirac_r0.01").and_then(|r| r.metrics.l2.last().copied()).unwrap_or(f64::NAN),
    ));
    a && b && c && (d || !late_required)
}

fn criteria_5_6(out: &std::path::Path) -> (Outcome, Outcome) {
    let mut notes5 = Vec::new();
    let mut notes6 = Vec::new();
    let mut runs = vec![(Preset::Ci, "ci", false)];
    let skip_paper = std::env::var("CELLFLUX_SKIP_PAPER").is_ok_and(|v| v == "1");
    if !skip_paper {
        runs.push((Preset::Paper, "paper", true));
    }
    let (mut ok5, mut ok6) = (true, true);
    let total = Instant::now();
    for (preset, label, late_required) in runs {
        let start = Instant::now();
        let cfg = ExperimentConfig::preset(preset);
        let report = run_model_comparison(&cfg, &out.join(label)).expect("comparison run");
        ok5 &= orderings(&report, label, late_required, &mut notes5);
        let ex = &report.manifest.exclusion;
        ok6 &= ex.mass_rel_error <= 0.01;
        notes6.push(format!(
            "{label}: mass at T = {:.6e}, 2*pi*R*phi0*T = {:.6e}, relative error {:.3e}",
            ex.final_mass, ex.expected_mass, ex.mass_rel_error
        ));
        notes5.push(format!("{label}: {:.1} s", start.elapsed().as_secs_f64()));
    }
    let detail5 = if skip_paper {
        ok5 = false;
        "paper preset skipped (CELLFLUX_SKIP_PAPER=1); criterion incomplete".to_string()
    } else {
        "orderings at the ci and paper presets".to_string()
    };
    let mut o5 = Outcome::new(ok5, detail5);
    o5.notes = notes5;
    o5.timing = Some(format!("{:.1} s", total.elapsed().as_secs_f64()));
    let mut o6 = Outcome::new(ok6, "exclusion mass equals released mass within 1%");
    o6.notes = notes6;
    o6.timing = Some("runs shared with criterion 5".into());
    (o5, o6)
}

fn criterion_7() -> Outcome {
    let cfg = ExperimentConfig::preset(Preset::Ci);
    let spec: DomainSpec = cfg.domain_spec(true);
    let (holed, full) = common::mesh_pair(spec);
    let f = cfg.flux_spec();
    let grid = cellflux::fem::TimeGrid::new(0.16, 1.6).unwrap();
    let opts = StepperOptions::default();
    let (Some(map_h), Some(map_f)) = (holed.mirror_vertex_map(0.0), full.mirror_vertex_map(0.0)) else {
        return Outcome::new(false, "meshes are not mirror symmetric");
    };
    let mut worst = 0.0f64;
    let mut s = HeatStepper::exclusion(&holed, &f, D, grid, opts).unwrap();
    while !s.is_finished() {
        s.advance().unwrap();
        worst = worst.max(common::mirror_defect(s.values(), &map_h));
    }
    let mut flux_worst = 0.0f64;
    for sources in [
        SourceConfig::single_dirac(&f),
        place_sources(&f, 0.25, IntensityRule::ClosedFormN1).unwrap().with_epsilon(EPS).unwrap(),
        place_sources(&f, 0.01, IntensityRule::ClosedFormN1).unwrap().with_epsilon(EPS).unwrap(),
    ] {
        let mut p = HeatStepper::point_source(&full, &f, &sources, D, grid, opts).unwrap();
        while !p.is_finished() {
            p.advance().unwrap();
            worst = worst.max(common::mirror_defect(p.values(), &map_f));
            for method in [FluxRecovery::Direct, FluxRecovery::Patch] {
                let samples = recover_boundary_flux(&full, p.values(), D, f.cell_center, 1.0, 360, method).unwrap();
                flux_worst = flux_worst.max(common::flux_mirror_defect(&samples));
            }
        }
    }
    Outcome::new(
        worst <= 1e-6 && flux_worst <= 1e-6,
        format!("worst relative mirror defect: fields {worst:.3e}, recovered flux {flux_worst:.3e}"),
    )
}

fn main() -> ExitCode {
    let out = tempfile::tempdir().expect("temporary directory");
    let seed = ExperimentConfig::preset(Preset::Ci).output.seed;
    let mut all = true;
    let mut report = |k: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let timing = o.timing.clone().unwrap_or_else(|| format!("{:.1} s", start.elapsed().as_secs_f64()));
        println!("criterion {k}: {} ({}) [{timing}]", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        for n in &o.notes {
            println!("    {n}");
        }
        all &= o.passed;
    };
    report("1", &criterion_1);
    report("2", &|| criterion_2(seed));
    report("3", &criterion_3);
    report("4", &criterion_4);
    let (o5, o6) = criteria_5_6(out.path());
    report("5", &|| o5.clone());
    report("6", &|| o6.clone());
    report("7", &criterion_7);
    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
