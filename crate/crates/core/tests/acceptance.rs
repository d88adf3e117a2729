//! Acceptance criteria. Prints one PASS/FAIL line per criterion with the measured values,
//! tolerances and wall time. Criteria run sequentially so the time budgets are meaningful.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::Vector4;
use shellspec_core::c64;
use shellspec_core::dirac::{dirac_matrices, Coupling, PhysParams, Vec3};
use shellspec_core::spectral::{
    apply_resolvent, find_eigenvalues, nonrel_limit_sweep, resolvent_check, scan_gap, verify_symmetries,
    BirmanSchwinger, GaussianSource, NonrelOptions, RefineOptions, ScanOptions,
};
use shellspec_core::surface::{icosphere, sphere_grid, spheroid_grid, SurfaceQuadrature};
use shellspec_core::verify::{
    anticommutation_error, assembled_anticommutator_error, confinement_error, constant_density_jump_error,
    green_adjoint_error, green_anticommutator_error, mit_bag_error, schrodinger_cross_error,
    single_layer_sphere_error, sphere_eigenvalue_error, transmission_error,
};
use shellspec_core::Error;

/// Errors at this level are rounding noise; refinement cannot halve them further.
const ROUNDOFF_FLOOR: f64 = 1e-12;

struct Outcome {
    id: u32,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn report(id: u32, budget_secs: u64, run: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = run();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let passed = ok && elapsed <= budget;
    // Written to the raw handle so the lines survive the test harness's output capture.
    let _ = writeln!(
        std::io::stderr(),
        "{} criterion {id}: {detail} [{:.1} s of {} s]",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget_secs
    );
    Outcome { id, passed, detail, elapsed, budget }
}

fn unit_params() -> PhysParams {
    PhysParams::new(1.0, 1.0).unwrap()
}

fn sphere(n_polar: usize) -> SurfaceQuadrature {
    sphere_grid(1.0, n_polar, 2 * n_polar).unwrap()
}

fn algebra() -> (bool, String) {
    let m = dirac_matrices();
    let c = 1.0;
    let errors = [
        ("anticommutation", anticommutation_error(&m)),
        ("transmission_inverse", transmission_error(c, 200, 11).unwrap()),
        ("confinement_projectors", confinement_error(0.7, c, 12).unwrap()),
        ("mit_bag", mit_bag_error(&m, c, 13).unwrap()),
    ];
    let ok = errors.iter().all(|(_, e)| *e <= 1e-12);
    let text: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.2e}")).collect();
    (ok, format!("{} (tol 1e-12)", text.join(", ")))
}

fn kernels() -> (bool, String) {
    let m = dirac_matrices();
    let p = unit_params();
    let lambda = c64::new(0.3, 0.1);
    let adjoint = green_adjoint_error(&p, 1000, 21).unwrap();
    let anti = green_anticommutator_error(&m, &p, 1000, 22).unwrap();
    let grid = assembled_anticommutator_error(&m, lambda, &sphere(12), &p).unwrap();
    let mesh = assembled_anticommutator_error(&m, lambda, &icosphere(1.0, 2).quadrature().unwrap(), &p).unwrap();
    let ok = [adjoint, anti, grid, mesh].iter().all(|e| *e <= 1e-12);
    (
        ok,
        format!(
            "adjoint {adjoint:.2e}, anticommutator {anti:.2e}, assembled grid {grid:.2e}, assembled mesh {mesh:.2e} (tol 1e-12)"
        ),
    )
}

fn single_layer() -> (bool, String) {
    let k = c64::new(0.0, 1.0);
    let coarse = single_layer_sphere_error(k, &sphere(24), 1.0, 5).unwrap();
    let fine = single_layer_sphere_error(k, &sphere(48), 1.0, 5).unwrap();
    let halves = fine <= 0.5 * coarse || fine.max(coarse) <= ROUNDOFF_FLOOR;
    (
        coarse <= 1e-3 && halves,
        format!("24x48 error {coarse:.2e} (tol 1e-3), 48x96 error {fine:.2e}, halving or roundoff floor {ROUNDOFF_FLOOR:.0e}: {halves}"),
    )
}

fn jump_relations() -> (bool, String) {
    let surface = sphere(24);
    let (mean, jump) = constant_density_jump_error(c64::new(0.3, 0.0), &surface, &unit_params(), 0.25 * surface.h).unwrap();
    (mean <= 5e-2 && jump <= 5e-2, format!("mean trace {mean:.2e}, jump {jump:.2e} (tol 5e-2)"))
}

fn birman_schwinger() -> (bool, String) {
    let p = unit_params();
    let surface = sphere(12);
    let free = scan_gap(&Coupling::free(1.0), &surface, &p, &ScanOptions::default()).unwrap();
    let free_ok = free.sigma_min.iter().all(|s| *s == 1.0);
    let mut lines = vec![format!("free sigma_min == 1: {free_ok}")];
    let mut ok = free_ok;
    for (eta, tau) in [(-3.0, 0.0), (0.0, -3.0), (2.0, 1.0)] {
        let bs = BirmanSchwinger::new(&Coupling::new(eta, tau, 1.0), &surface, &p).unwrap();
        let s = bs.sigma_min(c64::new(0.0, 0.5 * p.rest_energy())).unwrap();
        ok &= s > 0.1;
        lines.push(format!("sigma_min({eta},{tau}) at i/2 {s:.3}"));
    }
    let couplings = [
        (0.05, 0.0),
        (-0.05, 0.0),
        (0.0, 0.05),
        (0.0, -0.05),
        (0.05, 0.05),
        (-0.05, 0.05),
        (150.0, 0.0),
        (-150.0, 0.0),
        (0.0, 150.0),
        (0.0, -150.0),
        (100.0, 0.0),
    ];
    let mut opened = Vec::new();
    for (eta, tau) in couplings {
        let scan = scan_gap(&Coupling::new(eta, tau, 1.0), &surface, &p, &ScanOptions::default()).unwrap();
        if !scan.brackets.is_empty() {
            opened.push(format!("({eta},{tau})"));
        }
    }
    ok &= opened.is_empty();
    lines.push(format!("{} weak/strong couplings, brackets opened for [{}]", couplings.len(), opened.join(" ")));
    (ok, lines.join(", "))
}

fn symmetries() -> (bool, String) {
    let p = unit_params();
    let surface = sphere(12);
    let scan = ScanOptions::default();
    let refine = RefineOptions::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for (eta, tau) in [(-3.0, 0.0), (0.0, 1.5)] {
        let report = verify_symmetries(&Coupling::new(eta, tau, 1.0), &surface, &p, &scan, &refine).unwrap();
        ok &= report.passed;
        for c in &report.checks {
            lines.push(format!(
                "{} ({},{}) vs ({},{}) {} value(s) mismatch {:.2e} (tol {:.0e})",
                c.name, c.left_coupling.0, c.left_coupling.1, c.right_coupling.0, c.right_coupling.1,
                c.left.len(), c.max_mismatch, c.tolerance
            ));
        }
        lines.push(format!("even multiplicities ({eta},{tau}): {}", report.all_even));
    }
    let oracle = sphere_eigenvalue_error(&Coupling::new(-3.0, 0.0, 1.0), &surface, &p).unwrap();
    lines.push(format!("(-3,0) vs partial-wave oracle {oracle:.2e}"));
    ok &= oracle <= 1e-5;
    (ok, lines.join("; "))
}

fn scalar_positivity() -> (bool, String) {
    let p = unit_params();
    let surfaces = [("sphere", sphere(12)), ("spheroid(1,1.5)", spheroid_grid(1.0, 1.5, 12, 24).unwrap())];
    let refine = RefineOptions { jump_residual: false, ..RefineOptions::default() };
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, surface) in &surfaces {
        for tau in [1.0, 3.0] {
            let found = find_eigenvalues(&Coupling::new(0.0, tau, 1.0), surface, &p, &ScanOptions::default(), &refine).unwrap();
            ok &= found.eigenvalues.is_empty();
            lines.push(format!("{name} tau={tau}: {} eigenvalue(s)", found.eigenvalues.len()));
        }
    }
    (ok, lines.join(", "))
}

fn nonrelativistic() -> (bool, String) {
    let table = nonrel_limit_sweep(-3.0, 0.0, &sphere(12), 1.0, &[5.0, 10.0, 20.0, 40.0], &NonrelOptions::default()).unwrap();
    let diffs: Vec<Option<f64>> = table.ground_differences.iter().map(|(_, d)| d.map(f64::abs)).collect();
    let complete = diffs.iter().all(Option::is_some);
    let values: Vec<f64> = diffs.iter().flatten().copied().collect();
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let order = table.fitted_order.unwrap_or(f64::NAN);
    let text: Vec<String> = values.iter().map(|d| format!("{d:.3e}")).collect();
    (
        complete && monotone && order >= 0.8,
        format!("|differences| [{}] at c = 5,10,20,40, monotone {monotone}, fitted order {order:.3} (min 0.8)", text.join(", ")),
    )
}

fn oracle_cross_validation() -> (bool, String) {
    let surface = sphere(12);
    let errors: Vec<(f64, f64)> =
        [-2.0, -3.0, -5.0].iter().map(|eta| (*eta, schrodinger_cross_error(*eta, &surface, 1.0, 3).unwrap())).collect();
    let ok = errors.iter().all(|(_, e)| *e <= 1e-4);
    let text: Vec<String> = errors.iter().map(|(eta, e)| format!("eta={eta} {e:.2e}")).collect();
    (ok, format!("{} (tol 1e-4)", text.join(", ")))
}

fn resolvent_setup() -> (GaussianSource, Vec<Vec3>) {
    let source = GaussianSource {
        center: Vec3::new(2.0, 0.3, -0.2),
        width: 0.15,
        value: Vector4::new(c64::new(1.0, 0.0), c64::new(0.0, 0.5), c64::new(0.3, 0.0), c64::new(0.0, -0.2)),
    };
    let mut points = Vec::new();
    for i in 0..10 {
        let t = i as f64;
        let dir = Vec3::new((1.3 * t).cos() * (0.7 * t + 0.4).sin(), (1.3 * t).sin() * (0.7 * t + 0.4).sin(), (0.7 * t + 0.4).cos());
        points.push(dir * (0.2 + 0.05 * t));
        points.push(-dir * (1.4 + 0.1 * t));
    }
    (source, points)
}

fn krein_resolvent() -> (bool, String) {
    let p = unit_params();
    let surface = sphere(12);
    let lambda = c64::new(0.3, 0.4);
    let (source, points) = resolvent_setup();
    let coupling = Coupling::new(-2.0, 0.0, 1.0);
    match resolvent_check(lambda, &coupling, &surface, &p, &source, 12, &points, 1e-3) {
        Ok(r) => (
            r.fd_residual <= 5e-2 && r.jump_residual <= 5e-2,
            format!("(-2,0): fd residual {:.2e}, jump residual {:.2e} (tol 5e-2)", r.fd_residual, r.jump_residual),
        ),
        Err(e) => {
            let (volume, samples) = source.sampled(8).unwrap();
            let direct = apply_resolvent(lambda, &coupling, &surface, &p, &volume, &samples, &points[..1]);
            assert!(matches!(direct, Err(Error::CriticalCoupling { .. })));
            let noncritical = resolvent_check(lambda, &Coupling::new(-1.0, 0.0, 1.0), &surface, &p, &source, 12, &points, 1e-3).unwrap();
            (
                false,
                format!(
                    "(-2,0) with c=1 is the critical coupling and is refused ({e}); noncritical (-1,0): fd residual {:.2e}, jump residual {:.2e}",
                    noncritical.fd_residual, noncritical.jump_residual
                ),
            )
        }
    }
}

#[test]
fn acceptance_criteria() {
    let outcomes = [
        report(1, 1, algebra),
        report(2, 10, kernels),
        report(3, 60, single_layer),
        report(4, 120, jump_relations),
        report(5, 600, birman_schwinger),
        report(6, 1800, symmetries),
        report(7, 600, scalar_positivity),
        report(8, 3600, nonrelativistic),
        report(9, 300, oracle_cross_validation),
        report(10, 600, krein_resolvent),
    ];
    // Criterion 10 prescribes a coupling on the critical line, which the solver refuses by design.
    let expected_fail = [10];
    let unexpected: Vec<String> = outcomes
        .iter()
        .filter(|o| o.passed == expected_fail.contains(&o.id))
        .map(|o| format!("criterion {} ({:?} of {:?}): {}", o.id, o.elapsed, o.budget, o.detail))
        .collect();
    assert!(unexpected.is_empty(), "unexpected outcomes:\n{}", unexpected.join("\n"));
}
