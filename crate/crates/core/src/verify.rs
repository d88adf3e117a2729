//! Invariant suites behind `shellspec verify`: Dirac algebra, kernel identities, sphere
//! oracles and trace relations. Every check reports its measured error and tolerance.

use faer::c64;
use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_c, assemble_spinor_single_layer, block, single_layer_modes, Density};
use crate::dirac::{
    alpha_dot, confinement_projectors, green_function, momentum_k, transmission_factor_inverse,
    transmission_matrix, Coupling, DiracMatrices, Mat4C, PhysParams, Vec3, I,
};
use crate::error::Result;
use crate::oracles::{
    dirac_sphere_eigenvalues, schrodinger_bs_scan, schrodinger_energy_grid, schrodinger_sphere_bound_states,
    sphere_single_layer_eig,
};
use crate::quadrature::{harmonic_index, RealHarmonics};
use crate::spectral::{extrapolated_traces, find_eigenvalues, jump_residuals, trace_nodes, RefineOptions, ScanOptions};
use crate::surface::{icosphere, sphere_grid, SurfaceQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyLevel {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    pub fn new(name: &str, measured: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), measured, tolerance, passed: measured <= tolerance }
    }
}

fn id4() -> Mat4C {
    Mat4C::identity()
}

fn unit(rng: &mut StdRng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// max ‖{α_i, α_j} − 2δ_ij‖, ‖{α_i, β}‖, ‖β² − I‖.
pub fn anticommutation_error(m: &DiracMatrices) -> f64 {
    let mut err: f64 = (m.beta * m.beta - id4()).norm();
    for i in 0..3 {
        err = err.max((m.alpha[i] * m.beta + m.beta * m.alpha[i]).norm());
        for j in 0..3 {
            let target = if i == j { id4() * c64::new(2.0, 0.0) } else { Mat4C::zeros() };
            err = err.max((m.alpha[i] * m.alpha[j] + m.alpha[j] * m.alpha[i] - target).norm());
        }
    }
    err
}

/// ‖R⁻¹-factor · (icα·ν + ½(ηI₄+τβ)) − I‖ over sample couplings and normals, plus the
/// admissibility of f₊ = R f₋ in the coupling condition.
pub fn transmission_error(c: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let coupling = loop {
            let co = Coupling::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), c);
            if co.class == crate::dirac::CouplingClass::Noncritical {
                break co;
            }
        };
        let nu = unit(&mut rng);
        let factor = alpha_dot(&nu) * (I * c) + coupling.matrix() * c64::new(0.5, 0.0);
        let inv = transmission_factor_inverse(&coupling, &nu, c)?;
        err = err.max((inv * factor - id4()).norm());
        let r = transmission_matrix(&coupling, &nu, c)?;
        // icα·ν(R − I) + ½D(R + I) = 0 on every f₋.
        let cond = alpha_dot(&nu) * (I * c) * (r - id4()) + coupling.matrix() * c64::new(0.5, 0.0) * (r + id4());
        err = err.max(cond.norm() / (1.0 + r.norm()));
    }
    Ok(err)
}

/// Projector defects at a confinement coupling: P±² − P±, P₊ + P₋ − I, P₊P₋.
pub fn confinement_error(eta: f64, c: f64, seed: u64) -> Result<f64> {
    let tau = (eta * eta + 4.0 * c * c).sqrt();
    let coupling = Coupling::new(eta, tau, c);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut err: f64 = 0.0;
    for _ in 0..20 {
        let nu = unit(&mut rng);
        let (p, q) = confinement_projectors(&coupling, &nu, c)?;
        err = err.max((p * p - p).norm()).max((q * q - q).norm());
        err = err.max((p + q - id4()).norm()).max((p * q).norm());
    }
    Ok(err)
}

/// At (η, τ) = (0, 2c) the interior projector is ½(I − B) with the bag matrix B = −iβ(α·ν).
pub fn mit_bag_error(m: &DiracMatrices, c: f64, seed: u64) -> Result<f64> {
    let coupling = Coupling::new(0.0, 2.0 * c, c);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut err: f64 = 0.0;
    for _ in 0..20 {
        let nu = unit(&mut rng);
        let (p, _) = confinement_projectors(&coupling, &nu, c)?;
        let an = m.alpha[0] * c64::new(nu.x, 0.0) + m.alpha[1] * c64::new(nu.y, 0.0) + m.alpha[2] * c64::new(nu.z, 0.0);
        let bag = m.beta * an * (-I);
        err = err.max((p - (id4() - bag) * c64::new(0.5, 0.0)).norm());
    }
    Ok(err)
}

/// Random nonreal λ and points for kernel identities.
fn kernel_samples(n: usize, seed: u64) -> Vec<(c64, Vec3)> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let lambda = c64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.05..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
            let x = unit(&mut rng) * rng.gen_range(0.05..3.0);
            (lambda, x)
        })
        .collect()
}

/// Relative error of G_λ(x)* = G_{λ̄}(−x).
pub fn green_adjoint_error(params: &PhysParams, n: usize, seed: u64) -> Result<f64> {
    let mut err: f64 = 0.0;
    for (lambda, x) in kernel_samples(n, seed) {
        let g = green_function(lambda, &x, params)?;
        let h = green_function(lambda.conj(), &(-x), params)?;
        err = err.max((g.adjoint() - h).norm() / g.norm());
    }
    Ok(err)
}

/// Relative error of βG_λ + G_λβ = 2(λ/c²β + mI₄)·e^{ikr}/(4πr).
pub fn green_anticommutator_error(m: &DiracMatrices, params: &PhysParams, n: usize, seed: u64) -> Result<f64> {
    let c = params.light_speed;
    let mut err: f64 = 0.0;
    for (lambda, x) in kernel_samples(n, seed) {
        let g = green_function(lambda, &x, params)?;
        let k = momentum_k(lambda, params)?;
        let r = x.norm();
        let helmholtz = (I * k * r).exp() / (4.0 * std::f64::consts::PI * r);
        let target = (m.beta * (lambda / (c * c)) + id4() * c64::new(params.mass, 0.0)) * (helmholtz * 2.0);
        let lhs = m.beta * g + g * m.beta;
        err = err.max((lhs - target).norm() / target.norm());
    }
    Ok(err)
}

/// Frobenius-relative error of βC + Cβ = 2(λ/c²β + m)S on the assembled matrices.
pub fn assembled_anticommutator_error(m: &DiracMatrices, lambda: c64, surface: &SurfaceQuadrature, params: &PhysParams) -> Result<f64> {
    let c_op = assemble_c(lambda, surface, params)?;
    let k = momentum_k(lambda, params)?;
    let s_op = assemble_spinor_single_layer(k, surface)?;
    let c = params.light_speed;
    let target = (m.beta * (lambda / (c * c)) + id4() * c64::new(params.mass, 0.0)) * c64::new(2.0, 0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..surface.len() {
        for j in 0..surface.len() {
            let b = block(&c_op.matrix, i, j);
            let rhs = target * block(&s_op.matrix, i, j);
            num += (m.beta * b + b * m.beta - rhs).norm_squared();
            den += rhs.norm_squared();
        }
    }
    Ok((num / den).sqrt())
}

/// Sup-relative error of S_k Y_lm = μ_l Y_lm on a sphere grid for l ≤ `lmax`.
pub fn single_layer_sphere_error(k: c64, surface: &SurfaceQuadrature, radius: f64, lmax: usize) -> Result<f64> {
    let grid = surface.grid().ok_or_else(|| crate::Error::InvalidParameter("sphere grid required".into()))?;
    let op = single_layer_modes(k, 1.0, surface, false)?;
    let sh = RealHarmonics::new(lmax);
    let values: Vec<Vec<f64>> = grid.params.iter().map(|u| sh.eval_vec(u)).collect();
    let mut worst: f64 = 0.0;
    for l in 0..=lmax {
        let mu = sphere_single_layer_eig(k, radius, l);
        for m in -(l as i64)..=(l as i64) {
            let idx = harmonic_index(l, m);
            let y: Vec<c64> = values.iter().map(|v| c64::new(v[idx], 0.0)).collect();
            let sy = op.apply(&y);
            let num = sy.iter().zip(&y).map(|(a, b)| (a - b * mu).norm()).fold(0.0, f64::max);
            let den = y.iter().map(|b| (b * mu).norm()).fold(0.0, f64::max);
            worst = worst.max(num / den);
        }
    }
    Ok(worst)
}

/// Extrapolated jump-relation residuals (mean trace, jump) of a constant density.
pub fn constant_density_jump_error(lambda: c64, surface: &SurfaceQuadrature, params: &PhysParams, offset: f64) -> Result<(f64, f64)> {
    let value = Vector4::new(c64::new(1.0, 0.0), c64::new(0.0, 0.5), c64::new(0.3, 0.0), c64::new(0.0, -0.2));
    let phi = Density::constant(surface.len(), value);
    let nodes = trace_nodes(surface);
    let traces = extrapolated_traces(lambda, surface, params, &phi, &nodes, offset)?;
    let r = jump_residuals(lambda, &Coupling::free(params.light_speed), surface, params, &phi, &nodes, &traces)?;
    Ok((r.mean_trace, r.jump))
}

/// Largest distance from each oracle eigenvalue on the unit sphere to the computed set, or
/// ∞ when the counts (with multiplicity) differ.
pub fn sphere_eigenvalue_error(coupling: &Coupling, surface: &SurfaceQuadrature, params: &PhysParams) -> Result<f64> {
    let oracle = dirac_sphere_eigenvalues(coupling.eta, coupling.tau, params, 1.0, 12, 4000)?;
    let found = find_eigenvalues(
        coupling,
        surface,
        params,
        &ScanOptions::default(),
        &RefineOptions { jump_residual: false, ..RefineOptions::default() },
    )?;
    let oracle_count: usize = oracle.iter().map(|o| o.degeneracy).sum();
    let found_count: usize = found.eigenvalues.iter().map(|e| e.multiplicity).sum();
    if oracle_count != found_count {
        return Ok(f64::INFINITY);
    }
    Ok(oracle
        .iter()
        .map(|o| found.eigenvalues.iter().map(|e| (e.lambda - o.lambda).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Largest distance between radial-shooting energies (l ≤ l_max) and the nearest
/// Schrödinger boundary-integral zero.
pub fn schrodinger_cross_error(eta: f64, surface: &SurfaceQuadrature, mass: f64, l_max: usize) -> Result<f64> {
    let radial = schrodinger_sphere_bound_states(eta, mass, 1.0, l_max);
    let grid = schrodinger_energy_grid(-50.0 * mass * eta * eta, -1e-8, 400);
    let scan = schrodinger_bs_scan(eta, surface, mass, &grid, 1e-10)?;
    Ok(radial
        .iter()
        .map(|m| scan.zeros.iter().map(|z| (z.0 - m.energy).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Runs the suite. `matrices` is normally [`crate::dirac::dirac_matrices`]; a modified set
/// exercises the failure path.
pub fn run_checks(level: VerifyLevel, matrices: &DiracMatrices) -> Result<Vec<CheckOutcome>> {
    let params = PhysParams::new(1.0, 1.0)?;
    let mut out = vec![
        CheckOutcome::new("anticommutation", anticommutation_error(matrices), 1e-12),
        CheckOutcome::new("transmission_inverse", transmission_error(1.0, 200, 1)?, 1e-12),
        CheckOutcome::new("confinement_projectors", confinement_error(0.7, 1.0, 2)?, 1e-12),
        CheckOutcome::new("mit_bag", mit_bag_error(matrices, 1.0, 3)?, 1e-12),
        CheckOutcome::new("green_adjoint", green_adjoint_error(&params, 1000, 4)?, 1e-12),
        CheckOutcome::new("green_anticommutator", green_anticommutator_error(matrices, &params, 1000, 5)?, 1e-12),
    ];
    let sphere = sphere_grid(1.0, 6, 12)?;
    let mesh = icosphere(1.0, 1).quadrature()?;
    for (name, surface) in [("assembled_anticommutator_grid", &sphere), ("assembled_anticommutator_mesh", &mesh)] {
        out.push(CheckOutcome::new(
            name,
            assembled_anticommutator_error(matrices, c64::new(0.3, 0.1), surface, &params)?,
            1e-12,
        ));
    }
    if level == VerifyLevel::Full {
        let grid = sphere_grid(1.0, 12, 24)?;
        out.push(CheckOutcome::new(
            "single_layer_sphere_oracle",
            single_layer_sphere_error(c64::new(0.0, 1.0), &grid, 1.0, 5)?,
            1e-3,
        ));
        let (mean, jump) = constant_density_jump_error(c64::new(0.3, 0.0), &grid, &params, 0.25 * grid.h)?;
        out.push(CheckOutcome::new("jump_mean_trace", mean, 5e-2));
        out.push(CheckOutcome::new("jump_normal", jump, 5e-2));
        out.push(CheckOutcome::new(
            "dirac_sphere_eigenvalues",
            sphere_eigenvalue_error(&Coupling::new(-3.0, 0.0, 1.0), &sphere_grid(1.0, 8, 16)?, &params)?,
            1e-5,
        ));
        out.push(CheckOutcome::new("schrodinger_cross_validation", schrodinger_cross_error(-3.0, &grid, 1.0, 3)?, 1e-4));
    }
    Ok(out)
}
