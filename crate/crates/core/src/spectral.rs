//! Gap eigenvalues through the Birman–Schwinger matrix I + (ηI₄ + τβ)C_λ, eigen-densities,
//! the Krein resolvent formula, symmetry studies and the nonrelativistic limit.

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    apply_c, apply_phi, apply_phi_star, assemble_c, c_modes, free_resolvent, Density, ModeOperator,
    VolumeQuadrature,
};
use crate::dirac::{alpha_dot, symmetry_map, Coupling, CouplingClass, PhysParams, Spinor, Vec3, I};
use crate::error::{Error, Result};
use crate::linalg;
use crate::oracles::{
    schrodinger_bs_scan, schrodinger_energy_grid, schrodinger_sphere_bound_states, SchrodingerScan,
};
use crate::search::{golden_section, local_minimum_brackets, Bracket};
use crate::surface::{probe_pairs_at, SurfaceKind, SurfaceQuadrature};

const ONE: c64 = c64::new(1.0, 0.0);

/// Sampling of the gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub n_samples: usize,
    /// Distance kept from ±mc²; defaults to 1e−3·mc².
    pub margin: Option<f64>,
    /// Sampled local minima below this value open a bracket.
    pub bracket_threshold: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { n_samples: 200, margin: None, bracket_threshold: 0.25 }
    }
}

/// Acceptance rules for refined eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    /// Final bracket width; defaults to 1e−6·mc².
    pub tol_lambda: Option<f64>,
    pub accept_tol: f64,
    /// Singular values up to `multiplicity_factor·accept_tol` count towards the multiplicity.
    pub multiplicity_factor: f64,
    /// Whether to evaluate the jump-condition residual of the eigenfunction.
    pub jump_residual: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { tol_lambda: None, accept_tol: 1e-3, multiplicity_factor: 10.0, jump_residual: true }
    }
}

impl RefineOptions {
    pub fn tol(&self, params: &PhysParams) -> f64 {
        self.tol_lambda.unwrap_or(1e-6 * params.rest_energy())
    }
}

/// I + (ηI₄ + τβ)C_λ in the weighted L²(Σ) inner product.
pub struct BirmanSchwinger<'a> {
    surface: &'a SurfaceQuadrature,
    params: PhysParams,
    coupling: Coupling,
}

enum WeightedBs {
    Modes(ModeOperator),
    Dense(Mat<c64>),
}

impl<'a> BirmanSchwinger<'a> {
    pub fn new(coupling: &Coupling, surface: &'a SurfaceQuadrature, params: &PhysParams) -> Result<Self> {
        coupling.ensure_noncritical(params.light_speed)?;
        if coupling.class == CouplingClass::Critical {
            log::warn!("coupling is close to the critical line");
        }
        Ok(Self { surface, params: *params, coupling: *coupling })
    }

    fn operator(&self, lambda: c64, weighted: bool) -> Result<WeightedBs> {
        let d = self.coupling.diagonal();
        if self.surface.grid().is_some() {
            Ok(WeightedBs::Modes(c_modes(lambda, self.surface, &self.params, weighted)?.birman_schwinger(&d)))
        } else {
            let c = assemble_c(lambda, self.surface, &self.params)?;
            let m = if weighted { c.weighted(&self.surface.weights) } else { c.matrix };
            Ok(WeightedBs::Dense(Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
                m[(i, j)] * d[i % 4] + if i == j { ONE } else { c64::new(0.0, 0.0) }
            })))
        }
    }

    pub fn sigma_min(&self, lambda: c64) -> Result<f64> {
        if self.coupling.is_free() {
            return Ok(1.0);
        }
        match self.operator(lambda, true)? {
            WeightedBs::Modes(m) => m.smallest_singular_value(),
            WeightedBs::Dense(m) => Ok(linalg::singular_values(&m)?[0]),
        }
    }

    /// Singular values ≤ `below` with their nodal densities φ = W^{−1/2}ψ (weighted-orthonormal).
    pub fn small_singular_pairs(&self, lambda: c64, below: f64) -> Result<Vec<(f64, Density)>> {
        let pairs = match self.operator(lambda, true)? {
            WeightedBs::Modes(m) => m.right_singular_pairs(below)?,
            WeightedBs::Dense(m) => {
                linalg::right_singular_pairs(&m)?.into_iter().filter(|(s, _)| *s <= below).collect()
            }
        };
        let inv: Vec<f64> = self.surface.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        Ok(pairs
            .into_iter()
            .map(|(s, psi)| {
                let phi: Vec<c64> = psi.iter().enumerate().map(|(i, z)| z * inv[i / 4]).collect();
                (s, Density::from_flat(&phi))
            })
            .collect())
    }

    /// Solves (I + (ηI₄+τβ)C_λ)x = rhs on nodal values.
    pub fn solve(&self, lambda: c64, rhs: &[c64]) -> Result<Vec<c64>> {
        match self.operator(lambda, false)? {
            WeightedBs::Modes(m) => m.solve(rhs),
            WeightedBs::Dense(m) => linalg::solve(&m, rhs),
        }
    }
}

/// σ_min(BS(λ)) sampled over the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScan {
    pub coupling: Coupling,
    pub params: PhysParams,
    pub lambdas: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub brackets: Vec<Bracket>,
    pub bracket_threshold: f64,
}

impl GapScan {
    /// CSV with columns lambda, sigma_min at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,sigma_min\n");
        for (l, v) in self.lambdas.iter().zip(&self.sigma_min) {
            s.push_str(&format!("{l:.16e},{v:.16e}\n"));
        }
        s
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Samples σ_min on a uniform grid of the open gap and brackets its dips.
pub fn scan_gap(
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    options: &ScanOptions,
) -> Result<GapScan> {
    let e = params.rest_energy();
    let margin = options.margin.unwrap_or(1e-3 * e);
    if !(margin > 0.0 && margin < e) {
        return Err(Error::InvalidParameter(format!("margin must lie in (0, mc²), got {margin}")));
    }
    scan_window(coupling, surface, params, -e + margin, e - margin, options)
}

/// Samples σ_min on a uniform grid of [lo, hi] inside the gap.
pub fn scan_window(
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    lo: f64,
    hi: f64,
    options: &ScanOptions,
) -> Result<GapScan> {
    let e = params.rest_energy();
    if !(lo > -e && hi < e && lo < hi) {
        return Err(Error::EssentialSpectrumPoint(c64::new(if lo <= -e { lo } else { hi }, 0.0)));
    }
    if options.n_samples < 3 {
        return Err(Error::InvalidParameter("a scan needs at least 3 samples".into()));
    }
    let bs = BirmanSchwinger::new(coupling, surface, params)?;
    let lambdas = linspace(lo, hi, options.n_samples);
    let sigma_min = lambdas
        .par_iter()
        .map(|l| bs.sigma_min(c64::new(*l, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    let brackets = local_minimum_brackets(&lambdas, &sigma_min, options.bracket_threshold);
    Ok(GapScan {
        coupling: *coupling,
        params: *params,
        lambdas,
        sigma_min,
        brackets,
        bracket_threshold: options.bracket_threshold,
    })
}

/// Trace-condition diagnostics of f = Φ_λφ at sampled nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpResiduals {
    /// ‖½(f₊ + f₋) − C_λφ‖ / ‖C_λφ‖, sup over sampled nodes.
    pub mean_trace: f64,
    /// ‖icα·ν(f₊ − f₋) − φ‖ / ‖φ‖.
    pub jump: f64,
    /// ‖icα·ν(f₊ − f₋) + ½(ηI₄+τβ)(f₊ + f₋)‖ / ‖icα·ν(f₊ − f₋)‖: the δ-shell coupling condition.
    pub coupling: f64,
}

/// Node subset used for trace checks: every ring at four azimuths on grids, a strided
/// subset on meshes.
pub fn trace_nodes(surface: &SurfaceQuadrature) -> Vec<usize> {
    match surface.grid() {
        Some(g) => {
            let n = g.n_azimuthal;
            (0..g.n_polar)
                .flat_map(|t| [0, n / 4, n / 2, 3 * n / 4].map(|p| g.node_index(t, p)))
                .collect()
        }
        None => {
            let stride = (surface.len() / 64).max(1);
            (0..surface.len()).step_by(stride).collect()
        }
    }
}

/// Inner and outer values of Φ_λφ at x_i ∓ εν_i for each sampled node.
pub fn one_sided_values(
    lambda: c64,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    density: &Density,
    nodes: &[usize],
    offset: f64,
) -> Result<Vec<(Spinor, Spinor)>> {
    let pairs = probe_pairs_at(surface, &[offset], nodes);
    let mut pts = Vec::with_capacity(2 * pairs.len());
    for p in &pairs {
        pts.push(p.inner);
        pts.push(p.outer);
    }
    let vals = apply_phi(lambda, surface, params, density, &pts)?;
    Ok(vals.chunks(2).map(|c| (c[0], c[1])).collect())
}

/// Traces extrapolated linearly in ε: 2f(ε/2) − f(ε).
pub fn extrapolated_traces(
    lambda: c64,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    density: &Density,
    nodes: &[usize],
    offset: f64,
) -> Result<Vec<(Spinor, Spinor)>> {
    let coarse = one_sided_values(lambda, surface, params, density, nodes, offset)?;
    let fine = one_sided_values(lambda, surface, params, density, nodes, 0.5 * offset)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|((ci, co), (fi, fo))| (fi * c64::new(2.0, 0.0) - ci, fo * c64::new(2.0, 0.0) - co))
        .collect())
}

/// Jump-relation and coupling-condition residuals from given one-sided values.
pub fn jump_residuals(
    lambda: c64,
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    density: &Density,
    nodes: &[usize],
    traces: &[(Spinor, Spinor)],
) -> Result<JumpResiduals> {
    let c_phi = apply_c(lambda, surface, params, density)?;
    let d = coupling.matrix();
    let (mut r1, mut n1, mut r2, mut n2, mut r3, mut n3) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    for (&i, (inner, outer)) in nodes.iter().zip(traces) {
        let an = alpha_dot(&surface.normals[i]) * (I * params.light_speed);
        let mean = (inner + outer) * c64::new(0.5, 0.0);
        let jump = an * (inner - outer);
        let phi = density.values[i];
        r1 = r1.max((mean - c_phi.values[i]).norm());
        n1 = n1.max(c_phi.values[i].norm());
        r2 = r2.max((jump - phi).norm());
        n2 = n2.max(phi.norm());
        r3 = r3.max((jump + d * mean).norm());
        n3 = n3.max(jump.norm());
    }
    let rel = |r: f64, n: f64| if n > 0.0 { r / n } else { r };
    Ok(JumpResiduals { mean_trace: rel(r1, n1), jump: rel(r2, n2), coupling: rel(r3, n3) })
}

/// Trace offset used for eigenfunction diagnostics.
pub fn default_trace_offset(surface: &SurfaceQuadrature) -> f64 {
    0.25 * surface.h
}

/// A refined gap eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    pub sigma_min: f64,
    pub multiplicity: usize,
    pub even_multiplicity: bool,
    /// Singular values counted in the multiplicity.
    pub small_singular_values: Vec<f64>,
    /// Coupling-condition residual of f = Φ_λφ for the first density (NaN when skipped).
    pub residual: f64,
    #[serde(skip)]
    pub densities: Vec<Density>,
}

/// Golden-section refinement of a bracket followed by the acceptance test.
pub fn refine_eigenvalue(
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    bracket: &Bracket,
    options: &RefineOptions,
) -> Result<EigenResult> {
    let bs = BirmanSchwinger::new(coupling, surface, params)?;
    let tol = options.tol(params);
    let (lambda, sigma) =
        golden_section(|l| bs.sigma_min(c64::new(l, 0.0)), bracket.lo, bracket.hi, tol)?;
    if sigma > options.accept_tol {
        return Err(Error::NoEigenvalueInBracket { lo: bracket.lo, hi: bracket.hi, sigma_min: sigma });
    }
    let threshold = options.multiplicity_factor * options.accept_tol;
    let pairs = bs.small_singular_pairs(c64::new(lambda, 0.0), threshold)?;
    let multiplicity = pairs.len();
    let small_singular_values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let densities: Vec<Density> = pairs.into_iter().map(|p| p.1).collect();
    let residual = if options.jump_residual && !densities.is_empty() {
        let nodes = trace_nodes(surface);
        let lam = c64::new(lambda, 0.0);
        let traces = extrapolated_traces(lam, surface, params, &densities[0], &nodes, default_trace_offset(surface))?;
        jump_residuals(lam, coupling, surface, params, &densities[0], &nodes, &traces)?.coupling
    } else {
        f64::NAN
    };
    Ok(EigenResult {
        lambda,
        sigma_min: sigma,
        multiplicity,
        even_multiplicity: multiplicity % 2 == 0,
        small_singular_values,
        residual,
        densities,
    })
}

/// Scan plus refinement of every bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSearch {
    pub scan: GapScan,
    pub eigenvalues: Vec<EigenResult>,
    /// Brackets whose minimum stayed above the acceptance tolerance.
    pub rejected: Vec<Bracket>,
}

impl EigenSearch {
    pub fn values(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e.lambda).collect()
    }
}

fn refine_all(
    scan: GapScan,
    surface: &SurfaceQuadrature,
    refine: &RefineOptions,
) -> Result<EigenSearch> {
    let mut eigenvalues: Vec<EigenResult> = Vec::new();
    let mut rejected = Vec::new();
    let tol = refine.tol(&scan.params);
    for b in &scan.brackets {
        match refine_eigenvalue(&scan.coupling, surface, &scan.params, b, refine) {
            Ok(e) => {
                if let Some(prev) = eigenvalues.iter_mut().find(|p| (p.lambda - e.lambda).abs() <= 10.0 * tol) {
                    if e.sigma_min < prev.sigma_min {
                        *prev = e;
                    }
                } else {
                    eigenvalues.push(e);
                }
            }
            Err(Error::NoEigenvalueInBracket { .. }) => rejected.push(*b),
            Err(e) => return Err(e),
        }
    }
    eigenvalues.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(EigenSearch { scan, eigenvalues, rejected })
}

/// All accepted gap eigenvalues.
pub fn find_eigenvalues(
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    scan: &ScanOptions,
    refine: &RefineOptions,
) -> Result<EigenSearch> {
    refine_all(scan_gap(coupling, surface, params, scan)?, surface, refine)
}

/// Comparison of two computed eigenvalue sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub name: String,
    pub left_coupling: (f64, f64),
    pub right_coupling: (f64, f64),
    pub left: Vec<f64>,
    /// Right-hand set after the symmetry is applied (negated for mirror checks).
    pub right: Vec<f64>,
    pub matched_pairs: Vec<(f64, f64)>,
    pub max_mismatch: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn compare_sets(
    name: &str,
    left_coupling: &Coupling,
    right_coupling: &Coupling,
    left: &[f64],
    right: &[f64],
    tolerance: f64,
) -> SymmetryCheck {
    let mut a = left.to_vec();
    let mut b = right.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let matched_pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    let max_mismatch = matched_pairs.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let passed = a.len() == b.len() && max_mismatch <= tolerance;
    SymmetryCheck {
        name: name.to_string(),
        left_coupling: (left_coupling.eta, left_coupling.tau),
        right_coupling: (right_coupling.eta, right_coupling.tau),
        left: a,
        right: b,
        matched_pairs,
        max_mismatch: if a_len_mismatch(left, right) { f64::INFINITY } else { max_mismatch },
        tolerance,
        passed,
    }
}

fn a_len_mismatch(a: &[f64], b: &[f64]) -> bool {
    a.len() != b.len()
}

/// Eigenvalues found for one coupling in a symmetry study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub eta: f64,
    pub tau: f64,
    pub class: CouplingClass,
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub all_even: bool,
}

impl EigenSummary {
    fn from_search(c: &Coupling, s: &EigenSearch) -> Self {
        let multiplicities: Vec<usize> = s.eigenvalues.iter().map(|e| e.multiplicity).collect();
        Self {
            eta: c.eta,
            tau: c.tau,
            class: c.class,
            eigenvalues: s.values(),
            all_even: multiplicities.iter().all(|m| m % 2 == 0),
            multiplicities,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub runs: Vec<EigenSummary>,
    pub checks: Vec<SymmetryCheck>,
    pub all_even: bool,
    pub passed: bool,
}

/// Coupling inversion, charge-conjugation mirror and (for η = 0) self-mirroring, compared
/// on computed eigenvalue sets within 2·tol_λ.
pub fn verify_symmetries(
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    scan: &ScanOptions,
    refine: &RefineOptions,
) -> Result<SymmetryReport> {
    let c = params.light_speed;
    let tolerance = 2.0 * refine.tol(params);
    let refine = RefineOptions { jump_residual: false, ..*refine };
    let base = find_eigenvalues(coupling, surface, params, scan, &refine)?;
    let base_vals = base.values();
    let mut runs = vec![EigenSummary::from_search(coupling, &base)];
    let mut checks = Vec::new();

    match symmetry_map(coupling, c) {
        Ok(mapped) => {
            let other = find_eigenvalues(&mapped, surface, params, scan, &refine)?;
            checks.push(compare_sets("coupling_inversion", coupling, &mapped, &base_vals, &other.values(), tolerance));
            runs.push(EigenSummary::from_search(&mapped, &other));
        }
        Err(Error::DegenerateCoupling) => {}
        Err(e) => return Err(e),
    }

    let mirror = Coupling::new(0.0 - coupling.eta, coupling.tau, c);
    let mirrored = if mirror == *coupling { base.clone() } else { find_eigenvalues(&mirror, surface, params, scan, &refine)? };
    let negated: Vec<f64> = mirrored.values().iter().map(|l| -l).collect();
    checks.push(compare_sets("charge_conjugation", coupling, &mirror, &base_vals, &negated, tolerance));
    if mirror != *coupling {
        runs.push(EigenSummary::from_search(&mirror, &mirrored));
    }
    if coupling.eta == 0.0 {
        let neg: Vec<f64> = base_vals.iter().map(|l| -l).collect();
        checks.push(compare_sets("self_mirror", coupling, coupling, &base_vals, &neg, tolerance));
    }
    let all_even = runs.iter().all(|r| r.all_even);
    let passed = checks.iter().all(|c| c.passed) && all_even;
    Ok(SymmetryReport { runs, checks, all_even, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub tau: f64,
    pub surface_kind: SurfaceKind,
    pub eigenvalues: Vec<f64>,
    pub smallest_sampled_sigma: f64,
    pub passed: bool,
    pub note: String,
}

/// A purely scalar shell with τ ≥ 0 must have an empty discrete spectrum.
pub fn scalar_positive_tau_check(
    tau: f64,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    scan: &ScanOptions,
    refine: &RefineOptions,
) -> Result<PositivityReport> {
    if tau < 0.0 {
        return Err(Error::InvalidParameter(format!("positivity check needs τ ≥ 0, got {tau}")));
    }
    let coupling = Coupling::new(0.0, tau, params.light_speed);
    let refine = RefineOptions { jump_residual: false, ..*refine };
    let search = find_eigenvalues(&coupling, surface, params, scan, &refine)?;
    let note = match surface.kind {
        SurfaceKind::TriangleMesh => "flat-panel mesh: the surface is only Lipschitz, the emptiness statement assumes a C⁴ surface",
        _ => "smooth surface of revolution; the emptiness statement assumes C⁴ regularity, which holds here",
    };
    Ok(PositivityReport {
        tau,
        surface_kind: surface.kind,
        eigenvalues: search.values(),
        smallest_sampled_sigma: search.scan.sigma_min.iter().cloned().fold(f64::INFINITY, f64::min),
        passed: search.eigenvalues.is_empty(),
        note: note.to_string(),
    })
}

/// Output of the Krein formula.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventAction {
    pub values: Vec<Spinor>,
    /// Density x solving BS(λ)x = (ηI₄+τβ)Φ_{λ̄}*f; the correction term is Φ_λ x.
    pub density: Density,
}

/// (A_{η,τ} − λ)⁻¹f = (A₀ − λ)⁻¹f − Φ_λ(I + (ηI₄+τβ)C_λ)⁻¹(ηI₄+τβ)Φ_{λ̄}*f at `points`.
pub fn apply_resolvent(
    lambda: c64,
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    volume: &VolumeQuadrature,
    samples: &[Spinor],
    points: &[Vec3],
) -> Result<ResolventAction> {
    if lambda.im == 0.0 {
        return Err(Error::RealLambda(lambda));
    }
    coupling.ensure_noncritical(params.light_speed)?;
    let free = free_resolvent(lambda, params, volume, samples, points)?;
    if coupling.is_free() {
        return Ok(ResolventAction { values: free, density: Density::zeros(surface.len()) });
    }
    let rho = apply_phi_star(lambda.conj(), surface, params, volume, samples)?;
    let d = coupling.diagonal();
    let rhs: Vec<c64> = rho.to_flat().iter().enumerate().map(|(i, z)| z * d[i % 4]).collect();
    let bs = BirmanSchwinger::new(coupling, surface, params)?;
    let x = Density::from_flat(&bs.solve(lambda, &rhs)?);
    let correction = apply_phi(lambda, surface, params, &x, points)?;
    let values = free.iter().zip(&correction).map(|(f, g)| f - g).collect();
    Ok(ResolventAction { values, density: x })
}

/// Gaussian spinor source f(y) = e^{−|y−y₀|²/(2w²)}·v for resolvent checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSource {
    pub center: Vec3,
    pub width: f64,
    pub value: Spinor,
}

impl GaussianSource {
    pub fn at(&self, y: &Vec3) -> Spinor {
        self.value * c64::new((-(y - self.center).norm_squared() / (2.0 * self.width * self.width)).exp(), 0.0)
    }

    /// Tensor Gauss rule on the box center ± 6w with `n` nodes per axis, and the samples.
    pub fn sampled(&self, n: usize) -> Result<(VolumeQuadrature, Vec<Spinor>)> {
        let half = Vec3::repeat(6.0 * self.width);
        let volume = VolumeQuadrature::tensor_gauss(self.center - half, self.center + half, [n; 3])?;
        let samples = volume.nodes.iter().map(|y| self.at(y)).collect();
        Ok((volume, samples))
    }
}

/// Residuals of g = (A_{η,τ} − λ)⁻¹f from the Krein formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventCheck {
    /// sup |(A − λ)g − f| over the points, relative to the sup of the individual terms,
    /// with ∇ from central differences.
    pub fd_residual: f64,
    /// Coupling-condition residual of g at probe pairs (ε-extrapolated traces).
    pub jump_residual: f64,
}

/// Evaluates the Krein formula for a Gaussian source and checks the equation at
/// `points` (off Σ) and the coupling condition across Σ.
pub fn resolvent_check(
    lambda: c64,
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    source: &GaussianSource,
    quadrature_nodes: usize,
    points: &[Vec3],
    fd_step: f64,
) -> Result<ResolventCheck> {
    let (volume, samples) = source.sampled(quadrature_nodes)?;
    let nodes = trace_nodes(surface);
    let eps = default_trace_offset(surface);
    let probes: Vec<_> = [eps, 0.5 * eps].iter().map(|e| probe_pairs_at(surface, &[*e], &nodes)).collect();
    let mut all = Vec::new();
    for x in points {
        all.push(*x);
        for d in 0..3 {
            let mut step = Vec3::zeros();
            step[d] = fd_step;
            all.push(x + step);
            all.push(x - step);
        }
    }
    let probe_start = all.len();
    for set in &probes {
        for p in set {
            all.push(p.inner);
            all.push(p.outer);
        }
    }
    let g = apply_resolvent(lambda, coupling, surface, params, &volume, &samples, &all)?.values;
    let c = params.light_speed;
    let beta = crate::dirac::dirac_matrices().beta;
    let (mut res, mut scale) = (0f64, 0f64);
    for (i, x) in points.iter().enumerate() {
        let base = 7 * i;
        let mut kinetic = Spinor::zeros();
        for d in 0..3 {
            let mut e = Vec3::zeros();
            e[d] = 1.0;
            let grad = (g[base + 1 + 2 * d] - g[base + 2 + 2 * d]) * c64::new(0.5 / fd_step, 0.0);
            kinetic += alpha_dot(&e) * grad * (-I * c);
        }
        let mass = beta * g[base] * c64::new(params.rest_energy(), 0.0);
        let f = source.at(x);
        let r = kinetic + mass - g[base] * lambda - f;
        res = res.max(r.norm());
        scale = scale.max(kinetic.norm() + mass.norm() + (g[base] * lambda).norm() + f.norm());
    }
    let d = coupling.matrix();
    let n = nodes.len();
    let (mut jr, mut jn) = (0f64, 0f64);
    for (k, &node) in nodes.iter().enumerate() {
        let coarse = (g[probe_start + 2 * k], g[probe_start + 2 * k + 1]);
        let fine = (g[probe_start + 2 * (n + k)], g[probe_start + 2 * (n + k) + 1]);
        let two = c64::new(2.0, 0.0);
        let inner = fine.0 * two - coarse.0;
        let outer = fine.1 * two - coarse.1;
        let jump = alpha_dot(&surface.normals[node]) * (I * c) * (inner - outer);
        let r = jump + d * (inner + outer) * c64::new(0.5, 0.0);
        jr = jr.max(r.norm());
        jn = jn.max(jump.norm());
    }
    Ok(ResolventCheck {
        fd_residual: if scale > 0.0 { res / scale } else { res },
        jump_residual: if jn > 0.0 { jr / jn } else { jr },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonrelBranch {
    /// λ − mc² compared with the spectrum of −Δ_s/(2m) + s·δ.
    Upper,
    /// λ + mc² compared with minus that spectrum (scalar shells only).
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonrelOptions {
    pub n_samples: usize,
    /// Shifted energies closer than this to the threshold are not scanned.
    pub margin: f64,
    pub tol_lambda: f64,
    pub branch: NonrelBranch,
}

impl Default for NonrelOptions {
    fn default() -> Self {
        Self { n_samples: 200, margin: 1e-3, tol_lambda: 1e-9, branch: NonrelBranch::Upper }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonrelRow {
    pub c: f64,
    pub lambda_shifted: f64,
    pub schrodinger_ref: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonrelTable {
    pub eta: f64,
    pub tau: f64,
    pub mass: f64,
    pub branch: NonrelBranch,
    pub reference_energies: Vec<f64>,
    pub rows: Vec<NonrelRow>,
    /// Speeds of light at which no eigenvalue was found in the window.
    pub missing: Vec<f64>,
    /// Ground-state differences per c (None when missing).
    pub ground_differences: Vec<(f64, Option<f64>)>,
    /// −slope of log|difference| against log c for the ground state.
    pub fitted_order: Option<f64>,
}

impl NonrelTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c,lambda_shifted,schrodinger_ref,difference\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.c, r.lambda_shifted, r.schrodinger_ref, r.difference
            ));
        }
        s
    }
}

/// Least-squares slope of y against x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Schrödinger reference energies for strength `s`: radial oracle on spheres,
/// boundary-integral scan otherwise.
pub fn schrodinger_reference(strength: f64, mass: f64, surface: &SurfaceQuadrature) -> Result<Vec<f64>> {
    if strength >= 0.0 {
        return Ok(Vec::new());
    }
    if let (SurfaceKind::SphereGrid, Some(g)) = (surface.kind, surface.grid()) {
        let mut e: Vec<f64> = schrodinger_sphere_bound_states(strength, mass, g.equatorial, 8)
            .iter()
            .map(|m| m.energy)
            .collect();
        e.sort_by(f64::total_cmp);
        return Ok(e);
    }
    let grid = schrodinger_energy_grid(-50.0 * mass * strength * strength, -1e-8, 400);
    let scan: SchrodingerScan = schrodinger_bs_scan(strength, surface, mass, &grid, 1e-10)?;
    let mut e: Vec<f64> = scan.zeros.iter().map(|z| z.0).collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Tracks gap eigenvalues near ±mc² as c grows and compares them with the Schrödinger limit.
pub fn nonrel_limit_sweep(
    eta: f64,
    tau: f64,
    surface: &SurfaceQuadrature,
    mass: f64,
    c_list: &[f64],
    options: &NonrelOptions,
) -> Result<NonrelTable> {
    if eta != 0.0 && tau != 0.0 {
        return Err(Error::MixedCoupling { eta, tau });
    }
    if options.branch == NonrelBranch::Lower && eta != 0.0 {
        return Err(Error::InvalidParameter("the lower branch applies to scalar shells only".into()));
    }
    let strength = if eta != 0.0 { eta } else { tau };
    let references = schrodinger_reference(strength, mass, surface)?;
    let sign = match options.branch {
        NonrelBranch::Upper => 1.0,
        NonrelBranch::Lower => -1.0,
    };
    let deepest = references.first().copied().unwrap_or(-1.0);
    let window = -(1.5 * deepest.abs() + 1.0);
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let mut ground_differences = Vec::new();
    for &c in c_list {
        let params = PhysParams::new(mass, c)?;
        let coupling = Coupling::new(eta, tau, c);
        coupling.ensure_noncritical(c)?;
        let e = params.rest_energy();
        let lo_shift = window.max(-2.0 * e + options.margin);
        // Shifted energies s map to λ = sign·(mc² + s).
        let (lo, hi) = if sign > 0.0 {
            (e + lo_shift, e - options.margin)
        } else {
            (-e + options.margin, -e - lo_shift)
        };
        let scan = scan_window(
            &coupling,
            surface,
            &params,
            lo,
            hi,
            &ScanOptions { n_samples: options.n_samples, margin: None, bracket_threshold: 0.25 },
        )?;
        let refine = RefineOptions {
            tol_lambda: Some(options.tol_lambda * e),
            jump_residual: false,
            ..RefineOptions::default()
        };
        let found = refine_all(scan, surface, &refine)?;
        let shifted: Vec<f64> = found.eigenvalues.iter().map(|r| sign * r.lambda - e).collect();
        if shifted.is_empty() {
            missing.push(c);
        }
        for s in &shifted {
            if let Some(r) = references.iter().min_by(|a, b| (*a - s).abs().total_cmp(&(*b - s).abs())) {
                rows.push(NonrelRow { c, lambda_shifted: *s, schrodinger_ref: *r, difference: s - r });
            }
        }
        let ground = references.first().and_then(|g| {
            rows.iter()
                .filter(|r| r.c == c && r.schrodinger_ref == *g)
                .map(|r| r.difference)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        });
        ground_differences.push((c, ground));
    }
    let pts: Vec<(f64, f64)> = ground_differences
        .iter()
        .filter_map(|(c, d)| d.filter(|d| *d != 0.0).map(|d| (c.ln(), d.abs().ln())))
        .collect();
    let fitted_order = if pts.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        ls_slope(&xs, &ys).map(|s| -s)
    } else {
        None
    };
    Ok(NonrelTable {
        eta,
        tau,
        mass,
        branch: options.branch,
        reference_energies: references,
        rows,
        missing,
        ground_differences,
        fitted_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::sphere_grid;

    #[test]
    fn free_scan_is_flat() {
        let s = sphere_grid(1.0, 4, 8).unwrap();
        let p = PhysParams::new(1.0, 1.0).unwrap();
        let scan = scan_gap(&Coupling::free(1.0), &s, &p, &ScanOptions { n_samples: 11, ..Default::default() }).unwrap();
        assert!(scan.sigma_min.iter().all(|v| *v == 1.0));
        assert!(scan.brackets.is_empty());
    }

    #[test]
    fn critical_coupling_refused() {
        let s = sphere_grid(1.0, 4, 8).unwrap();
        let p = PhysParams::new(1.0, 1.0).unwrap();
        let r = scan_gap(&Coupling::new(2.0, 0.0, 1.0), &s, &p, &ScanOptions::default());
        assert!(matches!(r, Err(Error::CriticalCoupling { .. })));
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = [5.0f64, 10.0, 20.0].iter().map(|c| c.ln()).collect();
        let ys: Vec<f64> = [5.0f64, 10.0, 20.0].iter().map(|c| (3.0 / (c * c)).ln()).collect();
        assert!((ls_slope(&xs, &ys).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_coupling_rejected() {
        let s = sphere_grid(1.0, 4, 8).unwrap();
        let r = nonrel_limit_sweep(-1.0, 1.0, &s, 1.0, &[5.0], &NonrelOptions::default());
        assert!(matches!(r, Err(Error::MixedCoupling { .. })));
    }
}
