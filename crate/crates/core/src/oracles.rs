//! Independent references: spherical Bessel functions, single-layer eigenvalues on the
//! sphere, and the Schrödinger δ-shell operator −(1/2m)Δ + ηδ_Σ (boundary-integral and
//! radial-ODE formulations).

use std::f64::consts::PI;

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_single_layer, single_layer_modes, BoundaryOperator, OperatorKind};
use crate::dirac::{Region, SpectralPoint, Vec3, I};
use crate::error::{Error, Result};
use crate::linalg;
use crate::search::{golden_section, local_minimum_brackets, bisect, Bracket};
use crate::surface::SurfaceQuadrature;

const ZERO: c64 = c64::new(0.0, 0.0);

/// j_n(z) and h_n⁽¹⁾(z) for n = 0..=lmax.
pub fn spherical_bessel_all(lmax: usize, z: c64) -> Result<(Vec<c64>, Vec<c64>)> {
    if z == ZERO {
        return Err(Error::OriginSingularity);
    }
    // Hankel: upward recurrence is stable.
    let e = (I * z).exp();
    let mut h = vec![ZERO; lmax + 2];
    h[0] = -I * e / z;
    h[1] = -e * (z + I) / (z * z);
    for n in 1..=lmax {
        h[n + 1] = h[n] * ((2 * n + 1) as f64) / z - h[n - 1];
    }
    h.truncate(lmax + 1);
    Ok((spherical_j_all(lmax, z), h))
}

/// j_n(z), n = 0..=lmax, by Miller's downward recurrence.
pub fn spherical_j_all(lmax: usize, z: c64) -> Vec<c64> {
    if z == ZERO {
        let mut out = vec![ZERO; lmax + 1];
        out[0] = c64::new(1.0, 0.0);
        return out;
    }
    let start = lmax + 30 + 2 * z.norm().ceil() as usize;
    let mut vals = vec![ZERO; start + 2];
    vals[start + 1] = ZERO;
    vals[start] = c64::new(1e-30, 0.0);
    for n in (1..=start).rev() {
        vals[n - 1] = vals[n] * ((2 * n + 1) as f64) / z - vals[n + 1];
        if vals[n - 1].norm() > 1e200 {
            for v in vals[n - 1..].iter_mut() {
                *v *= 1e-200;
            }
        }
    }
    let j0 = z.sin() / z;
    let j1 = z.sin() / (z * z) - z.cos() / z;
    let scale = if j0.norm() >= j1.norm() { j0 / vals[0] } else { j1 / vals[1] };
    vals.truncate(lmax + 1);
    vals.into_iter().map(|v| v * scale).collect()
}

/// (j_l(z), h_l⁽¹⁾(z)).
pub fn spherical_bessel(l: usize, z: c64) -> Result<(c64, c64)> {
    let (j, h) = spherical_bessel_all(l, z)?;
    Ok((j[l], h[l]))
}

/// Derivatives (j_l'(z), h_l'(z)) from f_l' = f_{l−1} − (l+1) f_l / z (l ≥ 1), f_0' = −f_1.
pub fn spherical_bessel_derivatives(l: usize, z: c64) -> Result<(c64, c64)> {
    let (j, h) = spherical_bessel_all(l + 1, z)?;
    if l == 0 {
        return Ok((-j[1], -h[1]));
    }
    let f = (l + 1) as f64;
    Ok((j[l - 1] - j[l] * f / z, h[l - 1] - h[l] * f / z))
}

/// Eigenvalue of the single layer with kernel e^{ik|x−y|}/(4π|x−y|) on degree-l harmonics
/// of the sphere of radius R: i k R² j_l(kR) h_l⁽¹⁾(kR).
pub fn sphere_single_layer_eig(k: c64, radius: f64, l: usize) -> c64 {
    if k == ZERO {
        return c64::new(radius / (2 * l + 1) as f64, 0.0);
    }
    let (j, h) = spherical_bessel(l, k * radius).expect("nonzero argument");
    I * k * radius * radius * j * h
}

/// κ = √(2mλ) with Im κ > 0; real λ ≥ 0 lies on the Schrödinger essential spectrum.
pub fn schrodinger_wavenumber(lambda: c64, mass: f64) -> Result<c64> {
    if lambda.im == 0.0 && lambda.re >= 0.0 {
        return Err(Error::EssentialSpectrumPoint(lambda));
    }
    if lambda.im == 0.0 {
        return Ok(c64::new(0.0, (2.0 * mass * -lambda.re).sqrt()));
    }
    let k = (lambda * (2.0 * mass)).sqrt();
    Ok(if k.im < 0.0 { -k } else { k })
}

/// K_λ(x) = 2m e^{iκ|x|}/(4π|x|).
pub fn schrodinger_kernel(lambda: c64, mass: f64, x: &Vec3) -> Result<c64> {
    let k = schrodinger_wavenumber(lambda, mass)?;
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::OriginSingularity);
    }
    Ok((I * k * r).exp() * (2.0 * mass / (4.0 * PI * r)))
}

/// The Schrödinger boundary operator D_λ and the potential Ψ_λ on a surface.
#[derive(Debug, Clone)]
pub struct SchrodingerKernels {
    pub lambda: c64,
    pub mass: f64,
    pub wavenumber: c64,
    pub d: BoundaryOperator,
}

impl SchrodingerKernels {
    /// Ψ_λφ(x) = Σ_j K_λ(x − y_j) w_j φ_j.
    pub fn apply_psi(&self, surface: &SurfaceQuadrature, density: &[c64], points: &[Vec3]) -> Result<Vec<c64>> {
        points
            .iter()
            .map(|x| {
                let mut acc = ZERO;
                for ((y, w), phi) in surface.nodes.iter().zip(&surface.weights).zip(density) {
                    acc += schrodinger_kernel(self.lambda, self.mass, &(x - y))? * phi * *w;
                }
                Ok(acc)
            })
            .collect()
    }
}

/// D_λ = 2m·S_κ on the given surface.
pub fn schrodinger_kernels(lambda: c64, mass: f64, surface: &SurfaceQuadrature) -> Result<SchrodingerKernels> {
    let k = schrodinger_wavenumber(lambda, mass)?;
    let mut d = assemble_single_layer(k, surface)?;
    let f = 2.0 * mass;
    d.matrix = Mat::from_fn(d.matrix.nrows(), d.matrix.ncols(), |i, j| d.matrix[(i, j)] * f);
    d.kind = OperatorKind::SchrodingerLayer;
    d.lambda = SpectralPoint { lambda, region: if lambda.im == 0.0 { Region::Gap } else { Region::NonReal } };
    Ok(SchrodingerKernels { lambda, mass, wavenumber: k, d })
}

/// Smallest singular value of I + ηD_λ in the weighted norm.
pub fn schrodinger_sigma_min(lambda: c64, eta: f64, mass: f64, surface: &SurfaceQuadrature) -> Result<f64> {
    let k = schrodinger_wavenumber(lambda, mass)?;
    if surface.grid().is_some() {
        let op = single_layer_modes(k, 2.0 * mass, surface, true)?.birman_schwinger(&[eta]);
        op.smallest_singular_value()
    } else {
        let d = schrodinger_kernels(lambda, mass, surface)?.d;
        let w = d.weighted(&surface.weights);
        let m = Mat::from_fn(w.nrows(), w.ncols(), |i, j| {
            w[(i, j)] * eta + if i == j { c64::new(1.0, 0.0) } else { ZERO }
        });
        Ok(linalg::singular_values(&m)?[0])
    }
}

/// Bound state of −(1/2m)Δ + ηδ on a sphere, from the radial equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialMode {
    pub l: usize,
    pub energy: f64,
    /// Derivative-jump mismatch at the returned energy.
    pub residual: f64,
}

/// Logarithmic-derivative ODE in s = ln r for z = r u'/u:
/// dz/ds = z + l(l+1) − z² + q² r².
fn riccati_rhs(z: f64, s: f64, l: usize, q: f64) -> f64 {
    let r = s.exp();
    z + (l * (l + 1)) as f64 - z * z + q * q * r * r
}

fn rk4(mut z: f64, s0: f64, s1: f64, steps: usize, l: usize, q: f64) -> f64 {
    let h = (s1 - s0) / steps as f64;
    let mut s = s0;
    for _ in 0..steps {
        let k1 = riccati_rhs(z, s, l, q);
        let k2 = riccati_rhs(z + 0.5 * h * k1, s + 0.5 * h, l, q);
        let k3 = riccati_rhs(z + 0.5 * h * k2, s + 0.5 * h, l, q);
        let k4 = riccati_rhs(z + h * k3, s + h, l, q);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    z
}

/// u'(R⁺)/u(R) − u'(R⁻)/u(R) − 2mη for decay rate q = √(−2mE).
fn radial_mismatch(q: f64, l: usize, mass: f64, eta: f64, radius: f64) -> f64 {
    let lf = l as f64;
    let r0 = 1e-6 * radius;
    let z0 = lf + 1.0 + q * q * r0 * r0 / (2.0 * lf + 3.0);
    let s_r = radius.ln();
    let inner = rk4(z0, r0.ln(), s_r, 6000, l, q);
    let r_max = radius + 40.0 / q;
    // Decaying solution: z ≈ −q r − l(l+1)/(2 q r) ... at large r; integration inward is stable.
    let outer = rk4(-q * r_max - 1.0, r_max.ln(), s_r, 6000, l, q);
    (outer - inner) / radius - 2.0 * mass * eta
}

/// Bound states with l ≤ l_max of −(1/2m)Δ + ηδ on the sphere of the given radius, searched
/// in λ ∈ (−50·m·η², −1e−8). The domain condition reads u'(R⁺) − u'(R⁻) = 2mη u(R).
pub fn schrodinger_sphere_bound_states(eta: f64, mass: f64, radius: f64, l_max: usize) -> Vec<RadialMode> {
    if eta >= 0.0 {
        return Vec::new();
    }
    let q_hi = (2.0 * mass * 50.0 * mass * eta * eta).sqrt();
    let q_lo = (2.0 * mass * 1e-8).sqrt();
    (0..=l_max)
        .into_par_iter()
        .filter_map(|l| {
            let f = |q: f64| radial_mismatch(q, l, mass, eta, radius);
            if f(q_lo) <= 0.0 || f(q_hi) >= 0.0 {
                return None;
            }
            let q = bisect(f, q_lo, q_hi, 1e-14);
            Some(RadialMode { l, energy: -q * q / (2.0 * mass), residual: f(q).abs() })
        })
        .collect()
}

/// Sampled σ_min(I + ηD_λ) over a grid of negative energies, with refined zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerScan {
    pub eta: f64,
    pub mass: f64,
    pub lambdas: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub brackets: Vec<Bracket>,
    /// Refined zero locations with the smallest singular value found there.
    pub zeros: Vec<(f64, f64)>,
}

pub const SCHRODINGER_BRACKET_THRESHOLD: f64 = 0.3;
pub const SCHRODINGER_ACCEPT_TOL: f64 = 1e-3;

/// Samples σ_min(I + ηD_λ) on `lambdas` (all negative) and refines every dip to `tol`.
pub fn schrodinger_bs_scan(
    eta: f64,
    surface: &SurfaceQuadrature,
    mass: f64,
    lambdas: &[f64],
    tol: f64,
) -> Result<SchrodingerScan> {
    if let Some(bad) = lambdas.iter().find(|l| !(**l < 0.0)) {
        return Err(Error::InvalidParameter(format!("energy grid must be negative, found {bad}")));
    }
    let sigma_min = lambdas
        .par_iter()
        .map(|l| schrodinger_sigma_min(c64::new(*l, 0.0), eta, mass, surface))
        .collect::<Result<Vec<_>>>()?;
    let brackets = local_minimum_brackets(lambdas, &sigma_min, SCHRODINGER_BRACKET_THRESHOLD);
    let mut zeros = Vec::new();
    for b in &brackets {
        let (x, fx) = golden_section(
            |l| schrodinger_sigma_min(c64::new(l, 0.0), eta, mass, surface),
            b.lo.min(b.hi),
            b.hi.max(b.lo),
            tol,
        )?;
        if fx <= SCHRODINGER_ACCEPT_TOL {
            zeros.push((x, fx));
        }
    }
    Ok(SchrodingerScan { eta, mass, lambdas: lambdas.to_vec(), sigma_min, brackets, zeros })
}

/// Energies spaced uniformly in √(−λ) over (lo, hi) with lo < hi < 0.
pub fn schrodinger_energy_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = ((-hi).sqrt(), (-lo).sqrt());
    (0..n).map(|i| -(a + (b - a) * i as f64 / (n - 1) as f64).powi(2)).rev().collect()
}

/// A gap eigenvalue of the δ-shell Dirac operator on a sphere, from partial waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiracPartialWave {
    pub kappa: i32,
    pub lambda: f64,
    /// 2|κ| states share this eigenvalue.
    pub degeneracy: usize,
}

/// Transmission determinant for the partial wave κ at real λ in the gap.
///
/// With ψ = (g Ω_κ, i f Ω_{−κ}) the free radial solutions are g = j_l(kr) inside and
/// h_l⁽¹⁾(kr) outside, with f = s·ck/(λ+mc²)·(same kind)_{l̄}. The shell condition reads
/// −c(f₊ − f₋) = ½(η+τ)(g₊ + g₋) and c(g₊ − g₋) = ½(η−τ)(f₊ + f₋).
/// Columns are normalised by g at the shell, which makes the determinant real.
pub fn dirac_sphere_determinant(
    lambda: f64,
    kappa: i32,
    eta: f64,
    tau: f64,
    params: &crate::dirac::PhysParams,
    radius: f64,
) -> Result<f64> {
    if kappa == 0 {
        return Err(Error::InvalidParameter("κ must be nonzero".into()));
    }
    let c = params.light_speed;
    let mc2 = params.rest_energy();
    if lambda.abs() >= mc2 {
        return Err(Error::EssentialSpectrumPoint(c64::new(lambda, 0.0)));
    }
    let k = c64::new(0.0, (mc2 * mc2 - lambda * lambda).sqrt() / c);
    let (l, lbar, sign) = if kappa < 0 {
        ((-kappa - 1) as usize, (-kappa) as usize, -1.0)
    } else {
        (kappa as usize, (kappa - 1) as usize, 1.0)
    };
    let (j, h) = spherical_bessel_all(l + 1, k * radius)?;
    let gamma = k * (c * sign / (lambda + mc2));
    let a = (gamma * j[lbar] / j[l]).re;
    let b = (gamma * h[lbar] / h[l]).re;
    let (p, m) = (0.5 * (eta + tau), 0.5 * (eta - tau));
    Ok((-c * a - p) * (-c - m * b) - (c * b - p) * (c - m * a))
}

/// Gap eigenvalues on a sphere for |κ| ≤ `kappa_max`, by sign changes of the
/// transmission determinant on `n_samples` points followed by bisection.
pub fn dirac_sphere_eigenvalues(
    eta: f64,
    tau: f64,
    params: &crate::dirac::PhysParams,
    radius: f64,
    kappa_max: i32,
    n_samples: usize,
) -> Result<Vec<DiracPartialWave>> {
    let mc2 = params.rest_energy();
    let lo = -mc2 * (1.0 - 1e-9);
    let hi = mc2 * (1.0 - 1e-9);
    let xs: Vec<f64> = (0..n_samples).map(|i| lo + (hi - lo) * i as f64 / (n_samples - 1) as f64).collect();
    let mut out = Vec::new();
    for kappa in (-kappa_max..=kappa_max).filter(|k| *k != 0) {
        let det = |x: f64| dirac_sphere_determinant(x, kappa, eta, tau, params, radius).unwrap_or(f64::NAN);
        let ys: Vec<f64> = xs.iter().map(|x| det(*x)).collect();
        for i in 0..n_samples - 1 {
            if ys[i] == 0.0 {
                out.push(DiracPartialWave { kappa, lambda: xs[i], degeneracy: 2 * kappa.unsigned_abs() as usize });
            } else if ys[i] * ys[i + 1] < 0.0 {
                let x = bisect(det, xs[i], xs[i + 1], 1e-15);
                out.push(DiracPartialWave { kappa, lambda: x, degeneracy: 2 * kappa.unsigned_abs() as usize });
            }
        }
    }
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let (j, _) = spherical_bessel(0, c64::new(1.0, 0.0)).unwrap();
        assert!((j.re - 1f64.sin()).abs() < 1e-15);
        let (_, h) = spherical_bessel(0, I).unwrap();
        assert!((h - c64::new(-(-1f64).exp(), 0.0)).norm() < 1e-15);
        assert!(matches!(spherical_bessel(0, ZERO), Err(Error::OriginSingularity)));
    }

    #[test]
    fn wronskian_and_recurrence() {
        for z in [c64::new(0.7, 0.0), c64::new(0.0, 1.3), c64::new(3.2, -0.4), c64::new(12.0, 2.0)] {
            let (j, _) = spherical_bessel_all(7, z).unwrap();
            for l in 0..=5 {
                let (jl, hl) = spherical_bessel(l, z).unwrap();
                let (dj, dh) = spherical_bessel_derivatives(l, z).unwrap();
                let w = jl * dh - dj * hl;
                assert!((w - I / (z * z)).norm() < 1e-10 * (I / (z * z)).norm(), "l={l} z={z}");
                if l >= 1 {
                    let lhs = j[l - 1] + j[l + 1];
                    let rhs = j[l] * ((2 * l + 1) as f64) / z;
                    assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
                }
            }
        }
    }

    #[test]
    fn coulomb_limit() {
        let tiny = sphere_single_layer_eig(c64::new(0.0, 1e-7), 1.0, 0);
        assert!((tiny - c64::new(1.0, 0.0)).norm() < 1e-6);
        assert_eq!(sphere_single_layer_eig(ZERO, 2.0, 1), c64::new(2.0 / 3.0, 0.0));
    }

    #[test]
    fn scaling_law() {
        let k = c64::new(0.4, 0.9);
        for l in 0..4 {
            let a = sphere_single_layer_eig(k, 1.7, l);
            let b = sphere_single_layer_eig(k * 1.7, 1.0, l) * 1.7;
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn radial_s_wave_matches_closed_form() {
        // For l = 0 the matching condition reduces to q(1 + coth qR) = −2mη.
        let modes = schrodinger_sphere_bound_states(-3.0, 1.0, 1.0, 0);
        assert_eq!(modes.len(), 1);
        let q = (-2.0 * modes[0].energy).sqrt();
        let g = q * (1.0 + 1.0 / q.tanh()) - 6.0;
        assert!(g.abs() < 1e-9, "{g}");
    }

    #[test]
    fn dirac_sphere_values_frozen() {
        let p = crate::dirac::PhysParams::new(1.0, 1.0).unwrap();
        let modes = dirac_sphere_eigenvalues(-3.0, 0.0, &p, 1.0, 8, 4000).unwrap();
        let got: Vec<(i32, f64, usize)> = modes.iter().map(|m| (m.kappa, m.lambda, m.degeneracy)).collect();
        let expected = [(-1, -0.7862113423, 2), (2, -0.6565345671, 4), (1, -0.3338701896, 2)];
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!((g.0, g.2), (e.0, e.2));
            assert!((g.1 - e.1).abs() < 1e-9, "{g:?}");
        }
        // Inverted coupling (4/3, 0) has the same spectrum.
        let inverted = dirac_sphere_eigenvalues(4.0 / 3.0, 0.0, &p, 1.0, 8, 4000).unwrap();
        for (a, b) in modes.iter().zip(&inverted) {
            assert!((a.lambda - b.lambda).abs() < 1e-10);
        }
        assert!(dirac_sphere_eigenvalues(0.0, 1.5, &p, 1.0, 8, 4000).unwrap().is_empty());
    }

    #[test]
    fn dirac_sphere_tends_to_schrodinger() {
        let ground = schrodinger_sphere_bound_states(-3.0, 1.0, 1.0, 0)[0].energy;
        let mut last = f64::INFINITY;
        for c in [5.0, 10.0, 20.0] {
            let p = crate::dirac::PhysParams::new(1.0, c).unwrap();
            let top = dirac_sphere_eigenvalues(-3.0, 0.0, &p, 1.0, 1, 20000).unwrap();
            let shifted = top.iter().map(|m| m.lambda - c * c).fold(f64::INFINITY, f64::min);
            let diff = (shifted - ground).abs();
            assert!(diff < last);
            last = diff;
        }
        assert!(last < 0.03);
    }

    #[test]
    fn binding_thresholds() {
        assert!(schrodinger_sphere_bound_states(0.0, 1.0, 1.0, 3).is_empty());
        // 2m|η|R > 2l+1 is required for a bound state of angular momentum l.
        let modes = schrodinger_sphere_bound_states(-3.0, 1.0, 1.0, 4);
        let ls: Vec<usize> = modes.iter().map(|m| m.l).collect();
        assert_eq!(ls, vec![0, 1, 2]);
        assert!(schrodinger_sphere_bound_states(-0.45, 1.0, 1.0, 0).is_empty());
    }
}
