//! Dirac algebra, physical parameters, dispersion relation and the free Green function.
//!
//! Matrices use the standard (Dirac) representation with spinor components ordered
//! as the upper pair followed by the lower pair.

use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat4C = Matrix4<Complex64>;
pub type Vec3 = Vector3<f64>;
pub type Spinor = Vector4<Complex64>;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Relative band used to decide whether η² − τ² equals ±4c².
pub const CRITICAL_REL_TOL: f64 = 1e-9;

/// Diagonal of β, also the sign pattern of the spin projection Σ₃ = diag(σ₃, σ₃).
pub(crate) const BETA_DIAG: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
pub(crate) const SPIN_SIGN: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// Mass and speed of light, with ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub mass: f64,
    pub light_speed: f64,
}

impl PhysParams {
    pub fn new(mass: f64, light_speed: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        if !(light_speed > 0.0 && light_speed.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "speed of light must be positive, got {light_speed}"
            )));
        }
        Ok(Self { mass, light_speed })
    }

    /// Gap half-width mc².
    pub fn rest_energy(&self) -> f64 {
        self.mass * self.light_speed * self.light_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingClass {
    Noncritical,
    Critical,
    Confinement,
}

/// Shell strengths: η multiplies I₄ (electrostatic), τ multiplies β (Lorentz scalar).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub eta: f64,
    pub tau: f64,
    pub class: CouplingClass,
}

impl Coupling {
    /// Classify (η, τ) for the given speed of light.
    pub fn new(eta: f64, tau: f64, light_speed: f64) -> Self {
        let four_c2 = 4.0 * light_speed * light_speed;
        let diff = eta * eta - tau * tau;
        let band = CRITICAL_REL_TOL * four_c2;
        let class = if (diff - four_c2).abs() <= band {
            CouplingClass::Critical
        } else if (diff + four_c2).abs() <= band {
            CouplingClass::Confinement
        } else {
            CouplingClass::Noncritical
        };
        Self { eta, tau, class }
    }

    pub fn free(light_speed: f64) -> Self {
        Self::new(0.0, 0.0, light_speed)
    }

    /// Refuse the critical case.
    pub fn ensure_noncritical(&self, light_speed: f64) -> Result<()> {
        if self.class == CouplingClass::Critical {
            return Err(Error::CriticalCoupling { eta: self.eta, tau: self.tau, c: light_speed });
        }
        Ok(())
    }

    pub fn is_free(&self) -> bool {
        self.eta == 0.0 && self.tau == 0.0
    }

    /// Diagonal of ηI₄ + τβ.
    pub fn diagonal(&self) -> [f64; 4] {
        BETA_DIAG.map(|b| self.eta + self.tau * b)
    }

    pub fn matrix(&self) -> Mat4C {
        Mat4C::from_diagonal(&Vector4::from(self.diagonal().map(|d| Complex64::new(d, 0.0))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Gap,
    NonReal,
    Essential,
}

/// A spectral parameter together with its position relative to σ(A₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub lambda: Complex64,
    pub region: Region,
}

impl SpectralPoint {
    pub fn new(lambda: Complex64, params: &PhysParams) -> Self {
        let region = if lambda.im != 0.0 {
            Region::NonReal
        } else if lambda.re.abs() < params.rest_energy() {
            Region::Gap
        } else {
            Region::Essential
        };
        Self { lambda, region }
    }

    pub fn real(lambda: f64, params: &PhysParams) -> Self {
        Self::new(Complex64::new(lambda, 0.0), params)
    }
}

/// The essential spectrum (−∞, −threshold] ∪ [threshold, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssentialSpectrum {
    pub threshold: f64,
}

impl EssentialSpectrum {
    pub fn contains(&self, lambda: Complex64) -> bool {
        lambda.im == 0.0 && lambda.re.abs() >= self.threshold
    }

    pub fn lower_half_line(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, -self.threshold)
    }

    pub fn upper_half_line(&self) -> (f64, f64) {
        (self.threshold, f64::INFINITY)
    }
}

pub fn essential_spectrum(params: &PhysParams) -> EssentialSpectrum {
    EssentialSpectrum { threshold: params.rest_energy() }
}

/// α₁, α₂, α₃ and β.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracMatrices {
    pub alpha: [Mat4C; 3],
    pub beta: Mat4C,
}

pub fn dirac_matrices() -> DiracMatrices {
    let alpha = [
        alpha_dot(&Vec3::new(1.0, 0.0, 0.0)),
        alpha_dot(&Vec3::new(0.0, 1.0, 0.0)),
        alpha_dot(&Vec3::new(0.0, 0.0, 1.0)),
    ];
    let beta = Mat4C::from_diagonal(&Vector4::from(BETA_DIAG.map(|b| Complex64::new(b, 0.0))));
    DiracMatrices { alpha, beta }
}

/// Pauli combination σ·v as a 2×2 array.
fn sigma_dot(v: &Vec3) -> [[Complex64; 2]; 2] {
    [
        [Complex64::new(v.z, 0.0), Complex64::new(v.x, -v.y)],
        [Complex64::new(v.x, v.y), Complex64::new(-v.z, 0.0)],
    ]
}

/// α·v = Σ α_k v_k.
pub fn alpha_dot(v: &Vec3) -> Mat4C {
    let s = sigma_dot(v);
    let mut m = Mat4C::zeros();
    for r in 0..2 {
        for col in 0..2 {
            m[(r, col + 2)] = s[r][col];
            m[(r + 2, col)] = s[r][col];
        }
    }
    m
}

/// Wavenumber k with k² = λ²/c² − (mc)² and Im k > 0.
pub fn momentum_k(lambda: Complex64, params: &PhysParams) -> Result<Complex64> {
    if essential_spectrum(params).contains(lambda) {
        return Err(Error::EssentialSpectrumPoint(lambda));
    }
    let c = params.light_speed;
    let mc = params.mass * c;
    if lambda.im == 0.0 {
        let x = lambda.re / c;
        return Ok(Complex64::new(0.0, (mc * mc - x * x).sqrt()));
    }
    let k2 = lambda * lambda / (c * c) - mc * mc;
    let k = k2.sqrt();
    Ok(if k.im < 0.0 { -k } else { k })
}

/// The Green function G_λ(x) of −icα·∇ + mc²β − λ.
pub fn green_function(lambda: Complex64, x: &Vec3, params: &PhysParams) -> Result<Mat4C> {
    let k = momentum_k(lambda, params)?;
    green_with_k(lambda, k, x, params)
}

/// Same as [`green_function`] with a precomputed wavenumber.
pub fn green_with_k(lambda: Complex64, k: Complex64, x: &Vec3, params: &PhysParams) -> Result<Mat4C> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::OriginSingularity);
    }
    let phase = (I * k * r).exp();
    let scalar = phase / (FOUR_PI * r);
    let vector = (ONE - I * k * r) * phase / (FOUR_PI * r * r * r);
    Ok(assemble_block(lambda, params, scalar, [vector * x.x, vector * x.y, vector * x.z]))
}

/// Builds `scalar·(λ/c² I₄ + mβ) + (i/c) α·vector` from scalar kernel channels.
pub(crate) fn assemble_block(
    lambda: Complex64,
    params: &PhysParams,
    scalar: Complex64,
    vector: [Complex64; 3],
) -> Mat4C {
    let c = params.light_speed;
    let energy = lambda / (c * c);
    let mut m = Mat4C::zeros();
    for (a, b) in BETA_DIAG.iter().enumerate() {
        m[(a, a)] = scalar * (energy + params.mass * b);
    }
    let f = I / c;
    let s = [
        [vector[2] * f, (vector[0] - I * vector[1]) * f],
        [(vector[0] + I * vector[1]) * f, -vector[2] * f],
    ];
    for r in 0..2 {
        for col in 0..2 {
            m[(r, col + 2)] = s[r][col];
            m[(r + 2, col)] = s[r][col];
        }
    }
    m
}

/// Splits G_λ(x) into the static singular part and a remainder that is O(1/|x|).
pub fn green_split(lambda: Complex64, x: &Vec3, params: &PhysParams) -> Result<(Mat4C, Mat4C)> {
    let k = momentum_k(lambda, params)?;
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::OriginSingularity);
    }
    let singular = assemble_block(
        lambda,
        params,
        Complex64::new(1.0 / (FOUR_PI * r), 0.0),
        [x.x, x.y, x.z].map(|v| Complex64::new(v / (FOUR_PI * r * r * r), 0.0)),
    );
    // e^{ikr} − 1 and (1 − ikr)e^{ikr} − 1 lose digits for small kr; use series there.
    let z = I * k * r;
    let (em1, vm1) = if z.norm() < 1e-3 {
        let em1 = z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
        // (1 − z)e^z − 1 = −z²/2 − z³/3 − z⁴/8
        let vm1 = -z * z / 2.0 - z * z * z / 3.0 - z * z * z * z / 8.0;
        (em1, vm1)
    } else {
        let e = z.exp();
        (e - ONE, (ONE - z) * e - ONE)
    };
    let remainder = assemble_block(
        lambda,
        params,
        em1 / (FOUR_PI * r),
        [x.x, x.y, x.z].map(|v| vm1 * v / (FOUR_PI * r * r * r)),
    );
    Ok((singular, remainder))
}

/// (icα·ν + ½(ηI₄+τβ))⁻¹ in closed form.
pub fn transmission_factor_inverse(coupling: &Coupling, normal: &Vec3, light_speed: f64) -> Result<Mat4C> {
    if coupling.class == CouplingClass::Confinement {
        return Err(Error::ConfinementCase);
    }
    let c = light_speed;
    let det = 4.0 * c * c + coupling.eta * coupling.eta - coupling.tau * coupling.tau;
    let mirrored = Coupling { tau: -coupling.tau, ..*coupling };
    let m = alpha_dot(normal) * Complex64::new(0.0, -c) + mirrored.matrix() * Complex64::new(0.5, 0.0);
    Ok(m * Complex64::new(4.0 / det, 0.0))
}

/// Transmission matrix R: a pair of traces is admissible iff f₊ = R f₋ on Σ.
pub fn transmission_matrix(coupling: &Coupling, normal: &Vec3, light_speed: f64) -> Result<Mat4C> {
    let inv = transmission_factor_inverse(coupling, normal, light_speed)?;
    let rhs = alpha_dot(normal) * Complex64::new(0.0, -light_speed)
        + coupling.matrix() * Complex64::new(0.5, 0.0);
    Ok(-(inv * rhs))
}

/// P± = ½(I₄ ∓ (i/2c)(α·ν)(ηI₄+τβ)); the interior and exterior traces satisfy P₊f₊ = 0, P₋f₋ = 0.
pub fn confinement_projectors(coupling: &Coupling, normal: &Vec3, light_speed: f64) -> Result<(Mat4C, Mat4C)> {
    if coupling.class != CouplingClass::Confinement {
        return Err(Error::NotConfinement);
    }
    let t = alpha_dot(normal) * coupling.matrix() * Complex64::new(0.0, 1.0 / (2.0 * light_speed));
    let id = Mat4C::identity();
    let half = Complex64::new(0.5, 0.0);
    Ok(((id - t) * half, (id + t) * half))
}

/// (η, τ) ↦ (−4c²η/(η²−τ²), −4c²τ/(η²−τ²)).
pub fn symmetry_map(coupling: &Coupling, light_speed: f64) -> Result<Coupling> {
    let d = coupling.eta * coupling.eta - coupling.tau * coupling.tau;
    if d == 0.0 {
        return Err(Error::DegenerateCoupling);
    }
    let s = -4.0 * light_speed * light_speed / d;
    Ok(Coupling::new(s * coupling.eta + 0.0, s * coupling.tau + 0.0, light_speed))
}

/// Charge conjugation matrix iβα₂; the antiunitary map is φ ↦ U·conj(φ).
pub fn charge_conjugation_matrix() -> Mat4C {
    let d = dirac_matrices();
    d.beta * d.alpha[1] * I
}

/// Time reversal matrix −iγ₅α₂ with γ₅ the off-diagonal identity; the map is φ ↦ V·conj(φ).
pub fn time_reversal_matrix() -> Mat4C {
    let d = dirac_matrices();
    let mut gamma5 = Mat4C::zeros();
    for a in 0..2 {
        gamma5[(a, a + 2)] = ONE;
        gamma5[(a + 2, a)] = ONE;
    }
    gamma5 * d.alpha[1] * (-I)
}

/// Spinor rotation about the z axis by angle `angle`.
pub fn spin_rotation_z(angle: f64) -> Mat4C {
    Mat4C::from_diagonal(&Vector4::from(SPIN_SIGN.map(|s| Complex64::from_polar(1.0, -0.5 * s * angle))))
}

pub(crate) fn zero_spinor() -> Spinor {
    Spinor::from_element(ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PhysParams {
        PhysParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn momentum_examples() {
        let p = params();
        let k0 = momentum_k(Complex64::new(0.0, 0.0), &p).unwrap();
        assert!((k0 - I).norm() < 1e-15);
        let k = momentum_k(Complex64::new(0.5, 0.0), &p).unwrap();
        assert!((k - I * 0.75f64.sqrt()).norm() < 1e-15);
        let k = momentum_k(Complex64::new(0.0, 2.0), &p).unwrap();
        assert!((k - I * 5f64.sqrt()).norm() < 1e-14);
        assert!(matches!(
            momentum_k(Complex64::new(1.0, 0.0), &p),
            Err(Error::EssentialSpectrumPoint(_))
        ));
    }

    #[test]
    fn essential_spectrum_examples() {
        let e = essential_spectrum(&PhysParams::new(1.0, 2.0).unwrap());
        assert_eq!(e.upper_half_line().0, 4.0);
        let e = essential_spectrum(&PhysParams::new(0.5, 2.0).unwrap());
        assert_eq!(e.lower_half_line().1, -2.0);
    }

    #[test]
    fn alpha_dot_basis() {
        let d = dirac_matrices();
        assert_eq!(alpha_dot(&Vec3::zeros()), Mat4C::zeros());
        assert_eq!(alpha_dot(&Vec3::new(1.0, 0.0, 0.0)), d.alpha[0]);
    }

    #[test]
    fn green_split_sums_and_static_part() {
        let p = params();
        let x = Vec3::new(0.3, -0.2, 0.5);
        let lam = Complex64::new(0.4, 0.1);
        let g = green_function(lam, &x, &p).unwrap();
        let (s, r) = green_split(lam, &x, &p).unwrap();
        assert!((s + r - g).norm() < 1e-14 * g.norm());
        let (s0, _) = green_split(Complex64::new(0.0, 0.0), &x, &p).unwrap();
        let w = 1.0 / (FOUR_PI * x.norm());
        assert!((s0[(0, 0)].re - w).abs() < 1e-15 && (s0[(2, 2)].re + w).abs() < 1e-15);
    }

    #[test]
    fn green_remainder_is_mild_at_origin() {
        let p = params();
        let lam = Complex64::new(0.2, 0.3);
        let dir = Vec3::new(1.0, 2.0, -0.5).normalize();
        let mut last = 0.0;
        for e in 1..8 {
            let r = 10f64.powi(-e);
            let (_, rem) = green_split(lam, &(dir * r), &p).unwrap();
            last = rem.norm() * r;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn origin_rejected() {
        assert!(matches!(
            green_function(Complex64::new(0.0, 0.0), &Vec3::zeros(), &params()),
            Err(Error::OriginSingularity)
        ));
    }

    #[test]
    fn classification() {
        assert_eq!(Coupling::new(2.0, 0.0, 1.0).class, CouplingClass::Critical);
        assert_eq!(Coupling::new(0.0, 2.0, 1.0).class, CouplingClass::Confinement);
        assert_eq!(Coupling::new(-3.0, 0.0, 1.0).class, CouplingClass::Noncritical);
    }

    #[test]
    fn symmetry_map_examples() {
        let m = symmetry_map(&Coupling::new(-3.0, 0.0, 1.0), 1.0).unwrap();
        assert!((m.eta - 4.0 / 3.0).abs() < 1e-15 && m.tau == 0.0);
        assert!(matches!(
            symmetry_map(&Coupling::new(1.0, 1.0, 1.0), 1.0),
            Err(Error::DegenerateCoupling)
        ));
    }

    #[test]
    fn transmission_identity_for_free_shell() {
        let r = transmission_matrix(&Coupling::free(1.0), &Vec3::new(0.0, 0.6, 0.8), 1.0).unwrap();
        assert!((r - Mat4C::identity()).norm() < 1e-14);
    }

    #[test]
    fn discrete_symmetry_matrices() {
        let d = dirac_matrices();
        let u = charge_conjugation_matrix();
        assert!((u * u - Mat4C::identity()).norm() < 1e-15);
        assert!((u * d.beta * u + d.beta).norm() < 1e-15);
        let v = time_reversal_matrix();
        // T² = V·conj(V) = −1.
        assert!((v * v.map(|z| z.conj()) + Mat4C::identity()).norm() < 1e-15);
    }
}
