//! Nyström discretizations of the boundary operator C_λ, the Helmholtz single layer and
//! the Birman–Schwinger matrix, plus evaluation of the potential Φ_λ and its adjoint.
//!
//! Every kernel used here is built from two scalar channels of the pair (x, y):
//!
//! * `scalar = e^{ikr}/(4πr)`,
//! * `vector = (1 − ikr) e^{ikr} (x − y)/(4πr³)`,
//!
//! so that G_λ(x − y) = scalar·(λ/c² + mβ) + (i/c) α·vector and the Helmholtz single
//! layer is the scalar channel alone. Quadrature weights are folded into the channels.
//!
//! The rotated-pole rule interpolates the density with spherical harmonics of degree ≤ L.
//! For spinor densities the top degree is restricted to total angular momentum L − ½,
//! so that every retained spin-orbit sector keeps its α·ν partner; the interpolation then
//! carries a spin part and the channels gain `spin`, `trace` and `axial` terms.
//!
//! On grids of revolution only the rows of the nodes on the meridian φ = 0 are computed;
//! the remaining rows follow from rotational covariance, and the operator is
//! block-diagonalised by an azimuthal Fourier transform (see [`ModeOperator`]).

use std::f64::consts::PI;
use std::io::{Read, Write};

use faer::{c64, Mat};
use nalgebra::Vector4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac::{
    green_with_k, momentum_k, zero_spinor, Coupling, Mat4C, PhysParams, Spinor,
    SpectralPoint, Vec3, I, SPIN_SIGN,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{gauss_legendre, gauss_legendre_on, RealHarmonics};
use crate::surface::{RevolutionGrid, SingularRule, SurfaceQuadrature};

const FOUR_PI: f64 = 4.0 * PI;
const ZERO: c64 = c64::new(0.0, 0.0);
const ONE: c64 = c64::new(1.0, 0.0);

/// Points closer than this many mesh sizes use the graded near-field rule on grids.
pub const NEAR_FIELD_FACTOR: f64 = 4.0;

/// Weighted kernel channels of one (target, source) pair.
///
/// The 4×4 block they describe is
/// (λ/c² + mβ)(scalar + Σ·spin) + (i/c)·[[0, X], [X, 0]] with X = σ·vector + trace + iσ·axial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channels {
    pub scalar: c64,
    pub vector: [c64; 3],
    pub spin: [c64; 3],
    pub trace: c64,
    pub axial: [c64; 3],
}

impl Default for Channels {
    fn default() -> Self {
        Self { scalar: ZERO, vector: [ZERO; 3], spin: [ZERO; 3], trace: ZERO, axial: [ZERO; 3] }
    }
}

fn rotate(v: &[c64; 3], cos: f64, sin: f64) -> [c64; 3] {
    [v[0] * cos - v[1] * sin, v[0] * sin + v[1] * cos, v[2]]
}

impl Channels {
    fn plain(scalar: c64, vector: [c64; 3]) -> Self {
        Self { scalar, vector, ..Default::default() }
    }

    fn add_scaled(&mut self, other: &Channels, f: c64) {
        self.scalar += other.scalar * f;
        self.trace += other.trace * f;
        for d in 0..3 {
            self.vector[d] += other.vector[d] * f;
            self.spin[d] += other.spin[d] * f;
            self.axial[d] += other.axial[d] * f;
        }
    }

    /// Channels after a rotation by an angle about the z axis.
    fn rotated_z(&self, cos: f64, sin: f64) -> Self {
        Self {
            scalar: self.scalar,
            vector: rotate(&self.vector, cos, sin),
            spin: rotate(&self.spin, cos, sin),
            trace: self.trace,
            axial: rotate(&self.axial, cos, sin),
        }
    }
}

/// Entry (r, c) of σ·w.
fn pauli_entry(w: &[c64; 3], r: usize, c: usize) -> c64 {
    match (r, c) {
        (0, 0) => w[2],
        (0, 1) => w[0] - I * w[1],
        (1, 0) => w[0] + I * w[1],
        _ => -w[2],
    }
}

/// σ·w applied to both halves of a spinor.
fn spin_apply(w: &[c64; 3], phi: &Spinor) -> Spinor {
    let mut out = zero_spinor();
    for h in [0, 2] {
        for r in 0..2 {
            out[h + r] = pauli_entry(w, r, 0) * phi[h] + pauli_entry(w, r, 1) * phi[h + 1];
        }
    }
    out
}

/// Entry (a, b) of the Dirac block described by the channels.
fn dirac_entry(lambda: c64, params: &PhysParams, ch: &Channels, a: usize, b: usize) -> c64 {
    let c = params.light_speed;
    let (r, col) = (a % 2, b % 2);
    if (a < 2) == (b < 2) {
        let beta = if a < 2 { 1.0 } else { -1.0 };
        let diag = if r == col { ch.scalar } else { ZERO };
        return (diag + pauli_entry(&ch.spin, r, col)) * (lambda / (c * c) + params.mass * beta);
    }
    let diag = if r == col { ch.trace } else { ZERO };
    (pauli_entry(&ch.vector, r, col) + diag + I * pauli_entry(&ch.axial, r, col)) * (I / c)
}

/// Entry (a, b) of the spin-aware single layer (scalar + Σ·spin) on spinor densities.
fn spinor_layer_entry(ch: &Channels, a: usize, b: usize) -> c64 {
    if (a < 2) != (b < 2) {
        return ZERO;
    }
    let (r, col) = (a % 2, b % 2);
    (if r == col { ch.scalar } else { ZERO }) + pauli_entry(&ch.spin, r, col)
}

fn kernel_channels(k: c64, d: &Vec3, weight: f64) -> Channels {
    let r = d.norm();
    let phase = (I * k * r).exp();
    let scalar = phase * (weight / (FOUR_PI * r));
    let v = (ONE - I * k * r) * phase * (weight / (FOUR_PI * r * r * r));
    Channels::plain(scalar, [v * d.x, v * d.y, v * d.z])
}

/// Equivalent-disk diagonal: ∫ 1/(4πr) over a disk of area w, plus the finite part ik·w/(4π).
fn disk_diagonal(k: c64, weight: f64) -> Channels {
    let static_part = (weight / PI).sqrt() / 2.0;
    Channels::plain(c64::new(static_part, 0.0) + I * k * (weight / FOUR_PI), [ZERO; 3])
}

fn local_row(surface: &SurfaceQuadrature, i: usize, k: c64) -> Vec<Channels> {
    let x = surface.nodes[i];
    surface
        .nodes
        .iter()
        .zip(&surface.weights)
        .enumerate()
        .map(|(j, (y, w))| if j == i { disk_diagonal(k, *w) } else { kernel_channels(k, &(x - y), *w) })
        .collect()
}

/// Orthonormal tangent frame (e_θ, e_φ) at a unit vector.
fn tangent_frame(u: &Vec3) -> (Vec3, Vec3) {
    let rho = (u.x * u.x + u.y * u.y).sqrt();
    if rho < 1e-14 {
        return (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, u.z.signum(), 0.0));
    }
    let (c, s) = (u.x / rho, u.y / rho);
    (Vec3::new(u.z * c, u.z * s, -rho), Vec3::new(-s, c, 0.0))
}

/// Spherical-harmonic tables for a grid: values at the nodes, scaled by the unit-sphere weights.
struct HarmonicTable {
    sh: RealHarmonics,
    /// node-major, `len` entries per node, already multiplied by the node's parameter weight.
    weighted: Vec<f64>,
    /// node-major, 2L + 1 entries per node: ŵ_j (L Y_{L,m})(x̂_j) / (2L + 1).
    top_angular: Vec<[c64; 3]>,
}

impl HarmonicTable {
    fn new(grid: &RevolutionGrid) -> Self {
        let degree = grid.harmonic_degree();
        let sh = RealHarmonics::new(degree);
        let n = sh.len();
        let width = 2 * degree + 1;
        let mut weighted = vec![0.0; grid.len() * n];
        let mut top_angular = Vec::with_capacity(grid.len() * width);
        let scale = 1.0 / width as f64;
        for (j, u) in grid.params.iter().enumerate() {
            let row = &mut weighted[j * n..(j + 1) * n];
            sh.eval(u, row);
            let w = grid.param_weights[j];
            for l in sh.angular_momentum(degree, row) {
                top_angular.push(l.map(|v| v * (w * scale)));
            }
            row.iter_mut().for_each(|v| *v *= w);
        }
        Self { sh, weighted, top_angular }
    }

    fn len(&self) -> usize {
        self.sh.len()
    }

    fn degree(&self) -> usize {
        self.sh.lmax()
    }

    /// Index of the first harmonic of the top degree.
    fn top_start(&self) -> usize {
        self.degree() * self.degree()
    }

    /// Weight of the top-degree scalar part: L/(2L+1) with the spin restriction, 1 without.
    fn top_factor(&self, spin: bool) -> f64 {
        if spin {
            let l = self.degree() as f64;
            l / (2.0 * l + 1.0)
        } else {
            1.0
        }
    }

    fn top(&self, node: usize) -> &[[c64; 3]] {
        let width = 2 * self.degree() + 1;
        &self.top_angular[node * width..(node + 1) * width]
    }
}

fn cross(a: &[c64; 3], b: &[c64; 3]) -> [c64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Rows of the rotated-pole rule for the nodes (t, 0). With `spin` the density
/// interpolation is restricted to j ≤ L − ½ at the top degree.
fn rotated_pole_rows(grid: &RevolutionGrid, radial: usize, angular: usize, k: c64, spin: bool) -> Vec<Vec<Channels>> {
    let table = HarmonicTable::new(grid);
    let nlm = table.len();
    let (tq, tw) = gauss_legendre_on(radial, 0.0, PI);
    let dphi = 2.0 * PI / angular as f64;
    let trig: Vec<(f64, f64)> = (0..angular).map(|j| (j as f64 * dphi).sin_cos()).collect();
    (0..grid.n_polar)
        .into_par_iter()
        .map(|t| {
            let u0 = grid.params[grid.node_index(t, 0)];
            let x = grid.map(&u0);
            let (e1, e2) = tangent_frame(&u0);
            let mut coef = vec![Channels::default(); nlm];
            let mut y = vec![0.0; nlm];
            for (th, wth) in tq.iter().zip(&tw) {
                let (st, ct) = th.sin_cos();
                for &(sp, cp) in &trig {
                    let u = u0 * ct + (e1 * cp + e2 * sp) * st;
                    let weight = wth * st * dphi * grid.jacobian(&u);
                    let ch = kernel_channels(k, &(x - grid.map(&u)), weight);
                    table.sh.eval(&u, &mut y);
                    for (c, yl) in coef.iter_mut().zip(&y) {
                        c.scalar += ch.scalar * yl;
                        for d in 0..3 {
                            c.vector[d] += ch.vector[d] * yl;
                        }
                    }
                }
            }
            let top = table.top_start();
            let top_factor = table.top_factor(spin);
            (0..grid.len())
                .map(|j| {
                    let yj = &table.weighted[j * nlm..(j + 1) * nlm];
                    let mut out = Channels::default();
                    for (idx, (c, yl)) in coef.iter().zip(yj).enumerate() {
                        let f = if idx >= top { yl * top_factor } else { *yl };
                        out.scalar += c.scalar * f;
                        for d in 0..3 {
                            out.vector[d] += c.vector[d] * f;
                        }
                    }
                    if spin {
                        for (c, b) in coef[top..].iter().zip(table.top(j)) {
                            for d in 0..3 {
                                out.spin[d] += c.scalar * b[d];
                                out.trace += c.vector[d] * b[d];
                            }
                            let ax = cross(&c.vector, b);
                            for d in 0..3 {
                                out.axial[d] += ax[d];
                            }
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// Rows of all nodes on the meridian φ = 0 of a grid of revolution. `spin` selects the
/// spinor interpolation (Dirac operators) over the scalar one.
pub fn meridian_rows(surface: &SurfaceQuadrature, k: c64, spin: bool) -> Result<Vec<Vec<Channels>>> {
    let grid = surface
        .grid()
        .ok_or_else(|| Error::InvalidParameter("meridian rows need a grid of revolution".into()))?;
    Ok(match surface.rule {
        SingularRule::RotatedPole { radial, angular } => rotated_pole_rows(grid, radial, angular, k, spin),
        SingularRule::EquivalentDisk => (0..grid.n_polar)
            .into_par_iter()
            .map(|t| local_row(surface, grid.node_index(t, 0), k))
            .collect(),
    })
}

/// All N rows, for surfaces without rotational structure (or for dense checks on grids).
pub fn all_rows(surface: &SurfaceQuadrature, k: c64, spin: bool) -> Result<Vec<Vec<Channels>>> {
    match surface.grid() {
        Some(grid) => {
            let meridian = meridian_rows(surface, k, spin)?;
            let n = grid.n_azimuthal;
            Ok((0..grid.len())
                .map(|i| {
                    let (t, p) = (i / n, i % n);
                    let (sin_p, cos_p) = (p as f64 * grid.azimuth_step()).sin_cos();
                    (0..grid.len())
                        .map(|j| {
                            let (s, q) = (j / n, j % n);
                            meridian[t][s * n + (q + n - p) % n].rotated_z(cos_p, sin_p)
                        })
                        .collect()
                })
                .collect())
        }
        None => Ok((0..surface.len()).into_par_iter().map(|i| local_row(surface, i, k)).collect()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    C,
    SingleLayer,
    Bs,
    SchrodingerLayer,
    SchrodingerBs,
}

impl OperatorKind {
    pub fn code(self) -> u8 {
        match self {
            OperatorKind::C => 0,
            OperatorKind::SingleLayer => 1,
            OperatorKind::Bs => 2,
            OperatorKind::SchrodingerLayer => 3,
            OperatorKind::SchrodingerBs => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => OperatorKind::C,
            1 => OperatorKind::SingleLayer,
            2 => OperatorKind::Bs,
            3 => OperatorKind::SchrodingerLayer,
            4 => OperatorKind::SchrodingerBs,
            _ => return Err(Error::Parse(format!("unknown operator kind {code}"))),
        })
    }
}

/// Dense Nyström matrix acting on nodal values (node-major, spinor component minor).
#[derive(Debug, Clone)]
pub struct BoundaryOperator {
    pub matrix: Mat<c64>,
    pub lambda: SpectralPoint,
    pub kind: OperatorKind,
    pub coupling: Option<Coupling>,
    pub nodes: usize,
}

impl BoundaryOperator {
    pub fn components(&self) -> usize {
        self.matrix.nrows() / self.nodes
    }

    /// W^{1/2} M W^{-1/2}, the matrix in the weighted L² inner product.
    pub fn weighted(&self, weights: &[f64]) -> Mat<c64> {
        let comps = self.components();
        let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        Mat::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, j| {
            self.matrix[(i, j)] * (sq[i / comps] / sq[j / comps])
        })
    }

    /// Writes the binary export: "SHSP", u32 dimension, u8 kind, λ as two f64, row-major entries.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"SHSP")?;
        w.write_all(&(self.matrix.nrows() as u32).to_le_bytes())?;
        w.write_all(&[self.kind.code()])?;
        w.write_all(&self.lambda.lambda.re.to_le_bytes())?;
        w.write_all(&self.lambda.lambda.im.to_le_bytes())?;
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                let z = self.matrix[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Contents of a binary operator export.
#[derive(Debug, Clone)]
pub struct ExportedOperator {
    pub kind: OperatorKind,
    pub lambda: c64,
    pub matrix: Mat<c64>,
}

pub fn read_operator_binary<R: Read>(mut r: R) -> Result<ExportedOperator> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"SHSP" {
        return Err(Error::Parse("missing SHSP magic".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let n = u32::from_le_bytes(u32b) as usize;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let mut f = [0u8; 8];
    let mut next = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut f)?;
        Ok(f64::from_le_bytes(f))
    };
    let lambda = c64::new(next(&mut r)?, next(&mut r)?);
    let mut matrix = Mat::<c64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] = c64::new(next(&mut r)?, next(&mut r)?);
        }
    }
    Ok(ExportedOperator { kind: OperatorKind::from_code(kind[0])?, lambda, matrix })
}

fn dirac_dense(rows: &[Vec<Channels>], lambda: c64, params: &PhysParams) -> Mat<c64> {
    let n = rows.len();
    let mut m = Mat::<c64>::zeros(4 * n, 4 * n);
    for (i, row) in rows.iter().enumerate() {
        for (j, ch) in row.iter().enumerate() {
            for a in 0..4 {
                for c in 0..4 {
                    m[(4 * i + a, 4 * j + c)] = dirac_entry(lambda, params, ch, a, c);
                }
            }
        }
    }
    m
}

fn scalar_dense(rows: &[Vec<Channels>], factor: f64) -> Mat<c64> {
    let n = rows.len();
    Mat::from_fn(n, n, |i, j| rows[i][j].scalar * factor)
}

fn spinor_dense(rows: &[Vec<Channels>]) -> Mat<c64> {
    let n = rows.len();
    Mat::from_fn(4 * n, 4 * n, |i, j| spinor_layer_entry(&rows[i / 4][j / 4], i % 4, j % 4))
}

/// Dense C_λ.
pub fn assemble_c(lambda: c64, surface: &SurfaceQuadrature, params: &PhysParams) -> Result<BoundaryOperator> {
    let k = momentum_k(lambda, params)?;
    let rows = all_rows(surface, k, true)?;
    Ok(BoundaryOperator {
        matrix: dirac_dense(&rows, lambda, params),
        lambda: SpectralPoint::new(lambda, params),
        kind: OperatorKind::C,
        coupling: None,
        nodes: surface.len(),
    })
}

/// Dense Helmholtz single layer with kernel e^{ik|x−y|}/(4π|x−y|).
pub fn assemble_single_layer(k: c64, surface: &SurfaceQuadrature) -> Result<BoundaryOperator> {
    if k.im < 0.0 {
        return Err(Error::InvalidParameter(format!("wavenumber needs Im k ≥ 0, got {k}")));
    }
    let rows = all_rows(surface, k, false)?;
    let lambda = SpectralPoint { lambda: k, region: crate::dirac::Region::NonReal };
    Ok(BoundaryOperator {
        matrix: scalar_dense(&rows, 1.0),
        lambda,
        kind: OperatorKind::SingleLayer,
        coupling: None,
        nodes: surface.len(),
    })
}

/// The single layer acting on spinor densities with the same quadrature as [`assemble_c`]
/// (4N×4N). Off grids, or with the equivalent-disk rule, it is S_k ⊗ I₄.
pub fn assemble_spinor_single_layer(k: c64, surface: &SurfaceQuadrature) -> Result<BoundaryOperator> {
    if k.im < 0.0 {
        return Err(Error::InvalidParameter(format!("wavenumber needs Im k ≥ 0, got {k}")));
    }
    let rows = all_rows(surface, k, true)?;
    Ok(BoundaryOperator {
        matrix: spinor_dense(&rows),
        lambda: SpectralPoint { lambda: k, region: crate::dirac::Region::NonReal },
        kind: OperatorKind::SingleLayer,
        coupling: None,
        nodes: surface.len(),
    })
}

/// Dense I + (ηI₄ + τβ)C_λ.
pub fn bs_matrix(
    lambda: c64,
    coupling: &Coupling,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
) -> Result<BoundaryOperator> {
    let mut op = assemble_c(lambda, surface, params)?;
    let d = coupling.diagonal();
    let n = op.matrix.nrows();
    for i in 0..n {
        let f = d[i % 4];
        for j in 0..n {
            op.matrix[(i, j)] *= f;
        }
        op.matrix[(i, i)] += ONE;
    }
    op.kind = OperatorKind::Bs;
    op.coupling = Some(*coupling);
    Ok(op)
}

/// A rotationally covariant operator on a grid of revolution stored as its azimuthal
/// Fourier blocks. Mode μ acts on vectors of length n_polar·components indexed (ring,
/// component); component b carries the azimuthal frequency μ (scalar operators, or
/// spin-up components) or μ + 1 (spin-down components).
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub n_polar: usize,
    pub n_azimuthal: usize,
    pub components: usize,
    pub blocks: Vec<Mat<c64>>,
    /// Some(ring weights) when blocks are in the weighted form W^{1/2} M W^{-1/2}.
    pub ring_weights: Option<Vec<f64>>,
}

impl ModeOperator {
    fn frequency(&self, mode: usize, component: usize) -> usize {
        if self.components == 4 && SPIN_SIGN[component] < 0.0 {
            mode + 1
        } else {
            mode
        }
    }

    pub fn dimension(&self) -> usize {
        self.n_polar * self.n_azimuthal * self.components
    }

    fn twiddle(&self, j: usize) -> c64 {
        let n = self.n_azimuthal;
        c64::from_polar(1.0, 2.0 * PI * (j % n) as f64 / n as f64)
    }

    /// Fourier coefficients of a full vector, one vector per mode.
    pub fn to_modes(&self, v: &[c64]) -> Vec<Vec<c64>> {
        let (n, comps) = (self.n_azimuthal, self.components);
        let norm = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|mu| {
                let mut out = vec![ZERO; self.n_polar * comps];
                for s in 0..self.n_polar {
                    for b in 0..comps {
                        let m = self.frequency(mu, b);
                        let mut acc = ZERO;
                        for q in 0..n {
                            acc += v[(s * n + q) * comps + b] * self.twiddle(m * q).conj();
                        }
                        out[s * comps + b] = acc * norm;
                    }
                }
                out
            })
            .collect()
    }

    pub fn from_modes(&self, modes: &[Vec<c64>]) -> Vec<c64> {
        let mut v = vec![ZERO; self.dimension()];
        for (mu, psi) in modes.iter().enumerate() {
            self.add_mode(mu, psi, &mut v);
        }
        v
    }

    fn add_mode(&self, mu: usize, psi: &[c64], v: &mut [c64]) {
        let (n, comps) = (self.n_azimuthal, self.components);
        let norm = 1.0 / (n as f64).sqrt();
        for s in 0..self.n_polar {
            for b in 0..comps {
                let m = self.frequency(mu, b);
                let val = psi[s * comps + b] * norm;
                for q in 0..n {
                    v[(s * n + q) * comps + b] += val * self.twiddle(m * q);
                }
            }
        }
    }

    /// Full vector of a single mode.
    pub fn mode_vector(&self, mu: usize, psi: &[c64]) -> Vec<c64> {
        let mut v = vec![ZERO; self.dimension()];
        self.add_mode(mu, psi, &mut v);
        v
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let modes: Vec<Vec<c64>> = self
            .to_modes(v)
            .into_iter()
            .zip(&self.blocks)
            .map(|(psi, b)| linalg::mat_vec(b, &psi))
            .collect();
        self.from_modes(&modes)
    }

    pub fn solve(&self, v: &[c64]) -> Result<Vec<c64>> {
        let modes = self
            .to_modes(v)
            .into_par_iter()
            .zip(self.blocks.par_iter())
            .map(|(psi, b)| linalg::solve(b, &psi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.from_modes(&modes))
    }

    /// All singular values, ascending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let parts = self.blocks.par_iter().map(linalg::singular_values).collect::<Result<Vec<_>>>()?;
        let mut all: Vec<f64> = parts.into_iter().flatten().collect();
        all.sort_by(f64::total_cmp);
        Ok(all)
    }

    pub fn smallest_singular_value(&self) -> Result<f64> {
        let parts = self.blocks.par_iter().map(linalg::singular_values).collect::<Result<Vec<_>>>()?;
        Ok(parts.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min))
    }

    /// Singular values ascending with right singular vectors expanded to full length.
    pub fn right_singular_pairs(&self, below: f64) -> Result<Vec<(f64, Vec<c64>)>> {
        let parts =
            self.blocks.par_iter().map(linalg::right_singular_pairs).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for (mu, pairs) in parts.into_iter().enumerate() {
            for (s, psi) in pairs {
                if s <= below {
                    out.push((s, self.mode_vector(mu, &psi)));
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    /// I + diag(d) M with d indexed by component.
    pub fn birman_schwinger(&self, diagonal: &[f64]) -> ModeOperator {
        let comps = self.components;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                Mat::from_fn(b.nrows(), b.ncols(), |i, j| {
                    b[(i, j)] * diagonal[i % comps] + if i == j { ONE } else { ZERO }
                })
            })
            .collect();
        ModeOperator { blocks, ring_weights: self.ring_weights.clone(), ..*self }
    }
}

/// Azimuthal Fourier sums Σ_d channel[(s, d)] e^{i m d Δ} for m = 0..=n.
fn channel_spectrum(row: &[Channels], s: usize, n: usize) -> Vec<Channels> {
    let tw: Vec<c64> = (0..n).map(|j| c64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)).collect();
    (0..=n)
        .map(|m| {
            let mut acc = Channels::default();
            for d in 0..n {
                acc.add_scaled(&row[s * n + d], tw[(m * d) % n]);
            }
            acc
        })
        .collect()
}

fn ring_weights(surface: &SurfaceQuadrature, grid: &RevolutionGrid) -> Vec<f64> {
    (0..grid.n_polar).map(|t| surface.weights[grid.node_index(t, 0)]).collect()
}

fn mode_operator(
    surface: &SurfaceQuadrature,
    rows: &[Vec<Channels>],
    components: usize,
    weighted: bool,
    entry: impl Fn(&Channels, usize, usize) -> c64 + Sync,
) -> Result<ModeOperator> {
    let grid = surface
        .grid()
        .ok_or_else(|| Error::InvalidParameter("mode decomposition needs a grid of revolution".into()))?;
    let (np, n) = (grid.n_polar, grid.n_azimuthal);
    let spectra: Vec<Vec<Vec<Channels>>> = (0..np)
        .into_par_iter()
        .map(|t| (0..np).map(|s| channel_spectrum(&rows[t], s, n)).collect())
        .collect();
    let w = ring_weights(surface, grid);
    let scale = |t: usize, s: usize| if weighted { (w[t] / w[s]).sqrt() } else { 1.0 };
    let blocks = (0..n)
        .into_par_iter()
        .map(|mu| {
            Mat::from_fn(np * components, np * components, |i, j| {
                let (t, a) = (i / components, i % components);
                let (s, b) = (j / components, j % components);
                let m = if components == 4 && SPIN_SIGN[b] < 0.0 { mu + 1 } else { mu };
                entry(&spectra[t][s][m], a, b) * scale(t, s)
            })
        })
        .collect();
    Ok(ModeOperator {
        n_polar: np,
        n_azimuthal: n,
        components,
        blocks,
        ring_weights: if weighted { Some(w) } else { None },
    })
}

/// Mode blocks of C_λ on a grid of revolution.
pub fn c_modes(
    lambda: c64,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    weighted: bool,
) -> Result<ModeOperator> {
    let k = momentum_k(lambda, params)?;
    let rows = meridian_rows(surface, k, true)?;
    mode_operator(surface, &rows, 4, weighted, |ch, a, b| dirac_entry(lambda, params, ch, a, b))
}

/// Mode blocks of `factor`·S_k on a grid of revolution.
pub fn single_layer_modes(k: c64, factor: f64, surface: &SurfaceQuadrature, weighted: bool) -> Result<ModeOperator> {
    let rows = meridian_rows(surface, k, false)?;
    mode_operator(surface, &rows, 1, weighted, |ch, _, _| ch.scalar * factor)
}

/// Values of a nodal density, one spinor per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub values: Vec<Spinor>,
}

impl Density {
    pub fn constant(n: usize, value: Spinor) -> Self {
        Self { values: vec![value; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, zero_spinor())
    }

    pub fn from_flat(v: &[c64]) -> Self {
        Self { values: v.chunks(4).map(|c| Vector4::new(c[0], c[1], c[2], c[3])).collect() }
    }

    pub fn to_flat(&self) -> Vec<c64> {
        self.values.iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// √(Σ w_i |φ_i|²).
    pub fn weighted_norm(&self, weights: &[f64]) -> f64 {
        self.values.iter().zip(weights).map(|(s, w)| w * s.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Applies C_λ to a density through the mode blocks (grids) or a dense matrix (meshes).
pub fn apply_c(lambda: c64, surface: &SurfaceQuadrature, params: &PhysParams, density: &Density) -> Result<Density> {
    if surface.grid().is_some() {
        let op = c_modes(lambda, surface, params, false)?;
        Ok(Density::from_flat(&op.apply(&density.to_flat())))
    } else {
        let op = assemble_c(lambda, surface, params)?;
        Ok(Density::from_flat(&linalg::mat_vec(&op.matrix, &density.to_flat())))
    }
}

/// Spherical-harmonic coefficients of the spinor interpolant of a density on a grid.
fn density_coefficients(table: &HarmonicTable, density: &Density) -> Vec<Spinor> {
    let nlm = table.len();
    let top = table.top_start();
    let top_factor = table.top_factor(true);
    let mut coef = vec![zero_spinor(); nlm];
    for (j, phi) in density.values.iter().enumerate() {
        let y = &table.weighted[j * nlm..(j + 1) * nlm];
        for (idx, (c, yl)) in coef.iter_mut().zip(y).enumerate() {
            let f = if idx >= top { yl * top_factor } else { *yl };
            *c += phi * c64::new(f, 0.0);
        }
        for (c, b) in coef[top..].iter_mut().zip(table.top(j)) {
            *c += spin_apply(b, phi);
        }
    }
    coef
}

/// Graded polar rule around the closest surface point for targets near Σ.
#[allow(clippy::too_many_arguments)]
fn near_potential(
    grid: &RevolutionGrid,
    sh: &RealHarmonics,
    coef: &[Spinor],
    lambda: c64,
    k: c64,
    params: &PhysParams,
    x: &Vec3,
    foot: &Vec3,
    distance: f64,
) -> Result<Spinor> {
    let scale = grid.equatorial.max(grid.polar);
    let first = (0.5 * distance / scale).clamp(1e-10, 0.25);
    let mut edges = vec![0.0, first];
    while *edges.last().unwrap() < PI {
        let next = (edges.last().unwrap() * 2.0).min(PI);
        edges.push(next);
    }
    let (gx, gw) = gauss_legendre(16);
    let angular = 2 * grid.harmonic_degree() + 16;
    let dphi = 2.0 * PI / angular as f64;
    let trig: Vec<(f64, f64)> = (0..angular).map(|j| (j as f64 * dphi).sin_cos()).collect();
    let (e1, e2) = tangent_frame(foot);
    let mut y = vec![0.0; sh.len()];
    let mut acc = zero_spinor();
    for win in edges.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let half = 0.5 * (hi - lo);
        for (xi, wi) in gx.iter().zip(&gw) {
            let th = lo + half * (xi + 1.0);
            let (st, ct) = th.sin_cos();
            for &(sp, cp) in &trig {
                let u = foot * ct + (e1 * cp + e2 * sp) * st;
                let weight = wi * half * st * dphi * grid.jacobian(&u);
                sh.eval(&u, &mut y);
                let mut phi = zero_spinor();
                for (c, yl) in coef.iter().zip(&y) {
                    phi += c * c64::new(*yl, 0.0);
                }
                let g = green_with_k(lambda, k, &(x - grid.map(&u)), params)?;
                acc += g * phi * c64::new(weight, 0.0);
            }
        }
    }
    Ok(acc)
}

/// Φ_λφ(x) = ∫_Σ G_λ(x − y)φ(y) dσ(y) at off-surface points.
pub fn apply_phi(
    lambda: c64,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    density: &Density,
    points: &[Vec3],
) -> Result<Vec<Spinor>> {
    if density.len() != surface.len() {
        return Err(Error::DimensionMismatch(format!(
            "density has {} nodes, surface {}",
            density.len(),
            surface.len()
        )));
    }
    let k = momentum_k(lambda, params)?;
    let tol = 1e-12 * surface.scale();
    let near = match (surface.grid(), surface.rule) {
        (Some(g), SingularRule::RotatedPole { .. }) => {
            let table = HarmonicTable::new(g);
            let coef = density_coefficients(&table, density);
            Some((g, table, coef))
        }
        _ => None,
    };
    points
        .par_iter()
        .map(|x| {
            if let Some((g, table, coef)) = &near {
                let (foot, d) = g.closest_param(x);
                if d <= tol {
                    return Err(Error::PointOnSurface([x.x, x.y, x.z]));
                }
                if d < NEAR_FIELD_FACTOR * surface.h {
                    return near_potential(g, &table.sh, coef, lambda, k, params, x, &foot, d);
                }
            } else if surface.distance(x) <= tol {
                return Err(Error::PointOnSurface([x.x, x.y, x.z]));
            }
            let mut acc = zero_spinor();
            for ((y, w), phi) in surface.nodes.iter().zip(&surface.weights).zip(&density.values) {
                let g = green_with_k(lambda, k, &(x - y), params)?;
                acc += g * phi * c64::new(*w, 0.0);
            }
            Ok(acc)
        })
        .collect()
}

/// Tensor-product quadrature of a box, used to sample volume data.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeQuadrature {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl VolumeQuadrature {
    /// Gauss–Legendre rule with `n[d]` nodes along axis d of the box [lo, hi].
    pub fn tensor_gauss(lo: Vec3, hi: Vec3, n: [usize; 3]) -> Result<Self> {
        if (0..3).any(|d| hi[d] <= lo[d] || n[d] == 0) {
            return Err(Error::InvalidParameter("empty volume box".into()));
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..3).map(|d| gauss_legendre_on(n[d], lo[d], hi[d])).collect();
        let mut nodes = Vec::with_capacity(n[0] * n[1] * n[2]);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (x, wx) in axes[0].0.iter().zip(&axes[0].1) {
            for (y, wy) in axes[1].0.iter().zip(&axes[1].1) {
                for (z, wz) in axes[2].0.iter().zip(&axes[2].1) {
                    nodes.push(Vec3::new(*x, *y, *z));
                    weights.push(wx * wy * wz);
                }
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Φ_λ* f at the surface nodes: Σ_k G_{λ̄}(x_i − y_k) f(y_k) w_k.
pub fn apply_phi_star(
    lambda: c64,
    surface: &SurfaceQuadrature,
    params: &PhysParams,
    volume: &VolumeQuadrature,
    samples: &[Spinor],
) -> Result<Density> {
    if samples.len() != volume.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for {} volume nodes",
            samples.len(),
            volume.len()
        )));
    }
    let tol = 1e-12 * surface.scale();
    for y in &volume.nodes {
        if surface.distance(y) <= tol {
            return Err(Error::VolumeNodeOnSurface([y.x, y.y, y.z]));
        }
    }
    let conj = lambda.conj();
    let k = momentum_k(conj, params)?;
    let values = surface
        .nodes
        .par_iter()
        .map(|x| {
            let mut acc = zero_spinor();
            for ((y, w), f) in volume.nodes.iter().zip(&volume.weights).zip(samples) {
                if *w == 0.0 || f.norm_squared() == 0.0 {
                    continue;
                }
                acc += green_with_k(conj, k, &(x - y), params)? * f * c64::new(*w, 0.0);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Density { values })
}

/// (A₀ − λ)⁻¹f at points away from the volume nodes, by volume quadrature of G_λ.
pub fn free_resolvent(
    lambda: c64,
    params: &PhysParams,
    volume: &VolumeQuadrature,
    samples: &[Spinor],
    points: &[Vec3],
) -> Result<Vec<Spinor>> {
    let k = momentum_k(lambda, params)?;
    points
        .par_iter()
        .map(|x| {
            let mut acc = zero_spinor();
            for ((y, w), f) in volume.nodes.iter().zip(&volume.weights).zip(samples) {
                if f.norm_squared() == 0.0 {
                    continue;
                }
                acc += green_with_k(lambda, k, &(x - y), params)? * f * c64::new(*w, 0.0);
            }
            Ok(acc)
        })
        .collect()
}

/// Dense 4×4 block (i, j) of a Dirac operator matrix.
pub fn block(m: &Mat<c64>, i: usize, j: usize) -> Mat4C {
    Mat4C::from_fn(|a, b| m[(4 * i + a, 4 * j + b)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::dirac_matrices;
    use crate::surface::{sphere_grid, spheroid_grid};

    fn params() -> PhysParams {
        PhysParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn dense_singular_values_match_mode_blocks() {
        let p = params();
        for surface in [sphere_grid(1.0, 4, 8).unwrap(), spheroid_grid(1.0, 1.4, 4, 8).unwrap()] {
            let lambda = c64::new(0.3, 0.2);
            let dense = assemble_c(lambda, &surface, &p).unwrap();
            let modes = c_modes(lambda, &surface, &p, false).unwrap();
            let a = linalg::singular_values(&dense.matrix).unwrap();
            let b = modes.singular_values().unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10 * a.last().unwrap(), "{x} vs {y}");
            }
            let v: Vec<c64> = (0..dense.matrix.nrows()).map(|i| c64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
            let lhs = linalg::mat_vec(&dense.matrix, &v);
            let rhs = modes.apply(&v);
            let err: f64 = lhs.iter().zip(&rhs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12 * linalg::vec_norm(&lhs), "{err}");
        }
    }

    #[test]
    fn mode_transform_round_trip() {
        let surface = sphere_grid(1.0, 4, 8).unwrap();
        let op = c_modes(c64::new(0.0, 0.5), &surface, &params(), true).unwrap();
        let v: Vec<c64> = (0..op.dimension()).map(|i| c64::new(i as f64, -(i as f64).sqrt())).collect();
        let back = op.from_modes(&op.to_modes(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn anticommutator_is_single_layer() {
        let p = params();
        let surface = sphere_grid(1.0, 4, 8).unwrap();
        let lambda = c64::new(0.2, 0.0);
        let c = assemble_c(lambda, &surface, &p).unwrap();
        let k = momentum_k(lambda, &p).unwrap();
        let s = assemble_spinor_single_layer(k, &surface).unwrap();
        let beta = dirac_matrices().beta;
        let target = (beta * (lambda / (p.light_speed * p.light_speed)) + Mat4C::identity() * c64::new(p.mass, 0.0)) * c64::new(2.0, 0.0);
        for i in 0..surface.len() {
            for j in 0..surface.len() {
                let b = block(&c.matrix, i, j);
                let lhs = beta * b + b * beta;
                let rhs = target * block(&s.matrix, i, j);
                assert!((lhs - rhs).norm() <= 1e-13 * (1.0 + rhs.norm()));
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let surface = sphere_grid(1.0, 4, 8).unwrap();
        let op = assemble_c(c64::new(0.1, 0.0), &surface, &params()).unwrap();
        let mut buf = Vec::new();
        op.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SHSP");
        assert_eq!(buf.len(), 4 + 4 + 1 + 16 + 16 * 128 * 128);
        let back = read_operator_binary(&buf[..]).unwrap();
        assert_eq!(back.kind, OperatorKind::C);
        assert_eq!(back.matrix, op.matrix);
    }

    #[test]
    fn free_bs_is_identity() {
        let surface = sphere_grid(1.0, 4, 8).unwrap();
        let op = bs_matrix(c64::new(0.1, 0.0), &Coupling::free(1.0), &surface, &params()).unwrap();
        let id = Mat::<c64>::identity(op.matrix.nrows(), op.matrix.ncols());
        assert!((&op.matrix - &id).norm_l2() == 0.0);
    }
}
