//! Discrete interaction surfaces: product grids on spheres and spheroids, and closed
//! triangle meshes read from OFF files.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dirac::Vec3;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    SphereGrid,
    SpheroidGrid,
    TriangleMesh,
}

/// How the singular part of boundary integrals is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SingularRule {
    /// Rotated-pole polar quadrature with spherical-harmonic interpolation of the density.
    /// Only available on grids of revolution.
    RotatedPole { radial: usize, angular: usize },
    /// Point rule off the diagonal, equivalent-disk correction on the diagonal.
    EquivalentDisk,
}

/// Spheroid x = (a u₁, a u₂, b u₃) over the unit sphere u, sampled by a Gauss–Legendre
/// rule in cos θ times a uniform rule in φ. Node (t, p) has index t·n_azimuthal + p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevolutionGrid {
    pub equatorial: f64,
    pub polar: f64,
    pub n_polar: usize,
    pub n_azimuthal: usize,
    pub cos_theta: Vec<f64>,
    pub polar_weights: Vec<f64>,
    /// Unit-sphere parameter of each node.
    pub params: Vec<Vec3>,
    /// Quadrature weight of each node on the unit sphere (so Σ = 4π).
    pub param_weights: Vec<f64>,
}

impl RevolutionGrid {
    pub fn node_index(&self, ring: usize, azimuth: usize) -> usize {
        ring * self.n_azimuthal + azimuth
    }

    pub fn len(&self) -> usize {
        self.n_polar * self.n_azimuthal
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.n_azimuthal as f64
    }

    /// Highest spherical-harmonic degree resolved by the grid.
    pub fn harmonic_degree(&self) -> usize {
        (self.n_polar - 1).min((self.n_azimuthal - 1) / 2)
    }

    pub fn map(&self, u: &Vec3) -> Vec3 {
        Vec3::new(self.equatorial * u.x, self.equatorial * u.y, self.polar * u.z)
    }

    /// Area element relative to the unit-sphere element.
    pub fn jacobian(&self, u: &Vec3) -> f64 {
        let (a, b) = (self.equatorial, self.polar);
        let s2 = (u.x * u.x + u.y * u.y).min(1.0);
        a * (b * b * s2 + a * a * u.z * u.z).sqrt()
    }

    pub fn normal(&self, u: &Vec3) -> Vec3 {
        Vec3::new(u.x / self.equatorial, u.y / self.equatorial, u.z / self.polar).normalize()
    }

    pub fn is_sphere(&self) -> bool {
        self.equatorial == self.polar
    }

    /// Closest surface point to `x`: returns the unit parameter and the distance.
    pub fn closest_param(&self, x: &Vec3) -> (Vec3, f64) {
        let (a, b) = (self.equatorial, self.polar);
        let rho = (x.x * x.x + x.y * x.y).sqrt();
        let (cphi, sphi) = if rho > 0.0 { (x.x / rho, x.y / rho) } else { (1.0, 0.0) };
        let u_of = |theta: f64| Vec3::new(theta.sin() * cphi, theta.sin() * sphi, theta.cos());
        if self.is_sphere() {
            let n = x.norm();
            let u = if n > 0.0 { x / n } else { Vec3::new(0.0, 0.0, 1.0) };
            return (u, (n - a).abs());
        }
        // Stationary points of |(a sinθ, b cosθ) − (ρ, z)|² in the meridian plane.
        let grad = |t: f64| (a * t.sin() - rho) * a * t.cos() - (b * t.cos() - x.z) * b * t.sin();
        let hess = |t: f64| {
            (a * a - b * b) * (2.0 * t).cos() + rho * a * t.sin() + x.z * b * t.cos()
        };
        let mut best = (0.0, f64::INFINITY);
        let start = (rho / a).atan2(x.z / b);
        for t0 in [start, 0.0, PI, 0.5 * PI] {
            let mut t = t0;
            for _ in 0..60 {
                let h = hess(t);
                if h.abs() < 1e-300 {
                    break;
                }
                let step = grad(t) / h;
                let step = step.clamp(-0.3, 0.3);
                t = (t - step).clamp(0.0, PI);
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let d = (self.map(&u_of(t)) - x).norm();
            if d < best.1 {
                best = (t, d);
            }
        }
        (u_of(best.0), best.1)
    }

    /// Negative inside Ω₊, positive outside (implicit-function sign).
    pub fn side(&self, x: &Vec3) -> f64 {
        let (a, b) = (self.equatorial, self.polar);
        (x.x * x.x + x.y * x.y) / (a * a) + x.z * x.z / (b * b) - 1.0
    }
}

/// Nodes, weights and outward normals of a closed surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceQuadrature {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub normals: Vec<Vec3>,
    pub h: f64,
    pub kind: SurfaceKind,
    pub rule: SingularRule,
    grid: Option<RevolutionGrid>,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn grid(&self) -> Option<&RevolutionGrid> {
        self.grid.as_ref()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// Replace the singular rule. Rotated-pole rules need a grid of revolution.
    pub fn with_rule(mut self, rule: SingularRule) -> Result<Self> {
        if let SingularRule::RotatedPole { radial, angular } = rule {
            if self.grid.is_none() {
                return Err(Error::InvalidParameter(
                    "rotated-pole rule requires a sphere or spheroid grid".into(),
                ));
            }
            if radial < 2 || angular < 4 || angular % 2 == 1 {
                return Err(Error::BadResolution(format!(
                    "rotated-pole rule needs radial ≥ 2 and even angular ≥ 4, got {radial}×{angular}"
                )));
            }
        }
        self.rule = rule;
        Ok(self)
    }

    /// Approximate distance from `x` to the surface: exact on grids, nearest node on meshes.
    pub fn distance(&self, x: &Vec3) -> f64 {
        match &self.grid {
            Some(g) => g.closest_param(x).1,
            None => self.nodes.iter().map(|y| (y - x).norm()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Linear size used to scale "on the surface" tolerances.
    pub fn scale(&self) -> f64 {
        self.area().sqrt()
    }
}

/// Default rotated-pole sizes for a grid.
pub fn default_rotated_pole(grid: &RevolutionGrid) -> SingularRule {
    let l = grid.harmonic_degree();
    let aspect = grid.equatorial.max(grid.polar) / grid.equatorial.min(grid.polar);
    let extra = (4.0 * (aspect - 1.0)).ceil() as usize;
    SingularRule::RotatedPole { radial: 2 * l + 12 + 2 * extra, angular: 2 * l + 8 + 2 * extra }
}

pub fn sphere_grid(radius: f64, n_polar: usize, n_azimuthal: usize) -> Result<SurfaceQuadrature> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    revolution_grid(radius, radius, n_polar, n_azimuthal, SurfaceKind::SphereGrid)
}

/// Spheroid with equatorial semi-axis `a` and polar semi-axis `b`.
pub fn spheroid_grid(a: f64, b: f64, n_polar: usize, n_azimuthal: usize) -> Result<SurfaceQuadrature> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("semi-axes must be positive, got {a}, {b}")));
    }
    revolution_grid(a, b, n_polar, n_azimuthal, SurfaceKind::SpheroidGrid)
}

fn revolution_grid(
    a: f64,
    b: f64,
    n_polar: usize,
    n_azimuthal: usize,
    kind: SurfaceKind,
) -> Result<SurfaceQuadrature> {
    if n_polar < 4 || n_azimuthal < 8 {
        return Err(Error::BadResolution(format!(
            "need n_polar ≥ 4 and n_azimuthal ≥ 8, got {n_polar}×{n_azimuthal}"
        )));
    }
    let (cos_theta, polar_weights) = gauss_legendre(n_polar);
    let dphi = 2.0 * PI / n_azimuthal as f64;
    let mut params = Vec::with_capacity(n_polar * n_azimuthal);
    let mut param_weights = Vec::with_capacity(n_polar * n_azimuthal);
    for (ct, wt) in cos_theta.iter().zip(&polar_weights) {
        let st = (1.0 - ct * ct).sqrt();
        for p in 0..n_azimuthal {
            let phi = p as f64 * dphi;
            params.push(Vec3::new(st * phi.cos(), st * phi.sin(), *ct));
            param_weights.push(wt * dphi);
        }
    }
    let grid = RevolutionGrid {
        equatorial: a,
        polar: b,
        n_polar,
        n_azimuthal,
        cos_theta,
        polar_weights,
        params,
        param_weights,
    };
    let nodes = grid.params.iter().map(|u| grid.map(u)).collect();
    let normals = grid.params.iter().map(|u| grid.normal(u)).collect();
    let weights: Vec<f64> =
        grid.params.iter().zip(&grid.param_weights).map(|(u, w)| w * grid.jacobian(u)).collect();
    let h = weights.iter().cloned().fold(0.0, f64::max).sqrt();
    let rule = default_rotated_pole(&grid);
    Ok(SurfaceQuadrature { nodes, weights, normals, h, kind, rule, grid: Some(grid) })
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn parse_off(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace());
        let header = tokens.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
        if header != "OFF" {
            return Err(Error::Parse(format!("expected OFF header, found {header:?}")));
        }
        let mut next_usize = |what: &str| -> Result<usize> {
            let t = tokens.next().ok_or_else(|| Error::Parse(format!("missing {what}")))?;
            t.parse().map_err(|_| Error::Parse(format!("bad {what}: {t:?}")))
        };
        let nv = next_usize("vertex count")?;
        let nf = next_usize("face count")?;
        let _edges = next_usize("edge count")?;
        let mut rest = Vec::new();
        for t in tokens {
            rest.push(t);
        }
        let mut it = rest.into_iter();
        let mut num = |what: &str| -> Result<f64> {
            let t = it.next().ok_or_else(|| Error::Parse(format!("truncated {what}")))?;
            t.parse().map_err(|_| Error::Parse(format!("bad {what}: {t:?}")))
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push(Vec3::new(num("vertex")?, num("vertex")?, num("vertex")?));
        }
        let mut faces = Vec::with_capacity(nf);
        for f in 0..nf {
            let arity = num("face")?;
            if arity != 3.0 {
                return Err(Error::Parse(format!("face {f} is not a triangle")));
            }
            let mut tri = [0usize; 3];
            for slot in &mut tri {
                let v = num("face index")?;
                if v < 0.0 || v.fract() != 0.0 || v as usize >= nv {
                    return Err(Error::Parse(format!("face {f} has invalid index {v}")));
                }
                *slot = v as usize;
            }
            faces.push(tri);
        }
        Ok(Self { vertices, faces })
    }

    pub fn to_off(&self) -> String {
        let mut s = format!("OFF\n{} {} 0\n", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
        }
        s
    }

    /// Checks closedness and orientation, then builds a centroid rule.
    pub fn quadrature(&self) -> Result<SurfaceQuadrature> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                *directed.entry((f[e], f[(e + 1) % 3])).or_default() += 1;
            }
        }
        let mut open = 0;
        let mut inconsistent = false;
        for (&(i, j), &count) in &directed {
            if count > 1 {
                inconsistent = true;
            }
            if !directed.contains_key(&(j, i)) {
                open += 1;
            }
        }
        if open > 0 {
            // A reversed neighbour also shows up here; tell the two apart by undirected counts.
            let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
            for f in &self.faces {
                for e in 0..3 {
                    let (i, j) = (f[e], f[(e + 1) % 3]);
                    *undirected.entry((i.min(j), i.max(j))).or_default() += 1;
                }
            }
            let boundary = undirected.values().filter(|&&c| c == 1).count();
            if boundary > 0 {
                return Err(Error::OpenSurface(boundary));
            }
            return Err(Error::InconsistentOrientation);
        }
        if inconsistent {
            return Err(Error::InconsistentOrientation);
        }
        let mut nodes = Vec::with_capacity(self.faces.len());
        let mut weights = Vec::with_capacity(self.faces.len());
        let mut normals = Vec::with_capacity(self.faces.len());
        let mut volume = 0.0;
        let mut max_edge: f64 = 0.0;
        for f in &self.faces {
            let [p, q, r] = f.map(|i| self.vertices[i]);
            let cross = (q - p).cross(&(r - p));
            let area = 0.5 * cross.norm();
            if area <= 0.0 {
                return Err(Error::Parse("degenerate triangle".into()));
            }
            volume += p.dot(&q.cross(&r)) / 6.0;
            max_edge = max_edge.max((q - p).norm()).max((r - q).norm()).max((p - r).norm());
            nodes.push((p + q + r) / 3.0);
            weights.push(area);
            normals.push(cross / (2.0 * area));
        }
        if volume < 0.0 {
            log::warn!("mesh faces are oriented inwards; flipping normals");
            for n in &mut normals {
                *n = -*n;
            }
        }
        Ok(SurfaceQuadrature {
            nodes,
            weights,
            normals,
            h: max_edge,
            kind: SurfaceKind::TriangleMesh,
            rule: SingularRule::EquivalentDisk,
            grid: None,
        })
    }
}

pub fn load_triangle_mesh(path: &Path) -> Result<SurfaceQuadrature> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read mesh {}: {e}", path.display())))?;
    TriangleMesh::parse_off(&text)?.quadrature()
}

/// Geodesic icosphere with 20·4ⁿ faces, vertices projected onto the sphere.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |i: usize, j: usize, verts: &mut Vec<Vec3>| -> usize {
            *midpoint.entry((i.min(j), i.max(j))).or_insert_with(|| {
                verts.push(((verts[i] + verts[j]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh { vertices, faces }
}

/// Axis-aligned cube of the given side centred at the origin, outward-oriented.
pub fn cube(side: f64) -> TriangleMesh {
    let h = side / 2.0;
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 1 { h } else { -h },
                if i & 2 == 2 { h } else { -h },
                if i & 4 == 4 { h } else { -h },
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh { vertices, faces }
}

/// Off-surface sample points on both sides of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    /// x − εν, inside Ω₊.
    pub inner: Vec3,
    /// x + εν, in Ω₋.
    pub outer: Vec3,
    pub node: usize,
    pub offset: f64,
}

/// One pair per node and offset, ordered node-major within each offset.
pub fn probe_pairs(surface: &SurfaceQuadrature, offsets: &[f64]) -> Vec<ProbePair> {
    probe_pairs_at(surface, offsets, &(0..surface.len()).collect::<Vec<_>>())
}

/// Probe pairs restricted to a subset of nodes.
pub fn probe_pairs_at(surface: &SurfaceQuadrature, offsets: &[f64], nodes: &[usize]) -> Vec<ProbePair> {
    let mut out = Vec::with_capacity(offsets.len() * nodes.len());
    for &eps in offsets {
        for &i in nodes {
            let x = surface.nodes[i];
            let n = surface.normals[i];
            out.push(ProbePair { inner: x - n * eps, outer: x + n * eps, node: i, offset: eps });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_area_and_normals() {
        let s = sphere_grid(1.0, 16, 32).unwrap();
        assert!((s.area() - 4.0 * PI).abs() < 1e-10);
        let s2 = sphere_grid(2.0, 16, 32).unwrap();
        assert!((s2.area() - 16.0 * PI).abs() < 1e-10);
        let mut flux = Vec3::zeros();
        for (n, w) in s.normals.iter().zip(&s.weights) {
            flux += n * *w;
        }
        assert!(flux.norm() < 1e-10);
        for (x, n) in s.nodes.iter().zip(&s.normals) {
            assert!(x.dot(n) > 0.0);
        }
    }

    #[test]
    fn spheroid_degenerates_to_sphere() {
        let a = sphere_grid(1.3, 6, 12).unwrap();
        let b = spheroid_grid(1.3, 1.3, 6, 12).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn bad_resolution() {
        assert!(matches!(sphere_grid(1.0, 3, 12), Err(Error::BadResolution(_))));
        assert!(matches!(sphere_grid(1.0, 6, 6), Err(Error::BadResolution(_))));
    }

    #[test]
    fn cube_area_is_exact() {
        let q = cube(1.5).quadrature().unwrap();
        assert!((q.area() - 6.0 * 2.25).abs() < 1e-14);
        for (x, n) in q.nodes.iter().zip(&q.normals) {
            assert!(x.dot(n) > 0.0);
        }
    }

    #[test]
    fn open_and_flipped_meshes_are_rejected() {
        let mut m = cube(1.0);
        m.faces.pop();
        assert!(matches!(m.quadrature(), Err(Error::OpenSurface(3))));
        let mut m = cube(1.0);
        m.faces[0].swap(1, 2);
        assert!(matches!(m.quadrature(), Err(Error::InconsistentOrientation)));
    }

    #[test]
    fn off_round_trip() {
        let m = icosphere(1.0, 1);
        let back = TriangleMesh::parse_off(&m.to_off()).unwrap();
        assert_eq!(back.faces, m.faces);
        assert!(matches!(TriangleMesh::parse_off("PLY\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn probe_points() {
        let s = sphere_grid(1.0, 4, 8).unwrap();
        let p = probe_pairs(&s, &[0.01, 0.02]);
        assert_eq!(p.len(), 2 * s.len());
        assert!((p[0].inner.norm() - 0.99).abs() < 1e-14);
        assert!((p[0].outer.norm() - 1.01).abs() < 1e-14);
    }

    #[test]
    fn closest_point_on_spheroid() {
        let s = spheroid_grid(1.0, 1.7, 6, 12).unwrap();
        let g = s.grid().unwrap();
        for (i, (x, n)) in s.nodes.iter().zip(&s.normals).enumerate() {
            let p = x + n * 0.05;
            let (u, d) = g.closest_param(&p);
            assert!((d - 0.05).abs() < 1e-12, "node {i}: {d}");
            assert!((u - g.params[i]).norm() < 1e-9);
        }
    }
}
