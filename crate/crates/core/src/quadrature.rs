//! Gauss–Legendre rules and real spherical harmonics.

use std::f64::consts::PI;

use faer::c64;

use crate::dirac::Vec3;

/// Nodes (ascending) and weights of the n-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Number of real harmonics of degree ≤ lmax.
pub fn harmonic_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Flat index of Y_lm, with −l ≤ m ≤ l.
pub fn harmonic_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Orthonormal real spherical harmonics up to a fixed degree.
///
/// m > 0 uses cos(mφ), m < 0 uses sin(|m|φ).
#[derive(Debug, Clone)]
pub struct RealHarmonics {
    lmax: usize,
    // Normalized associated Legendre recurrence coefficients.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl RealHarmonics {
    pub fn new(lmax: usize) -> Self {
        let n = harmonic_count(lmax);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for l in 2..=lmax {
            for m in 0..l - 1 {
                let (lf, mf) = (l as f64, m as f64);
                let idx = tri(l, m);
                a[idx] = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                b[idx] = -(((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            }
        }
        Self { lmax, a, b }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn len(&self) -> usize {
        harmonic_count(self.lmax)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Fills `out[harmonic_index(l, m)]` with Y_lm at the unit vector `u`.
    pub fn eval(&self, u: &Vec3, out: &mut [f64]) {
        let lmax = self.lmax;
        let z = u.z.clamp(-1.0, 1.0);
        let rho = (u.x * u.x + u.y * u.y).sqrt();
        let s = rho;
        let (cphi, sphi) = if rho > 0.0 { (u.x / rho, u.y / rho) } else { (1.0, 0.0) };
        // p[tri(l,m)] = sqrt((2l+1)/(4π) (l−m)!/(l+m)!) P_l^m(z), without Condon–Shortley phase.
        let mut p = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
        let mut pmm = (1.0 / (4.0 * PI)).sqrt();
        for m in 0..=lmax {
            if m > 0 {
                pmm *= s * ((2.0 * m as f64 + 1.0) / (2.0 * m as f64)).sqrt();
            }
            p[tri(m, m)] = pmm;
            if m < lmax {
                p[tri(m + 1, m)] = z * (2.0 * m as f64 + 3.0).sqrt() * pmm;
            }
            for l in m + 2..=lmax {
                let idx = tri(l, m);
                p[idx] = self.a[idx] * (z * p[tri(l - 1, m)] + self.b[idx] * p[tri(l - 2, m)]);
            }
        }
        let mut cm = 1.0;
        let mut sm = 0.0;
        for m in 0..=lmax {
            for l in m..=lmax {
                let v = p[tri(l, m)];
                if m == 0 {
                    out[harmonic_index(l, 0)] = v;
                } else {
                    let f = std::f64::consts::SQRT_2 * v;
                    out[harmonic_index(l, m as i64)] = f * cm;
                    out[harmonic_index(l, -(m as i64))] = f * sm;
                }
            }
            let next_c = cm * cphi - sm * sphi;
            sm = sm * cphi + cm * sphi;
            cm = next_c;
        }
    }

    /// (L_x, L_y, L_z)Y_{l,m} at the point whose harmonics are `values`, for m = −l..=l,
    /// with L = −i u × ∇.
    ///
    /// Uses the ladder action on e^{imφ}-type harmonics c_l^m (no Condon–Shortley phase):
    /// L_z c^m = m c^m, L_± c^m = ±√((l ∓ m)(l ± m + 1)) c^{m±1} for m ≥ 0 and m < 0 alike
    /// once the sign flips at m = 0 are accounted for.
    pub fn angular_momentum(&self, l: usize, values: &[f64]) -> Vec<[c64; 3]> {
        let li = l as i64;
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let y = |m: i64| values[harmonic_index(l, m)];
        // c^m from the real values.
        let cval = |m: i64| -> c64 {
            if m == 0 {
                c64::new(y(0), 0.0)
            } else {
                let a = m.abs();
                let s = if m > 0 { 1.0 } else { -1.0 };
                c64::new(y(a) * r2, s * y(-a) * r2)
            }
        };
        // Condon–Shortley sign relating c^m to the standard Y^m.
        let eps = |m: i64| if m > 0 && m % 2 == 1 { -1.0 } else { 1.0 };
        let lf = l as f64;
        let raise = |m: i64| -> c64 {
            if m >= li {
                return c64::new(0.0, 0.0);
            }
            let mf = m as f64;
            cval(m + 1) * (((lf - mf) * (lf + mf + 1.0)).sqrt() * eps(m + 1) * eps(m))
        };
        let lower = |m: i64| -> c64 {
            if m <= -li {
                return c64::new(0.0, 0.0);
            }
            let mf = m as f64;
            cval(m - 1) * (((lf + mf) * (lf - mf + 1.0)).sqrt() * eps(m - 1) * eps(m))
        };
        let apply = |m: i64| -> [c64; 3] {
            let (up, dn) = (raise(m), lower(m));
            [(up + dn) * 0.5, (up - dn) * c64::new(0.0, -0.5), cval(m) * m as f64]
        };
        let add = |a: [c64; 3], b: [c64; 3], fa: c64, fb: c64| -> [c64; 3] {
            [a[0] * fa + b[0] * fb, a[1] * fa + b[1] * fb, a[2] * fa + b[2] * fb]
        };
        (-li..=li)
            .map(|m| {
                if m == 0 {
                    apply(0)
                } else {
                    let a = m.abs();
                    // Y_{l,a} = (c^a + c^{−a})/√2, Y_{l,−a} = (c^a − c^{−a})/(i√2).
                    if m > 0 {
                        add(apply(a), apply(-a), c64::new(r2, 0.0), c64::new(r2, 0.0))
                    } else {
                        add(apply(a), apply(-a), c64::new(0.0, -r2), c64::new(0.0, r2))
                    }
                }
            })
            .collect()
    }

    pub fn eval_vec(&self, u: &Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval(u, &mut out);
        out
    }
}

fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}
