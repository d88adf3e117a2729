use num_complex::Complex64;
use proptest::prelude::*;
use shellspec_core::dirac::{
    alpha_dot, confinement_projectors, dirac_matrices, green_function, momentum_k, symmetry_map,
    transmission_factor_inverse, transmission_matrix, Coupling, CouplingClass, Mat4C, PhysParams, Spinor, Vec3,
};
use shellspec_core::quadrature::{gauss_legendre, RealHarmonics};
use shellspec_core::surface::{sphere_grid, spheroid_grid};

fn unit() -> impl Strategy<Value = Vec3> {
    (0.0..std::f64::consts::PI, 0.0..2.0 * std::f64::consts::PI)
        .prop_map(|(t, p)| Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()))
}

fn point() -> impl Strategy<Value = Vec3> {
    (unit(), 0.05..4.0f64).prop_map(|(u, r)| u * r)
}

fn params() -> impl Strategy<Value = PhysParams> {
    (0.2..3.0f64, 0.3..10.0f64).prop_map(|(m, c)| PhysParams::new(m, c).unwrap())
}

fn nonreal(params: PhysParams) -> impl Strategy<Value = (PhysParams, Complex64)> {
    let e = params.rest_energy();
    (-3.0 * e..3.0 * e, prop_oneof![-3.0 * e..-1e-3 * e, 1e-3 * e..3.0 * e])
        .prop_map(move |(re, im)| (params, Complex64::new(re, im)))
}

fn spinor() -> impl Strategy<Value = Spinor> {
    proptest::array::uniform8(-1.0..1.0f64)
        .prop_map(|v| Spinor::new(
            Complex64::new(v[0], v[1]),
            Complex64::new(v[2], v[3]),
            Complex64::new(v[4], v[5]),
            Complex64::new(v[6], v[7]),
        ))
}

fn norm(m: &Mat4C) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn alpha_directions_anticommute(u in unit(), v in unit()) {
        let (a, b) = (alpha_dot(&u), alpha_dot(&v));
        let beta = dirac_matrices().beta;
        let expected = Mat4C::identity() * Complex64::new(2.0 * u.dot(&v), 0.0);
        prop_assert!(norm(&(a * b + b * a - expected)) < 1e-13);
        prop_assert!(norm(&(a * beta + beta * a)) < 1e-13);
    }

    #[test]
    fn green_adjoint_swaps_argument_and_conjugates((p, lambda) in params().prop_flat_map(nonreal), x in point()) {
        let g = green_function(lambda, &x, &p).unwrap();
        let h = green_function(lambda.conj(), &(-x), &p).unwrap();
        prop_assert!(norm(&(g.adjoint() - h)) <= 1e-12 * norm(&g).max(1.0));
    }

    #[test]
    fn wavenumber_branch((p, lambda) in params().prop_flat_map(nonreal)) {
        let k = momentum_k(lambda, &p).unwrap();
        let c = p.light_speed;
        prop_assert!(k.im > 0.0);
        let k2 = lambda * lambda / (c * c) - p.mass * p.mass * c * c;
        prop_assert!((k * k - k2).norm() <= 1e-12 * k2.norm().max(1.0));
        let kc = momentum_k(lambda.conj(), &p).unwrap();
        prop_assert!((kc + k.conj()).norm() <= 1e-12 * k.norm());
    }

    #[test]
    fn gap_wavenumber_is_imaginary(p in params(), t in -0.999..0.999f64) {
        let k = momentum_k(Complex64::new(t * p.rest_energy(), 0.0), &p).unwrap();
        prop_assert_eq!(k.re, 0.0);
        prop_assert!(k.im > 0.0);
    }

    #[test]
    fn transmission_matrix_realizes_the_jump(
        eta in -6.0..6.0f64, tau in -6.0..6.0f64, c in 0.5..3.0f64, nu in unit(), minus in spinor(),
    ) {
        let coupling = Coupling::new(eta, tau, c);
        prop_assume!(coupling.class == CouplingClass::Noncritical);
        prop_assume!((eta * eta - tau * tau + 4.0 * c * c).abs() > 1e-2 && (eta * eta - tau * tau - 4.0 * c * c).abs() > 1e-2);
        let r = transmission_matrix(&coupling, &nu, c).unwrap();
        prop_assert!(r.try_inverse().is_some());
        let plus = r * minus;
        let lhs = alpha_dot(&nu) * (plus - minus) * Complex64::new(0.0, -c);
        let rhs = coupling.matrix() * (plus + minus) * Complex64::new(0.5, 0.0);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + r.norm()) * minus.norm());
        let factor = alpha_dot(&nu) * Complex64::new(0.0, c) + coupling.matrix() * Complex64::new(0.5, 0.0);
        let inv = transmission_factor_inverse(&coupling, &nu, c).unwrap();
        prop_assert!(norm(&(factor * inv - Mat4C::identity())) < 1e-10 * (1.0 + norm(&inv)));
    }

    #[test]
    fn confinement_projectors_are_complementary(
        tau in 2.05..8.0f64, sign in prop::bool::ANY, c in 0.5..2.0f64, nu in unit(),
    ) {
        let tau = tau * c;
        let eta = (tau * tau - 4.0 * c * c).sqrt() * if sign { 1.0 } else { -1.0 };
        let coupling = Coupling::new(eta, tau, c);
        prop_assert_eq!(coupling.class, CouplingClass::Confinement);
        let (p, q) = confinement_projectors(&coupling, &nu, c).unwrap();
        let scale = 1.0 + norm(&p);
        prop_assert!(norm(&(p * p - p)) < 1e-10 * scale * scale);
        prop_assert!(norm(&(q * q - q)) < 1e-10 * scale * scale);
        prop_assert!(norm(&(p + q - Mat4C::identity())) < 1e-12 * scale);
    }

    #[test]
    fn coupling_inversion_is_an_involution(eta in -10.0..10.0f64, tau in -10.0..10.0f64, c in 0.3..5.0f64) {
        prop_assume!((eta * eta - tau * tau).abs() > 1e-3);
        let coupling = Coupling::new(eta, tau, c);
        let twice = symmetry_map(&symmetry_map(&coupling, c).unwrap(), c).unwrap();
        prop_assert!((twice.eta - eta).abs() <= 1e-9 * (1.0 + eta.abs()));
        prop_assert!((twice.tau - tau).abs() <= 1e-9 * (1.0 + tau.abs()));
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree(n in 1usize..40, coeffs in prop::collection::vec(-1.0..1.0f64, 80)) {
        let (x, w) = gauss_legendre(n);
        let degree = 2 * n - 1;
        let poly = |t: f64| coeffs[..=degree].iter().rev().fold(0.0, |acc, a| acc * t + a);
        let exact: f64 = coeffs[..=degree]
            .iter()
            .enumerate()
            .map(|(k, a)| if k % 2 == 0 { 2.0 * a / (k as f64 + 1.0) } else { 0.0 })
            .sum();
        let approx: f64 = x.iter().zip(&w).map(|(t, wt)| wt * poly(*t)).sum();
        prop_assert!((approx - exact).abs() < 1e-12 * (1.0 + coeffs.iter().map(|a| a.abs()).sum::<f64>()));
    }

    #[test]
    fn sphere_grid_integrates_harmonics(n_polar in 4usize..14, radius in 0.3..3.0f64, coeffs in prop::collection::vec(-1.0..1.0f64, 36)) {
        let grid = sphere_grid(radius, n_polar, 2 * n_polar).unwrap();
        let lmax = (n_polar - 1).min(5);
        let harmonics = RealHarmonics::new(lmax);
        // ∫ Y_lm = 0 for l ≥ 1 and ∫ 1 = 4πR².
        let value = grid.integrate(|x| {
            let y = harmonics.eval_vec(&(x / x.norm()));
            y.iter().skip(1).zip(&coeffs).map(|(a, b)| a * b).sum::<f64>() + 1.0
        });
        let area = 4.0 * std::f64::consts::PI * radius * radius;
        prop_assert!((value - area).abs() < 1e-11 * area);
    }

    #[test]
    fn spheroid_normals_and_area(a in 0.5..2.0f64, b in 0.5..2.0f64) {
        let grid = spheroid_grid(a, b, 48, 96).unwrap();
        for (x, n) in grid.nodes.iter().zip(&grid.normals) {
            prop_assert!((n.norm() - 1.0).abs() < 1e-12);
            let gradient = Vec3::new(x.x / (a * a), x.y / (a * a), x.z / (b * b));
            prop_assert!((gradient.normalize() - n).norm() < 1e-10);
        }
        let e = if a > b { (1.0 - b * b / (a * a)).sqrt() } else { (1.0 - a * a / (b * b)).sqrt() };
        let exact = if (a - b).abs() < 1e-9 {
            4.0 * std::f64::consts::PI * a * a
        } else if a > b {
            2.0 * std::f64::consts::PI * a * a * (1.0 + (1.0 - e * e) / e * e.atanh())
        } else {
            2.0 * std::f64::consts::PI * a * a * (1.0 + b / (a * e) * e.asin())
        };
        prop_assert!((grid.area() - exact).abs() < 1e-11 * exact);
    }
}
