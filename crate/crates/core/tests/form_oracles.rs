mod common;

use common::*;
use hydrosplit::assembly::{
    assemble_convection, assemble_coriolis, assemble_divergence, assemble_load, assemble_mass, assemble_stiffness,
};
use hydrosplit::fe_spaces::{build_pressure_space, build_vertical_space, DiscreteField, ElementKind};
use hydrosplit::mesh::SurfaceDomainSpec;
use hydrosplit::vertical_velocity::{integral_evaluator, solve_substep0};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

const KINDS: [ElementKind; 2] = [ElementKind::P2, ElementKind::P1Bubble];

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn mass_stiffness_coriolis_match_pointwise_quadrature() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.25, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in KINDS {
        let xh = velocity_space(&mesh, kind);
        let (m, k, c) = (assemble_mass(&xh), assemble_stiffness(&xh), assemble_coriolis(&xh, 1.7));
        for _ in 0..3 {
            let v = random_field(&xh, &mut rng);
            let w = random_field(&xh, &mut rng);
            let pairs = [
                (m.bilinear(&w.coeffs, &v.coeffs), mass_form(&v, &w)),
                (k.bilinear(&w.coeffs, &v.coeffs), stiffness_form(&v, &w)),
                (c.bilinear(&w.coeffs, &v.coeffs), coriolis_form(1.7, &v, &w)),
            ];
            for (got, want) in pairs {
                assert!(close(got, want, 1e-12), "{kind:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn constant_fields_on_unit_cube() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square(), 0.5, 2);
    for kind in KINDS {
        let xh = velocity_space(&mesh, kind);
        let ones = hydrosplit::fe_spaces::interpolate(&xh, |_, c| if c == 0 { 1.0 } else { 0.0 }, 0.0);
        let other = hydrosplit::fe_spaces::interpolate(&xh, |_, c| if c == 1 { 1.0 } else { 0.0 }, 0.0);
        assert!((assemble_mass(&xh).bilinear(&ones.coeffs, &ones.coeffs) - 1.0).abs() < 1e-12);
        assert!(assemble_stiffness(&xh).mul_vec(&ones.coeffs).iter().all(|v| v.abs() < 1e-12));
        let c = assemble_coriolis(&xh, 2.0);
        assert!((c.bilinear(&other.coeffs, &ones.coeffs) - 2.0).abs() < 1e-12);
        assert_eq!(assemble_coriolis(&xh, 0.0).nnz(), 0);
    }
}

#[test]
fn convection_matches_skew_form() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.25, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for kind in KINDS {
        let xh = velocity_space(&mesh, kind);
        let ykind = if kind == ElementKind::P2 { ElementKind::P2 } else { ElementKind::P1 };
        let yh = Arc::new(build_vertical_space(&mesh, ykind).unwrap());
        let u = random_field(&xh, &mut rng);
        let u3 = solve_substep0(&u, &yh, 1e-13).unwrap();
        let c = assemble_convection(&xh, &u, &u3).unwrap();
        for _ in 0..2 {
            let v = random_field(&xh, &mut rng);
            let w = random_field(&xh, &mut rng);
            let got = c.bilinear(&w.coeffs, &v.coeffs);
            let want = convection_skew_form(&u, &u3, &v, &w);
            assert!(close(got, want, 1e-11), "{kind:?}: {got} vs {want}");
        }
        let zero = DiscreteField::zeros(&xh, 0.0);
        let z3 = solve_substep0(&zero, &yh, 1e-13).unwrap();
        assert!(assemble_convection(&xh, &zero, &z3).unwrap().values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn convection_is_skew_for_both_vertical_velocities() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.25, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for kind in KINDS {
        let xh = velocity_space(&mesh, kind);
        let ykind = if kind == ElementKind::P2 { ElementKind::P2 } else { ElementKind::P1 };
        let yh = Arc::new(build_vertical_space(&mesh, ykind).unwrap());
        for _ in 0..3 {
            let u = random_field(&xh, &mut rng);
            let v = random_field(&xh, &mut rng);
            let (m, k) = (assemble_mass(&xh), assemble_stiffness(&xh));
            let scale = (m.bilinear(&u.coeffs, &u.coeffs) + k.bilinear(&u.coeffs, &u.coeffs)).sqrt()
                * m.bilinear(&v.coeffs, &v.coeffs);
            for u3 in [solve_substep0(&u, &yh, 1e-12).unwrap(), integral_evaluator(&u).unwrap()] {
                let c = assemble_convection(&xh, &u, &u3).unwrap();
                assert!(c.bilinear(&v.coeffs, &v.coeffs).abs() <= 1e-11 * scale);
            }
        }
    }
}

#[test]
fn load_matches_refined_quadrature() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.25, 4);
    let f = |p: [f64; 3], _t: f64| [(2.0 * p[0] + p[2]).sin(), (p[1] * p[2]).cos() + p[0] * p[0]];
    for kind in KINDS {
        let xh = velocity_space(&mesh, kind);
        let got = assemble_load(&xh, &f, 0.0);
        let want = load_oracle(&xh, &|p| f(p, 0.0), 10);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{kind:?}: {err}");
        let c = assemble_load(&xh, &|_, _| [3.0, -1.0], 0.0);
        let vol = mesh.total_volume();
        for comp in 0..2 {
            let one = hydrosplit::fe_spaces::interpolate(&xh, |_, c| if c == comp { 1.0 } else { 0.0 }, 0.0);
            let want = if comp == 0 { 3.0 * vol } else { -vol };
            assert!((one.coeffs.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() - want).abs() < 1e-12);
        }
    }
}

#[test]
fn divergence_matches_column_integration() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.25, 3);
    let qh = build_pressure_space(&mesh.surface);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for kind in KINDS {
        let xh = velocity_space(&mesh, kind);
        let b = assemble_divergence(&qh, &xh).unwrap();
        for _ in 0..3 {
            let v = random_field(&xh, &mut rng);
            let q: Vec<f64> = (0..qh.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = b.bilinear(&q, &v.coeffs);
            let want = divergence_oracle(&q, &v);
            assert!(close(got, want, 1e-10), "{kind:?}: {got} vs {want}");
        }
        assert!(b.mul_vec(&vec![0.0; xh.n_dofs()]).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unmasked_unit_divergence_row_sum_is_volume() {
    let mesh = column_mesh(&SurfaceDomainSpec::unit_square(), 0.5, 2);
    let qh = build_pressure_space(&mesh.surface);
    let xh = velocity_space(&mesh, ElementKind::P2);
    let v = hydrosplit::fe_spaces::interpolate(&xh, |p, c| if c == 0 { p[0] } else { 0.0 }, 0.0);
    let total: f64 = assemble_divergence(&qh, &xh).unwrap().mul_vec(&v.coeffs).iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}
