mod common;

use std::sync::Arc;

use common::*;
use hydrosplit::assembly::{assemble_convection, assemble_mass, assemble_stiffness, surface_mass};
use hydrosplit::fe_spaces::{build_pressure_space, ElementKind};
use hydrosplit::mesh::{build_surface_mesh, extrude_iso_sigma, Bathymetry, FaceTag, SurfaceDomainSpec};
use hydrosplit::stepper::{Discretization, ProblemData, SchemeConfig, Stepper, Variant};
use hydrosplit::verification::{Aggregates, NodeErrors, RateRow, RateTable};
use hydrosplit::vertical_velocity::solve_substep0;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rectangle(w: f64, h: f64, d0: f64, g: [f64; 2]) -> SurfaceDomainSpec {
    let corners = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    let depths: Vec<f64> = corners.iter().map(|p| d0 + g[0] * p[0] + g[1] * p[1]).collect();
    SurfaceDomainSpec {
        polygon: corners.to_vec(),
        bathymetry: Bathymetry::Affine { d0, gradient: g },
        d_min: depths.iter().copied().fold(f64::INFINITY, f64::min),
        d_max: depths.iter().copied().fold(0.0, f64::max),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn column_mesh_invariants(
        w in 0.5f64..2.0, h in 0.5f64..2.0, d0 in 0.5f64..2.0,
        gx in -0.2f64..0.2, gy in -0.2f64..0.2, target in 0.3f64..0.8, layers in 1usize..4,
    ) {
        let spec = rectangle(w, h, d0, [gx, gy]);
        let sm = build_surface_mesh(&spec, target).unwrap();
        for t in 0..sm.triangles.len() {
            prop_assert!(sm.area(t) > 0.0);
        }
        prop_assert!((sm.total_area() - w * h).abs() < 1e-12 * w * h);
        let m = extrude_iso_sigma(&sm, &spec, layers).unwrap();
        let depth = |p: [f64; 2]| d0 + gx * p[0] + gy * p[1];
        for (n, p) in m.nodes.iter().enumerate() {
            let d = depth([p[0], p[1]]);
            prop_assert!(p[2] <= 1e-14 && p[2] >= -d - 1e-12);
            prop_assert!((p[2] + m.sigma_levels[m.node_level(n)] * d).abs() < 1e-12);
        }
        for (t, tet) in m.tets.iter().enumerate() {
            prop_assert!(m.tet_volume(t) > 0.0);
            let tri = sm.triangles[m.column_of_tet[t]];
            for &n in tet {
                prop_assert!(tri.contains(&m.surface_node(n)));
            }
        }
        let exact = w * h * (d0 + gx * w / 2.0 + gy * h / 2.0);
        prop_assert!((m.total_volume() - exact).abs() < 1e-11 * exact);
        let mut top_area = 0.0;
        for f in &m.boundary_faces {
            let p = f.nodes.map(|n| m.nodes[n]);
            match f.tag {
                FaceTag::Surface => {
                    prop_assert!(p.iter().all(|q| q[2] == 0.0));
                    top_area += 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
                }
                FaceTag::Bottom => prop_assert!(p.iter().all(|q| (q[2] + depth([q[0], q[1]])).abs() < 1e-12)),
                FaceTag::Lateral => {
                    let on_side = |q: &[f64; 3]| q[0].abs() < 1e-12 || q[1].abs() < 1e-12 || (q[0] - w).abs() < 1e-12 || (q[1] - h).abs() < 1e-12;
                    prop_assert!(p.iter().all(on_side));
                }
            }
        }
        prop_assert!((top_area - w * h).abs() < 1e-12 * w * h);
    }

    #[test]
    fn rate_table_orders_follow_formula(
        hs in proptest::collection::vec(0.01f64..1.0, 2..6),
        es in proptest::collection::vec(1e-8f64..1.0, 6),
    ) {
        let mut hs = hs;
        hs.sort_by(|a, b| b.total_cmp(a));
        hs.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-3);
        prop_assume!(hs.len() >= 2);
        let rows: Vec<RateRow> = hs
            .iter()
            .rev()
            .zip(&es)
            .enumerate()
            .map(|(i, (&h, &e))| RateRow { level: i as u32, h, k: h * h, dofs: 10, errors: vec![e] })
            .collect();
        let table = RateTable::new(&["e"], rows);
        for w in table.rows.windows(2) {
            prop_assert!(w[0].h > w[1].h);
        }
        let orders = table.pairwise_orders(0);
        for (i, o) in orders.iter().enumerate() {
            let (a, b) = (&table.rows[i], &table.rows[i + 1]);
            let want = (a.errors[0] / b.errors[0]).ln() / (a.h / b.h).ln();
            prop_assert!((o - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn fitted_order_recovers_power_laws(r in 0.2f64..4.0, c in 1e-3f64..1e3, levels in 2usize..5) {
        let rows = (0..levels)
            .map(|l| {
                let h = 0.5 / (1 << l) as f64;
                RateRow { level: l as u32, h, k: h * h, dofs: 0, errors: vec![c * h.powf(r)] }
            })
            .collect();
        let table = RateTable::new(&["e"], rows);
        prop_assert!((table.fitted_order(0) - r).abs() < 1e-10);
    }

    #[test]
    fn aggregates_match_definitions(seed in any::<u64>(), n in 1usize..12, k in 1e-3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<NodeErrors> = (0..n)
            .map(|m| NodeErrors {
                m,
                t: m as f64 * k,
                u_l2: rng.random_range(0.0..1.0),
                u_h1: rng.random_range(0.0..1.0),
                half_l2: rng.random_range(0.0..1.0),
                half_h1: rng.random_range(0.0..1.0),
                p_l2: rng.random_range(0.0..1.0),
                u3_dz: rng.random_range(0.0..1.0),
                dt_l2: rng.random_range(0.0..1.0),
            })
            .collect();
        let a = Aggregates::from_nodes(&nodes, k);
        let later = &nodes[1.min(n)..];
        let l2 = |f: &dyn Fn(&NodeErrors) -> f64, from: usize| {
            (k * nodes.iter().filter(|e| e.m >= from).map(|e| f(e).powi(2)).sum::<f64>()).sqrt()
        };
        let linf = |f: &dyn Fn(&NodeErrors) -> f64| later.iter().map(f).fold(0.0, f64::max);
        let want = [
            linf(&|e| e.u_l2),
            l2(&|e| e.u_l2, 1),
            l2(&|e| e.u_h1, 1),
            linf(&|e| e.half_l2),
            l2(&|e| e.half_h1, 1),
            l2(&|e| e.p_l2, 1),
            l2(&|e| e.u3_dz, 1),
            l2(&|e| e.dt_l2, 2),
        ];
        for (got, want) in a.values().iter().zip(want) {
            prop_assert!(*got >= 0.0);
            prop_assert!((got - want).abs() <= 1e-13 * want.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn operator_structure(seed in any::<u64>(), sloped in any::<bool>(), bubble in any::<bool>()) {
        let spec = if sloped { SurfaceDomainSpec::unit_square_sloped() } else { SurfaceDomainSpec::unit_square() };
        let mesh = column_mesh(&spec, 0.5, 2);
        let kind = if bubble { ElementKind::P1Bubble } else { ElementKind::P2 };
        let xh = velocity_space(&mesh, kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = (assemble_mass(&xh), assemble_stiffness(&xh));
        prop_assert!(m.asymmetry() <= 1e-13);
        prop_assert!(k.asymmetry() <= 1e-13);
        let v = random_field(&xh, &mut rng);
        prop_assert!(m.bilinear(&v.coeffs, &v.coeffs) > 0.0);
        prop_assert!(k.bilinear(&v.coeffs, &v.coeffs) > 0.0);
        prop_assert!(v.coeffs.iter().zip(&xh.dirichlet_mask).all(|(c, &mk)| !mk || *c == 0.0));
        let u = random_field(&xh, &mut rng);
        let d = Discretization::new(&mesh, kind).unwrap();
        let u3 = solve_substep0(&u, &d.yh, 1e-12).unwrap();
        let c = assemble_convection(&xh, &u, &u3).unwrap();
        let scale = (m.bilinear(&u.coeffs, &u.coeffs) + k.bilinear(&u.coeffs, &u.coeffs)).sqrt() * m.bilinear(&v.coeffs, &v.coeffs);
        prop_assert!(c.bilinear(&v.coeffs, &v.coeffs).abs() <= 1e-11 * scale);
    }

    #[test]
    fn pressure_zero_mean_projection(seed in any::<u64>()) {
        let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.4, 1);
        let qh = build_pressure_space(&mesh.surface);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q: Vec<f64> = (0..qh.n_dofs()).map(|_| rng.random_range(-5.0..5.0)).collect();
        qh.project_zero_mean(&mut q);
        let norm = surface_mass(&qh).bilinear(&q, &q).sqrt();
        prop_assert!(qh.mean(&q).abs() <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn unforced_energy_never_grows(seed in any::<u64>(), log_k in -3.0f64..1.0, q_variant in any::<bool>()) {
        let mesh = column_mesh(&SurfaceDomainSpec::unit_square_sloped(), 0.5, 2);
        let (variant, kind) = if q_variant { (Variant::Q, ElementKind::P1Bubble) } else { (Variant::R, ElementKind::P2) };
        let d = Discretization::new(&mesh, kind).unwrap();
        let k = 10f64.powf(log_k);
        let mut cfg = SchemeConfig { variant, steps: 3, t_final: 3.0 * k, ..Default::default() };
        cfg.substep2.tol = 1e-12;
        let st = Stepper::new(&cfg, &d, &ProblemData::unforced(|_| [0.0; 2])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0 = random_field(&d.xh, &mut rng);
        let h = st.run_from(st.state_from_velocity(u0).unwrap(), false, &mut []).unwrap();
        for w in h.records.windows(2) {
            prop_assert!(w[1].l2 <= w[0].l2 + 1e-12);
            prop_assert!(w[1].energy_residual <= 1e-9);
        }
    }
}

#[test]
fn mesh_layers_stay_within_columns() {
    let spec = SurfaceDomainSpec::unit_square_sloped();
    let sm = Arc::new(build_surface_mesh(&spec, 0.5).unwrap());
    let m = extrude_iso_sigma(&sm, &spec, 3).unwrap();
    assert_eq!(m.tets.len(), 3 * 3 * sm.triangles.len());
}
