mod common;

use std::sync::Arc;

use common::*;
use hydrosplit::fe_spaces::{DiscreteField, ElementKind};
use hydrosplit::hydrostatic_stokes::{stokes_projector, SolverConfig};
use hydrosplit::mesh::{refine_uniform, ColumnMesh, SurfaceDomainSpec};
use hydrosplit::stepper::{Discretization, InitMode, SchemeConfig, Stepper};
use hydrosplit::verification::{manufactured_default, pressure_error, ManufacturedSolution, RateRow, RateTable};

fn meshes(spec: &SurfaceDomainSpec) -> Vec<Arc<ColumnMesh>> {
    (0..3).map(|l| Arc::new(refine_uniform(spec, 0.25, 4, l).unwrap())).collect()
}

fn l2_error(u: &DiscreteField, ms: &ManufacturedSolution) -> f64 {
    integrate(u.space.mesh(), 6, |c, l, g| {
        let (v, _) = eval_vector(u, c, l, g);
        let e = ms.velocity(g.point(&l), 0.0);
        (v[0] - e[0]).powi(2) + (v[1] - e[1]).powi(2)
    })
    .sqrt()
}

fn h1_error(u: &DiscreteField, ms: &ManufacturedSolution) -> f64 {
    integrate(u.space.mesh(), 6, |c, l, g| {
        let (_, gv) = eval_vector(u, c, l, g);
        let ge = ms.velocity_grad(g.point(&l), 0.0);
        let mut s = 0.0;
        for i in 0..2 {
            for k in 0..3 {
                s += (gv[i][k] - ge[i][k]).powi(2);
            }
        }
        s
    })
    .sqrt()
}

fn fitted(hs: &[f64], es: &[f64]) -> f64 {
    let rows = hs
        .iter()
        .zip(es)
        .enumerate()
        .map(|(i, (&h, &e))| RateRow { level: i as u32, h, k: 0.0, dofs: 0, errors: vec![e] })
        .collect();
    RateTable::new(&["e"], rows).fitted_order(0)
}

#[test]
fn stokes_projection_converges_at_element_order() {
    let spec = SurfaceDomainSpec::unit_square_sloped();
    let ms = manufactured_default(&spec).unwrap();
    let meshes = meshes(&spec);
    let cfg = SolverConfig::default();
    for (kind, order) in [(ElementKind::P2, 2.0), (ElementKind::P1Bubble, 1.0)] {
        let (mut hs, mut eu, mut ep) = (Vec::new(), Vec::new(), Vec::new());
        for m in &meshes {
            let d = Discretization::new(m, kind).unwrap();
            let (u, p) = stokes_projector(&d.xh, &d.qh, &|x| ms.velocity_grad(x, 0.0), &|x| ms.pressure(x, 0.0), &cfg).unwrap();
            hs.push(m.h);
            eu.push(h1_error(&u, &ms));
            ep.push(pressure_error(&p, &ms, 0.0));
        }
        let (ru, rp) = (fitted(&hs, &eu), fitted(&hs, &ep));
        assert!(ru >= order - 0.1, "{kind:?} velocity order {ru} from {eu:?}");
        assert!(rp >= order - 0.1, "{kind:?} pressure order {rp} from {ep:?}");
    }
}

#[test]
fn initial_projections_converge_in_l2() {
    let spec = SurfaceDomainSpec::unit_square();
    let ms = manufactured_default(&spec).unwrap();
    let meshes = meshes(&spec);
    for (kind, order) in [(ElementKind::P2, 3.0), (ElementKind::P1Bubble, 2.0)] {
        for init in [InitMode::Interpolation, InitMode::L2Projection] {
            let (mut hs, mut es) = (Vec::new(), Vec::new());
            for m in &meshes {
                let d = Discretization::new(m, kind).unwrap();
                let cfg = SchemeConfig { init, steps: 1, ..Default::default() };
                let st = Stepper::new(&cfg, &d, &ms.problem_data()).unwrap();
                let s = st.initialize().unwrap();
                hs.push(m.h);
                es.push(l2_error(&s.u, &ms));
            }
            let r = fitted(&hs, &es);
            assert!(r >= order - 0.2, "{kind:?} {init:?}: order {r} from {es:?}");
        }
    }
}
