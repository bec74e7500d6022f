//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the three convergence studies through the binary, so the
//! whole suite takes on the order of twenty minutes on one core.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use hydrosplit::assembly::{assemble_convection, assemble_divergence, assemble_mass, assemble_stiffness, scalar_mass, scalar_stiffness};
use hydrosplit::fe_spaces::ElementKind;
use hydrosplit::hydrostatic_stokes::{solve_saddle, uzawa_rho_bound, SaddleMethod, SaddleSystem, SolverConfig, VelocityBlock};
use hydrosplit::mesh::SurfaceDomainSpec;
use hydrosplit::stepper::{Discretization, ProblemData, SchemeConfig, Stepper, Variant};
use hydrosplit::verification::manufactured_default;
use hydrosplit::vertical_velocity::{integral_evaluator, solve_substep0, VerticalEvaluator};
use hydrosplit_cli::{Element, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = (bool, String);

const COMBOS: [(Variant, ElementKind); 2] = [(Variant::R, ElementKind::P2), (Variant::Q, ElementKind::P1Bubble)];

fn coarse() -> Arc<hydrosplit::mesh::ColumnMesh> {
    column_mesh(&SurfaceDomainSpec::unit_square(), 0.25, 4)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn skew_symmetry() -> Outcome {
    let mesh = coarse();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for (variant, kind) in COMBOS {
        let d = Discretization::new(&mesh, kind).unwrap();
        let (m, k) = (assemble_mass(&d.xh), assemble_stiffness(&d.xh));
        for _ in 0..20 {
            let u = random_field(&d.xh, &mut rng);
            let v = random_field(&d.xh, &mut rng);
            let u3 = match variant {
                Variant::R => solve_substep0(&u, &d.yh, 1e-12).unwrap(),
                Variant::Q => integral_evaluator(&u).unwrap(),
            };
            let c = assemble_convection(&d.xh, &u, &u3).unwrap();
            let u_h1 = (m.bilinear(&u.coeffs, &u.coeffs) + k.bilinear(&u.coeffs, &u.coeffs)).sqrt();
            let ratio = c.bilinear(&v.coeffs, &v.coeffs).abs() / (u_h1 * m.bilinear(&v.coeffs, &v.coeffs));
            worst = worst.max(ratio);
        }
    }
    (worst <= 1e-11, format!("max |v'C(U)v| / (|U|_H1 |v|^2) = {worst:.2e} over 40 pairs, bound 1e-11"))
}

fn stability() -> Outcome {
    let mesh = coarse();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = f64::NEG_INFINITY;
    let mut runs = 0;
    for (variant, kind) in COMBOS {
        let d = Discretization::new(&mesh, kind).unwrap();
        let u0 = random_field(&d.xh, &mut rng);
        for k in [0.0625, 0.1, 1.0, 10.0] {
            let mut cfg = SchemeConfig { variant, steps: 5, t_final: 5.0 * k, ..Default::default() };
            cfg.substep2.tol = 1e-12;
            let st = Stepper::new(&cfg, &d, &ProblemData::unforced(|_| [0.0; 2])).unwrap();
            let h = st.run_from(st.state_from_velocity(u0.clone()).unwrap(), false, &mut []).unwrap();
            for w in h.records.windows(2) {
                worst = worst.max(w[1].l2 - w[0].l2);
            }
            runs += 1;
        }
    }
    (worst <= 1e-12, format!("max (|u^(m+1)| - |u^m|) = {worst:.2e} over {runs} runs, k in {{h^2, 0.1, 1, 10}}"))
}

fn energy_identity() -> Outcome {
    let spec = SurfaceDomainSpec::unit_square();
    let ms = manufactured_default(&spec).unwrap();
    let mesh = coarse();
    let mut worst: f64 = 0.0;
    for (variant, kind) in COMBOS {
        let d = Discretization::new(&mesh, kind).unwrap();
        let mut cfg = SchemeConfig { variant, steps: 8, ..Default::default() };
        cfg.substep1.tol = 1e-12;
        cfg.substep2.tol = 1e-12;
        let st = Stepper::new(&cfg, &d, &ms.problem_data()).unwrap();
        let h = st.run(false, &mut []).unwrap();
        worst = h.records.iter().map(|r| r.energy_residual).fold(worst, f64::max);
    }
    (worst <= 1e-9, format!("max relative identity residual {worst:.2e}, bound 1e-9"))
}

fn substep0_bound() -> Outcome {
    let mesh = coarse();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = f64::NEG_INFINITY;
    for (variant, kind) in COMBOS {
        let d = Discretization::new(&mesh, kind).unwrap();
        let degree = 2 * kind.degree();
        for _ in 0..10 {
            let u = random_field(&d.xh, &mut rng);
            let u3: VerticalEvaluator = match variant {
                Variant::R => solve_substep0(&u, &d.yh, 1e-12).unwrap(),
                Variant::Q => integral_evaluator(&u).unwrap(),
            };
            let (mut dz, mut div) = (0.0, 0.0);
            for cell in 0..d.xh.n_cells() {
                let ev = d.xh.eval_cell(cell, degree);
                let vert = u3.eval_cell(cell, &ev).unwrap();
                for q in 0..ev.n_points() {
                    let g = u.grad_at(cell, &ev, q);
                    dz += ev.weights[q] * vert[q].1.powi(2);
                    div += ev.weights[q] * (g[0][0] + g[1][1]).powi(2);
                }
            }
            worst = worst.max(dz.sqrt() - div.sqrt());
        }
    }
    (worst <= 1e-10, format!("max (|dz u3| - |div_x u|) = {worst:.2e} over 20 fields"))
}

fn study_config(element: Element, variant: Variant) -> RunConfig {
    let mut c = RunConfig::default();
    c.spaces.element = element;
    c.scheme.variant = variant;
    c.study.levels = vec![0, 1, 2];
    c
}

fn converge(dir: &Path, name: &str, cfg: &RunConfig, workers: usize) -> Result<(Value, String, f64), String> {
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, cfg.to_json()).map_err(|e| e.to_string())?;
    let out = dir.join(name);
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_hydrosplit"))
        .arg("converge")
        .arg("--config")
        .arg(&path)
        .arg("--workers")
        .arg(workers.to_string())
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let summary = fs::read_to_string(out.join("summary.json")).map_err(|e| e.to_string())?;
    let rates = fs::read_to_string(out.join("rates.csv")).map_err(|e| e.to_string())?;
    Ok((serde_json::from_str(&summary).map_err(|e| e.to_string())?, rates, secs))
}

fn rates_outcome(run: &Result<(Value, String, f64), String>) -> Outcome {
    match run {
        Err(e) => (false, format!("converge failed: {}", e.trim())),
        Ok((s, _, secs)) => {
            let checks = s["thresholds"].as_array().cloned().unwrap_or_default();
            let text: Vec<String> = checks
                .iter()
                .map(|t| format!("{} {:.3} (>= {})", t["norm"].as_str().unwrap_or("?"), t["fitted_order"].as_f64().unwrap_or(f64::NAN), t["required"]))
                .collect();
            let ok = !checks.is_empty() && checks.iter().all(|t| t["pass"].as_bool() == Some(true)) && *secs <= 900.0;
            (ok, format!("{}; {secs:.0} s", text.join(", ")))
        }
    }
}

fn infsup() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut text = Vec::new();
    let start = Instant::now();
    for element in [Element::TaylorHood, Element::Mini] {
        let mut cfg = RunConfig::default();
        cfg.spaces.element = element;
        cfg.study.levels = vec![0, 1, 2];
        let path = dir.path().join("c.json");
        fs::write(&path, cfg.to_json()).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_hydrosplit"))
            .args(["infsup", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        if !out.status.success() {
            return (false, format!("infsup failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
        let csv = fs::read_to_string(dir.path().join("infsup.csv")).unwrap();
        let betas: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
        let (lo, hi) = betas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let variation = (hi - lo) / hi;
        ok &= betas.len() == 3 && lo > 0.01 && variation < 0.2;
        text.push(format!("{element:?} beta {betas:.4?} variation {:.1}%", 100.0 * variation));
    }
    let secs = start.elapsed().as_secs_f64();
    (ok && secs <= 300.0, format!("{}; {secs:.0} s", text.join("; ")))
}

fn divergence(runs: &[&Result<(Value, String, f64), String>]) -> Outcome {
    let mut worst: f64 = 0.0;
    for r in runs {
        match r {
            Err(_) => return (false, "a convergence run failed".into()),
            Ok((s, _, _)) => {
                for l in s["levels"].as_array().unwrap() {
                    worst = worst.max(l["max_divergence"].as_f64().unwrap());
                }
            }
        }
    }
    let bound = 10.0 * RunConfig::default().solvers.substep2.tol;
    (worst <= bound, format!("max |B u^(m+1)| = {worst:.2e} over all study steps, bound {bound:.0e}"))
}

fn oracle_equivalence() -> Outcome {
    let mesh = coarse();
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let d = Discretization::new(&mesh, ElementKind::P2).unwrap();
    let (x, q) = (&d.xh, &d.qh);
    let a = scalar_mass(x).linear_combination(1.0 / 0.0625, &scalar_stiffness(x), 1.0);
    let b = assemble_divergence(q, x).unwrap();
    let f = (0..x.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sys = SaddleSystem::new(x, q, VelocityBlock::Blocked(a), &b, f, vec![0.0; q.n_dofs()]);
    let tol = 1e-10;
    let rho = 0.5 * uzawa_rho_bound(&sys).unwrap();
    let methods = [
        SaddleMethod::MonolithicDirect,
        SaddleMethod::Uzawa { rho },
        SaddleMethod::AugmentedLagrangian { gamma: 1.0, rho: 1.0 },
    ];
    let sols: Vec<_> = methods.iter().map(|&method| solve_saddle(&sys, &SolverConfig { method, tol, max_iter: 50_000 }).unwrap()).collect();
    let mut solver_gap: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            let du: Vec<f64> = sols[i].u.iter().zip(&sols[j].u).map(|(a, b)| a - b).collect();
            let dp: Vec<f64> = sols[i].p.iter().zip(&sols[j].p).map(|(a, b)| a - b).collect();
            solver_gap = solver_gap.max(norm(&du) / norm(&sols[i].u).max(1.0)).max(norm(&dp) / norm(&sols[i].p).max(1.0));
        }
    }
    let mut form_gap: f64 = 0.0;
    for kind in [ElementKind::P2, ElementKind::P1Bubble] {
        let d = Discretization::new(&mesh, kind).unwrap();
        let (m, k) = (assemble_mass(&d.xh), assemble_stiffness(&d.xh));
        let u = random_field(&d.xh, &mut rng);
        let u3 = solve_substep0(&u, &d.yh, 1e-13).unwrap();
        let c = assemble_convection(&d.xh, &u, &u3).unwrap();
        for _ in 0..2 {
            let v = random_field(&d.xh, &mut rng);
            let w = random_field(&d.xh, &mut rng);
            let pairs = [
                (m.bilinear(&v.coeffs, &v.coeffs), mass_form(&v, &v)),
                (k.bilinear(&v.coeffs, &v.coeffs), stiffness_form(&v, &v)),
                (c.bilinear(&w.coeffs, &v.coeffs), convection_skew_form(&u, &u3, &v, &w)),
            ];
            for (got, want) in pairs {
                form_gap = form_gap.max((got - want).abs() / want.abs().max(1.0));
            }
        }
    }
    (
        solver_gap <= 10.0 * tol && form_gap <= 1e-10,
        format!("solver gap {solver_gap:.2e} (bound {:.0e}), form gap {form_gap:.2e} (bound 1e-10)", 10.0 * tol),
    )
}

fn determinism(a: &Result<(Value, String, f64), String>, b: &Result<(Value, String, f64), String>) -> Outcome {
    match (a, b) {
        (Ok((_, ra, _)), Ok((_, rb, _))) => (ra == rb && !ra.is_empty(), format!("rates.csv identical for --workers 1 and 4: {}", ra == rb)),
        _ => (false, "a convergence run failed".into()),
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let (ok, msg) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let what = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        (false, format!("panicked: {}", what.unwrap_or_default()))
    });
    (ok, format!("{msg} [{:.1} s]", start.elapsed().as_secs_f64()))
}

fn report(id: usize, name: &str, outcome: &Outcome) {
    let line = format!("{} {id:>2} {name}: {}\n", if outcome.0 { "PASS" } else { "FAIL" }, outcome.1);
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn main() {
    let mut all = Vec::new();
    let mut record = |id, name: &str, o: Outcome| {
        report(id, name, &o);
        all.push(o.0);
    };
    record(1, "skew-symmetry", guarded(skew_symmetry));
    record(2, "unconditional stability", guarded(stability));
    record(3, "energy identity", guarded(energy_identity));
    record(4, "sub-step 0 bound", guarded(substep0_bound));
    let dir = tempfile::tempdir().unwrap();
    let th = converge(dir.path(), "th_r", &study_config(Element::TaylorHood, Variant::R), 1);
    record(5, "R rates, Taylor-Hood", rates_outcome(&th));
    let mini = converge(dir.path(), "mini_r", &study_config(Element::Mini, Variant::R), 1);
    record(6, "R rates, mini", rates_outcome(&mini));
    let q = converge(dir.path(), "mini_q", &study_config(Element::Mini, Variant::Q), 1);
    record(7, "Q rates, mini", rates_outcome(&q));
    record(8, "inf-sup", guarded(infsup));
    record(9, "divergence constraint", divergence(&[&th, &mini, &q]));
    record(10, "oracle equivalence", guarded(oracle_equivalence));
    let th4 = converge(dir.path(), "th_r_4", &study_config(Element::TaylorHood, Variant::R), 4);
    record(11, "determinism", determinism(&th, &th4));
    let failed = all.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
