//! Manufactured solutions, discrete error norms and convergence studies.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_spaces::{surface_cell, DiscreteField, ElementKind, FeSpace};
use crate::jet::Jet;
use crate::mesh::{refine_uniform, Bathymetry, SurfaceDomainSpec};
use crate::stepper::{Discretization, ProblemData, SchemeConfig, StateSnapshot, Stepper, Variant};

/// Root of `int_{-1}^0 (z + 1)(z + c) dz = 0`.
pub const PROFILE_ROOT: f64 = 1.0 / 3.0;

/// `u = cos t (S, S) w(z / D)`, `S = sin(pi x) sin(pi y)`,
/// `w(s) = (s + 1)(s + 1/3)`, `p_s = cos t cos(pi x) cos(pi y)` on the unit
/// square with `D = 1 + slope * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    pub slope: f64,
    pub nu: f64,
    pub f_cor: f64,
    pub domain: SurfaceDomainSpec,
}

fn profile(s: f64) -> (f64, f64) {
    ((s + 1.0) * (s + PROFILE_ROOT), 2.0 * s + 1.0 + PROFILE_ROOT)
}

fn profile_jet(s: Jet) -> Jet {
    (s + 1.0) * (s + PROFILE_ROOT)
}

/// `int_s^0 w(r) dr`.
fn profile_integral_jet(s: Jet) -> Jet {
    let c = PROFILE_ROOT;
    // w(r) = r^2 + (1 + c) r + c
    -(s.powi(3) * (1.0 / 3.0) + s.powi(2) * ((1.0 + c) / 2.0) + s * c)
}

/// The canonical manufactured family on a supported domain: the flat unit
/// square, or the unit square with `D = 1 + x / 4`.
pub fn manufactured_default(spec: &SurfaceDomainSpec) -> Result<ManufacturedSolution> {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    if spec.polygon != square {
        return Err(Error::DomainUnsupported("manufactured solution needs the unit square".into()));
    }
    let slope = match spec.bathymetry {
        Bathymetry::Affine { d0, gradient: [gx, gy] } if d0 == 1.0 && gy == 0.0 && (gx == 0.0 || gx == 0.25) => gx,
        _ => return Err(Error::DomainUnsupported("manufactured solution needs D = 1 or D = 1 + x/4".into())),
    };
    Ok(ManufacturedSolution { slope, nu: 1.0, f_cor: 0.0, domain: spec.clone() })
}

impl ManufacturedSolution {
    pub fn with_physics(mut self, nu: f64, f_cor: f64) -> Self {
        self.nu = nu;
        self.f_cor = f_cor;
        self
    }

    pub fn depth(&self, x: [f64; 2]) -> f64 {
        1.0 + self.slope * x[0]
    }

    pub fn velocity(&self, p: [f64; 3], t: f64) -> [f64; 2] {
        let s = (PI * p[0]).sin() * (PI * p[1]).sin();
        let v = t.cos() * s * profile(p[2] / self.depth([p[0], p[1]])).0;
        [v, v]
    }

    /// `grad[c][d] = d u_c / d x_d`.
    pub fn velocity_grad(&self, p: [f64; 3], t: f64) -> [[f64; 3]; 2] {
        let (sx, cx) = (PI * p[0]).sin_cos();
        let (sy, cy) = (PI * p[1]).sin_cos();
        let d = self.depth([p[0], p[1]]);
        let zeta = p[2] / d;
        let (w, dw) = profile(zeta);
        let ct = t.cos();
        let s = sx * sy;
        let g = [
            ct * (PI * cx * sy * w - s * dw * p[2] * self.slope / (d * d)),
            ct * PI * sx * cy * w,
            ct * s * dw / d,
        ];
        [g, g]
    }

    fn velocity_jet(&self, v: &[Jet; 4]) -> Jet {
        let [x, y, z, t] = *v;
        let d = x * self.slope + 1.0;
        t.cos() * (x * PI).sin() * (y * PI).sin() * profile_jet(z / d)
    }

    /// `S D int_{z/D}^0 w`, whose horizontal derivatives sum to the vertical
    /// velocity divided by `cos t`.
    fn stream_jet(&self, v: &[Jet; 4]) -> Jet {
        let [x, y, z, _] = *v;
        let d = x * self.slope + 1.0;
        (x * PI).sin() * (y * PI).sin() * d * profile_integral_jet(z / d)
    }

    /// `u3 = int_z^0 div_x u`.
    pub fn vertical(&self, p: [f64; 3], t: f64) -> f64 {
        let g = self.stream_jet(&Jet::vars(p, t));
        t.cos() * (g.g[0] + g.g[1])
    }

    /// `dz u3 = -div_x u`.
    pub fn vertical_dz(&self, p: [f64; 3], t: f64) -> f64 {
        let g = self.velocity_grad(p, t);
        -(g[0][0] + g[1][1])
    }

    pub fn pressure(&self, x: [f64; 2], t: f64) -> f64 {
        t.cos() * (PI * x[0]).cos() * (PI * x[1]).cos()
    }

    pub fn pressure_grad(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        [
            -PI * t.cos() * (PI * x[0]).sin() * (PI * x[1]).cos(),
            -PI * t.cos() * (PI * x[0]).cos() * (PI * x[1]).sin(),
        ]
    }

    /// Body force closing `dt u + (U . grad) u - nu lap u + grad_x p_s + f_cor u^perp = f`.
    pub fn forcing(&self, p: [f64; 3], t: f64) -> [f64; 2] {
        let vars = Jet::vars(p, t);
        let u = self.velocity_jet(&vars);
        let u3 = self.vertical(p, t);
        let gp = self.pressure_grad([p[0], p[1]], t);
        // Both components share the same jet.
        let adv = u.v * u.g[0] + u.v * u.g[1] + u3 * u.g[2];
        let common = u.g[3] + adv - self.nu * u.laplacian();
        let perp = [-u.v, u.v];
        [common + gp[0] + self.f_cor * perp[0], common + gp[1] + self.f_cor * perp[1]]
    }

    /// `nu dz u` at the surface.
    pub fn traction(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let g = self.velocity_grad([x[0], x[1], 0.0], t);
        [self.nu * g[0][2], self.nu * g[1][2]]
    }

    pub fn problem_data(&self) -> ProblemData {
        let (a, b, c, d, e) = (self.clone(), self.clone(), self.clone(), self.clone(), self.clone());
        ProblemData {
            forcing: Arc::new(move |p, t| a.forcing(p, t)),
            traction: Arc::new(move |x, t| b.traction(x, t)),
            initial: Arc::new(move |p| c.velocity(p, 0.0)),
            initial_grad: Some(Arc::new(move |p| d.velocity_grad(p, 0.0))),
            initial_pressure: Some(Arc::new(move |x| e.pressure(x, 0.0))),
            t0: 0.0,
        }
    }
}

/// Errors at one time node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeErrors {
    pub m: usize,
    pub t: f64,
    pub u_l2: f64,
    pub u_h1: f64,
    pub half_l2: f64,
    pub half_h1: f64,
    pub p_l2: f64,
    /// `|dz (u3 - u3_h)|`.
    pub u3_dz: f64,
    /// `|dt e|` for one-sided differences, zero when undefined.
    pub dt_l2: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub u_linf_l2: f64,
    pub u_l2_l2: f64,
    pub u_l2_h1: f64,
    pub half_linf_l2: f64,
    pub half_l2_h1: f64,
    pub p_l2_l2: f64,
    pub u3_l2_dz: f64,
    pub dt_l2_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub h: f64,
    pub k: f64,
    pub variant: Variant,
    pub element: String,
    pub nodes: Vec<NodeErrors>,
    pub aggregates: Aggregates,
}

/// Names of the aggregated norms, in [`Aggregates::values`] order.
pub const NORMS: [&str; 8] = [
    "u_linf_l2", "u_l2_l2", "u_l2_h1", "half_linf_l2", "half_l2_h1", "p_l2_l2", "u3_l2_dz", "dt_l2_l2",
];

impl Aggregates {
    pub fn values(&self) -> [f64; 8] {
        [
            self.u_linf_l2,
            self.u_l2_l2,
            self.u_l2_h1,
            self.half_linf_l2,
            self.half_l2_h1,
            self.p_l2_l2,
            self.u3_l2_dz,
            self.dt_l2_l2,
        ]
    }

    /// Aggregates over nodes `m >= 1`; time differences from `m >= 2`.
    pub fn from_nodes(nodes: &[NodeErrors], k: f64) -> Self {
        let mut a = Self::default();
        for n in nodes.iter().filter(|n| n.m >= 1) {
            a.u_linf_l2 = a.u_linf_l2.max(n.u_l2);
            a.half_linf_l2 = a.half_linf_l2.max(n.half_l2);
            a.u_l2_l2 += k * n.u_l2 * n.u_l2;
            a.u_l2_h1 += k * n.u_h1 * n.u_h1;
            a.half_l2_h1 += k * n.half_h1 * n.half_h1;
            a.p_l2_l2 += k * n.p_l2 * n.p_l2;
            a.u3_l2_dz += k * n.u3_dz * n.u3_dz;
            if n.m >= 2 {
                a.dt_l2_l2 += k * n.dt_l2 * n.dt_l2;
            }
        }
        for v in [&mut a.u_l2_l2, &mut a.u_l2_h1, &mut a.half_l2_h1, &mut a.p_l2_l2, &mut a.u3_l2_dz, &mut a.dt_l2_l2] {
            *v = v.sqrt();
        }
        a
    }
}

/// Quadrature degree for error integrals.
pub const ERROR_DEGREE: usize = 6;

/// Streams error norms of a trajectory against a manufactured solution.
pub struct ErrorAccumulator {
    disc: Discretization,
    ms: ManufacturedSolution,
    k: f64,
    h: f64,
    variant: Variant,
    prev: Option<(f64, Vec<f64>)>,
    pub nodes: Vec<NodeErrors>,
}

struct Sums {
    u_l2: f64,
    u_h1: f64,
    half_l2: f64,
    half_h1: f64,
    u3_dz: f64,
    dt_l2: f64,
}

impl ErrorAccumulator {
    pub fn new(disc: &Discretization, ms: &ManufacturedSolution, k: f64, h: f64, variant: Variant) -> Self {
        Self { disc: disc.clone(), ms: ms.clone(), k, h, variant, prev: None, nodes: Vec::new() }
    }

    pub fn push(&mut self, s: &StateSnapshot) -> Result<()> {
        let xh = &self.disc.xh;
        let t = s.t;
        let ms = &self.ms;
        let k = self.k;
        let prev = self.prev.as_ref().map(|(tp, c)| {
            let diff: Vec<f64> = s.u.coeffs.iter().zip(c).map(|(a, b)| (a - b) / k).collect();
            (*tp, DiscreteField::from_coeffs(xh, diff, t).expect("same space"))
        });
        let cells: Vec<Result<Sums>> = (0..xh.n_cells())
            .into_par_iter()
            .map(|cell| {
                let ev = xh.eval_cell(cell, ERROR_DEGREE);
                let u3 = s.u3.eval_cell(cell, &ev)?;
                let mut out = Sums { u_l2: 0.0, u_h1: 0.0, half_l2: 0.0, half_h1: 0.0, u3_dz: 0.0, dt_l2: 0.0 };
                for q in 0..ev.n_points() {
                    let x = ev.points[q];
                    let w = ev.weights[q];
                    let ue = ms.velocity(x, t);
                    let ge = ms.velocity_grad(x, t);
                    let (v, g) = (s.u.value_at(cell, &ev, q), s.u.grad_at(cell, &ev, q));
                    out.u_l2 += w * sq2(ue, v);
                    out.u_h1 += w * sq_grad(ge, g);
                    if let Some(h) = &s.u_half {
                        out.half_l2 += w * sq2(ue, h.value_at(cell, &ev, q));
                        out.half_h1 += w * sq_grad(ge, h.grad_at(cell, &ev, q));
                    }
                    let d3 = ms.vertical_dz(x, t) - u3[q].1;
                    out.u3_dz += w * d3 * d3;
                    if let Some((tp, diff)) = &prev {
                        let up = ms.velocity(x, *tp);
                        let de = [(ue[0] - up[0]) / k, (ue[1] - up[1]) / k];
                        out.dt_l2 += w * sq2(de, diff.value_at(cell, &ev, q));
                    }
                }
                Ok(out)
            })
            .collect();
        let mut total = Sums { u_l2: 0.0, u_h1: 0.0, half_l2: 0.0, half_h1: 0.0, u3_dz: 0.0, dt_l2: 0.0 };
        for c in cells {
            let c = c?;
            total.u_l2 += c.u_l2;
            total.u_h1 += c.u_h1;
            total.half_l2 += c.half_l2;
            total.half_h1 += c.half_h1;
            total.u3_dz += c.u3_dz;
            total.dt_l2 += c.dt_l2;
        }
        let p_l2 = pressure_error(&s.p, ms, t);
        self.nodes.push(NodeErrors {
            m: s.m,
            t,
            u_l2: total.u_l2.sqrt(),
            u_h1: total.u_h1.sqrt(),
            half_l2: total.half_l2.sqrt(),
            half_h1: total.half_h1.sqrt(),
            p_l2,
            u3_dz: total.u3_dz.sqrt(),
            dt_l2: total.dt_l2.sqrt(),
        });
        self.prev = Some((t, s.u.coeffs.clone()));
        Ok(())
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            h: self.h,
            k: self.k,
            variant: self.variant,
            element: element_name(self.disc.element).into(),
            aggregates: Aggregates::from_nodes(&self.nodes, self.k),
            nodes: self.nodes.clone(),
        }
    }
}

fn sq2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn sq_grad(a: [[f64; 3]; 2], b: [[f64; 3]; 2]) -> f64 {
    let mut s = 0.0;
    for c in 0..2 {
        for d in 0..3 {
            s += (a[c][d] - b[c][d]).powi(2);
        }
    }
    s
}

/// `|p_s(t) - p_h|` in `L2(S)`.
pub fn pressure_error(p: &DiscreteField, ms: &ManufacturedSolution, t: f64) -> f64 {
    let sm = p.space.surface();
    let mut s = 0.0;
    for (tri_id, tri) in sm.triangles.iter().enumerate() {
        let (w, pts, bary) = surface_cell(sm, tri_id, ERROR_DEGREE);
        for q in 0..w.len() {
            let ph: f64 = (0..3).map(|i| bary[q][i] * p.coeffs[tri[i]]).sum();
            s += w[q] * (ms.pressure(pts[q], t) - ph).powi(2);
        }
    }
    s.sqrt()
}

pub fn element_name(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::P2 => "taylor_hood",
        ElementKind::P1Bubble => "mini",
        other => other.name(),
    }
}

/// Errors of a stored trajectory (all states kept).
pub fn compute_errors(states: &[StateSnapshot], disc: &Discretization, ms: &ManufacturedSolution, k: f64, h: f64, variant: Variant) -> Result<ErrorReport> {
    let mut acc = ErrorAccumulator::new(disc, ms, k, h, variant);
    for s in states {
        acc.push(s)?;
    }
    Ok(acc.report())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub level: u32,
    pub h: f64,
    pub k: f64,
    pub dofs: usize,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub norms: Vec<String>,
    /// Sorted by decreasing `h`.
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn new(norms: &[&str], mut rows: Vec<RateRow>) -> Self {
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        Self { norms: norms.iter().map(|s| s.to_string()).collect(), rows }
    }

    pub fn norm_index(&self, name: &str) -> Option<usize> {
        self.norms.iter().position(|n| n == name)
    }

    /// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for each adjacent pair.
    pub fn pairwise_orders(&self, norm: usize) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| (w[0].errors[norm] / w[1].errors[norm]).ln() / (w[0].h / w[1].h).ln())
            .collect()
    }

    /// Least-squares slope of `log e` against `log h`.
    pub fn fitted_order(&self, norm: usize) -> f64 {
        let n = self.rows.len() as f64;
        let xs: Vec<f64> = self.rows.iter().map(|r| r.h.ln()).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.errors[norm].ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    }

    /// `level,h,k,dofs,<norms>,<order_norms>`; orders refer to the previous row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,h,k,dofs");
        for n in &self.norms {
            s += &format!(",{n}");
        }
        for n in &self.norms {
            s += &format!(",order_{n}");
        }
        s.push('\n');
        let orders: Vec<Vec<f64>> = (0..self.norms.len()).map(|i| self.pairwise_orders(i)).collect();
        for (r, row) in self.rows.iter().enumerate() {
            s += &format!("{},{:.16e},{:.16e},{}", row.level, row.h, row.k, row.dofs);
            for e in &row.errors {
                s += &format!(",{e:.16e}");
            }
            for o in &orders {
                if r == 0 {
                    s.push(',');
                } else {
                    s += &format!(",{:.6}", o[r - 1]);
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    KEqH2,
    KEqH,
    FixedK { k: f64 },
}

impl Coupling {
    /// Step count on `[0, T]` for mesh size `h`, and the resulting `k`.
    pub fn steps(&self, t_final: f64, h: f64) -> Result<(usize, f64)> {
        let bound = match *self {
            Coupling::KEqH2 => h * h,
            Coupling::KEqH => h,
            Coupling::FixedK { k } => {
                let m = (t_final / k).round();
                if m < 1.0 || ((t_final / m) - k).abs() > 1e-12 * k {
                    return Err(Error::Config(format!("fixed k = {k} does not divide T = {t_final}")));
                }
                return Ok((m as usize, t_final / m));
            }
        };
        let m = (t_final / bound - 1e-9).ceil().max(1.0) as usize;
        let k = t_final / m as f64;
        if k > bound * (1.0 + 1e-12) {
            return Err(Error::Config(format!("k = {k} violates the coupling bound {bound}")));
        }
        Ok((m, k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub scheme: SchemeConfig,
    pub element: ElementKind,
    pub domain: SurfaceDomainSpec,
    pub h0: f64,
    pub layers0: usize,
    pub levels: Vec<u32>,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level: u32,
    pub h: f64,
    pub k: f64,
    pub steps: usize,
    pub k_over_h2: f64,
    pub max_divergence: f64,
    pub max_energy_residual: f64,
    /// `|dt e|` at the first step.
    pub first_step_dt_error: f64,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub table: RateTable,
    pub levels: Vec<LevelOutcome>,
}

/// Velocity and pressure dofs of a discretization.
pub fn dof_count(d: &Discretization) -> usize {
    d.xh.n_dofs() + d.qh.n_dofs()
}

fn run_level(cfg: &StudyConfig, ms: &ManufacturedSolution, level: u32) -> Result<LevelOutcome> {
    let h = cfg.h0 / 2f64.powi(level as i32);
    let (steps, k) = cfg.coupling.steps(cfg.scheme.t_final, h)?;
    let mesh = Arc::new(refine_uniform(&cfg.domain, cfg.h0, cfg.layers0, level)?);
    let disc = Discretization::new(&mesh, cfg.element)?;
    let scheme = SchemeConfig { steps, ..cfg.scheme.clone() };
    let stepper = Stepper::new(&scheme, &disc, &ms.problem_data())?;
    let mut acc = ErrorAccumulator::new(&disc, ms, k, h, scheme.variant);
    let mut max_div = 0.0f64;
    let mut max_res = 0.0f64;
    let mut first_dt = 0.0;
    {
        let mut hook = |s: &StateSnapshot, r: &crate::stepper::StepRecord| -> Result<()> {
            acc.push(s)?;
            if s.m >= 1 {
                max_div = max_div.max(r.divergence);
                max_res = max_res.max(r.energy_residual);
            }
            if s.m == 1 {
                first_dt = acc.nodes.last().map_or(0.0, |n| n.dt_l2);
            }
            Ok(())
        };
        stepper.run(false, &mut [&mut hook])?;
    }
    Ok(LevelOutcome {
        level,
        h,
        k,
        steps,
        k_over_h2: k / (h * h),
        max_divergence: max_div,
        max_energy_residual: max_res,
        first_step_dt_error: first_dt,
        report: acc.report(),
    })
}

/// Runs the scheme on every level against the manufactured solution.
pub fn convergence_study(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.levels.len() < 2 {
        return Err(Error::Config("a convergence study needs at least two levels".into()));
    }
    let ms = manufactured_default(&cfg.domain)?.with_physics(cfg.scheme.nu, cfg.scheme.f_cor);
    let levels: Vec<Result<LevelOutcome>> = cfg.levels.par_iter().map(|&l| run_level(cfg, &ms, l)).collect();
    let levels: Vec<LevelOutcome> = levels.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (l, out) in levels.iter().enumerate() {
        let mesh = refine_uniform(&cfg.domain, cfg.h0, cfg.layers0, cfg.levels[l])?;
        let disc = Discretization::new(&Arc::new(mesh), cfg.element)?;
        rows.push(RateRow {
            level: out.level,
            h: out.h,
            k: out.k,
            dofs: dof_count(&disc),
            errors: out.report.aggregates.values().to_vec(),
        });
    }
    Ok(StudyResult { table: RateTable::new(&NORMS, rows), levels })
}

/// Minimum fitted orders required for an element and variant.
pub fn rate_thresholds(element: ElementKind, variant: Variant) -> Vec<(&'static str, f64)> {
    match (element, variant) {
        (ElementKind::P2, Variant::R) => vec![("u_l2_h1", 1.8), ("u_linf_l2", 1.8), ("p_l2_l2", 1.8)],
        (ElementKind::P1Bubble, Variant::R) => vec![("u_l2_h1", 0.9), ("p_l2_l2", 0.9)],
        (ElementKind::P1Bubble, Variant::Q) => vec![("u_l2_l2", 1.8), ("p_l2_l2", 0.9)],
        (ElementKind::P2, Variant::Q) => vec![("u_l2_h1", 1.8), ("p_l2_l2", 1.8)],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub norm: String,
    pub fitted_order: f64,
    pub required: f64,
    pub pass: bool,
}

pub fn check_thresholds(table: &RateTable, element: ElementKind, variant: Variant) -> Vec<ThresholdCheck> {
    rate_thresholds(element, variant)
        .into_iter()
        .map(|(norm, required)| {
            let fitted_order = table.norm_index(norm).map_or(f64::NAN, |i| table.fitted_order(i));
            ThresholdCheck { norm: norm.into(), fitted_order, required, pass: fitted_order >= required }
        })
        .collect()
}

/// Helper for tests and tools: the exact solution as a discrete trajectory.
pub fn exact_field(xh: &Arc<FeSpace>, ms: &ManufacturedSolution, t: f64) -> DiscreteField {
    crate::fe_spaces::interpolate(xh, |p, c| ms.velocity(p, t)[c], t)
}
