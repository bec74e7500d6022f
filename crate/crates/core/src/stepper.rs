//! Time loop of the viscosity-splitting scheme.
//!
//! Each step computes the vertical velocity from the current horizontal
//! velocity (sub-step 0, either by the z-elliptic projection or by column
//! integration), then an implicit convection-diffusion step (sub-step 1),
//! then a hydrostatic Stokes projection that also carries diffusion
//! (sub-step 2).

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_coriolis, assemble_divergence, assemble_load_degree, assemble_traction_degree, load_degree, sample_times,
    scalar_convection, scalar_mass, scalar_stiffness, DataSampling,
};
use crate::error::{Error, Result};
use crate::fe_spaces::{
    build_pressure_space, build_velocity_space, build_vertical_space, interpolate, DiscreteField, ElementKind, FeSpace,
};
use crate::hydrostatic_stokes::{
    solve_saddle, stokes_projector, stokes_projector_discrete, SaddleFactorization, SaddleMethod, SaddleSystem,
    SolverConfig, VelocityBlock,
};
use crate::linalg::{axpy, dot, norm, sub};
use crate::mesh::ColumnMesh;
use crate::solvers::{cg, gmres, Ilu0, Jacobi};
use crate::sparse::CsrMatrix;
use crate::vertical_velocity::{integral_evaluator, VerticalEvaluator, VerticalSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Vertical velocity from the z-elliptic projection.
    R,
    /// Vertical velocity from exact column integration.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoriolisMode {
    None,
    /// `b(u^m)` on the right side of sub-step 1.
    Explicit,
    /// Explicit term in sub-step 1 plus `b(u^{m+1} - u^m)` in sub-step 2.
    Correction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    L2Projection,
    StokesProjection,
    Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 2000, restart: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub variant: Variant,
    pub coriolis: CoriolisMode,
    pub nu: f64,
    pub f_cor: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    pub data_sampling: DataSampling,
    pub init: InitMode,
    /// Relative residual bound for the sub-step 0 solve.
    pub substep0_tol: f64,
    pub substep1: KrylovConfig,
    pub substep2: SolverConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            variant: Variant::R,
            coriolis: CoriolisMode::None,
            nu: 1.0,
            f_cor: 0.0,
            t_final: 0.5,
            steps: 8,
            data_sampling: DataSampling::Pointwise,
            init: InitMode::Interpolation,
            substep0_tol: 1e-10,
            substep1: KrylovConfig::default(),
            substep2: SolverConfig { tol: 1e-11, ..Default::default() },
        }
    }
}

impl SchemeConfig {
    pub fn k(&self) -> f64 {
        if self.steps == 0 {
            self.t_final
        } else {
            self.t_final / self.steps as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("T must be positive, got {}", self.t_final)));
        }
        if !self.f_cor.is_finite() {
            return Err(Error::Config("f_cor must be finite".into()));
        }
        if !(self.substep0_tol > 0.0) || !(self.substep1.tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if let DataSampling::Averaged { points: 0 } = self.data_sampling {
            return Err(Error::Config("averaged sampling needs at least one point".into()));
        }
        self.substep2.validate()
    }
}

/// The three discrete spaces on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<ColumnMesh>,
    pub element: ElementKind,
    pub xh: Arc<FeSpace>,
    pub yh: Arc<FeSpace>,
    pub qh: Arc<FeSpace>,
}

impl Discretization {
    /// `element` is the velocity kind: `P2` (Taylor-Hood, quadratic vertical
    /// space) or `P1Bubble` (mini, linear vertical space).
    pub fn new(mesh: &Arc<ColumnMesh>, element: ElementKind) -> Result<Self> {
        let xh = Arc::new(build_velocity_space(mesh, element)?);
        let ykind = if element == ElementKind::P2 { ElementKind::P2 } else { ElementKind::P1 };
        let yh = Arc::new(build_vertical_space(mesh, ykind)?);
        let qh = Arc::new(build_pressure_space(&mesh.surface));
        Ok(Self { mesh: mesh.clone(), element, xh, yh, qh })
    }
}

pub type Forcing = Arc<dyn Fn([f64; 3], f64) -> [f64; 2] + Send + Sync>;
pub type Traction = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Data of one problem instance.
#[derive(Clone)]
pub struct ProblemData {
    pub forcing: Forcing,
    pub traction: Traction,
    pub initial: Arc<dyn Fn([f64; 3]) -> [f64; 2] + Send + Sync>,
    /// Gradient of the initial velocity, used by the Stokes projection.
    pub initial_grad: Option<Arc<dyn Fn([f64; 3]) -> [[f64; 3]; 2] + Send + Sync>>,
    pub initial_pressure: Option<Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>>,
    pub t0: f64,
}

impl ProblemData {
    /// Unforced problem from an initial velocity.
    pub fn unforced(initial: impl Fn([f64; 3]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            forcing: Arc::new(|_, _| [0.0; 2]),
            traction: Arc::new(|_, _| [0.0; 2]),
            initial: Arc::new(initial),
            initial_grad: None,
            initial_pressure: None,
            t0: 0.0,
        }
    }
}

/// Per-step terms of the discrete energy identity (multiplied by 2k).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyRecord {
    /// `|u|^2 / 2`.
    pub kinetic: f64,
    /// `k nu (|grad u_half|^2 + |grad u|^2 + |grad(u - u_half)|^2)`.
    pub dissipation: f64,
    /// `|u_half - u_prev|^2 + |u - u_half|^2`.
    pub numerical_dissipation: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct StateSnapshot {
    pub m: usize,
    pub t: f64,
    pub u: DiscreteField,
    /// Vertical velocity computed from `u`, used by the next step.
    pub u3: VerticalEvaluator,
    pub u_half: Option<DiscreteField>,
    pub p: DiscreteField,
    pub energy: EnergyRecord,
}

/// One row of the step ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub m: usize,
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub pressure: f64,
    pub divergence: f64,
    pub energy_residual: f64,
}

impl StepRecord {
    pub const HEADER: &'static str = "m,t,u_l2,u_h1,p_l2,div_norm,energy_residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.m, self.t, self.l2, self.h1, self.pressure, self.divergence, self.energy_residual
        )
    }
}

#[derive(Debug, Clone)]
pub struct History {
    pub k: f64,
    pub records: Vec<StepRecord>,
    /// All snapshots when requested, otherwise only the last one.
    pub states: Vec<StateSnapshot>,
}

impl History {
    pub fn last(&self) -> &StateSnapshot {
        self.states.last().expect("history holds at least one state")
    }

    pub fn write_ledger<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", StepRecord::HEADER)?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

pub type Hook<'a> = dyn FnMut(&StateSnapshot, &StepRecord) -> Result<()> + 'a;

enum SubStep2 {
    Factored(SaddleFactorization),
    Iterative(SaddleSystem),
}

/// Operators and factorizations reused across the time loop.
pub struct Stepper {
    pub cfg: SchemeConfig,
    pub disc: Discretization,
    pub data: ProblemData,
    k: f64,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    /// `M / k + nu K` with essential rows eliminated.
    diffusion: CsrMatrix,
    /// Volumetric divergence pairing.
    b_div: CsrMatrix,
    coriolis: Option<CsrMatrix>,
    saddle: SubStep2,
    surface_mass: CsrMatrix,
    vertical: Option<VerticalSolver>,
}

impl Stepper {
    pub fn new(cfg: &SchemeConfig, disc: &Discretization, data: &ProblemData) -> Result<Self> {
        cfg.validate()?;
        let xh = &disc.xh;
        let k = cfg.k();
        let mass = scalar_mass(xh);
        let stiffness = scalar_stiffness(xh);
        let raw = mass.linear_combination(1.0 / k, &stiffness, cfg.nu);
        let diffusion = raw.eliminate_symmetric(xh.scalar_mask());
        let b_div = assemble_divergence(&disc.qh, xh)?;
        let coriolis = match cfg.coriolis {
            CoriolisMode::None => None,
            _ => Some(assemble_coriolis(xh, cfg.f_cor)),
        };
        let block = match (&coriolis, cfg.coriolis) {
            (Some(c), CoriolisMode::Correction) => {
                VelocityBlock::Full(crate::assembly::blocks(&raw, [[1.0, 0.0], [0.0, 1.0]]).linear_combination(1.0, c, 1.0))
            }
            _ => VelocityBlock::Blocked(raw),
        };
        let sys = SaddleSystem::new(xh, &disc.qh, block, &b_div, vec![0.0; xh.n_dofs()], vec![0.0; disc.qh.n_dofs()]);
        let surface_mass = sys.surface_mass.clone();
        let saddle = match cfg.substep2.method {
            SaddleMethod::MonolithicDirect => SubStep2::Factored(SaddleFactorization::new(&sys)?),
            _ => SubStep2::Iterative(sys),
        };
        let vertical = match cfg.variant {
            Variant::R => Some(VerticalSolver::new(&disc.yh, xh)?),
            Variant::Q => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            disc: disc.clone(),
            data: data.clone(),
            k,
            mass,
            stiffness,
            diffusion,
            b_div,
            coriolis,
            saddle,
            surface_mass,
            vertical,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    fn blocked(&self, s: &CsrMatrix, x: &[f64]) -> Vec<f64> {
        let n = s.nrows();
        let mut y = s.mul_vec(&x[..n]);
        y.extend(s.mul_vec(&x[n..]));
        y
    }

    /// `|v|^2` in L2.
    pub fn l2_sq(&self, v: &[f64]) -> f64 {
        dot(&self.blocked(&self.mass, v), v)
    }

    /// `|grad v|^2`.
    pub fn h1_sq(&self, v: &[f64]) -> f64 {
        dot(&self.blocked(&self.stiffness, v), v)
    }

    /// `|div_x <v>|` measured as the Euclidean norm of the discrete constraint.
    pub fn divergence_norm(&self, v: &[f64]) -> f64 {
        norm(&self.b_div.mul_vec(v))
    }

    pub fn pressure_l2(&self, p: &[f64]) -> f64 {
        self.surface_mass.bilinear(p, p).max(0.0).sqrt()
    }

    /// Sub-step 0 for the configured variant.
    pub fn substep0(&self, u: &DiscreteField) -> Result<VerticalEvaluator> {
        match &self.vertical {
            Some(v) => Ok(VerticalEvaluator::Projected(v.solve(u, self.cfg.substep0_tol)?)),
            None => integral_evaluator(u),
        }
    }

    /// Load functional `<f, v> + <g_s, v>_{Gamma_s}` on `[t_m, t_{m+1}]`.
    pub fn load(&self, t0: f64, t1: f64) -> Vec<f64> {
        let xh = &self.disc.xh;
        let degree = load_degree(xh);
        let mut b = vec![0.0; xh.n_dofs()];
        for (t, w) in sample_times(self.cfg.data_sampling, t0, t1) {
            let f = &self.data.forcing;
            let g = &self.data.traction;
            axpy(w, &assemble_load_degree(xh, &|x| f(x, t), degree), &mut b);
            axpy(w, &assemble_traction_degree(xh, &|x| g(x, t), degree), &mut b);
        }
        b
    }

    /// Sub-step 1: `(M/k + C(U) + nu K) u_half = M u / k + load [- b(u)]`.
    pub fn substep1(&self, state: &StateSnapshot, load: &[f64]) -> Result<DiscreteField> {
        let xh = &self.disc.xh;
        let n = xh.n_scalar();
        let conv = scalar_convection(xh, &state.u, &state.u3)?;
        let a = self.diffusion.linear_combination(1.0, &conv.eliminate_symmetric(xh.scalar_mask()), 1.0);
        // Elimination left a unit diagonal in both terms.
        let a = fix_unit_diagonal(a, xh.scalar_mask());
        let mut rhs = self.blocked(&self.mass, &state.u.coeffs);
        rhs.iter_mut().for_each(|v| *v /= self.k);
        axpy(1.0, load, &mut rhs);
        if let Some(c) = &self.coriolis {
            axpy(-1.0, &c.mul_vec(&state.u.coeffs), &mut rhs);
        }
        xh.apply_mask(&mut rhs);
        let ilu = Ilu0::new(&a)?;
        let kc = &self.cfg.substep1;
        let mut out = Vec::with_capacity(2 * n);
        for c in 0..2 {
            let b = &rhs[c * n..(c + 1) * n];
            let x0 = &state.u.coeffs[c * n..(c + 1) * n];
            let (x, _) = gmres(&a, b, Some(x0), &ilu, kc.tol, kc.restart, kc.max_iter)?;
            out.extend(x);
        }
        let mut u = DiscreteField::from_coeffs(xh, out, state.t + self.k)?;
        u.apply_mask();
        Ok(u)
    }

    /// Sub-step 2: hydrostatic Stokes problem for `u^{m+1}` and `p^{m+1}`.
    pub fn substep2(&self, state: &StateSnapshot, u_half: &DiscreteField) -> Result<(DiscreteField, DiscreteField)> {
        let xh = &self.disc.xh;
        let mut f = self.blocked(&self.diffusion, &u_half.coeffs);
        if let (Some(c), CoriolisMode::Correction) = (&self.coriolis, self.cfg.coriolis) {
            axpy(1.0, &c.mul_vec(&state.u.coeffs), &mut f);
        }
        xh.apply_mask(&mut f);
        let g = vec![0.0; self.disc.qh.n_dofs()];
        let tol = self.cfg.substep2.tol;
        let sol = match &self.saddle {
            SubStep2::Factored(fac) => fac.solve(&f, &g, tol)?,
            SubStep2::Iterative(sys) => {
                let mut sys = sys.clone();
                sys.rhs_u = f;
                sys.rhs_p = g;
                solve_saddle(&sys, &self.cfg.substep2)?
            }
        };
        let t = u_half.time;
        let mut u = DiscreteField::from_coeffs(xh, sol.u, t)?;
        u.apply_mask();
        Ok((u, DiscreteField::from_coeffs(&self.disc.qh, sol.p, t)?))
    }

    /// Terms of the per-step energy identity and its residual, relative to
    /// the size of the largest term.
    pub fn energy_identity(&self, u_prev: &[f64], u_half: &[f64], u_next: &[f64], load: &[f64]) -> EnergyRecord {
        let k = self.k;
        let nu = self.cfg.nu;
        let d1 = sub(u_half, u_prev);
        let d2 = sub(u_next, u_half);
        let terms_lhs = [
            self.l2_sq(u_next),
            -self.l2_sq(u_prev),
            self.l2_sq(&d1),
            self.l2_sq(&d2),
            k * nu * self.h1_sq(u_half),
            k * nu * self.h1_sq(u_next),
            k * nu * self.h1_sq(&d2),
        ];
        let mut terms_rhs = vec![2.0 * k * dot(load, u_half)];
        if let Some(c) = &self.coriolis {
            terms_rhs.push(-2.0 * k * dot(&c.mul_vec(u_prev), u_half));
            if self.cfg.coriolis == CoriolisMode::Correction {
                terms_rhs.push(-2.0 * k * dot(&c.mul_vec(&sub(u_next, u_prev)), u_next));
            }
        }
        let lhs: f64 = terms_lhs.iter().sum();
        let rhs: f64 = terms_rhs.iter().sum();
        let scale = terms_lhs.iter().chain(&terms_rhs).fold(0.0f64, |a, v| a.max(v.abs()));
        EnergyRecord {
            kinetic: 0.5 * self.l2_sq(u_next),
            dissipation: terms_lhs[4] + terms_lhs[5] + terms_lhs[6],
            numerical_dissipation: terms_lhs[2] + terms_lhs[3],
            residual: (lhs - rhs).abs() / scale.max(1.0),
        }
    }

    pub fn initialize(&self) -> Result<StateSnapshot> {
        let xh = &self.disc.xh;
        let qh = &self.disc.qh;
        let t0 = self.data.t0;
        let u0 = &self.data.initial;
        let mut p = DiscreteField::zeros(qh, t0);
        let mut u = match self.cfg.init {
            InitMode::Interpolation => interpolate(xh, |x, c| u0(x)[c], t0),
            InitMode::L2Projection => {
                let mut b = assemble_load_degree(xh, &|x| u0(x), 2 * xh.kind.degree() + 2);
                xh.apply_mask(&mut b);
                let m = self.mass.eliminate_symmetric(xh.scalar_mask());
                let pre = Jacobi::new(&m);
                let n = xh.n_scalar();
                let mut out = Vec::with_capacity(2 * n);
                for c in 0..2 {
                    out.extend(cg(&m, &b[c * n..(c + 1) * n], None, &pre, 1e-14, 10_000)?.0);
                }
                DiscreteField::from_coeffs(xh, out, t0)?
            }
            InitMode::StokesProjection => {
                let cfg = SolverConfig { method: SaddleMethod::MonolithicDirect, ..self.cfg.substep2 };
                let pressure = self.data.initial_pressure.clone();
                let (iu, jp) = match &self.data.initial_grad {
                    Some(grad) => {
                        let q = move |x: [f64; 2]| pressure.as_ref().map_or(0.0, |p| p(x));
                        stokes_projector(xh, qh, &|x| grad(x), &q, &cfg)?
                    }
                    None => {
                        let v = interpolate(xh, |x, c| u0(x)[c], t0);
                        let q = match &pressure {
                            Some(pf) => interpolate_surface(qh, pf.as_ref()),
                            None => DiscreteField::zeros(qh, t0),
                        };
                        stokes_projector_discrete(&v, &q, &cfg)?
                    }
                };
                p = DiscreteField::from_coeffs(qh, jp.coeffs, t0)?;
                DiscreteField::from_coeffs(xh, iu.coeffs, t0)?
            }
        };
        u.apply_mask();
        let u3 = self.substep0(&u)?;
        let energy = EnergyRecord { kinetic: 0.5 * self.l2_sq(&u.coeffs), ..Default::default() };
        Ok(StateSnapshot { m: 0, t: t0, u, u3, u_half: None, p, energy })
    }

    pub fn record(&self, s: &StateSnapshot) -> StepRecord {
        StepRecord {
            m: s.m,
            t: s.t,
            l2: self.l2_sq(&s.u.coeffs).max(0.0).sqrt(),
            h1: self.h1_sq(&s.u.coeffs).max(0.0).sqrt(),
            pressure: self.pressure_l2(&s.p.coeffs),
            divergence: self.divergence_norm(&s.u.coeffs),
            energy_residual: s.energy.residual,
        }
    }

    /// Sub-steps 1 and 2 from `state`, then sub-step 0 on the new velocity.
    pub fn advance(&self, state: &StateSnapshot) -> Result<StateSnapshot> {
        let t1 = self.data.t0 + (state.m + 1) as f64 * self.k;
        let load = self.load(state.t, t1);
        let mut u_half = self.substep1(state, &load)?;
        u_half.time = t1;
        let (u, p) = self.substep2(state, &u_half)?;
        let energy = self.energy_identity(&state.u.coeffs, &u_half.coeffs, &u.coeffs, &load);
        let u3 = self.substep0(&u)?;
        Ok(StateSnapshot { m: state.m + 1, t: t1, u, u3, u_half: Some(u_half), p, energy })
    }

    /// Initial snapshot from a given discrete velocity, bypassing the
    /// configured initialization.
    pub fn state_from_velocity(&self, mut u: DiscreteField) -> Result<StateSnapshot> {
        u.apply_mask();
        let t = self.data.t0;
        u.time = t;
        let u3 = self.substep0(&u)?;
        let energy = EnergyRecord { kinetic: 0.5 * self.l2_sq(&u.coeffs), ..Default::default() };
        Ok(StateSnapshot { m: 0, t, u, u3, u_half: None, p: DiscreteField::zeros(&self.disc.qh, t), energy })
    }

    /// Runs all steps. Hooks see every state, the initial one included.
    pub fn run(&self, keep_states: bool, hooks: &mut [&mut Hook<'_>]) -> Result<History> {
        self.run_from(self.initialize()?, keep_states, hooks)
    }

    pub fn run_from(&self, initial: StateSnapshot, keep_states: bool, hooks: &mut [&mut Hook<'_>]) -> Result<History> {
        let mut state = initial;
        let mut records = Vec::with_capacity(self.cfg.steps + 1);
        let mut states = Vec::new();
        let rec = self.record(&state);
        for h in hooks.iter_mut() {
            h(&state, &rec)?;
        }
        records.push(rec);
        for _ in state.m..self.cfg.steps {
            let next = self.advance(&state)?;
            let rec = self.record(&next);
            for h in hooks.iter_mut() {
                h(&next, &rec)?;
            }
            records.push(rec);
            if keep_states {
                states.push(state);
            }
            state = next;
        }
        states.push(state);
        Ok(History { k: self.k, records, states })
    }

    /// Restores a snapshot from checkpoint files written by [`write_checkpoint`].
    pub fn restore(&self, dir: &Path, m: usize) -> Result<StateSnapshot> {
        let read = |name: &str, space: &Arc<FeSpace>| -> Result<DiscreteField> {
            let f = std::fs::File::open(dir.join(format!("{name}_{m:06}.csv")))?;
            DiscreteField::read_csv(space, std::io::BufReader::new(f))
        };
        let u = read("u", &self.disc.xh)?;
        let p = read("p", &self.disc.qh)?;
        let u_half = if m > 0 { Some(read("u_half", &self.disc.xh)?) } else { None };
        let u3 = self.substep0(&u)?;
        let energy = EnergyRecord { kinetic: 0.5 * self.l2_sq(&u.coeffs), ..Default::default() };
        Ok(StateSnapshot { m, t: u.time, u, u3, u_half, p, energy })
    }
}

/// Writes `u`, `u_half` and `p` of a snapshot in the field CSV format.
pub fn write_checkpoint(dir: &Path, s: &StateSnapshot) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, f: &DiscreteField| -> Result<()> {
        let file = std::fs::File::create(dir.join(format!("{name}_{:06}.csv", s.m)))?;
        let mut w = std::io::BufWriter::new(file);
        f.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    };
    write("u", &s.u)?;
    write("p", &s.p)?;
    if let Some(h) = &s.u_half {
        write("u_half", h)?;
    }
    Ok(())
}

fn interpolate_surface(qh: &Arc<FeSpace>, f: &(dyn Fn([f64; 2]) -> f64 + Send + Sync)) -> DiscreteField {
    let coeffs = qh.surface().nodes.iter().map(|&x| f(x)).collect();
    DiscreteField::from_coeffs(qh, coeffs, 0.0).expect("one value per surface node")
}

/// Resets masked diagonals to one after summing two eliminated matrices.
fn fix_unit_diagonal(mut a: CsrMatrix, mask: &[bool]) -> CsrMatrix {
    for (i, &m) in mask.iter().enumerate() {
        if m {
            if let Some(pos) = a.find(i, i) {
                a.values_mut()[pos] = 1.0;
            }
        }
    }
    a
}
