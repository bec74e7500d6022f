//! The generalized hydrostatic Stokes saddle problem
//!
//! ```text
//! A u + B^T p = f
//! B u         = g,      mean(p) = 0
//! ```
//!
//! where `B` pairs surface pressures with the depth-integrated horizontal
//! divergence. Three solution paths are offered: a block factorization
//! (sparse factorization of `A`, dense Schur complement on the small surface
//! space), Uzawa, and an augmented Lagrangian iteration. The module also
//! hosts the hydrostatic Stokes projector, the z-projector onto the vertical
//! space, and the discrete inf-sup constant.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_divergence, assemble_mass, assemble_stiffness, assemble_zstiffness, scalar_mass, scalar_stiffness};
use crate::error::{Error, Result};
use crate::fe_spaces::{DiscreteField, FeSpace};
use crate::linalg::{axpy, dot, norm, sub, DenseCholesky, DenseLu};
use crate::solvers::{cg, gmres, DirectSolver, Ilu0, Jacobi};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SaddleMethod {
    MonolithicDirect,
    Uzawa { rho: f64 },
    AugmentedLagrangian { gamma: f64, rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SaddleMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: SaddleMethod::MonolithicDirect, tol: 1e-10, max_iter: 2000 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        match self.method {
            SaddleMethod::Uzawa { rho } if !(rho > 0.0) => Err(Error::Config(format!("rho must be positive, got {rho}"))),
            SaddleMethod::AugmentedLagrangian { gamma, rho } if !(rho > 0.0) || !(gamma >= 0.0) => {
                Err(Error::Config(format!("augmented Lagrangian needs rho > 0 and gamma >= 0, got {rho}, {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

/// Velocity block, either a single operator or two identical component blocks.
#[derive(Debug, Clone)]
pub enum VelocityBlock {
    /// `A = diag(S, S)` for a scalar block `S`.
    Blocked(CsrMatrix),
    Full(CsrMatrix),
}

impl VelocityBlock {
    pub fn dim(&self) -> usize {
        match self {
            Self::Blocked(s) => 2 * s.nrows(),
            Self::Full(a) => a.nrows(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Blocked(s) => {
                let n = s.nrows();
                let mut y = s.mul_vec(&x[..n]);
                y.extend(s.mul_vec(&x[n..]));
                y
            }
            Self::Full(a) => a.mul_vec(x),
        }
    }

    pub fn to_full(&self) -> CsrMatrix {
        match self {
            Self::Blocked(s) => crate::assembly::blocks(s, [[1.0, 0.0], [0.0, 1.0]]),
            Self::Full(a) => a.clone(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Blocked(s) => s.asymmetry() <= 1e-13,
            Self::Full(a) => a.asymmetry() <= 1e-13,
        }
    }
}

/// Saddle system with essential conditions already eliminated.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: VelocityBlock,
    /// `n_q x n_u`, masked columns zero.
    pub b: CsrMatrix,
    /// Surface mass matrix, defines the pressure mean and the Uzawa metric.
    pub surface_mass: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
}

impl SaddleSystem {
    /// Builds a system from an unconstrained velocity block and the
    /// divergence pairing `B_div[q, v] = int q div_x v`. The pressure sign is
    /// chosen so that `p` is the physical surface pressure.
    pub fn new(xh: &FeSpace, qh: &FeSpace, a: VelocityBlock, b_div: &CsrMatrix, rhs_u: Vec<f64>, rhs_p: Vec<f64>) -> Self {
        let a = match a {
            VelocityBlock::Blocked(s) => VelocityBlock::Blocked(s.eliminate_symmetric(xh.scalar_mask())),
            VelocityBlock::Full(m) => VelocityBlock::Full(m.eliminate_symmetric(&xh.dirichlet_mask)),
        };
        let mut b = b_div.eliminate_columns(&xh.dirichlet_mask);
        b.scale(-1.0);
        let mut rhs_u = rhs_u;
        xh.apply_mask(&mut rhs_u);
        Self { a, b, surface_mass: scalar_mass(qh), rhs_u, rhs_p }
    }

    fn mean_vector(&self) -> Vec<f64> {
        self.surface_mass.mul_vec(&vec![1.0; self.b.nrows()])
    }

    /// Momentum and constraint residual norms, relative as in the solver
    /// contract.
    pub fn residuals(&self, u: &[f64], p: &[f64]) -> (f64, f64) {
        let mut r = self.a.mul_vec(u);
        axpy(1.0, &self.b.mul_transpose_vec(p), &mut r);
        let ru = norm(&sub(&r, &self.rhs_u)) / norm(&self.rhs_u).max(f64::MIN_POSITIVE);
        let rp = norm(&sub(&self.b.mul_vec(u), &self.rhs_p)) / norm(u).max(1.0);
        (if norm(&self.rhs_u) == 0.0 { norm(&sub(&r, &self.rhs_u)) } else { ru }, rp)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaddleStats {
    pub iterations: usize,
    pub residual_u: f64,
    pub residual_p: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub stats: SaddleStats,
}

enum VelocityFactor {
    Blocked(DirectSolver),
    Full(DirectSolver),
}

impl VelocityFactor {
    fn new(a: &VelocityBlock) -> Result<Self> {
        Ok(match a {
            VelocityBlock::Blocked(s) => Self::Blocked(DirectSolver::auto(s)?),
            VelocityBlock::Full(m) => Self::Full(DirectSolver::auto(m)?),
        })
    }

    fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self {
            Self::Full(f) => f.solve_many(rhs),
            Self::Blocked(f) => {
                let n = f.dim();
                let split: Vec<Vec<f64>> = rhs.iter().flat_map(|r| [r[..n].to_vec(), r[n..].to_vec()]).collect();
                let sol = f.solve_many(&split);
                sol.chunks(2).map(|c| [c[0].as_slice(), c[1].as_slice()].concat()).collect()
            }
        }
    }
}

enum SchurFactor {
    Cholesky(DenseCholesky),
    Lu(DenseLu),
}

/// Reusable block factorization of a saddle operator. The Schur complement
/// `B A^-1 B^T + m m^T` with `m = M_S 1` is regular on the full pressure
/// space and its solutions have zero mean whenever the data are compatible.
pub struct SaddleFactorization {
    velocity: VelocityFactor,
    b: CsrMatrix,
    bt: CsrMatrix,
    schur: SchurFactor,
    schur_dense: Vec<Vec<f64>>,
    mean: Vec<f64>,
    a: VelocityBlock,
    surface_mass: CsrMatrix,
}

const SCHUR_BLOCK: usize = 32;

impl SaddleFactorization {
    pub fn new(sys: &SaddleSystem) -> Result<Self> {
        let velocity = VelocityFactor::new(&sys.a)?;
        let b = sys.b.clone();
        let bt = b.transpose();
        let nq = b.nrows();
        let nu = b.ncols();
        let mean = sys.mean_vector();
        let mut schur = vec![vec![0.0; nq]; nq];
        for start in (0..nq).step_by(SCHUR_BLOCK) {
            let end = (start + SCHUR_BLOCK).min(nq);
            let cols: Vec<Vec<f64>> = (start..end)
                .map(|j| {
                    let mut e = vec![0.0; nq];
                    e[j] = 1.0;
                    let c = bt.mul_vec(&e);
                    debug_assert_eq!(c.len(), nu);
                    c
                })
                .collect();
            let sol = velocity.solve_many(&cols);
            for (k, y) in sol.iter().enumerate() {
                let by = b.mul_vec(y);
                for i in 0..nq {
                    schur[i][start + k] = by[i];
                }
            }
        }
        for i in 0..nq {
            for j in 0..nq {
                schur[i][j] += mean[i] * mean[j];
            }
        }
        let symmetric = sys.a.is_symmetric();
        let factor = if symmetric {
            // Symmetrize roundoff before the Cholesky factorization.
            let sym: Vec<Vec<f64>> = (0..nq).map(|i| (0..nq).map(|j| 0.5 * (schur[i][j] + schur[j][i])).collect()).collect();
            SchurFactor::Cholesky(DenseCholesky::new(&sym).map_err(|_| {
                Error::SingularSystem("Schur complement is not positive definite beyond the mean mode".into())
            })?)
        } else {
            SchurFactor::Lu(DenseLu::new(&schur))
        };
        Ok(Self {
            velocity,
            b,
            bt,
            schur: factor,
            schur_dense: schur,
            mean,
            a: sys.a.clone(),
            surface_mass: sys.surface_mass.clone(),
        })
    }

    pub fn dim_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn dim_p(&self) -> usize {
        self.b.nrows()
    }

    /// Dense `B A^-1 B^T + m m^T`.
    pub fn schur(&self) -> &[Vec<f64>] {
        &self.schur_dense
    }

    pub fn mean_vector(&self) -> &[f64] {
        &self.mean
    }

    pub fn schur_solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.schur {
            SchurFactor::Cholesky(c) => c.solve(r),
            SchurFactor::Lu(l) => l.solve(r),
        }
    }

    pub fn velocity_solve(&self, f: &[f64]) -> Vec<f64> {
        self.velocity.solve_many(&[f.to_vec()]).pop().expect("one column")
    }

    fn solve_once(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let y = self.velocity_solve(f);
        let r = sub(&self.b.mul_vec(&y), g);
        let p = self.schur_solve(&r);
        let mut rhs = f.to_vec();
        axpy(-1.0, &self.bt.mul_vec(&p), &mut rhs);
        (self.velocity_solve(&rhs), p)
    }

    /// Solves with a few steps of iterative refinement.
    pub fn solve(&self, f: &[f64], g: &[f64], tol: f64) -> Result<SaddleSolution> {
        let (mut u, mut p) = self.solve_once(f, g);
        let mut stats = SaddleStats { iterations: 1, ..Default::default() };
        for it in 0..4 {
            let (ru_abs, rp_abs) = self.raw_residuals(&u, &p, f, g);
            stats.residual_u = norm(&ru_abs) / norm(f).max(f64::MIN_POSITIVE);
            stats.residual_p = norm(&rp_abs) / norm(&u).max(1.0);
            if norm(f) == 0.0 {
                stats.residual_u = norm(&ru_abs);
            }
            if stats.residual_u <= tol && stats.residual_p <= tol {
                break;
            }
            if it == 3 {
                return Err(Error::SolverDiverged {
                    iterations: stats.iterations,
                    residual: stats.residual_u.max(stats.residual_p),
                });
            }
            let (du, dp) = self.solve_once(&ru_abs, &rp_abs);
            axpy(1.0, &du, &mut u);
            axpy(1.0, &dp, &mut p);
            stats.iterations += 1;
        }
        project_mean(&self.surface_mass, &mut p);
        Ok(SaddleSolution { u, p, stats })
    }

    /// `(f - A u - B^T p, g - B u)`.
    fn raw_residuals(&self, u: &[f64], p: &[f64], f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r = self.a.mul_vec(u);
        axpy(1.0, &self.bt.mul_vec(p), &mut r);
        (sub(f, &r), sub(g, &self.b.mul_vec(u)))
    }
}

fn project_mean(surface_mass: &CsrMatrix, p: &mut [f64]) {
    let ones = vec![1.0; p.len()];
    let m = surface_mass.mul_vec(&ones);
    let area: f64 = m.iter().sum();
    let mean = dot(&m, p) / area;
    for v in p.iter_mut() {
        *v -= mean;
    }
}

/// Inner SPD (or nonsymmetric) velocity solves for the iterative paths.
struct InnerSolver<'a> {
    a: &'a CsrMatrix,
    symmetric: bool,
    jacobi: Jacobi,
    ilu: Option<Ilu0>,
    tol: f64,
    max_iter: usize,
}

impl<'a> InnerSolver<'a> {
    fn new(a: &'a CsrMatrix, tol: f64) -> Result<Self> {
        let symmetric = a.asymmetry() <= 1e-13;
        let ilu = if symmetric { None } else { Some(Ilu0::new(a)?) };
        Ok(Self { a, symmetric, jacobi: Jacobi::new(a), ilu, tol, max_iter: 20 * a.nrows().max(100) })
    }

    fn solve(&self, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        let (x, _) = if self.symmetric {
            cg(self.a, b, Some(x0), &self.jacobi, self.tol, self.max_iter)?
        } else {
            gmres(self.a, b, Some(x0), self.ilu.as_ref().expect("ilu"), self.tol, 50, self.max_iter)?
        };
        Ok(x)
    }
}

fn uzawa_loop(
    sys: &SaddleSystem,
    a: &CsrMatrix,
    rhs_u: &[f64],
    metric: &dyn Fn(&[f64]) -> Vec<f64>,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<SaddleSolution> {
    let nq = sys.b.nrows();
    let inner = InnerSolver::new(a, (cfg.tol * 1e-3).max(1e-15))?;
    let bt = sys.b.transpose();
    let mut p = vec![0.0; nq];
    let mut u = vec![0.0; sys.b.ncols()];
    let mut last_step = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let mut f = rhs_u.to_vec();
        axpy(-1.0, &bt.mul_vec(&p), &mut f);
        u = inner.solve(&f, &u)?;
        let r = sub(&sys.b.mul_vec(&u), &sys.rhs_p);
        let old = p.clone();
        axpy(rho, &metric(&r), &mut p);
        project_mean(&sys.surface_mass, &mut p);
        let step = norm(&sub(&p, &old));
        // Remaining pressure error estimated from the observed contraction.
        let q = (step / last_step).min(0.999);
        last_step = step;
        let constraint = norm(&r) / norm(&u).max(1.0);
        let remaining = step * q / (1.0 - q) / norm(&p).max(1.0);
        if constraint <= cfg.tol && remaining <= 0.5 * cfg.tol {
            let mut f = rhs_u.to_vec();
            axpy(-1.0, &bt.mul_vec(&p), &mut f);
            u = inner.solve(&f, &u)?;
            let (ru, rp) = sys.residuals(&u, &p);
            return Ok(SaddleSolution { u, p, stats: SaddleStats { iterations: it, residual_u: ru, residual_p: rp } });
        }
    }
    let (ru, rp) = sys.residuals(&u, &p);
    Err(Error::SolverDiverged { iterations: cfg.max_iter, residual: ru.max(rp) })
}

/// Solves a saddle system with the configured method.
pub fn solve_saddle(sys: &SaddleSystem, cfg: &SolverConfig) -> Result<SaddleSolution> {
    cfg.validate()?;
    if norm(&sys.rhs_u) == 0.0 && norm(&sys.rhs_p) == 0.0 {
        return Ok(SaddleSolution {
            u: vec![0.0; sys.b.ncols()],
            p: vec![0.0; sys.b.nrows()],
            stats: SaddleStats::default(),
        });
    }
    match cfg.method {
        SaddleMethod::MonolithicDirect => SaddleFactorization::new(sys)?.solve(&sys.rhs_u, &sys.rhs_p, cfg.tol),
        SaddleMethod::Uzawa { rho } => {
            let w = DenseCholesky::new(&sys.surface_mass.to_dense())?;
            let a = sys.a.to_full();
            uzawa_loop(sys, &a, &sys.rhs_u, &|r| w.solve(r), rho, cfg)
        }
        SaddleMethod::AugmentedLagrangian { gamma, rho } => {
            let lumped: Vec<f64> = sys.surface_mass.mul_vec(&vec![1.0; sys.b.nrows()]);
            let inv: Vec<f64> = lumped.iter().map(|v| 1.0 / v).collect();
            let bt = sys.b.transpose();
            let mut scaled = sys.b.clone();
            {
                let rp = scaled.row_ptr().to_vec();
                let vals = scaled.values_mut();
                for r in 0..rp.len() - 1 {
                    for v in &mut vals[rp[r]..rp[r + 1]] {
                        *v *= gamma * inv[r];
                    }
                }
            }
            let a = sys.a.to_full().linear_combination(1.0, &bt.matmul(&scaled), 1.0);
            let mut rhs = sys.rhs_u.clone();
            axpy(1.0, &bt.mul_vec(&scaled_vec(&sys.rhs_p, &inv, gamma)), &mut rhs);
            uzawa_loop(sys, &a, &rhs, &|r| scaled_vec(r, &inv, 1.0), rho, cfg)
        }
    }
}

fn scaled_vec(r: &[f64], inv: &[f64], a: f64) -> Vec<f64> {
    r.iter().zip(inv).map(|(x, w)| a * x * w).collect()
}

/// `2 / lambda_max` of `M_S^-1 B A^-1 B^T`, the Uzawa step limit.
pub fn uzawa_rho_bound(sys: &SaddleSystem) -> Result<f64> {
    let f = SaddleFactorization::new(sys)?;
    let w = DenseCholesky::new(&sys.surface_mass.to_dense())?;
    let nq = f.dim_p();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut x: Vec<f64> = (0..nq).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        project_mean(&sys.surface_mass, &mut x);
        let s = &f.schur_dense;
        let sx: Vec<f64> = (0..nq).map(|i| dot(&s[i], &x) - f.mean[i] * dot(&f.mean, &x)).collect();
        let y = w.solve(&sx);
        let mx = sys.surface_mass.mul_vec(&x);
        let next = dot(&sx, &x) / dot(&mx, &x);
        let n = norm(&y);
        x = y.iter().map(|v| v / n).collect();
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(2.0 / lambda)
}

/// Hydrostatic Stokes projection `(I_h v, J_h q)`:
/// `(grad(I v - v), grad w) - (J q - q, div_x <w>)_S = 0`, `(div_x <I v>, r)_S = 0`.
///
/// The right side is supplied as the duals `(grad v, grad w) - (q, div_x <w>)_S`.
pub fn stokes_projector_duals(xh: &Arc<FeSpace>, qh: &Arc<FeSpace>, duals: Vec<f64>, cfg: &SolverConfig) -> Result<(DiscreteField, DiscreteField, SaddleStats)> {
    let a = VelocityBlock::Blocked(scalar_stiffness(xh));
    let b = assemble_divergence(qh, xh)?;
    let sys = SaddleSystem::new(xh, qh, a, &b, duals, vec![0.0; qh.n_dofs()]);
    let sol = solve_saddle(&sys, cfg)?;
    Ok((
        DiscreteField::from_coeffs(xh, sol.u, 0.0)?,
        DiscreteField::from_coeffs(qh, sol.p, 0.0)?,
        sol.stats,
    ))
}

/// Duals of an analytic pair: `grad_v(p)[c]` is the gradient of component `c`.
pub fn stokes_duals(
    xh: &FeSpace,
    grad_v: &(dyn Fn([f64; 3]) -> [[f64; 3]; 2] + Sync),
    q: &(dyn Fn([f64; 2]) -> f64 + Sync),
) -> Vec<f64> {
    use rayon::prelude::*;
    let n = xh.n_local();
    let ns = xh.n_scalar();
    let degree = 2 * xh.kind.degree() + 2;
    let locals: Vec<Vec<f64>> = (0..xh.n_cells())
        .into_par_iter()
        .map(|cell| {
            let ev = xh.eval_cell(cell, degree);
            let mut out = vec![0.0; 2 * n];
            for k in 0..ev.n_points() {
                let p = ev.points[k];
                let g = grad_v(p);
                let qv = q([p[0], p[1]]);
                let w = ev.weights[k];
                for i in 0..n {
                    let gi = ev.grad(k, i);
                    for c in 0..2 {
                        out[c * n + i] += w * (g[c][0] * gi[0] + g[c][1] * gi[1] + g[c][2] * gi[2] - qv * gi[c]);
                    }
                }
            }
            out
        })
        .collect();
    let mut b = vec![0.0; xh.n_dofs()];
    for (cell, out) in locals.iter().enumerate() {
        for (i, &d) in xh.cell_dofs(cell).iter().enumerate() {
            b[d] += out[i];
            b[ns + d] += out[n + i];
        }
    }
    b
}

/// Projector applied to analytic data.
pub fn stokes_projector(
    xh: &Arc<FeSpace>,
    qh: &Arc<FeSpace>,
    grad_v: &(dyn Fn([f64; 3]) -> [[f64; 3]; 2] + Sync),
    q: &(dyn Fn([f64; 2]) -> f64 + Sync),
    cfg: &SolverConfig,
) -> Result<(DiscreteField, DiscreteField)> {
    let duals = stokes_duals(xh, grad_v, q);
    let (u, p, _) = stokes_projector_duals(xh, qh, duals, cfg)?;
    Ok((u, p))
}

/// Projector applied to a discrete velocity and pressure.
pub fn stokes_projector_discrete(v: &DiscreteField, q: &DiscreteField, cfg: &SolverConfig) -> Result<(DiscreteField, DiscreteField)> {
    let xh = &v.space;
    let k = assemble_stiffness(xh);
    let b = assemble_divergence(&q.space, xh)?;
    let mut duals = k.mul_vec(&v.coeffs);
    axpy(-1.0, &b.mul_transpose_vec(&q.coeffs), &mut duals);
    let (u, p, _) = stokes_projector_duals(xh, &q.space, duals, cfg)?;
    Ok((u, p))
}

/// z-projection onto the vertical space: `(dz(K v3 - v3), dz y) = 0`.
pub fn yh_projector(yh: &Arc<FeSpace>, dz_v3: &(dyn Fn([f64; 3]) -> f64 + Sync), tol: f64) -> Result<DiscreteField> {
    let degree = 2 * yh.kind.degree() + 2;
    let mut b = vec![0.0; yh.n_dofs()];
    for cell in 0..yh.n_cells() {
        let ev = yh.eval_cell(cell, degree);
        for k in 0..ev.n_points() {
            let d = dz_v3(ev.points[k]) * ev.weights[k];
            for (i, &dof) in yh.cell_dofs(cell).iter().enumerate() {
                b[dof] += d * ev.grad(k, i)[2];
            }
        }
    }
    yh.apply_mask(&mut b);
    let a = assemble_zstiffness(yh).eliminate_symmetric(&yh.dirichlet_mask);
    if norm(&b) == 0.0 {
        return Ok(DiscreteField::zeros(yh, 0.0));
    }
    let y = DirectSolver::cholesky(&a)?.solve(&b);
    let res = norm(&sub(&a.mul_vec(&y), &b)) / norm(&b);
    if res > tol {
        return Err(Error::SolverDiverged { iterations: 1, residual: res });
    }
    DiscreteField::from_coeffs(yh, y, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfSup {
    pub beta: f64,
    pub iterations: usize,
}

/// Discrete inf-sup constant with the full H1 norm on velocities:
/// `beta^2` is the smallest eigenvalue of `B (K + M)^-1 B^T q = lambda M_S q`
/// on zero-mean pressures, found by inverse iteration with the constant
/// mode deflated.
pub fn compute_infsup(xh: &FeSpace, qh: &FeSpace, seed: u64) -> Result<InfSup> {
    let sys = infsup_system(xh, qh)?;
    let f = SaddleFactorization::new(&sys)?;
    let nq = f.dim_p();
    let ms = &sys.surface_mass;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..nq).map(|_| rng.random_range(-1.0..1.0)).collect();
    project_mean(ms, &mut x);
    let mut lambda = f64::INFINITY;
    let max_iter = 20_000;
    for it in 1..=max_iter {
        let y = f.schur_solve(&ms.mul_vec(&x));
        let mut y = y;
        project_mean(ms, &mut y);
        let my = ms.mul_vec(&y);
        let scale = dot(&my, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= scale);
        // Rayleigh quotient of the deflated operator.
        let s = f.schur();
        let sy: Vec<f64> = (0..nq).map(|i| dot(&s[i], &y)).collect();
        let next = dot(&sy, &y);
        let mut resid = sy.clone();
        axpy(-next, &ms.mul_vec(&y), &mut resid);
        x = y;
        if (next - lambda).abs() <= 1e-13 * next && norm(&resid) <= 1e-8 * next.max(1e-300) * norm(&x).max(1.0) {
            return Ok(InfSup { beta: next.max(0.0).sqrt(), iterations: it });
        }
        lambda = next;
    }
    Err(Error::EigSolverStalled(max_iter))
}

/// Saddle system with velocity block `K + M` used by the inf-sup computation.
pub fn infsup_system(xh: &FeSpace, qh: &FeSpace) -> Result<SaddleSystem> {
    let a = scalar_stiffness(xh).linear_combination(1.0, &scalar_mass(xh), 1.0);
    let b = assemble_divergence(qh, xh)?;
    Ok(SaddleSystem::new(xh, qh, VelocityBlock::Blocked(a), &b, vec![0.0; xh.n_dofs()], vec![0.0; qh.n_dofs()]))
}

/// Full velocity mass for callers that need the vector operator.
pub fn velocity_mass(xh: &FeSpace) -> CsrMatrix {
    assemble_mass(xh)
}
