//! Vertical velocity from the horizontal field.
//!
//! Two routes are provided: the z-elliptic projection onto the vertical
//! space, and the exact column integral `u3(x, z) = int_z^0 div_x u(x, s) ds`
//! evaluated lazily wherever it is needed.
//!
//! The integral route exploits the column structure. Every vertical line
//! through a prism crosses its three tetrahedra in a fixed order with
//! interface heights affine in `x`, so on each tetrahedron `u3` is a
//! polynomial of the velocity degree. Values at each layer interface are kept
//! on a Lagrange lattice of the column triangle, and a query only integrates
//! through its own prism.

use std::sync::Arc;

use crate::assembly::{assemble_zcoupling, assemble_zstiffness};
use crate::error::{Error, Result};
use crate::fe_spaces::{ref_tab, tet_basis, CellEval, DiscreteField, ElementKind, FeSpace, TetGeometry};
use crate::linalg::norm;
use crate::mesh::ColumnMesh;
use crate::quadrature::gauss_legendre;
use crate::solvers::DirectSolver;
use crate::sparse::CsrMatrix;

/// Vertical velocity with value and z-derivative available at any point.
#[derive(Debug, Clone)]
pub enum VerticalEvaluator {
    /// A member of the vertical space.
    Projected(DiscreteField),
    /// The column integral of a horizontal velocity.
    Integral(Arc<IntegralEvaluator>),
}

impl VerticalEvaluator {
    /// `(u3, dz u3)` at a barycentric point of a cell.
    pub fn eval(&self, cell: usize, l: [f64; 4]) -> Result<(f64, f64)> {
        match self {
            Self::Projected(f) => {
                let geom = f.space.geometry(cell);
                let (vals, grads) = f.space.basis_at(cell, l, &geom);
                let dofs = f.space.cell_dofs(cell);
                let mut out = (0.0, 0.0);
                for (i, &d) in dofs.iter().enumerate() {
                    out.0 += vals[i] * f.coeffs[d];
                    out.1 += grads[i][2] * f.coeffs[d];
                }
                Ok(out)
            }
            Self::Integral(ev) => ev.evaluate(cell, l),
        }
    }

    /// `(u3, dz u3)` at every point of a cell evaluation.
    pub fn eval_cell(&self, cell: usize, ev: &CellEval) -> Result<Vec<(f64, f64)>> {
        match self {
            Self::Projected(f) => {
                let tab = ref_tab(f.space.kind, ev.degree);
                let dofs = f.space.cell_dofs(cell);
                let n = tab.n_local;
                let mut out = Vec::with_capacity(ev.n_points());
                for q in 0..ev.n_points() {
                    let (mut v, mut dz) = (0.0, 0.0);
                    for (i, &d) in dofs.iter().enumerate() {
                        let c = f.coeffs[d];
                        v += tab.values[q * n + i] * c;
                        dz += ev.geometry.gradient(&tab.dlam[q * n + i])[2] * c;
                    }
                    out.push((v, dz));
                }
                Ok(out)
            }
            Self::Integral(e) => Ok(e.evaluate_rule(cell, ev.degree)),
        }
    }

    pub fn mesh(&self) -> &Arc<ColumnMesh> {
        match self {
            Self::Projected(f) => f.space.mesh(),
            Self::Integral(e) => &e.mesh,
        }
    }
}

/// Cached z-stiffness factorization and coupling for repeated projected solves.
pub struct VerticalSolver {
    pub yh: Arc<FeSpace>,
    coupling: CsrMatrix,
    stiffness: CsrMatrix,
    factor: DirectSolver,
}

impl VerticalSolver {
    pub fn new(yh: &Arc<FeSpace>, xh: &FeSpace) -> Result<Self> {
        let stiffness = assemble_zstiffness(yh).eliminate_symmetric(&yh.dirichlet_mask);
        let factor = DirectSolver::cholesky(&stiffness)?;
        let coupling = assemble_zcoupling(yh, xh)?;
        Ok(Self { yh: yh.clone(), coupling, stiffness, factor })
    }

    /// Right side `-(div_x u, dz y)` with masked rows cleared.
    pub fn rhs(&self, u: &DiscreteField) -> Vec<f64> {
        let mut b = self.coupling.mul_vec(&u.coeffs);
        self.yh.apply_mask(&mut b);
        b
    }

    /// Solves for the projected vertical velocity; fails if the relative
    /// residual exceeds `tol`.
    pub fn solve(&self, u: &DiscreteField, tol: f64) -> Result<DiscreteField> {
        let b = self.rhs(u);
        self.solve_rhs(b, u.time, tol)
    }

    pub fn solve_rhs(&self, b: Vec<f64>, time: f64, tol: f64) -> Result<DiscreteField> {
        let bn = norm(&b);
        if bn == 0.0 {
            return Ok(DiscreteField::zeros(&self.yh, time));
        }
        let y = self.factor.solve(&b);
        let r = crate::linalg::sub(&self.stiffness.mul_vec(&y), &b);
        let rel = norm(&r) / bn;
        if rel > tol {
            return Err(Error::SolverDiverged { iterations: 1, residual: rel });
        }
        DiscreteField::from_coeffs(&self.yh, y, time)
    }
}

/// Sub-step 0 of the projected variant.
pub fn solve_substep0(u: &DiscreteField, yh: &Arc<FeSpace>, tol: f64) -> Result<VerticalEvaluator> {
    let solver = VerticalSolver::new(yh, &u.space)?;
    Ok(VerticalEvaluator::Projected(solver.solve(u, tol)?))
}

/// Barycentric points of the degree-`q` Lagrange lattice on a triangle.
fn lattice_points(q: usize) -> Vec<[usize; 3]> {
    let mut pts = Vec::new();
    for i in (0..=q).rev() {
        for j in (0..=(q - i)).rev() {
            pts.push([i, j, q - i - j]);
        }
    }
    pts
}

/// Lagrange basis of the lattice at barycentric point `mu`.
fn lattice_basis(q: usize, pts: &[[usize; 3]], mu: [f64; 3], out: &mut [f64]) {
    let qf = q as f64;
    let factor = |idx: usize, m: f64| -> f64 {
        let mut v = 1.0;
        for a in 0..idx {
            v *= (qf * m - a as f64) / (idx - a) as f64;
        }
        v
    };
    for (o, p) in out.iter_mut().zip(pts) {
        *o = factor(p[0], mu[0]) * factor(p[1], mu[1]) * factor(p[2], mu[2]);
    }
}

/// Multi-indices of the degree-`q` Lagrange lattice on a tetrahedron.
fn tet_lattice_points(q: usize) -> Vec<[usize; 4]> {
    let mut pts = Vec::new();
    for i in (0..=q).rev() {
        for j in (0..=(q - i)).rev() {
            for k in (0..=(q - i - j)).rev() {
                pts.push([i, j, k, q - i - j - k]);
            }
        }
    }
    pts
}

fn tet_lattice_basis(q: usize, pts: &[[usize; 4]], l: [f64; 4], out: &mut [f64]) {
    let qf = q as f64;
    let factor = |idx: usize, m: f64| -> f64 {
        let mut v = 1.0;
        for a in 0..idx {
            v *= (qf * m - a as f64) / (idx - a) as f64;
        }
        v
    };
    for (o, p) in out.iter_mut().zip(pts) {
        *o = (0..4).map(|a| factor(p[a], l[a])).product();
    }
}

/// Lattice basis of degree `q` tabulated on the tet rule of `degree`.
fn lattice_table(q: usize, degree: usize) -> &'static [f64] {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static [f64]>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("lattice cache poisoned");
    guard.entry((q, degree)).or_insert_with(|| {
        let pts = tet_lattice_points(q);
        let rule = crate::quadrature::cached_tet_rule(degree);
        let n = pts.len();
        let mut tab = vec![0.0; rule.points.len() * n];
        for (i, l) in rule.points.iter().enumerate() {
            tet_lattice_basis(q, &pts, *l, &mut tab[i * n..(i + 1) * n]);
        }
        Box::leak(tab.into_boxed_slice())
    })
}

/// Column integral of `div_x u` for a horizontal velocity field.
#[derive(Debug)]
pub struct IntegralEvaluator {
    pub source: DiscreteField,
    pub mesh: Arc<ColumnMesh>,
    geometry: Vec<TetGeometry>,
    lattice: Vec<[usize; 3]>,
    degree: usize,
    /// `top[(column * (L + 1) + level) * n_lattice + j]`
    top: Vec<f64>,
    gl: (Vec<f64>, Vec<f64>),
    /// Values and z-derivatives at the degree-`degree` lattice of every tet,
    /// `nodal[tet * n_tet_lattice + j]`. Inside a tet the column integral is
    /// a polynomial of that degree, so interpolation reproduces it.
    nodal: Vec<(f64, f64)>,
    tet_lattice: Vec<[usize; 4]>,
}

const CLIP_TOL: f64 = 1e-12;

impl IntegralEvaluator {
    pub fn new(source: &DiscreteField) -> Result<Self> {
        let mesh = source.space.mesh().clone();
        let degree = source.space.kind.degree();
        let lattice = lattice_points(degree);
        let geometry: Vec<TetGeometry> = (0..mesh.tets.len()).map(|t| source.space.geometry(t)).collect();
        let mut ev = Self {
            source: source.clone(),
            mesh: mesh.clone(),
            geometry,
            lattice,
            degree,
            top: Vec::new(),
            gl: gauss_legendre(degree / 2 + 1),
            nodal: Vec::new(),
            tet_lattice: tet_lattice_points(degree),
        };
        let layers = mesh.layer_count();
        let nl = ev.lattice.len();
        let nt = mesh.surface.triangles.len();
        let tops: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            (0..nt)
                .into_par_iter()
                .map(|c| -> Result<Vec<f64>> {
                    let tri = mesh.surface.triangles[c].map(|n| mesh.surface.nodes[n]);
                    let mut col = vec![0.0; (layers + 1) * nl];
                    for (j, p) in ev.lattice.iter().enumerate() {
                        let qf = degree as f64;
                        let mu = p.map(|k| k as f64 / qf);
                        let x = [
                            mu[0] * tri[0][0] + mu[1] * tri[1][0] + mu[2] * tri[2][0],
                            mu[0] * tri[0][1] + mu[1] * tri[1][1] + mu[2] * tri[2][1],
                        ];
                        for l in 0..layers {
                            let (_, _, full) = ev.prism_integral(c, l, x, f64::NEG_INFINITY)?;
                            col[(l + 1) * nl + j] = col[l * nl + j] + full;
                        }
                    }
                    Ok(col)
                })
                .collect::<Result<_>>()?
        };
        ev.top = tops.concat();
        let q = degree as f64;
        let nodal: Vec<Vec<(f64, f64)>> = {
            use rayon::prelude::*;
            (0..mesh.tets.len())
                .into_par_iter()
                .map(|t| ev.tet_lattice.iter().map(|a| ev.evaluate_exact(t, a.map(|k| k as f64 / q))).collect())
                .collect::<Result<_>>()?
        };
        ev.nodal = nodal.concat();
        Ok(ev)
    }

    /// Heights `(lo, hi)` where the vertical line at `x` crosses tet `t`.
    fn clip(&self, t: usize, x: [f64; 2]) -> Option<(f64, f64)> {
        let g = &self.geometry[t];
        let alpha = g.barycentric([x[0], x[1], 0.0]);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..4 {
            let beta = g.grad_lambda[a][2];
            let scale = g.grad_lambda[a].iter().map(|v| v.abs()).fold(0.0, f64::max);
            if beta.abs() <= 1e-12 * scale {
                if alpha[a] < -CLIP_TOL {
                    return None;
                }
            } else if beta > 0.0 {
                lo = lo.max(-alpha[a] / beta);
            } else {
                hi = hi.min(-alpha[a] / beta);
            }
        }
        (hi > lo).then_some((lo, hi))
    }

    fn divx(&self, t: usize, l: [f64; 4]) -> f64 {
        let kind = self.source.space.kind;
        let n = kind.n_local();
        let mut vals = [0.0; 10];
        let mut dlam = [[0.0; 4]; 10];
        tet_basis(kind, l, &mut vals[..n], &mut dlam[..n]);
        let g = &self.geometry[t];
        let dofs = self.source.space.cell_dofs(t);
        let ns = self.source.space.n_scalar();
        let mut div = 0.0;
        for i in 0..n {
            let grad = g.gradient(&dlam[i]);
            div += grad[0] * self.source.coeffs[dofs[i]] + grad[1] * self.source.coeffs[ns + dofs[i]];
        }
        div
    }

    /// `int div_x u ds` over `[a, b]` along the vertical line at `x` inside tet `t`.
    fn segment(&self, t: usize, x: [f64; 2], a: f64, b: f64) -> f64 {
        let g = &self.geometry[t];
        let (nodes, weights) = &self.gl;
        let mut s = 0.0;
        for (node, w) in nodes.iter().zip(weights) {
            let z = a + (b - a) * node;
            let mut l = g.barycentric([x[0], x[1], z]);
            for v in l.iter_mut() {
                *v = v.max(0.0);
            }
            s += w * self.divx(t, l);
        }
        s * (b - a)
    }

    /// Integral over the part of prism `(column, layer)` above `z`, with
    /// the prism's bottom and top heights at `x`.
    fn prism_integral(&self, column: usize, layer: usize, x: [f64; 2], z: f64) -> Result<(f64, f64, f64)> {
        let tets = self.mesh.prism(column, layer);
        let mut total = 0.0;
        let mut covered = 0.0;
        let (mut bottom, mut top) = (f64::INFINITY, f64::NEG_INFINITY);
        for &t in tets {
            if let Some((lo, hi)) = self.clip(t, x) {
                bottom = bottom.min(lo);
                top = top.max(hi);
                let a = lo.max(z);
                if hi > a {
                    total += self.segment(t, x, a, hi);
                    covered += hi - a;
                }
            }
        }
        if !(top > bottom) {
            return Err(Error::RayEscape([x[0], x[1], z]));
        }
        let expect = top - z.max(bottom);
        if (covered - expect.max(0.0)).abs() > 1e-9 * (top - bottom) {
            return Err(Error::RayEscape([x[0], x[1], z]));
        }
        Ok((bottom, top, total))
    }

    /// `(u3, dz u3)` at a barycentric point of tet `cell`, interpolated
    /// from the tet lattice.
    pub fn evaluate(&self, cell: usize, l: [f64; 4]) -> Result<(f64, f64)> {
        if l.iter().any(|&v| v < -1e-10) {
            return Err(Error::EvaluatorDomain(format!("point {l:?} outside tet {cell}")));
        }
        let n = self.tet_lattice.len();
        let mut basis = [0.0; 35];
        tet_lattice_basis(self.degree, &self.tet_lattice, l, &mut basis[..n]);
        Ok(self.combine(cell, &basis[..n]))
    }

    fn combine(&self, cell: usize, basis: &[f64]) -> (f64, f64) {
        let n = basis.len();
        let nodal = &self.nodal[cell * n..(cell + 1) * n];
        let mut out = (0.0, 0.0);
        for (b, v) in basis.iter().zip(nodal) {
            out.0 += b * v.0;
            out.1 += b * v.1;
        }
        out
    }

    /// Values at every point of a reference rule.
    pub fn evaluate_rule(&self, cell: usize, rule_degree: usize) -> Vec<(f64, f64)> {
        let tab = lattice_table(self.degree, rule_degree);
        let n = self.tet_lattice.len();
        tab.chunks(n).map(|b| self.combine(cell, b)).collect()
    }

    /// `(u3, dz u3)` by direct integration along the vertical line.
    pub fn evaluate_exact(&self, cell: usize, l: [f64; 4]) -> Result<(f64, f64)> {
        if l.iter().any(|&v| v < -1e-10) {
            return Err(Error::EvaluatorDomain(format!("point {l:?} outside tet {cell}")));
        }
        let p = self.geometry[cell].point(&l);
        let x = [p[0], p[1]];
        let column = self.mesh.column_of_tet[cell];
        let layer = self.mesh.layer_of_tet[cell];
        let mu = self.mesh.surface.barycentric(column, x);
        let nl = self.lattice.len();
        let mut basis = [0.0; 15];
        lattice_basis(self.degree, &self.lattice, mu, &mut basis[..nl]);
        let base = (column * (self.mesh.layer_count() + 1) + layer) * nl;
        let top: f64 = (0..nl).map(|j| basis[j] * self.top[base + j]).sum();
        let (_, _, inside) = self.prism_integral(column, layer, x, p[2])?;
        Ok((top + inside, -self.divx(cell, l)))
    }

    /// Value at an arbitrary point given its containing tet.
    pub fn evaluate_point(&self, cell: usize, p: [f64; 3]) -> Result<(f64, f64)> {
        let mut l = self.geometry[cell].barycentric(p);
        if l.iter().any(|&v| v < -1e-9) {
            return Err(Error::EvaluatorDomain(format!("point {p:?} outside tet {cell}")));
        }
        for v in l.iter_mut() {
            *v = v.max(0.0);
        }
        self.evaluate(cell, l)
    }

    /// Slow reference: integrates from `z` to the surface prism by prism.
    pub fn evaluate_direct(&self, column: usize, x: [f64; 2], z: f64) -> Result<f64> {
        let mut s = 0.0;
        for layer in 0..self.mesh.layer_count() {
            let (bottom, _, part) = self.prism_integral(column, layer, x, z)?;
            s += part;
            if bottom <= z {
                break;
            }
        }
        Ok(s)
    }

    pub fn kind(&self) -> ElementKind {
        self.source.space.kind
    }
}

/// Sub-step 0 of the integral variant.
pub fn integral_evaluator(u: &DiscreteField) -> Result<VerticalEvaluator> {
    Ok(VerticalEvaluator::Integral(Arc::new(IntegralEvaluator::new(u)?)))
}
