//! Linear solvers: preconditioned CG and GMRES, ILU(0), and cached sparse
//! direct factorizations.

use faer::linalg::solvers::Solve;
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IterStats {
    pub iterations: usize,
    pub residual: f64,
}

pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Self {
        let inv_diag = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect()
    }
}

/// Incomplete LU with zero fill on the pattern of `a`.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for (i, d) in diag_pos.iter_mut().enumerate() {
            *d = lu
                .find(i, i)
                .ok_or_else(|| Error::SingularSystem(format!("ILU(0): missing diagonal in row {i}")))?;
        }
        let row_ptr = lu.row_ptr().to_vec();
        let col_idx = lu.col_idx().to_vec();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = k;
            }
            for kk in row_ptr[i]..row_ptr[i + 1] {
                let k = col_idx[kk];
                if k >= i {
                    break;
                }
                let vals = lu.values_mut();
                let pivot = vals[diag_pos[k]];
                let lik = vals[kk] / pivot;
                vals[kk] = lik;
                for jj in (diag_pos[k] + 1)..row_ptr[k + 1] {
                    let j = col_idx[jj];
                    let p = pos[j];
                    if p != usize::MAX {
                        vals[p] -= lik * vals[jj];
                    }
                }
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = usize::MAX;
            }
            if lu.values()[diag_pos[i]] == 0.0 {
                return Err(Error::SingularSystem(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Self { lu, diag_pos })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let rp = self.lu.row_ptr();
        let ci = self.lu.col_idx();
        let v = self.lu.values();
        let mut y = r.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in rp[i]..self.diag_pos[i] {
                s -= v[k] * y[ci[k]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (self.diag_pos[i] + 1)..rp[i + 1] {
                s -= v[k] * y[ci[k]];
            }
            y[i] = s / v[self.diag_pos[i]];
        }
        y
    }
}

/// Preconditioned conjugate gradients for SPD systems. Converged when
/// `|b - Ax| <= tol |b|`.
pub fn cg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], IterStats::default()));
    }
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = precond.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm(&r);
    let mut it = 0;
    while res > tol * bnorm {
        if it == max_iter {
            return Err(Error::SolverDiverged { iterations: it, residual: res / bnorm });
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem("CG: matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        z = precond.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        res = norm(&r);
        it += 1;
    }
    Ok((x, IterStats { iterations: it, residual: res / bnorm }))
}

/// Right-preconditioned restarted GMRES. Converged when `|b - Ax| <= tol |b|`
/// measured on the true residual.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], IterStats::default()));
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut total = 0;
    loop {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= tol * bnorm {
            return Ok((x, IterStats { iterations: total, residual: beta / bnorm }));
        }
        if total >= max_iter {
            return Err(Error::SolverDiverged { iterations: total, residual: beta / bnorm });
        }
        let m = restart.max(1);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut k_used = 0;
        for j in 0..m {
            let z = precond.apply(&basis[j]);
            let mut w = a.mul_vec(&z);
            zs.push(z);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[i][j] = hij;
                axpy(-hij, &basis[i], &mut w);
            }
            let hnext = norm(&w);
            h[j + 1][j] = hnext;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                k_used = j;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= 0.1 * tol * bnorm || hnext == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // Back substitution on the k_used x k_used triangle.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in (i + 1)..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (yi, z) in y.iter().zip(&zs) {
            axpy(*yi, z, &mut x);
        }
        if k_used == 0 {
            let ax = a.mul_vec(&x);
            let res = norm(&b.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>());
            return Err(Error::SolverDiverged { iterations: total, residual: res / bnorm });
        }
    }
}

/// A cached sparse direct factorization.
pub enum DirectSolver {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, f64>, usize),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>, usize),
}

impl DirectSolver {
    /// Cholesky factorization of an SPD matrix.
    pub fn cholesky(a: &CsrMatrix) -> Result<Self> {
        faer::set_global_parallelism(Par::Seq);
        let m = a.to_faer()?;
        let llt = m
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self::Cholesky(llt, a.nrows()))
    }

    /// LU factorization with partial pivoting.
    pub fn lu(a: &CsrMatrix) -> Result<Self> {
        faer::set_global_parallelism(Par::Seq);
        let m = a.to_faer()?;
        let lu = m.sp_lu().map_err(|e| Error::SingularSystem(format!("sparse LU failed: {e:?}")))?;
        Ok(Self::Lu(lu, a.nrows()))
    }

    /// Cholesky when the matrix is symmetric and it succeeds, LU otherwise.
    pub fn auto(a: &CsrMatrix) -> Result<Self> {
        if a.asymmetry() <= 1e-13 {
            if let Ok(s) = Self::cholesky(a) {
                return Ok(s);
            }
        }
        Self::lu(a)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Cholesky(_, n) | Self::Lu(_, n) => *n,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_many(&[b.to_vec()]).pop().expect("one column")
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let k = rhs.len();
        let mut x = Mat::<f64>::from_fn(n, k, |i, j| rhs[j][i]);
        match self {
            Self::Cholesky(f, _) => f.solve_in_place(x.as_mut()),
            Self::Lu(f, _) => f.solve_in_place(x.as_mut()),
        }
        (0..k).map(|j| (0..n).map(|i| x[(i, j)]).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64, skew: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0 - skew));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0 + skew));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn cg_solves_spd() {
        let a = laplacian_1d(50, 0.01, 0.0);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let (x, stats) = cg(&a, &b, None, &Jacobi::new(&a), 1e-12, 500).unwrap();
        let r = crate::linalg::sub(&b, &a.mul_vec(&x));
        assert!(norm(&r) <= 1e-12 * norm(&b));
        assert!(stats.iterations <= 50);
    }

    #[test]
    fn gmres_with_ilu_matches_direct() {
        let a = laplacian_1d(60, 0.5, 0.3);
        let b: Vec<f64> = (0..60).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let (x, _) = gmres(&a, &b, None, &ilu, 1e-13, 30, 300).unwrap();
        let xd = DirectSolver::lu(&a).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&xd) {
            assert!((p - q).abs() < 1e-10);
        }
        // Tridiagonal: ILU(0) is exact, so a single iteration suffices.
        assert!(gmres(&a, &b, None, &ilu, 1e-12, 30, 300).unwrap().1.iterations <= 2);
    }

    #[test]
    fn gmres_restarts() {
        let a = laplacian_1d(80, 0.05, 0.2);
        let b = vec![1.0; 80];
        let (x, _) = gmres(&a, &b, None, &Identity, 1e-10, 5, 20000).unwrap();
        let r = crate::linalg::sub(&b, &a.mul_vec(&x));
        assert!(norm(&r) <= 1e-10 * norm(&b));
    }

    #[test]
    fn cholesky_multi_rhs() {
        let a = laplacian_1d(20, 0.1, 0.0);
        let s = DirectSolver::cholesky(&a).unwrap();
        let rhs = vec![vec![1.0; 20], (0..20).map(|i| i as f64).collect()];
        let xs = s.solve_many(&rhs);
        for (x, b) in xs.iter().zip(&rhs) {
            let r = crate::linalg::sub(b, &a.mul_vec(x));
            assert!(norm(&r) < 1e-12 * norm(b).max(1.0));
        }
    }
}
