//! Sparse assembly of the bilinear and trilinear forms and load vectors.
//!
//! Element contributions are computed in parallel and collected in cell
//! order, then scattered sequentially, so the assembled values do not depend
//! on the number of workers.
//!
//! Quadrature degrees are chosen per form so that every integrand is a
//! polynomial integrated exactly on affine cells. For the convection form this
//! is what makes `c(U, v, v) = 0` hold to roundoff.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe_spaces::{surface_cell, CellEval, FeSpace};
use crate::mesh::FaceTag;
use crate::quadrature::cached_tri_rule;
use crate::sparse::CsrMatrix;
use crate::vertical_velocity::VerticalEvaluator;

/// How time-dependent data enter a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DataSampling {
    /// `f(t_{m+1})`.
    Pointwise,
    /// Gauss average of `f` over `[t_m, t_{m+1}]`.
    Averaged { points: usize },
}

struct Local {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Row-major `rows.len() x cols.len()`.
    values: Vec<f64>,
}

fn scatter(nrows: usize, ncols: usize, locals: Vec<Local>) -> CsrMatrix {
    let total: usize = locals.iter().map(|l| l.values.len()).sum();
    let mut triplets = Vec::with_capacity(total);
    for l in &locals {
        let nc = l.cols.len();
        for (i, &r) in l.rows.iter().enumerate() {
            for (j, &c) in l.cols.iter().enumerate() {
                triplets.push((r, c, l.values[i * nc + j]));
            }
        }
    }
    CsrMatrix::from_triplets(nrows, ncols, &triplets)
}

fn cell_loop<F>(n_cells: usize, f: F) -> Result<Vec<Local>>
where
    F: Fn(usize) -> Result<Local> + Sync + Send,
{
    (0..n_cells).into_par_iter().map(f).collect()
}

/// `[[a00 S, a01 S], [a10 S, a11 S]]`, skipping zero blocks.
pub fn blocks(s: &CsrMatrix, coef: [[f64; 2]; 2]) -> CsrMatrix {
    let n = s.nrows();
    let mut triplets = Vec::with_capacity(4 * s.nnz());
    for bi in 0..2 {
        for r in 0..n {
            for bj in 0..2 {
                let a = coef[bi][bj];
                if a == 0.0 {
                    continue;
                }
                for (c, v) in s.row(r) {
                    triplets.push((bi * n + r, bj * n + c, a * v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(2 * n, 2 * s.ncols(), &triplets)
}

/// Block-diagonal copy of a scalar operator for each component.
pub fn vectorize(space: &FeSpace, s: CsrMatrix) -> CsrMatrix {
    if space.components == 1 {
        s
    } else {
        blocks(&s, [[1.0, 0.0], [0.0, 1.0]])
    }
}

fn scalar_form(space: &FeSpace, degree: usize, kernel: impl Fn(&CellEval, usize, usize, usize) -> f64 + Sync + Send) -> CsrMatrix {
    let n = space.n_local();
    let locals = cell_loop(space.n_cells(), |cell| {
        let ev = space.eval_cell(cell, degree);
        let mut values = vec![0.0; n * n];
        for q in 0..ev.n_points() {
            let w = ev.weights[q];
            for i in 0..n {
                for j in 0..n {
                    values[i * n + j] += w * kernel(&ev, q, i, j);
                }
            }
        }
        let dofs = space.cell_dofs(cell).to_vec();
        Ok(Local { rows: dofs.clone(), cols: dofs, values })
    })
    .expect("infallible kernel");
    scatter(space.n_scalar(), space.n_scalar(), locals)
}

pub fn scalar_mass(space: &FeSpace) -> CsrMatrix {
    if space.is_surface() {
        return surface_mass(space);
    }
    scalar_form(space, 2 * space.kind.degree(), |ev, q, i, j| ev.value(q, i) * ev.value(q, j))
}

/// `(u, v)` on the full (vector) space.
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    vectorize(space, scalar_mass(space))
}

pub fn scalar_stiffness(space: &FeSpace) -> CsrMatrix {
    scalar_form(space, 2 * (space.kind.degree() - 1).max(1), |ev, q, i, j| {
        let (a, b) = (ev.grad(q, i), ev.grad(q, j));
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    })
}

/// `(grad u, grad v)`.
pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix {
    vectorize(space, scalar_stiffness(space))
}

/// `(dz u3, dz y)` on the vertical velocity space.
pub fn assemble_zstiffness(yh: &FeSpace) -> CsrMatrix {
    scalar_form(yh, 2 * (yh.kind.degree() - 1).max(1), |ev, q, i, j| ev.grad(q, i)[2] * ev.grad(q, j)[2])
}

/// Maps horizontal velocity coefficients to the duals `-(div_x u, dz y)`.
pub fn assemble_zcoupling(yh: &FeSpace, xh: &FeSpace) -> Result<CsrMatrix> {
    same_mesh(yh, xh)?;
    let ny = yh.n_local();
    let nx = xh.n_local();
    let degree = ((yh.kind.degree() - 1) + (xh.kind.degree() - 1)).max(1);
    let ns = xh.n_scalar();
    let locals = cell_loop(xh.n_cells(), |cell| {
        let ex = xh.eval_cell(cell, degree);
        let ey = yh.eval_cell(cell, degree);
        let mut values = vec![0.0; ny * 2 * nx];
        for q in 0..ex.n_points() {
            let w = ex.weights[q];
            for i in 0..ny {
                let dzy = ey.grad(q, i)[2];
                for j in 0..nx {
                    let g = ex.grad(q, j);
                    values[i * 2 * nx + j] -= w * g[0] * dzy;
                    values[i * 2 * nx + nx + j] -= w * g[1] * dzy;
                }
            }
        }
        let xd = xh.cell_dofs(cell);
        let cols = xd.iter().copied().chain(xd.iter().map(|d| d + ns)).collect();
        Ok(Local { rows: yh.cell_dofs(cell).to_vec(), cols, values })
    })?;
    Ok(scatter(yh.n_dofs(), xh.n_dofs(), locals))
}

fn same_mesh(a: &FeSpace, b: &FeSpace) -> Result<()> {
    let (ma, mb) = (a.mesh(), b.mesh());
    if std::sync::Arc::ptr_eq(ma, mb) || (ma.nodes == mb.nodes && ma.tets == mb.tets) {
        Ok(())
    } else {
        Err(Error::ColumnMismatch)
    }
}

/// `B[q, v] = int_Omega q(x) div_x v`, which equals `(q, div_x <v>)_S` for
/// velocities vanishing on the bottom and sidewalls.
pub fn assemble_divergence(qh: &FeSpace, xh: &FeSpace) -> Result<CsrMatrix> {
    let (sq, mesh) = (qh.surface(), xh.mesh());
    if !qh.is_surface() || !(std::sync::Arc::ptr_eq(sq, &mesh.surface) || **sq == *mesh.surface) {
        return Err(Error::ColumnMismatch);
    }
    let nx = xh.n_local();
    let ns = xh.n_scalar();
    let degree = xh.kind.degree();
    let locals = cell_loop(xh.n_cells(), |cell| {
        let col = mesh.column_of_tet[cell];
        let ex = xh.eval_cell(cell, degree);
        let mut values = vec![0.0; 3 * 2 * nx];
        for q in 0..ex.n_points() {
            let p = ex.points[q];
            let l = sq.barycentric(col, [p[0], p[1]]);
            let w = ex.weights[q];
            for (i, li) in l.iter().enumerate() {
                for j in 0..nx {
                    let g = ex.grad(q, j);
                    values[i * 2 * nx + j] += w * li * g[0];
                    values[i * 2 * nx + nx + j] += w * li * g[1];
                }
            }
        }
        let xd = xh.cell_dofs(cell);
        let cols = xd.iter().copied().chain(xd.iter().map(|d| d + ns)).collect();
        Ok(Local { rows: sq.triangles[col].to_vec(), cols, values })
    })?;
    Ok(scatter(qh.n_dofs(), xh.n_dofs(), locals))
}

/// Quadrature degree that integrates `c(U, v, w)` exactly when `U` lies in
/// the velocity space and the vertical velocity has the same degree.
pub fn convection_degree(xh: &FeSpace) -> usize {
    3 * xh.kind.degree() - 1
}

/// Scalar block of the convection operator,
/// `C[i, j] = int (U . grad phi_j) phi_i + 1/2 (div U) phi_j phi_i`.
pub fn scalar_convection(xh: &FeSpace, u: &crate::fe_spaces::DiscreteField, u3: &VerticalEvaluator) -> Result<CsrMatrix> {
    let n = xh.n_local();
    let degree = convection_degree(xh);
    let locals = cell_loop(xh.n_cells(), |cell| {
        let ev = xh.eval_cell(cell, degree);
        let vert = u3.eval_cell(cell, &ev)?;
        let mut values = vec![0.0; n * n];
        let mut adv = vec![0.0; n];
        for q in 0..ev.n_points() {
            let w = ev.weights[q];
            let uh = u.value_at(cell, &ev, q);
            let gu = u.grad_at(cell, &ev, q);
            let (w3, dz3) = vert[q];
            let div = gu[0][0] + gu[1][1] + dz3;
            for (j, a) in adv.iter_mut().enumerate() {
                let g = ev.grad(q, j);
                *a = uh[0] * g[0] + uh[1] * g[1] + w3 * g[2] + 0.5 * div * ev.value(q, j);
            }
            for i in 0..n {
                let wi = w * ev.value(q, i);
                for j in 0..n {
                    values[i * n + j] += wi * adv[j];
                }
            }
        }
        let dofs = xh.cell_dofs(cell).to_vec();
        Ok(Local { rows: dofs.clone(), cols: dofs, values })
    })?;
    Ok(scatter(xh.n_scalar(), xh.n_scalar(), locals))
}

/// `w^T C(U) v = c(U, v, w)` on the vector space.
pub fn assemble_convection(xh: &FeSpace, u: &crate::fe_spaces::DiscreteField, u3: &VerticalEvaluator) -> Result<CsrMatrix> {
    Ok(vectorize(xh, scalar_convection(xh, u, u3)?))
}

/// `w^T B v = f_cor int v_perp . w` with `v_perp = (-v2, v1)`.
pub fn assemble_coriolis(xh: &FeSpace, f_cor: f64) -> CsrMatrix {
    if f_cor == 0.0 {
        return CsrMatrix::zeros(xh.n_dofs(), xh.n_dofs());
    }
    blocks(&scalar_mass(xh), [[0.0, -f_cor], [f_cor, 0.0]])
}

/// Mass matrix of the P1 surface pressure space.
pub fn surface_mass(qh: &FeSpace) -> CsrMatrix {
    let sm = qh.surface();
    let mut triplets = Vec::with_capacity(9 * sm.triangles.len());
    for (t, tri) in sm.triangles.iter().enumerate() {
        let a = sm.area(t);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], a * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 }));
            }
        }
    }
    CsrMatrix::from_triplets(sm.nodes.len(), sm.nodes.len(), &triplets)
}

/// `<f, v>_Omega` by quadrature of `degree`.
pub fn assemble_load_degree(xh: &FeSpace, f: &(dyn Fn([f64; 3]) -> [f64; 2] + Sync), degree: usize) -> Vec<f64> {
    let n = xh.n_local();
    let ns = xh.n_scalar();
    let locals: Vec<Vec<f64>> = (0..xh.n_cells())
        .into_par_iter()
        .map(|cell| {
            let ev = xh.eval_cell(cell, degree);
            let mut out = vec![0.0; 2 * n];
            for q in 0..ev.n_points() {
                let fv = f(ev.points[q]);
                for i in 0..n {
                    let wphi = ev.weights[q] * ev.value(q, i);
                    out[i] += wphi * fv[0];
                    out[n + i] += wphi * fv[1];
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

/// Default degree for load vectors of smooth data.
pub fn load_degree(xh: &FeSpace) -> usize {
    xh.kind.degree() + 6
}

/// `<f(t), v>_Omega`.
pub fn assemble_load(xh: &FeSpace, f: &(dyn Fn([f64; 3], f64) -> [f64; 2] + Sync), t: f64) -> Vec<f64> {
    assemble_load_degree(xh, &|p| f(p, t), load_degree(xh))
}

/// `<g(t), v>_{Gamma_s}` over the surface faces.
pub fn assemble_traction_degree(xh: &FeSpace, g: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync), degree: usize) -> Vec<f64> {
    let mesh = xh.mesh();
    let n = xh.n_local();
    let ns = xh.n_scalar();
    let rule = cached_tri_rule(degree);
    let faces: Vec<_> = mesh.boundary_faces.iter().filter(|f| f.tag == FaceTag::Surface).collect();
    let locals: Vec<(usize, Vec<f64>)> = faces
        .par_iter()
        .map(|face| {
            let tet = mesh.tets[face.tet];
            let geom = xh.geometry(face.tet);
            let local: [usize; 3] = face.nodes.map(|nd| tet.iter().position(|&v| v == nd).expect("face node in tet"));
            let p = face.nodes.map(|nd| mesh.nodes[nd]);
            let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
            let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
            let area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]).abs();
            let mut out = vec![0.0; 2 * n];
            for (bl, w) in rule.points.iter().zip(&rule.weights) {
                let mut l = [0.0; 4];
                for k in 0..3 {
                    l[local[k]] = bl[k];
                }
                let x = [
                    bl[0] * p[0][0] + bl[1] * p[1][0] + bl[2] * p[2][0],
                    bl[0] * p[0][1] + bl[1] * p[1][1] + bl[2] * p[2][1],
                ];
                let gv = g(x);
                let (vals, _) = xh.basis_at(face.tet, l, &geom);
                for i in 0..n {
                    out[i] += w * area * vals[i] * gv[0];
                    out[n + i] += w * area * vals[i] * gv[1];
                }
            }
            (face.tet, out)
        })
        .collect();
    let mut b = vec![0.0; xh.n_dofs()];
    for (tet, out) in &locals {
        for (i, &d) in xh.cell_dofs(*tet).iter().enumerate() {
            b[d] += out[i];
            b[ns + d] += out[n + i];
        }
    }
    b
}

/// `<g_s(t), v>_{Gamma_s}`.
pub fn assemble_traction(xh: &FeSpace, g: &(dyn Fn([f64; 2], f64) -> [f64; 2] + Sync), t: f64) -> Vec<f64> {
    assemble_traction_degree(xh, &|x| g(x, t), load_degree(xh))
}

/// Sampling times and weights on `[t0, t1]`.
pub fn sample_times(sampling: DataSampling, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    match sampling {
        DataSampling::Pointwise => vec![(t1, 1.0)],
        DataSampling::Averaged { points } => {
            let (x, w) = crate::quadrature::gauss_legendre(points.max(1));
            x.iter().zip(&w).map(|(s, w)| (t0 + s * (t1 - t0), *w)).collect()
        }
    }
}

/// Integral of a P1 surface function against every surface basis function,
/// `(g, q_i)_S`, for data `g` sampled on a triangle rule.
pub fn surface_load(qh: &FeSpace, g: &dyn Fn([f64; 2]) -> f64, degree: usize) -> Vec<f64> {
    let sm = qh.surface();
    let mut b = vec![0.0; qh.n_dofs()];
    for (t, tri) in sm.triangles.iter().enumerate() {
        let (w, pts, bary) = surface_cell(sm, t, degree);
        for q in 0..w.len() {
            let gv = g(pts[q]);
            for k in 0..3 {
                b[tri[k]] += w[q] * bary[q][k] * gv;
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_spaces::{build_pressure_space, build_velocity_space, build_vertical_space, interpolate, ElementKind};
    use crate::mesh::{build_surface_mesh, extrude_iso_sigma, ColumnMesh, SurfaceDomainSpec};
    use std::sync::Arc;

    fn cube(h: f64, layers: usize) -> Arc<ColumnMesh> {
        let spec = SurfaceDomainSpec::unit_square();
        let sm = build_surface_mesh(&spec, h).unwrap();
        Arc::new(extrude_iso_sigma(&sm, &spec, layers).unwrap())
    }

    #[test]
    fn mass_and_stiffness_basics() {
        let m = cube(0.5, 2);
        for kind in [ElementKind::P1, ElementKind::P2] {
            let y = Arc::new(build_vertical_space(&m, kind).unwrap());
            let mass = assemble_mass(&y);
            let one = vec![1.0; y.n_dofs()];
            assert!((mass.bilinear(&one, &one) - 1.0).abs() < 1e-12);
            assert!(mass.asymmetry() < 1e-13);
            let k = assemble_stiffness(&y);
            assert!(k.mul_vec(&one).iter().all(|v| v.abs() < 1e-12));
            let x = interpolate(&y, |p, _| p[0], 0.0);
            assert!((k.bilinear(&x.coeffs, &x.coeffs) - 1.0).abs() < 1e-12);
        }
        let x = Arc::new(build_velocity_space(&m, ElementKind::P1Bubble).unwrap());
        let mass = assemble_mass(&x);
        let vx = interpolate(&x, |_, c| if c == 0 { 1.0 } else { 0.0 }, 0.0);
        assert!((mass.bilinear(&vx.coeffs, &vx.coeffs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_constant_row() {
        let m = cube(0.5, 2);
        let x = Arc::new(build_velocity_space(&m, ElementKind::P2).unwrap());
        let q = build_pressure_space(&m.surface);
        let b = assemble_divergence(&q, &x).unwrap();
        let v = interpolate(&x, |p, c| if c == 0 { p[0] } else { 0.0 }, 0.0);
        let bv = b.mul_vec(&v.coeffs);
        assert!((bv.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(b.mul_vec(&vec![0.0; x.n_dofs()]).iter().all(|&v| v == 0.0));
        let other = cube(0.25, 2);
        let q2 = build_pressure_space(&other.surface);
        assert!(matches!(assemble_divergence(&q2, &x), Err(Error::ColumnMismatch)));
    }

    #[test]
    fn coriolis_constants() {
        let m = cube(0.5, 2);
        let x = Arc::new(build_velocity_space(&m, ElementKind::P2).unwrap());
        let b = assemble_coriolis(&x, 0.7);
        let v = interpolate(&x, |_, c| if c == 0 { 1.0 } else { 0.0 }, 0.0);
        let w = interpolate(&x, |_, c| if c == 1 { 1.0 } else { 0.0 }, 0.0);
        assert!((b.bilinear(&w.coeffs, &v.coeffs) - 0.7).abs() < 1e-12);
        assert_eq!(assemble_coriolis(&x, 0.0).nnz(), 0);
    }

    #[test]
    fn constant_load_and_traction() {
        let m = cube(0.5, 2);
        let x = Arc::new(build_velocity_space(&m, ElementKind::P1Bubble).unwrap());
        let b = assemble_load(&x, &|_, _| [2.0, -3.0], 0.0);
        let e = interpolate(&x, |_, c| if c == 0 { 1.0 } else { 0.0 }, 0.0);
        assert!((crate::linalg::dot(&b, &e.coeffs) - 2.0).abs() < 1e-12);
        let g = assemble_traction(&x, &|_, _| [0.0, 5.0], 0.0);
        let e2 = interpolate(&x, |_, c| if c == 1 { 1.0 } else { 0.0 }, 0.0);
        assert!((crate::linalg::dot(&g, &e2.coeffs) - 5.0).abs() < 1e-12);
        assert!(assemble_load(&x, &|_, _| [0.0, 0.0], 0.0).iter().all(|&v| v == 0.0));
    }
}
