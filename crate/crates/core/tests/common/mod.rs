//! Independent quadrature oracles for the discrete forms. Integrals are
//! computed cell by cell on collapsed tensor Gauss rules and fields are
//! evaluated pointwise, without the tabulated element data used by assembly.

#![allow(dead_code)]

use std::sync::Arc;

use hydrosplit::fe_spaces::{build_velocity_space, DiscreteField, FeSpace, TetGeometry};
use hydrosplit::mesh::{build_surface_mesh, extrude_iso_sigma, ColumnMesh, SurfaceDomainSpec};
use hydrosplit::quadrature::gauss_legendre;
use hydrosplit::vertical_velocity::VerticalEvaluator;
use rand::Rng;

pub fn column_mesh(spec: &SurfaceDomainSpec, h: f64, layers: usize) -> Arc<ColumnMesh> {
    let sm = build_surface_mesh(spec, h).unwrap();
    Arc::new(extrude_iso_sigma(&sm, spec, layers).unwrap())
}

pub fn velocity_space(mesh: &Arc<ColumnMesh>, kind: hydrosplit::fe_spaces::ElementKind) -> Arc<FeSpace> {
    Arc::new(build_velocity_space(mesh, kind).unwrap())
}

/// Random coefficients with the essential mask applied.
pub fn random_field(space: &Arc<FeSpace>, rng: &mut impl Rng) -> DiscreteField {
    let coeffs = (0..space.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut f = DiscreteField::from_coeffs(space, coeffs, 0.0).unwrap();
    f.apply_mask();
    f
}

/// Collapsed Gauss rule on the reference tet: barycentric points and weights
/// summing to one.
pub fn tet_points(n: usize) -> Vec<([f64; 4], f64)> {
    let (x, w) = gauss_legendre(n);
    let mut out = Vec::new();
    for (a, wa) in x.iter().zip(&w) {
        for (b, wb) in x.iter().zip(&w) {
            for (c, wc) in x.iter().zip(&w) {
                let l0 = *a;
                let l1 = (1.0 - a) * b;
                let l2 = (1.0 - a) * (1.0 - b) * c;
                let jac = (1.0 - a) * (1.0 - a) * (1.0 - b);
                out.push(([l0, l1, l2, 1.0 - l0 - l1 - l2], 6.0 * wa * wb * wc * jac));
            }
        }
    }
    out
}

pub fn tri_points(n: usize) -> Vec<([f64; 3], f64)> {
    let (x, w) = gauss_legendre(n);
    let mut out = Vec::new();
    for (a, wa) in x.iter().zip(&w) {
        for (b, wb) in x.iter().zip(&w) {
            let l0 = *a;
            let l1 = (1.0 - a) * b;
            out.push(([l0, l1, 1.0 - l0 - l1], 2.0 * wa * wb * (1.0 - a)));
        }
    }
    out
}

/// Component values and gradients of a vector field at a barycentric point.
pub fn eval_vector(f: &DiscreteField, cell: usize, l: [f64; 4], geom: &TetGeometry) -> ([f64; 2], [[f64; 3]; 2]) {
    let space = &f.space;
    let (vals, grads) = space.basis_at(cell, l, geom);
    let ns = space.n_scalar();
    let mut v = [0.0; 2];
    let mut g = [[0.0; 3]; 2];
    for (i, &d) in space.cell_dofs(cell).iter().enumerate() {
        for c in 0..2 {
            let a = f.coeffs[c * ns + d];
            v[c] += a * vals[i];
            for k in 0..3 {
                g[c][k] += a * grads[i][k];
            }
        }
    }
    (v, g)
}

/// Integral over the mesh of `kernel(cell, l, geometry, point)`.
pub fn integrate(mesh: &ColumnMesh, n: usize, kernel: impl Fn(usize, [f64; 4], &TetGeometry) -> f64) -> f64 {
    let rule = tet_points(n);
    let mut total = 0.0;
    for (cell, tet) in mesh.tets.iter().enumerate() {
        let geom = TetGeometry::new(tet.map(|v| mesh.nodes[v]));
        let mut s = 0.0;
        for (l, w) in &rule {
            s += w * kernel(cell, *l, &geom);
        }
        total += s * geom.volume;
    }
    total
}

pub fn mass_form(v: &DiscreteField, w: &DiscreteField) -> f64 {
    integrate(v.space.mesh(), 8, |c, l, g| {
        let (a, _) = eval_vector(v, c, l, g);
        let (b, _) = eval_vector(w, c, l, g);
        a[0] * b[0] + a[1] * b[1]
    })
}

pub fn stiffness_form(v: &DiscreteField, w: &DiscreteField) -> f64 {
    integrate(v.space.mesh(), 8, |c, l, g| {
        let (_, a) = eval_vector(v, c, l, g);
        let (_, b) = eval_vector(w, c, l, g);
        (0..2).map(|i| (0..3).map(|k| a[i][k] * b[i][k]).sum::<f64>()).sum()
    })
}

pub fn coriolis_form(f_cor: f64, v: &DiscreteField, w: &DiscreteField) -> f64 {
    integrate(v.space.mesh(), 8, |c, l, g| {
        let (a, _) = eval_vector(v, c, l, g);
        let (b, _) = eval_vector(w, c, l, g);
        f_cor * (-a[1] * b[0] + a[0] * b[1])
    })
}

/// `1/2 [((U . grad) v, w) - ((U . grad) w, v)]` with the transport field
/// `U = (u, u3)`. This equals the trilinear form whenever `U . n = 0` on the
/// boundary.
pub fn convection_skew_form(u: &DiscreteField, u3: &VerticalEvaluator, v: &DiscreteField, w: &DiscreteField) -> f64 {
    integrate(v.space.mesh(), 8, |c, l, g| {
        let (uh, _) = eval_vector(u, c, l, g);
        let (w3, _) = u3.eval(c, l).unwrap();
        let tr = [uh[0], uh[1], w3];
        let (a, ga) = eval_vector(v, c, l, g);
        let (b, gb) = eval_vector(w, c, l, g);
        let mut s = 0.0;
        for i in 0..2 {
            let adv_a: f64 = (0..3).map(|k| tr[k] * ga[i][k]).sum();
            let adv_b: f64 = (0..3).map(|k| tr[k] * gb[i][k]).sum();
            s += 0.5 * (adv_a * b[i] - adv_b * a[i]);
        }
        s
    })
}

/// `(f, v)` for every basis function, on a rule with `n` points per
/// direction.
pub fn load_oracle(xh: &Arc<FeSpace>, f: &dyn Fn([f64; 3]) -> [f64; 2], n: usize) -> Vec<f64> {
    let mesh = xh.mesh();
    let rule = tet_points(n);
    let ns = xh.n_scalar();
    let mut b = vec![0.0; xh.n_dofs()];
    for (cell, tet) in mesh.tets.iter().enumerate() {
        let geom = TetGeometry::new(tet.map(|v| mesh.nodes[v]));
        for (l, w) in &rule {
            let (vals, _) = xh.basis_at(cell, *l, &geom);
            let fv = f(geom.point(l));
            for (i, &d) in xh.cell_dofs(cell).iter().enumerate() {
                b[d] += w * geom.volume * vals[i] * fv[0];
                b[ns + d] += w * geom.volume * vals[i] * fv[1];
            }
        }
    }
    b
}

/// `(q, div_x <v>)_S`, with the depth integral of `div_x v` computed along
/// vertical lines tet by tet and the surface integral on the triangles.
pub fn divergence_oracle(q: &[f64], v: &DiscreteField) -> f64 {
    let mesh = v.space.mesh();
    let sm = &mesh.surface;
    let layers = mesh.layer_count();
    let surf = tri_points(8);
    let (gx, gw) = gauss_legendre(8);
    let mut total = 0.0;
    for (t, tri) in sm.triangles.iter().enumerate() {
        let corners = tri.map(|n| sm.nodes[n]);
        let area = sm.area(t);
        for (bl, w) in &surf {
            let x = [0, 1].map(|d| bl[0] * corners[0][d] + bl[1] * corners[1][d] + bl[2] * corners[2][d]);
            let qv = bl[0] * q[tri[0]] + bl[1] * q[tri[1]] + bl[2] * q[tri[2]];
            let mut column = 0.0;
            for layer in 0..layers {
                for &cell in mesh.prism(t, layer) {
                    let geom = TetGeometry::new(mesh.tets[cell].map(|n| mesh.nodes[n]));
                    // Barycentrics are affine in z along the line.
                    let l0 = geom.barycentric([x[0], x[1], 0.0]);
                    let l1 = geom.barycentric([x[0], x[1], 1.0]);
                    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                    for k in 0..4 {
                        let (a, b) = (l0[k], l1[k] - l0[k]);
                        if b.abs() < 1e-14 {
                            if a < -1e-12 {
                                hi = lo;
                            }
                        } else if b > 0.0 {
                            lo = lo.max(-a / b);
                        } else {
                            hi = hi.min(-a / b);
                        }
                    }
                    if hi <= lo {
                        continue;
                    }
                    for (s, ws) in gx.iter().zip(&gw) {
                        let z = lo + s * (hi - lo);
                        let l = geom.barycentric([x[0], x[1], z]);
                        let (_, g) = eval_vector(v, cell, l, &geom);
                        column += ws * (hi - lo) * (g[0][0] + g[1][1]);
                    }
                }
            }
            total += w * area * qv * column;
        }
    }
    total
}
