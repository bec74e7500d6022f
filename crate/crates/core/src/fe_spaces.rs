//! Lagrange spaces on column meshes: P1, P2 and P1 plus cubic bubble on
//! tetrahedra, P1 on the surface triangulation.
//!
//! Every basis function is written as a polynomial in the barycentric
//! coordinates, so a reference tabulation (values and derivatives with
//! respect to each barycentric coordinate) is shared by all cells and turned
//! into physical gradients with the constant `grad(lambda)` of each cell.
//!
//! Vector spaces use a blocked layout: component `c` of scalar DOF `i` is
//! global DOF `c * n_scalar + i`.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::mesh::{ColumnMesh, FaceTag, SurfaceMesh, LOCAL_EDGES};
use crate::quadrature::{cached_tet_rule, cached_tri_rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    P1,
    P2,
    P1Bubble,
    P1Surface,
}

impl ElementKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::P1 => "P1",
            Self::P2 => "P2",
            Self::P1Bubble => "P1Bubble",
            Self::P1Surface => "P1Surface",
        }
    }

    /// Local basis size.
    pub fn n_local(self) -> usize {
        match self {
            Self::P1 => 4,
            Self::P2 => 10,
            Self::P1Bubble => 5,
            Self::P1Surface => 3,
        }
    }

    /// Highest polynomial degree in the local basis.
    pub fn degree(self) -> usize {
        match self {
            Self::P1 | Self::P1Surface => 1,
            Self::P2 => 2,
            Self::P1Bubble => 4,
        }
    }

    /// Degree `l` of the velocity approximation.
    pub fn order(self) -> usize {
        match self {
            Self::P2 => 2,
            _ => 1,
        }
    }
}

/// Local basis values and barycentric derivatives at a barycentric point.
pub(crate) fn tet_basis(kind: ElementKind, l: [f64; 4], vals: &mut [f64], dlam: &mut [[f64; 4]]) {
    match kind {
        ElementKind::P1 | ElementKind::P1Bubble => {
            for i in 0..4 {
                vals[i] = l[i];
                dlam[i] = [0.0; 4];
                dlam[i][i] = 1.0;
            }
            if kind == ElementKind::P1Bubble {
                vals[4] = 256.0 * l[0] * l[1] * l[2] * l[3];
                dlam[4] = [
                    256.0 * l[1] * l[2] * l[3],
                    256.0 * l[0] * l[2] * l[3],
                    256.0 * l[0] * l[1] * l[3],
                    256.0 * l[0] * l[1] * l[2],
                ];
            }
        }
        ElementKind::P2 => {
            for i in 0..4 {
                vals[i] = l[i] * (2.0 * l[i] - 1.0);
                dlam[i] = [0.0; 4];
                dlam[i][i] = 4.0 * l[i] - 1.0;
            }
            for (e, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                vals[4 + e] = 4.0 * l[a] * l[b];
                dlam[4 + e] = [0.0; 4];
                dlam[4 + e][a] = 4.0 * l[b];
                dlam[4 + e][b] = 4.0 * l[a];
            }
        }
        ElementKind::P1Surface => unreachable!("surface kind has no tetrahedral basis"),
    }
}

/// Reference tabulation of a tetrahedral basis on a quadrature rule.
#[derive(Debug)]
pub struct RefTab {
    pub n_local: usize,
    pub points: &'static [[f64; 4]],
    pub weights: &'static [f64],
    /// `values[q * n_local + i]`
    pub values: Vec<f64>,
    /// `dlam[q * n_local + i][a] = d phi_i / d lambda_a`
    pub dlam: Vec<[f64; 4]>,
}

impl RefTab {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }
}

pub fn ref_tab(kind: ElementKind, degree: usize) -> &'static RefTab {
    static CACHE: OnceLock<Mutex<HashMap<(ElementKind, usize), &'static RefTab>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("tabulation cache poisoned");
    guard.entry((kind, degree)).or_insert_with(|| {
        let rule = cached_tet_rule(degree);
        let n = kind.n_local();
        let nq = rule.weights.len();
        let mut values = vec![0.0; nq * n];
        let mut dlam = vec![[0.0; 4]; nq * n];
        for (q, p) in rule.points.iter().enumerate() {
            tet_basis(kind, *p, &mut values[q * n..(q + 1) * n], &mut dlam[q * n..(q + 1) * n]);
        }
        Box::leak(Box::new(RefTab { n_local: n, points: &rule.points, weights: &rule.weights, values, dlam }))
    })
}

/// Affine geometry of one tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct TetGeometry {
    pub vertices: [[f64; 3]; 4],
    pub volume: f64,
    pub grad_lambda: [[f64; 3]; 4],
}

impl TetGeometry {
    pub fn new(vertices: [[f64; 3]; 4]) -> Self {
        let v0 = vertices[0];
        let e: [[f64; 3]; 3] = std::array::from_fn(|k| std::array::from_fn(|d| vertices[k + 1][d] - v0[d]));
        // Columns of J are e[0], e[1], e[2]; rows of J^-1 are grad(lambda_1..3).
        let det = e[0][0] * (e[1][1] * e[2][2] - e[2][1] * e[1][2]) - e[1][0] * (e[0][1] * e[2][2] - e[2][1] * e[0][2])
            + e[2][0] * (e[0][1] * e[1][2] - e[1][1] * e[0][2]);
        let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let g1 = cross(e[1], e[2]).map(|v| v / det);
        let g2 = cross(e[2], e[0]).map(|v| v / det);
        let g3 = cross(e[0], e[1]).map(|v| v / det);
        let g0 = std::array::from_fn(|d| -(g1[d] + g2[d] + g3[d]));
        Self { vertices, volume: det.abs() / 6.0, grad_lambda: [g0, g1, g2, g3] }
    }

    pub fn point(&self, l: &[f64; 4]) -> [f64; 3] {
        std::array::from_fn(|d| (0..4).map(|a| l[a] * self.vertices[a][d]).sum())
    }

    pub fn barycentric(&self, p: [f64; 3]) -> [f64; 4] {
        let v0 = self.vertices[0];
        let r = [p[0] - v0[0], p[1] - v0[1], p[2] - v0[2]];
        let dot = |g: [f64; 3]| g[0] * r[0] + g[1] * r[1] + g[2] * r[2];
        let l1 = dot(self.grad_lambda[1]);
        let l2 = dot(self.grad_lambda[2]);
        let l3 = dot(self.grad_lambda[3]);
        [1.0 - l1 - l2 - l3, l1, l2, l3]
    }

    /// Physical gradient from barycentric derivatives.
    pub fn gradient(&self, d: &[f64; 4]) -> [f64; 3] {
        std::array::from_fn(|k| (0..4).map(|a| d[a] * self.grad_lambda[a][k]).sum())
    }
}

/// Basis data of one cell on one quadrature rule.
pub struct CellEval {
    pub tab: &'static RefTab,
    pub degree: usize,
    pub geometry: TetGeometry,
    /// Physical weights (sum to the cell volume).
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    /// `grads[q * n_local + i]`
    pub grads: Vec<[f64; 3]>,
}

impl CellEval {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.tab.values[q * self.tab.n_local + i]
    }

    pub fn grad(&self, q: usize, i: usize) -> [f64; 3] {
        self.grads[q * self.tab.n_local + i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    ZeroMean,
}

#[derive(Debug, Clone)]
pub enum Support {
    Volume(Arc<ColumnMesh>),
    Surface(Arc<SurfaceMesh>),
}

/// A finite element space with its DOF map and essential boundary mask.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub support: Support,
    pub kind: ElementKind,
    pub components: usize,
    n_scalar: usize,
    /// Scalar DOFs of cell `c` at `cell_dofs[c * n_local..]`.
    cell_dofs: Vec<usize>,
    pub dof_coords: Vec<[f64; 3]>,
    /// Essential mask per global DOF (length `n_dofs`).
    pub dirichlet_mask: Vec<bool>,
    pub constraint: Constraint,
    /// Default quadrature degree for bilinear forms.
    pub quad_degree: usize,
}

#[derive(Clone, Copy)]
enum MaskRole {
    Velocity,
    Vertical,
}

impl FeSpace {
    fn volume(mesh: &Arc<ColumnMesh>, kind: ElementKind, components: usize, role: MaskRole) -> Self {
        let n_nodes = mesh.nodes.len();
        let n_local = kind.n_local();
        let mut cell_dofs = Vec::with_capacity(mesh.tets.len() * n_local);
        let mut dof_coords: Vec<[f64; 3]> = mesh.nodes.clone();
        let mut edge_index = HashMap::new();
        if kind == ElementKind::P2 {
            for (i, e) in mesh.edges().into_iter().enumerate() {
                let (a, b) = (mesh.nodes[e[0]], mesh.nodes[e[1]]);
                dof_coords.push(std::array::from_fn(|d| 0.5 * (a[d] + b[d])));
                edge_index.insert(e, n_nodes + i);
            }
        }
        for (t, tet) in mesh.tets.iter().enumerate() {
            cell_dofs.extend_from_slice(tet);
            match kind {
                ElementKind::P2 => {
                    for &(a, b) in &LOCAL_EDGES {
                        let (p, q) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
                        cell_dofs.push(edge_index[&[p, q]]);
                    }
                }
                ElementKind::P1Bubble => {
                    let v = tet.map(|n| mesh.nodes[n]);
                    dof_coords.push(std::array::from_fn(|d| 0.25 * (v[0][d] + v[1][d] + v[2][d] + v[3][d])));
                    cell_dofs.push(n_nodes + t);
                }
                _ => {}
            }
        }
        let n_scalar = dof_coords.len();
        let tags: &[FaceTag] = match role {
            MaskRole::Velocity => &[FaceTag::Bottom, FaceTag::Lateral],
            MaskRole::Vertical => &[FaceTag::Surface, FaceTag::Bottom],
        };
        let mut scalar_mask = vec![false; n_scalar];
        for f in mesh.boundary_faces.iter().filter(|f| tags.contains(&f.tag)) {
            for &n in &f.nodes {
                scalar_mask[n] = true;
            }
            if kind == ElementKind::P2 {
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    scalar_mask[edge_index[&[f.nodes[a], f.nodes[b]]]] = true;
                }
            }
        }
        let dirichlet_mask = (0..components).flat_map(|_| scalar_mask.iter().copied()).collect();
        Self {
            support: Support::Volume(mesh.clone()),
            kind,
            components,
            n_scalar,
            cell_dofs,
            dof_coords,
            dirichlet_mask,
            constraint: Constraint::None,
            quad_degree: 2 * kind.degree(),
        }
    }

    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    pub fn n_dofs(&self) -> usize {
        self.n_scalar * self.components
    }

    pub fn n_local(&self) -> usize {
        self.kind.n_local()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_dofs.len() / self.n_local()
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        let n = self.n_local();
        &self.cell_dofs[c * n..(c + 1) * n]
    }

    pub fn scalar_mask(&self) -> &[bool] {
        &self.dirichlet_mask[..self.n_scalar]
    }

    pub fn mesh(&self) -> &Arc<ColumnMesh> {
        match &self.support {
            Support::Volume(m) => m,
            Support::Surface(_) => panic!("surface space has no volume mesh"),
        }
    }

    pub fn surface(&self) -> &Arc<SurfaceMesh> {
        match &self.support {
            Support::Volume(m) => &m.surface,
            Support::Surface(s) => s,
        }
    }

    pub fn is_surface(&self) -> bool {
        matches!(self.support, Support::Surface(_))
    }

    pub fn geometry(&self, cell: usize) -> TetGeometry {
        let mesh = self.mesh();
        TetGeometry::new(mesh.tets[cell].map(|n| mesh.nodes[n]))
    }

    /// Basis values and gradients of a volume cell on a rule of `degree`.
    pub fn eval_cell(&self, cell: usize, degree: usize) -> CellEval {
        let tab = ref_tab(self.kind, degree);
        let geometry = self.geometry(cell);
        let n = tab.n_local;
        let mut grads = Vec::with_capacity(tab.dlam.len());
        for d in &tab.dlam {
            grads.push(geometry.gradient(d));
        }
        debug_assert_eq!(grads.len(), tab.n_points() * n);
        CellEval {
            tab,
            degree,
            weights: tab.weights.iter().map(|w| w * geometry.volume).collect(),
            points: tab.points.iter().map(|l| geometry.point(l)).collect(),
            geometry,
            grads,
        }
    }

    /// Values and gradients at a single barycentric point of a cell.
    pub fn basis_at(&self, cell: usize, l: [f64; 4], geometry: &TetGeometry) -> (Vec<f64>, Vec<[f64; 3]>) {
        let _ = cell;
        let n = self.n_local();
        let mut vals = vec![0.0; n];
        let mut dlam = vec![[0.0; 4]; n];
        tet_basis(self.kind, l, &mut vals, &mut dlam);
        (vals, dlam.iter().map(|d| geometry.gradient(d)).collect())
    }

    /// Integral of a scalar P1 surface field.
    pub fn surface_integral(&self, coeffs: &[f64]) -> f64 {
        let sm = self.surface();
        sm.triangles
            .iter()
            .enumerate()
            .map(|(t, tri)| sm.area(t) * (coeffs[tri[0]] + coeffs[tri[1]] + coeffs[tri[2]]) / 3.0)
            .sum()
    }

    /// Quadrature mean over `S` of a surface field.
    pub fn mean(&self, coeffs: &[f64]) -> f64 {
        self.surface_integral(coeffs) / self.surface().total_area()
    }

    /// L2-orthogonal projection onto zero-mean fields (constants are in the space).
    pub fn project_zero_mean(&self, coeffs: &mut [f64]) {
        let m = self.mean(coeffs);
        for c in coeffs.iter_mut() {
            *c -= m;
        }
    }

    /// Zeroes masked DOFs.
    pub fn apply_mask(&self, coeffs: &mut [f64]) {
        for (c, &m) in coeffs.iter_mut().zip(&self.dirichlet_mask) {
            if m {
                *c = 0.0;
            }
        }
    }

    /// Stable 64-bit FNV-1a signature of kind, layout and DOF geometry.
    pub fn signature(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.kind.name().as_bytes());
        eat(&(self.components as u64).to_le_bytes());
        eat(&(self.n_scalar as u64).to_le_bytes());
        for p in &self.dof_coords {
            for v in p {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        for &m in &self.dirichlet_mask {
            eat(&[m as u8]);
        }
        h
    }
}

fn unsupported(kind: ElementKind, role: &'static str) -> Error {
    Error::UnsupportedKind { kind: kind.name().into(), role }
}

/// Horizontal velocity space: two components, masked on bottom and sidewalls.
pub fn build_velocity_space(mesh: &Arc<ColumnMesh>, kind: ElementKind) -> Result<FeSpace> {
    match kind {
        ElementKind::P2 | ElementKind::P1Bubble => Ok(FeSpace::volume(mesh, kind, 2, MaskRole::Velocity)),
        _ => Err(unsupported(kind, "horizontal velocity")),
    }
}

/// Vertical velocity space: scalar, masked on surface and bottom.
pub fn build_vertical_space(mesh: &Arc<ColumnMesh>, kind: ElementKind) -> Result<FeSpace> {
    match kind {
        ElementKind::P1 | ElementKind::P2 => Ok(FeSpace::volume(mesh, kind, 1, MaskRole::Vertical)),
        _ => Err(unsupported(kind, "vertical velocity")),
    }
}

/// Continuous P1 surface pressure with zero mean.
pub fn build_pressure_space(sm: &Arc<SurfaceMesh>) -> FeSpace {
    let n = sm.nodes.len();
    FeSpace {
        support: Support::Surface(sm.clone()),
        kind: ElementKind::P1Surface,
        components: 1,
        n_scalar: n,
        cell_dofs: sm.triangles.iter().flatten().copied().collect(),
        dof_coords: sm.nodes.iter().map(|p| [p[0], p[1], 0.0]).collect(),
        dirichlet_mask: vec![false; n],
        constraint: Constraint::ZeroMean,
        quad_degree: 2,
    }
}

/// Surface triangle rule data: physical weights, points and P1 values.
pub fn surface_cell(sm: &SurfaceMesh, t: usize, degree: usize) -> (Vec<f64>, Vec<[f64; 2]>, &'static [[f64; 3]]) {
    let rule = cached_tri_rule(degree);
    let area = sm.area(t);
    let v = sm.triangles[t].map(|n| sm.nodes[n]);
    let points = rule
        .points
        .iter()
        .map(|l| std::array::from_fn(|d| l[0] * v[0][d] + l[1] * v[1][d] + l[2] * v[2][d]))
        .collect();
    (rule.weights.iter().map(|w| w * area).collect(), points, &rule.points)
}

/// Coefficient vector bound to a space at a time node.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
    pub time: f64,
}

impl DiscreteField {
    pub fn zeros(space: &Arc<FeSpace>, time: f64) -> Self {
        Self { space: space.clone(), coeffs: vec![0.0; space.n_dofs()], time }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>, time: f64) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::Dimension(format!("{} coefficients for {} DOFs", coeffs.len(), space.n_dofs())));
        }
        Ok(Self { space: space.clone(), coeffs, time })
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.space.n_scalar();
        &self.coeffs[c * n..(c + 1) * n]
    }

    pub fn apply_mask(&mut self) {
        self.space.apply_mask(&mut self.coeffs);
    }

    /// Values of every component at quadrature point `q` of a cell evaluation.
    pub fn value_at(&self, cell: usize, ev: &CellEval, q: usize) -> [f64; 2] {
        let dofs = self.space.cell_dofs(cell);
        let n = self.space.n_scalar();
        let mut out = [0.0; 2];
        for (i, &d) in dofs.iter().enumerate() {
            let phi = ev.value(q, i);
            for (c, o) in out.iter_mut().enumerate().take(self.space.components) {
                *o += phi * self.coeffs[c * n + d];
            }
        }
        out
    }

    /// Gradients of every component at quadrature point `q`.
    pub fn grad_at(&self, cell: usize, ev: &CellEval, q: usize) -> [[f64; 3]; 2] {
        let dofs = self.space.cell_dofs(cell);
        let n = self.space.n_scalar();
        let mut out = [[0.0; 3]; 2];
        for (i, &d) in dofs.iter().enumerate() {
            let g = ev.grad(q, i);
            for (c, o) in out.iter_mut().enumerate().take(self.space.components) {
                let v = self.coeffs[c * n + d];
                for k in 0..3 {
                    o[k] += v * g[k];
                }
            }
        }
        out
    }

    /// Writes `dof_id,value` rows after a signature header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut s = format!("# signature={:016x} time={:.16e}\ndof_id,value\n", self.space.signature(), self.time);
        for (i, v) in self.coeffs.iter().enumerate() {
            s.push_str(&format!("{i},{v:.16e}\n"));
        }
        w.write_all(s.as_bytes())
    }

    pub fn read_csv<R: BufRead>(space: &Arc<FeSpace>, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        let mut sig = None;
        let mut time = 0.0;
        for part in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = part.strip_prefix("signature=") {
                sig = u64::from_str_radix(v, 16).ok();
            } else if let Some(v) = part.strip_prefix("time=") {
                time = v.parse().map_err(|_| Error::Parse(format!("bad time {v:?}")))?;
            }
        }
        match sig {
            Some(s) if s == space.signature() => {}
            Some(s) => {
                return Err(Error::Dimension(format!(
                    "field signature {s:016x} does not match space {:016x}",
                    space.signature()
                )))
            }
            None => return Err(Error::Parse("missing signature header".into())),
        }
        let cols = lines.next().ok_or_else(|| Error::Parse("missing column header".into()))??;
        if cols.trim() != "dof_id,value" {
            return Err(Error::Parse(format!("unexpected column header {cols:?}")));
        }
        let mut coeffs = vec![0.0; space.n_dofs()];
        let mut seen = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (i, v) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad row {line:?}")))?;
            let i: usize = i.trim().parse().map_err(|_| Error::Parse(format!("bad dof id {i:?}")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad value {v:?}")))?;
            *coeffs.get_mut(i).ok_or_else(|| Error::Dimension(format!("dof {i} out of range")))? = v;
            seen += 1;
        }
        if seen != coeffs.len() {
            return Err(Error::Dimension(format!("{seen} rows for {} DOFs", coeffs.len())));
        }
        Ok(Self { space: space.clone(), coeffs, time })
    }
}

/// Nodal interpolation of `f(point, component)`. Bubble coefficients are set
/// to zero; the essential mask is not applied.
pub fn interpolate(space: &Arc<FeSpace>, f: impl Fn([f64; 3], usize) -> f64, time: f64) -> DiscreteField {
    let n = space.n_scalar();
    let mut coeffs = vec![0.0; space.n_dofs()];
    let bubble_start = match (&space.support, space.kind) {
        (Support::Volume(m), ElementKind::P1Bubble) => m.nodes.len(),
        _ => n,
    };
    for c in 0..space.components {
        for i in 0..bubble_start {
            coeffs[c * n + i] = f(space.dof_coords[i], c);
        }
    }
    DiscreteField { space: space.clone(), coeffs, time }
}
