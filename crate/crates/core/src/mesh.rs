//! Vertically structured tetrahedral meshes.
//!
//! A polygonal surface `S` is triangulated, then every surface triangle is
//! extruded into a column of prisms bounded by iso-sigma surfaces
//! `z = -sigma_i * D(x)`. Each prism is cut into three tetrahedra with the
//! sorted-global-index diagonal rule, so neighbouring prisms always agree on
//! the diagonals of their shared quadrilateral faces and every tetrahedron
//! projects onto exactly one surface triangle.
//!
//! Node numbering is level-major: node `level * n_surface + s` sits above
//! surface node `s` at sigma level `level` (level 0 is the free surface
//! `z = 0`, level `L` the bottom).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Bathymetry `D(x) > 0`, continuous and piecewise linear on the surface mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Bathymetry {
    /// `D(x, y) = d0 + gx * x + gy * y`.
    Affine { d0: f64, gradient: [f64; 2] },
    /// Nodal depths on a supplied surface mesh.
    Nodal(Vec<f64>),
}

impl Bathymetry {
    pub fn flat(depth: f64) -> Self {
        Self::Affine { d0: depth, gradient: [0.0, 0.0] }
    }

    /// Depth at surface node `i` located at `p`.
    pub fn at_node(&self, i: usize, p: [f64; 2]) -> f64 {
        match self {
            Self::Affine { d0, gradient } => d0 + gradient[0] * p[0] + gradient[1] * p[1],
            Self::Nodal(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDomainSpec {
    /// Counterclockwise polygon vertices.
    pub polygon: Vec<[f64; 2]>,
    pub bathymetry: Bathymetry,
    pub d_min: f64,
    pub d_max: f64,
}

impl SurfaceDomainSpec {
    /// The unit square with flat unit depth.
    pub fn unit_square() -> Self {
        Self {
            polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            bathymetry: Bathymetry::flat(1.0),
            d_min: 1.0,
            d_max: 1.0,
        }
    }

    /// The unit square with `D = 1 + x / 4`.
    pub fn unit_square_sloped() -> Self {
        Self {
            polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            bathymetry: Bathymetry::Affine { d0: 1.0, gradient: [0.25, 0.0] },
            d_min: 1.0,
            d_max: 1.25,
        }
    }

    pub fn polygon_area(&self) -> f64 {
        signed_area(&self.polygon)
    }

    /// Checks that the polygon is simple and counterclockwise.
    pub fn validate_polygon(&self) -> Result<()> {
        let p = &self.polygon;
        let n = p.len();
        if n < 3 {
            return Err(Error::NonSimplePolygon(format!("{n} vertices")));
        }
        if signed_area(p) <= 0.0 {
            return Err(Error::NonSimplePolygon("orientation is not counterclockwise".into()));
        }
        for i in 0..n {
            let (a, b) = (p[i], p[(i + 1) % n]);
            if a == b {
                return Err(Error::NonSimplePolygon(format!("repeated vertex {i}")));
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (c, d) = (p[j], p[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::NonSimplePolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box if the polygon is a rectangle.
    fn as_rectangle(&self) -> Option<([f64; 2], [f64; 2])> {
        if self.polygon.len() != 4 {
            return None;
        }
        let xs: Vec<f64> = self.polygon.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = self.polygon.iter().map(|p| p[1]).collect();
        let lo = [xs.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::INFINITY, f64::min)];
        let hi = [xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)];
        let corner = |p: &[f64; 2]| (p[0] == lo[0] || p[0] == hi[0]) && (p[1] == lo[1] || p[1] == hi[1]);
        if self.polygon.iter().all(corner) && (signed_area(&self.polygon) - (hi[0] - lo[0]) * (hi[1] - lo[1])).abs() < 1e-12 {
            Some((lo, hi))
        } else {
            None
        }
    }
}

fn signed_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| {
        let (a, b) = (p[i], p[(i + 1) % n]);
        a[0] * b[1] - b[0] * a[1]
    }).sum::<f64>()
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        orient(p, q, r) == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d)
}

/// Conforming triangulation of the surface domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
}

impl SurfaceMesh {
    /// Builds a mesh from nodes and triangles, orienting triangles
    /// counterclockwise and extracting the boundary edges.
    pub fn from_triangles(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut tris = Vec::with_capacity(triangles.len());
        for t in triangles {
            let a = orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
            if a == 0.0 {
                return Err(Error::InvalidDomain(format!("degenerate triangle {t:?}")));
            }
            tris.push(if a > 0.0 { t } else { [t[0], t[2], t[1]] });
        }
        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        for t in &tris {
            for e in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
                let mut k = e;
                k.sort_unstable();
                *count.entry(k).or_default() += 1;
            }
        }
        if let Some((e, _)) = count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidDomain(format!("edge {e:?} shared by more than two triangles")));
        }
        // Boundary edges keep their counterclockwise orientation.
        let mut boundary_edges = Vec::new();
        for t in &tris {
            for e in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
                let mut k = e;
                k.sort_unstable();
                if count[&k] == 1 {
                    boundary_edges.push(e);
                }
            }
        }
        boundary_edges.sort_unstable();
        Ok(Self { nodes, triangles: tris, boundary_edges })
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn max_edge(&self) -> f64 {
        self.edge_lengths().fold(0.0, f64::max)
    }

    pub fn min_edge(&self) -> f64 {
        self.edge_lengths().fold(f64::INFINITY, f64::min)
    }

    fn edge_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.triangles.iter().flat_map(move |t| {
            [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].into_iter().map(move |(a, b)| {
                let (p, q) = (self.nodes[a], self.nodes[b]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            })
        })
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        let det = orient(a, b, c);
        let l1 = orient(p, b, c) / det;
        let l2 = orient(a, p, c) / det;
        [l1, l2, 1.0 - l1 - l2]
    }
}

/// Structured triangulation of a rectangular surface domain.
///
/// Cells are split along alternating diagonals so that no triangle touching a
/// corner has all three vertices on the boundary (for even cell counts).
pub fn build_surface_mesh(spec: &SurfaceDomainSpec, target_h: f64) -> Result<SurfaceMesh> {
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(Error::DegenerateTarget(target_h));
    }
    spec.validate_polygon()?;
    let (lo, hi) = spec
        .as_rectangle()
        .ok_or_else(|| Error::InvalidDomain("only axis-aligned rectangles are meshed; supply other surfaces as input".into()))?;
    let nx = (((hi[0] - lo[0]) / target_h) - 1e-9).ceil().max(1.0) as usize;
    let ny = (((hi[1] - lo[1]) / target_h) - 1e-9).ceil().max(1.0) as usize;
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { hi[0] } else { lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64 };
            let y = if j == ny { hi[1] } else { lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64 };
            nodes.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let mesh = SurfaceMesh::from_triangles(nodes, triangles)?;
    validate_depths(spec, &mesh)?;
    Ok(mesh)
}

fn validate_depths(spec: &SurfaceDomainSpec, mesh: &SurfaceMesh) -> Result<Vec<f64>> {
    if let Bathymetry::Nodal(v) = &spec.bathymetry {
        if v.len() != mesh.nodes.len() {
            return Err(Error::InvalidDomain(format!("{} nodal depths for {} nodes", v.len(), mesh.nodes.len())));
        }
    }
    if !(spec.d_min > 0.0) {
        return Err(Error::InvalidDomain("D_min must be positive (sidewall hypothesis)".into()));
    }
    let mut depths = Vec::with_capacity(mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let d = spec.bathymetry.at_node(i, *p);
        if d < spec.d_min * (1.0 - 1e-12) || d > spec.d_max * (1.0 + 1e-12) {
            return Err(Error::InvalidDomain(format!(
                "depth {d} at node {i} outside [{}, {}]",
                spec.d_min, spec.d_max
            )));
        }
        depths.push(d);
    }
    Ok(depths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceTag {
    Surface,
    Bottom,
    Lateral,
}

impl FaceTag {
    pub fn name(self) -> &'static str {
        match self {
            Self::Surface => "surface",
            Self::Bottom => "bottom",
            Self::Lateral => "lateral",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub tag: FaceTag,
    pub tet: usize,
}

/// Vertically structured tetrahedral mesh of `{(x, z): x in S, -D(x) < z < 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMesh {
    pub surface: Arc<SurfaceMesh>,
    /// Nodal depth on the surface nodes.
    pub depth: Vec<f64>,
    /// `L + 1` fractions, `0 = sigma_0 < ... < sigma_L = 1`.
    pub sigma_levels: Vec<f64>,
    pub nodes: Vec<[f64; 3]>,
    /// Positively oriented node quadruples.
    pub tets: Vec<[usize; 4]>,
    pub column_of_tet: Vec<usize>,
    pub layer_of_tet: Vec<usize>,
    /// Tetrahedra of each prism, indexed `column * L + layer`.
    pub prism_tets: Vec<[usize; 3]>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Maximum tetrahedron diameter.
    pub h: f64,
}

impl ColumnMesh {
    pub fn layer_count(&self) -> usize {
        self.sigma_levels.len() - 1
    }

    pub fn n_surface_nodes(&self) -> usize {
        self.surface.nodes.len()
    }

    /// Sigma level (0 = surface) of a node.
    pub fn node_level(&self, n: usize) -> usize {
        n / self.n_surface_nodes()
    }

    pub fn surface_node(&self, n: usize) -> usize {
        n % self.n_surface_nodes()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t].map(|i| self.nodes[i]);
        signed_volume(a, b, c, d)
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn tet_diameter(&self, t: usize) -> f64 {
        let p = self.tets[t].map(|i| self.nodes[i]);
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                d = d.max(dist3(p[i], p[j]));
            }
        }
        d
    }

    pub fn min_diameter(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_diameter(t)).fold(f64::INFINITY, f64::min)
    }

    pub fn depth_range(&self) -> (f64, f64) {
        let lo = self.depth.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.depth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Bottom depth at a point of column `c`.
    pub fn depth_at(&self, column: usize, x: [f64; 2]) -> f64 {
        let l = self.surface.barycentric(column, x);
        let t = self.surface.triangles[column];
        (0..3).map(|i| l[i] * self.depth[t[i]]).sum()
    }

    pub fn prism(&self, column: usize, layer: usize) -> &[usize; 3] {
        &self.prism_tets[column * self.layer_count() + layer]
    }

    /// All distinct edges as sorted node pairs, in lexicographic order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .tets
            .iter()
            .flat_map(|t| LOCAL_EDGES.iter().map(move |&(a, b)| {
                let (p, q) = (t[a], t[b]);
                if p < q { [p, q] } else { [q, p] }
            }))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Writes the plain-text mesh format.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "HYDROSPLIT-MESH 1");
        let _ = writeln!(s, "SIGMA {}", self.sigma_levels.len());
        for v in &self.sigma_levels {
            let _ = writeln!(s, "{v:.16e}");
        }
        let _ = writeln!(s, "SURFACE_NODES {}", self.surface.nodes.len());
        for (i, p) in self.surface.nodes.iter().enumerate() {
            let _ = writeln!(s, "{i} {:.16e} {:.16e} {:.16e}", p[0], p[1], self.depth[i]);
        }
        let _ = writeln!(s, "TRIANGLES {}", self.surface.triangles.len());
        for (i, t) in self.surface.triangles.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "NODES {}", self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "{i} {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
        }
        let _ = writeln!(s, "TETS {}", self.tets.len());
        for (i, t) in self.tets.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {} {} {} {}", t[0], t[1], t[2], t[3], self.column_of_tet[i], self.layer_of_tet[i]);
        }
        let _ = writeln!(s, "FACES {}", self.boundary_faces.len());
        for f in &self.boundary_faces {
            let _ = writeln!(s, "{} {} {} {}", f.tag.name(), f.nodes[0], f.nodes[1], f.nodes[2]);
        }
        w.write_all(s.as_bytes())
    }

    /// Reads the format produced by [`ColumnMesh::write_text`]. The mesh is
    /// rebuilt from the surface section and checked against the stored
    /// volume sections.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let mut next = || it.next().ok_or_else(|| Error::Parse("unexpected end of mesh file".into()));
        let header = next()?;
        if header != "HYDROSPLIT-MESH 1" {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let count = |line: &str, key: &str| -> Result<usize> {
            let mut p = line.split_whitespace();
            if p.next() != Some(key) {
                return Err(Error::Parse(format!("expected section {key}, got {line:?}")));
            }
            p.next().and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse(format!("bad count in {line:?}")))
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let idx = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let n_sigma = count(next()?, "SIGMA")?;
        let mut sigma = Vec::with_capacity(n_sigma);
        for _ in 0..n_sigma {
            sigma.push(num(next()?)?);
        }
        let ns = count(next()?, "SURFACE_NODES")?;
        let mut snodes = Vec::with_capacity(ns);
        let mut depth = Vec::with_capacity(ns);
        for _ in 0..ns {
            let f: Vec<&str> = next()?.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse("surface node line needs 4 fields".into()));
            }
            snodes.push([num(f[1])?, num(f[2])?]);
            depth.push(num(f[3])?);
        }
        let nt = count(next()?, "TRIANGLES")?;
        let mut tris = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f: Vec<&str> = next()?.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse("triangle line needs 4 fields".into()));
            }
            tris.push([idx(f[1])?, idx(f[2])?, idx(f[3])?]);
        }
        let nn = count(next()?, "NODES")?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let f: Vec<&str> = next()?.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse("node line needs 4 fields".into()));
            }
            nodes.push([num(f[1])?, num(f[2])?, num(f[3])?]);
        }
        let ntet = count(next()?, "TETS")?;
        let mut tets = Vec::with_capacity(ntet);
        for _ in 0..ntet {
            let f: Vec<&str> = next()?.split_whitespace().collect();
            if f.len() != 7 {
                return Err(Error::Parse("tet line needs 7 fields".into()));
            }
            tets.push([idx(f[1])?, idx(f[2])?, idx(f[3])?, idx(f[4])?]);
        }
        let surface = SurfaceMesh::from_triangles(snodes, tris)?;
        let d_min = depth.iter().cloned().fold(f64::INFINITY, f64::min);
        let d_max = depth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let spec = SurfaceDomainSpec {
            polygon: Vec::new(),
            bathymetry: Bathymetry::Nodal(depth),
            d_min,
            d_max,
        };
        let mesh = extrude_with_sigma(&surface, &spec, sigma)?;
        if mesh.nodes.len() != nodes.len() || mesh.tets != tets {
            return Err(Error::Parse("volume sections do not match the extruded surface".into()));
        }
        for (a, b) in mesh.nodes.iter().zip(&nodes) {
            if a != b {
                return Err(Error::Parse("node coordinates do not match the extruded surface".into()));
            }
        }
        Ok(mesh)
    }
}

pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local faces, each opposite the vertex of the same index.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

pub fn signed_volume(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0])) / 6.0
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Splits the prism with bottom/top triangles `p`, `q` (`q[i]` vertically
/// paired with `p[i]`) into three tetrahedra. Every quadrilateral face is cut
/// along the diagonal through its smallest global index.
fn split_prism(p: [usize; 3], q: [usize; 3]) -> [[usize; 4]; 3] {
    let all = [p[0], p[1], p[2], q[0], q[1], q[2]];
    let argmin = (0..6).min_by_key(|&i| all[i]).expect("six vertices");
    let (mut p, mut q) = if argmin < 3 { (p, q) } else { (q, p) };
    let shift = argmin % 3;
    p.rotate_left(shift);
    q.rotate_left(shift);
    if p[1].min(q[2]) < p[2].min(q[1]) {
        [[p[0], p[1], p[2], q[2]], [p[0], p[1], q[2], q[1]], [p[0], q[1], q[2], q[0]]]
    } else {
        [[p[0], p[1], p[2], q[1]], [p[0], q[1], p[2], q[2]], [p[0], q[1], q[2], q[0]]]
    }
}

/// Extrudes a surface mesh into `layers` uniform iso-sigma layers.
pub fn extrude_iso_sigma(sm: &SurfaceMesh, spec: &SurfaceDomainSpec, layers: usize) -> Result<ColumnMesh> {
    if layers == 0 {
        return Err(Error::InvalidDomain("layer count must be at least 1".into()));
    }
    let sigma = (0..=layers).map(|i| i as f64 / layers as f64).collect();
    extrude_with_sigma(sm, spec, sigma)
}

/// Extrusion with explicit sigma levels.
pub fn extrude_with_sigma(sm: &SurfaceMesh, spec: &SurfaceDomainSpec, sigma: Vec<f64>) -> Result<ColumnMesh> {
    let layers = sigma.len().saturating_sub(1);
    if layers == 0 || sigma[0] != 0.0 || sigma[layers] != 1.0 || sigma.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidDomain(format!("sigma levels must increase from 0 to 1: {sigma:?}")));
    }
    let depth = validate_depths(spec, sm)?;
    let ns = sm.nodes.len();
    let mut nodes = Vec::with_capacity(ns * (layers + 1));
    for s in &sigma {
        for (i, p) in sm.nodes.iter().enumerate() {
            let z = if *s == 0.0 { 0.0 } else { -s * depth[i] };
            nodes.push([p[0], p[1], z]);
        }
    }
    let nt = sm.triangles.len();
    let mut tets = Vec::with_capacity(3 * nt * layers);
    let mut column_of_tet = Vec::with_capacity(tets.capacity());
    let mut layer_of_tet = Vec::with_capacity(tets.capacity());
    let mut prism_tets = Vec::with_capacity(nt * layers);
    for (c, tri) in sm.triangles.iter().enumerate() {
        for l in 0..layers {
            let top = tri.map(|s| l * ns + s);
            let bot = tri.map(|s| (l + 1) * ns + s);
            let mut ids = [0usize; 3];
            for (k, mut t) in split_prism(bot, top).into_iter().enumerate() {
                let v = signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
                if v == 0.0 {
                    return Err(Error::NonconformingSplit(format!("degenerate tet in column {c} layer {l}")));
                }
                if v < 0.0 {
                    t.swap(2, 3);
                }
                ids[k] = tets.len();
                tets.push(t);
                column_of_tet.push(c);
                layer_of_tet.push(l);
            }
            prism_tets.push(ids);
        }
    }
    let boundary_faces = tag_faces(&tets, ns, layers)?;
    let expected = 2 * nt + sm.boundary_edges.len() * 2 * layers;
    if boundary_faces.len() != expected {
        return Err(Error::NonconformingSplit(format!(
            "{} boundary faces, expected {expected}",
            boundary_faces.len()
        )));
    }
    let mut mesh = ColumnMesh {
        surface: Arc::new(sm.clone()),
        depth,
        sigma_levels: sigma,
        nodes,
        tets,
        column_of_tet,
        layer_of_tet,
        prism_tets,
        boundary_faces,
        h: 0.0,
    };
    mesh.h = (0..mesh.tets.len()).map(|t| mesh.tet_diameter(t)).fold(0.0, f64::max);
    Ok(mesh)
}

fn tag_faces(tets: &[[usize; 4]], ns: usize, layers: usize) -> Result<Vec<BoundaryFace>> {
    let mut owners: HashMap<[usize; 3], (usize, usize)> = HashMap::with_capacity(tets.len() * 2);
    for (t, tet) in tets.iter().enumerate() {
        for f in LOCAL_FACES {
            let mut key = f.map(|i| tet[i]);
            key.sort_unstable();
            let e = owners.entry(key).or_insert((0, t));
            e.0 += 1;
            if e.0 > 2 {
                return Err(Error::NonconformingSplit(format!("face {key:?} shared by more than two tets")));
            }
        }
    }
    let mut faces: Vec<BoundaryFace> = owners
        .into_iter()
        .filter(|(_, (n, _))| *n == 1)
        .map(|(key, (_, tet))| {
            let levels = key.map(|n| n / ns);
            let tag = if levels.iter().all(|&l| l == 0) {
                FaceTag::Surface
            } else if levels.iter().all(|&l| l == layers) {
                FaceTag::Bottom
            } else {
                FaceTag::Lateral
            };
            BoundaryFace { nodes: key, tag, tet }
        })
        .collect();
    faces.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    Ok(faces)
}

/// Mesh at refinement `level`: surface size `h0 / 2^level`, `L0 * 2^level` layers.
pub fn refine_uniform(spec: &SurfaceDomainSpec, h0: f64, layers0: usize, level: u32) -> Result<ColumnMesh> {
    let scale = 2usize.pow(level);
    let sm = build_surface_mesh(spec, h0 / scale as f64)?;
    extrude_iso_sigma(&sm, spec, layers0 * scale)
}
