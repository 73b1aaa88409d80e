//! Simplicial triangulations of polygonal domains with labelled boundary sides.
//!
//! Local conventions used throughout the crate: for a triangle `[a, b, c]` the local
//! side `j` is the side opposite the local vertex `j`, so side 0 is `(b, c)`, side 1 is
//! `(c, a)` and side 2 is `(a, b)`. Triangles are stored with positive orientation.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("polygon needs at least three vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not simple: edges {0} and {1} intersect")]
    NotSimple(usize, usize),
    #[error("polygon has {edges} edges but {labels} boundary labels")]
    UnlabeledBoundary { edges: usize, labels: usize },
    #[error("boundary segment {0:?}-{1:?} is not covered by a label rule")]
    UnlabeledSegment(Point, Point),
    #[error("triangle {0} has non-positive area")]
    Degenerate(usize),
    #[error("side {0:?} is shared by more than two triangles")]
    NonManifold([usize; 2]),
    #[error("mesh has no Dirichlet side")]
    NoDirichlet,
    #[error("failed to triangulate polygon (no ear found)")]
    EarClipping,
    #[error("mesh file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boundary part a boundary side belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryLabel {
    Dirichlet,
    Neumann,
    Contact,
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryLabel::Dirichlet => "dirichlet",
            BoundaryLabel::Neumann => "neumann",
            BoundaryLabel::Contact => "contact",
        })
    }
}

impl FromStr for BoundaryLabel {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" | "d" => Ok(BoundaryLabel::Dirichlet),
            "neumann" | "n" => Ok(BoundaryLabel::Neumann),
            "contact" | "c" => Ok(BoundaryLabel::Contact),
            other => Err(MeshError::Parse(format!("unknown boundary label `{other}`"))),
        }
    }
}

/// A side (edge) of the triangulation.
#[derive(Debug, Clone)]
pub struct Side {
    pub vertices: [usize; 2],
    /// `T_-`; for interior sides the element with the lower index.
    pub minus: usize,
    /// `T_+`, absent on the boundary.
    pub plus: Option<usize>,
    /// Unit normal pointing from `T_-` into `T_+`; outward on the boundary.
    pub normal: Point,
    pub length: f64,
    pub midpoint: Point,
    pub label: Option<BoundaryLabel>,
}

impl Side {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }
}

/// Polygonal domain with one boundary label per polygon edge. Edge `i` runs from vertex
/// `i` to vertex `i + 1` (cyclically), so labels can only change at polygon vertices.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub polygon: Vec<Point>,
    pub edge_labels: Vec<BoundaryLabel>,
}

impl DomainSpec {
    pub fn new(polygon: Vec<Point>, edge_labels: Vec<BoundaryLabel>) -> Result<Self, MeshError> {
        let domain = Self { polygon, edge_labels };
        domain.validate()?;
        Ok(domain)
    }

    /// Unit square with the bottom edge as contact boundary and Dirichlet elsewhere.
    pub fn unit_square_contact_bottom() -> Self {
        use BoundaryLabel::*;
        Self {
            polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            edge_labels: vec![Contact, Dirichlet, Dirichlet, Dirichlet],
        }
    }

    /// `(-1,1)^2`: contact at the bottom, Dirichlet on the top and on the upper half of the
    /// right edge, Neumann on the rest.
    pub fn contact_corner_square() -> Self {
        use BoundaryLabel::*;
        Self {
            polygon: vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 1.0]],
            edge_labels: vec![Contact, Neumann, Dirichlet, Dirichlet, Neumann],
        }
    }

    fn validate(&self) -> Result<(), MeshError> {
        let n = self.polygon.len();
        if n < 3 {
            return Err(MeshError::TooFewVertices(n));
        }
        if self.edge_labels.len() != n {
            return Err(MeshError::UnlabeledBoundary { edges: n, labels: self.edge_labels.len() });
        }
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = (self.polygon[i], self.polygon[(i + 1) % n]);
                let (c, d) = (self.polygon[j], self.polygon[(j + 1) % n]);
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    if collinear_overlap(a, b, c, d) {
                        return Err(MeshError::NotSimple(i, j));
                    }
                } else if segments_intersect(a, b, c, d) {
                    return Err(MeshError::NotSimple(i, j));
                }
            }
        }
        if signed_area(&self.polygon) <= 0.0 {
            return Err(MeshError::Parse("polygon must be counter-clockwise".into()));
        }
        Ok(())
    }

    /// Label of a boundary segment, found as the polygon edge containing both endpoints.
    pub fn label_of_segment(&self, a: Point, b: Point) -> Option<BoundaryLabel> {
        let n = self.polygon.len();
        (0..n)
            .find(|&i| {
                let (p, q) = (self.polygon[i], self.polygon[(i + 1) % n]);
                on_segment(p, q, a) && on_segment(p, q, b)
            })
            .map(|i| self.edge_labels[i])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.polygon)
    }
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(p: Point, q: Point, x: Point) -> bool {
    let scale = (q[0] - p[0]).abs() + (q[1] - p[1]).abs();
    let tol = 1e-12 * scale.max(1.0);
    if orient(p, q, x).abs() > tol * scale {
        return false;
    }
    x[0] >= p[0].min(q[0]) - tol
        && x[0] <= p[0].max(q[0]) + tol
        && x[1] >= p[1].min(q[1]) - tol
        && x[1] <= p[1].max(q[1]) + tol
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn collinear_overlap(a: Point, b: Point, c: Point, d: Point) -> bool {
    // Edges (a,b) and (c,d) share one endpoint; they overlap only if collinear and folding back.
    if orient(a, b, c).abs() > 0.0 || orient(a, b, d).abs() > 0.0 {
        return false;
    }
    let (shared, u, v) = if b == c { (b, a, d) } else { (a, b, c) };
    let du = [u[0] - shared[0], u[1] - shared[1]];
    let dv = [v[0] - shared[0], v[1] - shared[1]];
    du[0] * dv[0] + du[1] * dv[1] > 0.0
}

/// Triangulation with side connectivity and cached geometry.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    sides: Vec<Side>,
    /// Global side index of each local side (opposite local vertex `j`).
    element_sides: Vec<[usize; 3]>,
    areas: Vec<f64>,
}

impl Mesh {
    /// Builds connectivity from raw vertices, positively oriented triangles, and labels for
    /// boundary sides keyed by their (unordered) vertex pair.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_labels: &HashMap<[usize; 2], BoundaryLabel>,
    ) -> Result<Self, MeshError> {
        Self::assemble(vertices, triangles, |a, b| boundary_labels.get(&sorted_pair(a, b)).copied())
    }

    fn assemble(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        label: impl Fn(usize, usize) -> Option<BoundaryLabel>,
    ) -> Result<Self, MeshError> {
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let area = 0.5 * orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(MeshError::Degenerate(t));
            }
            areas.push(area);
        }

        let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(3 * triangles.len() / 2 + 4);
        let mut sides: Vec<Side> = Vec::with_capacity(3 * triangles.len() / 2 + 4);
        let mut element_sides = vec![[0usize; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for j in 0..3 {
                let (a, b) = (tri[(j + 1) % 3], tri[(j + 2) % 3]);
                let key = sorted_pair(a, b);
                let s = match index.get(&key) {
                    Some(&s) => {
                        let side = &mut sides[s];
                        if side.plus.is_some() {
                            return Err(MeshError::NonManifold(key));
                        }
                        side.plus = Some(t);
                        s
                    }
                    None => {
                        let (pa, pb) = (vertices[a], vertices[b]);
                        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                        let length = dx.hypot(dy);
                        // (a, b) runs counter-clockwise around t, so (dy, -dx) points outward.
                        let s = sides.len();
                        sides.push(Side {
                            vertices: [a, b],
                            minus: t,
                            plus: None,
                            normal: [dy / length, -dx / length],
                            length,
                            midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                            label: None,
                        });
                        index.insert(key, s);
                        s
                    }
                };
                element_sides[t][j] = s;
            }
        }
        // Triangles are visited in index order, so `minus` already holds the lower index
        // and the stored normal is the outward normal of `T_-`.
        for side in sides.iter_mut().filter(|s| s.plus.is_none()) {
            let [a, b] = side.vertices;
            side.label = label(a, b);
            if side.label.is_none() {
                return Err(MeshError::UnlabeledSegment(vertices[a], vertices[b]));
            }
        }
        let mesh = Self { vertices, triangles, sides, element_sides, areas };
        if !mesh.sides.iter().any(|s| s.label == Some(BoundaryLabel::Dirichlet)) {
            return Err(MeshError::NoDirichlet);
        }
        Ok(mesh)
    }

    /// Triangulates the polygon by ear clipping and labels boundary sides from the
    /// polygon edges. Ears are searched starting from the second polygon vertex, which
    /// splits the unit square along the diagonal from `(0,0)` to `(1,1)`.
    pub fn build(domain: &DomainSpec) -> Result<Self, MeshError> {
        domain.validate()?;
        let poly = &domain.polygon;
        let n = poly.len();
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut triangles = Vec::with_capacity(n - 2);
        while remaining.len() > 3 {
            let m = remaining.len();
            let ear = (0..m).map(|k| (k + 1) % m).find(|&k| {
                let (ia, ib, ic) = (remaining[(k + m - 1) % m], remaining[k], remaining[(k + 1) % m]);
                let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
                if orient(a, b, c) <= 0.0 {
                    return false;
                }
                remaining.iter().all(|&q| {
                    q == ia || q == ib || q == ic || !point_in_triangle(poly[q], a, b, c)
                })
            });
            let k = ear.ok_or(MeshError::EarClipping)?;
            triangles.push([remaining[(k + m - 1) % m], remaining[k], remaining[(k + 1) % m]]);
            remaining.remove(k);
        }
        triangles.push([remaining[0], remaining[1], remaining[2]]);
        let vertices = poly.clone();
        Self::assemble(vertices, triangles, |a, b| {
            let (pa, pb) = (poly[a], poly[b]);
            domain.label_of_segment(pa, pb)
        })
    }

    /// Structured `nx x ny` grid of an axis-aligned rectangle, each cell split along its
    /// lower-left to upper-right diagonal. Labels come from `domain`.
    pub fn rectangle_grid(
        domain: &DomainSpec,
        lower: Point,
        upper: Point,
        nx: usize,
        ny: usize,
    ) -> Result<Self, MeshError> {
        domain.validate()?;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = lower[0] + (upper[0] - lower[0]) * i as f64 / nx as f64;
                let y = lower[1] + (upper[1] - lower[1]) * j as f64 / ny as f64;
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let pts = vertices.clone();
        Self::assemble(vertices, triangles, |a, b| domain.label_of_segment(pts[a], pts[b]))
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn side(&self, s: usize) -> &Side {
        &self.sides[s]
    }

    pub fn element_sides(&self, t: usize) -> [usize; 3] {
        self.element_sides[t]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_sides(&self) -> usize {
        self.sides.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Vertex coordinates of element `t`.
    pub fn element_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.element_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Diameter of element `t` (its longest side).
    pub fn diameter(&self, t: usize) -> f64 {
        self.element_sides[t].iter().map(|&s| self.sides[s].length).fold(0.0, f64::max)
    }

    /// Outward unit normal of element `t` on its local side `j`.
    pub fn outward_normal(&self, t: usize, j: usize) -> Point {
        let n = self.sides[self.element_sides[t][j]].normal;
        let sigma = self.orientation(t, j);
        [sigma * n[0], sigma * n[1]]
    }

    /// `+1` if the fixed side normal is the outward normal of `t` on local side `j`, else `-1`.
    pub fn orientation(&self, t: usize, j: usize) -> f64 {
        if self.sides[self.element_sides[t][j]].minus == t {
            1.0
        } else {
            -1.0
        }
    }

    /// Largest element diameter.
    pub fn h_max(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Averaged mesh size `(|Omega| / #vertices)^(1/2)`.
    pub fn h_avg(&self) -> f64 {
        (self.total_area() / self.num_vertices() as f64).sqrt()
    }

    pub fn boundary_sides(&self, label: BoundaryLabel) -> impl Iterator<Item = usize> + '_ {
        self.sides.iter().enumerate().filter(move |(_, s)| s.label == Some(label)).map(|(i, _)| i)
    }

    pub fn count_sides(&self, label: BoundaryLabel) -> usize {
        self.boundary_sides(label).count()
    }

    /// Elements adjacent to each vertex.
    pub fn vertex_patches(&self) -> Vec<Vec<usize>> {
        let mut patches = vec![Vec::new(); self.num_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                patches[v].push(t);
            }
        }
        patches
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.num_elements())
            .flat_map(|t| {
                let p = self.element_points(t);
                (0..3).map(move |i| {
                    let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                    let u = [b[0] - a[0], b[1] - a[1]];
                    let v = [c[0] - a[0], c[1] - a[1]];
                    let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                    cos.clamp(-1.0, 1.0).acos()
                })
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut counts = vec![0usize; self.num_sides()];
        for sides in &self.element_sides {
            for &s in sides {
                counts[s] += 1;
            }
        }
        for (s, side) in self.sides.iter().enumerate() {
            match (side.plus.is_some(), counts[s], side.label) {
                (true, 2, None) | (false, 1, Some(_)) => {}
                _ => return Err(format!("side {s} has inconsistent adjacency or label")),
            }
            if let Some(plus) = side.plus {
                if plus <= side.minus {
                    return Err(format!("side {s}: T_- must have the lower index"));
                }
                let jm = self.local_index(side.minus, s);
                let jp = self.local_index(plus, s);
                let (nm, np) = (self.outward_normal(side.minus, jm), self.outward_normal(plus, jp));
                if (nm[0] - side.normal[0]).abs() + (nm[1] - side.normal[1]).abs() > 1e-12
                    || (np[0] + side.normal[0]).abs() + (np[1] + side.normal[1]).abs() > 1e-12
                {
                    return Err(format!("side {s}: normal is not consistent with T_-/T_+"));
                }
            }
        }
        if self.areas.iter().any(|&a| a <= 0.0) {
            return Err("non-positive element area".into());
        }
        if self.count_sides(BoundaryLabel::Dirichlet) == 0 {
            return Err("empty Dirichlet boundary".into());
        }
        Ok(())
    }

    /// Local index of side `s` in element `t`.
    pub fn local_index(&self, t: usize, s: usize) -> usize {
        self.element_sides[t].iter().position(|&x| x == s).expect("side is not part of the element")
    }

    fn boundary_label_map(&self) -> HashMap<[usize; 2], BoundaryLabel> {
        self.sides
            .iter()
            .filter_map(|s| s.label.map(|l| (sorted_pair(s.vertices[0], s.vertices[1]), l)))
            .collect()
    }

    /// Writes the plain-text mesh format.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), MeshError> {
        let boundary: Vec<&Side> = self.sides.iter().filter(|s| s.is_boundary()).collect();
        writeln!(out, "vertices {} triangles {} sides {}", self.vertices.len(), self.triangles.len(), boundary.len())?;
        for v in &self.vertices {
            writeln!(out, "{:?} {:?}", v[0], v[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        for s in boundary {
            let label = s.label.expect("boundary side carries a label");
            writeln!(out, "{} {} {}", s.vertices[0], s.vertices[1], label)?;
        }
        Ok(())
    }

    /// Reads the plain-text mesh format written by [`Mesh::write_text`].
    pub fn read_text<R: BufRead>(input: R) -> Result<Self, MeshError> {
        let mut lines = input.lines().filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let header = lines.next().ok_or_else(|| MeshError::Parse("empty file".into()))??;
        let words: Vec<&str> = header.split_whitespace().collect();
        let count = |key: &str, pos: usize| -> Result<usize, MeshError> {
            if words.get(pos) != Some(&key) {
                return Err(MeshError::Parse(format!("expected `{key}` in header")));
            }
            words
                .get(pos + 1)
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| MeshError::Parse(format!("bad `{key}` count")))
        };
        let (nv, nt, ns) = (count("vertices", 0)?, count("triangles", 2)?, count("sides", 4)?);
        let mut next_fields = |what: &str| -> Result<Vec<String>, MeshError> {
            let line = lines.next().ok_or_else(|| MeshError::Parse(format!("missing {what} record")))??;
            Ok(line.split_whitespace().map(str::to_owned).collect())
        };
        let parse_err = |what: &str| MeshError::Parse(format!("malformed {what} record"));
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f = next_fields("vertex")?;
            if f.len() != 2 {
                return Err(parse_err("vertex"));
            }
            let x = f[0].parse().map_err(|_| parse_err("vertex"))?;
            let y = f[1].parse().map_err(|_| parse_err("vertex"))?;
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f = next_fields("triangle")?;
            let idx: Result<Vec<usize>, _> = f.iter().map(|w| w.parse()).collect();
            match idx {
                Ok(v) if v.len() == 3 && v.iter().all(|&i| i < nv) => triangles.push([v[0], v[1], v[2]]),
                _ => return Err(parse_err("triangle")),
            }
        }
        let mut labels = HashMap::with_capacity(ns);
        for _ in 0..ns {
            let f = next_fields("side")?;
            if f.len() != 3 {
                return Err(parse_err("side"));
            }
            let a: usize = f[0].parse().map_err(|_| parse_err("side"))?;
            let b: usize = f[1].parse().map_err(|_| parse_err("side"))?;
            labels.insert(sorted_pair(a, b), f[2].parse()?);
        }
        Self::from_parts(vertices, triangles, &labels)
    }

    /// Uniform red refinement: every triangle is split into four similar children.
    pub fn red_refine(&self) -> Mesh {
        let mut midpoint_of_side = vec![usize::MAX; self.num_sides()];
        let mut vertices = self.vertices.clone();
        for (s, side) in self.sides.iter().enumerate() {
            midpoint_of_side[s] = vertices.len();
            vertices.push(side.midpoint);
        }
        let mut triangles = Vec::with_capacity(4 * self.num_elements());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            let [sa, sb, sc] = self.element_sides[t];
            let (ma, mb, mc) = (midpoint_of_side[sa], midpoint_of_side[sb], midpoint_of_side[sc]);
            triangles.push([a, mc, mb]);
            triangles.push([mc, b, ma]);
            triangles.push([mb, ma, c]);
            triangles.push([ma, mb, mc]);
        }
        let labels = self.refined_labels(&midpoint_of_side);
        Mesh::from_parts(vertices, triangles, &labels).expect("red refinement preserves validity")
    }

    fn refined_labels(&self, midpoint_of_side: &[usize]) -> HashMap<[usize; 2], BoundaryLabel> {
        let mut labels = self.boundary_label_map();
        for (s, side) in self.sides.iter().enumerate() {
            let (Some(label), m) = (side.label, midpoint_of_side[s]) else { continue };
            if m != usize::MAX {
                let [a, b] = side.vertices;
                labels.insert(sorted_pair(a, m), label);
                labels.insert(sorted_pair(m, b), label);
            }
        }
        labels
    }

    /// Conforming red-green-blue refinement of the marked elements; see [`Mesh::rgb_refine_with_parents`].
    pub fn rgb_refine(&self, marked: &MarkedSet) -> Mesh {
        self.rgb_refine_with_parents(marked).0
    }

    /// Red-green-blue refinement with the longest side of each element as its reference
    /// side. Marked elements get all three sides marked; the closure then marks the
    /// reference side of every element with a marked side, after which each element is
    /// refined green (reference side only), blue (reference side and one more) or red.
    /// Also returns the parent element of each child.
    pub fn rgb_refine_with_parents(&self, marked: &MarkedSet) -> (Mesh, Vec<usize>) {
        let ne = self.num_elements();
        // Rotate every element so that its local side 2 (vertices 0 -> 1) is the longest.
        let rotated: Vec<[usize; 3]> = (0..ne)
            .map(|t| {
                let tri = self.triangles[t];
                let lens = self.element_sides[t].map(|s| self.sides[s].length);
                // Side opposite local vertex j; pick the longest, ties broken by lowest j.
                let mut j = 0;
                for k in 1..3 {
                    if lens[k] > lens[j] * (1.0 + 1e-12) {
                        j = k;
                    }
                }
                // Want the longest side to run between new vertices 0 and 1, i.e. opposite new vertex 2.
                [tri[(j + 1) % 3], tri[(j + 2) % 3], tri[j]]
            })
            .collect();
        let side_index = |t: usize, a: usize, b: usize| -> usize {
            let [x, y, z] = self.element_sides[t];
            for s in [x, y, z] {
                let [p, q] = self.sides[s].vertices;
                if (p == a && q == b) || (p == b && q == a) {
                    return s;
                }
            }
            unreachable!("side not found in element")
        };
        let reference: Vec<usize> = (0..ne).map(|t| side_index(t, rotated[t][0], rotated[t][1])).collect();

        let mut side_marked = vec![false; self.num_sides()];
        for &t in &marked.elements {
            for s in self.element_sides[t] {
                side_marked[s] = true;
            }
        }
        loop {
            let mut changed = false;
            for t in 0..ne {
                if !side_marked[reference[t]] && self.element_sides[t].iter().any(|&s| side_marked[s]) {
                    side_marked[reference[t]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint_of_side = vec![usize::MAX; self.num_sides()];
        for (s, side) in self.sides.iter().enumerate() {
            if side_marked[s] {
                midpoint_of_side[s] = vertices.len();
                vertices.push(side.midpoint);
            }
        }

        let mut triangles = Vec::with_capacity(ne + 3 * marked.elements.len() + 8);
        let mut parents = Vec::with_capacity(triangles.capacity());
        for t in 0..ne {
            let [v1, v2, v3] = rotated[t];
            let m1 = midpoint_of_side[reference[t]];
            let m2 = midpoint_of_side[side_index(t, v2, v3)];
            let m3 = midpoint_of_side[side_index(t, v3, v1)];
            let children: Vec<[usize; 3]> = match (m1 != usize::MAX, m2 != usize::MAX, m3 != usize::MAX) {
                (false, _, _) => vec![self.triangles[t]],
                (true, false, false) => vec![[v3, v1, m1], [v2, v3, m1]],
                (true, true, false) => vec![[v3, v1, m1], [m1, v2, m2], [v3, m1, m2]],
                (true, false, true) => vec![[m1, v3, m3], [v1, m1, m3], [v2, v3, m1]],
                (true, true, true) => vec![[v1, m1, m3], [m1, v2, m2], [m3, m2, v3], [m2, m3, m1]],
            };
            for c in children {
                triangles.push(c);
                parents.push(t);
            }
        }
        let labels = self.refined_labels(&midpoint_of_side);
        let mesh = Mesh::from_parts(vertices, triangles, &labels).expect("rgb refinement preserves validity");
        (mesh, parents)
    }

    /// Barycentric coordinates of `x` with respect to element `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.element_points(t);
        let det = orient(a, b, c);
        let l1 = orient(x, b, c) / det;
        let l2 = orient(a, x, c) / det;
        [l1, l2, 1.0 - l1 - l2]
    }
}

fn point_in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Elements selected for refinement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkedSet {
    pub elements: Vec<usize>,
}

impl MarkedSet {
    /// Sorted, deduplicated set; panics on out-of-range indices.
    pub fn new(mut elements: Vec<usize>, num_elements: usize) -> Self {
        elements.sort_unstable();
        elements.dedup();
        assert!(elements.last().is_none_or(|&t| t < num_elements), "marked element out of range");
        Self { elements }
    }

    pub fn all(num_elements: usize) -> Self {
        Self { elements: (0..num_elements).collect() }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}
