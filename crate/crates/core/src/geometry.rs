//! Domains, triangular meshes with tagged boundary components, and the
//! analytic capacity and distance helpers that go with them.
//!
//! Boundary tag convention: `0` is the outer component, `1..=m` are the inner
//! components in the order they were listed.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid radii: need 0 < R1 < R2, got R1 = {inner}, R2 = {outer}")]
    InvalidRadii { inner: f64, outer: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid mesh resolution: {0}")]
    InvalidResolution(String),
    #[error("point ({}, {}) lies outside the domain", .0[0], .0[1])]
    PointOutsideDomain(Point),
    #[error("operation needs a loaded mesh for domain `{0}`")]
    RequiresMesh(String),
    #[error("mesh invariant violated: {0}")]
    InvariantViolation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    fn signed_distance(&self, p: Point) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1]) - self.radius
    }

    fn project(&self, p: Point) -> Point {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let d = dx.hypot(dy);
        [
            self.center[0] + self.radius * dx / d,
            self.center[1] + self.radius * dy / d,
        ]
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            center: [self.center[0] * s, self.center[1] * s],
            radius: self.radius * s,
        }
    }
}

/// Domain description. Radii and centers are absolute; use [`DomainSpec::scale`]
/// to obtain the dilated domain `{λz : z ∈ Ω}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainSpec {
    Annulus {
        inner_radius: f64,
        outer_radius: f64,
        dimension: usize,
    },
    MultiHole {
        outer: Circle,
        holes: Vec<Circle>,
    },
    ExternalMesh {
        path: PathBuf,
        scale: f64,
    },
}

impl DomainSpec {
    pub fn annulus(inner_radius: f64, outer_radius: f64) -> Result<Self, GeometryError> {
        let spec = DomainSpec::Annulus {
            inner_radius,
            outer_radius,
            dimension: 2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            DomainSpec::Annulus {
                inner_radius,
                outer_radius,
                dimension,
            } => {
                check_radii(*inner_radius, *outer_radius)?;
                if *dimension < 2 {
                    return Err(GeometryError::InvalidDomain(format!(
                        "dimension must be at least 2, got {dimension}"
                    )));
                }
            }
            DomainSpec::MultiHole { outer, holes } => {
                if !(outer.radius > 0.0) {
                    return Err(GeometryError::InvalidDomain("outer radius must be positive".into()));
                }
                for (k, hole) in holes.iter().enumerate() {
                    if !(hole.radius > 0.0) {
                        return Err(GeometryError::InvalidDomain(format!(
                            "hole {} has non-positive radius",
                            k + 1
                        )));
                    }
                    let d = dist(hole.center, outer.center);
                    if d + hole.radius >= outer.radius {
                        return Err(GeometryError::InvalidDomain(format!(
                            "hole {} is not contained in the open outer disk",
                            k + 1
                        )));
                    }
                    for (l, other) in holes.iter().enumerate().skip(k + 1) {
                        if dist(hole.center, other.center) <= hole.radius + other.radius {
                            return Err(GeometryError::InvalidDomain(format!(
                                "holes {} and {} overlap",
                                k + 1,
                                l + 1
                            )));
                        }
                    }
                }
                let origin = [0.0, 0.0];
                let in_outer = outer.signed_distance(origin) <= 0.0;
                let in_hole = holes.iter().any(|h| h.signed_distance(origin) < 0.0);
                if in_outer && !in_hole {
                    return Err(GeometryError::InvalidDomain(
                        "the origin must not lie in the closure of the domain".into(),
                    ));
                }
            }
            DomainSpec::ExternalMesh { scale, .. } => {
                if !(*scale > 0.0) {
                    return Err(GeometryError::NonPositiveScale(*scale));
                }
            }
        }
        Ok(())
    }

    /// Dilates the domain by `lambda`, keeping the boundary tags.
    pub fn scale(&self, lambda: f64) -> Result<Self, GeometryError> {
        if !(lambda > 0.0) {
            return Err(GeometryError::NonPositiveScale(lambda));
        }
        Ok(match self {
            DomainSpec::Annulus {
                inner_radius,
                outer_radius,
                dimension,
            } => DomainSpec::Annulus {
                inner_radius: inner_radius * lambda,
                outer_radius: outer_radius * lambda,
                dimension: *dimension,
            },
            DomainSpec::MultiHole { outer, holes } => DomainSpec::MultiHole {
                outer: outer.scaled(lambda),
                holes: holes.iter().map(|h| h.scaled(lambda)).collect(),
            },
            DomainSpec::ExternalMesh { path, scale } => DomainSpec::ExternalMesh {
                path: path.clone(),
                scale: scale * lambda,
            },
        })
    }

    /// Number of boundary components, when known without reading a mesh.
    pub fn component_count(&self) -> Option<usize> {
        match self {
            DomainSpec::Annulus { .. } => Some(2),
            DomainSpec::MultiHole { holes, .. } => Some(holes.len() + 1),
            DomainSpec::ExternalMesh { .. } => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            DomainSpec::Annulus { .. } => "annulus",
            DomainSpec::MultiHole { .. } => "multihole",
            DomainSpec::ExternalMesh { .. } => "mesh",
        }
    }

    /// Euclidean distance from `x` to the boundary; zero on the boundary.
    pub fn dist_to_boundary(&self, x: Point) -> Result<f64, GeometryError> {
        // points within this band of the boundary count as on it
        const SLACK: f64 = 1e-12;
        match self {
            DomainSpec::Annulus {
                inner_radius,
                outer_radius,
                ..
            } => {
                let r = x[0].hypot(x[1]);
                let tol = SLACK * outer_radius;
                if r < inner_radius - tol || r > outer_radius + tol {
                    return Err(GeometryError::PointOutsideDomain(x));
                }
                Ok((r - inner_radius).min(outer_radius - r).max(0.0))
            }
            DomainSpec::MultiHole { outer, holes } => {
                let tol = SLACK * outer.radius;
                let mut d = -outer.signed_distance(x);
                if d < -tol {
                    return Err(GeometryError::PointOutsideDomain(x));
                }
                for hole in holes {
                    let dh = hole.signed_distance(x);
                    if dh < -tol {
                        return Err(GeometryError::PointOutsideDomain(x));
                    }
                    d = d.min(dh);
                }
                Ok(d.max(0.0))
            }
            DomainSpec::ExternalMesh { .. } => Err(GeometryError::RequiresMesh(self.name().into())),
        }
    }

    /// Builds a mesh for this domain. Annuli are generated; external meshes are
    /// read and dilated by their scale. Multi-hole domains must come from files.
    pub fn mesh(&self, nr: usize, ntheta: usize) -> Result<Mesh, GeometryError> {
        match self {
            DomainSpec::Annulus {
                inner_radius,
                outer_radius,
                dimension,
            } => {
                if *dimension != 2 {
                    return Err(GeometryError::InvalidDomain(format!(
                        "meshing is only available in two dimensions, got N = {dimension}"
                    )));
                }
                generate_annulus_mesh(*inner_radius, *outer_radius, nr, ntheta)
            }
            DomainSpec::MultiHole { .. } => Err(GeometryError::RequiresMesh(self.name().into())),
            DomainSpec::ExternalMesh { path, scale } => Ok(read_mesh(path)?.scaled(*scale)),
        }
    }
}

fn check_radii(inner: f64, outer: f64) -> Result<(), GeometryError> {
    if inner > 0.0 && outer > inner && outer.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidRadii { inner, outer })
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// H¹-capacity of the planar annulus `R1 < |x| < R2`: `2π / ln(R2/R1)`.
pub fn annulus_capacity(inner: f64, outer: f64) -> Result<f64, GeometryError> {
    check_radii(inner, outer)?;
    Ok(2.0 * PI / (outer / inner).ln())
}

/// Capacity of the dilated domain in `N` dimensions: `λ^(N-2) · cap_base`.
pub fn capacity_scaling(dimension: usize, lambda: f64, cap_base: f64) -> Result<f64, GeometryError> {
    if dimension < 2 {
        return Err(GeometryError::InvalidDomain(format!(
            "dimension must be at least 2, got {dimension}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(GeometryError::NonPositiveScale(lambda));
    }
    if !(cap_base >= 0.0) {
        return Err(GeometryError::InvalidDomain(format!(
            "capacity must be non-negative, got {cap_base}"
        )));
    }
    Ok(lambda.powi(dimension as i32 - 2) * cap_base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: usize,
}

/// Planar triangulation with tagged boundary components.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    /// Exact circle carrying each boundary component, when known.
    circles: Vec<Option<Circle>>,
    /// Nodes of each component, sorted.
    component_nodes: Vec<Vec<usize>>,
    /// Component tag per node, `None` for interior nodes.
    node_tags: Vec<Option<usize>>,
}

impl Mesh {
    /// Validates the invariants and builds the mesh. Boundary circles are
    /// detected from the node positions.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, GeometryError> {
        let (component_nodes, node_tags) = validate(&nodes, &triangles, &boundary_edges)?;
        let circles = component_nodes.iter().map(|ids| detect_circle(&nodes, ids)).collect();
        Ok(Self {
            nodes,
            triangles,
            boundary_edges,
            circles,
            component_nodes,
            node_tags,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn component_count(&self) -> usize {
        self.component_nodes.len()
    }

    pub fn component_nodes(&self, tag: usize) -> &[usize] {
        &self.component_nodes[tag]
    }

    pub fn node_tag(&self, node: usize) -> Option<usize> {
        self.node_tags[node]
    }

    pub fn boundary_circle(&self, tag: usize) -> Option<Circle> {
        self.circles.get(tag).copied().flatten()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, s] = self.triangle_points(t);
        signed_area(p, q, s)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    /// Distance from `x` to the union of boundary edges.
    pub fn dist_to_boundary(&self, x: Point) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| point_segment_distance(x, self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of a triangle containing `x` together with its barycentric
    /// coordinates.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let area = signed_area(a, b, c);
            let l0 = signed_area(x, b, c) / area;
            let l1 = signed_area(a, x, c) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -TOL && l1 >= -TOL && l2 >= -TOL {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }

    /// Dilated copy; circles and tags follow the nodes.
    pub fn scaled(&self, s: f64) -> Mesh {
        let mut out = self.clone();
        for p in &mut out.nodes {
            p[0] *= s;
            p[1] *= s;
        }
        for c in out.circles.iter_mut().flatten() {
            *c = c.scaled(s);
        }
        out
    }

    /// Uniform red refinement: every triangle is split into four through its
    /// edge midpoints. Midpoints of boundary edges lying on a known circle are
    /// projected onto it.
    pub fn refine(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut boundary_tag: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.boundary_edges {
            boundary_tag.insert(edge_key(e.nodes[0], e.nodes[1]), e.tag);
        }
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            let key = edge_key(a, b);
            *midpoint.entry(key).or_insert_with(|| {
                let (pa, pb) = (nodes[a], nodes[b]);
                let mut m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
                if let Some(&tag) = boundary_tag.get(&key) {
                    if let Some(circle) = self.circles[tag] {
                        m = circle.project(m);
                    }
                }
                nodes.push(m);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for e in &self.boundary_edges {
            let m = mid(e.nodes[0], e.nodes[1], &mut nodes);
            boundary_edges.push(BoundaryEdge {
                nodes: [e.nodes[0], m],
                tag: e.tag,
            });
            boundary_edges.push(BoundaryEdge {
                nodes: [m, e.nodes[1]],
                tag: e.tag,
            });
        }
        let (component_nodes, node_tags) =
            validate(&nodes, &triangles, &boundary_edges).expect("refinement preserves mesh invariants");
        Mesh {
            nodes,
            triangles,
            boundary_edges,
            circles: self.circles.clone(),
            component_nodes,
            node_tags,
        }
    }

    pub fn refined(&self, times: usize) -> Mesh {
        let mut mesh = self.clone();
        for _ in 0..times {
            mesh = mesh.refine();
        }
        mesh
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut buf = String::new();
        buf.push_str("NONLOCAL-MESH v1\n");
        let _ = writeln!(buf, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            // 17 significant digits round-trip every f64
            let _ = writeln!(buf, "{:.16e} {:.16e}", p[0], p[1]);
        }
        let _ = writeln!(buf, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(buf, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(buf, "boundary_edges {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(buf, "{} {} {}", e.nodes[0], e.nodes[1], e.tag);
        }
        out.write_all(buf.as_bytes())
    }

    pub fn read<R: Read>(input: R) -> Result<Mesh, GeometryError> {
        let mut lines = BufReader::new(input)
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter_map(|(n, l)| match l {
                Ok(l) => {
                    let content = l.split('#').next().unwrap_or("").trim().to_string();
                    (!content.is_empty()).then_some(Ok((n, content)))
                }
                Err(e) => Some(Err(e)),
            });
        let mut next = |what: &str| -> Result<(usize, String), GeometryError> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(e.into()),
                None => Err(GeometryError::Parse {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let (n, header) = next("header")?;
        if header != "NONLOCAL-MESH v1" {
            return Err(parse_err(n, format!("bad header `{header}`")));
        }
        let count = |line: (usize, String), key: &str| -> Result<usize, GeometryError> {
            let (n, text) = line;
            let mut it = text.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(k), Some(Ok(c)), None) if k == key => Ok(c),
                _ => Err(parse_err(n, format!("expected `{key} <count>`, found `{text}`"))),
            }
        };
        let n_nodes = count(next("nodes section")?, "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (n, text) = next("node coordinates")?;
            let v: Vec<f64> = parse_fields(n, &text, 2)?;
            nodes.push([v[0], v[1]]);
        }
        let n_tri = count(next("triangles section")?, "triangles")?;
        let mut triangles = Vec::with_capacity(n_tri);
        for _ in 0..n_tri {
            let (n, text) = next("triangle")?;
            let v: Vec<usize> = parse_fields(n, &text, 3)?;
            triangles.push([v[0], v[1], v[2]]);
        }
        let n_edges = count(next("boundary_edges section")?, "boundary_edges")?;
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let (n, text) = next("boundary edge")?;
            let v: Vec<usize> = parse_fields(n, &text, 3)?;
            edges.push(BoundaryEdge {
                nodes: [v[0], v[1]],
                tag: v[2],
            });
        }
        if let Some(Ok((n, text))) = lines.next() {
            return Err(parse_err(n, format!("trailing content `{text}`")));
        }
        Mesh::new(nodes, triangles, edges)
    }
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh, GeometryError> {
    Mesh::read(std::fs::File::open(path)?)
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let file = std::fs::File::create(path)?;
    mesh.write(std::io::BufWriter::new(file))?;
    Ok(())
}

fn parse_err(line: usize, message: String) -> GeometryError {
    GeometryError::Parse { line, message }
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str, n: usize) -> Result<Vec<T>, GeometryError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != n {
        return Err(parse_err(line, format!("expected {n} fields, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>()
                .map_err(|_| parse_err(line, format!("cannot parse `{f}`")))
        })
        .collect()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ax = [x[0] - a[0], x[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ax[0] * ab[0] + ax[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(x, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

type Components = (Vec<Vec<usize>>, Vec<Option<usize>>);

fn validate(nodes: &[Point], triangles: &[[usize; 3]], edges: &[BoundaryEdge]) -> Result<Components, GeometryError> {
    let bad = |m: String| Err(GeometryError::InvariantViolation(m));
    if let Some(i) = nodes.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return bad(format!("node {i} has non-finite coordinates"));
    }
    if triangles.is_empty() {
        return bad("mesh has no triangles".into());
    }
    let n = nodes.len();
    for (t, tri) in triangles.iter().enumerate() {
        if tri.iter().any(|&i| i >= n) {
            return bad(format!("triangle {t} references a missing node"));
        }
    }
    let areas: Vec<f64> = triangles
        .iter()
        .map(|t| signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]))
        .collect();
    let total: f64 = areas.iter().map(|a| a.abs()).sum();
    if let Some(t) = areas.iter().position(|&a| !(a > 1e-14 * total)) {
        return bad(format!(
            "triangle {t} has area {:e} (degenerate or clockwise)",
            areas[t]
        ));
    }

    // every edge with a single incident triangle must be tagged, and vice versa
    let mut incidence: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *incidence.entry(edge_key(a, b)).or_default() += 1;
        }
    }
    if let Some((e, c)) = incidence.iter().find(|(_, &c)| c > 2) {
        return bad(format!("edge {e:?} is shared by {c} triangles"));
    }
    let mut tagged: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        if e.nodes.iter().any(|&v| v >= n) || e.nodes[0] == e.nodes[1] {
            return bad(format!("boundary edge {i} has invalid nodes"));
        }
        let key = edge_key(e.nodes[0], e.nodes[1]);
        match incidence.get(&key) {
            Some(1) => {}
            Some(_) => return bad(format!("boundary edge {i} is interior to the mesh")),
            None => return bad(format!("boundary edge {i} belongs to no triangle")),
        }
        if tagged.insert(key, e.tag).is_some() {
            return bad(format!("boundary edge {i} listed twice"));
        }
    }
    if let Some((e, _)) = incidence.iter().find(|(k, &c)| c == 1 && !tagged.contains_key(k)) {
        return bad(format!("edge {e:?} lies on the boundary but carries no tag"));
    }

    let max_tag = edges.iter().map(|e| e.tag).max().unwrap_or(0);
    let mut per_tag: Vec<Vec<[usize; 2]>> = vec![Vec::new(); max_tag + 1];
    for e in edges {
        per_tag[e.tag].push(e.nodes);
    }
    let mut node_tags = vec![None; n];
    let mut component_nodes = Vec::with_capacity(per_tag.len());
    for (tag, list) in per_tag.iter().enumerate() {
        if list.is_empty() {
            return bad(format!(
                "boundary tags must be contiguous from 0; tag {tag} is missing (max tag {max_tag})"
            ));
        }
        let loop_nodes = closed_loop(list).ok_or_else(|| {
            GeometryError::InvariantViolation(format!("boundary tag {tag} does not form one closed simple loop"))
        })?;
        for &v in &loop_nodes {
            if let Some(other) = node_tags[v] {
                return bad(format!("node {v} is shared by boundary components {other} and {tag}"));
            }
            node_tags[v] = Some(tag);
        }
        let mut sorted = loop_nodes;
        sorted.sort_unstable();
        component_nodes.push(sorted);
    }
    if component_nodes.is_empty() {
        return bad("mesh has no boundary".into());
    }
    Ok((component_nodes, node_tags))
}

/// Nodes of the edge list if it forms a single closed simple loop.
fn closed_loop(edges: &[[usize; 2]]) -> Option<Vec<usize>> {
    let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &[a, b] in edges {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    if edges.len() < 3 || adjacency.values().any(|nb| nb.len() != 2) {
        return None;
    }
    let start = *adjacency.keys().next()?;
    let mut visited = vec![start];
    let (mut prev, mut cur) = (start, adjacency[&start][0]);
    while cur != start {
        visited.push(cur);
        let nb = &adjacency[&cur];
        let next = if nb[0] == prev { nb[1] } else { nb[0] };
        prev = cur;
        cur = next;
        if visited.len() > edges.len() {
            return None;
        }
    }
    (visited.len() == adjacency.len()).then_some(visited)
}

/// Circle through all listed nodes, if there is one (relative tolerance 1e-12).
fn detect_circle(nodes: &[Point], ids: &[usize]) -> Option<Circle> {
    if ids.len() < 3 {
        return None;
    }
    let a = nodes[ids[0]];
    let b = nodes[ids[ids.len() / 3]];
    let c = nodes[ids[2 * ids.len() / 3]];
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d == 0.0 {
        return None;
    }
    let sq = |p: Point| p[0] * p[0] + p[1] * p[1];
    let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / d;
    let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / d;
    let mut center = [ux, uy];
    let scale = ids
        .iter()
        .map(|&i| nodes[i][0].abs().max(nodes[i][1].abs()))
        .fold(0.0, f64::max);
    // snap round-off in the center so that origin-centred circles stay exact
    for v in &mut center {
        if v.abs() < 1e-12 * scale {
            *v = 0.0;
        }
    }
    let radii: Vec<f64> = ids.iter().map(|&i| dist(nodes[i], center)).collect();
    let radius = radii.iter().sum::<f64>() / radii.len() as f64;
    radii
        .iter()
        .all(|r| (r - radius).abs() <= 1e-12 * radius.max(scale))
        .then_some(Circle { center, radius })
}

/// Structured annulus mesh refined `refinements` times by doubling both the
/// radial and angular resolution, which keeps the alternating diagonals.
pub fn annulus_mesh(
    inner_radius: f64,
    outer_radius: f64,
    nr: usize,
    ntheta: usize,
    refinements: usize,
) -> Result<Mesh, GeometryError> {
    if refinements > 12 {
        return Err(GeometryError::InvalidResolution(format!(
            "{refinements} refinements is too many"
        )));
    }
    let k = refinements as u32;
    generate_annulus_mesh(inner_radius, outer_radius, nr << k, ntheta << k)
}

/// Structured polar mesh of the annulus `R1 < |x| < R2`.
///
/// Node `(i, j)` sits at radius `R1 + i (R2 - R1)/nr` and angle `2πj/nθ`, with
/// index `i·nθ + j`. Each polar cell is split into two counter-clockwise
/// triangles. Tag 1 marks `|x| = R1`, tag 0 marks `|x| = R2`.
pub fn generate_annulus_mesh(inner: f64, outer: f64, nr: usize, ntheta: usize) -> Result<Mesh, GeometryError> {
    check_radii(inner, outer)?;
    if nr < 1 || ntheta < 3 {
        return Err(GeometryError::InvalidResolution(format!(
            "need nr >= 1 and ntheta >= 3, got nr = {nr}, ntheta = {ntheta}"
        )));
    }
    let id = |i: usize, j: usize| i * ntheta + (j % ntheta);
    let mut nodes = Vec::with_capacity((nr + 1) * ntheta);
    for i in 0..=nr {
        let r = if i == nr {
            outer
        } else {
            inner + i as f64 * (outer - inner) / nr as f64
        };
        for j in 0..ntheta {
            let theta = 2.0 * PI * j as f64 / ntheta as f64;
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nr * ntheta);
    for i in 0..nr {
        for j in 0..ntheta {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // alternate the diagonal so the mesh has no preferred direction
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let mut edges = Vec::with_capacity(2 * ntheta);
    for j in 0..ntheta {
        edges.push(BoundaryEdge {
            nodes: [id(nr, j), id(nr, j + 1)],
            tag: 0,
        });
    }
    for j in 0..ntheta {
        edges.push(BoundaryEdge {
            nodes: [id(0, j + 1), id(0, j)],
            tag: 1,
        });
    }
    let (component_nodes, node_tags) = validate(&nodes, &triangles, &edges)?;
    Ok(Mesh {
        nodes,
        triangles,
        boundary_edges: edges,
        circles: vec![
            Some(Circle::new([0.0, 0.0], outer)),
            Some(Circle::new([0.0, 0.0], inner)),
        ],
        component_nodes,
        node_tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn annulus_refinement_doubles_resolution() {
        let m = annulus_mesh(1.0, 2.0, 4, 8, 2).unwrap();
        assert_eq!(m.node_count(), 17 * 32);
        assert_eq!(m.triangles().len(), 2 * 16 * 32);
        assert!(annulus_mesh(1.0, 2.0, 4, 8, 40).is_err());
    }

    #[test]
    fn scaling_specs() {
        let a = DomainSpec::annulus(1.0, 2.0).unwrap();
        assert_eq!(a.scale(3.0).unwrap(), DomainSpec::annulus(3.0, 6.0).unwrap());
        assert_eq!(a.scale(1.0).unwrap(), a);
        assert!(matches!(a.scale(0.0), Err(GeometryError::NonPositiveScale(_))));
        let m = DomainSpec::MultiHole {
            outer: Circle::new([0.0, 0.0], 4.0),
            holes: vec![Circle::new([0.0, 0.0], 1.0), Circle::new([2.0, 0.0], 0.5)],
        };
        let DomainSpec::MultiHole { holes, outer } = m.scale(2.0).unwrap() else {
            unreachable!()
        };
        assert_eq!(holes[1].center, [4.0, 0.0]);
        assert_eq!(holes[1].radius, 1.0);
        assert_eq!(outer.radius, 8.0);
    }

    #[test]
    fn multihole_validation() {
        let origin_inside = DomainSpec::MultiHole {
            outer: Circle::new([0.0, 0.0], 4.0),
            holes: vec![Circle::new([2.0, 0.0], 0.5)],
        };
        assert!(origin_inside.validate().is_err());
        let overlapping = DomainSpec::MultiHole {
            outer: Circle::new([0.0, 0.0], 4.0),
            holes: vec![Circle::new([0.0, 0.0], 1.0), Circle::new([1.2, 0.0], 0.5)],
        };
        assert!(overlapping.validate().is_err());
        let poking_out = DomainSpec::MultiHole {
            outer: Circle::new([0.0, 0.0], 4.0),
            holes: vec![Circle::new([0.0, 0.0], 1.0), Circle::new([3.6, 0.0], 0.5)],
        };
        assert!(poking_out.validate().is_err());
    }

    #[test]
    fn capacities() {
        let c = annulus_capacity(1.0, 2.0).unwrap();
        assert!((c - 9.064_720_283_654_388).abs() < 1e-12);
        for lambda in [0.3, 1.0, 7.5] {
            let cl = annulus_capacity(lambda, 2.0 * lambda).unwrap();
            assert!((cl - c).abs() < 1e-12 * c);
        }
        assert!((annulus_capacity(1.0, std::f64::consts::E).unwrap() - 2.0 * PI).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for lambda in [1.5, 2.0, 4.0, 10.0] {
            let v = annulus_capacity(1.0, lambda).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(annulus_capacity(2.0, 1.0).is_err());
        assert!(annulus_capacity(0.0, 1.0).is_err());

        assert_eq!(capacity_scaling(2, 17.0, 3.5).unwrap(), 3.5);
        assert_eq!(capacity_scaling(3, 2.0, 5.0).unwrap(), 10.0);
        assert_eq!(capacity_scaling(4, 3.0, 1.0).unwrap(), 9.0);
        assert!(capacity_scaling(1, 3.0, 1.0).is_err());
    }

    #[test]
    fn annulus_distances() {
        let a = DomainSpec::annulus(1.0, 2.0).unwrap();
        assert!((a.dist_to_boundary([1.5, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(a.dist_to_boundary([0.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(
            a.dist_to_boundary([0.5, 0.0]),
            Err(GeometryError::PointOutsideDomain(_))
        ));
        let lambda = 3.7;
        let s = a.scale(lambda).unwrap();
        let d = s.dist_to_boundary([1.5 * lambda, 0.0]).unwrap();
        assert!((d - lambda / 2.0).abs() < 1e-14);
    }

    #[test]
    fn annulus_mesh_counts() {
        let m = generate_annulus_mesh(1.0, 2.0, 4, 8).unwrap();
        assert_eq!(m.node_count(), 40);
        assert_eq!(m.triangles().len(), 64);
        assert_eq!(m.boundary_edges().len(), 16);
        assert_eq!(m.component_count(), 2);
        assert!((0..64).all(|t| m.signed_area(t) > 0.0));
        for p in m.nodes() {
            let r = p[0].hypot(p[1]);
            let i = ((r - 1.0) * 4.0).round();
            assert!((r - (1.0 + i / 4.0)).abs() < 1e-14);
        }
        for &v in m.component_nodes(1) {
            let p = m.nodes()[v];
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-15);
        }
        assert!(generate_annulus_mesh(1.0, 2.0, 0, 8).is_err());
        assert!(generate_annulus_mesh(1.0, 2.0, 2, 2).is_err());
    }

    #[test]
    fn refinement_counts_and_projection() {
        let m = generate_annulus_mesh(1.0, 2.0, 2, 8).unwrap();
        let r = m.refine();
        assert_eq!(r.triangles().len(), 4 * m.triangles().len());
        for tag in 0..2 {
            let before = m.boundary_edges().iter().filter(|e| e.tag == tag).count();
            let after = r.boundary_edges().iter().filter(|e| e.tag == tag).count();
            assert_eq!(after, 2 * before);
        }
        for &v in r.component_nodes(0) {
            let p = r.nodes()[v];
            assert!((p[0].hypot(p[1]) - 2.0).abs() < 1e-14);
        }
        // area converges to 3π from below
        let exact = 3.0 * PI;
        let e0 = exact - m.area();
        let e1 = exact - r.area();
        assert!(e1 > 0.0 && e1 < e0 / 3.0);
    }

    #[test]
    fn refinement_keeps_shape_regularity() {
        let mut m = generate_annulus_mesh(1.0, 3.0, 4, 12).unwrap();
        for _ in 0..3 {
            let r = m.refine();
            assert!(r.min_angle() >= 0.5 * m.min_angle());
            m = r;
        }
    }

    #[test]
    fn mesh_round_trip() {
        let m = generate_annulus_mesh(1.0, 2.0, 3, 7).unwrap().refine();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = Mesh::read(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn mesh_file_through_disk() {
        let m = generate_annulus_mesh(2.0, 5.0, 2, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mesh");
        write_mesh(&m, &path).unwrap();
        assert_eq!(read_mesh(&path).unwrap(), m);
    }

    fn square_with_hole_text(tag: usize, degenerate: bool) -> String {
        // unit square minus nothing: two triangles, one loop
        let third = if degenerate { "0 1 1" } else { "0 1 2" };
        format!(
            "NONLOCAL-MESH v1\n# a comment\nnodes 4\n0 0\n1 0\n1 1\n0 1\ntriangles 2\n{third}\n0 2 3\nboundary_edges 4\n0 1 {tag}\n1 2 {tag}\n2 3 {tag}\n3 0 {tag}\n"
        )
    }

    #[test]
    fn mesh_read_checks_invariants() {
        assert!(Mesh::read(square_with_hole_text(0, false).as_bytes()).is_ok());
        assert!(matches!(
            Mesh::read(square_with_hole_text(0, true).as_bytes()),
            Err(GeometryError::InvariantViolation(_))
        ));
        assert!(matches!(
            Mesh::read(square_with_hole_text(3, false).as_bytes()),
            Err(GeometryError::InvariantViolation(_))
        ));
        // annulus with one inner edge retagged as 3
        let m = generate_annulus_mesh(1.0, 2.0, 2, 6).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.trim_end().rsplit_once('\n').unwrap();
        let edited = format!(
            "{}\n{}\n",
            last.0,
            last.1.rsplit_once(' ').unwrap().0.to_string() + " 3"
        );
        assert!(matches!(
            Mesh::read(edited.as_bytes()),
            Err(GeometryError::InvariantViolation(_))
        ));
    }

    #[test]
    fn mesh_read_reports_line_numbers() {
        let text = "NONLOCAL-MESH v1\nnodes 2\n0 0\n1 oops\n";
        match Mesh::read(text.as_bytes()) {
            Err(GeometryError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn capacity_scale_invariant(r1 in 0.1f64..5.0, ratio in 1.01f64..10.0, lambda in 0.01f64..100.0) {
            let a = annulus_capacity(r1, r1 * ratio).unwrap();
            let b = annulus_capacity(lambda * r1, lambda * r1 * ratio).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }

        #[test]
        fn distance_is_one_lipschitz(
            r in 1.0f64..2.0, t in 0.0f64..6.3,
            s in 1.0f64..2.0, u in 0.0f64..6.3,
        ) {
            let a = DomainSpec::annulus(1.0, 2.0).unwrap();
            let p = [r * t.cos(), r * t.sin()];
            let q = [s * u.cos(), s * u.sin()];
            // test along the radial segment between the two radii at angle t
            let q_radial = [s * t.cos(), s * t.sin()];
            let dp = a.dist_to_boundary(p).unwrap();
            let dq = a.dist_to_boundary(q_radial).unwrap();
            prop_assert!((dp - dq).abs() <= dist(p, q_radial) + 1e-12);
            let _ = q;
        }
    }
}
