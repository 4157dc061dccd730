//! Conforming triangulations of axis-aligned rectangles.
//!
//! The uniform mesh splits each grid square along its anti-diagonal (top-left
//! to bottom-right corner). Vertices are numbered lexicographically,
//! `index = j * nx + i` with `i` the column (x) and `j` the row (y).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use libm::{fabs, sqrt};

use crate::{Error, Point, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }

    /// Closed containment.
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other.x0 >= self.x0 - tol
            && other.x1 <= self.x1 + tol
            && other.y0 >= self.y0 - tol
            && other.y1 <= self.y1 + tol
    }

    fn is_valid(&self) -> bool {
        self.x1 > self.x0 && self.y1 > self.y0 && self.area().is_finite()
    }
}

/// Which side of the bounding rectangle a boundary edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> Point {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }
}

/// An edge shared by two triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorFace {
    /// Index into [`Mesh::edges`].
    pub edge: usize,
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: usize,
    /// Unit normal pointing from `left` into `right`.
    pub normal: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub vertices: [usize; 2],
    pub element: usize,
    pub normal: Point,
    pub side: Side,
}

/// Immutable simplicial complex with its face topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    interior_faces: Vec<InteriorFace>,
    boundary_edges: Vec<BoundaryEdge>,
    bounds: Rect,
    h: f64,
    grid: Option<(usize, usize)>,
}

/// Local edge `k` of a triangle joins local vertices `LOCAL_EDGES[k]`.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

impl Mesh {
    /// The `n × n` vertex uniform mesh of the unit square.
    pub fn unit_square(n: usize) -> Result<Mesh> {
        Mesh::rectangle(Rect::UNIT, n, n)
    }

    /// Uniform `nx × ny` vertex mesh of `rect`, each cell cut by its anti-diagonal.
    pub fn rectangle(rect: Rect, nx: usize, ny: usize) -> Result<Mesh> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument(format!(
                "a uniform mesh needs at least 2 vertices per direction, got {nx}×{ny}"
            )));
        }
        if !rect.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "degenerate rectangle {rect:?}"
            )));
        }
        let dx = rect.width() / (nx - 1) as f64;
        let dy = rect.height() / (ny - 1) as f64;
        let mut vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                // pin the last row/column exactly onto the rectangle
                let x = if i == nx - 1 {
                    rect.x1
                } else {
                    rect.x0 + i as f64 * dx
                };
                let y = if j == ny - 1 {
                    rect.y1
                } else {
                    rect.y0 + j as f64 * dy
                };
                vertices.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                let b = a + 1;
                let c = a + nx;
                let d = c + 1;
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            }
        }
        let mut mesh = Mesh::build(vertices, triangles, Some(rect))?;
        mesh.grid = Some((nx, ny));
        Ok(mesh)
    }

    /// Builds the topology of an arbitrary triangulation of a rectangle.
    ///
    /// Triangles must be counterclockwise with positive area. Every edge must
    /// be shared by at most two triangles and every unshared edge must lie on
    /// the bounding box; hanging nodes violate the latter.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        Mesh::build(vertices, triangles, None)
    }

    fn build(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        bounds: Option<Rect>,
    ) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::Structural("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Structural(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::Structural(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }
        let bounds = bounds.unwrap_or_else(|| bounding_box(&vertices));
        let scale = bounds.width().max(bounds.height());

        // sorted vertex pair -> incident (triangle, local edge)
        let mut incidence: BTreeMap<[usize; 2], Vec<(usize, usize)>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for (k, le) in LOCAL_EDGES.iter().enumerate() {
                let key = sorted_pair(tri[le[0]], tri[le[1]]);
                incidence.entry(key).or_default().push((t, k));
            }
        }

        let mut edges = Vec::with_capacity(incidence.len());
        let mut triangle_edges = alloc::vec![[usize::MAX; 3]; triangles.len()];
        let mut interior_faces = Vec::new();
        let mut boundary_edges = Vec::new();
        for (e, (key, inc)) in incidence.iter().enumerate() {
            edges.push(*key);
            for &(t, k) in inc {
                triangle_edges[t][k] = e;
            }
            let (pa, pb) = (vertices[key[0]], vertices[key[1]]);
            match inc.as_slice() {
                [(t, _)] => {
                    let side = classify_side(pa, pb, &bounds, scale).ok_or_else(|| {
                        Error::Structural(format!(
                            "edge {key:?} has one neighbour but is not on the domain boundary"
                        ))
                    })?;
                    let normal =
                        outward_normal(pa, pb, opposite_vertex(&vertices, &triangles[*t], *key));
                    boundary_edges.push(BoundaryEdge {
                        edge: e,
                        vertices: *key,
                        element: *t,
                        normal,
                        side,
                    });
                }
                [(t0, _), (t1, _)] => {
                    let (left, right) = if t0 < t1 { (*t0, *t1) } else { (*t1, *t0) };
                    let normal =
                        outward_normal(pa, pb, opposite_vertex(&vertices, &triangles[left], *key));
                    interior_faces.push(InteriorFace {
                        edge: e,
                        vertices: *key,
                        left,
                        right,
                        normal,
                    });
                }
                _ => {
                    return Err(Error::Structural(format!(
                        "edge {key:?} is shared by {} triangles",
                        inc.len()
                    )))
                }
            }
        }

        let h = triangles
            .iter()
            .map(|tri| {
                let p = tri.map(|v| vertices[v]);
                dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
            })
            .fold(0.0, f64::max);

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            interior_faces,
            boundary_edges,
            bounds,
            h,
            grid: None,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// All edges as sorted vertex pairs, in lexicographic order.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge index of local edge `k` (see [`LOCAL_EDGES`]) of each triangle.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn face_topology(&self) -> (&[InteriorFace], &[BoundaryEdge]) {
        (&self.interior_faces, &self.boundary_edges)
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    /// Global mesh parameter: the largest element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Vertex counts per direction for meshes built by [`Mesh::rectangle`].
    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        signed_area(p[0], p[1], p[2])
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let p = self.triangle_points(t);
        [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        on_boundary(
            self.vertices[v],
            &self.bounds,
            self.bounds.width().max(self.bounds.height()),
        )
    }

    /// Marks the elements whose barycenter lies in `rect`.
    pub fn mark_omega(&self, rect: Rect) -> Result<SubdomainMarking> {
        SubdomainMarking::new(self, rect)
    }
}

/// The elements approximating the measurement region `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMarking {
    omega_elements: Vec<usize>,
    mask: Vec<bool>,
    omega_rect: Rect,
}

impl SubdomainMarking {
    /// Barycenter-inclusion marking. Fails when `rect` leaves the domain or
    /// catches no element barycenter.
    pub fn new(mesh: &Mesh, rect: Rect) -> Result<Self> {
        if !rect.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "degenerate subdomain {rect:?}"
            )));
        }
        let domain = mesh.bounds();
        if !domain.contains_rect(&rect, 1e-12 * domain.width().max(domain.height())) {
            return Err(Error::InvalidArgument(format!(
                "subdomain {rect:?} is not contained in the domain {domain:?}"
            )));
        }
        let mask: Vec<bool> = (0..mesh.n_triangles())
            .map(|t| rect.contains(mesh.barycenter(t)))
            .collect();
        let omega_elements: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(t, _)| t)
            .collect();
        if omega_elements.is_empty() {
            return Err(Error::EmptyMarking(format!(
                "no element barycenter lies in {rect:?}; refine the mesh or enlarge the subdomain"
            )));
        }
        Ok(SubdomainMarking {
            omega_elements,
            mask,
            omega_rect: rect,
        })
    }

    pub fn elements(&self) -> &[usize] {
        &self.omega_elements
    }

    pub fn contains(&self, element: usize) -> bool {
        self.mask[element]
    }

    pub fn rect(&self) -> Rect {
        self.omega_rect
    }

    pub fn measure(&self, mesh: &Mesh) -> f64 {
        self.omega_elements.iter().map(|&t| mesh.area(t)).sum()
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    sqrt(dx * dx + dy * dy)
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn opposite_vertex(vertices: &[Point], tri: &[usize; 3], edge: [usize; 2]) -> Point {
    let v = tri
        .iter()
        .copied()
        .find(|v| *v != edge[0] && *v != edge[1])
        .expect("triangle has three distinct vertices");
    vertices[v]
}

fn outward_normal(a: Point, b: Point, opposite: Point) -> Point {
    let len = dist(a, b);
    let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
    let to_opp = [opposite[0] - a[0], opposite[1] - a[1]];
    if n[0] * to_opp[0] + n[1] * to_opp[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

fn bounding_box(vertices: &[Point]) -> Rect {
    let mut r = Rect::new(
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in vertices {
        r.x0 = r.x0.min(p[0]);
        r.x1 = r.x1.max(p[0]);
        r.y0 = r.y0.min(p[1]);
        r.y1 = r.y1.max(p[1]);
    }
    r
}

fn near(a: f64, b: f64, scale: f64) -> bool {
    fabs(a - b) <= 1e-12 * scale
}

fn on_boundary(p: Point, r: &Rect, scale: f64) -> bool {
    near(p[0], r.x0, scale)
        || near(p[0], r.x1, scale)
        || near(p[1], r.y0, scale)
        || near(p[1], r.y1, scale)
}

fn classify_side(a: Point, b: Point, r: &Rect, scale: f64) -> Option<Side> {
    if near(a[1], r.y0, scale) && near(b[1], r.y0, scale) {
        Some(Side::Bottom)
    } else if near(a[0], r.x1, scale) && near(b[0], r.x1, scale) {
        Some(Side::Right)
    } else if near(a[1], r.y1, scale) && near(b[1], r.y1, scale) {
        Some(Side::Top)
    } else if near(a[0], r.x0, scale) && near(b[0], r.x0, scale) {
        Some(Side::Left)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh_counts() {
        let m = Mesh::unit_square(2).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.boundary_edges().len(), 4);
        assert_eq!(m.interior_faces().len(), 1);
        // the single interior face is the anti-diagonal (0,1)-(1,0)
        let f = &m.interior_faces()[0];
        let [a, b] = f.vertices;
        let (pa, pb) = (m.vertices()[a], m.vertices()[b]);
        let mut ends = [pa, pb];
        ends.sort_by(|p, q| p[0].partial_cmp(&q[0]).unwrap());
        assert_eq!(ends, [[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn n6_counts_match_figure() {
        let m = Mesh::unit_square(6).unwrap();
        assert_eq!(
            (
                m.n_vertices(),
                m.n_triangles(),
                m.boundary_edges().len(),
                m.interior_faces().len()
            ),
            (36, 50, 20, 65)
        );
    }

    #[test]
    fn counts_follow_closed_forms() {
        for n in 2..12 {
            let m = Mesh::unit_square(n).unwrap();
            assert_eq!(m.n_vertices(), n * n);
            assert_eq!(m.n_triangles(), 2 * (n - 1) * (n - 1));
            assert_eq!(m.boundary_edges().len(), 4 * (n - 1));
            assert_eq!(
                m.interior_faces().len(),
                3 * (n - 1) * (n - 1) - 2 * (n - 1)
            );
            assert_eq!(
                2 * m.interior_faces().len() + m.boundary_edges().len(),
                3 * m.n_triangles()
            );
        }
    }

    #[test]
    fn mesh_parameter() {
        let m = Mesh::unit_square(21).unwrap();
        assert!((m.h() - core::f64::consts::SQRT_2 / 20.0).abs() < 1e-15);
        assert!((m.h() - 0.070710678).abs() < 1e-9);
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(matches!(
            Mesh::unit_square(1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Mesh::unit_square(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn positive_areas_and_ccw() {
        let m = Mesh::unit_square(7).unwrap();
        for t in 0..m.n_triangles() {
            assert!(m.area(t) > 0.0);
        }
    }

    #[test]
    fn boundary_normals_are_axis_aligned() {
        let m = Mesh::unit_square(9).unwrap();
        for b in m.boundary_edges() {
            assert_eq!(b.normal, b.side.outward_normal());
        }
    }

    #[test]
    fn interior_normal_is_outward_of_left() {
        let m = Mesh::unit_square(8).unwrap();
        for f in m.interior_faces() {
            let a = m.vertices()[f.vertices[0]];
            let cl = m.barycenter(f.left);
            let cr = m.barycenter(f.right);
            let dl = (cl[0] - a[0]) * f.normal[0] + (cl[1] - a[1]) * f.normal[1];
            let dr = (cr[0] - a[0]) * f.normal[0] + (cr[1] - a[1]) * f.normal[1];
            assert!(dl < 0.0 && dr > 0.0);
            assert!(((f.normal[0]).powi(2) + (f.normal[1]).powi(2) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn skeleton_length_identity() {
        let m = Mesh::unit_square(13).unwrap();
        let faces: f64 = m
            .interior_faces()
            .iter()
            .map(|f| m.edge_length(f.edge))
            .sum();
        let perimeters: f64 = (0..m.n_triangles())
            .map(|t| {
                let p = m.triangle_points(t);
                dist(p[0], p[1]) + dist(p[1], p[2]) + dist(p[2], p[0])
            })
            .sum();
        assert!((2.0 * faces - (perimeters - 4.0)).abs() < 1e-11);
    }

    #[test]
    fn omega_marking_whole_domain_and_outside() {
        let m = Mesh::unit_square(5).unwrap();
        let all = m.mark_omega(Rect::UNIT).unwrap();
        assert_eq!(all.elements().len(), m.n_triangles());
        assert!(m.mark_omega(Rect::new(2.0, 3.0, 2.0, 3.0)).is_err());
        // inside the domain but too thin to catch a barycenter
        assert!(matches!(
            m.mark_omega(Rect::new(0.0, 1.0, 0.0, 0.01)),
            Err(Error::EmptyMarking(_))
        ));
    }

    #[test]
    fn omega_marking_matches_brute_force_scan() {
        let m = Mesh::unit_square(21).unwrap();
        let rect = Rect::new(0.1, 0.9, 0.25, 0.75);
        let mk = m.mark_omega(rect).unwrap();
        let mut count = 0;
        for tri in m.triangles() {
            let (mut x, mut y) = (0.0, 0.0);
            for &v in tri {
                x += m.vertices()[v][0];
                y += m.vertices()[v][1];
            }
            x /= 3.0;
            y /= 3.0;
            if (0.1..=0.9).contains(&x) && (0.25..=0.75).contains(&y) {
                count += 1;
            }
        }
        assert_eq!(m.n_triangles(), 800);
        assert_eq!(mk.elements().len(), count);
        // aligned: ω is exactly 16 × 10 grid cells
        assert_eq!(count, 2 * 16 * 10);
        assert!((mk.measure(&m) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn non_conforming_input_is_rejected() {
        // conforming: an extra vertex on the bottom side is fine
        let v = alloc::vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.5, 0.0],
            [0.5, 0.5],
            [0.0, 1.0],
            [1.0, 1.0]
        ];
        let t = alloc::vec![[0, 2, 3], [2, 1, 3], [0, 3, 4], [3, 1, 5], [3, 5, 4]];
        assert!(Mesh::from_triangles(v, t).is_ok());
        let v = alloc::vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.5, 0.5],
            [0.25, 0.25]
        ];
        // triangle 0 uses the full diagonal 0-4 while triangles 1,2 split it at 5
        let t = alloc::vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 5], [3, 5, 4]];
        assert!(matches!(
            Mesh::from_triangles(v, t),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn clockwise_triangle_is_rejected() {
        let v = alloc::vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Mesh::from_triangles(v, alloc::vec![[0, 2, 1]]).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(
            Mesh::unit_square(17).unwrap(),
            Mesh::unit_square(17).unwrap()
        );
    }

    #[test]
    fn rectangle_side_tags() {
        let m = Mesh::rectangle(Rect::new(-1.0, 2.0, 0.5, 1.5), 7, 4).unwrap();
        assert_eq!(m.boundary_edges().len(), 2 * 6 + 2 * 3);
        let top = m
            .boundary_edges()
            .iter()
            .filter(|b| b.side == Side::Top)
            .count();
        assert_eq!(top, 6);
    }
}
