//! Continuous Lagrange spaces of degree 1 and 2.
//!
//! DOFs are numbered vertices first (in mesh vertex order), then edge
//! midpoints (in mesh edge order). Local numbering on a triangle: vertices
//! 0, 1, 2, then the midpoints of local edges (0,1), (1,2), (2,0).

use alloc::format;
use alloc::vec::Vec;

use crate::mesh::{Mesh, LOCAL_EDGES};
use crate::{Error, Point, Result};

/// Maximum number of local basis functions (P2).
pub const MAX_LOCAL: usize = 6;

/// Affine map data of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub points: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [Point; 3],
}

impl ElementGeometry {
    pub fn new(points: [Point; 3]) -> Result<Self> {
        let [p0, p1, p2] = points;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let scale = (p1[0] - p0[0])
            .abs()
            .max((p1[1] - p0[1]).abs())
            .max((p2[0] - p0[0]).abs())
            .max((p2[1] - p0[1]).abs());
        if !(det > 1e-14 * scale * scale) {
            return Err(Error::Structural(format!(
                "degenerate element Jacobian (det = {det:e})"
            )));
        }
        let grad_lambda = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Ok(ElementGeometry {
            points,
            area: 0.5 * det,
            grad_lambda,
        })
    }

    pub fn to_physical(&self, lambda: [f64; 3]) -> Point {
        let mut x = [0.0; 2];
        for (l, p) in lambda.iter().zip(&self.points) {
            x[0] += l * p[0];
            x[1] += l * p[1];
        }
        x
    }

    pub fn to_barycentric(&self, x: Point) -> [f64; 3] {
        let p0 = self.points[0];
        let d = [x[0] - p0[0], x[1] - p0[1]];
        let l1 = self.grad_lambda[1][0] * d[0] + self.grad_lambda[1][1] * d[1];
        let l2 = self.grad_lambda[2][0] * d[0] + self.grad_lambda[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Values and physical gradients of the local basis at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisEval {
    pub len: usize,
    pub values: [f64; MAX_LOCAL],
    pub grads: [Point; MAX_LOCAL],
}

#[derive(Debug, Clone)]
pub struct FeSpace<'m> {
    mesh: &'m Mesh,
    degree: usize,
    ndof: usize,
    dof_coords: Vec<Point>,
    cell_dofs: Vec<[usize; MAX_LOCAL]>,
    boundary_mask: Vec<bool>,
    geometry: Vec<ElementGeometry>,
}

impl<'m> FeSpace<'m> {
    pub fn new(mesh: &'m Mesh, degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::InvalidArgument(format!(
                "polynomial degree must be 1 or 2, got {degree}"
            )));
        }
        let nv = mesh.n_vertices();
        let ndof = if degree == 1 {
            nv
        } else {
            nv + mesh.edges().len()
        };
        let mut dof_coords: Vec<Point> = mesh.vertices().to_vec();
        if degree == 2 {
            for &[a, b] in mesh.edges() {
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                dof_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        let mut cell_dofs = Vec::with_capacity(mesh.n_triangles());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut d = [usize::MAX; MAX_LOCAL];
            d[..3].copy_from_slice(tri);
            if degree == 2 {
                for k in 0..3 {
                    d[3 + k] = nv + mesh.triangle_edges()[t][k];
                }
            }
            cell_dofs.push(d);
        }
        let mut boundary_mask = alloc::vec![false; ndof];
        for be in mesh.boundary_edges() {
            boundary_mask[be.vertices[0]] = true;
            boundary_mask[be.vertices[1]] = true;
            if degree == 2 {
                boundary_mask[nv + be.edge] = true;
            }
        }
        let geometry = (0..mesh.n_triangles())
            .map(|t| ElementGeometry::new(mesh.triangle_points(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeSpace {
            mesh,
            degree,
            ndof,
            dof_coords,
            cell_dofs,
            boundary_mask,
            geometry,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    /// Local basis size: 3 for P1, 6 for P2.
    pub fn n_local(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn cell_dofs(&self, element: usize) -> &[usize] {
        &self.cell_dofs[element][..self.n_local()]
    }

    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        self.boundary_mask[dof]
    }

    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.ndof).filter(|&d| self.boundary_mask[d]).collect()
    }

    pub fn geometry(&self, element: usize) -> &ElementGeometry {
        &self.geometry[element]
    }

    /// Basis values and physical gradients at a barycentric point of `element`.
    pub fn eval_basis(&self, element: usize, lambda: [f64; 3]) -> Result<BasisEval> {
        let geo = self
            .geometry
            .get(element)
            .ok_or_else(|| Error::InvalidArgument(format!("element {element} out of range")))?;
        Ok(eval_local(self.degree, geo, lambda))
    }

    /// Elementwise Laplacians of the local basis (constant on each triangle).
    pub fn basis_laplacians(&self, element: usize) -> [f64; MAX_LOCAL] {
        let mut out = [0.0; MAX_LOCAL];
        if self.degree == 1 {
            return out;
        }
        let g = &self.geometry[element].grad_lambda;
        let dot = |a: usize, b: usize| g[a][0] * g[b][0] + g[a][1] * g[b][1];
        for i in 0..3 {
            out[i] = 4.0 * dot(i, i);
        }
        for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
            out[3 + k] = 8.0 * dot(*a, *b);
        }
        out
    }

    /// `(u_h, ∇u_h)` at a barycentric point of `element`.
    pub fn evaluate(&self, coeffs: &[f64], element: usize, lambda: [f64; 3]) -> (f64, Point) {
        let b = eval_local(self.degree, &self.geometry[element], lambda);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (k, &d) in self.cell_dofs(element).iter().enumerate() {
            v += coeffs[d] * b.values[k];
            g[0] += coeffs[d] * b.grads[k][0];
            g[1] += coeffs[d] * b.grads[k][1];
        }
        (v, g)
    }

    /// Elementwise Laplacian of `u_h` on `element`.
    pub fn laplacian(&self, coeffs: &[f64], element: usize) -> f64 {
        let lap = self.basis_laplacians(element);
        self.cell_dofs(element)
            .iter()
            .enumerate()
            .map(|(k, &d)| coeffs[d] * lap[k])
            .sum()
    }

    /// Nodal interpolant: coefficients are `f` at the DOF nodes.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&p| f(p)).collect()
    }
}

fn eval_local(degree: usize, geo: &ElementGeometry, l: [f64; 3]) -> BasisEval {
    let g = &geo.grad_lambda;
    let mut values = [0.0; MAX_LOCAL];
    let mut grads = [[0.0; 2]; MAX_LOCAL];
    if degree == 1 {
        values[..3].copy_from_slice(&l);
        grads[..3].copy_from_slice(g);
        return BasisEval {
            len: 3,
            values,
            grads,
        };
    }
    for i in 0..3 {
        values[i] = l[i] * (2.0 * l[i] - 1.0);
        let c = 4.0 * l[i] - 1.0;
        grads[i] = [c * g[i][0], c * g[i][1]];
    }
    for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
        values[3 + k] = 4.0 * l[*a] * l[*b];
        grads[3 + k] = [
            4.0 * (l[*a] * g[*b][0] + l[*b] * g[*a][0]),
            4.0 * (l[*a] * g[*b][1] + l[*b] * g[*a][1]),
        ];
    }
    BasisEval {
        len: 6,
        values,
        grads,
    }
}
