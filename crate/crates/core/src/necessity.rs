//! The counterexample to naive data fitting on the uniform P1 mesh: a nonzero
//! discrete harmonic function, driven by a zero-mean boundary load, that
//! vanishes on every interior node.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::fe_space::FeSpace;
use crate::forms::{assemble_blocks, assemble_rhs, stiffness_matrix};
use crate::linalg::{nullspace, CsrMatrix, DenseMatrix};
use crate::mesh::{Mesh, Rect};
use crate::problem::ProblemData;
use crate::quadrature::{triangle_rule, MAX_TRIANGLE_EXACTNESS};
use crate::solver::{build_two_field, triple_norm};
use crate::trace_space::{Beta, TraceSpace};
use crate::{Error, Point, Result};

/// The nodal stiffness matrix split into interior and boundary unknowns.
#[derive(Debug, Clone)]
pub struct PartitionedStiffness {
    pub n: usize,
    pub interior_dofs: Vec<usize>,
    pub boundary_dofs: Vec<usize>,
    /// Interior × interior.
    pub a_int: CsrMatrix,
    /// Interior × boundary.
    pub coupling: CsrMatrix,
    /// Boundary × boundary.
    pub d_bnd: CsrMatrix,
}

impl PartitionedStiffness {
    /// Interior rows of the coupling block with a nonzero entry.
    pub fn nonzero_coupling_rows(&self) -> Vec<usize> {
        (0..self.coupling.nrows())
            .filter(|&i| self.coupling.row(i).any(|(_, v)| v != 0.0))
            .collect()
    }

    /// Scatters the three blocks back into one `n² × n²` matrix.
    pub fn reassemble(&self) -> DenseMatrix {
        let nn = self.n * self.n;
        let mut full = DenseMatrix::zeros(nn, nn);
        for (i, j, v) in self.a_int.iter() {
            full.set(self.interior_dofs[i], self.interior_dofs[j], v);
        }
        for (i, j, v) in self.coupling.iter() {
            full.set(self.interior_dofs[i], self.boundary_dofs[j], v);
            full.set(self.boundary_dofs[j], self.interior_dofs[i], v);
        }
        for (i, j, v) in self.d_bnd.iter() {
            full.set(self.boundary_dofs[i], self.boundary_dofs[j], v);
        }
        full
    }
}

/// P1 stiffness of the `n × n` unit-square mesh, partitioned. Requires `n > 3`.
pub fn partition_stiffness(n: usize) -> Result<PartitionedStiffness> {
    if n <= 3 {
        return Err(Error::InvalidArgument(format!(
            "the construction needs n > 3, got {n}"
        )));
    }
    let mesh = Mesh::unit_square(n)?;
    let space = FeSpace::new(&mesh, 1)?;
    let k = stiffness_matrix(&space)?;
    let (boundary_dofs, interior_dofs): (Vec<usize>, Vec<usize>) =
        (0..space.ndof()).partition(|&d| space.is_boundary_dof(d));
    Ok(PartitionedStiffness {
        n,
        a_int: k.submatrix(&interior_dofs, &interior_dofs),
        coupling: k.submatrix(&interior_dofs, &boundary_dofs),
        d_bnd: k.submatrix(&boundary_dofs, &boundary_dofs),
        interior_dofs,
        boundary_dofs,
    })
}

/// A nonzero discrete function with zero interior coefficients solving the
/// Neumann problem for a zero-mean boundary load.
#[derive(Debug, Clone)]
pub struct GhostFunction {
    pub n: usize,
    /// Coefficients over all of `V_h`.
    pub coefficients: Vec<f64>,
    /// Boundary part `α₂`.
    pub boundary_coefficients: Vec<f64>,
    pub nullspace_dim: usize,
    pub nonzero_coupling_rows: usize,
    /// Numerical rank of the coupling block.
    pub coupling_rank: usize,
    /// `max |coupling · α₂|`: the interior equations.
    pub interior_residual: f64,
    /// `|eᵀ D α₂|`.
    pub load_mean: f64,
    /// `‖D α₂‖₁`.
    pub load_l1: f64,
    /// Largest nodal value on `[1/(n−1), 1 − 1/(n−1)]²`.
    pub max_inside: f64,
    pub max_abs: f64,
}

impl GhostFunction {
    /// `[1/(n−1), 1 − 1/(n−1)]²`, where the ghost vanishes.
    pub fn vanishing_region(&self) -> Rect {
        inner_square(self.n)
    }

    pub fn scaled(&self, c: f64) -> Vec<f64> {
        self.coefficients.iter().map(|v| c * v).collect()
    }
}

fn inner_square(n: usize) -> Rect {
    let s = 1.0 / (n - 1) as f64;
    Rect::new(s, 1.0 - s, s, 1.0 - s)
}

/// Stacks the nonzero coupling rows with `eᵀD` and takes the first null
/// vector. Fails with an assertion error if the null space has dimension
/// below 7 or the result does not have the expected properties to `tol`.
pub fn find_ghost(n: usize, tol: f64) -> Result<GhostFunction> {
    let part = partition_stiffness(n)?;
    let nb = part.boundary_dofs.len();
    let rows = part.nonzero_coupling_rows();
    let mut stacked = DenseMatrix::zeros(rows.len() + 1, nb);
    for (r, &i) in rows.iter().enumerate() {
        for (j, v) in part.coupling.row(i) {
            stacked.set(r, j, v);
        }
    }
    let ones = vec![1.0; nb];
    let e_d = part.d_bnd.matvec_transpose(&ones);
    for (j, v) in e_d.iter().enumerate() {
        stacked.set(rows.len(), j, *v);
    }
    let null = nullspace(&stacked, 1e-10)?;
    if null.ncols() < 7 {
        return Err(Error::Assertion(format!(
            "null space has dimension {} < 7 at n = {n}",
            null.ncols()
        )));
    }
    let mut coupling_dense = DenseMatrix::zeros(rows.len(), nb);
    for (r, &i) in rows.iter().enumerate() {
        for (j, v) in part.coupling.row(i) {
            coupling_dense.set(r, j, v);
        }
    }
    let coupling_rank = nb - nullspace(&coupling_dense, 1e-10)?.ncols();

    let alpha2 = null.column(0);
    let mut coefficients = vec![0.0; n * n];
    for (k, &d) in part.boundary_dofs.iter().enumerate() {
        coefficients[d] = alpha2[k];
    }
    let interior_residual = part
        .coupling
        .matvec(&alpha2)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let load = part.d_bnd.matvec(&alpha2);
    let load_mean = load.iter().sum::<f64>().abs();
    let load_l1 = load.iter().map(|v| v.abs()).sum::<f64>();

    let mesh = Mesh::unit_square(n)?;
    let region = inner_square(n);
    let eps = 1e-12;
    let max_abs = coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_inside = mesh
        .vertices()
        .iter()
        .zip(&coefficients)
        .filter(|(p, _)| {
            p[0] >= region.x0 - eps
                && p[0] <= region.x1 + eps
                && p[1] >= region.y0 - eps
                && p[1] <= region.y1 + eps
        })
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));

    let ghost = GhostFunction {
        n,
        coefficients,
        boundary_coefficients: alpha2,
        nullspace_dim: null.ncols(),
        nonzero_coupling_rows: rows.len(),
        coupling_rank,
        interior_residual,
        load_mean,
        load_l1,
        max_inside,
        max_abs,
    };
    if !(ghost.max_abs > 0.0) {
        return Err(Error::Assertion("ghost function is zero".into()));
    }
    if ghost.max_inside > tol * ghost.max_abs {
        return Err(Error::Assertion(format!(
            "ghost does not vanish inside: {:e}",
            ghost.max_inside
        )));
    }
    let scale = part.coupling.max_abs() * ghost.max_abs;
    if ghost.interior_residual > tol * scale {
        return Err(Error::Assertion(format!(
            "interior equations violated: {:e}",
            ghost.interior_residual
        )));
    }
    if ghost.load_mean > tol * ghost.load_l1 {
        return Err(Error::Assertion(format!(
            "boundary load has nonzero mean: {:e}",
            ghost.load_mean
        )));
    }
    Ok(ghost)
}

/// `‖w_h − q‖_{L²(ω)}` for a P1 function on the unit-square mesh.
pub fn l2_misfit(space: &FeSpace, omega: Rect, w: &[f64], q: &dyn Fn(Point) -> f64) -> Result<f64> {
    let marking = space.mesh().mark_omega(omega)?;
    let rule = triangle_rule(MAX_TRIANGLE_EXACTNESS)?;
    let mut s = 0.0;
    for &e in marking.elements() {
        let geo = space.geometry(e);
        for (l, wq) in rule.points.iter().zip(&rule.weights) {
            let (v, _) = space.evaluate(w, e, *l);
            let d = v - q(geo.to_physical(*l));
            s += 2.0 * geo.area * wq * d * d;
        }
    }
    Ok(sqrt(s))
}

/// Naive fit objective at several multiples of the ghost.
#[derive(Debug, Clone)]
pub struct NaiveFitReport {
    pub multiples: Vec<f64>,
    pub objectives: Vec<f64>,
}

impl NaiveFitReport {
    /// `max |J(c) − J(0)| / max(|J(0)|, tiny)` over the multiples.
    pub fn max_relative_spread(&self) -> f64 {
        let j0 = self.objectives[0];
        let spread = self
            .objectives
            .iter()
            .fold(0.0f64, |m, j| m.max((j - j0).abs()));
        if j0 == 0.0 {
            spread
        } else {
            spread / j0.abs()
        }
    }
}

/// `‖c·ghost − q‖_{L²(ω)}` with `ω = [1/(n−1), 1 − 1/(n−1)]²`.
pub fn naive_fit_demo(
    ghost: &GhostFunction,
    q: &dyn Fn(Point) -> f64,
    multiples: &[f64],
) -> Result<NaiveFitReport> {
    let mesh = Mesh::unit_square(ghost.n)?;
    let space = FeSpace::new(&mesh, 1)?;
    let omega = ghost.vanishing_region();
    let objectives = multiples
        .iter()
        .map(|&c| l2_misfit(&space, omega, &ghost.scaled(c), q))
        .collect::<Result<Vec<_>>>()?;
    Ok(NaiveFitReport {
        multiples: multiples.to_vec(),
        objectives,
    })
}

/// Outcome of the stabilized solver on the mesh of the counterexample.
#[derive(Debug, Clone, Copy)]
pub struct StabilizedContrast {
    /// Relative residual of the solve with `f = 0`, `q = 0`.
    pub residual: f64,
    /// `max |u_h|` of that solve; the unique solution is zero.
    pub solution_max: f64,
    /// `⦀ghost, 0⦀`, which separates the ghost from the zero solution.
    pub ghost_triple_norm: f64,
}

/// Solves the stabilized two-field system (`N = 1`, `β = 0`, `γ = 1`) for zero
/// data on the same mesh and measures the ghost in the triple norm.
pub fn stabilized_contrast(ghost: &GhostFunction) -> Result<StabilizedContrast> {
    let mesh = Mesh::unit_square(ghost.n)?;
    let space = FeSpace::new(&mesh, 1)?;
    let omega = ghost.vanishing_region();
    let marking = mesh.mark_omega(omega)?;
    let zero: crate::problem::ScalarField = Arc::new(|_| 0.0);
    let data = ProblemData {
        f: zero.clone(),
        q: zero,
        q_delta: None,
        noise_eps: 0.0,
        noise_seed: 0,
        noise_model: Default::default(),
        exact: None,
        omega,
    };
    let trace = TraceSpace::cosine(1, Beta::Value(0.0), &mesh, &|_| 0.0)?;
    let (blocks, moments) = assemble_blocks(&space, &trace, &marking, 1.0, false)?;
    let loads = assemble_rhs(&space, &trace, &moments, &data, &marking, 1.0, false)?;
    let result = build_two_field(&blocks, &loads)?.solve(&blocks)?;
    let zero_z = vec![0.0; space.ndof()];
    let (norm, _) = triple_norm(&blocks, &ghost.coefficients, &zero_z);
    Ok(StabilizedContrast {
        residual: result.residual,
        solution_max: result.u.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        ghost_triple_norm: norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        assert!(partition_stiffness(3).is_err());
        let p = partition_stiffness(4).unwrap();
        assert_eq!((p.interior_dofs.len(), p.boundary_dofs.len()), (4, 12));
        for n in [5, 8, 16] {
            let p = partition_stiffness(n).unwrap();
            assert_eq!(p.interior_dofs.len(), (n - 2) * (n - 2));
            assert_eq!(p.boundary_dofs.len(), 4 * n - 4);
            assert!(p.nonzero_coupling_rows().len() <= 4 * n - 12);
        }
    }

    #[test]
    fn partition_reassembles_stiffness() {
        let p = partition_stiffness(6).unwrap();
        let mesh = Mesh::unit_square(6).unwrap();
        let k = stiffness_matrix(&FeSpace::new(&mesh, 1).unwrap())
            .unwrap()
            .to_dense();
        let r = p.reassemble();
        for i in 0..36 {
            for j in 0..36 {
                assert_eq!(r.get(i, j), k.get(i, j));
            }
        }
    }

    #[test]
    fn ghost_properties() {
        for n in [4, 5, 8, 16, 32] {
            let g = find_ghost(n, 1e-10).unwrap();
            assert!(g.nullspace_dim >= 7, "n = {n}: {}", g.nullspace_dim);
            assert_eq!(g.max_inside, 0.0);
            assert!(g.max_abs > 0.0);
            assert!(g.coupling_rank <= g.nonzero_coupling_rows);
        }
    }

    #[test]
    fn ghost_is_linear_in_its_coefficients() {
        let g = find_ghost(8, 1e-10).unwrap();
        let s = g.scaled(10.0);
        for (a, b) in s.iter().zip(&g.coefficients) {
            assert_eq!(*a, 10.0 * b);
        }
    }

    #[test]
    fn naive_objective_ignores_the_ghost() {
        let g = find_ghost(8, 1e-10).unwrap();
        let zero = naive_fit_demo(&g, &|_| 0.0, &[0.0, 1.0, 100.0]).unwrap();
        assert!(zero.objectives.iter().all(|j| *j == 0.0));
        let q = |p: Point| 1.0 + p[0] * p[1];
        let r = naive_fit_demo(&g, &q, &[0.0, 1.0, 100.0]).unwrap();
        assert!(r.objectives[0] > 0.0);
        assert!(r.max_relative_spread() <= 1e-10);
    }

    #[test]
    fn stabilized_system_separates_the_ghost() {
        let g = find_ghost(8, 1e-10).unwrap();
        let c = stabilized_contrast(&g).unwrap();
        assert!(c.residual < 1e-10);
        assert!(c.solution_max < 1e-12);
        assert!(c.ghost_triple_norm > 0.0);
    }
}
