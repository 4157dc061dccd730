//! The Neumann space `V_N`, moment matrices against finite element traces and
//! normal derivatives, and the projections `P` and `Q = 1 − P`.
//!
//! `P` is the `L²(∂Ω)`-orthogonal projection. It is kept in factored form:
//! `(Pg, v) = Σ_mn (g, φ_m) (G⁻¹)_mn (φ_n, v)` with `G` the Gram matrix of the
//! basis, which is the identity for the default cosine basis.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, cos, fabs, sqrt};

use crate::fe_space::FeSpace;
use crate::linalg::{CsrMatrix, DenseLu, DenseMatrix, TripletBuilder};
use crate::mesh::{Mesh, Rect, Side};
use crate::quadrature::{edge_rule, triangle_rule, MAX_EDGE_EXACTNESS};
use crate::{Error, Point, Result};

/// Tolerance of the startup orthonormality check.
pub const GRAM_TOL: f64 = 1e-10;

/// A finite family of boundary functions `φ_0, …, φ_{N−1}`.
pub trait TraceBasis: core::fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    /// `φ_n(x)` for `x` on the side `side` of the boundary.
    fn eval(&self, n: usize, x: Point, side: Side) -> f64;
    /// Half-periods per unit length of the most oscillatory member; drives
    /// the subdivision of boundary edges in quadrature.
    fn oscillation(&self) -> f64;
}

/// `√(2/L)·cos(nπ(x−x₀)/L)` on the top side, zero elsewhere, `n = 1..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineTop {
    pub n: usize,
    pub domain: Rect,
}

impl TraceBasis for CosineTop {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, n: usize, x: Point, side: Side) -> f64 {
        if side != Side::Top {
            return 0.0;
        }
        let l = self.domain.width();
        let k = (n + 1) as f64;
        sqrt(2.0 / l) * cos(k * core::f64::consts::PI * (x[0] - self.domain.x0) / l)
    }

    fn oscillation(&self) -> f64 {
        self.n as f64 / self.domain.width()
    }
}

/// How `β` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    /// `β = (∫_Ω f) / |∂Ω|`.
    Auto,
    Value(f64),
}

/// One quadrature point on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    /// Index into [`Mesh::boundary_edges`].
    pub edge: usize,
    pub element: usize,
    pub x: Point,
    pub lambda: [f64; 3],
    /// Physical weight (includes the edge length).
    pub weight: f64,
    pub normal: Point,
    pub side: Side,
}

/// Boundary quadrature: 6-point Gauss-Legendre on each boundary edge, with
/// edges split into `⌈2·oscillation·|e|⌉` pieces so oscillatory integrands
/// stay resolved.
pub fn boundary_quadrature(space: &FeSpace, oscillation: f64) -> Vec<BoundaryPoint> {
    let mesh = space.mesh();
    let rule = edge_rule(MAX_EDGE_EXACTNESS).expect("tabulated");
    let mut out = Vec::new();
    for (bi, be) in mesh.boundary_edges().iter().enumerate() {
        let pa = mesh.vertices()[be.vertices[0]];
        let pb = mesh.vertices()[be.vertices[1]];
        let len = mesh.edge_length(be.edge);
        let pieces = (ceil(2.0 * oscillation * len) as usize).max(1);
        let geo = space.geometry(be.element);
        for p in 0..pieces {
            for (t, w) in rule.points.iter().zip(&rule.weights) {
                let s = (p as f64 + t) / pieces as f64;
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                out.push(BoundaryPoint {
                    edge: bi,
                    element: be.element,
                    x,
                    lambda: geo.to_barycentric(x),
                    weight: w * len / pieces as f64,
                    normal: be.normal,
                    side: be.side,
                });
            }
        }
    }
    out
}

/// `∫_Ω f` with the degree-6 triangle rule.
pub fn integrate_domain(mesh: &Mesh, f: &dyn Fn(Point) -> f64) -> f64 {
    let rule = triangle_rule(6).expect("tabulated");
    let mut s = 0.0;
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.triangle_points(t);
        let area = mesh.area(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
            ];
            s += 2.0 * area * w * f(x);
        }
    }
    s
}

/// The space `V_N` with its compatibility constant `β`.
#[derive(Debug, Clone)]
pub struct TraceSpace {
    basis: Arc<dyn TraceBasis>,
    beta: f64,
    domain: Rect,
    /// `None` when the basis passed the orthonormality check.
    gram_inv: Option<DenseMatrix>,
}

impl TraceSpace {
    /// Cosine basis of dimension `n ≥ 1` on the top side of `mesh`'s domain.
    pub fn cosine(n: usize, beta: Beta, mesh: &Mesh, f: &dyn Fn(Point) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "trace space dimension must be at least 1".into(),
            ));
        }
        Self::with_basis(
            Arc::new(CosineTop {
                n,
                domain: mesh.bounds(),
            }),
            beta,
            mesh,
            f,
        )
    }

    /// `V_N = {0}`; then `P = 0` and `Q` is the identity.
    pub fn empty(beta: f64, mesh: &Mesh) -> Self {
        TraceSpace {
            basis: Arc::new(CosineTop {
                n: 0,
                domain: mesh.bounds(),
            }),
            beta,
            domain: mesh.bounds(),
            gram_inv: None,
        }
    }

    pub fn with_basis(
        basis: Arc<dyn TraceBasis>,
        beta: Beta,
        mesh: &Mesh,
        f: &dyn Fn(Point) -> f64,
    ) -> Result<Self> {
        let domain = mesh.bounds();
        let beta = match beta {
            Beta::Auto => integrate_domain(mesh, f) / domain.perimeter(),
            Beta::Value(b) if b.is_finite() => b,
            Beta::Value(b) => {
                return Err(Error::InvalidArgument(format!(
                    "beta must be finite, got {b}"
                )))
            }
        };
        let mut space = TraceSpace {
            basis,
            beta,
            domain,
            gram_inv: None,
        };
        let g = space.gram(mesh);
        let n = g.nrows();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                dev = dev.max(fabs(g.get(i, j) - if i == j { 1.0 } else { 0.0 }));
            }
        }
        if dev > GRAM_TOL {
            let lu = DenseLu::new(&g, 1e-12)
                .map_err(|_| Error::InvalidArgument("trace basis is linearly dependent".into()))?;
            let mut inv = DenseMatrix::zeros(n, n);
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                for (i, v) in lu.solve(&e).into_iter().enumerate() {
                    inv.set(i, j, v);
                }
            }
            space.gram_inv = Some(inv);
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn basis(&self) -> &dyn TraceBasis {
        &*self.basis
    }

    pub fn is_orthonormal(&self) -> bool {
        self.gram_inv.is_none()
    }

    pub fn eval(&self, n: usize, x: Point, side: Side) -> f64 {
        self.basis.eval(n, x, side)
    }

    /// `G_mn = (φ_m, φ_n)_{L²(∂Ω)}` by quadrature along the boundary edges of `mesh`.
    pub fn gram(&self, mesh: &Mesh) -> DenseMatrix {
        let n = self.dim();
        let mut g = DenseMatrix::zeros(n, n);
        for (x, w, side) in self.boundary_points(mesh) {
            let phi: Vec<f64> = (0..n).map(|k| self.eval(k, x, side)).collect();
            for i in 0..n {
                for j in 0..n {
                    g.set(i, j, g.get(i, j) + w * phi[i] * phi[j]);
                }
            }
        }
        g
    }

    fn boundary_points(&self, mesh: &Mesh) -> Vec<(Point, f64, Side)> {
        let rule = edge_rule(MAX_EDGE_EXACTNESS).expect("tabulated");
        let mut out = Vec::new();
        for be in mesh.boundary_edges() {
            let pa = mesh.vertices()[be.vertices[0]];
            let pb = mesh.vertices()[be.vertices[1]];
            let len = mesh.edge_length(be.edge);
            let pieces = (ceil(2.0 * self.basis.oscillation() * len) as usize).max(1);
            for p in 0..pieces {
                for (t, w) in rule.points.iter().zip(&rule.weights) {
                    let s = (p as f64 + t) / pieces as f64;
                    out.push((
                        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])],
                        w * len / pieces as f64,
                        be.side,
                    ));
                }
            }
        }
        out
    }

    /// `(g, φ_n)_{L²(∂Ω)}` for every `n`.
    pub fn moments_of(&self, mesh: &Mesh, g: &dyn Fn(Point, Side) -> f64) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (x, w, side) in self.boundary_points(mesh) {
            let gx = g(x, side);
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += w * gx * self.eval(k, x, side);
            }
        }
        m
    }

    /// Coefficients of `Pg` in the basis, given the moments of `g`.
    pub fn apply_p(&self, moments: &[f64]) -> Vec<f64> {
        match &self.gram_inv {
            None => moments.to_vec(),
            Some(inv) => inv.matvec(moments),
        }
    }

    /// Evaluates `Σ c_n φ_n`.
    pub fn eval_combination(&self, coeffs: &[f64], x: Point, side: Side) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.eval(k, x, side))
            .sum()
    }

    /// `Qg = g − Pg` as a boundary function.
    pub fn apply_q<'a>(
        &'a self,
        mesh: &Mesh,
        g: &'a dyn Fn(Point, Side) -> f64,
    ) -> impl Fn(Point, Side) -> f64 + 'a {
        let coeffs = self.apply_p(&self.moments_of(mesh, g));
        move |x, side| g(x, side) - self.eval_combination(&coeffs, x, side)
    }

    /// `|β·|∂Ω| − ∫_Ω f|`.
    pub fn compatibility_defect(&self, mesh: &Mesh, f: &dyn Fn(Point) -> f64) -> f64 {
        fabs(self.beta * self.domain.perimeter() - integrate_domain(mesh, f))
    }

    /// Trace and flux moments of the finite element basis.
    pub fn compute_moments(&self, space: &FeSpace) -> Result<MomentVectors> {
        let n = self.dim();
        let ndof = space.ndof();
        let mut d = TripletBuilder::new(n, ndof);
        let mut c = TripletBuilder::new(n, ndof);
        for bp in boundary_quadrature(space, self.basis.oscillation()) {
            let phi: Vec<f64> = (0..n).map(|k| self.eval(k, bp.x, bp.side)).collect();
            if phi.iter().all(|p| *p == 0.0) {
                continue;
            }
            let b = space.eval_basis(bp.element, bp.lambda)?;
            for (loc, &dof) in space.cell_dofs(bp.element).iter().enumerate() {
                let dn = b.grads[loc][0] * bp.normal[0] + b.grads[loc][1] * bp.normal[1];
                for (k, p) in phi.iter().enumerate() {
                    if *p != 0.0 {
                        d.push(k, dof, bp.weight * p * b.values[loc]);
                        c.push(k, dof, bp.weight * p * dn);
                    }
                }
            }
        }
        Ok(MomentVectors {
            d: d.build(),
            c: c.build(),
            gram_inv: self.gram_inv.clone(),
        })
    }
}

/// `D[n][j] = (ψ_j, φ_n)_{∂Ω}` and `C[n][j] = (∂_ν ψ_j, φ_n)_{∂Ω}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVectors {
    pub d: CsrMatrix,
    pub c: CsrMatrix,
    pub gram_inv: Option<DenseMatrix>,
}

impl MomentVectors {
    /// `Lᵀ G⁻¹ R` for moment matrices `L`, `R` (each `N × ndof`).
    pub fn low_rank(&self, left: &CsrMatrix, right: &CsrMatrix) -> CsrMatrix {
        let n = left.nrows();
        let ndof = left.ncols();
        let support = |m: &CsrMatrix| {
            let mut s: Vec<usize> = m.iter().map(|(_, j, _)| j).collect();
            s.sort_unstable();
            s.dedup();
            s
        };
        let (sl, sr) = (support(left), support(right));
        let r_dense = right.submatrix(&(0..n).collect::<Vec<_>>(), &sr).to_dense();
        let l_dense = left.submatrix(&(0..n).collect::<Vec<_>>(), &sl).to_dense();
        let gr = match &self.gram_inv {
            None => r_dense,
            Some(inv) => inv.matmul(&r_dense),
        };
        let mut t = TripletBuilder::new(ndof, ndof);
        for (a, &i) in sl.iter().enumerate() {
            for (b, &j) in sr.iter().enumerate() {
                let v: f64 = (0..n).map(|k| l_dense.get(k, a) * gr.get(k, b)).sum();
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    /// `Σ_mn (L_m·x)(G⁻¹)_mn e_n` with `e_n` given.
    pub fn project_vector(&self, left: &CsrMatrix, e: &[f64]) -> Vec<f64> {
        let ge = match &self.gram_inv {
            None => e.to_vec(),
            Some(inv) => inv.matvec(e),
        };
        left.matvec_transpose(&ge)
    }
}
