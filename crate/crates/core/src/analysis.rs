//! Error norms, the discrete boundary dual norm, the a posteriori estimator
//! and convergence studies over a sequence of uniform meshes.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use libm::{log, sqrt};

use crate::fe_space::FeSpace;
use crate::forms::{assemble_blocks, assemble_rhs, jump_elementwise};
use crate::linalg::h1_gram;
use crate::linalg::{factorize_symmetric, FactorizedSystem};
use crate::mesh::{Mesh, Rect, SubdomainMarking};
use crate::problem::{ExactSolution, NoiseModel, ProblemData, ScalarField};
use crate::quadrature::{triangle_rule, MAX_TRIANGLE_EXACTNESS};
use crate::solver::{Method, SaddleSystem, SolveResult};
use crate::trace_space::{boundary_quadrature, Beta, MomentVectors, TraceSpace};
use crate::{Error, Point, Result};

/// `Σ_K ∫_K integrand(element, λ, x)` with the degree-6 rule.
fn integrate(
    space: &FeSpace,
    elements: impl Iterator<Item = usize>,
    mut integrand: impl FnMut(usize, [f64; 3], Point) -> f64,
) -> Result<f64> {
    let rule = triangle_rule(MAX_TRIANGLE_EXACTNESS)?;
    let mut s = 0.0;
    for e in elements {
        let geo = space.geometry(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            s += 2.0 * geo.area * w * integrand(e, *l, geo.to_physical(*l));
        }
    }
    Ok(s)
}

/// `‖u − u_h‖_{H¹(Ω)}`.
pub fn h1_error(space: &FeSpace, u_h: &[f64], exact: &dyn ExactSolution) -> Result<f64> {
    let nt = space.mesh().n_triangles();
    let s = integrate(space, 0..nt, |e, l, x| {
        let (v, g) = space.evaluate(u_h, e, l);
        let ge = exact.gradient(x);
        let d = exact.value(x) - v;
        d * d + crate::powi(ge[0] - g[0], 2) + crate::powi(ge[1] - g[1], 2)
    })?;
    Ok(sqrt(s))
}

/// `‖u − u_h‖_{L²(ω)}` over the marked elements.
pub fn l2_omega_error(
    space: &FeSpace,
    marking: &SubdomainMarking,
    u_h: &[f64],
    exact: &dyn ExactSolution,
) -> Result<f64> {
    let s = integrate(space, marking.elements().iter().copied(), |e, l, x| {
        let (v, _) = space.evaluate(u_h, e, l);
        crate::powi(exact.value(x) - v, 2)
    })?;
    Ok(sqrt(s))
}

/// `‖v_h‖_{H¹(Ω)}` of a discrete function.
pub fn h1_norm_discrete(space: &FeSpace, v: &[f64]) -> Result<f64> {
    let nt = space.mesh().n_triangles();
    let s = integrate(space, 0..nt, |e, l, _| {
        let (val, g) = space.evaluate(v, e, l);
        val * val + g[0] * g[0] + g[1] * g[1]
    })?;
    Ok(sqrt(s))
}

/// `‖u‖_{H²(Ω)}` (full norm) of an exact solution.
pub fn h2_norm(mesh: &Mesh, exact: &dyn ExactSolution) -> f64 {
    let rule = triangle_rule(MAX_TRIANGLE_EXACTNESS).expect("tabulated");
    let mut s = 0.0;
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.triangle_points(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
            ];
            let (v, g, h) = (exact.value(x), exact.gradient(x), exact.hessian(x));
            let hs = crate::powi(h[0][0], 2)
                + crate::powi(h[0][1], 2)
                + crate::powi(h[1][0], 2)
                + crate::powi(h[1][1], 2);
            s += 2.0 * mesh.area(t) * w * (v * v + g[0] * g[0] + g[1] * g[1] + hs);
        }
    }
    sqrt(s)
}

/// `sup_{w ∈ V_h} ⟨μ, w⟩ / ‖w‖_{H¹(Ω)} = √(bᵀG⁻¹b)` with `b_i = ⟨μ, ψ_i⟩`.
pub struct DualNorm {
    gram: FactorizedSystem,
}

impl core::fmt::Debug for DualNorm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DualNorm")
            .field("dim", &self.gram.dim())
            .finish()
    }
}

impl DualNorm {
    pub fn new(space: &FeSpace) -> Result<Self> {
        let g = h1_gram(space)?;
        let gram = factorize_symmetric(&g)
            .map_err(|e| Error::Structural(format!("H1 Gram factorization failed: {e}")))?;
        Ok(DualNorm { gram })
    }

    pub fn eval(&self, loads: &[f64]) -> Result<f64> {
        if loads.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        let x = self.gram.solve(loads)?;
        let q: f64 = x.iter().zip(loads).map(|(a, b)| a * b).sum();
        Ok(sqrt(q.max(0.0)))
    }
}

/// `b_i = (∂_ν u − ∂_ν u_h, ψ_i)_{∂Ω}`, with the elementwise normal derivative of `u_h`.
pub fn flux_error_loads(
    space: &FeSpace,
    u_h: &[f64],
    exact: &dyn ExactSolution,
    oscillation: f64,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; space.ndof()];
    for bp in boundary_quadrature(space, oscillation) {
        let (_, g) = space.evaluate(u_h, bp.element, bp.lambda);
        let diff =
            exact.normal_derivative(bp.x, bp.side) - (g[0] * bp.normal[0] + g[1] * bp.normal[1]);
        let basis = space.eval_basis(bp.element, bp.lambda)?;
        for (a, &d) in space.cell_dofs(bp.element).iter().enumerate() {
            b[d] += bp.weight * diff * basis.values[a];
        }
    }
    Ok(b)
}

/// `‖∂_ν(u − u_h)‖` in the discrete dual norm.
pub fn flux_error(
    space: &FeSpace,
    u_h: &[f64],
    exact: &dyn ExactSolution,
    dual: &DualNorm,
    oscillation: f64,
) -> Result<f64> {
    dual.eval(&flux_error_loads(space, u_h, exact, oscillation)?)
}

/// The terms of the a posteriori bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimator {
    /// `h‖u_h − q‖_{L²(ω)}`.
    pub data: f64,
    /// `J(u_h)^{1/2}`.
    pub jump: f64,
    /// `h^{3/2}‖Q∂_ν u_h − β‖_{L²(∂Ω)}`.
    pub neumann: f64,
    /// `h²(Σ_K ‖Δu_h + f‖²_K)^{1/2}`.
    pub gls: f64,
    /// `h‖z_h‖_{H¹}`, plus `h‖r_h‖_{H¹}` for three fields.
    pub dual: f64,
}

impl Estimator {
    pub fn total(&self) -> f64 {
        self.data + self.jump + self.neumann + self.gls + self.dual
    }
}

pub fn aposteriori(
    space: &FeSpace,
    trace: &TraceSpace,
    moments: &MomentVectors,
    marking: &SubdomainMarking,
    data: &ProblemData,
    result: &SolveResult,
) -> Result<Estimator> {
    let h = space.mesh().h();
    let u = &result.u;
    let meas = |x: Point| (data.q)(x) + data.q_delta.as_ref().map_or(0.0, |d| d(x));
    let misfit = integrate(space, marking.elements().iter().copied(), |e, l, x| {
        let (v, _) = space.evaluate(u, e, l);
        crate::powi(v - meas(x), 2)
    })?;

    // Q∂_ν u_h = ∂_ν u_h − Σ c_n φ_n, c = G⁻¹ C u_h
    let coeffs = trace.apply_p(&moments.c.matvec(u));
    let beta = trace.beta();
    let mut neumann = 0.0;
    for bp in boundary_quadrature(space, trace.basis().oscillation()) {
        let (_, g) = space.evaluate(u, bp.element, bp.lambda);
        let qflux = g[0] * bp.normal[0] + g[1] * bp.normal[1]
            - trace.eval_combination(&coeffs, bp.x, bp.side);
        neumann += bp.weight * crate::powi(qflux - beta, 2);
    }

    let nt = space.mesh().n_triangles();
    let residual = integrate(space, 0..nt, |e, _, x| {
        crate::powi(space.laplacian(u, e) + (data.f)(x), 2)
    })?;

    let mut dual = h * h1_norm_discrete(space, &result.z)?;
    if let Some(r) = &result.r {
        dual += h * h1_norm_discrete(space, r)?;
    }
    Ok(Estimator {
        data: h * sqrt(misfit),
        jump: sqrt(jump_elementwise(space, u)?),
        neumann: h * sqrt(h) * sqrt(neumann),
        gls: h * h * sqrt(residual),
        dual,
    })
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    /// Dimension of `V_h`.
    pub ndof: usize,
    pub err_h1: f64,
    pub err_l2_omega: f64,
    pub err_flux_dual: Option<f64>,
    pub estimator: Estimator,
    /// `‖u − u_h‖_{H¹} / (h‖u‖_{H²})`.
    pub c_ratio: f64,
    pub residual: f64,
}

impl ErrorReport {
    /// `est_total / (h · err_H1)`.
    pub fn effectivity(&self) -> f64 {
        self.estimator.total() / (self.h * self.err_h1)
    }
}

/// `ln(e1/e2) / ln(h1/h2)`.
pub fn pairwise_rate(h1: f64, e1: f64, h2: f64, e2: f64) -> f64 {
    log(e1 / e2) / log(h1 / h2)
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fitted_slope(hs: &[f64], es: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| log(*h)).collect();
    let ys: Vec<f64> = es.iter().map(|e| log(*e)).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub const CSV_HEADER: &str = "level,n,h,ndof,err_h1,err_l2_omega,err_flux_dual,est_data,est_jump,est_neumann,est_gls,est_dual,est_total,c_ratio,rate_h1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ErrorReport>,
}

impl ConvergenceTable {
    pub fn hs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h).collect()
    }

    pub fn h1_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_h1).collect()
    }

    /// Pairwise H¹ rates; entry `i` compares rows `i` and `i + 1`.
    pub fn rates_h1(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| pairwise_rate(w[0].h, w[0].err_h1, w[1].h, w[1].err_h1))
            .collect()
    }

    pub fn slope_h1(&self) -> f64 {
        fitted_slope(&self.hs(), &self.h1_errors())
    }

    pub fn slope_flux(&self) -> Option<f64> {
        let es: Option<Vec<f64>> = self.rows.iter().map(|r| r.err_flux_dual).collect();
        es.map(|es| fitted_slope(&self.hs(), &es))
    }

    pub fn slope_estimator(&self) -> f64 {
        let es: Vec<f64> = self.rows.iter().map(|r| r.estimator.total()).collect();
        fitted_slope(&self.hs(), &es)
    }

    pub fn last(&self) -> Option<&ErrorReport> {
        self.rows.last()
    }

    /// The table as CSV, floats with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        let rates = self.rates_h1();
        for (i, r) in self.rows.iter().enumerate() {
            let e = &r.estimator;
            let flux = r
                .err_flux_dual
                .map_or(String::new(), |v| format!("{v:.16e}"));
            let rate = if i == 0 {
                String::new()
            } else {
                format!("{:.16e}", rates[i - 1])
            };
            let _ = writeln!(
                s,
                "{},{},{:.16e},{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.level,
                r.n,
                r.h,
                r.ndof,
                r.err_h1,
                r.err_l2_omega,
                flux,
                e.data,
                e.jump,
                e.neumann,
                e.gls,
                e.dual,
                e.total(),
                r.c_ratio,
                rate
            );
        }
        s
    }
}

/// The measurement region used throughout the experiments.
pub const OMEGA: Rect = Rect {
    x0: 0.1,
    x1: 0.9,
    y0: 0.25,
    y1: 0.75,
};

/// Everything needed to run one convergence study.
#[derive(Clone)]
pub struct Study {
    pub solution: Arc<dyn ExactSolution>,
    pub degree: usize,
    pub method: Method,
    pub gamma: f64,
    pub trace_n: usize,
    pub beta: Beta,
    pub noise_eps: f64,
    pub noise_seed: u64,
    pub noise_model: NoiseModel,
    pub q_delta: Option<ScalarField>,
    pub omega: Rect,
    pub n_start: usize,
    pub n_levels: usize,
}

impl core::fmt::Debug for Study {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Study")
            .field("solution", &self.solution.name())
            .field("degree", &self.degree)
            .field("method", &self.method)
            .field("gamma", &self.gamma)
            .field("trace_n", &self.trace_n)
            .field("noise_eps", &self.noise_eps)
            .field("n_start", &self.n_start)
            .field("n_levels", &self.n_levels)
            .finish()
    }
}

impl Study {
    pub fn new(solution: Arc<dyn ExactSolution>) -> Self {
        Study {
            solution,
            degree: 1,
            method: Method::TwoField,
            gamma: 1.0,
            trace_n: 8,
            beta: Beta::Auto,
            noise_eps: 0.0,
            noise_seed: 0,
            noise_model: NoiseModel::Shared,
            q_delta: None,
            omega: OMEGA,
            n_start: 21,
            n_levels: 4,
        }
    }

    /// `n_i = (n_start − 1)·2^i + 1`.
    pub fn level_sizes(&self) -> Vec<usize> {
        (0..self.n_levels)
            .map(|i| (self.n_start - 1) * (1 << i) + 1)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(Error::InvalidArgument(format!(
                "degree must be 1 or 2, got {}",
                self.degree
            )));
        }
        if self.n_start < 2 || self.n_levels == 0 {
            return Err(Error::InvalidArgument(
                "need n_start >= 2 and at least one level".into(),
            ));
        }
        if self.trace_n == 0 {
            return Err(Error::InvalidArgument(
                "trace space dimension must be at least 1".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn data(&self) -> ProblemData {
        let mut d = ProblemData::from_exact(self.solution.clone(), self.omega)
            .with_noise(self.noise_eps, self.noise_seed);
        d.noise_model = self.noise_model;
        d.q_delta = self.q_delta.clone();
        d
    }

    /// Solves on the `n × n` mesh and measures everything.
    pub fn run_level(&self, level: usize, n: usize) -> Result<(ErrorReport, SolveResult)> {
        self.validate()?;
        let mesh = Mesh::unit_square(n)?;
        let space = FeSpace::new(&mesh, self.degree)?;
        let marking = mesh.mark_omega(self.omega)?;
        let data = self.data();
        let trace = TraceSpace::cosine(self.trace_n, self.beta, &mesh, &*data.f)?;
        let three = self.method == Method::ThreeField;
        let (blocks, moments) = assemble_blocks(&space, &trace, &marking, self.gamma, three)?;
        let loads = assemble_rhs(&space, &trace, &moments, &data, &marking, self.gamma, three)?;
        let system: SaddleSystem = if three {
            crate::solver::build_three_field(&blocks, &loads)?
        } else {
            crate::solver::build_two_field(&blocks, &loads)?
        };
        let result = system.solve(&blocks)?;
        let u = &*self.solution;
        let err_h1 = h1_error(&space, &result.u, u)?;
        let err_flux_dual = if three {
            let dual = DualNorm::new(&space)?;
            Some(flux_error(
                &space,
                &result.u,
                u,
                &dual,
                trace.basis().oscillation(),
            )?)
        } else {
            None
        };
        let estimator = aposteriori(&space, &trace, &moments, &marking, &data, &result)?;
        let h = mesh.h();
        let report = ErrorReport {
            level,
            n,
            h,
            ndof: space.ndof(),
            err_h1,
            err_l2_omega: l2_omega_error(&space, &marking, &result.u, u)?,
            err_flux_dual,
            estimator,
            c_ratio: err_h1 / (h * h2_norm(&mesh, u)),
            residual: result.residual,
        };
        Ok((report, result))
    }

    /// Runs every level in order; a failure names its level.
    pub fn run(&self) -> Result<ConvergenceTable> {
        let mut rows = Vec::with_capacity(self.n_levels);
        for (level, n) in self.level_sizes().into_iter().enumerate() {
            rows.push(self.run_level_report(level, n)?);
        }
        Ok(ConvergenceTable { rows })
    }

    /// [`run_level`](Self::run_level) keeping only the report, with errors tagged by level.
    pub fn run_level_report(&self, level: usize, n: usize) -> Result<ErrorReport> {
        self.run_level(level, n)
            .map(|(r, _)| r)
            .map_err(|e| Error::Level {
                level,
                n,
                inner: Box::new(e),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Constant, SeparableCosine};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn h1_error_reference_values() {
        let mesh = Mesh::unit_square(9).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let zero = vec![0.0; space.ndof()];
        assert!((h1_error(&space, &zero, &Constant(1.0)).unwrap() - 1.0).abs() < 1e-12);
        let affine = crate::problem::Quadratic([0.5, 1.0, -2.0, 0.0, 0.0, 0.0]);
        let c = space.interpolate(|p| affine.value(p));
        assert!(h1_error(&space, &c, &affine).unwrap() < 1e-12);
    }

    #[test]
    fn interpolation_error_halves() {
        let u = SeparableCosine::example_1();
        let errs: Vec<f64> = [21, 41]
            .iter()
            .map(|&n| {
                let mesh = Mesh::unit_square(n).unwrap();
                let space = FeSpace::new(&mesh, 1).unwrap();
                h1_error(&space, &space.interpolate(|p| u.value(p)), &u).unwrap()
            })
            .collect();
        let rate = pairwise_rate(1.0, errs[0], 0.5, errs[1]);
        assert!((rate - 1.0).abs() < 0.05, "{rate}");
    }

    #[test]
    fn slope_of_synthetic_sequences() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        for p in [1.0, 2.0, 0.5] {
            let es: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(p)).collect();
            assert!((fitted_slope(&hs, &es) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_norm_properties() {
        let mesh = Mesh::unit_square(7).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let dual = DualNorm::new(&space).unwrap();
        let n = space.ndof();
        assert_eq!(dual.eval(&vec![0.0; n]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // μ = trace of w0: loads b_i = (w0, ψ_i)_{∂Ω}
        let w0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        for bp in boundary_quadrature(&space, 0.0) {
            let (v, _) = space.evaluate(&w0, bp.element, bp.lambda);
            let basis = space.eval_basis(bp.element, bp.lambda).unwrap();
            for (a, &d) in space.cell_dofs(bp.element).iter().enumerate() {
                b[d] += bp.weight * v * basis.values[a];
            }
        }
        let norm = dual.eval(&b).unwrap();
        let g = h1_gram(&space).unwrap();
        let pairing = |w: &[f64]| crate::linalg::dot(&b, w) / g.matrix().quad_form(w).sqrt();
        assert!(norm >= pairing(&w0) - 1e-12);
        // the supremum is attained at G⁻¹b; random search cannot beat it
        let maximiser = crate::linalg::factorize(g.matrix())
            .unwrap()
            .solve(&b)
            .unwrap();
        assert!((pairing(&maximiser) - norm).abs() <= 1e-8 * norm);
        for _ in 0..50 {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(pairing(&w) <= norm + 1e-12);
        }
        let b2: Vec<f64> = b.iter().map(|x| 2.0 * x).collect();
        assert!((dual.eval(&b2).unwrap() - 2.0 * norm).abs() <= 1e-12 * norm);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = b.iter().zip(&c).map(|(x, y)| x + y).collect();
        assert!(dual.eval(&sum).unwrap() <= norm + dual.eval(&c).unwrap() + 1e-10);
    }

    #[test]
    fn constant_solution_has_no_error_or_estimate() {
        let mut study = Study::new(Arc::new(Constant(1.5)));
        study.n_start = 11;
        study.n_levels = 1;
        study.method = Method::ThreeField;
        let (report, _) = study.run_level(0, 11).unwrap();
        assert!(report.err_h1 < 1e-8);
        assert!(report.err_flux_dual.unwrap() < 1e-10);
        let e = report.estimator;
        for t in [e.data, e.jump, e.neumann, e.gls, e.dual] {
            assert!(t <= 1e-8, "{e:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let mut study = Study::new(Arc::new(SeparableCosine::example_1()));
        study.n_start = 5;
        study.n_levels = 2;
        let table = study.run().unwrap();
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 15);
        assert_eq!(first[6], "");
        assert_eq!(first[14], "");
        assert!(!lines[2].split(',').nth(14).unwrap().is_empty());
        let h: f64 = first[2].parse().unwrap();
        assert_eq!(h, table.rows[0].h);
    }

    #[test]
    fn level_sizes_refine() {
        let study = Study::new(Arc::new(Constant(0.0)));
        assert_eq!(study.level_sizes(), vec![21, 41, 81, 161]);
    }
}
