//! Source and measurement data, and manufactured solutions.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use libm::{cos, exp, fabs, sin};

use crate::mesh::{Rect, Side};
use crate::{Error, Point, Result};

use core::f64::consts::PI;

/// A smooth function with derivatives up to second order.
pub trait ExactSolution: core::fmt::Debug + Send + Sync {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Point;
    fn hessian(&self, p: Point) -> [[f64; 2]; 2];

    fn laplacian(&self, p: Point) -> f64 {
        let h = self.hessian(p);
        h[0][0] + h[1][1]
    }

    /// `f = −Δu`.
    fn source(&self, p: Point) -> f64 {
        -self.laplacian(p)
    }

    /// `∂_ν u` on the side `side` of a rectangle.
    fn normal_derivative(&self, p: Point, side: Side) -> f64 {
        let g = self.gradient(p);
        let n = side.outward_normal();
        g[0] * n[0] + g[1] * n[1]
    }

    fn name(&self) -> String;
}

/// `u(x, y) = (e^y − y) Σ a_k cos(kπx)`.
///
/// Its flux vanishes on the bottom and on the vertical sides and equals
/// `(e − 1) Σ a_k cos(kπx)` on the top, and `∫_Ω f = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableCosine {
    pub terms: Vec<(f64, f64)>,
    label: String,
}

impl SeparableCosine {
    pub fn new(terms: Vec<(f64, f64)>, label: impl Into<String>) -> Self {
        SeparableCosine {
            terms,
            label: label.into(),
        }
    }

    /// `(e^y − y) cos(πx)`.
    pub fn example_1() -> Self {
        Self::new(alloc::vec![(1.0, 1.0)], "example_1")
    }

    /// `(e^y − y)(cos(πx) + 0.025 cos(2πx))`.
    pub fn perturbed() -> Self {
        Self::new(alloc::vec![(1.0, 1.0), (0.025, 2.0)], "perturbed")
    }

    /// `u_N = (e^y − y) cos(Nπx)`.
    pub fn u_n(n: usize) -> Self {
        Self::new(alloc::vec![(1.0, n as f64)], format!("u_{n}"))
    }

    /// Highest cosine frequency present.
    pub fn max_mode(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.1))
    }

    fn c(&self, x: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for &(a, k) in &self.terms {
            let w = k * PI;
            out[0] += a * cos(w * x);
            out[1] -= a * w * sin(w * x);
            out[2] -= a * w * w * cos(w * x);
        }
        out
    }
}

fn g(y: f64) -> [f64; 3] {
    let e = exp(y);
    [e - y, e - 1.0, e]
}

impl ExactSolution for SeparableCosine {
    fn value(&self, p: Point) -> f64 {
        g(p[1])[0] * self.c(p[0])[0]
    }

    fn gradient(&self, p: Point) -> Point {
        let (gy, cx) = (g(p[1]), self.c(p[0]));
        [gy[0] * cx[1], gy[1] * cx[0]]
    }

    fn hessian(&self, p: Point) -> [[f64; 2]; 2] {
        let (gy, cx) = (g(p[1]), self.c(p[0]));
        let mixed = gy[1] * cx[1];
        [[gy[0] * cx[2], mixed], [mixed, gy[2] * cx[0]]]
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl ExactSolution for Constant {
    fn value(&self, _: Point) -> f64 {
        self.0
    }

    fn gradient(&self, _: Point) -> Point {
        [0.0, 0.0]
    }

    fn hessian(&self, _: Point) -> [[f64; 2]; 2] {
        [[0.0; 2]; 2]
    }

    fn name(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// A general quadratic `c0 + c1 x + c2 y + c3 x² + c4 xy + c5 y²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic(pub [f64; 6]);

impl ExactSolution for Quadratic {
    fn value(&self, p: Point) -> f64 {
        let c = self.0;
        c[0] + c[1] * p[0]
            + c[2] * p[1]
            + c[3] * p[0] * p[0]
            + c[4] * p[0] * p[1]
            + c[5] * p[1] * p[1]
    }

    fn gradient(&self, p: Point) -> Point {
        let c = self.0;
        [
            c[1] + 2.0 * c[3] * p[0] + c[4] * p[1],
            c[2] + c[4] * p[0] + 2.0 * c[5] * p[1],
        ]
    }

    fn hessian(&self, _: Point) -> [[f64; 2]; 2] {
        let c = self.0;
        [[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]]
    }

    fn name(&self) -> String {
        format!("quadratic{:?}", self.0)
    }
}

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// How the load noise draws its signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// An independent standard normal draw per load entry.
    Entrywise,
    /// One standard normal draw shared by every entry.
    #[default]
    Shared,
}

/// Everything on the right-hand side of the discrete problem.
#[derive(Clone)]
pub struct ProblemData {
    pub f: ScalarField,
    pub q: ScalarField,
    pub q_delta: Option<ScalarField>,
    pub noise_eps: f64,
    pub noise_seed: u64,
    pub noise_model: NoiseModel,
    pub exact: Option<Arc<dyn ExactSolution>>,
    pub omega: Rect,
}

impl core::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemData")
            .field("q_delta", &self.q_delta.is_some())
            .field("noise_eps", &self.noise_eps)
            .field("noise_seed", &self.noise_seed)
            .field("noise_model", &self.noise_model)
            .field("exact", &self.exact.as_ref().map(|e| e.name()))
            .field("omega", &self.omega)
            .finish()
    }
}

impl ProblemData {
    /// `f = −Δu` and `q = u|_ω` taken from `exact`.
    pub fn from_exact(exact: Arc<dyn ExactSolution>, omega: Rect) -> Self {
        let (e1, e2) = (exact.clone(), exact.clone());
        ProblemData {
            f: Arc::new(move |p| e1.source(p)),
            q: Arc::new(move |p| e2.value(p)),
            q_delta: None,
            noise_eps: 0.0,
            noise_seed: 0,
            noise_model: NoiseModel::Shared,
            exact: Some(exact),
            omega,
        }
    }

    pub fn with_noise(mut self, eps: f64, seed: u64) -> Self {
        self.noise_eps = eps;
        self.noise_seed = seed;
        self
    }

    pub fn with_perturbation(mut self, q_delta: ScalarField) -> Self {
        self.q_delta = Some(q_delta);
        self
    }

    pub fn is_exact_data(&self) -> bool {
        self.q_delta.is_none() && self.noise_eps == 0.0
    }

    /// Checks ranges and, for unperturbed data with a known solution, that `q`
    /// agrees with it on an 11×11 sample of `ω`.
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_eps >= 0.0 && self.noise_eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise level must be finite and >= 0, got {}",
                self.noise_eps
            )));
        }
        let r = self.omega;
        if !(r.x1 > r.x0 && r.y1 > r.y0) {
            return Err(Error::InvalidArgument(format!(
                "measurement region {r:?} is empty"
            )));
        }
        if let (Some(u), true) = (&self.exact, self.is_exact_data()) {
            for i in 0..=10 {
                for j in 0..=10 {
                    let p = [
                        r.x0 + r.width() * i as f64 / 10.0,
                        r.y0 + r.height() * j as f64 / 10.0,
                    ];
                    let (qv, uv) = ((self.q)(p), u.value(p));
                    if !(fabs(qv - uv) <= 1e-12 * uv.abs().max(1.0)) {
                        return Err(Error::InvalidArgument(format!(
                            "q({p:?}) = {qv} differs from the exact solution {uv}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(u: &dyn ExactSolution, p: Point) {
        let s = 1e-5;
        let g = u.gradient(p);
        let hs = u.hessian(p);
        for d in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += s;
            pm[d] -= s;
            let fd = (u.value(pp) - u.value(pm)) / (2.0 * s);
            assert!((fd - g[d]).abs() < 1e-8 * g[d].abs().max(1.0));
            let (gp, gm) = (u.gradient(pp), u.gradient(pm));
            for k in 0..2 {
                let fd2 = (gp[k] - gm[k]) / (2.0 * s);
                assert!((fd2 - hs[d][k]).abs() < 1e-7 * hs[d][k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for u in [
            SeparableCosine::example_1(),
            SeparableCosine::perturbed(),
            SeparableCosine::u_n(3),
        ] {
            for p in [[0.3, 0.2], [0.77, 0.9], [0.5, 0.5]] {
                fd_check(&u, p);
            }
        }
        fd_check(&Quadratic([1.0, 2.0, -1.0, 0.5, 3.0, -2.0]), [0.4, 0.1]);
    }

    #[test]
    fn example_source_and_flux() {
        let u = SeparableCosine::example_1();
        let p: Point = [0.2, 0.7];
        let want = (PI * PI * (p[1].exp() - p[1]) - p[1].exp()) * (PI * p[0]).cos();
        assert!((u.source(p) - want).abs() < 1e-12);
        let top = u.normal_derivative([0.3, 1.0], Side::Top);
        assert!((top - (1f64.exp() - 1.0) * (PI * 0.3).cos()).abs() < 1e-14);
        assert!(u.normal_derivative([0.3, 0.0], Side::Bottom).abs() < 1e-15);
        assert!(u.normal_derivative([1.0, 0.4], Side::Right).abs() < 1e-14);
        assert!(u.normal_derivative([0.0, 0.4], Side::Left).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let d = ProblemData::from_exact(
            Arc::new(SeparableCosine::example_1()),
            Rect::new(0.1, 0.9, 0.25, 0.75),
        );
        assert!(d.validate().is_ok());
        let mut bad = d.clone();
        bad.q = Arc::new(|_| 0.0);
        assert!(bad.validate().is_err());
        // a perturbed measurement is allowed to differ
        let pert = bad.with_perturbation(Arc::new(|_| 0.1));
        assert!(pert.validate().is_ok());
        assert!(d.clone().with_noise(-1.0, 0).validate().is_err());
    }
}
