//! Bilinear forms and load functionals of the discrete system.
//!
//! Matrices follow `M[i][j] = form(ψ_j, ψ_i)`: column is the trial function,
//! row the test function. All mesh-size weights are folded into the blocks.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fe_space::{BasisEval, FeSpace};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::SubdomainMarking;
use crate::problem::{NoiseModel, ProblemData};
use crate::quadrature::{edge_rule, triangle_rule, MAX_EDGE_EXACTNESS, MAX_TRIANGLE_EXACTNESS};
use crate::trace_space::{boundary_quadrature, MomentVectors, TraceSpace};
use crate::{Error, Point, Result};

/// Every block of the two- and three-field systems.
#[derive(Debug, Clone, PartialEq)]
pub struct FormBlocks {
    pub h: f64,
    pub gamma: f64,
    /// `h²(u, v)_ω`.
    pub m_omega: CsrMatrix,
    /// `a(u, w)`, trial `u` in columns.
    pub a: CsrMatrix,
    /// `b(u, v)`.
    pub b_pen: CsrMatrix,
    /// Jump part of `s`, unscaled by `γ`.
    pub s_jump: CsrMatrix,
    /// Residual part of `s`, unscaled by `γ`.
    pub s_gls: CsrMatrix,
    /// `s*(z, w)`.
    pub s_star: CsrMatrix,
    /// `ã(u, t)`, present for the three-field system.
    pub a_tilde: Option<CsrMatrix>,
}

impl FormBlocks {
    pub fn ndof(&self) -> usize {
        self.m_omega.nrows()
    }

    /// `M_ω + B + γ(S_jump + S_gls)`: the `(u, v)` block.
    pub fn primal_block(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ndof(), self.ndof());
        t.add_block(0, 0, &self.m_omega, 1.0);
        t.add_block(0, 0, &self.b_pen, 1.0);
        if self.gamma != 0.0 {
            t.add_block(0, 0, &self.s_jump, self.gamma);
            t.add_block(0, 0, &self.s_gls, self.gamma);
        }
        t.build()
    }
}

/// Right-hand sides for the test slots `v`, `w` and (three-field) `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub rhs_v: Vec<f64>,
    pub rhs_w: Vec<f64>,
    pub rhs_t: Option<Vec<f64>>,
}

impl Loads {
    /// `[v; w]` or `[v; w; t]`, matching the unknown order `u, z, r`.
    pub fn concatenated(&self) -> Vec<f64> {
        let mut out = self.rhs_v.clone();
        out.extend_from_slice(&self.rhs_w);
        if let Some(t) = &self.rhs_t {
            out.extend_from_slice(t);
        }
        out
    }
}

fn triangle_exactness(space: &FeSpace) -> usize {
    (2 * space.degree() + 2).min(MAX_TRIANGLE_EXACTNESS)
}

/// Runs `visit(element, weight, basis)` over every quadrature point of the
/// listed elements.
fn for_each_qp<F>(
    space: &FeSpace,
    elements: impl Iterator<Item = usize>,
    exactness: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, f64, Point, &crate::fe_space::BasisEval),
{
    let rule = triangle_rule(exactness)?;
    for e in elements {
        let geo = space.geometry(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let b = space.eval_basis(e, *l)?;
            visit(e, 2.0 * geo.area * w, geo.to_physical(*l), &b);
        }
    }
    Ok(())
}

/// Sums `w · kernel(basis, a, c)` over quadrature points into one local
/// matrix per element before scattering it.
fn assemble_elementwise(
    space: &FeSpace,
    elements: impl Iterator<Item = usize>,
    exactness: usize,
    kernel: impl Fn(&BasisEval, usize, usize) -> f64,
) -> Result<CsrMatrix> {
    let n = space.ndof();
    let nl = space.n_local();
    let mut t = TripletBuilder::with_capacity(n, n, space.mesh().n_triangles() * nl * nl);
    let mut local = [[0.0; 6]; 6];
    let mut current = usize::MAX;
    let flush = |t: &mut TripletBuilder, e: usize, local: &[[f64; 6]; 6]| {
        let dofs = space.cell_dofs(e);
        for a in 0..nl {
            for b in 0..nl {
                t.push(dofs[a], dofs[b], local[a][b]);
            }
        }
    };
    for_each_qp(space, elements, exactness, |e, w, _, b| {
        if e != current {
            if current != usize::MAX {
                flush(&mut t, current, &local);
            }
            local = [[0.0; 6]; 6];
            current = e;
        }
        for a in 0..nl {
            for c in 0..nl {
                local[a][c] += w * kernel(b, a, c);
            }
        }
    })?;
    if current != usize::MAX {
        flush(&mut t, current, &local);
    }
    Ok(t.build())
}

/// `K_ij = (∇ψ_j, ∇ψ_i)`.
pub fn stiffness_matrix(space: &FeSpace) -> Result<CsrMatrix> {
    let nt = space.mesh().n_triangles();
    // the gradients of P1/P2 functions are polynomials of degree ≤ 1
    assemble_elementwise(
        space,
        0..nt,
        2 * space.degree().saturating_sub(1),
        |b, a, c| b.grads[a][0] * b.grads[c][0] + b.grads[a][1] * b.grads[c][1],
    )
}

/// `M_ij = (ψ_j, ψ_i)` over `ω` (when given) or the whole domain.
pub fn mass_matrix(space: &FeSpace, marking: Option<&SubdomainMarking>) -> Result<CsrMatrix> {
    let elements: Vec<usize> = match marking {
        Some(m) => m.elements().to_vec(),
        None => (0..space.mesh().n_triangles()).collect(),
    };
    assemble_elementwise(
        space,
        elements.into_iter(),
        triangle_exactness(space),
        |b, a, c| b.values[a] * b.values[c],
    )
}

/// `(g, ψ_i)` over `ω` (when given) or the whole domain.
pub fn load_vector(
    space: &FeSpace,
    g: &dyn Fn(Point) -> f64,
    marking: Option<&SubdomainMarking>,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; space.ndof()];
    let elements: Vec<usize> = match marking {
        Some(m) => m.elements().to_vec(),
        None => (0..space.mesh().n_triangles()).collect(),
    };
    for_each_qp(
        space,
        elements.into_iter(),
        MAX_TRIANGLE_EXACTNESS,
        |e, w, x, b| {
            let gx = g(x);
            for (a, &d) in space.cell_dofs(e).iter().enumerate() {
                out[d] += w * gx * b.values[a];
            }
        },
    )?;
    Ok(out)
}

/// `Nbnd_ij = (∂_ν ψ_j, ∂_ν ψ_i)_{∂Ω}` and `Ñ_ij = (∂_ν ψ_j, ψ_i)_{∂Ω}`.
fn boundary_matrices(space: &FeSpace) -> Result<(CsrMatrix, CsrMatrix)> {
    let n = space.ndof();
    let nl = space.n_local();
    let mut nn = TripletBuilder::new(n, n);
    let mut nv = TripletBuilder::new(n, n);
    for bp in boundary_quadrature(space, 0.0) {
        let b = space.eval_basis(bp.element, bp.lambda)?;
        let dofs = space.cell_dofs(bp.element);
        let dn: Vec<f64> = (0..nl)
            .map(|a| b.grads[a][0] * bp.normal[0] + b.grads[a][1] * bp.normal[1])
            .collect();
        for a in 0..nl {
            for c in 0..nl {
                nn.push(dofs[a], dofs[c], bp.weight * dn[a] * dn[c]);
                nv.push(dofs[a], dofs[c], bp.weight * b.values[a] * dn[c]);
            }
        }
    }
    Ok((nn.build(), nv.build()))
}

/// `a(u, w) = h²(∇u, ∇w) − h²(P∂_ν u, w)_{∂Ω}`.
pub fn assemble_a(space: &FeSpace, moments: &MomentVectors) -> Result<CsrMatrix> {
    let h2 = crate::powi(space.mesh().h(), 2);
    let k = stiffness_matrix(space)?;
    if moments.d.nrows() == 0 {
        return Ok(k.scaled(h2));
    }
    let p = moments.low_rank(&moments.d, &moments.c);
    Ok(k.combine(h2, &p, -h2))
}

/// `b(u, v) = h³(Q∂_ν u, Q∂_ν v)_{∂Ω}`.
pub fn assemble_b(space: &FeSpace, moments: &MomentVectors) -> Result<CsrMatrix> {
    let h3 = crate::powi(space.mesh().h(), 3);
    let (nn, _) = boundary_matrices(space)?;
    if moments.c.nrows() == 0 {
        return Ok(nn.scaled(h3));
    }
    let p = moments.low_rank(&moments.c, &moments.c);
    Ok(nn.combine(h3, &p, -h3))
}

/// `ã(u, t) = h²(∇u, ∇t) − h²(∂_ν u, t)_{∂Ω}`.
pub fn assemble_atilde(space: &FeSpace) -> Result<CsrMatrix> {
    let h2 = crate::powi(space.mesh().h(), 2);
    let k = stiffness_matrix(space)?;
    let (_, nv) = boundary_matrices(space)?;
    Ok(k.combine(h2, &nv, -h2))
}

/// `s*(z, w) = h²[(z, w) + (∇z, ∇w)]`.
pub fn assemble_sstar(space: &FeSpace) -> Result<CsrMatrix> {
    let h2 = crate::powi(space.mesh().h(), 2);
    let m = mass_matrix(space, None)?;
    let k = stiffness_matrix(space)?;
    Ok(m.combine(h2, &k, h2))
}

/// Face values needed by the jump form: quadrature weights and, per point,
/// the normal-gradient jump of every local function on both sides.
struct FaceJumps {
    dofs: Vec<usize>,
    /// `jumps[q][k]` for the `k`-th entry of `dofs`.
    jumps: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn face_jumps(space: &FeSpace, face: usize) -> Result<FaceJumps> {
    let mesh = space.mesh();
    let f = &mesh.interior_faces()[face];
    let rule = edge_rule(2 * space.degree())?;
    let pa = mesh.vertices()[f.vertices[0]];
    let pb = mesh.vertices()[f.vertices[1]];
    let len = mesh.edge_length(f.edge);
    let mut dofs: Vec<usize> = space.cell_dofs(f.left).to_vec();
    for &d in space.cell_dofs(f.right) {
        if !dofs.contains(&d) {
            dofs.push(d);
        }
    }
    let mut jumps = Vec::with_capacity(rule.len());
    let mut weights = Vec::with_capacity(rule.len());
    for (t, w) in rule.points.iter().zip(&rule.weights) {
        let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        let mut j = vec![0.0; dofs.len()];
        for (elem, sign) in [(f.left, 1.0), (f.right, -1.0)] {
            let b = space.eval_basis(elem, space.geometry(elem).to_barycentric(x))?;
            for (a, d) in space.cell_dofs(elem).iter().enumerate() {
                let k = dofs.iter().position(|x| x == d).expect("dof in union");
                j[k] += sign * (b.grads[a][0] * f.normal[0] + b.grads[a][1] * f.normal[1]);
            }
        }
        jumps.push(j);
        weights.push(w * len);
    }
    Ok(FaceJumps {
        dofs,
        jumps,
        weights,
    })
}

/// Gradient-jump stabilizer, `2h³ Σ_F ∫_F ⟦∇ψ_j⟧⟦∇ψ_i⟧`: every interior face
/// lies on the boundary of two elements.
pub fn assemble_jump(space: &FeSpace) -> Result<CsrMatrix> {
    let h3 = crate::powi(space.mesh().h(), 3);
    let n = space.ndof();
    let faces = space.mesh().interior_faces().len();
    let mut t = TripletBuilder::with_capacity(n, n, faces * 81);
    let mut local = Vec::new();
    for face in 0..faces {
        let fj = face_jumps(space, face)?;
        let m = fj.dofs.len();
        local.clear();
        local.resize(m * m, 0.0);
        for (q, w) in fj.weights.iter().enumerate() {
            let j = &fj.jumps[q];
            for a in 0..m {
                for b in 0..m {
                    local[a * m + b] += 2.0 * h3 * w * j[a] * j[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                if local[a * m + b] != 0.0 {
                    t.push(fj.dofs[a], fj.dofs[b], local[a * m + b]);
                }
            }
        }
    }
    Ok(t.build())
}

/// `J(u) = Σ_K h‖⟦h∇u⟧‖²_{∂K∖∂Ω}` evaluated element by element, each element
/// integrating over its own interior edges. Reference for [`assemble_jump`].
pub fn jump_elementwise(space: &FeSpace, u: &[f64]) -> Result<f64> {
    let mesh = space.mesh();
    let h = mesh.h();
    let rule = edge_rule(MAX_EDGE_EXACTNESS)?;
    // elements on each edge; the other one is the neighbour across it
    let mut edge_elems: Vec<Vec<usize>> = vec![Vec::new(); mesh.edges().len()];
    for (t, te) in mesh.triangle_edges().iter().enumerate() {
        for &e in te {
            edge_elems[e].push(t);
        }
    }
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let pts = mesh.triangle_points(k);
        let bc = mesh.barycenter(k);
        for (le, &e) in mesh.triangle_edges()[k].iter().enumerate() {
            let other = match edge_elems[e].iter().find(|&&t| t != k) {
                Some(&o) => o,
                None => continue,
            };
            let [ia, ib] = crate::mesh::LOCAL_EDGES[le];
            let (pa, pb) = (pts[ia], pts[ib]);
            let len = crate::mesh::dist(pa, pb);
            let mut nu = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if nu[0] * (mid[0] - bc[0]) + nu[1] * (mid[1] - bc[1]) < 0.0 {
                nu = [-nu[0], -nu[1]];
            }
            for (t, w) in rule.points.iter().zip(&rule.weights) {
                let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                let (_, gk) = space.evaluate(u, k, space.geometry(k).to_barycentric(x));
                let (_, go) = space.evaluate(u, other, space.geometry(other).to_barycentric(x));
                // ν_K·∇u|_K + ν_other·∇u|_other with ν_other = −ν_K
                let jump = h * (nu[0] * (gk[0] - go[0]) + nu[1] * (gk[1] - go[1]));
                total += h * w * len * jump * jump;
            }
        }
    }
    Ok(total)
}

/// `h⁴ Σ_K (Δψ_j, Δψ_i)_K`. Zero for P1.
pub fn assemble_gls(space: &FeSpace) -> Result<CsrMatrix> {
    let n = space.ndof();
    let mut t = TripletBuilder::new(n, n);
    if space.degree() == 1 {
        return Ok(t.build());
    }
    let h4 = crate::powi(space.mesh().h(), 4);
    let nl = space.n_local();
    for e in 0..space.mesh().n_triangles() {
        let lap = space.basis_laplacians(e);
        let area = space.geometry(e).area;
        let dofs = space.cell_dofs(e);
        for a in 0..nl {
            for b in 0..nl {
                t.push(dofs[a], dofs[b], h4 * area * lap[a] * lap[b]);
            }
        }
    }
    Ok(t.build())
}

/// `−h⁴ Σ_K (f, Δψ_i)_K`, the load matching [`assemble_gls`] so that the
/// exact solution (`Δu = −f`) stays consistent.
pub fn gls_load(space: &FeSpace, f: &dyn Fn(Point) -> f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; space.ndof()];
    if space.degree() == 1 {
        return Ok(out);
    }
    let h4 = crate::powi(space.mesh().h(), 4);
    let nt = space.mesh().n_triangles();
    let rule = triangle_rule(MAX_TRIANGLE_EXACTNESS)?;
    for e in 0..nt {
        let geo = space.geometry(e);
        let lap = space.basis_laplacians(e);
        let fint: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| 2.0 * geo.area * w * f(geo.to_physical(*l)))
            .sum();
        for (a, &d) in space.cell_dofs(e).iter().enumerate() {
            out[d] -= h4 * fint * lap[a];
        }
    }
    Ok(out)
}

/// Assembles every block. `gamma` scales the jump and residual stabilizers.
pub fn assemble_blocks(
    space: &FeSpace,
    trace: &TraceSpace,
    marking: &SubdomainMarking,
    gamma: f64,
    three_field: bool,
) -> Result<(FormBlocks, MomentVectors)> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    let h = space.mesh().h();
    let moments = trace.compute_moments(space)?;
    let blocks = FormBlocks {
        h,
        gamma,
        m_omega: mass_matrix(space, Some(marking))?.scaled(h * h),
        a: assemble_a(space, &moments)?,
        b_pen: assemble_b(space, &moments)?,
        s_jump: assemble_jump(space)?,
        s_gls: assemble_gls(space)?,
        s_star: assemble_sstar(space)?,
        a_tilde: if three_field {
            Some(assemble_atilde(space)?)
        } else {
            None
        },
    };
    Ok((blocks, moments))
}

/// Loads of the two-field system (and `rhs_t` when `three_field`), with the
/// measurement perturbation and load noise of `data` applied.
pub fn assemble_rhs(
    space: &FeSpace,
    trace: &TraceSpace,
    moments: &MomentVectors,
    data: &ProblemData,
    marking: &SubdomainMarking,
    gamma: f64,
    three_field: bool,
) -> Result<Loads> {
    data.validate()?;
    let h = space.mesh().h();
    let h2 = h * h;
    let beta = trace.beta();
    let n = space.ndof();

    let fq = load_vector(space, &*data.f, None)?;
    let mut rhs_w: Vec<f64> = fq.iter().map(|v| h2 * v).collect();
    let mut rhs_v: Vec<f64> = {
        let q = data.q.clone();
        let qd = data.q_delta.clone();
        let meas = move |p: Point| q(p) + qd.as_ref().map_or(0.0, |d| d(p));
        load_vector(space, &meas, Some(marking))?
            .iter()
            .map(|v| h2 * v)
            .collect()
    };

    if beta != 0.0 {
        // h²(β, w)_{∂Ω} and h³(Q∂_ν v, β)_{∂Ω}
        let mut trace_int = vec![0.0; n];
        let mut flux_int = vec![0.0; n];
        for bp in boundary_quadrature(space, 0.0) {
            let b = space.eval_basis(bp.element, bp.lambda)?;
            for (a, &d) in space.cell_dofs(bp.element).iter().enumerate() {
                trace_int[d] += bp.weight * b.values[a];
                flux_int[d] +=
                    bp.weight * (b.grads[a][0] * bp.normal[0] + b.grads[a][1] * bp.normal[1]);
            }
        }
        let beta_moments = trace.moments_of(space.mesh(), &|_, _| beta);
        let proj = moments.project_vector(&moments.c, &beta_moments);
        for i in 0..n {
            rhs_w[i] += h2 * beta * trace_int[i];
            rhs_v[i] += h2 * h * (beta * flux_int[i] - proj[i]);
        }
    }

    if gamma != 0.0 {
        for (r, g) in rhs_v.iter_mut().zip(gls_load(space, &*data.f)?) {
            *r += gamma * g;
        }
    }

    let rhs_t = if three_field {
        Some(fq.iter().map(|v| h2 * v).collect())
    } else {
        None
    };
    let mut loads = Loads {
        rhs_v,
        rhs_w,
        rhs_t,
    };
    if data.noise_eps > 0.0 {
        apply_noise(
            &mut loads,
            data.noise_eps,
            data.noise_seed,
            data.noise_model,
        );
    }
    Ok(loads)
}

/// `F_i ← F_i + ε·sign(δ_i)·|F_i|`, `δ ~ N(0, 1)` from a seeded ChaCha stream,
/// in the order `v, w, t`.
pub fn apply_noise(loads: &mut Loads, eps: f64, seed: u64, model: NoiseModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared: f64 = StandardNormal.sample(&mut rng);
    let mut perturb = |v: &mut Vec<f64>| {
        for x in v.iter_mut() {
            let delta: f64 = match model {
                NoiseModel::Entrywise => StandardNormal.sample(&mut rng),
                NoiseModel::Shared => shared,
            };
            let sign = if delta < 0.0 { -1.0 } else { 1.0 };
            *x += eps * sign * x.abs();
        }
    };
    perturb(&mut loads.rhs_v);
    perturb(&mut loads.rhs_w);
    if let Some(t) = loads.rhs_t.as_mut() {
        perturb(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use crate::mesh::{Mesh, Rect};
    use crate::problem::{ExactSolution, Quadratic, SeparableCosine};
    use crate::trace_space::Beta;
    use alloc::sync::Arc;
    use rand::Rng;

    const OMEGA: Rect = Rect {
        x0: 0.1,
        x1: 0.9,
        y0: 0.25,
        y1: 0.75,
    };

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn zero(_: Point) -> f64 {
        0.0
    }

    /// a(u, w) for an exact `u`, by quadrature.
    fn a_exact(
        space: &FeSpace,
        trace: &TraceSpace,
        u: &dyn ExactSolution,
        w: &[f64],
        full_flux: bool,
    ) -> f64 {
        let h2 = space.mesh().h().powi(2);
        let rule = triangle_rule(6).unwrap();
        let mut vol = 0.0;
        for e in 0..space.mesh().n_triangles() {
            let geo = space.geometry(e);
            for (l, wt) in rule.points.iter().zip(&rule.weights) {
                let x = geo.to_physical(*l);
                let (_, gw) = space.evaluate(w, e, *l);
                let gu = u.gradient(x);
                vol += 2.0 * geo.area * wt * (gu[0] * gw[0] + gu[1] * gw[1]);
            }
        }
        let flux = |x: Point, s| u.normal_derivative(x, s);
        let pcoef = trace.apply_p(&trace.moments_of(space.mesh(), &flux));
        let mut bnd = 0.0;
        for bp in boundary_quadrature(space, 16.0) {
            let (wv, _) = space.evaluate(w, bp.element, bp.lambda);
            let g = if full_flux {
                flux(bp.x, bp.side)
            } else {
                trace.eval_combination(&pcoef, bp.x, bp.side)
            };
            bnd += bp.weight * g * wv;
        }
        h2 * (vol - bnd)
    }

    #[test]
    fn constants_are_annihilated() {
        let mesh = Mesh::unit_square(7).unwrap();
        for degree in [1, 2] {
            let space = FeSpace::new(&mesh, degree).unwrap();
            let trace = TraceSpace::cosine(3, Beta::Value(0.0), &mesh, &zero).unwrap();
            let marking = mesh.mark_omega(OMEGA).unwrap();
            let (blocks, _) = assemble_blocks(&space, &trace, &marking, 1.0, true).unwrap();
            let one = space.interpolate(|_| 1.0);
            for m in [
                &blocks.a,
                &blocks.b_pen,
                &blocks.s_jump,
                &blocks.s_gls,
                blocks.a_tilde.as_ref().unwrap(),
            ] {
                assert!(norm2(&m.matvec(&one)) < 1e-13);
            }
            assert!((blocks.s_star.quad_form(&one) - mesh.h().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn a_without_trace_space_is_scaled_stiffness() {
        let mesh = Mesh::unit_square(6).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let trace = TraceSpace::empty(0.0, &mesh);
        let mv = trace.compute_moments(&space).unwrap();
        let a = assemble_a(&space, &mv).unwrap();
        let k = stiffness_matrix(&space).unwrap().scaled(mesh.h().powi(2));
        assert_eq!(a, k);
    }

    #[test]
    fn green_identities() {
        let mesh = Mesh::unit_square(11).unwrap();
        let u = SeparableCosine::example_1();
        let f = |p: Point| u.source(p);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for degree in [1, 2] {
            let space = FeSpace::new(&mesh, degree).unwrap();
            let trace = TraceSpace::cosine(8, Beta::Auto, &mesh, &f).unwrap();
            let fl = load_vector(&space, &f, None).unwrap();
            let h2 = mesh.h().powi(2);
            for _ in 0..5 {
                let w = random_vec(space.ndof(), &mut rng);
                let rhs = h2 * crate::linalg::dot(&fl, &w);
                let a = a_exact(&space, &trace, &u, &w, false);
                assert!((a - rhs).abs() <= 1e-8 * rhs.abs(), "{a} vs {rhs}");
                let at = a_exact(&space, &trace, &u, &w, true);
                assert!((at - rhs).abs() <= 1e-8 * rhs.abs(), "{at} vs {rhs}");
            }
        }
    }

    #[test]
    fn atilde_equals_a_when_flux_has_no_moments() {
        // u supported away from ∂Ω: its flux, and hence P∂_ν u, vanishes
        let mesh = Mesh::unit_square(9).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let trace = TraceSpace::cosine(4, Beta::Value(0.0), &mesh, &zero).unwrap();
        let mv = trace.compute_moments(&space).unwrap();
        let a = assemble_a(&space, &mv).unwrap();
        let at = assemble_atilde(&space).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = space
            .dof_coords()
            .iter()
            .map(|p| {
                if (0.3..=0.7).contains(&p[0]) && (0.3..=0.7).contains(&p[1]) {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let r = random_vec(space.ndof(), &mut rng);
        assert!((a.bilinear(&r, &u) - at.bilinear(&r, &u)).abs() < 1e-14);
    }

    #[test]
    fn b_vanishes_on_projected_flux() {
        // the flux of example_1 lies in V_1, so only interpolation error survives Q
        let mesh = Mesh::unit_square(41).unwrap();
        let space = FeSpace::new(&mesh, 2).unwrap();
        let u = SeparableCosine::example_1();
        let c = space.interpolate(|p| u.value(p));
        let t1 = TraceSpace::cosine(1, Beta::Value(0.0), &mesh, &zero).unwrap();
        let t0 = TraceSpace::empty(0.0, &mesh);
        let b1 = assemble_b(&space, &t1.compute_moments(&space).unwrap())
            .unwrap()
            .quad_form(&c);
        let b0 = assemble_b(&space, &t0.compute_moments(&space).unwrap())
            .unwrap()
            .quad_form(&c);
        assert!(b1 < 1e-3 * b0, "{b1} vs {b0}");
    }

    #[test]
    fn b_without_trace_space_one_hat() {
        // corner hat on the n = 3 mesh is 1 − 2x − 2y on one triangle, so
        // ∂_ν ψ = 2 on its bottom and left edges (length 1/2) and 0 elsewhere
        let mesh = Mesh::unit_square(3).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let b = assemble_b(
            &space,
            &TraceSpace::empty(0.0, &mesh)
                .compute_moments(&space)
                .unwrap(),
        )
        .unwrap();
        let mut e = vec![0.0; space.ndof()];
        e[0] = 1.0;
        let h3 = mesh.h().powi(3);
        let oracle = h3 * (2.0 * 2.0 * 0.5 + 2.0 * 2.0 * 0.5);
        assert!((b.quad_form(&e) - oracle).abs() < 1e-14);
    }

    #[test]
    fn jump_face_and_element_loops_agree() {
        let mesh = Mesh::unit_square(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for degree in [1, 2] {
            let space = FeSpace::new(&mesh, degree).unwrap();
            let s = assemble_jump(&space).unwrap();
            for _ in 0..20 {
                let u = random_vec(space.ndof(), &mut rng);
                let face = s.quad_form(&u);
                let elem = jump_elementwise(&space, &u).unwrap();
                assert!((face - elem).abs() <= 1e-12 * elem.abs());
            }
            let affine = space.interpolate(|p| p[0] + 2.0 * p[1]);
            assert!(jump_elementwise(&space, &affine).unwrap() < 1e-13);
            // the assembled form only up to summation roundoff
            let scale: f64 = s
                .iter()
                .map(|(i, j, v)| (affine[i] * v * affine[j]).abs())
                .sum();
            assert!(s.quad_form(&affine).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn jump_one_face_hand_computation() {
        // n = 2: triangles [0,1,2] and [1,3,2]; hat at vertex 0 is 1 − x − y on
        // the first and 0 on the second. Face (1,2) has length √2, normal (1,1)/√2;
        // jump = ν·∇ψ_left − 0 = −√2, so J = 2·h³·√2·2.
        let mesh = Mesh::unit_square(2).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let s = assemble_jump(&space).unwrap();
        let h3 = mesh.h().powi(3);
        assert!((s.get(0, 0) - 2.0 * h3 * 2f64.sqrt() * 2.0).abs() < 1e-14);
    }

    #[test]
    fn gls_single_element_entry() {
        // the first element of the n = 2 mesh: vertices (0,0), (1,0), (0,1);
        // the vertex-0 P2 function λ₀(2λ₀−1) has Δ = 4|∇λ₀|² = 8, area 1/2
        let mesh = Mesh::unit_square(2).unwrap();
        let space = FeSpace::new(&mesh, 2).unwrap();
        let g = assemble_gls(&space).unwrap();
        let h4 = mesh.h().powi(4);
        assert!((g.get(0, 0) - h4 * 64.0 * 0.5).abs() < 1e-14 * h4 * 32.0);
        let p1 = FeSpace::new(&mesh, 1).unwrap();
        assert_eq!(assemble_gls(&p1).unwrap().nnz(), 0);
        assert!(gls_load(&p1, &|_| 1.0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gls_stationarity_for_quadratics() {
        let mesh = Mesh::unit_square(6).unwrap();
        let space = FeSpace::new(&mesh, 2).unwrap();
        let u = Quadratic([0.3, 1.0, -2.0, 1.5, 0.7, 2.5]);
        let f = -u.laplacian([0.0, 0.0]);
        let c = space.interpolate(|p| u.value(p));
        let g = assemble_gls(&space).unwrap();
        let load = gls_load(&space, &|_| f).unwrap();
        let res: Vec<f64> = g.matvec(&c).iter().zip(&load).map(|(a, b)| a - b).collect();
        assert!(norm2(&res) < 1e-10 * norm2(&load));
    }

    #[test]
    fn stabilizers_are_psd() {
        let mesh = Mesh::unit_square(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for degree in [1, 2] {
            let space = FeSpace::new(&mesh, degree).unwrap();
            let trace = TraceSpace::cosine(4, Beta::Value(0.0), &mesh, &zero).unwrap();
            let marking = mesh.mark_omega(OMEGA).unwrap();
            let (blocks, _) = assemble_blocks(&space, &trace, &marking, 1.0, false).unwrap();
            for m in [
                &blocks.m_omega,
                &blocks.b_pen,
                &blocks.s_jump,
                &blocks.s_gls,
                &blocks.s_star,
            ] {
                assert!(m.asymmetry() <= 1e-12 * m.max_abs().max(1e-300));
                for _ in 0..10 {
                    let x = random_vec(space.ndof(), &mut rng);
                    assert!(m.quad_form(&x) >= -1e-12 * m.max_abs() * crate::linalg::dot(&x, &x));
                }
            }
            for _ in 0..10 {
                let x = random_vec(space.ndof(), &mut rng);
                assert!(blocks.s_star.quad_form(&x) > 0.0);
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_loads() {
        let mesh = Mesh::unit_square(5).unwrap();
        let space = FeSpace::new(&mesh, 2).unwrap();
        let trace = TraceSpace::cosine(2, Beta::Auto, &mesh, &zero).unwrap();
        let marking = mesh.mark_omega(OMEGA).unwrap();
        let mv = trace.compute_moments(&space).unwrap();
        let mut data = ProblemData::from_exact(Arc::new(crate::problem::Constant(0.0)), OMEGA);
        data.exact = None;
        let l = assemble_rhs(&space, &trace, &mv, &data, &marking, 1.0, true).unwrap();
        assert!(l.concatenated().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn beta_compatible_load() {
        let mesh = Mesh::unit_square(9).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let trace = TraceSpace::cosine(2, Beta::Auto, &mesh, &|_| 1.0).unwrap();
        assert!((trace.beta() - 0.25).abs() < 1e-13);
        let marking = mesh.mark_omega(OMEGA).unwrap();
        let mv = trace.compute_moments(&space).unwrap();
        let mut data = ProblemData::from_exact(Arc::new(crate::problem::Constant(0.0)), OMEGA);
        data.exact = None;
        data.f = Arc::new(|_| 1.0);
        let l = assemble_rhs(&space, &trace, &mv, &data, &marking, 1.0, false).unwrap();
        let total: f64 = l.rhs_w.iter().sum();
        assert!((total - 2.0 * mesh.h().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn noise_is_reproducible() {
        let mesh = Mesh::unit_square(9).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let u = Arc::new(SeparableCosine::example_1());
        let f = |p: Point| SeparableCosine::example_1().source(p);
        let trace = TraceSpace::cosine(8, Beta::Auto, &mesh, &f).unwrap();
        let marking = mesh.mark_omega(OMEGA).unwrap();
        let mv = trace.compute_moments(&space).unwrap();
        let clean = ProblemData::from_exact(u.clone(), OMEGA);
        let noisy = clean.clone().with_noise(0.12, 7);
        let l0 = assemble_rhs(&space, &trace, &mv, &clean, &marking, 1.0, false).unwrap();
        let l1 = assemble_rhs(&space, &trace, &mv, &noisy, &marking, 1.0, false).unwrap();
        let l2 = assemble_rhs(&space, &trace, &mv, &noisy, &marking, 1.0, false).unwrap();
        assert_eq!(l1, l2);
        let c0 = l0.concatenated();
        let c1 = l1.concatenated();
        for (a, b) in c0.iter().zip(&c1) {
            let d = (b - a).abs();
            assert!(d == 0.0 || (d - 0.12 * a.abs()).abs() <= 1e-15 * a.abs());
        }
        assert_ne!(c0, c1);
    }
}
