//! The monolithic saddle-point systems and the triple norm.
//!
//! Unknowns are ordered `u, z` (two-field) or `u, z, r` (three-field); the
//! test slots `v, w, t` follow the same order, so the matrices are symmetric:
//!
//! ```text
//! [ M_ω + B + γS   Aᵀ    Ãᵀ  ]
//! [ A             −S*    0   ]
//! [ Ã              0    −S*  ]
//! ```

use alloc::format;
use alloc::vec::Vec;

use libm::sqrt;

use crate::forms::{FormBlocks, Loads};
use crate::linalg::{factorize_auto_sym, SparseSym, TripletBuilder};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    TwoField,
    ThreeField,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::TwoField => "two_field",
            Method::ThreeField => "three_field",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two_field" => Some(Method::TwoField),
            "three_field" => Some(Method::ThreeField),
            _ => None,
        }
    }
}

/// The assembled block operator and its load.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub matrix: SparseSym,
    pub rhs: Vec<f64>,
    pub ndof: usize,
    pub fields: usize,
}

/// The terms of `⦀u, z⦀²` (plus `S*(r)` for three fields). `jump` and `gls`
/// are unscaled; the total uses `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TripleNormParts {
    pub neumann: f64,
    pub data: f64,
    pub jump: f64,
    pub gls: f64,
    pub dual: f64,
    pub flux_dual: f64,
    pub gamma: f64,
}

impl TripleNormParts {
    pub fn squared(&self) -> f64 {
        self.neumann + self.data + self.gamma * (self.jump + self.gls) + self.dual + self.flux_dual
    }

    pub fn total(&self) -> f64 {
        sqrt(self.squared())
    }

    pub fn min_part(&self) -> f64 {
        [
            self.neumann,
            self.data,
            self.jump,
            self.gls,
            self.dual,
            self.flux_dual,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Option<Vec<f64>>,
    /// Relative algebraic residual of the monolithic solve.
    pub residual: f64,
    pub parts: TripleNormParts,
}

pub fn build_two_field(blocks: &FormBlocks, loads: &Loads) -> Result<SaddleSystem> {
    build(blocks, loads, false)
}

pub fn build_three_field(blocks: &FormBlocks, loads: &Loads) -> Result<SaddleSystem> {
    build(blocks, loads, true)
}

fn build(blocks: &FormBlocks, loads: &Loads, three: bool) -> Result<SaddleSystem> {
    let n = blocks.ndof();
    let fields = if three { 3 } else { 2 };
    let at =
        if three {
            Some(blocks.a_tilde.as_ref().ok_or_else(|| {
                Error::InvalidArgument("three-field system needs the ã block".into())
            })?)
        } else {
            None
        };
    let rhs = if three {
        if loads.rhs_t.is_none() {
            return Err(Error::InvalidArgument(
                "three-field system needs the t load".into(),
            ));
        }
        loads.concatenated()
    } else {
        let mut r = loads.rhs_v.clone();
        r.extend_from_slice(&loads.rhs_w);
        r
    };
    if rhs.len() != fields * n {
        return Err(Error::InvalidArgument(format!(
            "load length {} != {}",
            rhs.len(),
            fields * n
        )));
    }
    let mut t = TripletBuilder::new(fields * n, fields * n);
    t.add_block(0, 0, &blocks.primal_block(), 1.0);
    t.add_block_transposed(0, n, &blocks.a, 1.0);
    t.add_block(n, 0, &blocks.a, 1.0);
    t.add_block(n, n, &blocks.s_star, -1.0);
    if let Some(at) = at {
        t.add_block_transposed(0, 2 * n, at, 1.0);
        t.add_block(2 * n, 0, at, 1.0);
        t.add_block(2 * n, 2 * n, &blocks.s_star, -1.0);
    }
    Ok(SaddleSystem {
        matrix: SparseSym::new(t.build())?,
        rhs,
        ndof: n,
        fields,
    })
}

impl SaddleSystem {
    pub fn solve(&self, blocks: &FormBlocks) -> Result<SolveResult> {
        let f = factorize_auto_sym(&self.matrix)?;
        let (x, residual) = f.solve_with_residual(&self.rhs)?;
        let n = self.ndof;
        let u = x[..n].to_vec();
        let z = x[n..2 * n].to_vec();
        let r = if self.fields == 3 {
            Some(x[2 * n..].to_vec())
        } else {
            None
        };
        let parts = triple_norm_parts(blocks, &u, &z, r.as_deref());
        Ok(SolveResult {
            u,
            z,
            r,
            residual,
            parts,
        })
    }
}

pub fn solve_two_field(blocks: &FormBlocks, loads: &Loads) -> Result<SolveResult> {
    build_two_field(blocks, loads)?.solve(blocks)
}

pub fn solve_three_field(blocks: &FormBlocks, loads: &Loads) -> Result<SolveResult> {
    build_three_field(blocks, loads)?.solve(blocks)
}

pub fn triple_norm_parts(
    blocks: &FormBlocks,
    u: &[f64],
    z: &[f64],
    r: Option<&[f64]>,
) -> TripleNormParts {
    TripleNormParts {
        neumann: blocks.b_pen.quad_form(u),
        data: blocks.m_omega.quad_form(u),
        jump: blocks.s_jump.quad_form(u),
        gls: blocks.s_gls.quad_form(u),
        dual: blocks.s_star.quad_form(z),
        flux_dual: r.map_or(0.0, |r| blocks.s_star.quad_form(r)),
        gamma: blocks.gamma,
    }
}

/// `⦀u, z⦀`.
pub fn triple_norm(blocks: &FormBlocks, u: &[f64], z: &[f64]) -> (f64, TripleNormParts) {
    let p = triple_norm_parts(blocks, u, z, None);
    (p.total(), p)
}

/// `g(u, z, v, w) = h²(u,v)_ω + b(u,v) + γs(u,v) + a(v,z) + a(u,w) − s*(z,w)`.
pub fn g_form(blocks: &FormBlocks, u: &[f64], z: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let primal = blocks.m_omega.bilinear(v, u)
        + blocks.b_pen.bilinear(v, u)
        + blocks.gamma * (blocks.s_jump.bilinear(v, u) + blocks.s_gls.bilinear(v, u));
    primal + blocks.a.bilinear(z, v) + blocks.a.bilinear(w, u) - blocks.s_star.bilinear(w, z)
}

/// `g̃ = g + ã(v, r) + ã(u, t) − s*(r, t)`.
#[allow(clippy::too_many_arguments)]
pub fn g_tilde(
    blocks: &FormBlocks,
    u: &[f64],
    z: &[f64],
    r: &[f64],
    v: &[f64],
    w: &[f64],
    t: &[f64],
) -> Result<f64> {
    let at = blocks
        .a_tilde
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("ã block not assembled".into()))?;
    Ok(
        g_form(blocks, u, z, v, w) + at.bilinear(r, v) + at.bilinear(t, u)
            - blocks.s_star.bilinear(t, r),
    )
}
