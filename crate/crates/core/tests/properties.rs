#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use ucfem::analysis::{fitted_slope, pairwise_rate, DualNorm};
use ucfem::fe_space::FeSpace;
use ucfem::forms::{assemble_blocks, assemble_gls, assemble_jump};
use ucfem::linalg::{
    dense_solve, factorize_symmetric, norm_max, CsrMatrix, DenseMatrix, SparseSym, TripletBuilder,
};
use ucfem::mesh::{Mesh, Rect, Side};
use ucfem::solver::{build_two_field, triple_norm};
use ucfem::trace_space::{Beta, TraceSpace};

fn arb_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

/// Symmetric, indefinite in general, with a dominant diagonal of random sign.
fn symmetric_matrix(n: usize, entries: &[f64], diag: &[f64]) -> CsrMatrix {
    let mut t = TripletBuilder::new(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..i {
            if (i + 2 * j) % 3 == 0 {
                t.push(i, j, entries[k % entries.len()]);
                t.push(j, i, entries[k % entries.len()]);
                k += 1;
            }
        }
        let sign = if diag[i] < 0.0 { -1.0 } else { 1.0 };
        t.push(i, i, sign * (n as f64 + diag[i].abs()));
    }
    t.build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solve_inverts_the_matrix(entries in arb_vec(400), diag in arb_vec(40), b in arb_vec(40)) {
        let a = symmetric_matrix(40, &entries, &diag);
        let f = factorize_symmetric(&SparseSym::new(a.clone()).unwrap()).unwrap();
        let x = f.solve(&b).unwrap();
        let ax = a.matvec(&x);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        prop_assert!(norm_max(&r) <= 1e-10 * norm_max(&b).max(1e-300));
        let oracle = dense_solve(&a.to_dense(), &b).unwrap();
        let d: Vec<f64> = x.iter().zip(&oracle).map(|(p, q)| p - q).collect();
        prop_assert!(norm_max(&d) <= 1e-10 * norm_max(&oracle).max(1e-300));
    }

    #[test]
    fn projection_is_idempotent(n in 1usize..10, c in arb_vec(4), k in 0.0f64..6.0) {
        let mesh = Mesh::unit_square(9).unwrap();
        let trace = TraceSpace::cosine(n, Beta::Value(0.0), &mesh, &|_| 0.0).unwrap();
        let g = move |x: [f64; 2], side: Side| {
            let s = match side { Side::Top => 1.0, Side::Bottom => -0.5, _ => 0.3 };
            c[0] + s * c[1] * (k * x[0]).cos() + c[2] * x[1] * x[1] + c[3] * (k * x[1]).sin()
        };
        let p1 = trace.apply_p(&trace.moments_of(&mesh, &g));
        let pg = |x: [f64; 2], side: Side| trace.eval_combination(&p1, x, side);
        let p2 = trace.apply_p(&trace.moments_of(&mesh, &pg));
        let d: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a - b).collect();
        prop_assert!(norm_max(&d) <= 1e-10 * (1.0 + norm_max(&p1)));
    }

    #[test]
    fn dual_norm_is_absolutely_homogeneous(b in arb_vec(81), lambda in -50.0f64..50.0) {
        let mesh = Mesh::unit_square(9).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let dual = DualNorm::new(&space).unwrap();
        let base = dual.eval(&b).unwrap();
        let scaled: Vec<f64> = b.iter().map(|v| lambda * v).collect();
        let s = dual.eval(&scaled).unwrap();
        prop_assert!((s - lambda.abs() * base).abs() <= 1e-10 * (1.0 + lambda.abs() * base));
    }

    #[test]
    fn rates_recover_power_laws(c in 0.01f64..100.0, p in 0.1f64..4.0, h0 in 0.05f64..0.5, levels in 2usize..6) {
        let hs: Vec<f64> = (0..levels).map(|i| h0 / 2f64.powi(i as i32)).collect();
        let es: Vec<f64> = hs.iter().map(|h| c * h.powf(p)).collect();
        prop_assert!((fitted_slope(&hs, &es) - p).abs() <= 1e-10);
        for w in 0..levels - 1 {
            prop_assert!((pairwise_rate(hs[w], es[w], hs[w + 1], es[w + 1]) - p).abs() <= 1e-10);
        }
    }

    #[test]
    fn stabilizers_are_positive_semidefinite(degree in 1usize..3, u in arb_vec(289)) {
        let mesh = Mesh::unit_square(9).unwrap();
        let space = FeSpace::new(&mesh, degree).unwrap();
        let u = &u[..space.ndof()];
        for m in [assemble_jump(&space).unwrap(), assemble_gls(&space).unwrap()] {
            let q = m.quad_form(u);
            let scale: f64 = m.iter().map(|(i, j, v)| (u[i] * v * u[j]).abs()).sum();
            prop_assert!(q >= -1e-13 * scale, "quadratic form {q:e}");
        }
    }

    #[test]
    fn triple_norm_is_homogeneous(u in arb_vec(49), z in arb_vec(49), lambda in -20.0f64..20.0) {
        let mesh = Mesh::unit_square(7).unwrap();
        let space = FeSpace::new(&mesh, 1).unwrap();
        let marking = mesh.mark_omega(Rect::new(0.1, 0.9, 0.25, 0.75)).unwrap();
        let trace = TraceSpace::cosine(3, Beta::Value(0.0), &mesh, &|_| 0.0).unwrap();
        let (blocks, _) = assemble_blocks(&space, &trace, &marking, 1.0, false).unwrap();
        let (base, _) = triple_norm(&blocks, &u, &z);
        let su: Vec<f64> = u.iter().map(|v| lambda * v).collect();
        let sz: Vec<f64> = z.iter().map(|v| lambda * v).collect();
        let (s, _) = triple_norm(&blocks, &su, &sz);
        prop_assert!((s - lambda.abs() * base).abs() <= 1e-10 * (1.0 + lambda.abs() * base));
    }
}

#[test]
fn saddle_system_is_symmetric_on_a_small_mesh() {
    let mesh = Mesh::unit_square(5).unwrap();
    let space = FeSpace::new(&mesh, 2).unwrap();
    let marking = mesh.mark_omega(Rect::new(0.1, 0.9, 0.25, 0.75)).unwrap();
    let trace = TraceSpace::cosine(2, Beta::Value(0.0), &mesh, &|_| 0.0).unwrap();
    let (blocks, _) = assemble_blocks(&space, &trace, &marking, 0.5, false).unwrap();
    let n = space.ndof();
    let loads = ucfem::forms::Loads {
        rhs_v: vec![1.0; n],
        rhs_w: vec![0.0; n],
        rhs_t: None,
    };
    let sys = build_two_field(&blocks, &loads).unwrap();
    let result = sys.solve(&blocks).unwrap();
    assert!(result.residual < 1e-10);
    let dense: DenseMatrix = blocks.primal_block().to_dense();
    for i in 0..n {
        for j in 0..n {
            assert!(
                (dense.get(i, j) - dense.get(j, i)).abs() <= 1e-15 * (1.0 + dense.get(i, j).abs())
            );
        }
    }
}
