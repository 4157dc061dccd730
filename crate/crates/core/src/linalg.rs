//! Sparse assembly, direct solves and dense utilities.
//!
//! The sparse symmetric-indefinite and LU factorizations and the dense SVD
//! are delegated to `faer`.
//! The dense Gaussian elimination in this module is written out by hand and
//! serves both as the small-system path and as the oracle for the sparse one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, IntranodeLbltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};
use libm::{fabs, sqrt};

use crate::fe_space::FeSpace;
use crate::{Error, Result};

/// Largest dimension routed to the dense path by [`factorize_auto`].
pub const DENSE_LIMIT: usize = 2000;
/// Relative residual above which a solve is a hard failure.
pub const RESIDUAL_FAIL: f64 = 1e-6;
/// Residual targeted by iterative refinement.
pub const RESIDUAL_TARGET: f64 = 1e-8;

/// Coordinate-format accumulator; duplicates are summed on [`build`](Self::build).
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Adds `scale * m` with its origin shifted to `(row0, col0)`.
    pub fn add_block(&mut self, row0: usize, col0: usize, m: &CsrMatrix, scale: f64) {
        for (i, j, v) in m.iter() {
            self.push(row0 + i, col0 + j, scale * v);
        }
    }

    /// Adds `scale * mᵀ` with its origin shifted to `(row0, col0)`.
    pub fn add_block_transposed(&mut self, row0: usize, col0: usize, m: &CsrMatrix, scale: f64) {
        for (i, j, v) in m.iter() {
            self.push(row0 + j, col0 + i, scale * v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps the push order of duplicates, so sums are reproducible
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = TripletBuilder::new(m.nrows, m.ncols);
        for i in 0..m.nrows {
            for j in 0..m.ncols {
                let v = m.get(i, j);
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, j, v) in self.iter() {
            y[j] += v * x[i];
        }
        y
    }

    /// `yᵀ A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|i| y[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.iter() {
            t.push(j, i, v);
        }
        t.build()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        t.add_block(0, 0, self, a);
        t.add_block(0, 0, other, b);
        t.build()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(fabs(*v)))
    }

    /// `max |A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (i, j, v) in self.iter() {
            worst = worst.max(fabs(v - self.get(j, i)));
        }
        worst
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        sqrt(self.values.iter().map(|v| v * v).sum())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m.set(i, j, v);
        }
        m
    }

    /// Rows `rows` and columns `cols` (in the given orders).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = TripletBuilder::new(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_map[j] != usize::MAX {
                    t.push(r, col_map[j], v);
                }
            }
        }
        t.build()
    }
}

/// A square matrix checked to be numerically symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym(CsrMatrix);

impl SparseSym {
    /// Accepts `m` if `‖A − Aᵀ‖_max ≤ 1e-12 ‖A‖_max`.
    pub fn new(m: CsrMatrix) -> Result<Self> {
        if m.nrows != m.ncols {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, not square",
                m.nrows, m.ncols
            )));
        }
        let asym = m.asymmetry();
        if asym > 1e-12 * m.max_abs() {
            return Err(Error::Assertion(format!(
                "matrix asymmetry {asym:e} exceeds 1e-12 * {:e}",
                m.max_abs()
            )));
        }
        Ok(SparseSym(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CsrMatrix {
        self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.ncols {
                    out.data[i * other.ncols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(fabs(*v)))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn norm_max(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(fabs(*v)))
}

/// Dense LU with partial pivoting, `PA = LU` stored in place.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Fails with [`Error::Singular`] when a pivot is `≤ pivot_tol · ‖A‖_max`.
    pub fn new(a: &DenseMatrix, pivot_tol: f64) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, not square",
                a.nrows, a.ncols
            )));
        }
        let n = a.nrows;
        let threshold = pivot_tol * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, fabs(lu.get(i, k))))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(best > threshold) {
                return Err(Error::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu.get(k, k);
            for i in k + 1..n {
                let l = lu.get(i, k) / pivot;
                lu.set(i, k, l);
                if l != 0.0 {
                    for j in k + 1..n {
                        lu.data[i * n + j] -= l * lu.data[k * n + j];
                    }
                }
            }
        }
        Ok(DenseLu { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu.get(i, i);
        }
        x
    }
}

/// Solves `Ax = b` by dense Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(DenseLu::new(a, DEFAULT_PIVOT_TOL)?.solve(b))
}

/// Relative pivot threshold used by the dense path.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-14;

/// Numeric values of an intranode `LBLᵀ` factorization.
struct Lblt {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    subdiag: Vec<f64>,
    perm_fwd: Vec<usize>,
    perm_inv: Vec<usize>,
}

impl Lblt {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let lower: Vec<Triplet<usize, usize, f64>> = a
            .iter()
            .filter(|(i, j, _)| i >= j)
            .map(|(row, col, val)| Triplet { row, col, val })
            .collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &lower)
            .map_err(|e| Error::Backend(format!("{e:?}")))?;
        let symbolic = factorize_symbolic_cholesky(
            m.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
        let mut f = Lblt {
            values: vec![0.0; symbolic.len_val()],
            subdiag: vec![0.0; n],
            perm_fwd: vec![0; n],
            perm_inv: vec![0; n],
            symbolic,
        };
        let req = f
            .symbolic
            .factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default());
        let mut buf =
            MemBuffer::try_new(req).map_err(|_| Error::Backend("out of memory".into()))?;
        f.symbolic.factorize_numeric_intranode_lblt(
            &mut f.values,
            &mut f.subdiag,
            &mut f.perm_fwd,
            &mut f.perm_inv,
            m.as_ref(),
            Side::Lower,
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
        if f.values.iter().chain(&f.subdiag).any(|v| !v.is_finite()) {
            return Err(Error::Backend(
                "LBLT factorization produced non-finite values".into(),
            ));
        }
        Ok(f)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let perm = PermRef::new_checked(&self.perm_fwd, &self.perm_inv, n);
        let f = IntranodeLbltRef::new(&self.symbolic, &self.values, &self.subdiag, perm);
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let req = StackReq::any_of(&[self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq)]);
        let mut buf = MemBuffer::new(req);
        f.solve_in_place_with_conj(Conj::No, rhs.as_mut(), Par::Seq, MemStack::new(&mut buf));
        (0..n).map(|i| rhs[(i, 0)]).collect()
    }
}

enum Backend {
    Sparse(faer::sparse::linalg::solvers::Lu<usize, f64>),
    Symmetric(Lblt),
    Dense(DenseLu),
}

/// A factorized square system together with the matrix it came from, so
/// every solve can check and refine its residual.
pub struct FactorizedSystem {
    matrix: CsrMatrix,
    backend: Backend,
    pivot_tol: f64,
    norm: f64,
}

impl core::fmt::Debug for FactorizedSystem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FactorizedSystem")
            .field("dim", &self.matrix.nrows)
            .field("dense", &matches!(self.backend, Backend::Dense(_)))
            .field("pivot_tol", &self.pivot_tol)
            .finish()
    }
}

/// Sparse LU with partial pivoting.
pub fn factorize(a: &CsrMatrix) -> Result<FactorizedSystem> {
    if a.nrows != a.ncols {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, not square",
            a.nrows, a.ncols
        )));
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = a
        .iter()
        .map(|(row, col, val)| Triplet { row, col, val })
        .collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
    let lu = m.sp_lu().map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            Error::Singular { pivot: index }
        }
        other => Error::Backend(format!("{other:?}")),
    })?;
    Ok(FactorizedSystem {
        matrix: a.clone(),
        backend: Backend::Sparse(lu),
        pivot_tol: 0.0,
        norm: a.norm_fro(),
    })
}

/// Sparse symmetric-indefinite `LBLᵀ` with AMD ordering and pivoting inside
/// supernodes. A probe solve checks the factor; if it is inaccurate the
/// matrix is refactorized with [`factorize`].
pub fn factorize_symmetric(a: &SparseSym) -> Result<FactorizedSystem> {
    let m = a.matrix();
    let norm = m.norm_fro();
    if let Ok(lblt) = Lblt::new(m) {
        let f = FactorizedSystem {
            matrix: m.clone(),
            backend: Backend::Symmetric(lblt),
            pivot_tol: 0.0,
            norm,
        };
        let ones = vec![1.0; m.nrows];
        let probe = m.matvec(&ones);
        if f.relative_residual(&f.raw_solve(&probe), &probe) <= RESIDUAL_TARGET {
            return Ok(f);
        }
    }
    factorize(m)
}

/// Dense Gaussian elimination; intended for small systems and as an oracle.
pub fn factorize_dense(a: &CsrMatrix) -> Result<FactorizedSystem> {
    let lu = DenseLu::new(&a.to_dense(), DEFAULT_PIVOT_TOL)?;
    Ok(FactorizedSystem {
        matrix: a.clone(),
        backend: Backend::Dense(lu),
        pivot_tol: DEFAULT_PIVOT_TOL,
        norm: a.norm_fro(),
    })
}

/// Dense path up to [`DENSE_LIMIT`], sparse beyond.
pub fn factorize_auto(a: &CsrMatrix) -> Result<FactorizedSystem> {
    if a.nrows <= DENSE_LIMIT {
        factorize_dense(a)
    } else {
        factorize(a)
    }
}

/// Dense path up to [`DENSE_LIMIT`], [`factorize_symmetric`] beyond.
pub fn factorize_auto_sym(a: &SparseSym) -> Result<FactorizedSystem> {
    if a.dim() <= DENSE_LIMIT {
        factorize_dense(a.matrix())
    } else {
        factorize_symmetric(a)
    }
}

impl FactorizedSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn pivot_tol(&self) -> f64 {
        self.pivot_tol
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense(_))
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Dense(lu) => lu.solve(b),
            Backend::Symmetric(f) => f.solve(b),
            Backend::Sparse(lu) => {
                let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
                lu.solve_in_place(rhs.as_mut());
                (0..b.len()).map(|i| rhs[(i, 0)]).collect()
            }
        }
    }

    /// `‖Ax − b‖ / (‖A‖_F ‖x‖ + ‖b‖)`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matrix.matvec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let denom = self.norm * norm2(x) + norm2(b);
        if denom == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / denom
        }
    }

    /// Solves with up to three steps of iterative refinement; returns the
    /// solution and its relative residual.
    pub fn solve_with_residual(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        if b.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "rhs length {} != dimension {}",
                b.len(),
                self.dim()
            )));
        }
        let mut x = self.raw_solve(b);
        let mut res = self.relative_residual(&x, b);
        for _ in 0..3 {
            if !(res > RESIDUAL_TARGET * 1e-4) {
                break;
            }
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = self.raw_solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
            let cand_res = self.relative_residual(&cand, b);
            if cand_res < res {
                x = cand;
                res = cand_res;
            } else {
                break;
            }
        }
        if !res.is_finite() || res > RESIDUAL_FAIL {
            return Err(Error::Residual {
                residual: res,
                tolerance: RESIDUAL_FAIL,
            });
        }
        Ok((x, res))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_with_residual(b).map(|(x, _)| x)
    }
}

/// Orthonormal basis (as columns) of `{x : Mx = 0}`, where singular values
/// `≤ tol · σ_max` count as zero.
pub fn nullspace(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    let (r, c) = (m.nrows, m.ncols);
    if c == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    // pad to a square matrix so the thin SVD exposes all right singular vectors
    let k = r.max(c);
    let a = Mat::<f64>::from_fn(k, c, |i, j| if i < r { m.get(i, j) } else { 0.0 });
    let svd = a.svd().map_err(|e| Error::Backend(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let smax = (0..c).map(|i| s[i]).fold(0.0f64, f64::max);
    let kept: Vec<usize> = (0..c)
        .filter(|&i| s[i] <= tol * smax || smax == 0.0)
        .collect();
    let mut basis = DenseMatrix::zeros(c, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        for row in 0..c {
            basis.set(row, col, v[(row, i)]);
        }
    }
    Ok(basis)
}

/// `G_ij = (ψ_i, ψ_j) + (∇ψ_i, ∇ψ_j)` over the whole domain.
pub fn h1_gram(space: &FeSpace) -> Result<SparseSym> {
    let m = crate::forms::mass_matrix(space, None)?;
    let k = crate::forms::stiffness_matrix(space)?;
    SparseSym::new(m.combine(1.0, &k, 1.0))
}
