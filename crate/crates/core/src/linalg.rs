//! Compressed sparse row storage and a thin wrapper around faer's sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Square or rectangular matrix in CSR layout.
///
/// Explicitly assembled zeros are kept, so matrices built from the same
/// triplet structure share one sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Adds every entry of `m` scaled by `alpha`, offset by `(row0, col0)`.
    pub fn push_matrix(&mut self, m: &SparseMatrix, row0: usize, col0: usize, alpha: f64) {
        for (r, c, v) in m.iter() {
            self.push(row0 + r, col0 + c, alpha * v);
        }
    }

    pub fn build(self, symmetric: bool) -> SparseMatrix {
        let Self {
            nrows,
            ncols,
            mut entries,
        } = self;
        // stable sort keeps the summation order of duplicates deterministic
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }
}

impl SparseMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mat-vec");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// `alpha * self + beta * other`.
    pub fn add(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        b.push_matrix(self, 0, 0, alpha);
        b.push_matrix(other, 0, 0, beta);
        b.build(self.symmetric && other.symmetric)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            d[i][j] += v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<_> = self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::LinearSolveFailure(format!("sparse conversion: {e:?}")))
    }
}

/// Sparse LU factorization with a residual check on every solve.
pub struct SparseLu {
    matrix: SparseMatrix,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(matrix: &SparseMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::LinearSolveFailure("matrix is not square".into()));
        }
        let a = matrix.to_faer()?;
        let symbolic = SymbolicLu::try_new(a.symbolic())
            .map_err(|e| Error::LinearSolveFailure(format!("symbolic factorization: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), a.as_ref())
            .map_err(|e| Error::LinearSolveFailure(format!("numeric factorization: {e:?}")))?;
        Ok(Self {
            matrix: matrix.clone(),
            symbolic,
            lu,
        })
    }

    /// Refactors a matrix with the same sparsity pattern, reusing the
    /// symbolic analysis.
    pub fn refactor(&mut self, matrix: &SparseMatrix) -> Result<()> {
        if matrix.row_ptr != self.matrix.row_ptr || matrix.col_idx != self.matrix.col_idx {
            *self = Self::new(matrix)?;
            return Ok(());
        }
        let a = matrix.to_faer()?;
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.as_ref())
            .map_err(|e| Error::LinearSolveFailure(format!("numeric factorization: {e:?}")))?;
        self.matrix = matrix.clone();
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::LinearSolveFailure(format!(
                "right-hand side has length {}, expected {n}",
                rhs.len()
            )));
        }
        let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite solution".into()));
        }
        // one step of iterative refinement, then reject inaccurate solves
        let r: Vec<f64> = self
            .matrix
            .mul_vec(&x)
            .iter()
            .zip(rhs)
            .map(|(ax, b)| b - ax)
            .collect();
        let mut c = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
        self.lu.solve_in_place(c.as_mut());
        let x: Vec<f64> = (0..n).map(|i| x[i] + c[(i, 0)]).collect();
        let ax = self.matrix.mul_vec(&x);
        let res = ax
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = self.matrix.max_abs() * max_abs(&x) + max_abs(rhs);
        if !res.is_finite() || res > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::LinearSolveFailure(format!(
                "solve residual {res:.3e} too large relative to {scale:.3e}"
            )));
        }
        Ok(x)
    }
}

/// Solver for the bordered system
///
/// ```text
/// [ K0    B1 ] [ x ]   [ f ]
/// [ B2^T  D  ] [ y ] = [ g ]
/// ```
///
/// with sparse nonsingular `K0` and a few dense border columns. Dense rows
/// destroy the fill-reducing ordering of a sparse LU, so the border is
/// eliminated through the small Schur complement `D - B2^T K0^{-1} B1`.
pub struct BorderedLu {
    k0: SparseLu,
    b1: Vec<Vec<f64>>,
    b2: Vec<Vec<f64>>,
    d: Mat<f64>,
    z: Vec<Vec<f64>>,
    schur: faer::linalg::solvers::PartialPivLu<f64>,
}

impl BorderedLu {
    pub fn new(k0: &SparseMatrix, b1: Vec<Vec<f64>>, b2: Vec<Vec<f64>>, d: Mat<f64>) -> Result<Self> {
        let n = k0.nrows;
        let m = b1.len();
        if b2.len() != m
            || d.nrows() != m
            || d.ncols() != m
            || b1.iter().chain(&b2).any(|c| c.len() != n)
        {
            return Err(Error::LinearSolveFailure("inconsistent border dimensions".into()));
        }
        let k0 = SparseLu::new(k0)?;
        let z = b1.iter().map(|c| k0.solve(c)).collect::<Result<Vec<_>>>()?;
        let s = Mat::<f64>::from_fn(m, m, |i, j| d[(i, j)] - dot(&b2[i], &z[j]));
        if (0..m).any(|i| (0..m).any(|j| !s[(i, j)].is_finite())) {
            return Err(Error::LinearSolveFailure("non-finite Schur complement".into()));
        }
        let schur = s.partial_piv_lu();
        Ok(Self { k0, b1, b2, d, z, schur })
    }

    pub fn dim(&self) -> usize {
        self.k0.dim() + self.b1.len()
    }

    fn apply(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut top = self.k0.matrix().mul_vec(x);
        for (c, &yj) in self.b1.iter().zip(y) {
            axpy(yj, c, &mut top);
        }
        let bottom = (0..self.b1.len())
            .map(|i| dot(&self.b2[i], x) + (0..y.len()).map(|j| self.d[(i, j)] * y[j]).sum::<f64>())
            .collect();
        (top, bottom)
    }

    fn solve_once(&self, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.b1.len();
        let mut x = self.k0.solve(f)?;
        let mut rhs = Mat::<f64>::from_fn(m, 1, |i, _| g[i] - dot(&self.b2[i], &x));
        self.schur.solve_in_place(rhs.as_mut());
        let y: Vec<f64> = (0..m).map(|i| rhs[(i, 0)]).collect();
        for (zj, &yj) in self.z.iter().zip(&y) {
            axpy(-yj, zj, &mut x);
        }
        Ok((x, y))
    }

    /// Solves for `(x, y)` with one step of refinement on the full system.
    pub fn solve(&self, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if f.len() != self.k0.dim() || g.len() != self.b1.len() {
            return Err(Error::LinearSolveFailure("right-hand side has the wrong length".into()));
        }
        let (mut x, mut y) = self.solve_once(f, g)?;
        let (ax, ay) = self.apply(&x, &y);
        let rf: Vec<f64> = f.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let rg: Vec<f64> = g.iter().zip(&ay).map(|(a, b)| a - b).collect();
        let (dx, dy) = self.solve_once(&rf, &rg)?;
        axpy(1.0, &dx, &mut x);
        axpy(1.0, &dy, &mut y);
        let (ax, ay) = self.apply(&x, &y);
        let res = f
            .iter()
            .chain(g)
            .zip(ax.iter().chain(&ay))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let border = self
            .b1
            .iter()
            .chain(&self.b2)
            .map(|c| max_abs(c))
            .fold(self.d.norm_max(), f64::max);
        let scale = self.k0.matrix().max_abs().max(border) * max_abs(&x).max(max_abs(&y))
            + max_abs(f).max(max_abs(g));
        if !res.is_finite() || res > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::LinearSolveFailure(format!(
                "bordered solve residual {res:.3e} too large relative to {scale:.3e}"
            )));
        }
        Ok((x, y))
    }
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
