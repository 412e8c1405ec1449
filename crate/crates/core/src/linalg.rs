//! Compressed sparse row storage and a Jacobi-preconditioned conjugate
//! gradient solver for the symmetric positive definite fine-scale systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sparse matrix in CSR layout with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(r, _, _)) in triplets.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row_buf.clear();
            row_buf.extend(
                order[counts[r]..counts[r + 1]]
                    .iter()
                    .map(|&k| (triplets[k].1, triplets[k].2)),
            );
            // stable sort keeps summation order reproducible
            row_buf.sort_by_key(|&(c, _)| c);
            let mut iter = row_buf.iter().peekable();
            while let Some(&(c, mut v)) = iter.next() {
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Zero-valued matrix sharing this matrix's sparsity pattern.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Position of entry `(r, c)` in the value array, if it is structurally present.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        row.binary_search(&c).ok().map(|k| self.indptr[r] + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Sparse times dense: `self * b`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            for r in 0..self.nrows {
                let mut acc = 0.0;
                for k in self.indptr[r]..self.indptr[r + 1] {
                    acc += self.values[k] * col[self.indices[k]];
                }
                out[(r, j)] = acc;
            }
        }
        out
    }

    /// `a * self + b * other` for two matrices with identical sparsity patterns.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert!(
            self.indptr == other.indptr && self.indices == other.indices,
            "linear_combination requires identical sparsity patterns"
        );
        let mut out = self.clone();
        for (v, &w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Exact entrywise symmetry check.
    pub fn is_symmetric(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        (0..self.nrows).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rtol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_factor: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    /// `|r|_{D^-1} / |b|_{D^-1}` with `D` the matrix diagonal.
    pub relative_residual: f64,
}

/// Solves `a x = rhs` for SPD `a` with Jacobi-preconditioned conjugate gradients.
pub fn solve_linear(a: &CsrMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    solve_linear_with(a, rhs, None, CgOptions::default()).map(|(x, _)| x)
}

/// Conjugate gradients with an optional initial guess and explicit options.
pub fn solve_linear_with(
    a: &CsrMatrix,
    rhs: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    opts: CgOptions,
) -> Result<(DVector<f64>, CgReport)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("solve_linear (square matrix)", n, a.ncols()));
    }
    if rhs.len() != n {
        return Err(Error::dim("solve_linear (rhs)", n, rhs.len()));
    }
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok((
            DVector::zeros(n),
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    // residuals are measured in the norm sqrt(r' D^-1 r), i.e. on the
    // diagonally scaled system, so rows with very large coefficients do not
    // swamp the stopping test
    let scaled_norm = |v: &DVector<f64>| -> f64 {
        v.iter()
            .zip(&inv_diag)
            .map(|(vi, di)| vi * vi * di)
            .sum::<f64>()
            .sqrt()
    };
    let rhs_scaled = scaled_norm(rhs);

    let mut x = match x0 {
        Some(g) => g.clone(),
        None => DVector::zeros(n),
    };
    let mut ax = DVector::zeros(n);
    a.mul_vec_into(x.as_slice(), ax.as_mut_slice());
    let mut r = rhs - &ax;
    let mut z = DVector::from_iterator(n, r.iter().zip(&inv_diag).map(|(ri, di)| ri * di));
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = DVector::zeros(n);
    let max_iter = opts.max_iter_factor.saturating_mul(n).max(1);
    let target = opts.rtol * rhs_scaled;

    let mut res = rz.max(0.0).sqrt();
    if res <= target {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: res / rhs_scaled,
            },
        ));
    }
    for it in 1..=max_iter {
        a.mul_vec_into(p.as_slice(), ap.as_mut_slice());
        let pap = p.dot(&ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res / rhs_scaled,
            });
        }
        let step = rz / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        for ((zi, ri), di) in z.iter_mut().zip(r.iter()).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = r.dot(&z);
        res = rz_new.max(0.0).sqrt();
        if res <= target {
            // the recurrence can drift; confirm against the true residual
            a.mul_vec_into(x.as_slice(), ax.as_mut_slice());
            let true_r = rhs - &ax;
            let true_res = scaled_norm(&true_r);
            if true_res <= target {
                return Ok((
                    x,
                    CgReport {
                        iterations: it,
                        relative_residual: true_res / rhs_scaled,
                    },
                ));
            }
            // restart from the true residual
            r = true_r;
            for ((zi, ri), di) in z.iter_mut().zip(r.iter()).zip(&inv_diag) {
                *zi = ri * di;
            }
            rz = r.dot(&z);
            res = rz.max(0.0).sqrt();
            p.copy_from(&z);
            continue;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p *= beta;
        p += &z;
    }
    Err(Error::SolverFailure {
        iterations: max_iter,
        residual: res / rhs_scaled,
    })
}

/// `|b - a x|_{D^-1} / |b|_{D^-1}` with `D` the diagonal of `a`; zero
/// when `b` is zero.
pub fn scaled_relative_residual(a: &CsrMatrix, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a.diagonal();
    let norm = |v: &DVector<f64>| -> f64 {
        v.iter()
            .zip(&d)
            .map(|(vi, di)| if *di > 0.0 { vi * vi / di } else { vi * vi })
            .sum::<f64>()
            .sqrt()
    };
    let bn = norm(b);
    if bn == 0.0 {
        return 0.0;
    }
    norm(&(b - a.mul_vec(x))) / bn
}

/// Normwise backward error `|b - A x| / (|A| |x| + |b|)` in the max norm.
pub fn backward_error(a: &CsrMatrix, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let a_norm = (0..a.nrows())
        .map(|i| a.values[a.indptr[i]..a.indptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let denom = a_norm * x.amax() + b.amax();
    if denom == 0.0 {
        return 0.0;
    }
    (b - a.mul_vec(x)).amax() / denom
}

/// Largest backward error accepted from a direct solve.
pub const DIRECT_BACKWARD_TOL: f64 = 1e-12;

/// Direct solve of SPD `a` by sparse Cholesky (natural ordering).
pub fn solve_cholesky(a: &CsrMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("solve_cholesky (square matrix)", n, a.ncols()));
    }
    if rhs.len() != n {
        return Err(Error::dim("solve_cholesky (rhs)", n, rhs.len()));
    }
    let csr = nalgebra_sparse::CsrMatrix::try_from_csr_data(n, n, a.indptr.clone(), a.indices.clone(), a.values.clone())
        .map_err(|_| Error::Factorization("sparse Cholesky (matrix layout)"))?;
    let csc = nalgebra_sparse::CscMatrix::from(&csr);
    let chol = nalgebra_sparse::factorization::CscCholesky::factor(&csc)
        .map_err(|_| Error::Factorization("sparse Cholesky"))?;
    let x = chol.solve(rhs);
    Ok(x.column(0).into_owned())
}

/// How [`solve_spd`] obtained its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Cg,
    /// CG stalled; sparse Cholesky followed by CG refinement.
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    /// `|b - a x|_{D^-1} / |b|_{D^-1}`
    pub relative_residual: f64,
}

/// Conjugate gradients, falling back to a sparse Cholesky solve polished
/// by CG when CG alone does not reach `opts.rtol`. Fails if neither meets
/// the tolerance.
pub fn solve_spd(
    a: &CsrMatrix,
    rhs: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    opts: CgOptions,
) -> Result<(DVector<f64>, SolveReport)> {
    let cg_failure = match solve_linear_with(a, rhs, x0, opts) {
        Ok((x, r)) => {
            return Ok((
                x,
                SolveReport {
                    method: SolveMethod::Cg,
                    iterations: r.iterations,
                    relative_residual: r.relative_residual,
                },
            ))
        }
        Err(e @ Error::SolverFailure { .. }) => e,
        Err(e) => return Err(e),
    };
    let direct = solve_cholesky(a, rhs)?;
    let refine = CgOptions {
        max_iter_factor: 1,
        ..opts
    };
    match solve_linear_with(a, rhs, Some(&direct), refine) {
        Ok((x, r)) => {
            log::debug!("CG stalled ({cg_failure}); Cholesky solve refined in {} iterations", r.iterations);
            Ok((
                x,
                SolveReport {
                    method: SolveMethod::Cholesky,
                    iterations: r.iterations,
                    relative_residual: r.relative_residual,
                },
            ))
        }
        Err(Error::SolverFailure { iterations, .. }) => {
            // CG stalls at the round-off floor on badly scaled systems; a
            // backward-stable direct solution is accepted on its backward error
            let residual = scaled_relative_residual(a, &direct, rhs);
            if backward_error(a, &direct, rhs) <= DIRECT_BACKWARD_TOL {
                log::debug!("CG stalled ({cg_failure}); using Cholesky solve, scaled residual {residual:.3e}");
                return Ok((
                    direct,
                    SolveReport {
                        method: SolveMethod::Cholesky,
                        iterations: 0,
                        relative_residual: residual,
                    },
                ));
            }
            Err(Error::SolverFailure { iterations, residual })
        }
        Err(e) => Err(e),
    }
}
