//! Dense f32 linear-algebra kernels: blocked matrix-vector multiply,
//! modified Gram-Schmidt QR (batch and incremental), least-squares solves,
//! a Gram-matrix Jacobi truncated SVD, and symmetric inversion.
//!
//! All dot products accumulate in f64 over a fixed-width chunk tree so that
//! serial and parallel execution produce bit-identical results.

use crate::error::{Error, Result};

/// Width of the fixed summation tree used by every dot product. Constant by
/// contract: changing it changes result bits.
const REDUCE_CHUNK: usize = 8;

/// Relative tolerance below which a column is treated as linearly dependent.
pub const RANK_TOL: f64 = 1e-7;

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::LengthMismatch {
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::new(r, c, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[Vec<f32>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        let mut m = Matrix::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            if col.len() != r {
                return Err(Error::LengthMismatch {
                    expected: r,
                    found: col.len(),
                });
            }
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f32> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul inner dimensions",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0f64;
                for k in 0..self.cols {
                    acc += self.get(i, k) as f64 * other.get(k, j) as f64;
                }
                out.set(i, j, acc as f32);
            }
        }
        Ok(out)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

/// Execution plan for [`mvm`]: row-block worker count and the vector chunk
/// length each worker processes per step. Neither parameter affects the
/// numeric result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MvmPlan {
    pub par_rows: usize,
    pub simd_width: usize,
}

impl Default for MvmPlan {
    fn default() -> Self {
        MvmPlan {
            par_rows: 1,
            simd_width: REDUCE_CHUNK,
        }
    }
}

impl MvmPlan {
    pub fn with_threads(threads: usize) -> Self {
        MvmPlan {
            par_rows: threads.max(1),
            simd_width: REDUCE_CHUNK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.par_rows < 1 || self.simd_width < 1 {
            return Err(Error::Config("mvm plan parameters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Dot product over the fixed chunk tree: each `REDUCE_CHUNK`-long chunk is
/// accumulated left to right in f64, then chunk sums are combined left to
/// right. Bit-identical regardless of execution plan.
#[inline]
pub fn dot_fixed_tree(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut total = 0.0f64;
    let mut i = 0;
    while i < a.len() {
        let end = (i + REDUCE_CHUNK).min(a.len());
        let mut partial = 0.0f64;
        for k in i..end {
            partial += a[k] as f64 * b[k] as f64;
        }
        total += partial;
        i = end;
    }
    total
}

/// Matrix-vector multiply `y = A x`. Row blocks may run on up to
/// `plan.par_rows` threads; every element follows the fixed reduction tree,
/// so results are bit-identical across plans.
pub fn mvm(a: &Matrix, x: &[f32], plan: &MvmPlan) -> Result<Vec<f32>> {
    plan.validate()?;
    if a.cols != x.len() {
        return Err(Error::DimensionMismatch {
            context: "mvm vector length",
            expected: a.cols,
            got: x.len(),
        });
    }
    let mut y = vec![0.0f32; a.rows];
    let workers = plan.par_rows.min(a.rows.max(1));
    if workers <= 1 || a.rows < 2 {
        for (i, out) in y.iter_mut().enumerate() {
            *out = dot_fixed_tree(a.row(i), x) as f32;
        }
        return Ok(y);
    }
    let rows_per = a.rows.div_ceil(workers);
    std::thread::scope(|scope| {
        let mut rest = y.as_mut_slice();
        let mut start = 0usize;
        while start < a.rows {
            let take = rows_per.min(a.rows - start);
            let (block, tail) = rest.split_at_mut(take);
            rest = tail;
            let base = start;
            scope.spawn(move || {
                for (k, out) in block.iter_mut().enumerate() {
                    *out = dot_fixed_tree(a.row(base + k), x) as f32;
                }
            });
            start += take;
        }
    });
    Ok(y)
}

/// Batch QR via modified Gram-Schmidt. Columns are orthogonalized in order;
/// R has a positive diagonal. A column whose orthogonalized norm falls below
/// `RANK_TOL` times its original norm signals rank deficiency.
pub fn mgs_qr(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = (a.rows, a.cols);
    if n > m {
        return Err(Error::DimensionMismatch {
            context: "mgs_qr requires cols <= rows",
            expected: m,
            got: n,
        });
    }
    let mut q_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = vec![vec![0.0f64; n]; n];
    for j in 0..n {
        let mut v: Vec<f64> = (0..m).map(|i| a.get(i, j) as f64).collect();
        let orig_norm = norm_f64(&v);
        for (k, q) in q_cols.iter().enumerate() {
            let proj = dot_f64(q, &v);
            r[k][j] = proj;
            axpy(&mut v, -proj, q);
        }
        let norm = norm_f64(&v);
        if norm < RANK_TOL * orig_norm || norm == 0.0 {
            return Err(Error::RankDeficient { column: j });
        }
        r[j][j] = norm;
        for value in v.iter_mut() {
            *value /= norm;
        }
        q_cols.push(v);
    }
    Ok((cols_to_matrix(m, &q_cols), upper_to_matrix(&r)))
}

/// Extends an existing QR factorization by one column (MGS pass against the
/// current orthonormal columns). Equivalent to [`mgs_qr`] on the stacked
/// matrix.
pub fn qr_append(q_prev: &Matrix, r_prev: &Matrix, new_col: &[f32]) -> Result<(Matrix, Matrix)> {
    let (m, t) = (q_prev.rows, q_prev.cols);
    if new_col.len() != m {
        return Err(Error::DimensionMismatch {
            context: "qr_append column length",
            expected: m,
            got: new_col.len(),
        });
    }
    let mut v: Vec<f64> = new_col.iter().map(|&x| x as f64).collect();
    let orig_norm = norm_f64(&v);
    let mut r_col = vec![0.0f64; t + 1];
    for k in 0..t {
        let q: Vec<f64> = (0..m).map(|i| q_prev.get(i, k) as f64).collect();
        let proj = dot_f64(&q, &v);
        r_col[k] = proj;
        axpy(&mut v, -proj, &q);
    }
    let norm = norm_f64(&v);
    if norm < RANK_TOL * orig_norm || norm == 0.0 {
        return Err(Error::RankDeficient { column: t });
    }
    r_col[t] = norm;
    for value in v.iter_mut() {
        *value /= norm;
    }

    let mut q = Matrix::zeros(m, t + 1);
    for i in 0..m {
        for j in 0..t {
            q.set(i, j, q_prev.get(i, j));
        }
        q.set(i, t, v[i] as f32);
    }
    let mut r = Matrix::zeros(t + 1, t + 1);
    for i in 0..t {
        for j in 0..t {
            r.set(i, j, r_prev.get(i, j));
        }
    }
    for i in 0..=t {
        r.set(i, t, r_col[i] as f32);
    }
    Ok((q, r))
}

/// Least-squares solve `v = R^{-1} Q^T b` for a QR factorization.
pub fn ls_solve_qr(q: &Matrix, r: &Matrix, b: &[f32]) -> Result<Vec<f32>> {
    if q.rows != b.len() {
        return Err(Error::DimensionMismatch {
            context: "ls_solve_qr rhs length",
            expected: q.rows,
            got: b.len(),
        });
    }
    let n = q.cols;
    let qtb: Vec<f64> = (0..n)
        .map(|j| (0..q.rows).map(|i| q.get(i, j) as f64 * b[i] as f64).sum())
        .collect();
    let v = back_substitute(r, &qtb)?;
    Ok(v.into_iter().map(|x| x as f32).collect())
}

fn back_substitute(r: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut v = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= r.get(i, j) as f64 * v[j];
        }
        let diag = r.get(i, i) as f64;
        if diag.abs() < 1e-12 {
            return Err(Error::Singular { ridge: 0.0 });
        }
        v[i] = acc / diag;
    }
    Ok(v)
}

/// Truncated SVD by eigen-decomposition of the Gram matrix `X X^T` with
/// cyclic Jacobi rotations. Returns the leading left singular vectors, the
/// retained singular values, and the rank: the smallest `r` whose cumulative
/// squared singular values reach `energy` of the total.
pub fn truncated_svd(x: &Matrix, energy: f64) -> Result<(Matrix, Vec<f32>, usize)> {
    if x.rows == 0 || x.cols == 0 {
        return Err(Error::InsufficientData("truncated_svd on empty matrix".into()));
    }
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::Config("energy fraction must be in (0,1]".into()));
    }
    let l = x.rows;
    // Gram matrix in f64: G[i][j] = <row_i, row_j>
    let mut g = vec![vec![0.0f64; l]; l];
    for i in 0..l {
        for j in i..l {
            let v = dot_fixed_tree(x.row(i), x.row(j));
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(&mut g, 64)?;

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let total: f64 = eigvals.iter().map(|&v| v.max(0.0)).sum();
    if total == 0.0 {
        return Err(Error::InsufficientData("zero-energy input to truncated_svd".into()));
    }
    let mut rank = l;
    let mut acc = 0.0f64;
    for (k, &idx) in order.iter().enumerate() {
        acc += eigvals[idx].max(0.0);
        if acc >= energy * total {
            rank = k + 1;
            break;
        }
    }
    let mut u = Matrix::zeros(l, rank);
    let mut singulars = Vec::with_capacity(rank);
    for (k, &idx) in order.iter().take(rank).enumerate() {
        singulars.push(eigvals[idx].max(0.0).sqrt() as f32);
        for i in 0..l {
            u.set(i, k, eigvecs[i][idx] as f32);
        }
    }
    Ok((u, singulars, rank))
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (in place).
/// Converges when the off-diagonal Frobenius norm drops below 1e-7 of the
/// initial Frobenius norm.
fn jacobi_eigen(a: &mut [Vec<f64>], max_sweeps: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    let mut v = vec![vec![0.0f64; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|&x| x * x)
        .sum::<f64>()
        .sqrt();
    if frob == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    let tol = 1e-7 * frob;
    for _ in 0..max_sweeps {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s += a[i][j] * a[i][j];
                    }
                }
            }
            s.sqrt()
        };
        if off < tol {
            let eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
            return Ok((eig, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p][p];
                let aqq = a[q][q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence { sweeps: max_sweeps })
}

/// Default ridge for covariance inversion: 1e-6 * trace / dim.
pub fn default_ridge(s: &Matrix) -> f64 {
    let n = s.rows.min(s.cols);
    if n == 0 {
        return 0.0;
    }
    let trace: f64 = (0..n).map(|i| s.get(i, i) as f64).sum();
    // floor keeps a zero-variance matrix invertible
    (1e-6 * trace / n as f64).max(1e-9)
}

/// Inverse of a symmetric matrix with a ridge, via QR: solves
/// `(S + ridge I) X = I` column by column.
pub fn sym_inverse(s: &Matrix, ridge: f64) -> Result<Matrix> {
    if s.rows != s.cols {
        return Err(Error::DimensionMismatch {
            context: "sym_inverse requires square",
            expected: s.rows,
            got: s.cols,
        });
    }
    let n = s.rows;
    let mut a = s.clone();
    for i in 0..n {
        a.set(i, i, (a.get(i, i) as f64 + ridge) as f32);
    }
    let (q, r) = mgs_qr(&a).map_err(|_| Error::Singular { ridge })?;
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0f32; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = ls_solve_qr(&q, &r, &e).map_err(|_| Error::Singular { ridge })?;
        e[j] = 0.0;
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}

#[inline]
fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm_f64(a: &[f64]) -> f64 {
    dot_f64(a, a).sqrt()
}

#[inline]
fn axpy(v: &mut [f64], alpha: f64, x: &[f64]) {
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi += alpha * xi;
    }
}

fn cols_to_matrix(rows: usize, cols: &[Vec<f64>]) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v as f32);
        }
    }
    m
}

fn upper_to_matrix(r: &[Vec<f64>]) -> Matrix {
    let n = r.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, r[i][j] as f32);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn mvm_identity() {
        let a = Matrix::identity(3);
        let y = mvm(&a, &[1.0, 2.0, 3.0], &MvmPlan::default()).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mvm_hand_sum() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let y = mvm(&a, &[1.0, 1.0], &MvmPlan::default()).unwrap();
        assert_eq!(y, vec![3.0, 7.0]);
    }

    #[test]
    fn mvm_bitwise_plan_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 64, 48);
        let x: Vec<f32> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y1 = mvm(&a, &x, &MvmPlan { par_rows: 1, simd_width: 1 }).unwrap();
        let y2 = mvm(&a, &x, &MvmPlan { par_rows: 4, simd_width: 8 }).unwrap();
        // oracle: naive triple loop following the same fixed chunk tree
        let oracle: Vec<f32> = (0..64).map(|i| dot_fixed_tree(a.row(i), &x) as f32).collect();
        assert_eq!(y1, y2);
        assert_eq!(y1, oracle);
    }

    #[test]
    fn mvm_dimension_mismatch() {
        let a = Matrix::identity(3);
        assert!(mvm(&a, &[1.0, 2.0], &MvmPlan::default()).is_err());
    }

    #[test]
    fn qr_orthonormal_input() {
        let a = Matrix::identity(4);
        let (q, r) = mgs_qr(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((q.get(i, j) - expect).abs() < 1e-6);
                assert!((r.get(i, j) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn qr_scaled_axes() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let (q, r) = mgs_qr(&a).unwrap();
        assert!((q.get(0, 0) - 1.0).abs() < 1e-6);
        assert!((q.get(1, 1) - 1.0).abs() < 1e-6);
        assert!((r.get(0, 0) - 2.0).abs() < 1e-6);
        assert!((r.get(1, 1) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn qr_residual_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 40, 10);
        let (q, r) = mgs_qr(&a).unwrap();
        let qr = q.matmul(&r).unwrap();
        let mut diff = 0.0f64;
        for i in 0..40 {
            for j in 0..10 {
                let d = (a.get(i, j) - qr.get(i, j)) as f64;
                diff += d * d;
            }
        }
        assert!(diff.sqrt() / a.frobenius() < 1e-5);
    }

    #[test]
    fn qr_rank_deficiency_signaled() {
        let a = Matrix::from_cols(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(mgs_qr(&a), Err(Error::RankDeficient { column: 1 })));
    }

    #[test]
    fn qr_append_unit_columns() {
        let q0 = Matrix::from_cols(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let r0 = Matrix::new(1, 1, vec![1.0]).unwrap();
        let (q, r) = qr_append(&q0, &r0, &[0.0, 1.0, 0.0]).unwrap();
        assert!((q.get(1, 1) - 1.0).abs() < 1e-6);
        assert!((r.get(1, 1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn qr_append_new_norm_on_diagonal() {
        let q0 = Matrix::from_cols(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let r0 = Matrix::new(1, 1, vec![1.0]).unwrap();
        let (_, r) = qr_append(&q0, &r0, &[0.0, 5.0, 0.0]).unwrap();
        assert!((r.get(1, 1) - 5.0).abs() < 1e-6);
    }

    #[test]
    fn incremental_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cols: Vec<Vec<f32>> = (0..8)
            .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = Matrix::from_cols(&cols).unwrap();
        let (qb, rb) = mgs_qr(&a).unwrap();

        let mut q = Matrix::from_cols(&[cols[0].clone()]).unwrap();
        let n0 = cols[0].iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        for i in 0..16 {
            q.set(i, 0, (cols[0][i] as f64 / n0) as f32);
        }
        let mut r = Matrix::new(1, 1, vec![n0 as f32]).unwrap();
        for col in &cols[1..] {
            let (qn, rn) = qr_append(&q, &r, col).unwrap();
            q = qn;
            r = rn;
        }
        let rel = |x: &Matrix, y: &Matrix| {
            let mut d = 0.0f64;
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    let e = (x.get(i, j) - y.get(i, j)) as f64;
                    d += e * e;
                }
            }
            d.sqrt() / y.frobenius().max(1e-12)
        };
        assert!(rel(&q, &qb) < 1e-4);
        assert!(rel(&r, &rb) < 1e-4);
    }

    #[test]
    fn ls_identity() {
        let q = Matrix::identity(3);
        let r = Matrix::identity(3);
        let b = [0.4, -0.2, 0.9];
        let v = ls_solve_qr(&q, &r, &b).unwrap();
        for (a, e) in v.iter().zip(b.iter()) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn ls_overdetermined_projection() {
        let q = Matrix::from_cols(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let r = Matrix::identity(2);
        let v = ls_solve_qr(&q, &r, &[1.0, 2.0, 3.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-6);
        assert!((v[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ls_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = random_matrix(&mut rng, 20, 6);
        let b: Vec<f32> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (q, r) = mgs_qr(&d).unwrap();
        let v = ls_solve_qr(&q, &r, &b).unwrap();
        // normal equations oracle: (D^T D) v = D^T b, solved in f64
        let dt = d.transpose();
        let dtd = dt.matmul(&d).unwrap();
        let dtb = mvm(&dt, &b, &MvmPlan::default()).unwrap();
        let inv = sym_inverse(&dtd, 0.0).unwrap();
        let oracle = mvm(&inv, &dtb, &MvmPlan::default()).unwrap();
        for (a, e) in v.iter().zip(&oracle) {
            assert!((a - e).abs() < 1e-4, "{a} vs {e}");
        }
    }

    #[test]
    fn ls_residual_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let d = random_matrix(&mut rng, 24, 5);
        let b: Vec<f32> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (q, r) = mgs_qr(&d).unwrap();
        let v = ls_solve_qr(&q, &r, &b).unwrap();
        let fit = mvm(&d, &v, &MvmPlan::default()).unwrap();
        let resid: Vec<f32> = b.iter().zip(&fit).map(|(x, y)| x - y).collect();
        let b_norm = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        for j in 0..5 {
            let col = d.col(j);
            let dp = dot_fixed_tree(&col, &resid).abs();
            let cn = col.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!(dp < 1e-4 * b_norm * cn);
        }
    }

    #[test]
    fn svd_rank_one() {
        let x = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let (_, s, r) = truncated_svd(&x, 0.9).unwrap();
        assert_eq!(r, 1);
        assert!((s[0] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn svd_energy_rule() {
        // sigma = [2, 1]; 4/5 = 0.8 >= 0.79 so rank 1
        let x = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (_, s, r) = truncated_svd(&x, 0.79).unwrap();
        assert_eq!(r, 1);
        assert!((s[0] - 2.0).abs() < 1e-4);
        // 0.81 needs both
        let (_, _, r2) = truncated_svd(&x, 0.81).unwrap();
        assert_eq!(r2, 2);
    }

    #[test]
    fn svd_rank_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_matrix(&mut rng, 12, 30);
        let (_, s, r) = truncated_svd(&x, 0.9).unwrap();
        if r > 1 {
            let (_, full, _) = truncated_svd(&x, 1.0).unwrap();
            let total: f64 = full.iter().map(|&v| (v as f64).powi(2)).sum();
            let head: f64 = s[..r - 1].iter().map(|&v| (v as f64).powi(2)).sum();
            assert!(head < 0.9 * total);
        }
    }

    #[test]
    fn svd_reconstruction_error_equals_tail_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = random_matrix(&mut rng, 30, 20);
        let (u, s, r) = truncated_svd(&x, 0.9).unwrap();
        let (_, full, _) = truncated_svd(&x, 1.0).unwrap();
        let tail: f64 = full[r..].iter().map(|&v| (v as f64).powi(2)).sum();
        // || X - U U^T X ||_F^2 should equal the tail energy
        let ut = u.transpose();
        let proj = ut.matmul(&x).unwrap();
        let back = u.matmul(&proj).unwrap();
        let mut err = 0.0f64;
        for i in 0..30 {
            for j in 0..20 {
                let d = (x.get(i, j) - back.get(i, j)) as f64;
                err += d * d;
            }
        }
        let total: f64 = full.iter().map(|&v| (v as f64).powi(2)).sum();
        assert!((err - tail).abs() <= 1e-3 * total, "err={err} tail={tail}");
        let _ = s;
    }

    #[test]
    fn sym_inverse_identity() {
        let inv = sym_inverse(&Matrix::identity(3), 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((inv.get(i, j) - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn sym_inverse_diagonal() {
        let s = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let inv = sym_inverse(&s, 0.0).unwrap();
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-5);
        assert!((inv.get(1, 1) - 0.25).abs() < 1e-5);
    }

    #[test]
    fn sym_inverse_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let b = random_matrix(&mut rng, 10, 10);
        let s = b.transpose().matmul(&b).unwrap();
        let mut spd = s.clone();
        for i in 0..10 {
            spd.set(i, i, spd.get(i, i) + 1.0);
        }
        let inv = sym_inverse(&spd, 0.0).unwrap();
        let prod = spd.matmul(&inv).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - expect).abs() < 1e-3);
            }
        }
    }
}
