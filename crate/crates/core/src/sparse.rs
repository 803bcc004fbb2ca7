//! Orthogonal Matching Pursuit with incremental Gram-Schmidt QR.
//!
//! Each iteration selects the atom with the largest absolute projection onto
//! the current residual, extends the QR factorization of the selected
//! columns by one MGS pass, and updates the residual by subtracting its
//! component along the newest orthonormal column. Coefficients are recovered
//! once at the end by back-substitution over the final support.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RANK_TOL};

/// Relative residual below which recovery is treated as exact.
const EXACT_TOL: f64 = 1e-7;

/// Result of a sparse recovery: selected atoms, their coefficients, the
/// final residual, and the reconstruction `D[:,support] * v`.
#[derive(Debug, Clone)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub coefficients: Vec<f32>,
    pub residual: Vec<f32>,
    pub reconstruction: Vec<f32>,
}

impl SparseCode {
    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }
}

/// Incremental OMP state: orthonormal columns of the selected sub-dictionary,
/// the upper-triangular factor, and the running residual (all f64).
#[derive(Debug, Clone)]
pub struct OmpState {
    x: Vec<f64>,
    x_norm: f64,
    q_cols: Vec<Vec<f64>>,
    /// r_upper[j] is column j of R (length j+1).
    r_upper: Vec<Vec<f64>>,
    support: Vec<usize>,
    residual: Vec<f64>,
}

impl OmpState {
    pub fn new(x: &[f32]) -> Self {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let x_norm = xf.iter().map(|v| v * v).sum::<f64>().sqrt();
        OmpState {
            residual: xf.clone(),
            x: xf,
            x_norm,
            q_cols: Vec::new(),
            r_upper: Vec::new(),
            support: Vec::new(),
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn converged(&self) -> bool {
        self.residual_norm() <= EXACT_TOL * self.x_norm
    }

    /// Argmax of |D^T r| over all atoms; smallest index wins ties. Returns
    /// None for an all-zero projection.
    pub fn select_atom(&self, atoms: &Matrix) -> Option<usize> {
        let m = atoms.cols();
        let mut proj = vec![0.0f64; m];
        for i in 0..atoms.rows() {
            let row = atoms.row(i);
            let r = self.residual[i];
            for (j, &a) in row.iter().enumerate() {
                proj[j] += a as f64 * r;
            }
        }
        let mut best = 0usize;
        let mut best_val = -1.0f64;
        for (j, &p) in proj.iter().enumerate() {
            let v = p.abs();
            if v > best_val {
                best_val = v;
                best = j;
            }
        }
        if best_val > 0.0 {
            Some(best)
        } else {
            None
        }
    }

    /// Adds atom `j` to the support: one MGS pass extends Q and R, then the
    /// residual is updated with the newest column only,
    /// `r <- r - q (q^T r)`, which equals the full-projection update because
    /// the residual is already orthogonal to the previous columns.
    pub fn step(&mut self, atoms: &Matrix, j: usize) -> Result<()> {
        if self.support.contains(&j) {
            return Err(Error::Config(format!("atom {j} already in support")));
        }
        let l = atoms.rows();
        let mut v: Vec<f64> = (0..l).map(|i| atoms.get(i, j) as f64).collect();
        let orig_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let t = self.q_cols.len();
        let mut r_col = vec![0.0f64; t + 1];
        for (k, q) in self.q_cols.iter().enumerate() {
            let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            r_col[k] = proj;
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < RANK_TOL * orig_norm || norm == 0.0 {
            return Err(Error::RankDeficient { column: t });
        }
        r_col[t] = norm;
        for value in v.iter_mut() {
            *value /= norm;
        }
        let coeff: f64 = v.iter().zip(&self.residual).map(|(a, b)| a * b).sum();
        for (ri, qi) in self.residual.iter_mut().zip(&v) {
            *ri -= coeff * qi;
        }
        self.q_cols.push(v);
        self.r_upper.push(r_col);
        self.support.push(j);
        Ok(())
    }

    /// Recovers coefficients by solving `R v = Q^T x` and assembles the
    /// final code.
    pub fn finish(&self, atoms: &Matrix) -> SparseCode {
        let t = self.support.len();
        let l = self.x.len();
        let qtx: Vec<f64> = self
            .q_cols
            .iter()
            .map(|q| q.iter().zip(&self.x).map(|(a, b)| a * b).sum())
            .collect();
        let mut v = vec![0.0f64; t];
        for i in (0..t).rev() {
            let mut acc = qtx[i];
            for j in i + 1..t {
                acc -= self.r_upper[j][i] * v[j];
            }
            v[i] = acc / self.r_upper[i][i];
        }
        let mut reconstruction = vec![0.0f64; l];
        for (k, &j) in self.support.iter().enumerate() {
            for i in 0..l {
                reconstruction[i] += atoms.get(i, j) as f64 * v[k];
            }
        }
        SparseCode {
            support: self.support.clone(),
            coefficients: v.iter().map(|&c| c as f32).collect(),
            residual: self
                .x
                .iter()
                .zip(&reconstruction)
                .map(|(x, r)| (x - r) as f32)
                .collect(),
            reconstruction: reconstruction.iter().map(|&r| r as f32).collect(),
        }
    }
}

/// Sparse recovery of `x` over the atom matrix (l x m) with at most `lambda`
/// selected atoms. Stops early on an (almost) exact reconstruction, a
/// repeated selection, or a rank-deficient atom.
pub fn omp(atoms: &Matrix, x: &[f32], lambda: usize) -> Result<SparseCode> {
    if atoms.rows() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "omp input length",
            expected: atoms.rows(),
            got: x.len(),
        });
    }
    if lambda > atoms.cols() {
        return Err(Error::Config(format!(
            "lambda {lambda} exceeds dictionary size {}",
            atoms.cols()
        )));
    }
    let mut state = OmpState::new(x);
    if state.x_norm == 0.0 {
        return Ok(state.finish_empty(x));
    }
    for _ in 0..lambda {
        if state.converged() {
            break;
        }
        let j = match state.select_atom(atoms) {
            Some(j) => j,
            None => break,
        };
        if state.support.contains(&j) {
            break;
        }
        match state.step(atoms, j) {
            Ok(()) => {}
            Err(Error::RankDeficient { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(state.finish(atoms))
}

impl OmpState {
    fn finish_empty(&self, x: &[f32]) -> SparseCode {
        SparseCode {
            support: Vec::new(),
            coefficients: Vec::new(),
            residual: x.to_vec(),
            reconstruction: vec![0.0; x.len()],
        }
    }
}

/// Outcome of a batch reconstruction; `failed` lists columns where recovery
/// errored (their residual is the input itself and reconstruction is zero).
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub reconstructions: Matrix,
    pub residuals: Matrix,
    pub failed: Vec<usize>,
}

/// Column-wise OMP over the sample matrix `x` (l x n). `threads` bounds the
/// worker count; results are independent of it.
pub fn batch_reconstruct(
    atoms: &Matrix,
    x: &Matrix,
    lambda: usize,
    threads: usize,
) -> Result<BatchResult> {
    if atoms.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "batch_reconstruct row dimension",
            expected: atoms.rows(),
            got: x.rows(),
        });
    }
    let n = x.cols();
    let l = x.rows();
    let workers = threads.max(1).min(n.max(1));
    let mut recon = vec![0.0f32; l * n];
    let mut resid = vec![0.0f32; l * n];
    let mut failed_flags = vec![false; n];

    {
        let chunk = n.div_ceil(workers);
        // partition output columns across workers; each worker owns a
        // disjoint column range
        let results: Vec<Vec<(usize, Option<SparseCode>, Vec<f32>)>> =
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for wi in 0..workers {
                    let lo = wi * chunk;
                    let hi = ((wi + 1) * chunk).min(n);
                    if lo >= hi {
                        continue;
                    }
                    handles.push(scope.spawn(move || {
                        let mut out = Vec::with_capacity(hi - lo);
                        for j in lo..hi {
                            let col = x.col(j);
                            let code = if lambda == 0 {
                                None
                            } else {
                                omp(atoms, &col, lambda).ok()
                            };
                            out.push((j, code, col));
                        }
                        out
                    }));
                }
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
        for batch in results {
            for (j, code, col) in batch {
                match code {
                    Some(code) => {
                        for i in 0..l {
                            recon[i * n + j] = code.reconstruction[i];
                            resid[i * n + j] = code.residual[i];
                        }
                    }
                    None => {
                        if lambda != 0 {
                            failed_flags[j] = true;
                        }
                        for i in 0..l {
                            resid[i * n + j] = col[i];
                        }
                    }
                }
            }
        }
    }
    Ok(BatchResult {
        reconstructions: Matrix::new(l, n, recon)?,
        residuals: Matrix::new(l, n, resid)?,
        failed: failed_flags
            .iter()
            .enumerate()
            .filter_map(|(j, &f)| f.then_some(j))
            .collect(),
    })
}
