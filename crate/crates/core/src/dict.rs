//! Dictionary learning by error-proportional adaptive column sampling:
//! starting from a small random subset of the data columns, each round draws
//! further columns with probability proportional to their normalized
//! projection residual against the span of the columns picked so far.
//!
//! For a dictionary with m atoms of dimension l learned from n samples at
//! sparsity lambda, the expected excess reconstruction error on unseen data
//! decays like sqrt(m * l * ln(n * lambda) / n); we keep m and lambda small
//! relative to n, and `reconstruction_error_stats` reports the observed
//! holdout error directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{ls_solve_qr, mgs_qr, Matrix, RANK_TOL};
use crate::sparse::omp;

/// Column-normalized overcomplete basis learned from benign data.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: Matrix,
    source_ids: Vec<usize>,
    seed: u64,
}

impl Dictionary {
    /// Wraps an atom matrix, normalizing each column.
    pub fn from_atoms(atoms: &Matrix, source_ids: Vec<usize>, seed: u64) -> Result<Self> {
        if atoms.cols() == 0 {
            return Err(Error::InsufficientData("dictionary needs >= 1 atom".into()));
        }
        if source_ids.len() != atoms.cols() {
            return Err(Error::LengthMismatch {
                expected: atoms.cols(),
                found: source_ids.len(),
            });
        }
        let mut sorted = source_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != source_ids.len() {
            return Err(Error::Config("duplicate source ids in dictionary".into()));
        }
        let mut normalized = Matrix::zeros(atoms.rows(), atoms.cols());
        for j in 0..atoms.cols() {
            let col = atoms.col(j);
            let norm = col.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Config(format!("zero-norm atom at column {j}")));
            }
            for i in 0..atoms.rows() {
                normalized.set(i, j, (col[i] as f64 / norm) as f32);
            }
        }
        Ok(Dictionary {
            atoms: normalized,
            source_ids,
            seed,
        })
    }

    pub fn atoms(&self) -> &Matrix {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms.rows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.cols()
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Learning schedule: target size, initial random subset size, and columns
/// appended per round.
#[derive(Debug, Clone, Copy)]
pub struct DictLearnConfig {
    pub target_cols: usize,
    pub init_cols: usize,
    pub growth: usize,
    pub seed: u64,
}

impl DictLearnConfig {
    pub fn with_defaults(target_cols: usize, seed: u64) -> Self {
        DictLearnConfig {
            target_cols,
            init_cols: (target_cols / 20).max(1),
            growth: 1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.target_cols < 1 {
            return Err(Error::Config("target_cols must be >= 1".into()));
        }
        if self.init_cols < 1 || self.init_cols > self.target_cols {
            return Err(Error::Config("init_cols must be in [1, target_cols]".into()));
        }
        if self.growth < 1 {
            return Err(Error::Config("growth must be >= 1".into()));
        }
        Ok(())
    }
}

/// L2 norm of the orthogonal-projection residual of `x` against the column
/// span of `d_t`, computed via QR.
pub fn projection_residual(d_t: &Matrix, x: &[f32]) -> Result<f64> {
    let (q, r) = mgs_qr(d_t)?;
    let v = ls_solve_qr(&q, &r, x)?;
    let mut err = 0.0f64;
    for i in 0..d_t.rows() {
        let fit: f64 = (0..d_t.cols()).map(|j| d_t.get(i, j) as f64 * v[j] as f64).sum();
        err += (x[i] as f64 - fit).powi(2);
    }
    Ok(err.sqrt())
}

/// Learns a dictionary from the sample matrix `x` (l x n, one sample per
/// column). Deterministic for a fixed config.
pub fn learn_dictionary(x: &Matrix, cfg: &DictLearnConfig) -> Result<Dictionary> {
    cfg.validate()?;
    let (l, n) = (x.rows(), x.cols());
    let m = cfg.target_cols;

    // usable candidates: non-zero columns, with their norms
    let mut candidates: Vec<usize> = Vec::new();
    let mut norms = vec![0.0f64; n];
    for j in 0..n {
        let norm = (0..l).map(|i| (x.get(i, j) as f64).powi(2)).sum::<f64>().sqrt();
        norms[j] = norm;
        if norm > 0.0 {
            candidates.push(j);
        }
    }
    if candidates.len() < m {
        return Err(Error::InsufficientData(format!(
            "need {m} non-zero columns, found {}",
            candidates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut selected: Vec<usize> = Vec::with_capacity(m);
    let mut is_selected = vec![false; n];

    // per-candidate residual vectors, updated in place as the span grows
    let mut residuals: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..l).map(|i| x.get(i, j) as f64).collect())
        .collect();
    // orthonormal basis of the selected columns' span
    let mut q_cols: Vec<Vec<f64>> = Vec::new();

    let append = |j: usize,
                      selected: &mut Vec<usize>,
                      is_selected: &mut Vec<bool>,
                      q_cols: &mut Vec<Vec<f64>>,
                      residuals: &mut Vec<Vec<f64>>| {
        selected.push(j);
        is_selected[j] = true;
        // orthogonalize the raw column against the current span
        let mut v: Vec<f64> = (0..l).map(|i| x.get(i, j) as f64).collect();
        let orig = norms[j];
        for q in q_cols.iter() {
            let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < RANK_TOL * orig {
            // column already in span: the span (and residuals) are unchanged
            return;
        }
        for value in v.iter_mut() {
            *value /= norm;
        }
        for (k, res) in residuals.iter_mut().enumerate() {
            if is_selected[k] {
                continue;
            }
            let proj: f64 = v.iter().zip(res.iter()).map(|(a, b)| a * b).sum();
            for (ri, qi) in res.iter_mut().zip(&v) {
                *ri -= proj * qi;
            }
        }
        q_cols.push(v);
    };

    // initial uniform draw without replacement
    let mut pool = candidates.clone();
    for _ in 0..cfg.init_cols.min(m) {
        let pick = rng.gen_range(0..pool.len());
        let j = pool.swap_remove(pick);
        append(j, &mut selected, &mut is_selected, &mut q_cols, &mut residuals);
    }

    while selected.len() < m {
        // weights fixed for the round (normalized residuals per the
        // selection rule); zero-residual columns get probability zero
        let mut weights: Vec<(usize, f64)> = candidates
            .iter()
            .filter(|&&j| !is_selected[j])
            .map(|&j| {
                let rnorm = residuals[j].iter().map(|a| a * a).sum::<f64>().sqrt();
                (j, rnorm / norms[j])
            })
            .collect();
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        let remaining = m - selected.len();
        if total <= 1e-12 {
            // every unselected column is already in the span: fill the rest
            // uniformly at random
            for _ in 0..remaining {
                let pick = rng.gen_range(0..weights.len());
                let (j, _) = weights.swap_remove(pick);
                append(j, &mut selected, &mut is_selected, &mut q_cols, &mut residuals);
            }
            break;
        }
        let draws = cfg.growth.min(remaining);
        for _ in 0..draws {
            let total: f64 = weights.iter().map(|&(_, w)| w).sum();
            if total <= 0.0 {
                break;
            }
            // inverse-CDF draw over the cumulative weights
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0f64;
            let mut pick = weights.len() - 1;
            for (idx, &(_, w)) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = idx;
                    break;
                }
            }
            let (j, _) = weights.swap_remove(pick);
            append(j, &mut selected, &mut is_selected, &mut q_cols, &mut residuals);
        }
    }

    let cols: Vec<Vec<f32>> = selected.iter().map(|&j| x.col(j)).collect();
    Dictionary::from_atoms(&Matrix::from_cols(&cols)?, selected, cfg.seed)
}

/// Mean and max relative OMP reconstruction error over holdout columns.
pub fn reconstruction_error_stats(
    dict: &Dictionary,
    x_holdout: &Matrix,
    lambda: usize,
) -> Result<(f64, f64)> {
    let n = x_holdout.cols();
    if n == 0 {
        return Err(Error::InsufficientData("empty holdout".into()));
    }
    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    for j in 0..n {
        let col = x_holdout.col(j);
        let norm = col.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let code = omp(dict.atoms(), &col, lambda)?;
        let rel = code.residual_norm() / norm;
        sum += rel;
        max = max.max(rel);
    }
    Ok((sum / n as f64, max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(l: usize, k: usize) -> Vec<f32> {
        let mut v = vec![0.0f32; l];
        v[k] = 1.0;
        v
    }

    #[test]
    fn selects_all_orthogonal_columns() {
        let x = Matrix::from_cols(&[unit(3, 0), unit(3, 1), unit(3, 2)]).unwrap();
        let cfg = DictLearnConfig {
            target_cols: 3,
            init_cols: 1,
            growth: 1,
            seed: 0,
        };
        let d = learn_dictionary(&x, &cfg).unwrap();
        let mut ids = d.source_ids().to_vec();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2]);
        for j in 0..3 {
            let norm: f64 = d.atoms().col(j).iter().map(|&v| (v as f64).powi(2)).sum();
            assert!((norm.sqrt() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn duplicate_column_has_zero_probability() {
        // X = [x, x, y], y orthogonal to x; after picking x, the duplicate
        // has zero residual so the second pick must be y.
        let x_col = unit(2, 0);
        let y_col = unit(2, 1);
        for seed in 0..20 {
            let x = Matrix::from_cols(&[x_col.clone(), x_col.clone(), y_col.clone()]).unwrap();
            let cfg = DictLearnConfig {
                target_cols: 2,
                init_cols: 1,
                growth: 1,
                seed,
            };
            let d = learn_dictionary(&x, &cfg).unwrap();
            // whatever the first pick, the support must span both directions
            let has_y = d.source_ids().contains(&2);
            let has_x = d.source_ids().iter().any(|&j| j < 2);
            assert!(has_x && has_y, "seed {seed}: {:?}", d.source_ids());
        }
    }

    #[test]
    fn three_cluster_coverage() {
        use rand::{Rng, SeedableRng};
        // 3 well-separated clusters, 20 points each; m=3 from m0=1 should
        // cover all clusters in >= 95/100 seeds.
        let mut gen = ChaCha8Rng::seed_from_u64(999);
        let centers = [
            [10.0f64, 0.0, 0.0],
            [0.0, 10.0, 0.0],
            [0.0, 0.0, 10.0],
        ];
        let mut cols = Vec::new();
        for center in &centers {
            for _ in 0..20 {
                cols.push(vec![
                    (center[0] + gen.gen_range(-0.1..0.1)) as f32,
                    (center[1] + gen.gen_range(-0.1..0.1)) as f32,
                    (center[2] + gen.gen_range(-0.1..0.1)) as f32,
                ]);
            }
        }
        let x = Matrix::from_cols(&cols).unwrap();
        let mut covered = 0;
        for seed in 0..100 {
            let cfg = DictLearnConfig {
                target_cols: 3,
                init_cols: 1,
                growth: 1,
                seed,
            };
            let d = learn_dictionary(&x, &cfg).unwrap();
            let mut clusters: Vec<usize> = d.source_ids().iter().map(|&j| j / 20).collect();
            clusters.sort_unstable();
            clusters.dedup();
            if clusters.len() == 3 {
                covered += 1;
            }
        }
        assert!(covered >= 95, "covered only {covered}/100");
    }

    #[test]
    fn determinism() {
        use rand::{Rng, SeedableRng};
        let mut gen = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<f32>> = (0..40)
            .map(|_| (0..8).map(|_| gen.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let x = Matrix::from_cols(&cols).unwrap();
        let cfg = DictLearnConfig::with_defaults(10, 42);
        let d1 = learn_dictionary(&x, &cfg).unwrap();
        let d2 = learn_dictionary(&x, &cfg).unwrap();
        assert_eq!(d1.source_ids(), d2.source_ids());
        assert_eq!(d1.atoms().data(), d2.atoms().data());
    }

    #[test]
    fn insufficient_columns_rejected() {
        let x = Matrix::from_cols(&[unit(3, 0), vec![0.0; 3]]).unwrap();
        let cfg = DictLearnConfig::with_defaults(2, 0);
        assert!(matches!(
            learn_dictionary(&x, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn projection_residual_in_span_is_zero() {
        let d = Matrix::from_cols(&[unit(3, 0), unit(3, 1)]).unwrap();
        let x = [0.3f32, -0.7, 0.0];
        let r = projection_residual(&d, &x).unwrap();
        assert!(r <= 1e-5);
    }

    #[test]
    fn projection_residual_orthogonal_direction() {
        let d = Matrix::from_cols(&[unit(2, 0)]).unwrap();
        let r = projection_residual(&d, &[0.0, 1.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-6);
    }

    #[test]
    fn projection_residual_matches_pseudo_inverse() {
        use rand::{Rng, SeedableRng};
        let mut gen = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<Vec<f32>> = (0..4)
            .map(|_| (0..10).map(|_| gen.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let d = Matrix::from_cols(&cols).unwrap();
        let x: Vec<f32> = (0..10).map(|_| gen.gen_range(-1.0f32..1.0)).collect();
        let r = projection_residual(&d, &x).unwrap();
        // explicit (D^T D)^{-1} D^T oracle
        let dt = d.transpose();
        let gram_inv = crate::linalg::sym_inverse(&dt.matmul(&d).unwrap(), 0.0).unwrap();
        let plan = crate::linalg::MvmPlan::default();
        let dtx = crate::linalg::mvm(&dt, &x, &plan).unwrap();
        let v = crate::linalg::mvm(&gram_inv, &dtx, &plan).unwrap();
        let fit = crate::linalg::mvm(&d, &v, &plan).unwrap();
        let oracle: f64 = x
            .iter()
            .zip(&fit)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((r - oracle).abs() < 1e-4);
    }

    #[test]
    fn stats_zero_on_atom_columns() {
        let x = Matrix::from_cols(&[unit(4, 0), unit(4, 2)]).unwrap();
        let d = Dictionary::from_atoms(&x, vec![0, 1], 0).unwrap();
        let (mean, max) = reconstruction_error_stats(&d, &x, 1).unwrap();
        assert!(mean <= 1e-5);
        assert!(max <= 1e-5);
    }

    #[test]
    fn full_rank_recovery_small_error() {
        use rand::{Rng, SeedableRng};
        let mut gen = ChaCha8Rng::seed_from_u64(12);
        let l = 6;
        let cols: Vec<Vec<f32>> = (0..l)
            .map(|_| (0..l).map(|_| gen.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let d = Dictionary::from_atoms(&Matrix::from_cols(&cols).unwrap(), (0..l).collect(), 0)
            .unwrap();
        let holdout: Vec<Vec<f32>> = (0..5)
            .map(|_| (0..l).map(|_| gen.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let (mean, _) =
            reconstruction_error_stats(&d, &Matrix::from_cols(&holdout).unwrap(), l).unwrap();
        assert!(mean <= 1e-4, "mean = {mean}");
    }

    #[test]
    fn error_decreases_with_lambda() {
        use rand::{Rng, SeedableRng};
        let mut gen = ChaCha8Rng::seed_from_u64(13);
        let l = 8;
        let m = 4 * l;
        let cols: Vec<Vec<f32>> = (0..m)
            .map(|_| (0..l).map(|_| gen.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let d = Dictionary::from_atoms(&Matrix::from_cols(&cols).unwrap(), (0..m).collect(), 0)
            .unwrap();
        let holdout: Vec<Vec<f32>> = (0..30)
            .map(|_| (0..l).map(|_| gen.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let hx = Matrix::from_cols(&holdout).unwrap();
        let (mean5, _) = reconstruction_error_stats(&d, &hx, 5).unwrap();
        let (mean1, _) = reconstruction_error_stats(&d, &hx, 1).unwrap();
        assert!(mean5 < mean1);
    }
}
