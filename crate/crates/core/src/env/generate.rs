//! Random environment generator.
//!
//! The initial safety slice is a zero-mean Gaussian random field over the
//! grid with an RBF covariance on the cell coordinates. Later slices drift
//! by a per-step uniform factor applied to the initial slice:
//! `g[t+1][s] = g[t][s] + l_t * phi_t * g[0][s]`, `phi_t ~ U[-1, 1]`, with
//! one `phi_t` shared by all states of a step.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EnvError, GridWorld, DEFAULT_NOISE_STD, START_MARGIN};
use crate::stateset::StateSet;

/// How many fields are drawn before giving up on the start margin.
const MAX_REDRAWS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvGenSpec {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub horizon: usize,
    /// Per-step drift scale.
    pub l_t: f64,
    pub h: f64,
    pub noise_std: f64,
    /// Prior variance of the field covariance.
    pub kernel_variance: f64,
    /// Length scale of the field covariance, in cells.
    pub kernel_length_scale: f64,
}

impl EnvGenSpec {
    pub fn new(seed: u64, rows: usize, cols: usize, horizon: usize, l_t: f64) -> Self {
        Self {
            seed,
            rows,
            cols,
            horizon,
            l_t,
            h: 0.0,
            noise_std: DEFAULT_NOISE_STD,
            kernel_variance: 1.0,
            kernel_length_scale: 2.0,
        }
    }
}

/// Generate a random grid world with a drifting safety field.
///
/// The initial safe set is the single state maximizing the initial slice;
/// fields whose maximum clears the threshold by less than [`START_MARGIN`]
/// are redrawn from the same stream, so the result is deterministic in the
/// seed.
pub fn generate_random_env(spec: &EnvGenSpec) -> Result<GridWorld, EnvError> {
    if spec.rows == 0 || spec.cols == 0 || spec.horizon == 0 {
        return Err(EnvError::Invalid(
            "grid size and horizon must be positive".into(),
        ));
    }
    if !(spec.l_t >= 0.0 && spec.l_t.is_finite()) {
        return Err(EnvError::Invalid(format!(
            "drift scale must be non-negative, got {}",
            spec.l_t
        )));
    }
    if spec.kernel_variance <= 0.0 || spec.kernel_length_scale <= 0.0 {
        return Err(EnvError::Invalid(
            "field covariance parameters must be positive".into(),
        ));
    }

    let n = spec.rows * spec.cols;
    let factor = field_cholesky(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    for _ in 0..MAX_REDRAWS {
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let g0 = &factor * z;

        let (best, best_val) = g0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        if best_val < spec.h + START_MARGIN {
            continue;
        }

        let mut safety = Vec::with_capacity(spec.horizon);
        safety.push(g0.iter().copied().collect::<Vec<f64>>());
        for t in 1..spec.horizon {
            let phi: f64 = rng.gen_range(-1.0..1.0);
            let prev = &safety[t - 1];
            let next: Vec<f64> = (0..n).map(|s| prev[s] + spec.l_t * phi * g0[s]).collect();
            safety.push(next);
        }

        let initial_safe = StateSet::from_indices(n, &[best]);
        return GridWorld::new(
            spec.rows,
            spec.cols,
            safety,
            spec.h,
            initial_safe,
            spec.noise_std,
        );
    }
    Err(EnvError::NoSafeStart)
}

/// Cholesky factor of the RBF covariance over cell coordinates (squared
/// Euclidean distance on `(row, col)`).
fn field_cholesky(spec: &EnvGenSpec) -> Result<DMatrix<f64>, EnvError> {
    let n = spec.rows * spec.cols;
    let ls2 = spec.kernel_length_scale * spec.kernel_length_scale;
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        let (ri, ci) = (i / spec.cols, i % spec.cols);
        for j in i..n {
            let (rj, cj) = (j / spec.cols, j % spec.cols);
            let dr = ri as f64 - rj as f64;
            let dc = ci as f64 - cj as f64;
            let v = spec.kernel_variance * (-(dr * dr + dc * dc) / (2.0 * ls2)).exp();
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    // RBF covariances over dense grids are numerically rank-deficient.
    for jitter in [1e-9, 1e-6] {
        let mut a = cov.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = nalgebra::linalg::Cholesky::new(a) {
            return Ok(chol.unpack());
        }
    }
    Err(EnvError::Covariance)
}
