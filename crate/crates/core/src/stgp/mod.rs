//! Spatio-temporal Gaussian process engine.
//!
//! Inputs to the process are [`SpaceTimePoint`]s, pairs of a time step and a
//! grid state. The module provides exact posterior inference under a
//! composite kernel, confidence intervals with a running intersection per
//! point, mutual-information gain over candidate observation sets, and the
//! confidence scaling schedule tying the interval width to the RKHS norm
//! bound and the information gain.

pub mod kernel;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Dyn};
use once_cell::sync::OnceCell;

use crate::stateset::StateSet;

pub use kernel::{eval_kernel, GridMetric, KernelSpec};

/// Jitter added to the diagonal before factorization; duplicate observations
/// make the kernel matrix singular as the noise level approaches zero.
const JITTER_PRIMARY: f64 = 1e-9;
/// Fallback jitter when the first factorization attempt fails.
const JITTER_FALLBACK: f64 = 1e-6;

/// A GP input: time step paired with a grid state index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceTimePoint {
    /// Time step within the episode horizon.
    pub t: usize,
    /// Row-major state index.
    pub s: usize,
}

impl SpaceTimePoint {
    pub fn new(t: usize, s: usize) -> Self {
        Self { t, s }
    }
}

#[derive(Debug)]
pub enum GpError {
    /// Kernel parameters out of range or a non-finite kernel value.
    InvalidKernel(String),
    /// Factorization failed even after the jitter retry.
    IllConditioned,
    /// A scalar argument violated its domain.
    Parameter(String),
    /// Exact information gain requested on a domain too large to enumerate.
    DomainTooLarge { size: usize, max: usize },
}

impl std::fmt::Display for GpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GpError::InvalidKernel(msg) => write!(f, "invalid kernel: {msg}"),
            GpError::IllConditioned => {
                write!(f, "kernel matrix is not positive definite after jitter")
            }
            GpError::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            GpError::DomainTooLarge { size, max } => write!(
                f,
                "exact information gain supports at most {max} domain points, got {size}"
            ),
        }
    }
}

impl std::error::Error for GpError {}

#[derive(Clone)]
struct Factor {
    chol: nalgebra::linalg::Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Zero-mean GP over space-time points with homoscedastic observation noise.
///
/// Observations are appended one at a time; the Cholesky factor of
/// `K + (noise_var + jitter) I` is rebuilt lazily on the next posterior
/// query and shared between queries until the training set changes.
#[derive(Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    noise_var: f64,
    metric: GridMetric,
    points: Vec<SpaceTimePoint>,
    values: Vec<f64>,
    factor: OnceCell<Factor>,
}

impl GpModel {
    pub fn new(kernel: KernelSpec, noise_var: f64, metric: GridMetric) -> Result<Self, GpError> {
        kernel.validate()?;
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(GpError::Parameter(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        Ok(Self {
            kernel,
            noise_var,
            metric,
            points: Vec::new(),
            values: Vec::new(),
            factor: OnceCell::new(),
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn train_points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn train_values(&self) -> &[f64] {
        &self.values
    }

    /// Append one observation. The cached factorization is invalidated.
    pub fn add_observation(&mut self, p: SpaceTimePoint, y: f64) {
        self.points.push(p);
        self.values.push(y);
        self.factor.take();
    }

    /// Posterior mean and variance at `q`.
    ///
    /// With no training data this is the prior `(0, k(q, q))`. The variance
    /// is clamped at zero against factorization round-off.
    pub fn posterior(&self, q: SpaceTimePoint) -> Result<(f64, f64), GpError> {
        let prior = eval_kernel(&self.kernel, q, q, &self.metric)?;
        if self.points.is_empty() {
            return Ok((0.0, prior));
        }
        let factor = self.factor.get_or_try_init(|| self.factorize())?;
        let k_q = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|&p| {
                self.kernel
                    .eval_at(self.metric.d_s(p.s, q.s), self.metric.d_t(p.t, q.t))
            }),
        );
        let mean = k_q.dot(&factor.alpha);
        let solved = factor.chol.solve(&k_q);
        let var = (prior - k_q.dot(&solved)).max(0.0);
        Ok((mean, var))
    }

    fn factorize(&self) -> Result<Factor, GpError> {
        let n = self.points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let a = self.points[i];
                let b = self.points[j];
                let v = self
                    .kernel
                    .eval_at(self.metric.d_s(a.s, b.s), self.metric.d_t(a.t, b.t));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        for jitter in [JITTER_PRIMARY, JITTER_FALLBACK] {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += self.noise_var + jitter;
            }
            if let Some(chol) = nalgebra::linalg::Cholesky::new(a) {
                let y = DVector::from_column_slice(&self.values);
                let alpha = chol.solve(&y);
                return Ok(Factor { chol, alpha });
            }
        }
        Err(GpError::IllConditioned)
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Running per-point confidence intersection.
///
/// Each point starts from the first interval pushed into it, except states
/// of the initial safe set at time zero, which start from `[h, +inf)`. Later
/// intervals are intersected in, so lower bounds never decrease and upper
/// bounds never increase. An empty intersection signals miscalibration; the
/// previous interval is retained (keeping the bound monotonicity the safe-set
/// machinery relies on) and a warning counter is bumped.
#[derive(Clone)]
pub struct BoundsTable {
    beta: f64,
    h: f64,
    initial_safe: StateSet,
    entries: HashMap<SpaceTimePoint, Interval>,
    empty_intersections: u64,
}

impl BoundsTable {
    pub fn new(beta: f64, h: f64, initial_safe: StateSet) -> Self {
        assert!(beta > 0.0, "confidence scale must be positive");
        let mut entries = HashMap::new();
        for s in initial_safe.iter() {
            entries.insert(SpaceTimePoint::new(0, s), Interval::new(h, f64::INFINITY));
        }
        Self {
            beta,
            h,
            initial_safe,
            entries,
            empty_intersections: 0,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }

    /// Number of empty-intersection warnings recorded so far.
    pub fn empty_intersections(&self) -> u64 {
        self.empty_intersections
    }

    pub fn interval(&self, q: SpaceTimePoint) -> Option<Interval> {
        self.entries.get(&q).copied()
    }

    /// Lower bound at `q`, if tracked.
    pub fn lower(&self, q: SpaceTimePoint) -> Option<f64> {
        self.entries.get(&q).map(|iv| iv.lo)
    }

    /// Upper bound at `q`, if tracked.
    pub fn upper(&self, q: SpaceTimePoint) -> Option<f64> {
        self.entries.get(&q).map(|iv| iv.hi)
    }

    /// Interval width `u - l` at `q`, if tracked.
    pub fn width(&self, q: SpaceTimePoint) -> Option<f64> {
        self.entries.get(&q).map(Interval::width)
    }

    /// Intersect `incoming` into the entry at `q` and return the stored
    /// interval.
    pub fn intersect(&mut self, q: SpaceTimePoint, incoming: Interval) -> Interval {
        let seed = if self.entries.contains_key(&q) {
            None
        } else if q.t == 0 && self.initial_safe.contains(q.s) {
            Some(Interval::new(self.h, f64::INFINITY))
        } else {
            None
        };
        match self.entries.get_mut(&q) {
            Some(prev) => {
                let lo = prev.lo.max(incoming.lo);
                let hi = prev.hi.min(incoming.hi);
                if lo <= hi {
                    *prev = Interval::new(lo, hi);
                } else {
                    self.empty_intersections += 1;
                }
                *prev
            }
            None => {
                let stored = match seed {
                    Some(base) => {
                        let lo = base.lo.max(incoming.lo);
                        let hi = base.hi.min(incoming.hi);
                        if lo <= hi {
                            Interval::new(lo, hi)
                        } else {
                            self.empty_intersections += 1;
                            base
                        }
                    }
                    None => incoming,
                };
                self.entries.insert(q, stored);
                stored
            }
        }
    }

    /// Drop entries for time indices below `min_t`. The control loop only
    /// queries a sliding window of time indices, so memory stays bounded.
    pub fn prune_before(&mut self, min_t: usize) {
        self.entries.retain(|q, _| q.t >= min_t);
    }

    pub fn tracked(&self) -> usize {
        self.entries.len()
    }
}

/// Confidence interval `[mu - sqrt(beta) sigma, mu + sqrt(beta) sigma]` at
/// `q` from the current posterior.
pub fn confidence_interval(
    gp: &GpModel,
    bounds: &BoundsTable,
    q: SpaceTimePoint,
) -> Result<Interval, GpError> {
    let (mean, var) = gp.posterior(q)?;
    let radius = (bounds.beta() * var).sqrt();
    Ok(Interval::new(mean - radius, mean + radius))
}

/// Result of an information-gain computation.
#[derive(Clone, Debug)]
pub struct InfoGainResult {
    /// Mutual information of the selected subset, in nats.
    pub gamma: f64,
    pub selected: Vec<SpaceTimePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfoGainMode {
    /// Maximize over every subset of size at most `t_max`. Only available on
    /// small domains; subset enumeration is exponential.
    Exact,
    /// Select points one at a time by maximal marginal gain.
    Greedy,
}

/// Largest domain accepted in exact mode.
pub const INFO_GAIN_EXACT_MAX: usize = 15;

/// Maximum mutual information `max_{|A| <= t_max} 1/2 log det(I + K_A / noise_var)`
/// obtainable from noisy observations at points of `domain`.
pub fn information_gain(
    kernel: &KernelSpec,
    metric: &GridMetric,
    domain: &[SpaceTimePoint],
    t_max: usize,
    noise_var: f64,
    mode: InfoGainMode,
) -> Result<InfoGainResult, GpError> {
    kernel.validate()?;
    information_gain_with(
        |a, b| kernel.eval_at(metric.d_s(a.s, b.s), metric.d_t(a.t, b.t)),
        domain,
        t_max,
        noise_var,
        mode,
    )
}

/// As [`information_gain`], but over an arbitrary kernel function. Used by
/// tests that need finite-rank kernels outside the RBF tree family.
pub fn information_gain_with<K>(
    kernel: K,
    domain: &[SpaceTimePoint],
    t_max: usize,
    noise_var: f64,
    mode: InfoGainMode,
) -> Result<InfoGainResult, GpError>
where
    K: Fn(&SpaceTimePoint, &SpaceTimePoint) -> f64,
{
    if t_max < 1 {
        return Err(GpError::Parameter("subset size bound must be >= 1".into()));
    }
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(GpError::Parameter(format!(
            "information gain requires positive noise variance, got {noise_var}"
        )));
    }
    let n = domain.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel(&domain[i], &domain[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }

    let gain_of = |indices: &[usize]| -> f64 {
        let m = indices.len();
        if m == 0 {
            return 0.0;
        }
        let mut a: DMatrix<f64> = DMatrix::identity(m, m);
        for (r, &i) in indices.iter().enumerate() {
            for (c, &j) in indices.iter().enumerate() {
                a[(r, c)] += gram[(i, j)] / noise_var;
            }
        }
        0.5 * a.determinant().ln()
    };

    let best_indices = match mode {
        InfoGainMode::Exact => {
            if n > INFO_GAIN_EXACT_MAX {
                return Err(GpError::DomainTooLarge {
                    size: n,
                    max: INFO_GAIN_EXACT_MAX,
                });
            }
            let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
            for mask in 0u32..(1u32 << n) {
                if mask.count_ones() as usize > t_max {
                    continue;
                }
                let indices: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                let g = gain_of(&indices);
                if g > best.0 {
                    best = (g, indices);
                }
            }
            best.1
        }
        InfoGainMode::Greedy => {
            let mut chosen: Vec<usize> = Vec::new();
            for _ in 0..t_max.min(n) {
                let mut best: Option<(f64, usize)> = None;
                for i in 0..n {
                    if chosen.contains(&i) {
                        continue;
                    }
                    let mut candidate = chosen.clone();
                    candidate.push(i);
                    let g = gain_of(&candidate);
                    if best.map_or(true, |(bg, _)| g > bg) {
                        best = Some((g, i));
                    }
                }
                match best {
                    Some((_, i)) => chosen.push(i),
                    None => break,
                }
            }
            chosen
        }
    };

    let gamma = gain_of(&best_indices).max(0.0);
    Ok(InfoGainResult {
        gamma,
        selected: best_indices.into_iter().map(|i| domain[i]).collect(),
    })
}

/// Confidence scaling schedule `2 B + 300 gamma_t ln^3(t / delta)`.
///
/// `B` bounds the RKHS norm of the safety function, `gamma_t` is the
/// information-gain bound after `t` observations, and `delta` is the allowed
/// failure probability.
pub fn compute_beta(t: usize, b: f64, gamma_t: f64, delta: f64) -> Result<f64, GpError> {
    if t < 1 {
        return Err(GpError::Parameter("t must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GpError::Parameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(GpError::Parameter(format!(
            "RKHS norm bound must be non-negative, got {b}"
        )));
    }
    if !(gamma_t >= 0.0 && gamma_t.is_finite()) {
        return Err(GpError::Parameter(format!(
            "information gain must be non-negative, got {gamma_t}"
        )));
    }
    let log_term = (t as f64 / delta).ln();
    Ok(2.0 * b + 300.0 * gamma_t * log_term.powi(3))
}
