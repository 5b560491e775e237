//! Finite grid MDP environments with time-variant ground-truth safety.
//!
//! A [`GridWorld`] couples deterministic grid dynamics (stay plus the four
//! compass moves, with off-grid moves removed from the action set) with a
//! dense safety field `g[t][s]`, a safety threshold, an initial safe set,
//! and Gaussian observation noise. Worlds are immutable after construction.

mod generate;
mod terrain;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::stateset::StateSet;
use crate::stgp::GridMetric;

pub use generate::{generate_random_env, EnvGenSpec};
pub use terrain::{load_terrain_env, read_frame, Frame, RESCALE_MAX, RESCALE_MIN};

/// Default observation noise standard deviation for both scenarios.
pub const DEFAULT_NOISE_STD: f64 = 0.001;

/// Required safety margin of the start state over the threshold when an
/// initial safe set is chosen automatically.
pub const START_MARGIN: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Stay,
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

#[derive(Debug)]
pub enum EnvError {
    /// The action is not available in this state (it would leave the grid).
    InvalidAction { state: usize, action: Action },
    /// Malformed input file or inconsistent frame dimensions.
    Format(String),
    /// All pixels of a terrain stack share one value; rescaling is undefined.
    DegenerateNormalization,
    /// The generator covariance could not be factorized even after jitter.
    Covariance,
    /// No start state satisfies the safety margin.
    NoSafeStart,
    /// Construction invariant violated.
    Invalid(String),
    Io(String),
}

impl std::fmt::Display for EnvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvError::InvalidAction { state, action } => {
                write!(f, "action {} is unavailable in state {state}", action.name())
            }
            EnvError::Format(msg) => write!(f, "format error: {msg}"),
            EnvError::DegenerateNormalization => {
                write!(f, "terrain stack is constant; cannot rescale")
            }
            EnvError::Covariance => write!(f, "covariance factorization failed"),
            EnvError::NoSafeStart => write!(f, "no state satisfies the start safety margin"),
            EnvError::Invalid(msg) => write!(f, "invalid environment: {msg}"),
            EnvError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for EnvError {}

/// A finite grid MDP with a time-indexed safety field.
#[derive(Clone, Debug)]
pub struct GridWorld {
    rows: usize,
    cols: usize,
    horizon: usize,
    /// `safety[t][s]`, row-major states.
    safety: Vec<Vec<f64>>,
    h: f64,
    initial_safe: StateSet,
    noise_std: f64,
}

impl GridWorld {
    pub fn new(
        rows: usize,
        cols: usize,
        safety: Vec<Vec<f64>>,
        h: f64,
        initial_safe: StateSet,
        noise_std: f64,
    ) -> Result<Self, EnvError> {
        if rows == 0 || cols == 0 {
            return Err(EnvError::Invalid("grid dimensions must be positive".into()));
        }
        if safety.is_empty() {
            return Err(EnvError::Invalid("horizon must be positive".into()));
        }
        let n = rows * cols;
        for (t, slice) in safety.iter().enumerate() {
            if slice.len() != n {
                return Err(EnvError::Invalid(format!(
                    "slice {t} has {} values, expected {n}",
                    slice.len()
                )));
            }
            if let Some(s) = slice.iter().position(|v| !v.is_finite()) {
                return Err(EnvError::Invalid(format!(
                    "safety value at t={t}, s={s} is not finite"
                )));
            }
        }
        if initial_safe.domain() != n || initial_safe.is_empty() {
            return Err(EnvError::Invalid(
                "initial safe set must be a nonempty subset of the grid".into(),
            ));
        }
        for s in initial_safe.iter() {
            if safety[0][s] < h {
                return Err(EnvError::Invalid(format!(
                    "initial safe state {s} is unsafe at t=0 ({} < {h})",
                    safety[0][s]
                )));
            }
        }
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(EnvError::Invalid(format!(
                "noise std must be non-negative, got {noise_std}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            horizon: safety.len(),
            safety,
            h,
            initial_safe,
            noise_std,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn initial_safe(&self) -> &StateSet {
        &self.initial_safe
    }

    pub fn metric(&self) -> GridMetric {
        GridMetric::new(self.cols)
    }

    pub fn state_of(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn row_col(&self, s: usize) -> (usize, usize) {
        debug_assert!(s < self.n_states());
        (s / self.cols, s % self.cols)
    }

    /// True safety value. Prefer [`GridWorld::observe`] for agent-visible data.
    pub fn safety(&self, t: usize, s: usize) -> f64 {
        self.safety[t][s]
    }

    pub fn is_safe(&self, t: usize, s: usize) -> bool {
        self.safety[t][s] >= self.h
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.safety[t]
    }

    /// Deterministic one-step transition. Actions that would leave the grid
    /// are not available and yield an error rather than clamping.
    pub fn transition(&self, s: usize, a: Action) -> Result<usize, EnvError> {
        let (row, col) = self.row_col(s);
        let target = match a {
            Action::Stay => Some((row, col)),
            Action::Up => row.checked_sub(1).map(|r| (r, col)),
            Action::Down => (row + 1 < self.rows).then_some((row + 1, col)),
            Action::Left => col.checked_sub(1).map(|c| (row, c)),
            Action::Right => (col + 1 < self.cols).then_some((row, col + 1)),
        };
        match target {
            Some((r, c)) => Ok(self.state_of(r, c)),
            None => Err(EnvError::InvalidAction { state: s, action: a }),
        }
    }

    /// Actions available in `s`: stay always, directional moves only when the
    /// target cell is in-grid.
    pub fn available_actions(&self, s: usize) -> Vec<Action> {
        Action::ALL
            .iter()
            .copied()
            .filter(|&a| self.transition(s, a).is_ok())
            .collect()
    }

    /// Noisy observation `g[t][s] + eps`, `eps ~ Normal(0, noise_std^2)`.
    /// The caller owns the random stream.
    pub fn observe<R: Rng + ?Sized>(&self, t: usize, s: usize, rng: &mut R) -> f64 {
        assert!(t < self.horizon, "time {t} outside horizon {}", self.horizon);
        if self.noise_std == 0.0 {
            return self.safety[t][s];
        }
        let noise = Normal::new(0.0, self.noise_std).expect("validated at construction");
        self.safety[t][s] + noise.sample(rng)
    }

    /// Write the full safety field as CSV rows `(t, row, col, g)`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,row,col,g")?;
        for t in 0..self.horizon {
            for s in 0..self.n_states() {
                let (row, col) = self.row_col(s);
                writeln!(out, "{t},{row},{col},{}", self.safety[t][s])?;
            }
        }
        Ok(())
    }
}
