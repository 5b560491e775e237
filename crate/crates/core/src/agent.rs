//! Exploration policies.
//!
//! The main control loop keeps a spatio-temporal GP over the observations
//! made so far, refreshes the per-point confidence intersections over a
//! sliding window of time indices, rebuilds the safe sets, and moves to the
//! one-step candidate maximizing `mean + p * width`. Four baselines share
//! the same episode shape: uniformly random moves, unconstrained
//! width-chasing, a time-invariant variant that keys all observations by
//! state only, and an ablation that runs the main loop under a kernel
//! without the space-time cross term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::GridWorld;
use crate::safesets::{
    certified_set, compute_candidates, compute_expanders, compute_expanders_invariant, compute_g,
    compute_s, compute_s_hat, compute_s_hat_invariant, compute_s_invariant, LipschitzParams,
    SafeSets,
};
use crate::stateset::StateSet;
use crate::stgp::{BoundsTable, GpError, GpModel, Interval, KernelSpec, SpaceTimePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Policy {
    StSafeMdp,
    Random,
    Unsafe,
    IgnoreTime,
    NoCrossCov,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::StSafeMdp,
        Policy::Random,
        Policy::Unsafe,
        Policy::IgnoreTime,
        Policy::NoCrossCov,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::StSafeMdp => "st_safemdp",
            Policy::Random => "random",
            Policy::Unsafe => "unsafe",
            Policy::IgnoreTime => "ignore_time",
            Policy::NoCrossCov => "no_cross_cov",
        }
    }

    pub fn parse(name: &str) -> Option<Policy> {
        Policy::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// Stable id used for per-policy seed derivation.
    pub fn id(&self) -> u64 {
        match self {
            Policy::StSafeMdp => 0,
            Policy::Random => 1,
            Policy::Unsafe => 2,
            Policy::IgnoreTime => 3,
            Policy::NoCrossCov => 4,
        }
    }

    /// Whether the policy maintains safe sets (and thus snapshots).
    pub fn is_safety_aware(&self) -> bool {
        matches!(self, Policy::StSafeMdp | Policy::IgnoreTime | Policy::NoCrossCov)
    }
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub policy: Policy,
    /// Confidence scaling of the intervals.
    pub beta: f64,
    /// Exploration weight on the interval width in the selection score.
    pub p: f64,
    pub lipschitz: LipschitzParams,
    pub kernel: KernelSpec,
    /// Observation noise variance assumed by the GP.
    pub noise_var: f64,
    pub seed: u64,
}

/// One step of an episode.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: usize,
    /// State occupied at time `t`.
    pub state: usize,
    /// Observation made at `(t, state)`.
    pub y: f64,
    /// Safe-set snapshot, present for safety-aware policies.
    pub snapshot: Option<SafeSets>,
    /// The true safety value at the visited state was below the threshold.
    pub unsafe_visit: bool,
    /// No admissible candidate existed; the agent stayed in place.
    pub stuck: bool,
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn unsafe_visits(&self) -> u64 {
        self.steps.iter().filter(|r| r.unsafe_visit).count() as u64
    }

    pub fn stuck_steps(&self) -> u64 {
        self.steps.iter().filter(|r| r.stuck).count() as u64
    }

    /// CSV rows `(step, t, row, col, y, unsafe, stuck)`.
    pub fn write_csv<W: std::io::Write>(&self, w: &GridWorld, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "step,t,row,col,y,unsafe,stuck")?;
        for (step, rec) in self.steps.iter().enumerate() {
            let (row, col) = w.row_col(rec.state);
            writeln!(
                out,
                "{step},{},{row},{col},{},{},{}",
                rec.t, rec.y, rec.unsafe_visit as u8, rec.stuck as u8
            )?;
        }
        Ok(())
    }

    /// CSV rows `(t, set_name, state)` for every snapshot.
    pub fn write_snapshots_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,set_name,state")?;
        for rec in &self.steps {
            let Some(snap) = &rec.snapshot else { continue };
            for (name, set) in [
                ("s", &snap.s),
                ("s_hat", &snap.s_hat),
                ("g_next", &snap.g_next),
                ("expanders", &snap.expanders),
                ("candidates", &snap.candidates),
                ("certified", &snap.certified),
            ] {
                for s in set.iter() {
                    writeln!(out, "{},{name},{s}", rec.t)?;
                }
            }
        }
        Ok(())
    }
}

/// An episode trace plus the per-step predicted safety fields.
///
/// `predictions[k][s]` is the posterior mean at `(t = k, s)` given the
/// observations available before step `k`, i.e. the field the agent acted on.
#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub trace: EpisodeTrace,
    pub predictions: Vec<Vec<f64>>,
    /// Empty-intersection warnings recorded by the bounds table, when the
    /// policy maintains one.
    pub bound_warnings: u64,
}

/// Argmax over `primary`, falling back to `fallback`, with ties broken by
/// the lowest state index. With both sets empty the agent stays in place and
/// the step is flagged.
pub fn select_next<F: Fn(usize) -> f64>(
    primary: &StateSet,
    fallback: &StateSet,
    score: F,
    current: usize,
) -> (usize, bool) {
    let pick = |set: &StateSet| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for s in set.iter() {
            let sc = score(s);
            if best.map_or(true, |(bs, _)| sc > bs) {
                best = Some((sc, s));
            }
        }
        best.map(|(_, s)| s)
    };
    if let Some(s) = pick(primary) {
        (s, false)
    } else if let Some(s) = pick(fallback) {
        (s, false)
    } else {
        (current, true)
    }
}

/// Selection score `mean + p * width` at `(t, s)`: posterior mean plus the
/// weighted width of the running confidence intersection.
pub fn selection_score(
    gp: &GpModel,
    bounds: &BoundsTable,
    t: usize,
    s: usize,
    p: f64,
) -> Result<f64, GpError> {
    let (mean, _) = gp.posterior(SpaceTimePoint::new(t, s))?;
    let width = bounds.width(SpaceTimePoint::new(t, s)).unwrap_or(0.0);
    Ok(mean + p * width)
}

/// Run an episode under the configured policy.
pub fn run_policy(w: &GridWorld, cfg: &AgentConfig, n_steps: usize) -> Result<EpisodeRun, GpError> {
    assert!(n_steps >= 1, "an episode needs at least one step");
    assert!(
        n_steps <= w.horizon(),
        "episode length {n_steps} exceeds the environment horizon {}",
        w.horizon()
    );
    match cfg.policy {
        Policy::StSafeMdp | Policy::NoCrossCov => run_episode(w, cfg, n_steps),
        Policy::Random => run_baseline_random(w, cfg, n_steps),
        Policy::Unsafe => run_baseline_unsafe(w, cfg, n_steps),
        Policy::IgnoreTime => run_baseline_ignore_time(w, cfg, n_steps),
    }
}

struct EpisodeState {
    gp: GpModel,
    rng: ChaCha8Rng,
    state: usize,
    trace: EpisodeTrace,
    predictions: Vec<Vec<f64>>,
}

impl EpisodeState {
    /// Common episode start: the agent sits on the lowest-index initial safe
    /// state and observes it at time zero (keyed at `key_t`), before any
    /// planning happens. Predictions for step zero are the prior mean.
    fn begin(
        w: &GridWorld,
        cfg: &AgentConfig,
        key_t: usize,
        snapshot: bool,
    ) -> Result<Self, GpError> {
        let mut gp = GpModel::new(cfg.kernel.clone(), cfg.noise_var, w.metric())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = w.initial_safe().first().expect("initial safe set is nonempty");
        let y0 = w.observe(0, state, &mut rng);
        gp.add_observation(SpaceTimePoint::new(key_t, state), y0);
        let mut trace = EpisodeTrace::default();
        trace.steps.push(StepRecord {
            t: 0,
            state,
            y: y0,
            snapshot: snapshot.then(|| SafeSets::initial(w, state)),
            unsafe_visit: !w.is_safe(0, state),
            stuck: false,
        });
        Ok(Self {
            gp,
            rng,
            state,
            trace,
            predictions: vec![vec![0.0; w.n_states()]],
        })
    }

    fn record(&mut self, w: &GridWorld, t: usize, key_t: usize, next: usize, snapshot: Option<SafeSets>, stuck: bool) {
        let y = w.observe(t, next, &mut self.rng);
        self.gp.add_observation(SpaceTimePoint::new(key_t, next), y);
        self.trace.steps.push(StepRecord {
            t,
            state: next,
            y,
            snapshot,
            unsafe_visit: !w.is_safe(t, next),
            stuck,
        });
        self.state = next;
    }

    fn finish(self) -> EpisodeRun {
        EpisodeRun {
            trace: self.trace,
            predictions: self.predictions,
        }
    }
}

/// The main loop. Also used by the no-cross-covariance ablation, which only
/// differs in the configured kernel.
pub fn run_episode(
    w: &GridWorld,
    cfg: &AgentConfig,
    n_steps: usize,
) -> Result<EpisodeRun, GpError> {
    let metric = w.metric();
    let h = w.threshold();
    let n_states = w.n_states();
    let sqrt_beta = cfg.beta.sqrt();
    let mut bounds = BoundsTable::new(cfg.beta, h, w.initial_safe().clone());
    let mut ep = EpisodeState::begin(w, cfg, 0, true)?;
    let mut s_hat_prev = w.initial_safe().clone();

    for t in 1..n_steps {
        // Refresh the running intersections over the sliding window of time
        // indices the set formulas query, capturing the slice-t means as the
        // step's prediction field.
        let mut pred = vec![0.0; n_states];
        for tau in t - 1..=(t + 2).min(n_steps - 1) {
            for s in 0..n_states {
                let q = SpaceTimePoint::new(tau, s);
                let (mean, var) = ep.gp.posterior(q)?;
                if tau == t {
                    pred[s] = mean;
                }
                let radius = sqrt_beta * var.sqrt();
                bounds.intersect(q, Interval::new(mean - radius, mean + radius));
            }
        }
        ep.predictions.push(pred);
        bounds.prune_before(t - 1);

        let s_t = compute_s(&s_hat_prev, &bounds, t, &cfg.lipschitz, h, &metric);
        let g_fwd = compute_g(t - 1, t + 1, &s_hat_prev, &bounds, &cfg.lipschitz, h, &metric);
        let s_hat = compute_s_hat(&s_t, &s_hat_prev, &g_fwd, w);
        let expanders = compute_expanders(&s_hat, &s_t, &bounds, t, &cfg.lipschitz, h, w);
        let candidates = compute_candidates(ep.state, w);

        let mut scores = vec![f64::NEG_INFINITY; n_states];
        for s in candidates.iter() {
            scores[s] = selection_score(&ep.gp, &bounds, t, s, cfg.p)?;
        }
        let primary = expanders.intersection(&candidates);
        let fallback = s_hat.intersection(&candidates);
        let (next, stuck) = select_next(&primary, &fallback, |s| scores[s], ep.state);

        let snapshot = SafeSets {
            s: s_t,
            s_hat: s_hat.clone(),
            g_next: g_fwd,
            expanders,
            candidates,
            certified: certified_set(&bounds, t, h, n_states),
        };
        ep.record(w, t, t, next, Some(snapshot), stuck);
        // An empty safe set would poison every later step; keep the previous
        // anchor so certification can resume once the bounds improve.
        if !s_hat.is_empty() {
            s_hat_prev = s_hat;
        }
    }
    Ok(ep.finish())
}

/// Uniformly random moves over the available actions. The GP is still fed
/// with the observations so the predictions stay comparable, but it never
/// influences the policy.
pub fn run_baseline_random(
    w: &GridWorld,
    cfg: &AgentConfig,
    n_steps: usize,
) -> Result<EpisodeRun, GpError> {
    let n_states = w.n_states();
    let mut ep = EpisodeState::begin(w, cfg, 0, false)?;
    for t in 1..n_steps {
        let mut pred = vec![0.0; n_states];
        for s in 0..n_states {
            pred[s] = ep.gp.posterior(SpaceTimePoint::new(t, s))?.0;
        }
        ep.predictions.push(pred);

        let actions = w.available_actions(ep.state);
        let a = actions[ep.rng.gen_range(0..actions.len())];
        let next = w.transition(ep.state, a).expect("available action");
        ep.record(w, t, t, next, None, false);
    }
    Ok(ep.finish())
}

/// Unconstrained information chasing: move to the one-step candidate with
/// the widest confidence interval, ignoring safety.
pub fn run_baseline_unsafe(
    w: &GridWorld,
    cfg: &AgentConfig,
    n_steps: usize,
) -> Result<EpisodeRun, GpError> {
    let n_states = w.n_states();
    let sqrt_beta = cfg.beta.sqrt();
    let mut ep = EpisodeState::begin(w, cfg, 0, false)?;
    for t in 1..n_steps {
        let mut pred = vec![0.0; n_states];
        let mut widths = vec![0.0; n_states];
        for s in 0..n_states {
            let (mean, var) = ep.gp.posterior(SpaceTimePoint::new(t, s))?;
            pred[s] = mean;
            widths[s] = 2.0 * sqrt_beta * var.sqrt();
        }
        ep.predictions.push(pred);

        let candidates = compute_candidates(ep.state, w);
        let empty = StateSet::empty(n_states);
        let (next, stuck) = select_next(&candidates, &empty, |s| widths[s], ep.state);
        ep.record(w, t, t, next, None, stuck);
    }
    Ok(ep.finish())
}

/// Time-invariant variant: the GP sees space only (every observation is
/// keyed by its state at time index zero), safe sets are built without
/// temporal decay, returnability runs through arbitrarily long paths, and
/// sampling chases the widest confidence interval among expanders. The
/// expander rule has no fallback: with no expander among the one-step
/// candidates the agent stays in place.
pub fn run_baseline_ignore_time(
    w: &GridWorld,
    cfg: &AgentConfig,
    n_steps: usize,
) -> Result<EpisodeRun, GpError> {
    let metric = w.metric();
    let h = w.threshold();
    let n_states = w.n_states();
    let sqrt_beta = cfg.beta.sqrt();
    let l_s = cfg.lipschitz.l_s;
    let mut bounds = BoundsTable::new(cfg.beta, h, w.initial_safe().clone());
    let mut ep = EpisodeState::begin(w, cfg, 0, true)?;
    let mut s_hat_prev = w.initial_safe().clone();

    for t in 1..n_steps {
        let mut pred = vec![0.0; n_states];
        for s in 0..n_states {
            let q = SpaceTimePoint::new(0, s);
            let (mean, var) = ep.gp.posterior(q)?;
            pred[s] = mean;
            let radius = sqrt_beta * var.sqrt();
            bounds.intersect(q, Interval::new(mean - radius, mean + radius));
        }
        ep.predictions.push(pred);

        let s_alpha = compute_s_invariant(&s_hat_prev, &bounds, l_s, h, &metric);
        let s_hat = compute_s_hat_invariant(&s_alpha, &s_hat_prev, w);
        let expanders = compute_expanders_invariant(&s_hat, &s_alpha, &bounds, l_s, h, w);
        let candidates = compute_candidates(ep.state, w);

        let mut widths = vec![0.0; n_states];
        for s in candidates.iter() {
            widths[s] = bounds.width(SpaceTimePoint::new(0, s)).unwrap_or(0.0);
        }
        let primary = expanders.intersection(&candidates);
        let none = StateSet::empty(n_states);
        let (next, stuck) = select_next(&primary, &none, |s| widths[s], ep.state);

        let snapshot = SafeSets {
            s: s_alpha,
            s_hat: s_hat.clone(),
            g_next: StateSet::empty(n_states),
            expanders,
            candidates,
            certified: certified_set(&bounds, 0, h, n_states),
        };
        ep.record(w, t, 0, next, Some(snapshot), stuck);
        if !s_hat.is_empty() {
            s_hat_prev = s_hat;
        }
    }
    Ok(ep.finish())
}
