//! Lipschitz-based safe-set machinery.
//!
//! States are certified safe by propagating confidence lower bounds from
//! anchor states through the combined metric
//! `L(s, s', t, t') = l_s * d_s(s, s') + l_t * d_t(t, t')`. On top of the
//! certified set sit one-step reachability and returnability restrictions,
//! an optimistic expander set that drives sampling, and a conservative
//! forward set standing in for the not-yet-computable next safe set.

use crate::env::GridWorld;
use crate::stateset::StateSet;
use crate::stgp::{BoundsTable, GridMetric, SpaceTimePoint};

/// Lipschitz constants: safety units per cell and per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzParams {
    pub l_s: f64,
    pub l_t: f64,
}

impl LipschitzParams {
    pub fn new(l_s: f64, l_t: f64) -> Self {
        assert!(l_s.is_finite() && l_s >= 0.0, "l_s must be non-negative");
        assert!(l_t.is_finite() && l_t >= 0.0, "l_t must be non-negative");
        Self { l_s, l_t }
    }
}

/// Combined metric `l_s * d_s(a, b) + l_t * |t1 - t2|` with Manhattan cell
/// distance and unit time steps.
pub fn lipschitz_metric(
    a: usize,
    b: usize,
    t1: usize,
    t2: usize,
    p: &LipschitzParams,
    m: &GridMetric,
) -> f64 {
    p.l_s * m.manhattan(a, b) + p.l_t * m.d_t(t1, t2)
}

/// Per-step snapshot of every maintained set.
#[derive(Clone, Debug)]
pub struct SafeSets {
    /// States certified by the safety constraint alone (Lipschitz
    /// propagation from the previous safe set).
    pub s: StateSet,
    /// Certified states that are also reachable and returnable.
    pub s_hat: StateSet,
    /// Conservative forward set used for the returnability restriction.
    pub g_next: StateSet,
    /// States whose optimistic value could certify an uncertified state.
    pub expanders: StateSet,
    /// One-step candidates from the current state.
    pub candidates: StateSet,
    /// States whose running confidence lower bound itself clears the
    /// threshold at this step; the model's predicted safe space, used for
    /// classification against the ground truth.
    pub certified: StateSet,
}

impl SafeSets {
    /// Snapshot for the episode start, before anything is computed.
    pub fn initial(w: &GridWorld, start: usize) -> Self {
        let s0 = w.initial_safe().clone();
        Self {
            s: s0.clone(),
            s_hat: s0.clone(),
            g_next: s0.clone(),
            expanders: StateSet::empty(w.n_states()),
            candidates: compute_candidates(start, w),
            certified: s0,
        }
    }
}

/// States whose stored lower bound at time key `t` clears `h`.
pub fn certified_set(bounds: &BoundsTable, t: usize, h: f64, n_states: usize) -> StateSet {
    let mut out = StateSet::empty(n_states);
    for s in 0..n_states {
        if let Some(l) = bounds.lower(SpaceTimePoint::new(t, s)) {
            if l >= h {
                out.insert(s);
            }
        }
    }
    out
}

/// Core certification loop shared by the safe-set and conservative-set
/// operators: states `s` with an anchor `s'` whose stored lower bound at
/// `{anchor_t, s'}` still clears `h` after paying the Lipschitz distance to
/// `(target_t, s)`.
fn certified_from(
    anchor: &StateSet,
    bounds: &BoundsTable,
    anchor_t: usize,
    target_t: usize,
    p: &LipschitzParams,
    h: f64,
    m: &GridMetric,
) -> StateSet {
    let n = anchor.domain();
    let mut out = StateSet::empty(n);
    for s in 0..n {
        for anchor_s in anchor.iter() {
            if let Some(l) = bounds.lower(SpaceTimePoint::new(anchor_t, anchor_s)) {
                if l - lipschitz_metric(s, anchor_s, target_t, anchor_t, p, m) >= h {
                    out.insert(s);
                    break;
                }
            }
        }
    }
    out
}

/// Safety-constraint set at time `t`: states certified from the previous
/// safe set using bounds at time `t - 1`.
pub fn compute_s(
    prev_s_hat: &StateSet,
    bounds: &BoundsTable,
    t: usize,
    p: &LipschitzParams,
    h: f64,
    m: &GridMetric,
) -> StateSet {
    assert!(t >= 1, "the safety set is defined from time 1 on");
    certified_from(prev_s_hat, bounds, t - 1, t, p, h, m)
}

/// Conservative set for time `to_t`: states certified from the safe set at
/// `from_t` using bounds at `from_t`, paying the full temporal distance.
pub fn compute_g(
    from_t: usize,
    to_t: usize,
    s_hat_from: &StateSet,
    bounds: &BoundsTable,
    p: &LipschitzParams,
    h: f64,
    m: &GridMetric,
) -> StateSet {
    assert!(to_t > from_t, "conservative sets look forward in time");
    certified_from(s_hat_from, bounds, from_t, to_t, p, h, m)
}

/// Time-invariant safety set: certification ignores time entirely and the
/// bounds are keyed at time index 0.
pub fn compute_s_invariant(
    prev_s_hat: &StateSet,
    bounds: &BoundsTable,
    l_s: f64,
    h: f64,
    m: &GridMetric,
) -> StateSet {
    let p = LipschitzParams::new(l_s, 0.0);
    certified_from(prev_s_hat, bounds, 0, 0, &p, h, m)
}

/// States reachable from `x` in one step (including `x`).
pub fn reach_set(x: &StateSet, w: &GridWorld) -> StateSet {
    let mut out = x.clone();
    for s in x.iter() {
        for a in w.available_actions(s) {
            out.insert(w.transition(s, a).expect("available action"));
        }
    }
    out
}

/// States that can step into `x` in one move (including `x`).
pub fn ret_set(x: &StateSet, w: &GridWorld) -> StateSet {
    let mut out = x.clone();
    for s in 0..x.domain() {
        if out.contains(s) {
            continue;
        }
        for a in w.available_actions(s) {
            if x.contains(w.transition(s, a).expect("available action")) {
                out.insert(s);
                break;
            }
        }
    }
    out
}

/// States of `x` that can reach `x_bar` through an arbitrarily long path
/// inside `x`: the fixed point of one-step returnability.
pub fn ret_bar_set(x: &StateSet, x_bar: &StateSet, w: &GridWorld) -> StateSet {
    let mut out = x_bar.clone();
    loop {
        let mut changed = false;
        for s in x.iter() {
            if out.contains(s) {
                continue;
            }
            for a in w.available_actions(s) {
                if out.contains(w.transition(s, a).expect("available action")) {
                    out.insert(s);
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Safe set: certified states that are reachable from the previous safe set
/// and returnable to the conservative forward set.
pub fn compute_s_hat(
    s: &StateSet,
    prev_s_hat: &StateSet,
    g_fwd: &StateSet,
    w: &GridWorld,
) -> StateSet {
    let mut out = s.clone();
    out.intersect_with(&reach_set(prev_s_hat, w));
    out.intersect_with(&ret_set(g_fwd, w));
    out
}

/// Time-invariant safe set: returnability runs through arbitrarily long
/// paths back to the previous safe set.
pub fn compute_s_hat_invariant(
    s_alpha: &StateSet,
    prev_s_hat: &StateSet,
    w: &GridWorld,
) -> StateSet {
    let mut out = s_alpha.clone();
    out.intersect_with(&reach_set(prev_s_hat, w));
    out.intersect_with(&ret_bar_set(s_alpha, prev_s_hat, w));
    out
}

fn expanders_from(
    s_hat: &StateSet,
    s: &StateSet,
    bounds: &BoundsTable,
    bound_t: usize,
    target_t: usize,
    p: &LipschitzParams,
    h: f64,
    w: &GridWorld,
) -> StateSet {
    let n = s.domain();
    let m = w.metric();
    let mut out = StateSet::empty(n);
    for cand in s_hat.iter() {
        let Some(u) = bounds.upper(SpaceTimePoint::new(bound_t, cand)) else {
            continue;
        };
        for outside in 0..n {
            if s.contains(outside) {
                continue;
            }
            if u - lipschitz_metric(cand, outside, bound_t, target_t, p, &m) >= h {
                out.insert(cand);
                break;
            }
        }
    }
    out
}

/// Expanders: safe states whose optimistic value at `t` could certify at
/// least one state currently outside `s`, two steps ahead.
pub fn compute_expanders(
    s_hat: &StateSet,
    s: &StateSet,
    bounds: &BoundsTable,
    t: usize,
    p: &LipschitzParams,
    h: f64,
    w: &GridWorld,
) -> StateSet {
    expanders_from(s_hat, s, bounds, t, t + 2, p, h, w)
}

/// Time-invariant expanders: optimistic values keyed at time index 0, no
/// temporal distance.
pub fn compute_expanders_invariant(
    s_hat: &StateSet,
    s_alpha: &StateSet,
    bounds: &BoundsTable,
    l_s: f64,
    h: f64,
    w: &GridWorld,
) -> StateSet {
    let p = LipschitzParams::new(l_s, 0.0);
    expanders_from(s_hat, s_alpha, bounds, 0, 0, &p, h, w)
}

/// One-step candidates: images of every available action from `prev_state`
/// (which includes `prev_state` itself via stay).
pub fn compute_candidates(prev_state: usize, w: &GridWorld) -> StateSet {
    let mut out = StateSet::empty(w.n_states());
    for a in w.available_actions(prev_state) {
        out.insert(w.transition(prev_state, a).expect("available action"));
    }
    out
}

/// Lower-bound terms `[M_{t+1}, ..., M_N]` on the cumulative number of safe
/// states, `M_i = |s_hat_t ∩ G(t -> i+1)|`. Diagnostic only.
pub fn lower_bound_terms(
    s_hat_t: &StateSet,
    bounds: &BoundsTable,
    t: usize,
    horizon: usize,
    p: &LipschitzParams,
    h: f64,
    m: &GridMetric,
) -> Vec<usize> {
    assert!(t < horizon);
    (t + 1..=horizon)
        .map(|i| {
            let g = compute_g(t, i + 1, s_hat_t, bounds, p, h, m);
            s_hat_t.intersection(&g).count()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stgp::Interval;

    fn world(rows: usize, cols: usize) -> GridWorld {
        let n = rows * cols;
        GridWorld::new(
            rows,
            cols,
            vec![vec![1.0; n]; 8],
            0.0,
            StateSet::from_indices(n, &[0]),
            0.0,
        )
        .unwrap()
    }

    /// Bounds table with explicit lower/upper values at one time index.
    fn table_at(t: usize, lo_hi: &[(usize, f64, f64)], n: usize) -> BoundsTable {
        let mut b = BoundsTable::new(2.0, 0.0, StateSet::empty(n));
        for &(s, lo, hi) in lo_hi {
            b.intersect(SpaceTimePoint::new(t, s), Interval::new(lo, hi));
        }
        b
    }

    #[test]
    fn metric_values() {
        let m = GridMetric::new(3);
        let p = LipschitzParams::new(0.1, 0.1);
        assert_eq!(lipschitz_metric(4, 4, 2, 2, &p, &m), 0.0);
        // Adjacent cells, same time.
        assert_eq!(lipschitz_metric(4, 5, 2, 2, &p, &m), 0.1);
        // Diagonal neighbors two steps apart: 0.1 * 2 + 0.1 * 2.
        assert!((lipschitz_metric(0, 4, 0, 2, &p, &m) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_lipschitz_propagates_everywhere() {
        let w = world(3, 3);
        let p = LipschitzParams::new(0.0, 0.0);
        let bounds = table_at(0, &[(4, 0.5, 1.0)], 9);
        let s = compute_s(
            &StateSet::from_indices(9, &[4]),
            &bounds,
            1,
            &p,
            0.0,
            &w.metric(),
        );
        assert_eq!(s.count(), 9);
    }

    #[test]
    fn huge_spatial_constant_blocks_spread() {
        let w = world(3, 3);
        let p = LipschitzParams::new(1e9, 0.1);
        let bounds = table_at(0, &[(4, 0.5, 1.0), (5, -0.2, 0.4)], 9);
        let s = compute_s(
            &StateSet::from_indices(9, &[4, 5]),
            &bounds,
            1,
            &p,
            0.0,
            &w.metric(),
        );
        // Only anchors whose own bound clears h + l_t survive.
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn safety_set_matches_double_loop_oracle() {
        let w = world(3, 3);
        let m = w.metric();
        let p = LipschitzParams::new(0.1, 0.1);
        let entries: Vec<(usize, f64, f64)> = (0..9)
            .map(|s| (s, ((s * 7) % 5) as f64 * 0.1 - 0.1, 1.0))
            .collect();
        let bounds = table_at(1, &entries, 9);
        let anchor = StateSet::from_indices(9, &[1, 4, 8]);
        let got = compute_s(&anchor, &bounds, 2, &p, 0.0, &m);

        let mut expected = vec![false; 9];
        for s in 0..9 {
            for a in [1usize, 4, 8] {
                let l = entries[a].1;
                if l - lipschitz_metric(s, a, 2, 1, &p, &m) >= 0.0 {
                    expected[s] = true;
                }
            }
        }
        for s in 0..9 {
            assert_eq!(got.contains(s), expected[s], "state {s}");
        }
    }

    #[test]
    fn conservative_set_shrinks_with_horizon() {
        let w = world(3, 3);
        let m = w.metric();
        let p = LipschitzParams::new(0.1, 0.1);
        let bounds = table_at(2, &[(4, 0.45, 1.0), (1, 0.3, 0.9)], 9);
        let anchor = StateSet::from_indices(9, &[1, 4]);
        let g2 = compute_g(2, 4, &anchor, &bounds, &p, 0.0, &m);
        let g3 = compute_g(2, 5, &anchor, &bounds, &p, 0.0, &m);
        assert!(g3.is_subset(&g2));
    }

    #[test]
    fn conservative_set_with_unit_horizon_equals_safety_set() {
        let w = world(3, 3);
        let m = w.metric();
        let p = LipschitzParams::new(0.1, 0.0);
        let bounds = table_at(1, &[(4, 0.25, 1.0), (3, 0.15, 0.8)], 9);
        let anchor = StateSet::from_indices(9, &[3, 4]);
        let s = compute_s(&anchor, &bounds, 2, &p, 0.0, &m);
        let g = compute_g(1, 2, &anchor, &bounds, &p, 0.0, &m);
        assert_eq!(s.iter().collect::<Vec<_>>(), g.iter().collect::<Vec<_>>());
    }

    #[test]
    fn reach_and_ret_on_small_sets() {
        let w = world(5, 5);
        assert!(reach_set(&StateSet::empty(25), &w).is_empty());
        assert!(ret_set(&StateSet::empty(25), &w).is_empty());

        let x = StateSet::from_indices(25, &[12]);
        let reached = reach_set(&x, &w);
        assert_eq!(reached.iter().collect::<Vec<_>>(), vec![7, 11, 12, 13, 17]);
        let returning = ret_set(&x, &w);
        assert_eq!(returning.iter().collect::<Vec<_>>(), vec![7, 11, 12, 13, 17]);
    }

    #[test]
    fn reach_matches_enumeration_oracle() {
        let w = world(5, 5);
        for pattern in 0u32..32 {
            let indices: Vec<usize> = (0..5).filter(|i| pattern & (1 << i) != 0).map(|i| i * 6).collect();
            let x = StateSet::from_indices(25, &indices);
            let got = reach_set(&x, &w);
            let mut expected = vec![false; 25];
            for &s in &indices {
                expected[s] = true;
                for a in w.available_actions(s) {
                    expected[w.transition(s, a).unwrap()] = true;
                }
            }
            for s in 0..25 {
                assert_eq!(got.contains(s), expected[s]);
            }
        }
    }

    #[test]
    fn ret_bar_fixed_point_through_corridor() {
        // 1x5 corridor: states 1..=3 adjoin the target {0}.
        let w = world(1, 5);
        let x = StateSet::from_indices(5, &[1, 2, 3]);
        let x_bar = StateSet::from_indices(5, &[0]);
        let out = ret_bar_set(&x, &x_bar, &w);
        assert_eq!(out.iter().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        // Result never leaves x ∪ x_bar.
        assert!(out.is_subset(&x.union(&x_bar)));
        // Empty path set leaves only the target.
        let only_bar = ret_bar_set(&StateSet::empty(5), &x_bar, &w);
        assert_eq!(only_bar.iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn safe_set_is_triple_intersection() {
        let w = world(3, 3);
        let full = StateSet::full(9);
        assert_eq!(compute_s_hat(&full, &full, &full, &w).count(), 9);
        // Nothing returnable: empty forward set wipes the result.
        let empty = StateSet::empty(9);
        assert!(compute_s_hat(&full, &full, &empty, &w).is_empty());

        let s = StateSet::from_indices(9, &[0, 1, 2, 4, 8]);
        let prev = StateSet::from_indices(9, &[0, 1]);
        let g_fwd = StateSet::from_indices(9, &[1, 4]);
        let got = compute_s_hat(&s, &prev, &g_fwd, &w);
        let expected = s
            .intersection(&reach_set(&prev, &w))
            .intersection(&ret_set(&g_fwd, &w));
        assert_eq!(got.iter().collect::<Vec<_>>(), expected.iter().collect::<Vec<_>>());
    }

    #[test]
    fn full_grid_leaves_no_expanders() {
        let w = world(3, 3);
        let bounds = table_at(1, &[(4, 0.5, 5.0)], 9);
        let p = LipschitzParams::new(0.1, 0.1);
        let full = StateSet::full(9);
        let out = compute_expanders(&full, &full, &bounds, 1, &p, 0.0, &w);
        assert!(out.is_empty());
    }

    #[test]
    fn optimistic_state_with_small_metric_expands() {
        let w = world(3, 3);
        let bounds = table_at(1, &[(4, 0.5, 50.0)], 9);
        let p = LipschitzParams::new(0.1, 0.1);
        let s_hat = StateSet::from_indices(9, &[4]);
        let s = StateSet::from_indices(9, &[4]);
        let out = compute_expanders(&s_hat, &s, &bounds, 1, &p, 0.0, &w);
        assert_eq!(out.iter().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn expanders_match_counting_oracle() {
        let w = world(4, 4);
        let m = w.metric();
        let p = LipschitzParams::new(0.1, 0.1);
        let entries: Vec<(usize, f64, f64)> = (0..16)
            .map(|s| (s, -0.5, ((s * 3) % 7) as f64 * 0.1))
            .collect();
        let bounds = table_at(2, &entries, 16);
        let s = StateSet::from_indices(16, &[0, 1, 2, 5, 6]);
        let s_hat = StateSet::from_indices(16, &[1, 2, 5]);
        let got = compute_expanders(&s_hat, &s, &bounds, 2, &p, 0.0, &w);

        for cand in 0..16 {
            let mut count = 0;
            if s_hat.contains(cand) {
                let u = entries[cand].2;
                for outside in 0..16 {
                    if !s.contains(outside)
                        && u - lipschitz_metric(cand, outside, 2, 4, &p, &m) >= 0.0
                    {
                        count += 1;
                    }
                }
            }
            assert_eq!(got.contains(cand), count > 0, "state {cand}");
        }
    }

    #[test]
    fn candidate_sets_by_position() {
        let w = world(3, 3);
        assert_eq!(compute_candidates(4, &w).count(), 5);
        assert_eq!(compute_candidates(0, &w).count(), 3);
        for s in 0..9 {
            assert!(compute_candidates(s, &w).contains(s));
        }
    }

    #[test]
    fn lower_bound_terms_shape() {
        let w = world(3, 3);
        let m = w.metric();
        let bounds = table_at(2, &[(4, 0.35, 1.0), (5, 0.3, 1.0)], 9);
        let s_hat = StateSet::from_indices(9, &[4, 5]);

        // Zero temporal constant: every term equal.
        let p0 = LipschitzParams::new(0.1, 0.0);
        let terms = lower_bound_terms(&s_hat, &bounds, 2, 7, &p0, 0.0, &m);
        assert_eq!(terms.len(), 5);
        assert!(terms.windows(2).all(|w| w[0] == w[1]));

        // Positive temporal constant: non-increasing sequence matching the
        // direct intersection oracle.
        let p = LipschitzParams::new(0.1, 0.1);
        let terms = lower_bound_terms(&s_hat, &bounds, 2, 7, &p, 0.0, &m);
        assert!(terms.windows(2).all(|w| w[0] >= w[1]));
        for (k, &term) in terms.iter().enumerate() {
            let i = 2 + 1 + k;
            let g = compute_g(2, i + 1, &s_hat, &bounds, &p, 0.0, &m);
            assert_eq!(term, s_hat.intersection(&g).count());
        }
    }
}
