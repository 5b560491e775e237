//! Dense bitsets over row-major grid state indices.
//!
//! The safe-set machinery is intersection-heavy over at most a few thousand
//! states, so sets are stored as contiguous `u64` words.

/// A fixed-domain set of grid states.
#[derive(Clone, PartialEq, Eq)]
pub struct StateSet {
    domain: usize,
    words: Vec<u64>,
}

impl StateSet {
    /// Empty set over `domain` states.
    pub fn empty(domain: usize) -> Self {
        Self {
            domain,
            words: vec![0; domain.div_ceil(64)],
        }
    }

    /// Set containing every state of the domain.
    pub fn full(domain: usize) -> Self {
        let mut set = Self::empty(domain);
        for s in 0..domain {
            set.insert(s);
        }
        set
    }

    pub fn from_indices(domain: usize, indices: &[usize]) -> Self {
        let mut set = Self::empty(domain);
        for &s in indices {
            set.insert(s);
        }
        set
    }

    /// Number of states in the domain (not the cardinality).
    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn contains(&self, s: usize) -> bool {
        assert!(s < self.domain);
        self.words[s / 64] & (1 << (s % 64)) != 0
    }

    pub fn insert(&mut self, s: usize) {
        assert!(s < self.domain);
        self.words[s / 64] |= 1 << (s % 64);
    }

    pub fn remove(&mut self, s: usize) {
        assert!(s < self.domain);
        self.words[s / 64] &= !(1 << (s % 64));
    }

    /// Cardinality.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersect_with(&mut self, other: &StateSet) {
        assert_eq!(self.domain, other.domain);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn union_with(&mut self, other: &StateSet) {
        assert_eq!(self.domain, other.domain);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        assert_eq!(self.domain, other.domain);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Iterate member states in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let bit = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + bit)
                }
            })
        })
    }

    /// Lowest member index, if any.
    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }
}

impl std::fmt::Debug for StateSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_contains_remove() {
        let mut set = StateSet::empty(100);
        assert!(set.is_empty());
        set.insert(0);
        set.insert(63);
        set.insert(64);
        set.insert(99);
        assert_eq!(set.count(), 4);
        assert!(set.contains(63) && set.contains(64));
        set.remove(63);
        assert!(!set.contains(63));
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![0, 64, 99]);
    }

    #[test]
    fn set_algebra_matches_naive() {
        // Cross-check the word-level operations against per-element loops.
        let mut a = StateSet::empty(130);
        let mut b = StateSet::empty(130);
        for s in 0..130 {
            if s % 3 == 0 {
                a.insert(s);
            }
            if s % 5 == 0 {
                b.insert(s);
            }
        }
        let inter = a.intersection(&b);
        let uni = a.union(&b);
        for s in 0..130 {
            assert_eq!(inter.contains(s), s % 3 == 0 && s % 5 == 0);
            assert_eq!(uni.contains(s), s % 3 == 0 || s % 5 == 0);
        }
        assert!(inter.is_subset(&a) && inter.is_subset(&b));
        assert!(a.is_subset(&uni));
        assert_eq!(a.first(), Some(0));
    }

    #[test]
    fn full_and_empty() {
        let full = StateSet::full(70);
        assert_eq!(full.count(), 70);
        assert_eq!(StateSet::empty(70).first(), None);
    }
}
