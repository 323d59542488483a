use serde::{Deserialize, Serialize};

/// Aggregate state of `n` pools: `counts[i]` is the number of pools with at
/// least `i` tasks. `counts[0] = n`; the vector grows when a pool exceeds the
/// current top level. Token counts are derived from it, never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOccupancy {
    counts: Vec<u64>,
    total: u64,
}

impl CountOccupancy {
    pub fn empty(n: u64) -> Self {
        Self { counts: vec![n, 0], total: 0 }
    }

    /// From `Q(0..)`. Returns `None` unless `Q(0) >= 1` and the sequence is non-increasing.
    pub fn from_counts(mut counts: Vec<u64>) -> Option<Self> {
        if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[1] > w[0]) {
            return None;
        }
        while counts.len() > 2 && *counts.last()? == 0 && counts[counts.len() - 2] == 0 {
            counts.pop();
        }
        if counts.len() == 1 || *counts.last()? != 0 {
            counts.push(0);
        }
        let total = counts[1..].iter().sum();
        Some(Self { counts, total })
    }

    pub fn n(&self) -> u64 {
        self.counts[0]
    }

    /// `Q(i)`; zero above the stored range.
    pub fn at_least(&self, i: usize) -> u64 {
        self.counts.get(i).copied().unwrap_or(0)
    }

    /// Pools holding exactly `i` tasks.
    pub fn exactly(&self, i: usize) -> u64 {
        self.at_least(i) - self.at_least(i + 1)
    }

    pub fn total_tasks(&self) -> u64 {
        self.total
    }

    /// Highest level with a pool (0 when every pool is idle).
    pub fn top_level(&self) -> usize {
        self.counts.iter().rposition(|&c| c > 0).unwrap_or(0)
    }

    /// `Q(0..=top)`.
    pub fn counts(&self) -> &[u64] {
        &self.counts[..=self.top_level()]
    }

    pub fn fraction(&self, i: usize) -> f64 {
        self.at_least(i) as f64 / self.n() as f64
    }

    /// Pools below the threshold (`n − Q(ℓ)`).
    pub fn green_tokens(&self, threshold: usize) -> u64 {
        self.n() - self.at_least(threshold)
    }

    /// Pools below `h = ℓ + 1` (`n − Q(h)`).
    pub fn yellow_tokens(&self, threshold: usize) -> u64 {
        self.n() - self.at_least(threshold + 1)
    }

    /// A pool holding exactly `level` tasks receives one more.
    pub fn add_task(&mut self, level: usize) {
        debug_assert!(self.exactly(level) > 0, "no pool at level {level}");
        if level + 2 >= self.counts.len() {
            self.counts.resize(level + 3, 0);
        }
        self.counts[level + 1] += 1;
        self.total += 1;
    }

    /// A pool holding exactly `level >= 1` tasks completes one.
    pub fn remove_task(&mut self, level: usize) {
        debug_assert!(level >= 1 && self.exactly(level) > 0, "no pool at level {level}");
        self.counts[level] -= 1;
        self.total -= 1;
    }

    /// Picks a level in `lo..=hi` with probability proportional to the number
    /// of pools at that level, using `u ∈ [0, 1)`. `None` if the range is empty.
    pub fn pick_pool_level(&self, lo: usize, hi: Option<usize>, u: f64) -> Option<usize> {
        let upper = hi.map_or(0, |h| self.at_least(h + 1));
        let pool = self.at_least(lo) - upper;
        if pool == 0 {
            return None;
        }
        let target = ((u * pool as f64) as u64).min(pool - 1);
        // Pools ordered by level: those at `lo` first.
        let mut acc = 0;
        let top = hi.unwrap_or_else(|| self.top_level());
        for level in lo..=top {
            acc += self.exactly(level);
            if target < acc {
                return Some(level);
            }
        }
        Some(top)
    }

    /// Picks the level of a departing task: level `i` with probability
    /// `i·(Q(i) − Q(i+1)) / total`.
    pub fn pick_task_level(&self, u: f64) -> Option<usize> {
        if self.total == 0 {
            return None;
        }
        let target = ((u * self.total as f64) as u64).min(self.total - 1);
        let mut acc = 0;
        let top = self.top_level();
        for level in 1..=top {
            acc += level as u64 * self.exactly(level);
            if target < acc {
                return Some(level);
            }
        }
        Some(top)
    }

    pub fn is_valid(&self) -> bool {
        self.counts.windows(2).all(|w| w[1] <= w[0]) && self.total == self.counts[1..].iter().sum::<u64>()
    }
}
