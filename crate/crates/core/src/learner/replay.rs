//! Experience replay with strict oldest-first eviction.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    None,
    TimerEnd,
    FallEnd,
}

/// One transition. States are stored raw; normalization happens at use
/// time with the learner's current statistics. The action is the
/// unclamped sample from the policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperienceTuple {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// The Bernoulli exploration flag lambda.
    pub exploring: bool,
    pub terminal: TerminalKind,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<ExperienceTuple>,
    capacity: usize,
    /// Absolute insertion ids of tuples with exploring = true, oldest
    /// first; trimmed lazily as the ring evicts.
    explore_ids: VecDeque<u64>,
    next_id: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayMemory {
            buf: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity,
            explore_ids: VecDeque::new(),
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Id of the oldest tuple still resident.
    fn base_id(&self) -> u64 {
        self.next_id - self.buf.len() as u64
    }

    pub fn num_exploring(&self) -> usize {
        self.explore_ids.len()
    }

    pub fn push(&mut self, tuple: ExperienceTuple) {
        debug_assert!(tuple.r.is_finite());
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        if tuple.exploring {
            self.explore_ids.push_back(self.next_id);
        }
        self.buf.push_back(tuple);
        self.next_id += 1;
        let base = self.base_id();
        while self.explore_ids.front().is_some_and(|&id| id < base) {
            self.explore_ids.pop_front();
        }
    }

    pub fn get(&self, index: usize) -> &ExperienceTuple {
        &self.buf[index]
    }

    /// `n` distinct uniform tuples. Panics if the buffer holds fewer.
    pub fn sample<'a>(&'a self, rng: &mut impl Rng, n: usize) -> Vec<&'a ExperienceTuple> {
        assert!(self.buf.len() >= n, "replay holds {} < {n} tuples", self.buf.len());
        sample_distinct(rng, self.buf.len(), n)
            .into_iter()
            .map(|i| &self.buf[i])
            .collect()
    }

    /// `n` distinct uniform tuples among those with exploring = true.
    pub fn sample_exploring<'a>(
        &'a self,
        rng: &mut impl Rng,
        n: usize,
    ) -> Vec<&'a ExperienceTuple> {
        assert!(
            self.explore_ids.len() >= n,
            "replay holds {} < {n} exploring tuples",
            self.explore_ids.len()
        );
        let base = self.base_id();
        sample_distinct(rng, self.explore_ids.len(), n)
            .into_iter()
            .map(|i| &self.buf[(self.explore_ids[i] - base) as usize])
            .collect()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
        self.explore_ids.clear();
    }
}

/// `n` distinct indices in [0, len), uniform without replacement.
fn sample_distinct(rng: &mut impl Rng, len: usize, n: usize) -> Vec<usize> {
    debug_assert!(n <= len);
    let mut picked = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::with_capacity(n * 2);
    while picked.len() < n {
        let i = rng.random_range(0..len);
        if seen.insert(i) {
            picked.push(i);
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    fn tuple(tag: f64, exploring: bool) -> ExperienceTuple {
        ExperienceTuple {
            s: vec![tag],
            a: vec![0.0],
            r: tag,
            s_next: vec![tag + 0.5],
            exploring,
            terminal: TerminalKind::None,
        }
    }

    #[test]
    fn eviction_is_oldest_first() {
        let mut mem = ReplayMemory::new(5);
        for i in 0..8 {
            mem.push(tuple(i as f64, false));
        }
        assert_eq!(mem.len(), 5);
        let kept: Vec<f64> = (0..5).map(|i| mem.get(i).r).collect();
        assert_eq!(kept, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn exploring_index_survives_eviction() {
        let mut mem = ReplayMemory::new(4);
        // Exploring tuples at 0, 2, 4, 6; capacity keeps the last four.
        for i in 0..8 {
            mem.push(tuple(i as f64, i % 2 == 0));
        }
        assert_eq!(mem.num_exploring(), 2);
        let mut rng = rng_from_seed(0);
        let picked = mem.sample_exploring(&mut rng, 2);
        let mut rs: Vec<f64> = picked.iter().map(|t| t.r).collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, vec![4.0, 6.0]);
        assert!(picked.iter().all(|t| t.exploring));
    }

    #[test]
    fn samples_are_distinct() {
        let mut mem = ReplayMemory::new(100);
        for i in 0..50 {
            mem.push(tuple(i as f64, true));
        }
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let batch = mem.sample(&mut rng, 32);
            let mut rs: Vec<f64> = batch.iter().map(|t| t.r).collect();
            rs.sort_by(f64::total_cmp);
            rs.dedup();
            assert_eq!(rs.len(), 32);
        }
    }

    #[test]
    fn capacity_is_never_exceeded() {
        let mut mem = ReplayMemory::new(16);
        for i in 0..1000 {
            mem.push(tuple(i as f64, i % 3 == 0));
            assert!(mem.len() <= 16);
            assert!(mem.num_exploring() <= 16);
        }
        // Every surviving exploring id must still point at an exploring tuple.
        let mut rng = rng_from_seed(2);
        let all = mem.sample_exploring(&mut rng, mem.num_exploring());
        assert!(all.iter().all(|t| t.exploring));
    }
}
