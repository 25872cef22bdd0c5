use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, embed_text};
use super::scene::SceneText;
use super::{Directive, SlowError};

pub const DEFAULT_MEMORY_CAP: usize = 10_000;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub scene: SceneText,
    /// Unit-norm embedding of `scene.text`.
    pub embedding: Vec<f64>,
    pub directive: Directive,
    /// -1 collision, 0 collision-free, +1 collision-free and adhered.
    pub outcome: f64,
    /// Seconds.
    pub timestamp: f64,
}

/// Score of a finished episode.
pub fn outcome_score(collided: bool, adhered: bool) -> f64 {
    match (collided, adhered) {
        (true, _) => -1.0,
        (false, true) => 1.0,
        (false, false) => 0.0,
    }
}

/// A retrieval hit: position in the bank (0 = oldest) and cosine score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub score: f64,
}

/// Bounded bank of past decisions; the oldest entry is evicted at capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    entries: VecDeque<MemoryEntry>,
    cap: usize,
}

impl Default for MemoryBank {
    fn default() -> Self {
        MemoryBank::with_capacity(DEFAULT_MEMORY_CAP)
    }
}

impl MemoryBank {
    pub fn with_capacity(cap: usize) -> Self {
        MemoryBank { entries: VecDeque::new(), cap: cap.max(1) }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn get(&self, index: usize) -> Option<&MemoryEntry> {
        self.entries.get(index)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &MemoryEntry> + ExactSizeIterator {
        self.entries.iter()
    }

    /// Append an entry; returns the evicted one, if any.
    pub fn push(&mut self, entry: MemoryEntry) -> Option<MemoryEntry> {
        let evicted = if self.entries.len() >= self.cap { self.entries.pop_front() } else { None };
        self.entries.push_back(entry);
        evicted
    }

    /// Record a decision and how its episode ended.
    pub fn write(
        &mut self,
        scene: SceneText,
        directive: Directive,
        outcome: f64,
        timestamp: f64,
    ) -> Result<&MemoryEntry, SlowError> {
        let embedding = embed_text(&scene.text)?;
        self.push(MemoryEntry { scene, embedding, directive, outcome, timestamp });
        Ok(self.entries.back().expect("just pushed"))
    }

    /// Top-`k` entries by cosine similarity to `query`, newest first on ties.
    pub fn retrieve(&self, query: &SceneText, k: usize) -> Result<Vec<Hit>, SlowError> {
        if self.entries.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = embed_text(&query.text)?;
        let mut hits: Vec<Hit> =
            self.entries.iter().enumerate().map(|(index, e)| Hit { index, score: cosine(&q, &e.embedding) }).collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(b.index.cmp(&a.index)));
        hits.truncate(k);
        Ok(hits)
    }
}

impl FromIterator<MemoryEntry> for MemoryBank {
    fn from_iter<I: IntoIterator<Item = MemoryEntry>>(iter: I) -> Self {
        let mut bank = MemoryBank::default();
        iter.into_iter().for_each(|e| {
            bank.push(e);
        });
        bank
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_scenario, ScenarioConfig};
    use crate::slow::encode_scene;

    fn scene(seed: u64) -> SceneText {
        encode_scene(&build_scenario(&ScenarioConfig::highway(seed)).unwrap())
    }

    #[test]
    fn self_similarity_first() {
        let mut bank = MemoryBank::default();
        for s in 0..10 {
            bank.write(scene(s), Directive::neutral(2), 0.0, s as f64).unwrap();
        }
        let hits = bank.retrieve(&scene(4), 3).unwrap();
        assert_eq!(hits.len(), 3);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert_eq!(bank.get(hits[0].index).unwrap().scene, scene(4));
    }

    #[test]
    fn ties_prefer_newest() {
        let mut bank = MemoryBank::default();
        for t in 0..4 {
            bank.write(scene(1), Directive::neutral(t), 1.0, t as f64).unwrap();
        }
        let hits = bank.retrieve(&scene(1), 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.index).collect::<Vec<_>>(), [3, 2]);
    }

    #[test]
    fn empty_bank() {
        assert!(MemoryBank::default().retrieve(&scene(0), 3).unwrap().is_empty());
    }

    #[test]
    fn eviction_at_cap() {
        let mut bank = MemoryBank::with_capacity(3);
        for t in 0..3 {
            bank.write(scene(t), Directive::neutral(0), 0.0, t as f64).unwrap();
        }
        bank.write(scene(9), Directive::neutral(0), 0.0, 9.0).unwrap();
        assert_eq!(bank.len(), 3);
        assert_eq!(bank.get(0).unwrap().timestamp, 1.0);
        assert_eq!(bank.get(2).unwrap().timestamp, 9.0);
    }

    #[test]
    fn scoring_rule() {
        assert_eq!(outcome_score(true, true), -1.0);
        assert_eq!(outcome_score(false, true), 1.0);
        assert_eq!(outcome_score(false, false), 0.0);
    }
}
