//! Deterministic toy tasks: copy, reverse, and a toy translation that maps
//! every word through a fixed bijection and reorders words inside small
//! windows, keeping the alignment roughly monotone.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{build_vocab, parse_parallel, ParallelCorpus, SentencePair, RESERVED};
use crate::error::{Error, Result};
use crate::rng::{mix64, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    ToyTranslate,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::ToyTranslate => "toy_translate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "copy" => Some(TaskKind::Copy),
            "reverse" => Some(TaskKind::Reverse),
            "toy_translate" | "toy-translate" => Some(TaskKind::ToyTranslate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub task: TaskKind,
    /// Number of distinct source words.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub num_pairs: usize,
    pub seed: u64,
    /// Window inside which toy_translate reverses word order; 1 keeps order.
    pub reorder_window: usize,
}

impl TaskSpec {
    pub fn new(task: TaskKind, vocab_size: usize, min_len: usize, max_len: usize, num_pairs: usize, seed: u64) -> Self {
        Self {
            task,
            vocab_size,
            min_len,
            max_len,
            num_pairs,
            seed,
            reorder_window: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".to_string()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(alloc::format!(
                "need 1 <= min_len <= max_len, got {}..{}",
                self.min_len,
                self.max_len
            )));
        }
        if self.reorder_window == 0 {
            return Err(Error::Config("reorder_window must be at least 1".to_string()));
        }
        let mut capacity: u128 = 0;
        for len in self.min_len..=self.max_len {
            capacity = capacity.saturating_add((self.vocab_size as u128).saturating_pow(len as u32));
        }
        if capacity < 2 * self.num_pairs as u128 {
            return Err(Error::Config(alloc::format!(
                "only {capacity} distinct sources exist; too few for {} distinct pairs",
                self.num_pairs
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub heldout: bool,
}

/// Generated pairs in generation order, each tagged train or held-out.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub pairs: Vec<TextPair>,
}

pub fn source_word(i: usize) -> String {
    alloc::format!("a{i}")
}

fn target_word(i: usize) -> String {
    alloc::format!("b{i}")
}

/// The toy_translate word map: source word `i` becomes `b{map[i]}`.
pub fn word_map(spec: &TaskSpec) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..spec.vocab_size).collect();
    perm.shuffle(&mut seeded(mix64(spec.seed ^ 0x746f_795f_6d61_70)));
    perm
}

/// Position order of toy_translate targets: reversal inside consecutive
/// windows of `window` positions.
pub fn window_order(len: usize, window: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(len);
    let mut start = 0;
    while start < len {
        let end = (start + window).min(len);
        order.extend((start..end).rev());
        start = end;
    }
    order
}

/// Held-out membership of pair `index`: about one pair in ten.
pub fn is_heldout(seed: u64, index: usize) -> bool {
    mix64(mix64(seed) ^ index as u64) % 10 == 0
}

/// Generates `num_pairs` pairs with distinct sources.
pub fn generate(spec: &TaskSpec) -> Result<TaskData> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let map = word_map(spec);
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(spec.num_pairs);
    while pairs.len() < spec.num_pairs {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.vocab_size)).collect();
        if !seen.insert(ids.clone()) {
            continue;
        }
        let target: Vec<String> = match spec.task {
            TaskKind::Copy => ids.iter().map(|&i| source_word(i)).collect(),
            TaskKind::Reverse => ids.iter().rev().map(|&i| source_word(i)).collect(),
            TaskKind::ToyTranslate => window_order(len, spec.reorder_window)
                .into_iter()
                .map(|p| target_word(map[ids[p]]))
                .collect(),
        };
        let index = pairs.len();
        pairs.push(TextPair {
            source: ids.iter().map(|&i| source_word(i)).collect(),
            target,
            heldout: is_heldout(spec.seed, index),
        });
    }
    Ok(TaskData { spec: spec.clone(), pairs })
}

impl TaskData {
    pub fn train(&self) -> impl Iterator<Item = &TextPair> {
        self.pairs.iter().filter(|p| !p.heldout)
    }

    pub fn heldout(&self) -> impl Iterator<Item = &TextPair> {
        self.pairs.iter().filter(|p| p.heldout)
    }

    /// Vocabularies built from the training side, the training corpus and the
    /// held-out pairs encoded with the same vocabularies.
    pub fn corpora(&self) -> Result<(ParallelCorpus, Vec<SentencePair>)> {
        let max = self.spec.vocab_size + RESERVED;
        let src_vocab = build_vocab(self.train().flat_map(|p| p.source.iter().map(String::as_str)), max);
        let tgt_vocab = build_vocab(self.train().flat_map(|p| p.target.iter().map(String::as_str)), max);
        let (src, tgt) = lines(self.train());
        let train = parse_parallel(&src, &tgt, &src_vocab, &tgt_vocab)?.corpus;
        let (src, tgt) = lines(self.heldout());
        let heldout = parse_parallel(&src, &tgt, &src_vocab, &tgt_vocab)?.corpus.pairs;
        Ok((train, heldout))
    }
}

/// Source and target texts, one sentence per line.
pub fn lines<'a>(pairs: impl Iterator<Item = &'a TextPair>) -> (String, String) {
    let (mut src, mut tgt) = (String::new(), String::new());
    for p in pairs {
        src.push_str(&p.source.join(" "));
        src.push('\n');
        tgt.push_str(&p.target.join(" "));
        tgt.push('\n');
    }
    (src, tgt)
}
