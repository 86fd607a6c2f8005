//! Vocabularies and parallel corpora.
//!
//! Ids are assigned in canonical order: the three reserved tokens first, then
//! tokens by descending training frequency with lexicographic tie-breaking.
//! The text form of a vocabulary is that order, one token per line.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const RESERVED: usize = 3;

pub const UNK_TOKEN: &str = "UNK";
pub const EOS_TOKEN: &str = "<EOS>";
pub const PAD_TOKEN: &str = "<PAD>";

/// Bijective token/id mapping. Unknown strings look up as [`UNK`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an explicit token list. The list must start with the
    /// reserved tokens and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let reserved = [UNK_TOKEN, EOS_TOKEN, PAD_TOKEN];
        if tokens.len() < RESERVED || tokens.iter().zip(reserved).any(|(t, r)| t != r) {
            return Err(Error::Input(
                "vocabulary must begin with UNK, <EOS>, <PAD>".to_string(),
            ));
        }
        let mut index = BTreeMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Input(alloc::format!("invalid vocabulary token at line {}", id + 1)));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Input(alloc::format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self::from_tokens([UNK_TOKEN, EOS_TOKEN, PAD_TOKEN].map(String::from).to_vec())
            .expect("reserved tokens form a valid vocabulary")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        words.into_iter().map(|w| self.lookup(w)).collect()
    }

    /// Maps ids back to strings; EOS and PAD are dropped, out-of-range ids
    /// become UNK.
    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter()
            .filter(|&&id| id != EOS && id != PAD)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect()
    }

    /// Frequency rank per id, 1 for the most frequent real token. Reserved
    /// ids (UNK in particular) get rank `len()`.
    pub fn frequency_ranks(&self) -> Vec<usize> {
        (0..self.len())
            .map(|id| if id < RESERVED { self.len() } else { id - RESERVED + 1 })
            .collect()
    }

    /// One token per line, canonical order, trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(String::from).collect())
    }

    /// Hex SHA-256 of [`Vocabulary::to_text`].
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest.iter() {
            out.push_str(&alloc::format!("{byte:02x}"));
        }
        out
    }
}

/// Keeps the `max_size - 3` most frequent tokens of the stream (ties broken
/// lexicographically) after the reserved tokens.
pub fn build_vocab<'a>(tokens: impl IntoIterator<Item = &'a str>, max_size: usize) -> Vocabulary {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in tokens {
        if matches!(tok, UNK_TOKEN | EOS_TOKEN | PAD_TOKEN) {
            continue;
        }
        *counts.entry(tok).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is lexicographic; a stable sort keeps that order among ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let room = max_size.saturating_sub(RESERVED);
    let mut list: Vec<String> = [UNK_TOKEN, EOS_TOKEN, PAD_TOKEN].map(String::from).to_vec();
    list.extend(ranked.into_iter().take(room).map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(list).expect("built vocabulary is well formed")
}

/// Source/target id sequences, neither carrying EOS.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl SentencePair {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Self {
        Self { source, target }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
}

/// Line-aligned parse of two tokenised texts.
#[derive(Clone, Debug)]
pub struct ParsedCorpus {
    pub corpus: ParallelCorpus,
    /// Lines dropped because their source side was empty.
    pub dropped_empty: usize,
}

/// Pairs line `i` of `source_text` with line `i` of `target_text`. Tokens are
/// whitespace separated; unknown tokens map to UNK.
pub fn parse_parallel(
    source_text: &str,
    target_text: &str,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<ParsedCorpus> {
    let src_lines: Vec<&str> = source_text.lines().collect();
    let tgt_lines: Vec<&str> = target_text.lines().collect();
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Alignment {
            source_lines: src_lines.len(),
            target_lines: tgt_lines.len(),
        });
    }
    let mut pairs = Vec::with_capacity(src_lines.len());
    let mut dropped_empty = 0;
    for (s, t) in src_lines.iter().zip(&tgt_lines) {
        let source = src_vocab.encode(s.split_whitespace());
        if source.is_empty() {
            dropped_empty += 1;
            continue;
        }
        pairs.push(SentencePair::new(source, tgt_vocab.encode(t.split_whitespace())));
    }
    Ok(ParsedCorpus {
        corpus: ParallelCorpus {
            pairs,
            src_vocab: src_vocab.clone(),
            tgt_vocab: tgt_vocab.clone(),
        },
        dropped_empty,
    })
}
