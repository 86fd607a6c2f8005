//! Left-to-right beam search over one model or an ensemble, and n-best
//! rescoring.
//!
//! Scores are raw cumulative log-probabilities with no length normalisation.
//! An ensemble combines members per step by the arithmetic mean of their
//! log-probabilities.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{SentencePair, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::Seq2SeqModel;
use crate::numerics::{Matrix, Real};
use crate::recurrent::StackState;

/// A finished beam entry. `tokens` ends with EOS.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<T> {
    pub tokens: Vec<usize>,
    pub logprob: T,
}

impl<T> Hypothesis<T> {
    /// The tokens without the closing EOS.
    pub fn words(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

/// Decoding bound used when none is given: `2·|source| + 10`.
pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 10
}

/// Checks that the models can be combined: at least one model and identical
/// source and target vocabularies.
pub fn check_ensemble<T>(models: &[&Seq2SeqModel<T>]) -> Result<()> {
    let Some(first) = models.first() else {
        return Err(Error::Config("no models given".to_string()));
    };
    for (k, m) in models.iter().enumerate().skip(1) {
        if m.tgt_vocab != first.tgt_vocab {
            return Err(Error::Config(alloc::format!("model {k} has a different target vocabulary")));
        }
        if m.src_vocab != first.src_vocab {
            return Err(Error::Config(alloc::format!("model {k} has a different source vocabulary")));
        }
    }
    Ok(())
}

/// Advances every member one step. `states[k]` holds member `k`'s decoder
/// states, one column per hypothesis. Returns the combined `B x V` row block
/// `(1/K)·Σ_k logp_k` and the members' new states.
pub fn ensemble_step_logprobs<T: Real>(
    models: &[&Seq2SeqModel<T>],
    states: &[StackState<T>],
    prev_tokens: &[usize],
) -> Result<(Matrix<T>, Vec<StackState<T>>)> {
    check_ensemble(models)?;
    if states.len() != models.len() {
        return Err(Error::Config(alloc::format!(
            "{} state sets for {} models",
            states.len(),
            models.len()
        )));
    }
    let mut combined: Option<Matrix<T>> = None;
    let mut next = Vec::with_capacity(models.len());
    for (model, st) in models.iter().zip(states) {
        let (s, logp) = model.decoder_step(st, prev_tokens)?;
        match combined.as_mut() {
            None => combined = Some(logp),
            Some(acc) => acc.add_assign(&logp)?,
        }
        next.push(s);
    }
    let mut combined = combined.expect("at least one model");
    if models.len() > 1 {
        let k = T::cast(models.len() as f64);
        for v in combined.as_mut_slice() {
            *v = *v / k;
        }
    }
    Ok((combined, next))
}

struct Partial<T> {
    tokens: Vec<usize>,
    logprob: T,
    /// Column of this hypothesis in the previous step's state block.
    column: usize,
}

/// Beam search for `argmax_T p(T | source)`.
///
/// Each step extends every partial hypothesis by every target word except
/// PAD. Candidates are ranked by cumulative log-probability; walking down the
/// ranking, candidates ending in EOS move to the complete set without taking a
/// beam slot, until `beam` partials are kept. The search stops when no
/// partial is left, when the best partial scores below the best complete
/// hypothesis, or when partials reach `max_len` words, in which case they
/// are closed with their EOS probability. Returns complete hypotheses, best
/// first.
pub fn beam_search<T: Real>(
    models: &[&Seq2SeqModel<T>],
    source: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis<T>>> {
    check_ensemble(models)?;
    if beam == 0 {
        return Err(Error::Config("beam size must be at least 1".to_string()));
    }
    let vocab = models[0].config.tgt_vocab_size;
    let mut states: Vec<StackState<T>> = models
        .iter()
        .map(|m| m.encode_default(source))
        .collect::<Result<_>>()?;
    let mut beam_set = alloc::vec![Partial {
        tokens: Vec::new(),
        logprob: T::zero(),
        column: 0,
    }];
    let mut complete: Vec<Hypothesis<T>> = Vec::new();

    loop {
        let prev: Vec<usize> = beam_set.iter().map(|p| p.tokens.last().copied().unwrap_or(EOS)).collect();
        let cols: Vec<usize> = beam_set.iter().map(|p| p.column).collect();
        let current: Vec<StackState<T>> = states.iter().map(|s| s.select_columns(&cols)).collect();
        let (logp, next_states) = ensemble_step_logprobs(models, &current, &prev)?;

        if beam_set[0].tokens.len() >= max_len {
            for (j, p) in beam_set.iter().enumerate() {
                let mut tokens = p.tokens.clone();
                tokens.push(EOS);
                complete.push(Hypothesis {
                    tokens,
                    logprob: p.logprob + logp.get(j, EOS),
                });
            }
            break;
        }

        let mut candidates: Vec<(T, usize, usize)> = Vec::with_capacity(beam_set.len() * vocab);
        for (j, p) in beam_set.iter().enumerate() {
            for w in (0..vocab).filter(|&w| w != PAD) {
                candidates.push((p.logprob + logp.get(j, w), j, w));
            }
        }
        candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));

        let mut survivors = Vec::with_capacity(beam);
        for (score, j, w) in candidates {
            if survivors.len() == beam {
                break;
            }
            let mut tokens = beam_set[j].tokens.clone();
            tokens.push(w);
            if w == EOS {
                complete.push(Hypothesis { tokens, logprob: score });
            } else {
                survivors.push(Partial {
                    tokens,
                    logprob: score,
                    column: j,
                });
            }
        }
        states = next_states;
        beam_set = survivors;
        let best_complete = complete.iter().map(|h| h.logprob).fold(T::neg_infinity(), T::max);
        match beam_set.first() {
            None => break,
            Some(best) if best.logprob < best_complete => break,
            Some(_) => {}
        }
    }
    complete.sort_by(|a, b| b.logprob.partial_cmp(&a.logprob).unwrap_or(core::cmp::Ordering::Equal));
    Ok(complete)
}

/// Best hypothesis of [`beam_search`].
pub fn translate<T: Real>(
    models: &[&Seq2SeqModel<T>],
    source: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis<T>> {
    beam_search(models, source, beam, max_len)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Input("beam search produced no hypothesis".to_string()))
}

/// One line of an n-best list.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestEntry {
    pub sentence_id: usize,
    pub tokens: Vec<String>,
    pub smt_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescoredEntry {
    pub entry: NBestEntry,
    /// Mean member `log p(tokens | source)`.
    pub lstm_logprob: f64,
    /// `(1 − weight)·smt_score + weight·lstm_logprob`.
    pub final_score: f64,
}

/// Interpolates each entry's baseline score with the ensemble log-probability
/// and re-ranks within each sentence. Sentences come out in ascending id
/// order; ties keep their input order. `sources[id]` is the source of
/// sentence `id`.
pub fn rescore_nbest<T: Real>(
    models: &[&Seq2SeqModel<T>],
    sources: &[Vec<usize>],
    entries: &[NBestEntry],
    weight: f64,
) -> Result<Vec<RescoredEntry>> {
    check_ensemble(models)?;
    let mut groups: BTreeMap<usize, Vec<&NBestEntry>> = BTreeMap::new();
    for e in entries {
        if e.sentence_id >= sources.len() {
            return Err(Error::Input(alloc::format!("no source for sentence {}", e.sentence_id)));
        }
        groups.entry(e.sentence_id).or_default().push(e);
    }
    let tgt_vocab = &models[0].tgt_vocab;
    let k = models.len() as f64;
    let mut out = Vec::with_capacity(entries.len());
    for (id, group) in groups {
        let pairs: Vec<SentencePair> = group
            .iter()
            .map(|e| SentencePair::new(sources[id].clone(), tgt_vocab.encode(e.tokens.iter().map(String::as_str))))
            .collect();
        let mut sums = alloc::vec![0.0f64; pairs.len()];
        for m in models {
            for (s, lp) in sums.iter_mut().zip(m.score_batch(&pairs)?) {
                *s += lp.as_f64();
            }
        }
        let mut rescored: Vec<RescoredEntry> = group
            .into_iter()
            .zip(sums)
            .map(|(e, s)| {
                let lstm_logprob = s / k;
                RescoredEntry {
                    entry: e.clone(),
                    lstm_logprob,
                    final_score: (1.0 - weight) * e.smt_score + weight * lstm_logprob,
                }
            })
            .collect();
        rescored.sort_by(|a, b| {
            b.final_score
                .partial_cmp(&a.final_score)
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        out.extend(rescored);
    }
    Ok(out)
}
