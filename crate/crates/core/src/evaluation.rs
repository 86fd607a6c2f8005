//! Corpus BLEU, perplexity and bucketed BLEU breakdowns.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::model::Seq2SeqModel;
use crate::numerics::Real;

/// Pooled n-gram statistics and the resulting score.
#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// In `[0, 100]`.
    pub bleu: f64,
    /// Modified precision per order, `matches[n] / totals[n]` (0 when the
    /// hypotheses have no n-grams of that order).
    pub precisions: Vec<f64>,
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
}

fn ngram_counts<S: Ord>(words: &[S], n: usize) -> BTreeMap<&[S], usize> {
    let mut counts = BTreeMap::new();
    if words.len() >= n {
        for gram in words.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU against one reference per hypothesis, case-sensitive,
/// without smoothing. Counts are pooled over the corpus before division.
pub fn corpus_bleu<S, H, R>(hypotheses: &[H], references: &[R], max_n: usize) -> Result<BleuReport>
where
    S: Ord,
    H: AsRef<[S]>,
    R: AsRef<[S]>,
{
    if hypotheses.len() != references.len() {
        return Err(Error::Input(alloc::format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Input("max_n must be at least 1".to_string()));
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_length, mut ref_length) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_length += h.len();
        ref_length += r.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(r, n);
            for (gram, count) in ngram_counts(h, n) {
                totals[n - 1] += count;
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
    }
    let precisions: Vec<f64> = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let brevity_penalty = if hyp_length == 0 {
        0.0
    } else if hyp_length < ref_length {
        Float::exp(1.0 - ref_length as f64 / hyp_length as f64)
    } else {
        1.0
    };
    let bleu = if precisions.iter().any(|&p| p == 0.0) || brevity_penalty == 0.0 {
        0.0
    } else {
        let mean_log = precisions.iter().map(|&p| Float::ln(p)).sum::<f64>() / max_n as f64;
        100.0 * brevity_penalty * Float::exp(mean_log)
    };
    Ok(BleuReport {
        bleu,
        precisions,
        matches,
        totals,
        brevity_penalty,
        hyp_length,
        ref_length,
    })
}

/// `exp(-Σ log p(T|S) / Σ (|T| + 1))`; EOS counts as a predicted token. An
/// ensemble scores each pair with the mean member log-probability.
pub fn perplexity<T: Real>(models: &[&Seq2SeqModel<T>], corpus: &[SentencePair]) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::Config("no models given".to_string()));
    }
    if corpus.is_empty() {
        return Err(Error::Input("perplexity of an empty corpus".to_string()));
    }
    let k = models.len() as f64;
    let mut total_lp = 0.0;
    for chunk in corpus.chunks(64) {
        let mut sums = vec![0.0f64; chunk.len()];
        for model in models {
            for (s, lp) in sums.iter_mut().zip(model.score_batch(chunk)?) {
                *s += lp.as_f64();
            }
        }
        total_lp += sums.iter().map(|s| s / k).sum::<f64>();
    }
    let tokens: usize = corpus.iter().map(|p| p.target.len() + 1).sum();
    Ok(Float::exp(-total_lp / tokens as f64))
}

/// One slice of a bucketed breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketReport {
    /// Smallest and largest sort key inside the bucket.
    pub key_min: f64,
    pub key_max: f64,
    pub sentences: usize,
    pub report: BleuReport,
}

/// Stable-sorts sentence indices by `keys` and splits them into
/// `min(num_buckets, n)` equal-count buckets; the first `n % buckets` get one
/// extra sentence.
fn bucketed<S, H, R>(hyps: &[H], refs: &[R], keys: Vec<f64>, num_buckets: usize) -> Result<Vec<BucketReport>>
where
    S: Ord,
    H: AsRef<[S]>,
    R: AsRef<[S]>,
{
    if num_buckets == 0 {
        return Err(Error::Input("num_buckets must be at least 1".to_string()));
    }
    if hyps.len() != refs.len() || keys.len() != hyps.len() {
        return Err(Error::Input(alloc::format!(
            "misaligned inputs: {} hypotheses, {} references, {} sources",
            hyps.len(),
            refs.len(),
            keys.len()
        )));
    }
    let n = hyps.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let buckets = num_buckets.min(n);
    let mut out = Vec::with_capacity(buckets);
    let mut start = 0;
    for b in 0..buckets {
        let size = n / buckets + usize::from(b < n % buckets);
        let idx = &order[start..start + size];
        start += size;
        let h: Vec<&[S]> = idx.iter().map(|&i| hyps[i].as_ref()).collect();
        let r: Vec<&[S]> = idx.iter().map(|&i| refs[i].as_ref()).collect();
        out.push(BucketReport {
            key_min: keys[idx[0]],
            key_max: keys[idx[size - 1]],
            sentences: size,
            report: corpus_bleu(&h, &r, 4)?,
        });
    }
    Ok(out)
}

/// BLEU per bucket of sentences sorted by source length.
pub fn bleu_by_length<S, H, R, Src>(hyps: &[H], refs: &[R], sources: &[Src], num_buckets: usize) -> Result<Vec<BucketReport>>
where
    S: Ord,
    H: AsRef<[S]>,
    R: AsRef<[S]>,
    Src: AsRef<[usize]>,
{
    let keys = sources.iter().map(|s| s.as_ref().len() as f64).collect();
    bucketed(hyps, refs, keys, num_buckets)
}

/// Mean frequency rank of the source ids; ids without a rank count as
/// `ranks.len()`.
pub fn mean_rank(source: &[usize], ranks: &[usize]) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    let total: usize = source.iter().map(|&id| ranks.get(id).copied().unwrap_or(ranks.len())).sum();
    total as f64 / source.len() as f64
}

/// BLEU per bucket of sentences sorted by mean source-token frequency rank.
pub fn bleu_by_rarity<S, H, R, Src>(
    hyps: &[H],
    refs: &[R],
    sources: &[Src],
    ranks: &[usize],
    num_buckets: usize,
) -> Result<Vec<BucketReport>>
where
    S: Ord,
    H: AsRef<[S]>,
    R: AsRef<[S]>,
    Src: AsRef<[usize]>,
{
    let keys = sources.iter().map(|s| mean_rank(s.as_ref(), ranks)).collect();
    bucketed(hyps, refs, keys, num_buckets)
}
