//! N-best lists: one entry per line, `<sentence_id> ||| <tokens> ||| <score>`.

use seq2seq_core::decoding::{NBestEntry, RescoredEntry};
use seq2seq_core::Error;

const SEP: &str = "|||";

pub fn parse_line(line: &str) -> Result<NBestEntry, Error> {
    let fields: Vec<&str> = line.split(SEP).map(str::trim).collect();
    let [id, tokens, score] = fields[..] else {
        return Err(Error::Input(format!("expected 3 `|||`-separated fields in {line:?}")));
    };
    let sentence_id = id
        .parse()
        .map_err(|_| Error::Input(format!("bad sentence id {id:?}")))?;
    let smt_score: f64 = score
        .parse()
        .map_err(|_| Error::Input(format!("bad score {score:?}")))?;
    Ok(NBestEntry {
        sentence_id,
        tokens: tokens.split_whitespace().map(String::from).collect(),
        smt_score,
    })
}

/// Parses every non-blank line; errors carry the 1-based line number.
pub fn parse(text: &str) -> Result<Vec<NBestEntry>, Error> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l).map_err(|e| Error::Input(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Scores use Rust's shortest round-trip float formatting.
pub fn format_entry(entry: &NBestEntry) -> String {
    format!("{} {SEP} {} {SEP} {:?}", entry.sentence_id, entry.tokens.join(" "), entry.smt_score)
}

/// A rescored entry written back in n-best form with its final score.
pub fn format_rescored(r: &RescoredEntry) -> String {
    format_entry(&NBestEntry {
        smt_score: r.final_score,
        ..r.entry.clone()
    })
}
