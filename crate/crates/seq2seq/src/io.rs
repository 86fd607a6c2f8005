//! Corpus, vocabulary and checkpoint files.

use std::fs;
use std::path::Path;

use seq2seq_core::checkpoint::{decode_checkpoint, encode_checkpoint, peek_precision, Checkpoint};
use seq2seq_core::corpus::{build_vocab, parse_parallel, ParsedCorpus, Vocabulary};
use seq2seq_core::model::Seq2SeqModel;
use seq2seq_core::training::TrainingProgress;
use seq2seq_core::{Precision, Real};

use crate::error::{AppError, AppResult};

pub fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

/// Writes one line per item, each terminated by a newline.
pub fn write_lines<S: AsRef<str>>(path: &Path, lines: impl IntoIterator<Item = S>) -> AppResult<()> {
    let mut text = String::new();
    for line in lines {
        text.push_str(line.as_ref());
        text.push('\n');
    }
    write_text(path, &text)
}

/// Whitespace-separated tokens of every line.
pub fn read_token_lines(path: &Path) -> AppResult<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

pub fn load_vocab(path: &Path) -> AppResult<Vocabulary> {
    Vocabulary::from_text(&read_text(path)?).map_err(|e| AppError::in_file(path, e))
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> AppResult<()> {
    write_text(path, &vocab.to_text())
}

/// Vocabulary of at most `max_size` entries built from a tokenised text file.
pub fn vocab_from_file(path: &Path, max_size: usize) -> AppResult<Vocabulary> {
    let text = read_text(path)?;
    Ok(build_vocab(text.split_whitespace(), max_size))
}

/// Pairs line `i` of both files. Lines with an empty source are dropped and
/// counted in the result.
pub fn load_parallel_corpus(
    src_path: &Path,
    tgt_path: &Path,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> AppResult<ParsedCorpus> {
    let src = read_text(src_path)?;
    let tgt = read_text(tgt_path)?;
    parse_parallel(&src, &tgt, src_vocab, tgt_vocab).map_err(|e| AppError::in_file(src_path, e))
}

pub fn save_checkpoint<T: Real>(model: &Seq2SeqModel<T>, progress: &TrainingProgress, path: &Path) -> AppResult<()> {
    let bytes = encode_checkpoint(model, progress)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> AppResult<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| AppError::in_file(path, e))
}

pub fn checkpoint_precision(path: &Path) -> AppResult<Precision> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    peek_precision(&bytes).map_err(|e| AppError::in_file(path, e))
}
