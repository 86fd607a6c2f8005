//! Binary checkpoint codec.
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! "S2S1"
//! metadata length, metadata (UTF-8 `key=value` lines)
//! per tensor, canonical order: rank (2), rows, cols, rows*cols IEEE-754 LE values
//! source vocabulary length, source vocabulary text
//! target vocabulary length, target vocabulary text
//! ```
//!
//! Metadata keys: `format_version`, `precision`, the model config fields,
//! `src_vocab_sha256`, `tgt_vocab_sha256`, `epoch`, `step`, `lr`,
//! `tensor_count`. Floats are written in shortest round-trip form, so a
//! decode reproduces every value bit for bit.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, Seq2SeqModel};
use crate::numerics::{Matrix, Parameters, Precision, Real};
use crate::training::TrainingProgress;

pub const MAGIC: &[u8; 4] = b"S2S1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Seq2SeqModel<T>,
    pub progress: TrainingProgress,
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(alloc::format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_block(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    push_u32(out, bytes.len())?;
    out.extend_from_slice(bytes);
    Ok(())
}

fn metadata<T: Real>(model: &Seq2SeqModel<T>, progress: &TrainingProgress) -> String {
    let c = &model.config;
    let fields: [(&str, String); 16] = [
        ("format_version", FORMAT_VERSION.to_string()),
        ("precision", T::PRECISION.name().to_string()),
        ("layers", c.layers.to_string()),
        ("hidden", c.hidden.to_string()),
        ("embed", c.embed.to_string()),
        ("src_vocab_size", c.src_vocab_size.to_string()),
        ("tgt_vocab_size", c.tgt_vocab_size.to_string()),
        ("peepholes", c.peepholes.to_string()),
        ("reverse_source", c.reverse_source.to_string()),
        ("source_eos", c.source_eos.to_string()),
        ("src_vocab_sha256", model.src_vocab.content_hash()),
        ("tgt_vocab_sha256", model.tgt_vocab.content_hash()),
        ("epoch", alloc::format!("{}", progress.epoch)),
        ("step", progress.step.to_string()),
        ("lr", alloc::format!("{}", progress.lr)),
        ("tensor_count", model.params.tensors().len().to_string()),
    ];
    let mut text = String::new();
    for (k, v) in fields {
        text.push_str(k);
        text.push('=');
        text.push_str(&v);
        text.push('\n');
    }
    text
}

pub fn encode_checkpoint<T: Real>(model: &Seq2SeqModel<T>, progress: &TrainingProgress) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_block(&mut out, metadata(model, progress).as_bytes())?;
    for t in model.params.tensors() {
        push_u32(&mut out, 2)?;
        push_u32(&mut out, t.rows())?;
        push_u32(&mut out, t.cols())?;
        for &v in t.as_slice() {
            v.write_le(&mut out);
        }
    }
    push_block(&mut out, model.src_vocab.to_text().as_bytes())?;
    push_block(&mut out, model.tgt_vocab.to_text().as_bytes())?;
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format(alloc::format!("truncated checkpoint while reading {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)?;
        core::str::from_utf8(self.take(n, what)?).map_err(|_| Error::Format(alloc::format!("{what} is not UTF-8")))
    }
}

struct Meta<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Meta<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(alloc::format!("malformed metadata line {line:?}")))?;
            map.insert(k, v);
        }
        Ok(Self(map))
    }

    fn get<V: FromStr>(&self, key: &str) -> Result<V> {
        let raw = self
            .0
            .get(key)
            .ok_or_else(|| Error::Format(alloc::format!("metadata lacks {key}")))?;
        raw.parse()
            .map_err(|_| Error::Format(alloc::format!("bad metadata value {key}={raw}")))
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| Error::Format(alloc::format!("metadata lacks {key}")))
    }
}

fn read_header(bytes: &[u8]) -> Result<(Reader<'_>, Meta<'_>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic bytes)".to_string()));
    }
    let meta = Meta::parse(r.text("metadata")?)?;
    let version: u32 = meta.get("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(alloc::format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    Ok((r, meta))
}

/// Precision of the stored parameters.
pub fn peek_precision(bytes: &[u8]) -> Result<Precision> {
    let (_, meta) = read_header(bytes)?;
    let name = meta.raw("precision")?;
    Precision::from_name(name).ok_or_else(|| Error::Format(alloc::format!("unknown precision {name}")))
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let (mut r, meta) = read_header(bytes)?;
    let stored = meta.raw("precision")?;
    if stored != T::PRECISION.name() {
        return Err(Error::Format(alloc::format!(
            "checkpoint holds {stored} parameters, {} requested",
            T::PRECISION.name()
        )));
    }
    let mut config = ModelConfig::new(
        meta.get("layers")?,
        meta.get("hidden")?,
        meta.get("embed")?,
        meta.get("src_vocab_size")?,
        meta.get("tgt_vocab_size")?,
    );
    config.peepholes = meta.get("peepholes")?;
    config.reverse_source = meta.get("reverse_source")?;
    config.source_eos = meta.get("source_eos")?;
    config.validate().map_err(|e| Error::Format(alloc::format!("invalid stored config: {e}")))?;

    let mut params = ModelParams::<T>::zeros(&config);
    let count: usize = meta.get("tensor_count")?;
    let expected = params.tensors().len();
    if count != expected {
        return Err(Error::Format(alloc::format!(
            "checkpoint has {count} tensors, config implies {expected}"
        )));
    }
    for (i, t) in params.tensors_mut().into_iter().enumerate() {
        let rank = r.u32("tensor rank")?;
        let rows = r.u32("tensor rows")?;
        let cols = r.u32("tensor cols")?;
        if rank != 2 || (rows, cols) != t.shape() {
            return Err(Error::Format(alloc::format!(
                "tensor {i} has rank {rank} shape {rows}x{cols}, expected 2 and {}x{}",
                t.rows(),
                t.cols()
            )));
        }
        let raw = r.take(rows * cols * T::BYTES, "tensor values")?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        *t = Matrix::new(rows, cols, data)?;
    }
    let src_vocab = Vocabulary::from_text(r.text("source vocabulary")?)?;
    let tgt_vocab = Vocabulary::from_text(r.text("target vocabulary")?)?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".to_string()));
    }
    if src_vocab.content_hash() != meta.raw("src_vocab_sha256")? {
        return Err(Error::Format("source vocabulary hash mismatch".to_string()));
    }
    if tgt_vocab.content_hash() != meta.raw("tgt_vocab_sha256")? {
        return Err(Error::Format("target vocabulary hash mismatch".to_string()));
    }
    let progress = TrainingProgress {
        epoch: meta.get("epoch")?,
        step: meta.get("step")?,
        lr: meta.get("lr")?,
    };
    let mut model = Seq2SeqModel::zeros(config, src_vocab, tgt_vocab)
        .map_err(|e| Error::Format(alloc::format!("stored vocabularies disagree with config: {e}")))?;
    model.params = params;
    Ok(Checkpoint { model, progress })
}
