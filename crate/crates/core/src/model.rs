//! The encoder-decoder: one deep LSTM reads the (optionally reversed) source,
//! its final `(h, c)` of every layer seeds a second, separate deep LSTM that
//! models the target one token at a time through a softmax.
//!
//! The decoder's first input is EOS; afterwards it is fed the previous target
//! token. Every target ends with a predicted EOS, so
//! `log p(T|S) = Σ_{t=1}^{|T|+1} log p(y_t | v, y_<t)` with `y_{|T|+1} = EOS`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{SentencePair, Vocabulary, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_tn, add_matmul_nt, Matrix, Parameters, Real};
use crate::recurrent::{stack_backward, stack_forward, LstmLayer, StackState, StackTrace};

/// Half-width of the uniform initialisation interval.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub peepholes: bool,
    /// Feed the source to the encoder last word first.
    pub reverse_source: bool,
    /// Append EOS to the encoder input (after any reversal).
    pub source_eos: bool,
}

impl ModelConfig {
    pub fn new(layers: usize, hidden: usize, embed: usize, src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        Self {
            layers,
            hidden,
            embed,
            src_vocab_size,
            tgt_vocab_size,
            peepholes: true,
            reverse_source: true,
            source_eos: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("embed", self.embed),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(alloc::format!("{name} must be positive")));
            }
        }
        if self.src_vocab_size <= EOS || self.tgt_vocab_size <= PAD {
            return Err(Error::Config("vocabularies must contain the reserved tokens".into()));
        }
        Ok(())
    }

    /// Length of a sentence representation: `h` and `c` for every layer.
    pub fn summary_dim(&self) -> usize {
        2 * self.layers * self.hidden
    }
}

/// All trainable tensors. Also used, zero-initialised, as a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// `V_src x E`
    pub src_embed: Matrix<T>,
    /// `V_tgt x E`
    pub tgt_embed: Matrix<T>,
    pub encoder: Vec<LstmLayer<T>>,
    pub decoder: Vec<LstmLayer<T>>,
    /// `V_tgt x H`
    pub out_w: Matrix<T>,
    /// `V_tgt x 1`
    pub out_b: Matrix<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let stack = || {
            (0..config.layers)
                .map(|l| {
                    let input = if l == 0 { config.embed } else { config.hidden };
                    LstmLayer::zeros(input, config.hidden, config.peepholes)
                })
                .collect::<Vec<_>>()
        };
        Self {
            src_embed: Matrix::zeros(config.src_vocab_size, config.embed),
            tgt_embed: Matrix::zeros(config.tgt_vocab_size, config.embed),
            encoder: stack(),
            decoder: stack(),
            out_w: Matrix::zeros(config.tgt_vocab_size, config.hidden),
            out_b: Matrix::zeros(config.tgt_vocab_size, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let (vs, e) = self.src_embed.shape();
        let (vt, h) = self.out_w.shape();
        let peep = self.encoder.first().is_some_and(|l| l.peepholes.is_some());
        let mut cfg = ModelConfig::new(self.encoder.len(), h, e, vs, vt);
        cfg.peepholes = peep;
        Self::zeros(&cfg)
    }
}

impl<T: Real> Parameters<T> for ModelParams<T> {
    /// Canonical order: source embeddings, target embeddings, encoder layers
    /// bottom-up, decoder layers bottom-up, output weights, output bias.
    fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = vec![&self.src_embed, &self.tgt_embed];
        for layer in self.encoder.iter().chain(&self.decoder) {
            out.extend(layer.tensors());
        }
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![&mut self.src_embed, &mut self.tgt_embed];
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }
}

/// Encoder-decoder with its vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
}

pub fn reverse_source<U: Clone>(tokens: &[U]) -> Vec<U> {
    tokens.iter().rev().cloned().collect()
}

impl<T: Real> Seq2SeqModel<T> {
    /// All-zero parameters; every softmax is then uniform.
    pub fn zeros(config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        if src_vocab.len() != config.src_vocab_size || tgt_vocab.len() != config.tgt_vocab_size {
            return Err(Error::Config("vocabulary sizes disagree with the model config".into()));
        }
        let params = ModelParams::zeros(&config);
        Ok(Self {
            config,
            params,
            src_vocab,
            tgt_vocab,
        })
    }

    /// Every parameter drawn i.i.d. from `U[-init_range, init_range]` by a
    /// seeded generator, tensors filled in canonical order.
    pub fn init(
        config: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        init_range: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(init_range.is_finite() && init_range > 0.0) {
            return Err(Error::Config("init range must be positive".into()));
        }
        let mut model = Self::zeros(config, src_vocab, tgt_vocab)?;
        let mut rng = crate::rng::seeded(seed);
        let bound = T::cast(init_range);
        for tensor in model.params.tensors_mut() {
            for v in tensor.as_mut_slice() {
                let draw = T::cast(rng.random_range(-init_range..=init_range));
                *v = draw.max(-bound).min(bound);
            }
        }
        Ok(model)
    }

    /// Encoder input ids for one source sentence.
    pub fn encoder_input(&self, source: &[usize], reversed: bool) -> Vec<usize> {
        let mut ids = if reversed { reverse_source(source) } else { source.to_vec() };
        if self.config.source_eos {
            ids.push(EOS);
        }
        ids
    }

    fn check_ids(ids: &[usize], vocab_size: usize, side: &str) -> Result<()> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::Input(alloc::format!(
                "{side} id {bad} outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(())
    }

    /// Embeds column `j` of each step from `ids_per_col`, PAD past each end.
    fn embed_steps(table: &Matrix<T>, ids_per_col: &[&[usize]], steps: usize) -> (Vec<Matrix<T>>, Vec<Vec<usize>>) {
        let batch = ids_per_col.len();
        let e = table.cols();
        let mut xs = Vec::with_capacity(steps);
        let mut tokens = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut x = Matrix::zeros(e, batch);
            let mut toks = Vec::with_capacity(batch);
            for (j, ids) in ids_per_col.iter().enumerate() {
                let id = ids.get(t).copied().unwrap_or(PAD);
                x.set_column(j, table.row(id));
                toks.push(id);
            }
            xs.push(x);
            tokens.push(toks);
        }
        (xs, tokens)
    }

    fn step_masks(lengths: &[usize], steps: usize) -> Option<Vec<Vec<bool>>> {
        if lengths.iter().all(|&l| l == steps) {
            return None;
        }
        Some((0..steps).map(|t| lengths.iter().map(|&l| t < l).collect()).collect())
    }

    /// Runs the encoder over a batch of sources.
    fn encode_batch(&self, sources: &[&[usize]], reversed: bool) -> Result<EncoderPass<T>> {
        let inputs: Vec<Vec<usize>> = sources
            .iter()
            .map(|s| {
                if s.is_empty() {
                    return Err(Error::EmptySource);
                }
                Self::check_ids(s, self.config.src_vocab_size, "source")?;
                Ok(self.encoder_input(s, reversed))
            })
            .collect::<Result<_>>()?;
        let lengths: Vec<usize> = inputs.iter().map(Vec::len).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let refs: Vec<&[usize]> = inputs.iter().map(Vec::as_slice).collect();
        let (xs, tokens) = Self::embed_steps(&self.params.src_embed, &refs, steps);
        let masks = Self::step_masks(&lengths, steps);
        let init = StackState::zeros(&self.params.encoder, sources.len());
        let trace = stack_forward(&xs, &self.params.encoder, &init, masks.as_deref())?;
        Ok(EncoderPass { trace, tokens, masks })
    }

    /// Fixed-size summary `v` of a source sentence: `(h, c)` of every encoder
    /// layer after the last input step, as 1-column states.
    pub fn encode(&self, source: &[usize], reversed: bool) -> Result<StackState<T>> {
        Ok(self.encode_batch(&[source], reversed)?.trace.finals)
    }

    /// Encodes using the model's configured source direction.
    pub fn encode_default(&self, source: &[usize]) -> Result<StackState<T>> {
        self.encode(source, self.config.reverse_source)
    }

    /// Output-layer log-probabilities for the top hidden state `h` (`H x B`),
    /// returned as `B x V`.
    fn output_logprobs(&self, h: &Matrix<T>) -> Result<Matrix<T>> {
        let mut logits = matmul(&self.params.out_w, h)?;
        logits.add_column_broadcast(&self.params.out_b)?;
        crate::numerics::log_softmax_rows(&logits.transpose())
    }

    /// Advances the decoder one step for a batch of hypotheses. Returns the new
    /// states and one log-probability row per column.
    pub fn decoder_step(&self, states: &StackState<T>, prev_tokens: &[usize]) -> Result<(StackState<T>, Matrix<T>)> {
        if prev_tokens.len() != states.batch_size() {
            return Err(Error::dim(
                "decoder_step",
                (1, states.batch_size()),
                (1, prev_tokens.len()),
            ));
        }
        Self::check_ids(prev_tokens, self.config.tgt_vocab_size, "target")?;
        let (xs, _) = Self::embed_steps(
            &self.params.tgt_embed,
            &prev_tokens.iter().map(core::slice::from_ref).collect::<Vec<_>>(),
            1,
        );
        let trace = stack_forward(&xs, &self.params.decoder, states, None)?;
        let logp = self.output_logprobs(&trace.outputs[0])?;
        Ok((trace.finals, logp))
    }

    /// `log p(target | source)`, including the final EOS term.
    pub fn sequence_logprob(&self, pair: &SentencePair) -> Result<T> {
        Ok(self.score_batch(core::slice::from_ref(pair))?[0])
    }

    /// [`Seq2SeqModel::sequence_logprob`] for many pairs in one padded batch.
    /// Each result is bit-identical to scoring that pair alone.
    pub fn score_batch(&self, pairs: &[SentencePair]) -> Result<Vec<T>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.forward(pairs)?.logprobs)
    }

    fn forward(&self, batch: &[SentencePair]) -> Result<ForwardPass<T>> {
        let sources: Vec<&[usize]> = batch.iter().map(|p| p.source.as_slice()).collect();
        let enc = self.encode_batch(&sources, self.config.reverse_source)?;

        let dec_inputs: Vec<Vec<usize>> = batch
            .iter()
            .map(|p| {
                Self::check_ids(&p.target, self.config.tgt_vocab_size, "target")?;
                let mut ids = Vec::with_capacity(p.target.len() + 1);
                ids.push(EOS);
                ids.extend_from_slice(&p.target);
                Ok(ids)
            })
            .collect::<Result<_>>()?;
        let lengths: Vec<usize> = dec_inputs.iter().map(Vec::len).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let refs: Vec<&[usize]> = dec_inputs.iter().map(Vec::as_slice).collect();
        let (xs, tokens) = Self::embed_steps(&self.params.tgt_embed, &refs, steps);
        let masks = Self::step_masks(&lengths, steps);
        let dec = stack_forward(&xs, &self.params.decoder, &enc.trace.finals, masks.as_deref())?;
        let dec_masks = masks;

        let mut logprobs = vec![T::zero(); batch.len()];
        let mut step_logp = Vec::with_capacity(steps);
        for (t, h) in dec.outputs.iter().enumerate() {
            let logp = self.output_logprobs(h)?;
            for (j, pair) in batch.iter().enumerate() {
                if let Some(gold) = gold_at(pair, t) {
                    logprobs[j] = logprobs[j] + logp.get(j, gold);
                }
            }
            step_logp.push(logp);
        }
        Ok(ForwardPass {
            enc,
            dec,
            dec_tokens: tokens,
            dec_masks,
            step_logp,
            logprobs,
        })
    }

    /// Mean negative log-likelihood of the batch and its exact gradient.
    pub fn batch_loss_and_grads(&self, batch: &[SentencePair]) -> Result<(T, ModelParams<T>)> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let fwd = self.forward(batch)?;
        let n = T::cast(batch.len() as f64);
        let inv_n = T::one() / n;
        let loss = -fwd.logprobs.iter().fold(T::zero(), |s, &x| s + x) / n;

        let mut grads = self.params.zeros_like();
        let v = self.config.tgt_vocab_size;
        let mut d_top = Vec::with_capacity(fwd.step_logp.len());
        for (t, logp) in fwd.step_logp.iter().enumerate() {
            // dL/dlogits = (softmax - onehot) / n, laid out V x B
            let mut d_logits = Matrix::zeros(v, batch.len());
            for (j, pair) in batch.iter().enumerate() {
                if let Some(gold) = gold_at(pair, t) {
                    for w in 0..v {
                        let p = logp.get(j, w).exp();
                        let y = if w == gold { T::one() } else { T::zero() };
                        d_logits.set(w, j, (p - y) * inv_n);
                    }
                }
            }
            let h = &fwd.dec.outputs[t];
            add_matmul_nt(&mut grads.out_w, &d_logits, h)?;
            d_logits.accumulate_row_sums(&mut grads.out_b)?;
            d_top.push(matmul_tn(&self.params.out_w, &d_logits)?);
        }

        let dec_back = stack_backward(&fwd.dec, &self.params.decoder, Some(&d_top), None, &mut grads.decoder)?;
        let enc_back = stack_backward(
            &fwd.enc.trace,
            &self.params.encoder,
            None,
            Some(&dec_back.d_init),
            &mut grads.encoder,
        )?;

        scatter_embedding_grads(
            &mut grads.tgt_embed,
            &dec_back.d_inputs,
            &fwd.dec_tokens,
            fwd.dec_masks.as_deref(),
        );
        scatter_embedding_grads(
            &mut grads.src_embed,
            &enc_back.d_inputs,
            &fwd.enc.tokens,
            fwd.enc.masks.as_deref(),
        );
        Ok((loss, grads))
    }
}

/// Gold output at decoder step `t`: the target token, then EOS, then nothing.
fn gold_at(pair: &SentencePair, t: usize) -> Option<usize> {
    match t.cmp(&pair.target.len()) {
        core::cmp::Ordering::Less => Some(pair.target[t]),
        core::cmp::Ordering::Equal => Some(EOS),
        core::cmp::Ordering::Greater => None,
    }
}

fn scatter_embedding_grads<T: Real>(
    table: &mut Matrix<T>,
    d_inputs: &[Matrix<T>],
    tokens: &[Vec<usize>],
    masks: Option<&[Vec<bool>]>,
) {
    for (t, d_x) in d_inputs.iter().enumerate() {
        for (j, &id) in tokens[t].iter().enumerate() {
            // padded positions: zero gradient, and the PAD row stays untouched
            if masks.is_some_and(|m| !m[t][j]) {
                continue;
            }
            let row = table.row_mut(id);
            for (k, r) in row.iter_mut().enumerate() {
                *r = *r + d_x.get(k, j);
            }
        }
    }
}

struct EncoderPass<T> {
    trace: StackTrace<T>,
    tokens: Vec<Vec<usize>>,
    masks: Option<Vec<Vec<bool>>>,
}

struct ForwardPass<T> {
    enc: EncoderPass<T>,
    dec: StackTrace<T>,
    dec_tokens: Vec<Vec<usize>>,
    dec_masks: Option<Vec<Vec<bool>>>,
    step_logp: Vec<Matrix<T>>,
    logprobs: Vec<T>,
}
