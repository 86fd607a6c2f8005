//! Double-double arithmetic and a scalar reimplementation of the training
//! loss, used as the finite-difference oracle.

use seq2seq_core::corpus::{SentencePair, EOS};
use seq2seq_core::model::ModelParams;
use seq2seq_core::numerics::Matrix;
use seq2seq_core::recurrent::LstmLayer;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: 6.931471805599452862e-01,
    lo: 2.319046813846299558e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale(self, s: f64) -> Dd {
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// `exp(x) = (1 + s)·2^k`.
    fn exp_parts(self) -> (Dd, i32) {
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from(k)).scale(1.0 / 1024.0);
        let mut term = r;
        let mut s = r;
        for n in 2..=12 {
            term = term * r / Dd::from(n as f64);
            s = s + term;
        }
        for _ in 0..10 {
            s = s.scale(2.0) + s * s;
        }
        (s, k as i32)
    }

    pub fn exp(self) -> Dd {
        assert!(self.hi.abs() < 700.0, "exp argument out of range");
        let (s, k) = self.exp_parts();
        (Dd::ONE + s).scale(2f64.powi(k))
    }

    fn expm1(self) -> Dd {
        let (s, k) = self.exp_parts();
        if k == 0 {
            s
        } else {
            (Dd::ONE + s).scale(2f64.powi(k)) - Dd::ONE
        }
    }

    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "ln of non-positive value");
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..3 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }

    pub fn tanh(self) -> Dd {
        if self.hi.abs() > 40.0 {
            return Dd::from(self.hi.signum());
        }
        let em = self.scale(2.0).expm1();
        em / (em + Dd::from(2.0))
    }

    pub fn sigmoid(self) -> Dd {
        Dd::ONE / (Dd::ONE + (-self).exp())
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + -b
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        Dd::norm(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from(q3)
    }
}

type Vector = Vec<Dd>;

fn at(m: &Matrix<f64>, r: usize, c: usize) -> Dd {
    Dd::from(m.get(r, c))
}

/// `m · x` plus the optional column `bias`.
fn affine(m: &Matrix<f64>, x: &[Dd], bias: Option<&Matrix<f64>>) -> Vector {
    (0..m.rows())
        .map(|r| {
            let mut acc = bias.map_or(Dd::ZERO, |b| at(b, r, 0));
            for (c, &v) in x.iter().enumerate() {
                acc = acc + at(m, r, c) * v;
            }
            acc
        })
        .collect()
}

fn lstm_step(layer: &LstmLayer<f64>, x: &[Dd], h: &mut Vector, c: &mut Vector) {
    let n = h.len();
    let wx = affine(&layer.w, x, Some(&layer.b));
    let rh = affine(&layer.r, h, None);
    let pre: Vector = wx.iter().zip(&rh).map(|(&a, &b)| a + b).collect();
    let peep = |k: usize| match &layer.peepholes {
        Some(p) => (at(&p.input, k, 0), at(&p.forget, k, 0), at(&p.output, k, 0)),
        None => (Dd::ZERO, Dd::ZERO, Dd::ZERO),
    };
    for k in 0..n {
        let (pi, pf, po) = peep(k);
        let i = (pre[k] + pi * c[k]).sigmoid();
        let f = (pre[n + k] + pf * c[k]).sigmoid();
        let g = pre[2 * n + k].tanh();
        let cell = f * c[k] + i * g;
        let o = (pre[3 * n + k] + po * cell).sigmoid();
        c[k] = cell;
        h[k] = o * cell.tanh();
    }
}

fn embed(table: &Matrix<f64>, id: usize) -> Vector {
    (0..table.cols()).map(|k| at(table, id, k)).collect()
}

fn run(layers: &[LstmLayer<f64>], table: &Matrix<f64>, id: usize, state: &mut [(Vector, Vector)]) -> Vector {
    let mut x = embed(table, id);
    for (layer, (h, c)) in layers.iter().zip(state.iter_mut()) {
        lstm_step(layer, &x, h, c);
        x = h.clone();
    }
    x
}

fn log_softmax(logits: &[Dd]) -> Vector {
    let max = logits.iter().copied().fold(logits[0], |m, v| if v.hi > m.hi { v } else { m });
    let total = logits.iter().fold(Dd::ZERO, |s, &v| s + (v - max).exp());
    let norm = max + total.ln();
    logits.iter().map(|&v| v - norm).collect()
}

type State = Vec<(Vector, Vector)>;

fn encode(p: &ModelParams<f64>, source: &[usize]) -> State {
    let mut state: State = p
        .encoder
        .iter()
        .map(|l| (vec![Dd::ZERO; l.hidden_size()], vec![Dd::ZERO; l.hidden_size()]))
        .collect();
    for &id in source.iter().rev() {
        run(&p.encoder, &p.src_embed, id, &mut state);
    }
    state
}

fn decode_step(p: &ModelParams<f64>, input: usize, state: &mut State) -> Vector {
    let top = run(&p.decoder, &p.tgt_embed, input, state);
    log_softmax(&affine(&p.out_w, &top, Some(&p.out_b)))
}

/// Next-word log-probabilities after `prefix`, the source read last word
/// first.
pub fn next_logprobs(p: &ModelParams<f64>, source: &[usize], prefix: &[usize]) -> Vector {
    let mut state = encode(p, source);
    let mut out = decode_step(p, EOS, &mut state);
    for &w in prefix {
        out = decode_step(p, w, &mut state);
    }
    out
}

/// `log p(target | source)`.
pub fn sentence_logprob(p: &ModelParams<f64>, pair: &SentencePair) -> Dd {
    let mut state = encode(p, &pair.source);
    let inputs = std::iter::once(EOS).chain(pair.target.iter().copied());
    let golds = pair.target.iter().copied().chain(std::iter::once(EOS));
    inputs
        .zip(golds)
        .fold(Dd::ZERO, |total, (input, gold)| total + decode_step(p, input, &mut state)[gold])
}

/// Mean negative log-likelihood over the batch.
pub fn batch_loss(p: &ModelParams<f64>, batch: &[SentencePair]) -> Dd {
    let sum = batch.iter().fold(Dd::ZERO, |s, pair| s + sentence_logprob(p, pair));
    -sum / Dd::from(batch.len() as f64)
}
