//! LSTM and vanilla RNN cells with hand-derived backward passes, and deep LSTM
//! stacks unrolled through time.
//!
//! Activations are laid out with one column per batch element: a hidden
//! state for a batch of `B` sequences is an `H x B` matrix. Gate blocks are
//! stacked in the order input, forget, cell candidate, output:
//!
//! ```text
//! a = W x + R h_prev + b            (4H x B, rows [i | f | g | o])
//! i = σ(a_i + p_i ⊙ c_prev)
//! f = σ(a_f + p_f ⊙ c_prev)
//! g = tanh(a_g)
//! c = f ⊙ c_prev + i ⊙ g
//! o = σ(a_o + p_o ⊙ c)
//! h = o ⊙ tanh(c)
//! ```
//!
//! The peephole vectors `p_*` are optional. A per-column mask marks padded
//! positions: a masked column copies its previous state forward unchanged and
//! receives no gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{add_matmul, add_matmul_nt, matmul, matmul_tn, sigmoid, Matrix, Parameters, Real};

/// Peephole weights (each `H x 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Peepholes<T> {
    pub input: Matrix<T>,
    pub forget: Matrix<T>,
    pub output: Matrix<T>,
}

/// Parameters of one LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<T> {
    /// Input weights, `4H x I`.
    pub w: Matrix<T>,
    /// Recurrent weights, `4H x H`.
    pub r: Matrix<T>,
    /// Gate biases, `4H x 1`.
    pub b: Matrix<T>,
    pub peepholes: Option<Peepholes<T>>,
}

/// Hidden and cell state of one layer; `H x B`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState<T> {
    pub h: Matrix<T>,
    pub c: Matrix<T>,
}

impl<T: Real> CellState<T> {
    pub fn zeros(hidden: usize, batch: usize) -> Self {
        Self {
            h: Matrix::zeros(hidden, batch),
            c: Matrix::zeros(hidden, batch),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.h.cols()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            h: self.h.select_columns(cols),
            c: self.c.select_columns(cols),
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct StepCache<T> {
    x: Matrix<T>,
    h_prev: Matrix<T>,
    c_prev: Matrix<T>,
    /// Activated gates, rows `[i | f | g | o]`.
    gates: Matrix<T>,
    /// New cell state before masking.
    c: Matrix<T>,
    tanh_c: Matrix<T>,
    mask: Option<Vec<bool>>,
}

impl<T: Real> StepCache<T> {
    pub fn input(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn gates(&self) -> &Matrix<T> {
        &self.gates
    }
}

impl<T: Real> LstmLayer<T> {
    pub fn zeros(input: usize, hidden: usize, peepholes: bool) -> Self {
        Self {
            w: Matrix::zeros(4 * hidden, input),
            r: Matrix::zeros(4 * hidden, hidden),
            b: Matrix::zeros(4 * hidden, 1),
            peepholes: peepholes.then(|| Peepholes {
                input: Matrix::zeros(hidden, 1),
                forget: Matrix::zeros(hidden, 1),
                output: Matrix::zeros(hidden, 1),
            }),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.r.cols()
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size(), self.peepholes.is_some())
    }

    fn check_shapes(&self) -> Result<()> {
        let h = self.hidden_size();
        if h == 0 || self.input_size() == 0 {
            return Err(Error::Config("LSTM layer needs positive input and hidden sizes".into()));
        }
        if self.w.rows() != 4 * h || self.r.rows() != 4 * h || self.b.shape() != (4 * h, 1) {
            return Err(Error::dim("LstmLayer", self.w.shape(), self.r.shape()));
        }
        if let Some(p) = &self.peepholes {
            for v in [&p.input, &p.forget, &p.output] {
                if v.shape() != (h, 1) {
                    return Err(Error::dim("LstmLayer peephole", v.shape(), (h, 1)));
                }
            }
        }
        Ok(())
    }

    /// One time step for a batch of columns.
    pub fn forward(
        &self,
        x: &Matrix<T>,
        prev: &CellState<T>,
        mask: Option<&[bool]>,
    ) -> Result<(CellState<T>, StepCache<T>)> {
        let h = self.hidden_size();
        let batch = x.cols();
        if x.rows() != self.input_size() {
            return Err(Error::dim("lstm forward (input)", self.w.shape(), x.shape()));
        }
        if prev.h.shape() != (h, batch) || prev.c.shape() != (h, batch) {
            return Err(Error::dim("lstm forward (state)", (h, batch), prev.h.shape()));
        }
        if let Some(m) = mask {
            if m.len() != batch {
                return Err(Error::dim("lstm forward (mask)", (1, batch), (1, m.len())));
            }
        }

        let mut gates = matmul(&self.w, x)?;
        add_matmul(&mut gates, &self.r, &prev.h)?;
        gates.add_column_broadcast(&self.b)?;

        let mut c = Matrix::zeros(h, batch);
        let mut tanh_c = Matrix::zeros(h, batch);
        let mut new_h = Matrix::zeros(h, batch);
        let peep = self.peepholes.as_ref();
        let g = gates.as_mut_slice();
        let cp = prev.c.as_slice();
        for k in 0..h {
            let (pi, pf, po) = match peep {
                Some(p) => (p.input.get(k, 0), p.forget.get(k, 0), p.output.get(k, 0)),
                None => (T::zero(), T::zero(), T::zero()),
            };
            for j in 0..batch {
                let at = k * batch + j;
                let (ii, fi, gi, oi) = (at, (h + k) * batch + j, (2 * h + k) * batch + j, (3 * h + k) * batch + j);
                let c_prev = cp[at];
                let i_gate = sigmoid(g[ii] + pi * c_prev);
                let f_gate = sigmoid(g[fi] + pf * c_prev);
                let cand = g[gi].tanh();
                let cell = f_gate * c_prev + i_gate * cand;
                let o_gate = sigmoid(g[oi] + po * cell);
                let tc = cell.tanh();
                g[ii] = i_gate;
                g[fi] = f_gate;
                g[gi] = cand;
                g[oi] = o_gate;
                c.as_mut_slice()[at] = cell;
                tanh_c.as_mut_slice()[at] = tc;
                new_h.as_mut_slice()[at] = o_gate * tc;
            }
        }

        let mut next_c = c.clone();
        if let Some(m) = mask {
            for (j, _) in m.iter().enumerate().filter(|(_, &active)| !active) {
                next_c.copy_column_from(j, &prev.c, j);
                new_h.copy_column_from(j, &prev.h, j);
            }
        }

        let cache = StepCache {
            x: x.clone(),
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            gates,
            c,
            tanh_c,
            mask: mask.map(|m| m.to_vec()),
        };
        Ok((CellState { h: new_h, c: next_c }, cache))
    }

    /// Reverse of [`LstmLayer::forward`]. `d_h` and `d_c` are gradients of the
    /// loss with respect to the step's output state; parameter gradients are
    /// added into `grads`. Returns gradients for the input and previous state.
    pub fn backward(
        &self,
        cache: &StepCache<T>,
        d_h: &Matrix<T>,
        d_c: &Matrix<T>,
        grads: &mut LstmLayer<T>,
    ) -> Result<(Matrix<T>, CellState<T>)> {
        let h = self.hidden_size();
        let batch = cache.x.cols();
        if d_h.shape() != (h, batch) || d_c.shape() != (h, batch) {
            return Err(Error::dim("lstm backward", (h, batch), d_h.shape()));
        }
        let active = |j: usize| cache.mask.as_ref().map_or(true, |m| m[j]);

        let mut d_pre = Matrix::zeros(4 * h, batch);
        let mut d_c_prev = Matrix::zeros(h, batch);
        let g = cache.gates.as_slice();
        let dp = d_pre.as_mut_slice();
        let peep = self.peepholes.as_ref();
        let mut peep_grads = (vec![T::zero(); h], vec![T::zero(); h], vec![T::zero(); h]);
        for k in 0..h {
            let (pi, pf, po) = match peep {
                Some(p) => (p.input.get(k, 0), p.forget.get(k, 0), p.output.get(k, 0)),
                None => (T::zero(), T::zero(), T::zero()),
            };
            for j in 0..batch {
                let at = k * batch + j;
                if !active(j) {
                    d_c_prev.as_mut_slice()[at] = d_c.as_slice()[at];
                    continue;
                }
                let (ii, fi, gi, oi) = (at, (h + k) * batch + j, (2 * h + k) * batch + j, (3 * h + k) * batch + j);
                let (i_gate, f_gate, cand, o_gate) = (g[ii], g[fi], g[gi], g[oi]);
                let c_prev = cache.c_prev.as_slice()[at];
                let cell = cache.c.as_slice()[at];
                let tc = cache.tanh_c.as_slice()[at];
                let dh = d_h.as_slice()[at];

                let d_ao = dh * tc * o_gate * (T::one() - o_gate);
                let dc = d_c.as_slice()[at] + dh * o_gate * (T::one() - tc * tc) + d_ao * po;
                let d_ai = dc * cand * i_gate * (T::one() - i_gate);
                let d_af = dc * c_prev * f_gate * (T::one() - f_gate);
                let d_ag = dc * i_gate * (T::one() - cand * cand);
                d_c_prev.as_mut_slice()[at] = dc * f_gate + d_ai * pi + d_af * pf;

                dp[ii] = d_ai;
                dp[fi] = d_af;
                dp[gi] = d_ag;
                dp[oi] = d_ao;
                peep_grads.0[k] = peep_grads.0[k] + d_ai * c_prev;
                peep_grads.1[k] = peep_grads.1[k] + d_af * c_prev;
                peep_grads.2[k] = peep_grads.2[k] + d_ao * cell;
            }
        }

        add_matmul_nt(&mut grads.w, &d_pre, &cache.x)?;
        add_matmul_nt(&mut grads.r, &d_pre, &cache.h_prev)?;
        d_pre.accumulate_row_sums(&mut grads.b)?;
        if let Some(gp) = grads.peepholes.as_mut() {
            for k in 0..h {
                gp.input.set(k, 0, gp.input.get(k, 0) + peep_grads.0[k]);
                gp.forget.set(k, 0, gp.forget.get(k, 0) + peep_grads.1[k]);
                gp.output.set(k, 0, gp.output.get(k, 0) + peep_grads.2[k]);
            }
        }

        let d_x = matmul_tn(&self.w, &d_pre)?;
        let mut d_h_prev = matmul_tn(&self.r, &d_pre)?;
        for j in (0..batch).filter(|&j| !active(j)) {
            d_h_prev.copy_column_from(j, d_h, j);
        }
        Ok((d_x, CellState { h: d_h_prev, c: d_c_prev }))
    }
}

impl<T: Real> Parameters<T> for LstmLayer<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = vec![&self.w, &self.r, &self.b];
        if let Some(p) = &self.peepholes {
            out.extend([&p.input, &p.forget, &p.output]);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![&mut self.w, &mut self.r, &mut self.b];
        if let Some(p) = &mut self.peepholes {
            out.extend([&mut p.input, &mut p.forget, &mut p.output]);
        }
        out
    }
}

/// Single-step forward without a mask.
pub fn lstm_cell_forward<T: Real>(
    x: &Matrix<T>,
    prev: &CellState<T>,
    params: &LstmLayer<T>,
) -> Result<(CellState<T>, StepCache<T>)> {
    params.forward(x, prev, None)
}

/// Single-step backward returning fresh parameter gradients.
pub fn lstm_cell_backward<T: Real>(
    cache: &StepCache<T>,
    d_h: &Matrix<T>,
    d_c: &Matrix<T>,
    params: &LstmLayer<T>,
) -> Result<(LstmLayer<T>, Matrix<T>, CellState<T>)> {
    let mut grads = params.zeros_like();
    let (d_x, d_prev) = params.backward(cache, d_h, d_c, &mut grads)?;
    Ok((grads, d_x, d_prev))
}

/// States of every layer of a stack, bottom first.
#[derive(Clone, Debug, PartialEq)]
pub struct StackState<T> {
    pub layers: Vec<CellState<T>>,
}

impl<T: Real> StackState<T> {
    pub fn zeros(layers: &[LstmLayer<T>], batch: usize) -> Self {
        Self {
            layers: layers.iter().map(|l| CellState::zeros(l.hidden_size(), batch)).collect(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.batch_size())
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.select_columns(cols)).collect(),
        }
    }

    /// Joins single- or multi-column states side by side, layer by layer.
    pub fn concat(parts: &[&StackState<T>]) -> Result<Self> {
        let depth = parts.first().map_or(0, |p| p.layers.len());
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let hs: Vec<&Matrix<T>> = parts.iter().map(|p| &p.layers[l].h).collect();
            let cs: Vec<&Matrix<T>> = parts.iter().map(|p| &p.layers[l].c).collect();
            layers.push(CellState {
                h: Matrix::hstack(&hs)?,
                c: Matrix::hstack(&cs)?,
            });
        }
        Ok(Self { layers })
    }

    /// Column `j` flattened as `[h_0, c_0, h_1, c_1, ...]`.
    pub fn flatten_column(&self, j: usize) -> Vec<T> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.h.column_values(j));
            out.extend(layer.c.column_values(j));
        }
        out
    }
}

/// Result of unrolling a stack over a sequence.
#[derive(Clone, Debug)]
pub struct StackTrace<T> {
    /// Top-layer hidden output at each step.
    pub outputs: Vec<Matrix<T>>,
    pub finals: StackState<T>,
    /// `caches[t][layer]`
    caches: Vec<Vec<StepCache<T>>>,
}

impl<T: Real> StackTrace<T> {
    pub fn steps(&self) -> usize {
        self.caches.len()
    }
}

/// Gradients flowing out of a stack's backward pass.
#[derive(Clone, Debug)]
pub struct StackGrads<T> {
    pub d_inputs: Vec<Matrix<T>>,
    pub d_init: StackState<T>,
}

fn check_chain<T: Real>(layers: &[LstmLayer<T>]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Config("stack needs at least one layer".into()));
    }
    for l in layers {
        l.check_shapes()?;
    }
    for pair in layers.windows(2) {
        if pair[1].input_size() != pair[0].hidden_size() {
            return Err(Error::dim(
                "stack chaining",
                pair[0].r.shape(),
                pair[1].w.shape(),
            ));
        }
    }
    Ok(())
}

/// Runs a deep stack over `inputs`; layer `l` consumes layer `l-1`'s hidden
/// output at the same step. `masks[t]` (optional) marks active columns.
pub fn stack_forward<T: Real>(
    inputs: &[Matrix<T>],
    layers: &[LstmLayer<T>],
    init: &StackState<T>,
    masks: Option<&[Vec<bool>]>,
) -> Result<StackTrace<T>> {
    check_chain(layers)?;
    if init.layers.len() != layers.len() {
        return Err(Error::dim(
            "stack init",
            (layers.len(), 1),
            (init.layers.len(), 1),
        ));
    }
    if let Some(m) = masks {
        if m.len() != inputs.len() {
            return Err(Error::dim("stack masks", (inputs.len(), 1), (m.len(), 1)));
        }
    }
    let mut state = init.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for (t, x) in inputs.iter().enumerate() {
        let mask = masks.map(|m| m[t].as_slice());
        let mut step_caches = Vec::with_capacity(layers.len());
        let mut below: Option<Matrix<T>> = None;
        for (l, layer) in layers.iter().enumerate() {
            let input = below.as_ref().unwrap_or(x);
            let (next, cache) = layer.forward(input, &state.layers[l], mask)?;
            below = Some(next.h.clone());
            state.layers[l] = next;
            step_caches.push(cache);
        }
        outputs.push(below.expect("stack has at least one layer"));
        caches.push(step_caches);
    }
    Ok(StackTrace {
        outputs,
        finals: state,
        caches,
    })
}

/// Backpropagation through time for a trace produced by [`stack_forward`].
///
/// `d_outputs[t]` is the loss gradient at the top layer's output at step `t`
/// and `d_finals` the gradient at the final states; either may be omitted
/// (treated as zero). Parameter gradients are added into `grads`.
pub fn stack_backward<T: Real>(
    trace: &StackTrace<T>,
    layers: &[LstmLayer<T>],
    d_outputs: Option<&[Matrix<T>]>,
    d_finals: Option<&StackState<T>>,
    grads: &mut [LstmLayer<T>],
) -> Result<StackGrads<T>> {
    let batch = trace.finals.batch_size();
    let mut carry = match d_finals {
        Some(d) => d.clone(),
        None => StackState::zeros(layers, batch),
    };
    let steps = trace.steps();
    let mut d_inputs = vec![Matrix::zeros(0, 0); steps];
    for t in (0..steps).rev() {
        if let Some(d_out) = d_outputs {
            let top = carry.layers.len() - 1;
            carry.layers[top].h.add_assign(&d_out[t])?;
        }
        for l in (0..layers.len()).rev() {
            let (d_x, d_prev) =
                layers[l].backward(&trace.caches[t][l], &carry.layers[l].h, &carry.layers[l].c, &mut grads[l])?;
            carry.layers[l] = d_prev;
            if l > 0 {
                carry.layers[l - 1].h.add_assign(&d_x)?;
            } else {
                d_inputs[t] = d_x;
            }
        }
    }
    Ok(StackGrads {
        d_inputs,
        d_init: carry,
    })
}

/// Parameters of the plain sigmoid RNN `h = σ(W_hx x + W_hh h_prev)`, `y = W_yh h`.
/// Kept as a baseline for experiments; the encoder-decoder uses LSTMs.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnLayer<T> {
    pub w_hx: Matrix<T>,
    pub w_hh: Matrix<T>,
    pub w_yh: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct RnnCache<T> {
    x: Matrix<T>,
    h_prev: Matrix<T>,
    h: Matrix<T>,
}

impl<T: Real> RnnLayer<T> {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w_hx: Matrix::zeros(hidden, input),
            w_hh: Matrix::zeros(hidden, hidden),
            w_yh: Matrix::zeros(output, hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w_hx.cols(), self.w_hh.rows(), self.w_yh.rows())
    }

    pub fn forward(&self, x: &Matrix<T>, h_prev: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>, RnnCache<T>)> {
        if h_prev.rows() != self.w_hh.cols() || h_prev.cols() != x.cols() {
            return Err(Error::dim("rnn forward (state)", self.w_hh.shape(), h_prev.shape()));
        }
        let mut a = matmul(&self.w_hx, x)?;
        add_matmul(&mut a, &self.w_hh, h_prev)?;
        let h = a.map(sigmoid);
        let y = matmul(&self.w_yh, &h)?;
        let cache = RnnCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            h: h.clone(),
        };
        Ok((h, y, cache))
    }

    /// `d_h` is the gradient reaching `h` from later steps, `d_y` the
    /// gradient at this step's output. Returns `(d_x, d_h_prev)`.
    pub fn backward(
        &self,
        cache: &RnnCache<T>,
        d_h: &Matrix<T>,
        d_y: &Matrix<T>,
        grads: &mut RnnLayer<T>,
    ) -> Result<(Matrix<T>, Matrix<T>)> {
        let mut d_total = matmul_tn(&self.w_yh, d_y)?;
        d_total.add_assign(d_h)?;
        add_matmul_nt(&mut grads.w_yh, d_y, &cache.h)?;
        let mut d_a = d_total;
        for (d, &h) in d_a.as_mut_slice().iter_mut().zip(cache.h.as_slice()) {
            *d = *d * h * (T::one() - h);
        }
        add_matmul_nt(&mut grads.w_hx, &d_a, &cache.x)?;
        add_matmul_nt(&mut grads.w_hh, &d_a, &cache.h_prev)?;
        Ok((matmul_tn(&self.w_hx, &d_a)?, matmul_tn(&self.w_hh, &d_a)?))
    }
}

impl<T: Real> Parameters<T> for RnnLayer<T> {
    fn tensors(&self) -> Vec<&Matrix<T>> {
        vec![&self.w_hx, &self.w_hh, &self.w_yh]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.w_hx, &mut self.w_hh, &mut self.w_yh]
    }
}

pub fn rnn_cell_forward<T: Real>(
    x: &Matrix<T>,
    h_prev: &Matrix<T>,
    params: &RnnLayer<T>,
) -> Result<(Matrix<T>, Matrix<T>, RnnCache<T>)> {
    params.forward(x, h_prev)
}
