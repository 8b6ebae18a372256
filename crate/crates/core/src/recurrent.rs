//! LSTM cell and bidirectional LSTM layer.
//!
//! Gate matrices are `hidden × (hidden + input)` and multiply the
//! concatenation `[h_{t-1}, x_t]` (hidden first). Initial states are zero.

use rand::Rng;

use crate::tensor::{sigmoid, Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

impl LstmWeights {
    /// All-zero weights and biases.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        LstmWeights {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    /// Uniform `±1/√hidden` weights, forget bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut w = LstmWeights::zeros(input, hidden);
        for m in [&mut w.w_f, &mut w.w_i, &mut w.w_c, &mut w.w_o] {
            for x in m.data_mut() {
                *x = rng.random_range(-bound..=bound);
            }
        }
        w.b_f = Tensor::filled(&[hidden], 1.0);
        w
    }

    pub fn hidden(&self) -> usize {
        self.w_f.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w_f.shape()[1] - self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, cols) = self.w_f.dims2("lstm weights")?;
        if cols <= h {
            return Err(TensorError::dim("lstm weights", format!("W is {h}×{cols}, needs more than {h} columns")));
        }
        for w in [&self.w_i, &self.w_c, &self.w_o] {
            if w.shape() != [h, cols] {
                return Err(TensorError::dim("lstm weights", format!("gate shape {:?} vs [{h}, {cols}]", w.shape())));
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            if b.shape() != [h] {
                return Err(TensorError::dim("lstm weights", format!("bias shape {:?} vs [{h}]", b.shape())));
            }
        }
        Ok(())
    }

    /// Parameters in a fixed order: `W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o`.
    pub fn tensors(&self) -> [&Tensor; 8] {
        [&self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    /// Records every tensor as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> LstmVars {
        let [w_f, w_i, w_c, w_o, b_f, b_i, b_c, b_o] = self.tensors().map(|t| tape.param(t.clone()));
        LstmVars {
            w: [w_f, w_i, w_c, w_o],
            b: [b_f, b_i, b_c, b_o],
        }
    }
}

fn gate(w: &Tensor, b: &Tensor, hx: &[f64], j: usize) -> f64 {
    b.data()[j] + w.row(j).iter().zip(hx).map(|(a, x)| a * x).sum::<f64>()
}

/// One LSTM step.
pub fn lstm_cell(x: &[f64], prev: &LstmState, w: &LstmWeights) -> Result<LstmState> {
    w.validate()?;
    let hidden = w.hidden();
    if x.len() != w.input() || prev.h.len() != hidden || prev.c.len() != hidden {
        return Err(TensorError::dim(
            "lstm_cell",
            format!(
                "x {} / h {} / c {} against input {} hidden {hidden}",
                x.len(),
                prev.h.len(),
                prev.c.len(),
                w.input()
            ),
        ));
    }
    let hx: Vec<f64> = prev.h.iter().chain(x).copied().collect();
    let mut next = LstmState::zeros(hidden);
    for j in 0..hidden {
        let f = sigmoid(gate(&w.w_f, &w.b_f, &hx, j));
        let i = sigmoid(gate(&w.w_i, &w.b_i, &hx, j));
        let candidate = gate(&w.w_c, &w.b_c, &hx, j).tanh();
        let o = sigmoid(gate(&w.w_o, &w.b_o, &hx, j));
        next.c[j] = f * prev.c[j] + i * candidate;
        next.h[j] = o * next.c[j].tanh();
    }
    if next.c.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite { op: "lstm_cell" });
    }
    Ok(next)
}

/// Hidden states for every step of `xs` (`L × input`), starting from zeros.
pub fn lstm_forward(xs: &Tensor, w: &LstmWeights) -> Result<Tensor> {
    let (len, _) = xs.dims2("lstm_forward")?;
    let hidden = w.hidden();
    let mut state = LstmState::zeros(hidden);
    let mut out = Vec::with_capacity(len * hidden);
    for t in 0..len {
        state = lstm_cell(xs.row(t), &state, w)?;
        out.extend_from_slice(&state.h);
    }
    Tensor::new(&[len, hidden], out)
}

/// `y_t = [→h_t, ←h_t]`, an `L × 2·hidden` matrix.
pub fn bilstm_forward(xs: &Tensor, w_fwd: &LstmWeights, w_bwd: &LstmWeights) -> Result<Tensor> {
    let (len, input) = xs.dims2("bilstm_forward")?;
    if w_fwd.hidden() != w_bwd.hidden() {
        return Err(TensorError::dim(
            "bilstm_forward",
            format!("hidden sizes {} and {}", w_fwd.hidden(), w_bwd.hidden()),
        ));
    }
    let hidden = w_fwd.hidden();
    let forward = lstm_forward(xs, w_fwd)?;
    let reversed: Vec<f64> = (0..len).rev().flat_map(|t| xs.row(t).iter().copied()).collect();
    let backward = lstm_forward(&Tensor::new(&[len, input], reversed)?, w_bwd)?;
    let mut out = Vec::with_capacity(len * 2 * hidden);
    for t in 0..len {
        out.extend_from_slice(forward.row(t));
        out.extend_from_slice(backward.row(len - 1 - t));
    }
    Tensor::new(&[len, 2 * hidden], out)
}

/// Tape handles for one direction's weights, in `f, i, C, o` order.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: [Var; 4],
    pub b: [Var; 4],
}

/// Runs an LSTM over `xs: [batch, L, input]` on the tape.
///
/// Returns one `[batch, hidden]` hidden state per step in input time order;
/// with `reverse` the recurrence runs from the last step to the first.
pub fn lstm_sequence(tape: &mut Tape, vars: &LstmVars, xs: Var, reverse: bool) -> Result<Vec<Var>> {
    let (batch, len, _) = tape.value(xs).dims3("lstm_sequence")?;
    let hidden = tape.value(vars.w[0]).shape()[0];
    // [h, x]·Wᵀ for all four gates at once: Wt = [W_fᵀ | W_iᵀ | W_Cᵀ | W_oᵀ].
    let wt: Vec<Var> = vars.w.iter().map(|&w| tape.transpose(w)).collect::<Result<_>>()?;
    let wt = tape.concat_last(&wt)?;
    let bias = tape.concat_last(&vars.b)?;
    let mut h = tape.constant(Tensor::zeros(&[batch, hidden]));
    let mut c = h;
    let mut out = vec![h; len];
    let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    for t in order {
        let x = tape.select_time(xs, t)?;
        let hx = tape.concat_last(&[h, x])?;
        let z = tape.matmul(hx, wt)?;
        let z = tape.add_bias(z, bias)?;
        let zf = tape.slice_last(z, 0, hidden)?;
        let zi = tape.slice_last(z, hidden, hidden)?;
        let zc = tape.slice_last(z, 2 * hidden, hidden)?;
        let zo = tape.slice_last(z, 3 * hidden, hidden)?;
        let f = tape.sigmoid(zf)?;
        let i = tape.sigmoid(zi)?;
        let candidate = tape.tanh(zc)?;
        let o = tape.sigmoid(zo)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, candidate)?;
        c = tape.add(keep, write)?;
        let squashed = tape.tanh(c)?;
        h = tape.mul(o, squashed)?;
        out[t] = h;
    }
    Ok(out)
}

/// Bidirectional layer on the tape: `[batch, L, input] → [batch, L, 2·hidden]`.
pub fn bilstm_sequence(tape: &mut Tape, fwd: &LstmVars, bwd: &LstmVars, xs: Var) -> Result<Var> {
    let forward = lstm_sequence(tape, fwd, xs, false)?;
    let backward = lstm_sequence(tape, bwd, xs, true)?;
    let steps: Vec<Var> = forward
        .iter()
        .zip(&backward)
        .map(|(&a, &b)| tape.concat_last(&[a, b]))
        .collect::<Result<_>>()?;
    tape.stack_time(&steps)
}
