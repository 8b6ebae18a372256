//! Building blocks recorded on the tape: dense maps, layer normalization,
//! sinusoidal positions and dropout.

use rand::Rng;

use crate::tensor::{Function, Result, Tape, Tensor, TensorError, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x · w + b` for a 2-D `x`.
pub fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// Normalizes each row over the last axis, then applies `γ·x̂ + β`.
pub struct LayerNorm {
    pub eps: f64,
}

impl LayerNorm {
    pub fn record(tape: &mut Tape, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        tape.apply(Box::new(LayerNorm { eps: LAYER_NORM_EPS }), &[x, gamma, beta])
    }

    fn stats(&self, row: &[f64]) -> (f64, f64) {
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, 1.0 / (var + self.eps).sqrt())
    }
}

impl Function for LayerNorm {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (x, gamma, beta) = (inputs[0], inputs[1], inputs[2]);
        let d = x.last_dim();
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(TensorError::dim(
                "layer_norm",
                format!("γ {:?}, β {:?} against width {d}", gamma.shape(), beta.shape()),
            ));
        }
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks(d) {
            let (mean, inv) = self.stats(row);
            for (j, v) in row.iter().enumerate() {
                out.push(gamma.data()[j] * (v - mean) * inv + beta.data()[j]);
            }
        }
        Tensor::new(x.shape(), out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Result<Vec<Option<Vec<f64>>>> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let d = x.last_dim();
        let mut dx = Vec::with_capacity(x.numel());
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let mut xhat = vec![0.0; d];
        let mut dxhat = vec![0.0; d];
        for (row, g) in x.data().chunks(d).zip(grad.chunks(d)) {
            let (mean, inv) = self.stats(row);
            for j in 0..d {
                xhat[j] = (row[j] - mean) * inv;
                dxhat[j] = g[j] * gamma.data()[j];
                dgamma[j] += g[j] * xhat[j];
                dbeta[j] += g[j];
            }
            let m1 = dxhat.iter().sum::<f64>() / d as f64;
            let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            dx.extend((0..d).map(|j| inv * (dxhat[j] - m1 - xhat[j] * m2)));
        }
        Ok(vec![Some(dx), Some(dgamma), Some(dbeta)])
    }
}

/// `len × d` sinusoidal position table: `sin(p / 10000^(2i/d))` on even
/// columns, the matching cosine on odd ones.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for j in 0..d {
            let rate = 10_000f64.powf((2 * (j / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(&[len, d], data).expect("finite table")
}

/// Inverted dropout: zeroes entries with probability `p`, scales survivors
/// by `1/(1−p)`.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape, x: Var, p: f64, rng: &mut R) -> Result<Var> {
    if p <= 0.0 {
        return Ok(x);
    }
    let shape = tape.value(x).shape().to_vec();
    let keep = 1.0 / (1.0 - p);
    let n = shape.iter().product();
    let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    let mask = tape.constant(Tensor::new(&shape, mask)?);
    tape.mul(x, mask)
}

/// Glorot-uniform `rows × cols` matrix.
pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(&[rows, cols], data).expect("finite init")
}
