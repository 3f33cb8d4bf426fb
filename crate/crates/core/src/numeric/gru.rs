use serde::{Deserialize, Serialize};

use super::dropout::DropoutMask;
use super::matrix::{add_outer, matvec, matvec_t, Matrix};
use super::params::{glorot_uniform, push_matrix, push_matrix_mut, push_vector, push_vector_mut};
use super::params::{ParamBlock, ParamBlockMut, Parameterized};
use super::rng::Rng;
use crate::error::{Error, Result};

/// Single-layer GRU. Gate rows are stacked `[update; reset; candidate]`:
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// n  = tanh(Wn x + Un (r ⊙ h) + bn)
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GruCache {
    steps: Vec<Step>,
}

impl GruCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Matrix::zeros(3 * hidden, input),
            w_hidden: Matrix::zeros(3 * hidden, hidden),
            bias: vec![0.0; 3 * hidden],
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        if hidden == 0 || input == 0 {
            return Err(Error::InvalidArgument("GRU widths must be positive".into()));
        }
        let mut g = Self::zeros(input, hidden);
        // Per-gate fan-in/fan-out, so each gate gets its own Glorot scale.
        for (w, cols) in [(&mut g.w_input, input), (&mut g.w_hidden, hidden)] {
            for gate in 0..3 {
                let mut block = Matrix::zeros(hidden, cols);
                glorot_uniform(&mut block, rng);
                for r in 0..hidden {
                    w.row_mut(gate * hidden + r).copy_from_slice(block.row(r));
                }
            }
        }
        Ok(g)
    }

    pub fn hidden_width(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input_width(&self) -> usize {
        self.w_input.cols()
    }

    /// Run the sequence from a zero state and return the final hidden state.
    pub fn encode(&self, inputs: &[Vec<f64>]) -> Result<(Vec<f64>, GruCache)> {
        if inputs.is_empty() {
            return Err(Error::EmptyQuestion);
        }
        let h = self.hidden_width();
        let mut state = vec![0.0; h];
        let mut steps = Vec::with_capacity(inputs.len());
        for (t, x) in inputs.iter().enumerate() {
            if x.len() != self.input_width() {
                return Err(Error::Shape {
                    context: format!("gru input at step {t}"),
                    expected: self.input_width(),
                    actual: x.len(),
                });
            }
            let ax = matvec(&self.w_input, x);
            let ah = matvec(&self.w_hidden, &state);
            let mut z = vec![0.0; h];
            let mut r = vec![0.0; h];
            for k in 0..h {
                z[k] = sigmoid(ax[k] + ah[k] + self.bias[k]);
                r[k] = sigmoid(ax[h + k] + ah[h + k] + self.bias[h + k]);
            }
            let rh: Vec<f64> = r.iter().zip(&state).map(|(a, b)| a * b).collect();
            let mut n = vec![0.0; h];
            for (k, nk) in n.iter_mut().enumerate() {
                let row = self.w_hidden.row(2 * h + k);
                let un: f64 = row.iter().zip(&rh).map(|(a, b)| a * b).sum();
                *nk = (ax[2 * h + k] + un + self.bias[2 * h + k]).tanh();
            }
            let next: Vec<f64> = (0..h).map(|k| (1.0 - z[k]) * n[k] + z[k] * state[k]).collect();
            steps.push(Step {
                x: x.clone(),
                h_prev: std::mem::replace(&mut state, next),
                z,
                r,
                n,
                rh,
            });
        }
        Ok((state, GruCache { steps }))
    }

    /// Backpropagation through time from `d_final` (gradient w.r.t. the last hidden state).
    /// Returns the gradient for each input step.
    pub fn backward(&self, cache: &GruCache, d_final: &[f64], grads: &mut Gru) -> Vec<Vec<f64>> {
        let h = self.hidden_width();
        let mut dh = d_final.to_vec();
        let mut dxs = vec![Vec::new(); cache.steps.len()];
        for (t, s) in cache.steps.iter().enumerate().rev() {
            let mut da = vec![0.0; 3 * h];
            let mut dh_prev = vec![0.0; h];
            for k in 0..h {
                let dn = dh[k] * (1.0 - s.z[k]);
                let dz = dh[k] * (s.h_prev[k] - s.n[k]);
                dh_prev[k] = dh[k] * s.z[k];
                da[2 * h + k] = dn * (1.0 - s.n[k] * s.n[k]);
                da[k] = dz * s.z[k] * (1.0 - s.z[k]);
            }
            // Candidate path through the reset-gated state.
            let mut d_rh = vec![0.0; h];
            for k in 0..h {
                let a = da[2 * h + k];
                if a == 0.0 {
                    continue;
                }
                for (d, w) in d_rh.iter_mut().zip(self.w_hidden.row(2 * h + k)) {
                    *d += a * w;
                }
            }
            for k in 0..h {
                let dr = d_rh[k] * s.h_prev[k];
                dh_prev[k] += d_rh[k] * s.r[k];
                da[h + k] = dr * s.r[k] * (1.0 - s.r[k]);
            }

            add_outer(&mut grads.w_input, &da, &s.x);
            for gate in 0..2 {
                for k in 0..h {
                    let a = da[gate * h + k];
                    if a == 0.0 {
                        continue;
                    }
                    let row = grads.w_hidden.row_mut(gate * h + k);
                    for (g, hp) in row.iter_mut().zip(&s.h_prev) {
                        *g += a * hp;
                    }
                }
            }
            for k in 0..h {
                let a = da[2 * h + k];
                if a == 0.0 {
                    continue;
                }
                let row = grads.w_hidden.row_mut(2 * h + k);
                for (g, v) in row.iter_mut().zip(&s.rh) {
                    *g += a * v;
                }
            }
            for (g, a) in grads.bias.iter_mut().zip(&da) {
                *g += a;
            }

            // Update and reset gates see the raw previous state.
            for gate in 0..2 {
                for k in 0..h {
                    let a = da[gate * h + k];
                    if a == 0.0 {
                        continue;
                    }
                    for (d, w) in dh_prev.iter_mut().zip(self.w_hidden.row(gate * h + k)) {
                        *d += a * w;
                    }
                }
            }
            dxs[t] = matvec_t(&self.w_input, &da);
            dh = dh_prev;
        }
        dxs
    }

    pub(crate) fn push_blocks<'a>(&'a self, prefix: &str, out: &mut Vec<ParamBlock<'a>>) {
        push_matrix(out, format!("{prefix}.w_input"), &self.w_input);
        push_matrix(out, format!("{prefix}.w_hidden"), &self.w_hidden);
        push_vector(out, format!("{prefix}.bias"), &self.bias);
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamBlockMut<'a>>) {
        push_matrix_mut(out, format!("{prefix}.w_input"), &mut self.w_input);
        push_matrix_mut(out, format!("{prefix}.w_hidden"), &mut self.w_hidden);
        push_vector_mut(out, format!("{prefix}.bias"), &mut self.bias);
    }
}

impl Parameterized for Gru {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        self.push_blocks("gru", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut out = Vec::new();
        self.push_blocks_mut("gru", &mut out);
        out
    }
}

/// Recorded state of one question encoding, enough for backprop.
#[derive(Clone, Debug)]
pub struct GruTrace {
    pub cache: GruCache,
    pub mask: DropoutMask,
}

/// Encode a token-embedding sequence; dropout is applied to the final hidden state and is the
/// identity when `training` is false.
pub fn gru_encode(
    tokens: &[Vec<f64>],
    params: &Gru,
    dropout_rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Vec<f64>, GruTrace)> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {dropout_rate} not in [0, 1)")));
    }
    let (h, cache) = params.encode(tokens)?;
    let mask = DropoutMask::for_pass(h.len(), dropout_rate, training, rng);
    Ok((mask.apply(&h), GruTrace { cache, mask }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{grad_check, grad_check_slice};

    fn seq(rng: &mut Rng, len: usize, width: usize) -> Vec<Vec<f64>> {
        (0..len).map(|_| (0..width).map(|_| rng.normal()).collect()).collect()
    }

    #[test]
    fn output_has_hidden_width() {
        let mut rng = Rng::new(1);
        let gru = Gru::init(4, 7, &mut rng).unwrap();
        let (h, _) = gru_encode(&seq(&mut rng, 1, 4), &gru, 0.3, false, &mut rng).unwrap();
        assert_eq!(h.len(), 7);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let gru = Gru::zeros(2, 2);
        let err = gru_encode(&[], &gru, 0.0, false, &mut Rng::new(0)).unwrap_err();
        assert_eq!(err.to_string(), "empty question");
    }

    #[test]
    fn inference_ignores_the_seed() {
        let mut rng = Rng::new(2);
        let gru = Gru::init(3, 5, &mut rng).unwrap();
        let xs = seq(&mut rng, 4, 3);
        let (a, _) = gru_encode(&xs, &gru, 0.3, false, &mut Rng::new(10)).unwrap();
        let (b, _) = gru_encode(&xs, &gru, 0.3, false, &mut Rng::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_mode_is_deterministic_given_seed() {
        let mut rng = Rng::new(4);
        let gru = Gru::init(3, 16, &mut rng).unwrap();
        let xs = seq(&mut rng, 2, 3);
        let (a, _) = gru_encode(&xs, &gru, 0.3, true, &mut Rng::new(8)).unwrap();
        let (b, _) = gru_encode(&xs, &gru, 0.3, true, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let gru = Gru::init(4, 5, &mut rng).unwrap();
        let xs = seq(&mut rng, 3, 4);
        let w: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let loss_of = |g: &Gru, xs: &[Vec<f64>]| -> f64 {
            let (h, _) = g.encode(xs).unwrap();
            h.iter().zip(&w).map(|(a, b)| a * b).sum()
        };

        let (_, cache) = gru.encode(&xs).unwrap();
        let mut grads = gru.zeros_like();
        let dxs = gru.backward(&cache, &w, &mut grads);

        let report = grad_check(&gru, &grads, 1e-5, |g| Ok(loss_of(g, &xs))).unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");

        // Input gradients, flattened across steps.
        let flat: Vec<f64> = xs.iter().flatten().copied().collect();
        let dflat: Vec<f64> = dxs.iter().flatten().copied().collect();
        let err = grad_check_slice(&flat, &dflat, 1e-5, |v| {
            let xs: Vec<Vec<f64>> = v.chunks(4).map(|c| c.to_vec()).collect();
            loss_of(&gru, &xs)
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
