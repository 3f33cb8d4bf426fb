use serde::{Deserialize, Serialize};

use super::matrix::{accumulate_dzt_x, matmul_a_wt, matmul_dz_w, Matrix};
use super::params::{glorot_uniform, push_matrix, push_matrix_mut, push_vector, push_vector_mut};
use super::params::{ParamBlock, ParamBlockMut, Parameterized};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Layer widths `[input, hidden.., output]`: rectifier on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs an input width and at least one layer".into(),
            ));
        }
        if let Some(pos) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidArgument(format!("MLP width {pos} is zero")));
        }
        Ok(Self {
            widths,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        })
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layer_count() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// Affine map `y = W x + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let mut l = Self::zeros(input, output);
        glorot_uniform(&mut l.weight, rng);
        l
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    pub layers: Vec<Linear>,
}

/// Everything backprop needs: the input to every layer, plus the output when it was rectified.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    rectified_output: Option<Matrix>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.inputs[0].rows()
    }

    /// On/off state of every rectified unit, in layer then row order. Two passes with equal
    /// patterns lie on the same linear piece of the network.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.inputs[1..]
            .iter()
            .chain(self.rectified_output.as_ref())
            .flat_map(|m| m.data().iter().map(|&v| v > 0.0))
            .collect()
    }

    /// Input to layer `l` (post-activation of layer `l - 1`).
    pub fn layer_input(&self, l: usize) -> &Matrix {
        &self.inputs[l]
    }
}

/// What the caller wants back for the network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputGrad {
    None,
    /// Full `batch × input` gradient.
    Full,
    /// Gradient summed over the batch (`1 × input`).
    Summed,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear::zeros(w[0], w[1]))
            .collect();
        Self { spec, layers }
    }

    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        Self { spec, layers }
    }

    /// Assemble from explicit layers, checking that adjacent widths chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Linear>) -> Result<Self> {
        if layers.len() != spec.layer_count() {
            return Err(Error::Shape {
                context: "mlp layer count".into(),
                expected: spec.layer_count(),
                actual: layers.len(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            let (i, o) = (spec.widths[l], spec.widths[l + 1]);
            if layer.input_width() != i || layer.output_width() != o || layer.bias.len() != o {
                return Err(Error::Shape {
                    context: format!("mlp layer {l} weights ({}x{})", layer.output_width(), layer.input_width()),
                    expected: o * i,
                    actual: layer.output_width() * layer.input_width(),
                });
            }
        }
        Ok(Self { spec, layers })
    }

    /// Zero the final layer's weights and biases.
    pub fn zero_last_layer(&mut self) {
        if let Some(l) = self.layers.last_mut() {
            l.weight.data_mut().fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.spec.input_width() {
            return Err(Error::Shape {
                context: "mlp layer 0 input".into(),
                expected: self.spec.input_width(),
                actual: x.cols(),
            });
        }
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::zeros(batch, layer.output_width());
            matmul_a_wt(&current, &layer.weight, &mut z);
            for r in 0..batch {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if self.spec.activation(l) == Activation::Relu {
                for v in z.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            inputs.push(current);
            current = z;
        }
        let rectified_output = (self.spec.output_activation == Activation::Relu).then(|| current.clone());
        Ok((current, MlpCache { inputs, rectified_output }))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(Matrix::row_vector(x))?.0.into_vec())
    }

    /// Backpropagate `dy` (`batch × output`), accumulating weight gradients into `grads`.
    pub fn backward_batch(
        &self,
        cache: &MlpCache,
        dy: Matrix,
        grads: &mut Mlp,
        input_grad: InputGrad,
    ) -> Option<Matrix> {
        assert_eq!(dy.rows(), cache.batch(), "mlp backward batch");
        assert_eq!(dy.cols(), self.spec.output_width(), "mlp backward width");
        let mut dz = dy;
        for l in (0..self.layers.len()).rev() {
            if self.spec.activation(l) == Activation::Relu {
                let post = if l + 1 == self.layers.len() {
                    cache.rectified_output.as_ref().expect("rectified output cached")
                } else {
                    &cache.inputs[l + 1]
                };
                for (d, p) in dz.data_mut().iter_mut().zip(post.data()) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            accumulate_dzt_x(&dz, &cache.inputs[l], &mut g.weight);
            for (gb, s) in g.bias.iter_mut().zip(dz.column_sums()) {
                *gb += s;
            }
            if l > 0 {
                let mut dx = Matrix::zeros(dz.rows(), layer.input_width());
                matmul_dz_w(&dz, &layer.weight, &mut dx);
                dz = dx;
            } else {
                return match input_grad {
                    InputGrad::None => None,
                    InputGrad::Full => {
                        let mut dx = Matrix::zeros(dz.rows(), layer.input_width());
                        matmul_dz_w(&dz, &layer.weight, &mut dx);
                        Some(dx)
                    }
                    InputGrad::Summed => {
                        let summed = Matrix::row_vector(&dz.column_sums());
                        let mut dx = Matrix::zeros(1, layer.input_width());
                        matmul_dz_w(&summed, &layer.weight, &mut dx);
                        Some(dx)
                    }
                };
            }
        }
        unreachable!("mlp has at least one layer")
    }

    pub(crate) fn push_blocks<'a>(&'a self, prefix: &str, out: &mut Vec<ParamBlock<'a>>) {
        for (l, layer) in self.layers.iter().enumerate() {
            push_matrix(out, format!("{prefix}.{l}.weight"), &layer.weight);
            push_vector(out, format!("{prefix}.{l}.bias"), &layer.bias);
        }
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamBlockMut<'a>>) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            push_matrix_mut(out, format!("{prefix}.{l}.weight"), &mut layer.weight);
            push_vector_mut(out, format!("{prefix}.{l}.bias"), &mut layer.bias);
        }
    }
}

impl Parameterized for Mlp {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        self.push_blocks("mlp", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut out = Vec::new();
        self.push_blocks_mut("mlp", &mut out);
        out
    }
}
