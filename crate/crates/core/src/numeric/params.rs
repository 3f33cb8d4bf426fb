//! Named parameter blocks shared by the optimizer, gradient checker and checkpoints.

use super::matrix::Matrix;
use super::rng::Rng;

pub struct ParamBlock<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

pub struct ParamBlockMut<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [f64],
}

/// A structure whose trainable state is a fixed, ordered list of dense blocks.
/// Gradients are stored in a value of the same type.
pub trait Parameterized {
    fn blocks(&self) -> Vec<ParamBlock<'_>>;
    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.data.fill(value);
        }
    }

    fn add_assign(&mut self, other: &Self) {
        let src = other.blocks();
        for (dst, src) in self.blocks_mut().into_iter().zip(src) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for b in self.blocks_mut() {
            for v in b.data.iter_mut() {
                *v *= factor;
            }
        }
    }

    fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.data.iter())
            .map(|v| v * v)
            .sum()
    }

    fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }
}

/// Glorot-uniform fill: uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform(m: &mut Matrix, rng: &mut Rng) {
    let (fan_out, fan_in) = (m.rows(), m.cols());
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    for v in m.data_mut() {
        *v = rng.uniform_range(-limit, limit);
    }
}

pub(crate) fn push_matrix<'a>(out: &mut Vec<ParamBlock<'a>>, name: String, m: &'a Matrix) {
    out.push(ParamBlock {
        name,
        rows: m.rows(),
        cols: m.cols(),
        data: m.data(),
    });
}

pub(crate) fn push_matrix_mut<'a>(out: &mut Vec<ParamBlockMut<'a>>, name: String, m: &'a mut Matrix) {
    let (rows, cols) = (m.rows(), m.cols());
    out.push(ParamBlockMut {
        name,
        rows,
        cols,
        data: m.data_mut(),
    });
}

pub(crate) fn push_vector<'a>(out: &mut Vec<ParamBlock<'a>>, name: String, v: &'a [f64]) {
    out.push(ParamBlock {
        name,
        rows: 1,
        cols: v.len(),
        data: v,
    });
}

pub(crate) fn push_vector_mut<'a>(out: &mut Vec<ParamBlockMut<'a>>, name: String, v: &'a mut [f64]) {
    out.push(ParamBlockMut {
        name,
        rows: 1,
        cols: v.len(),
        data: v,
    });
}
