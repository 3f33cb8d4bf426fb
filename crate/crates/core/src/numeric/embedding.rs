use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{Error, Result};

/// Learnable token-embedding table, one row per vocabulary entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Matrix,
}

impl Embedding {
    pub fn zeros(vocab: usize, width: usize) -> Self {
        Self {
            table: Matrix::zeros(vocab, width),
        }
    }

    /// Entries drawn from N(0, 1/width).
    pub fn init(vocab: usize, width: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (width.max(1) as f64).sqrt();
        let mut table = Matrix::zeros(vocab, width);
        for v in table.data_mut() {
            *v = scale * rng.normal();
        }
        Self { table }
    }

    pub fn width(&self) -> usize {
        self.table.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        ids.iter()
            .map(|&id| {
                if id >= self.vocab_size() {
                    Err(Error::Shape {
                        context: "embedding token id".into(),
                        expected: self.vocab_size(),
                        actual: id,
                    })
                } else {
                    Ok(self.table.row(id).to_vec())
                }
            })
            .collect()
    }

    pub fn accumulate(&mut self, ids: &[usize], grads: &[Vec<f64>]) {
        for (&id, g) in ids.iter().zip(grads) {
            for (t, v) in self.table.row_mut(id).iter_mut().zip(g) {
                *t += v;
            }
        }
    }
}
