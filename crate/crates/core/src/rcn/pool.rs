//! One relation-network branch: a shared pair network summed over every ordered pair,
//! followed by a readout network.

use crate::error::{Error, Result};
use crate::geometry::{spatial_relation, Region, SPATIAL_WIDTH};
use crate::numeric::{InputGrad, Matrix, Mlp, MlpCache};

/// Forward record of one branch.
#[derive(Clone, Debug)]
pub struct RnPool {
    /// `Σ g(pair)` over all pairs, accumulated in pair order.
    pub pooled: Vec<f64>,
    /// Readout of the pooled vector.
    pub output: Vec<f64>,
    /// `(left, right)` positions of each evaluated pair, row-aligned with `pair_outputs`.
    pub pairs: Vec<(usize, usize)>,
    /// Pair-network output per pair.
    pub pair_outputs: Matrix,
    pair_cache: Option<MlpCache>,
    readout_cache: MlpCache,
    question_offset: usize,
}

impl RnPool {
    /// Number of pair-network evaluations made by this branch.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = self.pair_cache.as_ref().map(MlpCache::activation_pattern).unwrap_or_default();
        out.extend(self.readout_cache.activation_pattern());
        out
    }

    pub fn readout_cache(&self) -> &MlpCache {
        &self.readout_cache
    }

    /// Backpropagate `d_output` through the readout and every pair; returns the gradient with
    /// respect to the question vector.
    pub fn backward(&self, pair_net: &Mlp, readout: &Mlp, d_output: &[f64], pair_grads: &mut Mlp, readout_grads: &mut Mlp) -> Vec<f64> {
        let d_pooled = readout
            .backward_batch(&self.readout_cache, Matrix::row_vector(d_output), readout_grads, InputGrad::Full)
            .expect("full input gradient requested")
            .into_vec();
        let question_width = pair_net.spec().input_width() - self.question_offset;
        let Some(cache) = &self.pair_cache else {
            return vec![0.0; question_width];
        };
        // The sum hands the same upstream gradient to every pair.
        let rows = self.pairs.len();
        let mut d_pairs = Matrix::zeros(rows, d_pooled.len());
        for r in 0..rows {
            d_pairs.row_mut(r).copy_from_slice(&d_pooled);
        }
        let d_input = pair_net
            .backward_batch(cache, d_pairs, pair_grads, InputGrad::Summed)
            .expect("summed input gradient requested");
        d_input.data()[self.question_offset..].to_vec()
    }
}

/// Pair input row: `[left features, right features, spatial relation, question]`.
fn fill_pair_row<L: Region + ?Sized, R: Region + ?Sized>(
    row: &mut [f64],
    left: &L,
    right: &R,
    question: &[f64],
    use_location: bool,
) -> Result<()> {
    let k = left.features().len();
    row[..k].copy_from_slice(left.features());
    row[k..2 * k].copy_from_slice(right.features());
    if use_location {
        let s = spatial_relation(left, right)?;
        row[2 * k..2 * k + SPATIAL_WIDTH].copy_from_slice(s.as_slice());
    }
    row[2 * k + SPATIAL_WIDTH..].copy_from_slice(question);
    Ok(())
}

/// `f(Σ_{i,j} g(left_i, right_j, s_ij, q))` with pairs visited left-major in the given order.
/// An empty pair set feeds the zero vector to `f`. With `use_location` off every `s_ij` is zero.
pub fn rn_pool<L: Region + ?Sized, R: Region + ?Sized>(
    left: &[&L],
    right: &[&R],
    question: &[f64],
    pair_net: &Mlp,
    readout: &Mlp,
    use_location: bool,
) -> Result<RnPool> {
    let width = pair_net.spec().input_width();
    let k = left
        .first()
        .map(|r| r.features().len())
        .or_else(|| right.first().map(|r| r.features().len()))
        .unwrap_or((width.saturating_sub(SPATIAL_WIDTH + question.len())) / 2);
    if 2 * k + SPATIAL_WIDTH + question.len() != width {
        return Err(Error::Shape {
            context: "relation pair input".into(),
            expected: width,
            actual: 2 * k + SPATIAL_WIDTH + question.len(),
        });
    }
    for r in left.iter().map(|r| r.features().len()).chain(right.iter().map(|r| r.features().len())) {
        if r != k {
            return Err(Error::Shape {
                context: "region feature width".into(),
                expected: k,
                actual: r,
            });
        }
    }

    let mut pairs = Vec::with_capacity(left.len() * right.len());
    for i in 0..left.len() {
        for j in 0..right.len() {
            pairs.push((i, j));
        }
    }

    let g_out = pair_net.spec().output_width();
    let (pair_outputs, pair_cache, pooled) = if pairs.is_empty() {
        (Matrix::zeros(0, g_out), None, vec![0.0; g_out])
    } else {
        let mut input = Matrix::zeros(pairs.len(), width);
        for (row, &(i, j)) in pairs.iter().enumerate() {
            fill_pair_row(input.row_mut(row), left[i], right[j], question, use_location)?;
        }
        let (out, cache) = pair_net.forward_batch(input)?;
        let pooled = out.column_sums();
        (out, Some(cache), pooled)
    };
    let (readout_out, readout_cache) = readout.forward_batch(Matrix::row_vector(&pooled))?;
    Ok(RnPool {
        pooled,
        output: readout_out.into_vec(),
        pairs,
        pair_outputs,
        pair_cache,
        readout_cache,
        question_offset: 2 * k + SPATIAL_WIDTH,
    })
}
