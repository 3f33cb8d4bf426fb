use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::config::RcnConfig;
use super::pool::{rn_pool, RnPool};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::geometry::{BackgroundPatch, RegionProposal};
use crate::numeric::params::{ParamBlock, ParamBlockMut, Parameterized};
use crate::numeric::{gru_encode, softmax, softmax_cross_entropy, Embedding, Gru, GruTrace, InputGrad, Matrix, Mlp, MlpCache, MlpSpec, Rng};
use crate::question::Vocabulary;

/// Every trainable block of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcnParams {
    pub embedding: Embedding,
    pub gru: Gru,
    pub g_objects: Mlp,
    pub f_objects: Mlp,
    pub g_background: Mlp,
    pub f_background: Mlp,
    pub head: Mlp,
}

struct Specs {
    g: MlpSpec,
    f: MlpSpec,
    head: MlpSpec,
}

fn specs(config: &RcnConfig) -> Result<Specs> {
    let mut g = vec![config.pair_input_width()];
    g.extend(&config.relation_hidden);
    g.push(config.relation_output);
    let mut f = vec![config.relation_output];
    f.extend(&config.readout_hidden);
    f.push(config.readout_output);
    Ok(Specs {
        g: MlpSpec::new(g)?,
        f: MlpSpec::new(f)?,
        head: MlpSpec::new(vec![2 * config.readout_output, config.head_hidden, config.classes()])?,
    })
}

impl RcnParams {
    /// Glorot weights and zero biases, except that the head's last layer starts at zero so an
    /// untrained model predicts the uniform distribution.
    pub fn init(config: &RcnConfig, vocab_size: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let s = specs(config)?;
        let mut head = Mlp::init(s.head.clone(), rng);
        head.zero_last_layer();
        Ok(Self {
            embedding: Embedding::init(vocab_size, config.embedding_width, rng),
            gru: Gru::init(config.embedding_width, config.question_width, rng)?,
            g_objects: Mlp::init(s.g.clone(), rng),
            f_objects: Mlp::init(s.f.clone(), rng),
            g_background: Mlp::init(s.g, rng),
            f_background: Mlp::init(s.f, rng),
            head,
        })
    }

    pub fn zeros(config: &RcnConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        let s = specs(config)?;
        Ok(Self {
            embedding: Embedding::zeros(vocab_size, config.embedding_width),
            gru: Gru::zeros(config.embedding_width, config.question_width),
            g_objects: Mlp::zeros(s.g.clone()),
            f_objects: Mlp::zeros(s.f.clone()),
            g_background: Mlp::zeros(s.g),
            f_background: Mlp::zeros(s.f),
            head: Mlp::zeros(s.head),
        })
    }
}

impl Parameterized for RcnParams {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        crate::numeric::params::push_matrix(&mut out, "embedding".into(), &self.embedding.table);
        self.gru.push_blocks("gru", &mut out);
        self.g_objects.push_blocks("g_objects", &mut out);
        self.f_objects.push_blocks("f_objects", &mut out);
        self.g_background.push_blocks("g_background", &mut out);
        self.f_background.push_blocks("f_background", &mut out);
        self.head.push_blocks("head", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut out = Vec::new();
        crate::numeric::params::push_matrix_mut(&mut out, "embedding".into(), &mut self.embedding.table);
        self.gru.push_blocks_mut("gru", &mut out);
        self.g_objects.push_blocks_mut("g_objects", &mut out);
        self.f_objects.push_blocks_mut("f_objects", &mut out);
        self.g_background.push_blocks_mut("g_background", &mut out);
        self.f_background.push_blocks_mut("f_background", &mut out);
        self.head.push_blocks_mut("head", &mut out);
        out
    }
}

/// One counting query: the regions of an image and the encoded question.
#[derive(Clone, Copy, Debug)]
pub struct RcnInput<'a> {
    pub proposals: &'a [RegionProposal],
    pub patches: &'a [BackgroundPatch],
    pub tokens: &'a [usize],
}

/// Softmax over counts `0..=max_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub count: usize,
}

impl Prediction {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probs = softmax(&logits);
        let count = predict_count(&logits);
        Self { logits, probs, count }
    }
}

/// Arg-max class, ties resolved toward the lower count.
pub fn predict_count(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Everything recorded by a forward pass that backprop and saliency need.
#[derive(Clone, Debug)]
pub struct RcnTrace {
    /// Canonical proposal order used for pairing (`order[k]` is an index into the input).
    pub order: Vec<usize>,
    tokens: Vec<usize>,
    question: GruTrace,
    pub objects: RnPool,
    pub background: Option<RnPool>,
    head_cache: MlpCache,
}

impl RcnTrace {
    /// Pair-network evaluations in both branches.
    pub fn pair_evaluations(&self) -> usize {
        self.objects.pair_count() + self.background.as_ref().map_or(0, RnPool::pair_count)
    }

    /// On/off state of every ReLU unit in the pass.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = self.objects.activation_pattern();
        if let Some(b) = &self.background {
            out.extend(b.activation_pattern());
        }
        out.extend(self.head_cache.activation_pattern());
        out
    }
}

/// Result of [`RcnModel::forward`]; the trace is absent when caches were not retained.
#[derive(Clone, Debug)]
pub struct Forward {
    pub prediction: Prediction,
    pub trace: Option<RcnTrace>,
}

fn compare_proposals(a: &RegionProposal, b: &RegionProposal) -> Ordering {
    let key = |p: &RegionProposal| {
        let bb = p.bbox;
        [bb.x_min, bb.y_min, bb.x_max, bb.y_max]
    };
    a.features
        .iter()
        .zip(&b.features)
        .map(|(x, y)| x.total_cmp(y))
        .chain(key(a).iter().zip(key(b).iter()).map(|(x, y)| x.total_cmp(y)))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Order in which proposals are paired. Sorting by content makes the pair sums, and therefore
/// the logits, bit-identical under any permutation of the input list.
pub fn canonical_order(proposals: &[RegionProposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| compare_proposals(&proposals[a], &proposals[b]));
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcnModel {
    pub config: RcnConfig,
    pub vocab: Vocabulary,
    pub params: RcnParams,
}

impl RcnModel {
    pub fn new(config: RcnConfig, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        let params = RcnParams::init(&config, vocab.len(), rng)?;
        Ok(Self { config, vocab, params })
    }

    pub const KIND: &'static str = "rcn";

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::capture(Self::KIND, &self.config, &self.vocab, &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(Self::KIND)?;
        let config: RcnConfig = ckpt.config()?;
        let mut params = RcnParams::zeros(&config, ckpt.vocabulary.len())?;
        ckpt.restore_into(&mut params)?;
        Ok(Self { config, vocab: ckpt.vocabulary.clone(), params })
    }

    fn check_input(&self, input: &RcnInput) -> Result<()> {
        if input.tokens.is_empty() {
            return Err(Error::EmptyQuestion);
        }
        let k = self.config.feature_width;
        for f in input
            .proposals
            .iter()
            .map(|p| p.features.len())
            .chain(input.patches.iter().map(|p| p.features.len()))
        {
            if f != k {
                return Err(Error::Shape {
                    context: "region feature width".into(),
                    expected: k,
                    actual: f,
                });
            }
        }
        if self.params.head.spec().output_width() != self.config.classes() {
            return Err(Error::Shape {
                context: "count classes (max_count + 1) vs head output".into(),
                expected: self.config.classes(),
                actual: self.params.head.spec().output_width(),
            });
        }
        Ok(())
    }

    /// `logits = h(RN(O,O) ⊕ RN(O,B))`. Ablations zero the corresponding inputs: the
    /// background slot becomes a zero vector and every spatial relation becomes zero.
    pub fn forward(&self, input: &RcnInput, training: bool, rng: &mut Rng) -> Result<Forward> {
        self.check_input(input)?;
        let p = &self.params;
        let embedded = p.embedding.lookup(input.tokens)?;
        let (question, q_trace) = gru_encode(&embedded, &p.gru, self.config.dropout, training, rng)?;

        let order = canonical_order(input.proposals);
        let left: Vec<&RegionProposal> = order.iter().map(|&i| &input.proposals[i]).collect();
        let use_location = self.config.use_location;
        let objects = rn_pool(&left, &left, &question, &p.g_objects, &p.f_objects, use_location)?;
        let background = if self.config.use_background {
            let right: Vec<&BackgroundPatch> = input.patches.iter().collect();
            Some(rn_pool(&left, &right, &question, &p.g_background, &p.f_background, use_location)?)
        } else {
            None
        };

        let mut head_input = objects.output.clone();
        match &background {
            Some(b) => head_input.extend_from_slice(&b.output),
            None => head_input.extend(std::iter::repeat_n(0.0, self.config.readout_output)),
        }
        let (logits, head_cache) = p.head.forward_batch(Matrix::row_vector(&head_input))?;
        let logits = logits.into_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss("non-finite logits".into()));
        }
        Ok(Forward {
            prediction: Prediction::from_logits(logits),
            trace: Some(RcnTrace {
                order,
                tokens: input.tokens.to_vec(),
                question: q_trace,
                objects,
                background,
                head_cache,
            }),
        })
    }

    /// Inference-mode prediction without retained caches.
    pub fn predict(&self, input: &RcnInput) -> Result<Prediction> {
        let mut rng = Rng::new(0);
        Ok(self.forward(input, false, &mut rng)?.prediction)
    }

    /// Cross-entropy loss of a forward pass against `target`, accumulating exact gradients for
    /// every parameter block into `grads`.
    pub fn backward(&self, forward: &Forward, target: usize, grads: &mut RcnParams) -> Result<f64> {
        let trace = forward.trace.as_ref().ok_or(Error::MissingCache("rcn forward trace"))?;
        let ce = softmax_cross_entropy(&forward.prediction.logits, target)?;
        let d_logits = Matrix::row_vector(&ce.grad_logits);
        self.backward_from_logits(trace, d_logits, grads);
        Ok(ce.loss)
    }

    fn backward_from_logits(&self, trace: &RcnTrace, d_logits: Matrix, grads: &mut RcnParams) {
        let p = &self.params;
        let d_head_in = p
            .head
            .backward_batch(&trace.head_cache, d_logits, &mut grads.head, InputGrad::Full)
            .expect("full input gradient requested")
            .into_vec();
        let split = self.config.readout_output;
        let mut d_question = trace.objects.backward(
            &p.g_objects,
            &p.f_objects,
            &d_head_in[..split],
            &mut grads.g_objects,
            &mut grads.f_objects,
        );
        if let Some(bg) = &trace.background {
            let dq = bg.backward(
                &p.g_background,
                &p.f_background,
                &d_head_in[split..],
                &mut grads.g_background,
                &mut grads.f_background,
            );
            for (a, b) in d_question.iter_mut().zip(dq) {
                *a += b;
            }
        }
        let d_hidden = trace.question.mask.backward(&d_question);
        let d_tokens = p.gru.backward(&trace.question.cache, &d_hidden, &mut grads.gru);
        grads.embedding.accumulate(&trace.tokens, &d_tokens);
    }

    /// Convenience: forward in the given mode, then backward. Returns the loss.
    pub fn loss_and_grad(
        &self,
        input: &RcnInput,
        target: usize,
        training: bool,
        rng: &mut Rng,
        grads: &mut RcnParams,
    ) -> Result<f64> {
        let fwd = self.forward(input, training, rng)?;
        self.backward(&fwd, target, grads)
    }

    /// Per-proposal relevance in `[0, 1]`, in input order.
    ///
    /// For the predicted class `c`, each object–background pair scores
    /// `max(0, ⟨∂logit_c/∂g(o_i, b_j), g(o_i, b_j)⟩)` taken at the background pair network's
    /// output. A proposal scores the max over patches; scores are then min–max scaled, and a
    /// degenerate range maps every proposal to 0.
    pub fn proposal_scores(&self, input: &RcnInput) -> Result<Vec<f64>> {
        if input.proposals.is_empty() {
            return Err(Error::InvalidArgument("proposal scores need at least one proposal".into()));
        }
        if input.patches.is_empty() {
            return Err(Error::InvalidArgument("proposal scores need at least one background patch".into()));
        }
        if !self.config.use_background {
            return Err(Error::InvalidArgument("proposal scores need the background branch".into()));
        }
        let fwd = self.forward(input, false, &mut Rng::new(0))?;
        let trace = fwd.trace.as_ref().ok_or(Error::MissingCache("rcn forward trace"))?;
        let bg = trace.background.as_ref().ok_or(Error::MissingCache("background branch"))?;
        let p = &self.params;

        let mut one_hot = vec![0.0; self.config.classes()];
        one_hot[fwd.prediction.count] = 1.0;
        let mut scratch = p.zeros_like();
        let d_head_in = p
            .head
            .backward_batch(&trace.head_cache, Matrix::row_vector(&one_hot), &mut scratch.head, InputGrad::Full)
            .expect("full input gradient requested")
            .into_vec();
        // Gradient of the logit w.r.t. the pooled sum, which every pair output shares.
        let d_pooled = p
            .f_background
            .backward_batch(
                bg.readout_cache(),
                Matrix::row_vector(&d_head_in[self.config.readout_output..]),
                &mut scratch.f_background,
                InputGrad::Full,
            )
            .expect("full input gradient requested")
            .into_vec();

        let n = input.proposals.len();
        let mut canonical_scores = vec![f64::NEG_INFINITY; n];
        for (row, &(i, _)) in bg.pairs.iter().enumerate() {
            let activation = bg.pair_outputs.row(row);
            let s: f64 = activation.iter().zip(&d_pooled).map(|(a, g)| a * g).sum::<f64>().max(0.0);
            canonical_scores[i] = canonical_scores[i].max(s);
        }
        let mut scores = vec![0.0; n];
        for (pos, &orig) in trace.order.iter().enumerate() {
            scores[orig] = canonical_scores[pos];
        }
        Ok(min_max_scale(&scores))
    }
}

/// Min–max scale into `[0, 1]`; a zero range maps everything to 0.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 1e-12 * hi.abs().max(1.0)) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::numeric::grad_check;
    use crate::numeric::params::glorot_uniform;

    fn tiny_config() -> RcnConfig {
        RcnConfig {
            feature_width: 4,
            embedding_width: 3,
            question_width: 3,
            relation_hidden: vec![6, 5, 5],
            relation_output: 4,
            readout_hidden: vec![5],
            readout_output: 4,
            head_hidden: 5,
            max_count: 5,
            ..RcnConfig::default()
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::build(["how many dogs are on the grass"])
    }

    fn random_box(rng: &mut Rng) -> BoundingBox {
        let x = rng.uniform_range(0.0, 50.0);
        let y = rng.uniform_range(0.0, 50.0);
        let w = rng.uniform_range(25.0, 50.0);
        let h = rng.uniform_range(25.0, 50.0);
        BoundingBox::new(x, y, x + w, y + h, 100.0, 100.0).unwrap()
    }

    fn features(rng: &mut Rng, k: usize) -> Vec<f64> {
        (0..k).map(|_| rng.normal() / (k as f64).sqrt()).collect()
    }

    fn scene(rng: &mut Rng, n: usize, m: usize, k: usize) -> (Vec<RegionProposal>, Vec<BackgroundPatch>) {
        let props = (0..n)
            .map(|_| RegionProposal { bbox: random_box(rng), features: features(rng, k) })
            .collect();
        let patches = (0..m)
            .map(|_| BackgroundPatch { bbox: random_box(rng), features: features(rng, k) })
            .collect();
        (props, patches)
    }

    /// A model whose head is random too, so every block influences the logits.
    fn model(config: RcnConfig, seed: u64) -> RcnModel {
        let mut rng = Rng::new(seed);
        let mut m = RcnModel::new(config, vocab(), &mut rng).unwrap();
        glorot_uniform(&mut m.params.head.layers.last_mut().unwrap().weight, &mut rng);
        m
    }

    #[test]
    fn untrained_model_predicts_uniformly() {
        let m = RcnModel::new(tiny_config(), vocab(), &mut Rng::new(3)).unwrap();
        let mut rng = Rng::new(4);
        let (p, b) = scene(&mut rng, 3, 2, 4);
        let pred = m.predict(&RcnInput { proposals: &p, patches: &b, tokens: &[1, 2] }).unwrap();
        assert!(pred.probs.iter().all(|&q| (q - 1.0 / 6.0).abs() < 1e-15));
        assert_eq!(pred.count, 0);
    }

    #[test]
    fn pair_evaluations_are_n_squared_plus_nm() {
        let m = model(tiny_config(), 1);
        let mut rng = Rng::new(2);
        let (p, b) = scene(&mut rng, 3, 4, 4);
        let input = RcnInput { proposals: &p, patches: &b, tokens: &[1, 2, 3] };
        let trace = m.forward(&input, false, &mut rng).unwrap().trace.unwrap();
        assert_eq!(trace.objects.pair_count(), 9);
        assert_eq!(trace.background.as_ref().unwrap().pair_count(), 12);
        assert_eq!(trace.pair_evaluations(), 21);
    }

    #[test]
    fn single_proposal_pool_is_readout_of_self_pair() {
        let m = model(tiny_config(), 1);
        let mut rng = Rng::new(4);
        let (p, b) = scene(&mut rng, 1, 0, 4);
        let q = vec![0.1, -0.2, 0.3];
        let left: Vec<&RegionProposal> = p.iter().collect();
        let pool = rn_pool(&left, &left, &q, &m.params.g_objects, &m.params.f_objects, true).unwrap();
        let s = crate::geometry::spatial_relation(&p[0], &p[0]).unwrap();
        let mut row = p[0].features.clone();
        row.extend(&p[0].features);
        row.extend(s.as_slice());
        row.extend(&q);
        let g = m.params.g_objects.forward(&row).unwrap();
        let f = m.params.f_objects.forward(&g).unwrap();
        assert_eq!(pool.output, f);
        let right: Vec<&BackgroundPatch> = b.iter().collect();
        let empty = rn_pool(&left, &right, &q, &m.params.g_background, &m.params.f_background, true).unwrap();
        assert_eq!(empty.pair_count(), 0);
        assert_eq!(empty.output, m.params.f_background.forward(&[0.0; 4]).unwrap());
    }

    #[test]
    fn pool_rejects_feature_width_mismatch() {
        let m = model(tiny_config(), 1);
        let mut rng = Rng::new(4);
        let (p, _) = scene(&mut rng, 2, 0, 5);
        let left: Vec<&RegionProposal> = p.iter().collect();
        let err = rn_pool(&left, &left, &[0.0; 3], &m.params.g_objects, &m.params.f_objects, true);
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_proposals_still_predict() {
        let m = model(tiny_config(), 1);
        let input = RcnInput { proposals: &[], patches: &[], tokens: &[1] };
        let p = m.predict(&input).unwrap();
        assert_eq!(p.logits.len(), 6);
        assert!(p.count <= 5);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_question_and_width_mismatch() {
        let m = model(tiny_config(), 1);
        let mut rng = Rng::new(2);
        let (p, b) = scene(&mut rng, 2, 2, 4);
        let empty = RcnInput { proposals: &p, patches: &b, tokens: &[] };
        assert!(matches!(m.predict(&empty), Err(Error::EmptyQuestion)));
        let (p5, _) = scene(&mut rng, 2, 0, 5);
        let wide = RcnInput { proposals: &p5, patches: &b, tokens: &[1] };
        assert!(matches!(m.predict(&wide), Err(Error::Shape { .. })));
        let mut bad = m.clone();
        bad.config.max_count = 9;
        let ok = RcnInput { proposals: &p, patches: &b, tokens: &[1] };
        assert!(matches!(bad.predict(&ok), Err(Error::Shape { .. })));
    }

    #[test]
    fn permutations_give_identical_logits() {
        let m = model(tiny_config(), 7);
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let (mut p, b) = scene(&mut rng, 5, 3, 4);
            let base = m.predict(&RcnInput { proposals: &p, patches: &b, tokens: &[2, 3] }).unwrap();
            for _ in 0..5 {
                rng.shuffle(&mut p);
                let other = m.predict(&RcnInput { proposals: &p, patches: &b, tokens: &[2, 3] }).unwrap();
                assert_eq!(other.logits, base.logits);
            }
        }
    }

    #[test]
    fn zero_background_readout_matches_disabled_branch() {
        let mut on = model(tiny_config(), 3);
        for layer in on.params.f_background.layers.last_mut().into_iter() {
            layer.weight.data_mut().fill(0.0);
            layer.bias.fill(0.0);
        }
        let mut off = on.clone();
        off.config.use_background = false;
        let mut rng = Rng::new(5);
        let (p, b) = scene(&mut rng, 3, 4, 4);
        let input = RcnInput { proposals: &p, patches: &b, tokens: &[1, 4] };
        assert_eq!(on.predict(&input).unwrap().logits, off.predict(&input).unwrap().logits);
        let fresh = model(tiny_config(), 3);
        assert_ne!(fresh.predict(&input).unwrap().logits, on.predict(&input).unwrap().logits);
    }

    #[test]
    fn without_location_translation_is_invisible() {
        let config = RcnConfig { use_location: false, ..tiny_config() };
        let m = model(config, 3);
        let mut rng = Rng::new(6);
        let (p, b) = scene(&mut rng, 3, 2, 4);
        let shift = |bb: BoundingBox| bb.translated(7.0, -3.0);
        let p2: Vec<_> = p.iter().map(|r| RegionProposal { bbox: shift(r.bbox), features: r.features.clone() }).collect();
        let b2: Vec<_> = b.iter().map(|r| BackgroundPatch { bbox: shift(r.bbox), features: r.features.clone() }).collect();
        let a = m.predict(&RcnInput { proposals: &p, patches: &b, tokens: &[1] }).unwrap();
        let c = m.predict(&RcnInput { proposals: &p2, patches: &b2, tokens: &[1] }).unwrap();
        assert_eq!(a.logits, c.logits);
        let located = model(tiny_config(), 3);
        let a = located.predict(&RcnInput { proposals: &p, patches: &b, tokens: &[1] }).unwrap();
        let c = located.predict(&RcnInput { proposals: &p2, patches: &b2, tokens: &[1] }).unwrap();
        assert_ne!(a.logits, c.logits);
    }

    struct GradCase {
        proposals: usize,
        patches: usize,
        tokens: usize,
        epsilon: f64,
    }

    /// Relative gradient error at a random point, or `None` when some perturbation crosses a
    /// ReLU kink and finite differences are not meaningful there.
    fn check_gradients(config: RcnConfig, seed: u64, training: bool, case: GradCase) -> Option<f64> {
        let mut m = model(config, seed);
        let mut rng = Rng::new(seed + 100);
        // Nonzero biases keep dead rows from sitting exactly on a kink.
        for block in m.params.blocks_mut() {
            if block.name.ends_with("bias") {
                block.data.iter_mut().for_each(|b| *b = rng.uniform_range(-0.2, 0.2));
            }
        }
        let (p, b) = scene(&mut rng, case.proposals, case.patches, 4);
        let tokens: Vec<usize> = (0..case.tokens).map(|_| rng.index(m.vocab.len())).collect();
        let input = RcnInput { proposals: &p, patches: &b, tokens: &tokens };
        let fwd = m.forward(&input, training, &mut Rng::new(9)).unwrap();
        // Targets with vanishing probability push the loss so high that its rounding swamps
        // the finite difference of the smallest gradient entries.
        let plausible: Vec<usize> = (0..m.config.classes()).filter(|&c| fwd.prediction.probs[c] >= 1e-3).collect();
        let target = plausible[rng.index(plausible.len())];
        let mut grads = m.params.zeros_like();
        m.backward(&fwd, target, &mut grads).unwrap();
        let pattern = fwd.trace.unwrap().activation_pattern();
        let mut crossed = false;
        let report = grad_check(&m.params, &grads, case.epsilon, |params: &RcnParams| {
            let probe = RcnModel { config: m.config.clone(), vocab: m.vocab.clone(), params: params.clone() };
            let fwd = probe.forward(&input, training, &mut Rng::new(9))?;
            crossed |= fwd.trace.as_ref().unwrap().activation_pattern() != pattern;
            Ok(softmax_cross_entropy(&fwd.prediction.logits, target)?.loss)
        })
        .unwrap();
        (!crossed).then_some(report.max_relative_error)
    }

    #[test]
    fn two_proposal_scene_gradients() {
        let case = || GradCase { proposals: 2, patches: 2, tokens: 3, epsilon: 1e-4 };
        let err = (0..).find_map(|seed| check_gradients(tiny_config(), seed, true, case())).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let configs = [
            tiny_config(),
            RcnConfig { use_background: false, ..tiny_config() },
            RcnConfig { use_location: false, ..tiny_config() },
        ];
        for (c, config) in configs.into_iter().enumerate() {
            let mut checked = 0;
            for seed in 0..30 {
                let mut rng = Rng::new(seed);
                let case = GradCase {
                    proposals: rng.int_inclusive(0, 3),
                    patches: rng.int_inclusive(0, 4),
                    tokens: rng.int_inclusive(1, 5),
                    epsilon: 3e-4,
                };
                if let Some(err) = check_gradients(config.clone(), 100 * c as u64 + seed, seed % 2 == 0, case) {
                    assert!(err < 1e-3, "config {c} seed {seed}: {err}");
                    checked += 1;
                }
            }
            assert!(checked >= 20);
        }
    }

    #[test]
    fn backward_without_trace_fails() {
        let m = model(tiny_config(), 1);
        let input = RcnInput { proposals: &[], patches: &[], tokens: &[1] };
        let fwd = Forward { prediction: m.predict(&input).unwrap(), trace: None };
        let mut grads = m.params.zeros_like();
        assert!(matches!(m.backward(&fwd, 0, &mut grads), Err(Error::MissingCache(_))));
    }

    #[test]
    fn saturated_head_has_vanishing_gradient() {
        let mut m = model(tiny_config(), 1);
        let head = m.params.head.layers.last_mut().unwrap();
        head.weight.data_mut().fill(0.0);
        head.bias.fill(0.0);
        head.bias[3] = 60.0;
        let mut rng = Rng::new(2);
        let (p, b) = scene(&mut rng, 2, 2, 4);
        let input = RcnInput { proposals: &p, patches: &b, tokens: &[1, 2] };
        let mut grads = m.params.zeros_like();
        let loss = m.loss_and_grad(&input, 3, false, &mut rng, &mut grads).unwrap();
        assert!(loss < 1e-20);
        assert!(grads.squared_norm().sqrt() < 1e-6);
    }

    #[test]
    fn repeated_example_doubles_gradient() {
        let m = model(tiny_config(), 1);
        let mut rng = Rng::new(2);
        let (p, b) = scene(&mut rng, 3, 2, 4);
        let input = RcnInput { proposals: &p, patches: &b, tokens: &[1, 2] };
        let mut once = m.params.zeros_like();
        m.loss_and_grad(&input, 1, false, &mut rng, &mut once).unwrap();
        let mut twice = m.params.zeros_like();
        m.loss_and_grad(&input, 1, false, &mut rng, &mut twice).unwrap();
        m.loss_and_grad(&input, 1, false, &mut rng, &mut twice).unwrap();
        for (a, b) in once.blocks().iter().zip(twice.blocks()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let m = model(tiny_config(), 31);
        let text = m.to_checkpoint().unwrap().to_json().unwrap();
        let back = RcnModel::from_checkpoint(&Checkpoint::from_json(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut rng = Rng::new(1);
        let (p, b) = scene(&mut rng, 3, 2, 4);
        let input = RcnInput { proposals: &p, patches: &b, tokens: &[1, 2] };
        assert_eq!(back.predict(&input).unwrap(), m.predict(&input).unwrap());
    }

    #[test]
    fn predict_count_prefers_lower_on_ties() {
        let mut one_hot = vec![0.0; 16];
        one_hot[4] = 1.0;
        assert_eq!(predict_count(&one_hot), 4);
        let mut tie = vec![0.0; 16];
        tie[2] = 3.0;
        tie[7] = 3.0;
        assert_eq!(predict_count(&tie), 2);
        assert_eq!(predict_count(&[0.5; 16]), 0);
    }

    #[test]
    fn min_max_scale_handles_degenerate_range() {
        assert_eq!(min_max_scale(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
        assert_eq!(min_max_scale(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn proposal_scores_lie_in_unit_interval() {
        let m = model(tiny_config(), 21);
        let mut rng = Rng::new(22);
        for n in 1..6 {
            let (p, b) = scene(&mut rng, n, 3, 4);
            let s = m.proposal_scores(&RcnInput { proposals: &p, patches: &b, tokens: &[1, 2] }).unwrap();
            assert_eq!(s.len(), n);
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            if n == 1 {
                assert_eq!(s, vec![0.0]);
            }
        }
    }

    #[test]
    fn proposal_scores_follow_input_order() {
        let m = model(tiny_config(), 21);
        let mut rng = Rng::new(23);
        let (p, b) = scene(&mut rng, 4, 3, 4);
        let s = m.proposal_scores(&RcnInput { proposals: &p, patches: &b, tokens: &[1] }).unwrap();
        let rev: Vec<_> = p.iter().rev().cloned().collect();
        let mut r = m.proposal_scores(&RcnInput { proposals: &rev, patches: &b, tokens: &[1] }).unwrap();
        r.reverse();
        assert_eq!(s, r);
    }

    #[test]
    fn proposal_scores_preconditions() {
        let m = model(tiny_config(), 1);
        let mut rng = Rng::new(2);
        let (p, b) = scene(&mut rng, 2, 2, 4);
        assert!(m.proposal_scores(&RcnInput { proposals: &[], patches: &b, tokens: &[1] }).is_err());
        assert!(m.proposal_scores(&RcnInput { proposals: &p, patches: &[], tokens: &[1] }).is_err());
        let mut off = m.clone();
        off.config.use_background = false;
        assert!(off.proposal_scores(&RcnInput { proposals: &p, patches: &b, tokens: &[1] }).is_err());
    }
}
