use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::geometry::BackgroundPatch;
use crate::numeric::params::{push_matrix, push_matrix_mut, ParamBlock, ParamBlockMut, Parameterized};
use crate::numeric::{gru_encode, softmax_cross_entropy, Embedding, Gru, GruTrace, InputGrad, Matrix, Mlp, MlpCache, MlpSpec, Rng};
use crate::question::Vocabulary;
use crate::rcn::Prediction;

/// Which inputs an MLP baseline sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlpInput {
    /// GRU question vector only.
    QuestionOnly,
    /// Mean background-patch feature only.
    ImageOnly,
    /// Both, concatenated.
    QuestionImage,
}

impl MlpInput {
    pub fn uses_question(self) -> bool {
        self != MlpInput::ImageOnly
    }

    pub fn uses_image(self) -> bool {
        self != MlpInput::QuestionOnly
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpBaselineConfig {
    pub input: MlpInput,
    pub feature_width: usize,
    pub embedding_width: usize,
    pub question_width: usize,
    pub hidden: usize,
    pub max_count: usize,
    pub dropout: f64,
}

impl Default for MlpBaselineConfig {
    fn default() -> Self {
        Self {
            input: MlpInput::QuestionImage,
            feature_width: 32,
            embedding_width: 32,
            question_width: 32,
            hidden: 64,
            max_count: 15,
            dropout: 0.3,
        }
    }
}

impl MlpBaselineConfig {
    pub fn input_width(&self) -> usize {
        let q = if self.input.uses_question() { self.question_width } else { 0 };
        let i = if self.input.uses_image() { self.feature_width } else { 0 };
        q + i
    }

    pub fn classes(&self) -> usize {
        self.max_count + 1
    }

    fn spec(&self) -> Result<MlpSpec> {
        if self.hidden == 0 || self.max_count == 0 || self.input_width() == 0 {
            return Err(Error::InvalidArgument("baseline widths and max_count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        MlpSpec::new(vec![self.input_width(), self.hidden, self.classes()])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionEncoder {
    pub embedding: Embedding,
    pub gru: Gru,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpBaselineParams {
    /// Absent for the question-blind variant.
    pub question: Option<QuestionEncoder>,
    pub mlp: Mlp,
}

impl MlpBaselineParams {
    fn build(config: &MlpBaselineConfig, vocab_size: usize, rng: Option<&mut Rng>) -> Result<Self> {
        let spec = config.spec()?;
        Ok(match rng {
            Some(rng) => Self {
                question: if config.input.uses_question() {
                    Some(QuestionEncoder {
                        embedding: Embedding::init(vocab_size, config.embedding_width, rng),
                        gru: Gru::init(config.embedding_width, config.question_width, rng)?,
                    })
                } else {
                    None
                },
                mlp: {
                    let mut mlp = Mlp::init(spec, rng);
                    mlp.zero_last_layer();
                    mlp
                },
            },
            None => Self {
                question: config.input.uses_question().then(|| QuestionEncoder {
                    embedding: Embedding::zeros(vocab_size, config.embedding_width),
                    gru: Gru::zeros(config.embedding_width, config.question_width),
                }),
                mlp: Mlp::zeros(spec),
            },
        })
    }
}

impl Parameterized for MlpBaselineParams {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        if let Some(q) = &self.question {
            push_matrix(&mut out, "embedding".into(), &q.embedding.table);
            q.gru.push_blocks("gru", &mut out);
        }
        self.mlp.push_blocks("mlp", &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut out = Vec::new();
        if let Some(q) = &mut self.question {
            push_matrix_mut(&mut out, "embedding".into(), &mut q.embedding.table);
            q.gru.push_blocks_mut("gru", &mut out);
        }
        self.mlp.push_blocks_mut("mlp", &mut out);
        out
    }
}

/// Forward record for backprop.
#[derive(Clone, Debug)]
pub struct MlpBaselineTrace {
    tokens: Vec<usize>,
    question: Option<GruTrace>,
    cache: MlpCache,
}

/// Mean of patch features; the zero vector when there are no patches.
pub fn mean_patch_features(patches: &[BackgroundPatch], width: usize) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; width];
    for p in patches {
        if p.features.len() != width {
            return Err(Error::Shape { context: "patch feature width".into(), expected: width, actual: p.features.len() });
        }
        mean.iter_mut().zip(&p.features).for_each(|(m, v)| *m += v);
    }
    if !patches.is_empty() {
        mean.iter_mut().for_each(|m| *m /= patches.len() as f64);
    }
    Ok(mean)
}

/// One-hidden-layer softmax counter over question and/or image features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpBaseline {
    pub config: MlpBaselineConfig,
    pub vocab: Vocabulary,
    pub params: MlpBaselineParams,
}

impl MlpBaseline {
    pub const KIND: &'static str = "mlp-baseline";

    pub fn new(config: MlpBaselineConfig, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        let params = MlpBaselineParams::build(&config, vocab.len(), Some(rng))?;
        Ok(Self { config, vocab, params })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::capture(Self::KIND, &self.config, &self.vocab, &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(Self::KIND)?;
        let config: MlpBaselineConfig = ckpt.config()?;
        let mut params = MlpBaselineParams::build(&config, ckpt.vocabulary.len(), None)?;
        ckpt.restore_into(&mut params)?;
        Ok(Self { config, vocab: ckpt.vocabulary.clone(), params })
    }

    pub fn forward(
        &self,
        patches: &[BackgroundPatch],
        tokens: &[usize],
        training: bool,
        rng: &mut Rng,
    ) -> Result<(Prediction, MlpBaselineTrace)> {
        let mut input = Vec::with_capacity(self.config.input_width());
        let question = match &self.params.question {
            Some(enc) => {
                if tokens.is_empty() {
                    return Err(Error::EmptyQuestion);
                }
                let embedded = enc.embedding.lookup(tokens)?;
                let (q, trace) = gru_encode(&embedded, &enc.gru, self.config.dropout, training, rng)?;
                input.extend(q);
                Some(trace)
            }
            None => None,
        };
        if self.config.input.uses_image() {
            input.extend(mean_patch_features(patches, self.config.feature_width)?);
        }
        let (logits, cache) = self.params.mlp.forward_batch(Matrix::row_vector(&input))?;
        let logits = logits.into_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss("non-finite logits".into()));
        }
        Ok((Prediction::from_logits(logits), MlpBaselineTrace { tokens: tokens.to_vec(), question, cache }))
    }

    pub fn predict(&self, patches: &[BackgroundPatch], tokens: &[usize]) -> Result<Prediction> {
        Ok(self.forward(patches, tokens, false, &mut Rng::new(0))?.0)
    }

    /// Cross-entropy loss against `target`; gradients are accumulated into `grads`.
    pub fn backward(&self, prediction: &Prediction, trace: &MlpBaselineTrace, target: usize, grads: &mut MlpBaselineParams) -> Result<f64> {
        let ce = softmax_cross_entropy(&prediction.logits, target)?;
        let want = if self.params.question.is_some() { InputGrad::Full } else { InputGrad::None };
        let d_input = self.params.mlp.backward_batch(&trace.cache, Matrix::row_vector(&ce.grad_logits), &mut grads.mlp, want);
        if let (Some(enc), Some(genc), Some(qt), Some(d)) = (&self.params.question, &mut grads.question, &trace.question, d_input) {
            let d_q = qt.mask.backward(&d.data()[..self.config.question_width]);
            let d_tokens = enc.gru.backward(&qt.cache, &d_q, &mut genc.gru);
            genc.embedding.accumulate(&trace.tokens, &d_tokens);
        }
        Ok(ce.loss)
    }
}
