use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::config::{ExperimentConfig, TrainConfig};
use super::metrics::{accuracy, round_clamp};
use super::report::{EpochLog, EvalReport, SplitReport, TrainingLog};
use crate::baselines::{detect_count, BaselineKind, MlpBaseline, MlpInput, SynonymMatcher};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::numeric::params::{ParamBlock, ParamBlockMut};
use crate::numeric::{softmax_cross_entropy, AdamState, Parameterized, Rng};
use crate::question::{Lexicon, Question, Vocabulary};
use crate::rcn::{RcnInput, RcnModel, RcnParams};
use crate::synth::{SceneRecord, Split};

/// What `train` builds: the relational counter or one of the baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Rcn,
    Baseline(BaselineKind),
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Rcn => f.write_str("rcn"),
            ModelKind::Baseline(b) => b.fmt(f),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("rcn") {
            return Ok(ModelKind::Rcn);
        }
        s.parse().map(ModelKind::Baseline)
    }
}

/// Stand-in parameter set for models with nothing to learn.
#[derive(Clone, Debug, Default)]
struct NoParams;

impl Parameterized for NoParams {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        Vec::new()
    }
    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        Vec::new()
    }
}

const GUESS_KIND: &str = "guess";
const DETECT_KIND: &str = "detect";

/// Any model the harness can score.
#[derive(Clone, Debug)]
pub enum CountModel {
    Rcn(RcnModel),
    Mlp(MlpBaseline),
    Guess(usize),
    Detect(SynonymMatcher),
}

impl CountModel {
    pub fn name(&self) -> String {
        match self {
            CountModel::Rcn(m) => {
                let mut name = "rcn".to_string();
                if !m.config.use_background {
                    name.push_str("-no-background");
                }
                if !m.config.use_location {
                    name.push_str("-no-location");
                }
                name
            }
            CountModel::Mlp(m) => match m.config.input {
                MlpInput::QuestionOnly => BaselineKind::QOnly,
                MlpInput::ImageOnly => BaselineKind::IOnly,
                MlpInput::QuestionImage => BaselineKind::QI,
            }
            .to_string(),
            CountModel::Guess(k) => BaselineKind::Guess(*k).to_string(),
            CountModel::Detect(_) => BaselineKind::Detect.to_string(),
        }
    }

    /// Raw predicted count for one record, before clamping.
    pub fn predict(&self, record: &SceneRecord, lex: &Lexicon) -> Result<usize> {
        match self {
            CountModel::Rcn(m) => m.predict_tokens(record, &m.vocab.encode(&record.question)),
            CountModel::Mlp(m) => m.predict_tokens(record, &m.vocab.encode(&record.question)),
            CountModel::Guess(k) => Ok(*k),
            CountModel::Detect(matcher) => {
                detect_count(&Question::parse(&record.question, lex), &record.scene.detections(), matcher, lex)
            }
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let empty = Vocabulary::from(Vec::new());
        match self {
            CountModel::Rcn(m) => m.to_checkpoint(),
            CountModel::Mlp(m) => m.to_checkpoint(),
            CountModel::Guess(k) => Checkpoint::capture(GUESS_KIND, k, &empty, &NoParams),
            CountModel::Detect(m) => Checkpoint::capture(DETECT_KIND, &m.threshold, &empty, &NoParams),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(match ckpt.kind.as_str() {
            RcnModel::KIND => CountModel::Rcn(RcnModel::from_checkpoint(ckpt)?),
            MlpBaseline::KIND => CountModel::Mlp(MlpBaseline::from_checkpoint(ckpt)?),
            GUESS_KIND => CountModel::Guess(ckpt.config()?),
            DETECT_KIND => {
                let mut matcher = SynonymMatcher::default();
                matcher.threshold = ckpt.config()?;
                CountModel::Detect(matcher)
            }
            other => return Err(Error::Checkpoint(format!("unknown model kind `{other}`"))),
        })
    }
}

/// Round-and-clamp predictions for `records`.
pub fn predict_all(model: &CountModel, records: &[&SceneRecord], max_count: usize, lex: &Lexicon) -> Result<Vec<i64>> {
    records
        .iter()
        .map(|r| Ok(round_clamp(model.predict(r, lex)? as f64, 0, max_count as i64)))
        .collect()
}

/// Score `model` on each test split present in `records`.
pub fn evaluate(model: &CountModel, records: &[SceneRecord], config: &ExperimentConfig, seed: u64) -> Result<EvalReport> {
    let max_count = config.dataset.scene.max_count;
    let lex = Lexicon::default();
    let mut splits = Vec::new();
    for split in [Split::TestSimple, Split::TestComplex] {
        let recs: Vec<&SceneRecord> = records.iter().filter(|r| r.split == split).collect();
        if recs.is_empty() {
            continue;
        }
        let preds = predict_all(model, &recs, max_count, &lex)?;
        splits.push(SplitReport::build(split, &recs, &preds, max_count)?);
    }
    Ok(EvalReport { model: model.name(), seed, config_fingerprint: config.fingerprint(), splits, training: None })
}

/// A model trained by mini-batch cross-entropy.
trait Trainable: Clone {
    type Params: Parameterized + Clone;

    fn params(&self) -> &Self::Params;
    fn params_mut(&mut self) -> &mut Self::Params;
    /// Loss against the record's answer, accumulating gradients into `grads`.
    fn loss_grad(&self, record: &SceneRecord, tokens: &[usize], rng: &mut Rng, grads: &mut Self::Params) -> Result<f64>;
    /// Inference-mode loss.
    fn loss(&self, record: &SceneRecord, tokens: &[usize]) -> Result<f64>;
    fn predict_tokens(&self, record: &SceneRecord, tokens: &[usize]) -> Result<usize>;
}

fn rcn_input<'a>(record: &'a SceneRecord, tokens: &'a [usize]) -> RcnInput<'a> {
    RcnInput { proposals: &record.scene.proposals, patches: &record.scene.patches, tokens }
}

impl Trainable for RcnModel {
    type Params = RcnParams;

    fn params(&self) -> &RcnParams {
        &self.params
    }
    fn params_mut(&mut self) -> &mut RcnParams {
        &mut self.params
    }
    fn loss_grad(&self, record: &SceneRecord, tokens: &[usize], rng: &mut Rng, grads: &mut RcnParams) -> Result<f64> {
        self.loss_and_grad(&rcn_input(record, tokens), record.answer, true, rng, grads)
    }
    fn loss(&self, record: &SceneRecord, tokens: &[usize]) -> Result<f64> {
        let pred = self.predict(&rcn_input(record, tokens))?;
        Ok(softmax_cross_entropy(&pred.logits, record.answer)?.loss)
    }
    fn predict_tokens(&self, record: &SceneRecord, tokens: &[usize]) -> Result<usize> {
        Ok(self.predict(&rcn_input(record, tokens))?.count)
    }
}

impl Trainable for MlpBaseline {
    type Params = crate::baselines::MlpBaselineParams;

    fn params(&self) -> &Self::Params {
        &self.params
    }
    fn params_mut(&mut self) -> &mut Self::Params {
        &mut self.params
    }
    fn loss_grad(&self, record: &SceneRecord, tokens: &[usize], rng: &mut Rng, grads: &mut Self::Params) -> Result<f64> {
        let (pred, trace) = self.forward(&record.scene.patches, tokens, true, rng)?;
        self.backward(&pred, &trace, record.answer, grads)
    }
    fn loss(&self, record: &SceneRecord, tokens: &[usize]) -> Result<f64> {
        let pred = self.predict(&record.scene.patches, tokens)?;
        Ok(softmax_cross_entropy(&pred.logits, record.answer)?.loss)
    }
    fn predict_tokens(&self, record: &SceneRecord, tokens: &[usize]) -> Result<usize> {
        Ok(self.predict(&record.scene.patches, tokens)?.count)
    }
}

/// Records paired with their encoded questions.
struct Encoded<'a> {
    records: Vec<&'a SceneRecord>,
    tokens: Vec<Vec<usize>>,
}

impl<'a> Encoded<'a> {
    fn new(records: Vec<&'a SceneRecord>, vocab: &Vocabulary) -> Self {
        let tokens = records.iter().map(|r| vocab.encode(&r.question)).collect();
        Self { records, tokens }
    }

    fn accuracy<M: Trainable>(&self, model: &M, max_count: usize) -> Result<f64> {
        let mut preds = Vec::with_capacity(self.records.len());
        for (r, t) in self.records.iter().zip(&self.tokens) {
            preds.push(round_clamp(model.predict_tokens(r, t)? as f64, 0, max_count as i64));
        }
        let gts: Vec<i64> = self.records.iter().map(|r| r.answer as i64).collect();
        accuracy(&preds, &gts)
    }
}

fn with_context(e: Error, context: impl FnOnce() -> String) -> Error {
    match e {
        Error::NonFiniteLoss(m) => Error::NonFiniteLoss(format!("{}: {m}", context())),
        Error::NonFiniteGradient(m) => Error::NonFiniteGradient(format!("{m} ({})", context())),
        other => other,
    }
}

/// Adam on shuffled mini-batches; keeps the weights with the best validation accuracy.
fn fit<M: Trainable>(
    mut model: M,
    train: &Encoded,
    validation: &Encoded,
    tests: &[(Split, Encoded)],
    cfg: &TrainConfig,
    max_count: usize,
    rng: &Rng,
) -> Result<(M, TrainingLog)> {
    let n = train.records.len();
    let mut initial_loss = 0.0;
    for (r, t) in train.records.iter().zip(&train.tokens) {
        initial_loss += model.loss(r, t)?;
    }
    initial_loss /= n as f64;
    let val_accuracy = |m: &M| -> Result<Option<f64>> {
        if validation.records.is_empty() {
            Ok(None)
        } else {
            validation.accuracy(m, max_count).map(Some)
        }
    };
    let initial_validation = val_accuracy(&model)?;

    let mut adam = AdamState::new(cfg.adam, model.params());
    let mut grads = model.params().zeros_like();
    let mut best = (0, initial_validation, model.clone());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng.derive(3).derive(epoch as u64).shuffle(&mut order);
        let dropout = rng.derive(4).derive(epoch as u64);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill(0.0);
            for (k, &i) in chunk.iter().enumerate() {
                let record = train.records[i];
                let ctx = || format!("epoch {epoch}, batch {b}, record {}", record.id);
                let mut sample_rng = dropout.derive((b * cfg.batch_size + k) as u64);
                let loss = model
                    .loss_grad(record, &train.tokens[i], &mut sample_rng, &mut grads)
                    .map_err(|e| with_context(e, ctx))?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss(format!("{}: loss {loss}", ctx())));
                }
                total += loss;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(model.params_mut(), &grads).map_err(|e| with_context(e, || format!("epoch {epoch}, batch {b}")))?;
        }

        let validation_accuracy = val_accuracy(&model)?;
        let mut test_accuracy = BTreeMap::new();
        if cfg.evaluate_each_epoch {
            for (split, enc) in tests {
                test_accuracy.insert(*split, enc.accuracy(&model, max_count)?);
            }
        }
        let improved = match (validation_accuracy, best.1) {
            (Some(v), Some(b)) => v > b,
            _ => true,
        };
        if improved {
            best = (epoch, validation_accuracy, model.clone());
        }
        epochs.push(EpochLog { epoch, train_loss: total / n as f64, validation_accuracy, test_accuracy });
    }
    let log = TrainingLog {
        train_size: n,
        validation_size: validation.records.len(),
        initial_loss,
        initial_validation_accuracy: initial_validation,
        epochs,
        best_epoch: best.0,
    };
    Ok((best.2, log))
}

/// Result of [`train_loop`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: CountModel,
    pub report: EvalReport,
}

/// Train `kind` on the train split of `records` and score it on the test splits.
///
/// A validation share of the train split is held out for checkpoint selection. The result
/// depends only on `(kind, records, config, seed)`.
pub fn train_loop(kind: ModelKind, records: &[SceneRecord], config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let max_count = config.dataset.scene.max_count;
    let all_train: Vec<&SceneRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    if all_train.is_empty() {
        return Err(Error::Empty("train set"));
    }
    let root = Rng::new(seed);

    let model = match kind {
        ModelKind::Baseline(BaselineKind::Guess(k)) => {
            BaselineKind::Guess(k).validate(max_count)?;
            Some(CountModel::Guess(k))
        }
        ModelKind::Baseline(BaselineKind::Detect) => Some(CountModel::Detect(SynonymMatcher::default())),
        _ => None,
    };
    if let Some(model) = model {
        let report = evaluate(&model, records, config, seed)?;
        return Ok(TrainOutcome { model, report });
    }

    let mut order: Vec<usize> = (0..all_train.len()).collect();
    root.derive(2).shuffle(&mut order);
    let n_val = if config.train.validation_fraction > 0.0 && all_train.len() > 1 {
        ((config.train.validation_fraction * all_train.len() as f64).round() as usize).clamp(1, all_train.len() - 1)
    } else {
        0
    };
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();

    let train_recs: Vec<&SceneRecord> = train_idx.iter().map(|&i| all_train[i]).collect();
    let vocab = Vocabulary::build(train_recs.iter().map(|r| r.question.as_str()));
    let train = Encoded::new(train_recs, &vocab);
    let validation = Encoded::new(val_idx.iter().map(|&i| all_train[i]).collect(), &vocab);
    let tests: Vec<(Split, Encoded)> = [Split::TestSimple, Split::TestComplex]
        .into_iter()
        .map(|s| (s, Encoded::new(records.iter().filter(|r| r.split == s).collect(), &vocab)))
        .filter(|(_, e)| !e.records.is_empty())
        .collect();

    let mut init_rng = root.derive(1);
    let (model, log) = match kind {
        ModelKind::Rcn => {
            let m = RcnModel::new(config.rcn.clone(), vocab, &mut init_rng)?;
            let (m, log) = fit(m, &train, &validation, &tests, &config.train, max_count, &root)?;
            (CountModel::Rcn(m), log)
        }
        ModelKind::Baseline(b) => {
            let input = b.mlp_input().expect("guess and detect handled above");
            let m = MlpBaseline::new(config.mlp_config(input), vocab, &mut init_rng)?;
            let (m, log) = fit(m, &train, &validation, &tests, &config.train, max_count, &root)?;
            (CountModel::Mlp(m), log)
        }
    };
    let mut report = evaluate(&model, records, config, seed)?;
    report.training = Some(log);
    Ok(TrainOutcome { model, report })
}
