use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::scene::{generate_scene, FeatureDictionary, Scene, SynthConfig, CLASSES};
use super::template::{choose_template, oracle_count, Template, TemplateKind};
use crate::error::{Error, Result};
use crate::numeric::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    TestSimple,
    TestComplex,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::TestSimple, Split::TestComplex];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestSimple => "test-simple",
            Split::TestComplex => "test-complex",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown split `{s}` (expected train, test-simple or test-complex)")))
    }
}

/// One scene with its question and ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub scene: Scene,
    pub question: String,
    pub template: Template,
    pub answer: usize,
    pub split: Split,
}

/// Dataset-level generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene: SynthConfig,
    pub scenes: usize,
    /// Fractions of scenes in train, test-simple and test-complex.
    pub split_ratios: [f64; 3],
    /// Train template weights in the order simple, attribute, background, positional,
    /// negation, absurd.
    pub train_mix: [f64; 6],
    /// Probability of preferring slot fillers with a non-trivial answer.
    pub informative_probability: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene: SynthConfig::default(),
            scenes: 8000,
            split_ratios: [0.625, 0.125, 0.25],
            train_mix: [0.4, 0.12, 0.12, 0.12, 0.12, 0.12],
            informative_probability: 0.8,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.scenes == 0 {
            return Err(Error::InvalidArgument("scene count must be positive".into()));
        }
        let ok = |w: &[f64]| w.iter().all(|&x| x >= 0.0 && x.is_finite()) && w.iter().sum::<f64>() > 0.0;
        if !ok(&self.split_ratios) || !ok(&self.train_mix) {
            return Err(Error::InvalidArgument("split ratios and template mix need non-negative weights".into()));
        }
        Ok(())
    }

    /// Scene counts per split; each is within one of the exact share.
    pub fn split_sizes(&self) -> [usize; 3] {
        let total: f64 = self.split_ratios.iter().sum();
        let n = self.scenes as f64;
        let train = (n * self.split_ratios[0] / total).round() as usize;
        let simple = ((n * self.split_ratios[1] / total).round() as usize).min(self.scenes - train);
        [train, simple, self.scenes - train - simple]
    }
}

const ATTEMPTS: u64 = 20;

fn pick_kind(split: Split, mix: &[f64; 6], rng: &mut Rng) -> TemplateKind {
    match split {
        Split::Train => TemplateKind::ALL[rng.weighted_index(mix)],
        Split::TestSimple => TemplateKind::SimpleCount,
        Split::TestComplex => TemplateKind::COMPLEX_TEST[rng.index(TemplateKind::COMPLEX_TEST.len())],
    }
}

/// Generate the scene with index `index`. Its randomness depends only on `(seed, index)`.
pub fn generate_record(cfg: &DatasetConfig, dict: &FeatureDictionary, seed: u64, index: usize, split: Split) -> Result<SceneRecord> {
    let root = Rng::new(seed).derive(index as u64);
    let mut last_err = None;
    for attempt in 0..ATTEMPTS {
        let mut rng = root.derive(attempt);
        let focus = CLASSES[rng.index(CLASSES.len())];
        let kind = pick_kind(split, &cfg.train_mix, &mut rng);
        let scene = match generate_scene(&cfg.scene, dict, focus, &mut rng) {
            Ok(s) => s,
            Err(e @ Error::Placement(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let Some(template) = choose_template(&scene, kind, focus, cfg.informative_probability, &mut rng)? else {
            continue;
        };
        let answer = oracle_count(&scene, &template)?;
        return Ok(SceneRecord {
            id: format!("scene-{index:06}"),
            question: template.render(&mut rng),
            scene,
            template,
            answer,
            split,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::NoEligibleQuestion(format!("scene {index}: no feasible template in {ATTEMPTS} attempts"))))
}

/// Train scenes first, then test-simple, then test-complex.
pub fn emit_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Vec<SceneRecord>> {
    cfg.validate()?;
    let dict = FeatureDictionary::new(cfg.scene.feature_width, cfg.scene.dictionary_seed);
    let [train, simple, _] = cfg.split_sizes();
    (0..cfg.scenes)
        .map(|i| {
            let split = if i < train {
                Split::Train
            } else if i < train + simple {
                Split::TestSimple
            } else {
                Split::TestComplex
            };
            generate_record(cfg, &dict, seed, i, split)
        })
        .collect()
}

pub fn write_jsonl<W: Write>(records: &[SceneRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SceneRecord>> {
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question::{classify_text, Lexicon, QuestionClass};
    use std::collections::BTreeSet;

    fn small(scenes: usize) -> DatasetConfig {
        DatasetConfig { scenes, ..DatasetConfig::default() }
    }

    #[test]
    fn split_sizes_track_ratios() {
        let cfg = DatasetConfig { scenes: 1001, split_ratios: [0.8, 0.1, 0.1], ..DatasetConfig::default() };
        let sizes = cfg.split_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 1001);
        for (s, r) in sizes.iter().zip([0.8, 0.1, 0.1]) {
            assert!((*s as f64 - 1001.0 * r).abs() <= 1.0);
        }
    }

    #[test]
    fn splits_hold_the_right_templates() {
        let records = emit_dataset(&small(600), 3).unwrap();
        let lex = Lexicon::default();
        let mut ids = BTreeSet::new();
        for r in &records {
            assert!(ids.insert(r.id.clone()));
            assert_eq!(oracle_count(&r.scene, &r.template).unwrap(), r.answer);
            match r.split {
                Split::TestSimple => {
                    assert_eq!(r.template.kind(), TemplateKind::SimpleCount);
                    assert_eq!(classify_text(&r.question, &lex), QuestionClass::Simple, "{}", r.question);
                }
                Split::TestComplex => {
                    assert!(TemplateKind::COMPLEX_TEST.contains(&r.template.kind()));
                    assert_eq!(classify_text(&r.question, &lex), QuestionClass::Complex, "{}", r.question);
                }
                Split::Train => {}
            }
        }
    }

    #[test]
    fn generation_is_reproducible_per_index() {
        let cfg = small(40);
        let all = emit_dataset(&cfg, 9).unwrap();
        let dict = FeatureDictionary::new(cfg.scene.feature_width, cfg.scene.dictionary_seed);
        let again = generate_record(&cfg, &dict, 9, 17, all[17].split).unwrap();
        assert_eq!(again, all[17]);
        assert_ne!(emit_dataset(&cfg, 10).unwrap(), all);
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let records = emit_dataset(&small(25), 5).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&records, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        let mut again = Vec::new();
        write_jsonl(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn split_names_parse() {
        for s in Split::ALL {
            assert_eq!(s.name().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }
}
