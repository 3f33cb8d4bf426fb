use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{background_grid, grid_cell_of, iou, BackgroundPatch, BoundingBox, RegionProposal};
use crate::numeric::Rng;

pub const CLASSES: [&str; 10] = ["dog", "cat", "horse", "cow", "bird", "car", "truck", "boat", "kite", "ball"];
pub const COLORS: [&str; 4] = ["red", "blue", "green", "yellow"];
pub const STATES: [&str; 2] = ["wet", "dry"];
pub const BACKGROUNDS: [&str; 4] = ["grass", "water", "sky", "road"];

/// Scene generation parameters. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub image_width: f64,
    pub image_height: f64,
    /// Background grid side; the image has `grid²` patches.
    pub grid: usize,
    pub feature_width: usize,
    /// Largest count of the question's class.
    pub max_count: usize,
    /// Successive count probabilities shrink by this factor.
    pub count_ratio: f64,
    pub zero_count_probability: f64,
    pub max_extra_objects: usize,
    pub max_distractors: usize,
    pub duplicate_probability: f64,
    /// Norm scale of the Gaussian feature noise (per-component std is `noise / sqrt(K)`).
    pub noise: f64,
    /// Weight of the scene-wide background context added to every object feature.
    pub context_weight: f64,
    pub min_box: f64,
    pub max_box: f64,
    /// Largest IoU allowed between two objects.
    pub max_overlap: f64,
    pub placement_retries: usize,
    /// Seed of the word-to-feature dictionary, shared by every scene.
    pub dictionary_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_width: 256.0,
            image_height: 256.0,
            grid: 4,
            feature_width: 32,
            max_count: 15,
            count_ratio: 0.85,
            zero_count_probability: 0.05,
            max_extra_objects: 4,
            max_distractors: 2,
            duplicate_probability: 0.3,
            noise: 0.2,
            context_weight: 0.3,
            min_box: 20.0,
            max_box: 52.0,
            max_overlap: 0.15,
            placement_retries: 200,
            dictionary_seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image dimensions must be positive");
        }
        if self.grid == 0 || self.feature_width == 0 || self.max_count == 0 {
            return bad("grid, feature_width and max_count must be positive");
        }
        if !(self.min_box > 0.0 && self.min_box <= self.max_box && self.max_box <= self.image_width.min(self.image_height)) {
            return bad("box size range must be positive and fit the image");
        }
        for (name, p) in [
            ("count_ratio", self.count_ratio),
            ("zero_count_probability", self.zero_count_probability),
            ("duplicate_probability", self.duplicate_probability),
            ("max_overlap", self.max_overlap),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.noise < 0.0 || self.context_weight < 0.0 {
            return bad("noise and context_weight must be non-negative");
        }
        Ok(())
    }
}

/// Fixed word → feature-vector table for classes, attributes and backgrounds.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDictionary {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl FeatureDictionary {
    /// Orthonormal vectors when `width` admits them, unit-norm random ones otherwise.
    pub fn new(width: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let words: Vec<&str> = CLASSES.iter().chain(&COLORS).chain(&STATES).chain(&BACKGROUNDS).copied().collect();
        let orthogonal = width >= words.len();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut vectors = BTreeMap::new();
        for w in words {
            let v = loop {
                let mut v: Vec<f64> = (0..width).map(|_| rng.normal()).collect();
                if orthogonal {
                    for b in &basis {
                        let d = crate::numeric::matrix::dot(&v, b);
                        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                    }
                }
                let n = crate::numeric::matrix::norm(&v);
                if n > 1e-6 {
                    break v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
                }
            };
            basis.push(v.clone());
            vectors.insert(w.to_string(), v);
        }
        Self { vectors }
    }

    pub fn vector(&self, word: &str) -> Result<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice).ok_or_else(|| Error::UnknownSlot(word.into()))
    }

    /// Class whose embedding has the largest dot product with `features`.
    pub fn nearest_class(&self, features: &[f64]) -> &'static str {
        let score = |c: &str| crate::numeric::matrix::dot(&self.vectors[c], features);
        CLASSES
            .iter()
            .copied()
            .fold(None, |best: Option<(&'static str, f64)>, c| {
                let s = score(c);
                match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((c, s)),
                }
            })
            .map(|(c, _)| c)
            .expect("class list is not empty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: usize,
    pub class: String,
    pub color: String,
    pub state: String,
    pub bbox: BoundingBox,
}

impl SceneObject {
    pub fn has_attribute(&self, attribute: &str) -> bool {
        self.color == attribute || self.state == attribute
    }
}

/// Where a proposal came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalSource {
    Object(usize),
    Distractor,
}

/// One synthetic image: objects, their proposals and the background grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: f64,
    pub height: f64,
    pub grid: usize,
    pub objects: Vec<SceneObject>,
    pub proposals: Vec<RegionProposal>,
    pub sources: Vec<ProposalSource>,
    pub patches: Vec<BackgroundPatch>,
    pub patch_labels: Vec<String>,
}

impl Scene {
    /// Background label of the cell holding the box center.
    pub fn background_at(&self, bbox: &BoundingBox) -> &str {
        let (x, y) = bbox.center();
        &self.patch_labels[grid_cell_of(x, y, self.width, self.height, self.grid)]
    }

    pub fn class_count(&self, class: &str) -> usize {
        self.objects.iter().filter(|o| o.class == class).count()
    }

    /// True when some object has more than one proposal.
    pub fn has_duplicates(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.sources.iter().any(|s| matches!(s, ProposalSource::Object(id) if !seen.insert(*id)))
    }

    /// Noise-free detections, one per object.
    pub fn detections(&self) -> Vec<(String, BoundingBox)> {
        self.objects.iter().map(|o| (o.class.clone(), o.bbox)).collect()
    }
}

fn noisy(clean: &[f64], noise: f64, rng: &mut Rng) -> Vec<f64> {
    let sd = noise / (clean.len() as f64).sqrt();
    clean.iter().map(|&c| if sd > 0.0 { c + sd * rng.normal() } else { c }).collect()
}

fn random_box(cfg: &SynthConfig, rng: &mut Rng) -> BoundingBox {
    let w = rng.uniform_range(cfg.min_box, cfg.max_box);
    let h = rng.uniform_range(cfg.min_box, cfg.max_box);
    let x = rng.uniform_range(0.0, cfg.image_width - w);
    let y = rng.uniform_range(0.0, cfg.image_height - h);
    BoundingBox { x_min: x, y_min: y, x_max: x + w, y_max: y + h, image_width: cfg.image_width, image_height: cfg.image_height }
}

fn place(cfg: &SynthConfig, placed: &[BoundingBox], rng: &mut Rng) -> Result<BoundingBox> {
    for _ in 0..cfg.placement_retries {
        let b = random_box(cfg, rng);
        if placed.iter().all(|p| iou(p, &b) <= cfg.max_overlap && !p.contains(&b) && !b.contains(p)) {
            return Ok(b);
        }
    }
    Err(Error::Placement(format!("no room for object {} after {} tries", placed.len() + 1, cfg.placement_retries)))
}

/// A shifted copy of `b` overlapping it with IoU at least 0.5, if one is found quickly.
fn jitter(b: &BoundingBox, rng: &mut Rng) -> Option<BoundingBox> {
    for _ in 0..20 {
        let dx = 0.15 * b.width();
        let dy = 0.15 * b.height();
        let x0 = (b.x_min + rng.uniform_range(-dx, dx)).max(0.0);
        let y0 = (b.y_min + rng.uniform_range(-dy, dy)).max(0.0);
        let x1 = (b.x_max + rng.uniform_range(-dx, dx)).min(b.image_width);
        let y1 = (b.y_max + rng.uniform_range(-dy, dy)).min(b.image_height);
        if let Ok(c) = BoundingBox::new(x0, y0, x1, y1, b.image_width, b.image_height) {
            if iou(b, &c) >= 0.5 {
                return Some(c);
            }
        }
    }
    None
}

/// Draw `0..=max` with `P(0) = zero_p` and `P(k) ∝ ratio^(k-1)` for `k ≥ 1`.
pub fn sample_count(max: usize, ratio: f64, zero_p: f64, rng: &mut Rng) -> usize {
    if rng.bernoulli(zero_p) {
        return 0;
    }
    let weights: Vec<f64> = (0..max).map(|k| ratio.powi(k as i32)).collect();
    rng.weighted_index(&weights) + 1
}

/// Generate one scene centred on `focus`: `focus` appears a sampled number of times, plus a few
/// objects of other classes, duplicate proposals and background-looking distractors.
pub fn generate_scene(cfg: &SynthConfig, dict: &FeatureDictionary, focus: &str, rng: &mut Rng) -> Result<Scene> {
    cfg.validate()?;
    dict.vector(focus)?;
    let g = cfg.grid;

    let (a, b) = {
        let first = rng.index(BACKGROUNDS.len());
        let mut second = rng.index(BACKGROUNDS.len() - 1);
        if second >= first {
            second += 1;
        }
        (BACKGROUNDS[first], BACKGROUNDS[second])
    };
    let horizontal = rng.bernoulli(0.5);
    let split = rng.int_inclusive(1, g - 1);
    let patch_labels: Vec<String> = (0..g * g)
        .map(|cell| {
            let pos = if horizontal { cell / g } else { cell % g };
            if pos < split { a } else { b }.to_string()
        })
        .collect();
    let cells = background_grid(cfg.image_width, cfg.image_height, g)?;
    let mut patches = Vec::with_capacity(cells.len());
    let mut gist = vec![0.0; cfg.feature_width];
    for (cell, label) in cells.iter().zip(&patch_labels) {
        let clean = dict.vector(label)?;
        gist.iter_mut().zip(clean).for_each(|(s, v)| *s += v / cells.len() as f64);
        patches.push(BackgroundPatch { bbox: *cell, features: noisy(clean, cfg.noise, rng) });
    }

    let mut classes = vec![focus.to_string(); sample_count(cfg.max_count, cfg.count_ratio, cfg.zero_count_probability, rng)];
    let others: Vec<&str> = CLASSES.iter().copied().filter(|c| *c != focus).collect();
    for _ in 0..rng.int_inclusive(0, cfg.max_extra_objects) {
        classes.push(others[rng.index(others.len())].to_string());
    }

    let mut placed = Vec::new();
    let mut objects = Vec::new();
    for (id, class) in classes.into_iter().enumerate() {
        let bbox = place(cfg, &placed, rng)?;
        placed.push(bbox);
        objects.push(SceneObject {
            id,
            class,
            color: COLORS[rng.index(COLORS.len())].to_string(),
            state: STATES[rng.index(STATES.len())].to_string(),
            bbox,
        });
    }

    let mut proposals = Vec::new();
    for o in &objects {
        let mut clean: Vec<f64> = dict.vector(&o.class)?.to_vec();
        for attr in [&o.color, &o.state] {
            clean.iter_mut().zip(dict.vector(attr)?).for_each(|(c, v)| *c += v);
        }
        clean.iter_mut().zip(&gist).for_each(|(c, v)| *c += cfg.context_weight * v);
        proposals.push((RegionProposal { bbox: o.bbox, features: noisy(&clean, cfg.noise, rng) }, ProposalSource::Object(o.id)));
        if rng.bernoulli(cfg.duplicate_probability) {
            if let Some(bbox) = jitter(&o.bbox, rng) {
                proposals.push((RegionProposal { bbox, features: noisy(&clean, cfg.noise, rng) }, ProposalSource::Object(o.id)));
            }
        }
    }
    let mut scene = Scene {
        width: cfg.image_width,
        height: cfg.image_height,
        grid: g,
        objects,
        proposals: Vec::new(),
        sources: Vec::new(),
        patches,
        patch_labels,
    };
    for _ in 0..rng.int_inclusive(0, cfg.max_distractors) {
        let bbox = random_box(cfg, rng);
        let clean = dict.vector(scene.background_at(&bbox))?;
        proposals.push((RegionProposal { bbox, features: noisy(clean, cfg.noise, rng) }, ProposalSource::Distractor));
    }
    rng.shuffle(&mut proposals);
    (scene.proposals, scene.sources) = proposals.into_iter().unzip();
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(cfg: &SynthConfig, seed: u64) -> Scene {
        let dict = FeatureDictionary::new(cfg.feature_width, cfg.dictionary_seed);
        let mut rng = Rng::new(seed);
        generate_scene(cfg, &dict, CLASSES[seed as usize % CLASSES.len()], &mut rng).unwrap()
    }

    #[test]
    fn dictionary_is_orthonormal_when_wide_enough() {
        let d = FeatureDictionary::new(32, 1);
        let dot = crate::numeric::matrix::dot;
        for a in CLASSES.iter().chain(&BACKGROUNDS) {
            for b in CLASSES.iter().chain(&BACKGROUNDS) {
                let v = dot(d.vector(a).unwrap(), d.vector(b).unwrap());
                assert!((v - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(matches!(d.vector("zebra"), Err(Error::UnknownSlot(_))));
        let narrow = FeatureDictionary::new(8, 1);
        assert!((crate::numeric::matrix::norm(narrow.vector("dog").unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proposals_biject_with_objects_without_duplicates() {
        let cfg = SynthConfig { duplicate_probability: 0.0, max_distractors: 0, ..SynthConfig::default() };
        for seed in 0..50 {
            let s = scene(&cfg, seed);
            let mut ids: Vec<usize> = s
                .sources
                .iter()
                .map(|p| match p {
                    ProposalSource::Object(id) => *id,
                    ProposalSource::Distractor => panic!("distractor"),
                })
                .collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..s.objects.len()).collect::<Vec<_>>());
            assert!(!s.has_duplicates());
        }
    }

    #[test]
    fn noise_free_twins_share_features_and_classes_are_recoverable() {
        let cfg = SynthConfig { noise: 0.0, ..SynthConfig::default() };
        let dict = FeatureDictionary::new(cfg.feature_width, cfg.dictionary_seed);
        let mut twins = 0;
        for seed in 0..100 {
            let s = scene(&cfg, seed);
            let owner = |k: usize| match s.sources[k] {
                ProposalSource::Object(id) => Some(&s.objects[id]),
                ProposalSource::Distractor => None,
            };
            for i in 0..s.proposals.len() {
                let Some(a) = owner(i) else { continue };
                assert_eq!(dict.nearest_class(&s.proposals[i].features), a.class);
                for j in 0..s.proposals.len() {
                    let Some(b) = owner(j) else { continue };
                    if (&a.class, &a.color, &a.state) == (&b.class, &b.color, &b.state) {
                        assert_eq!(s.proposals[i].features, s.proposals[j].features);
                        twins += 1;
                    }
                }
            }
        }
        assert!(twins > 0);
    }

    #[test]
    fn objects_respect_placement_rules() {
        let cfg = SynthConfig::default();
        for seed in 0..100 {
            let s = scene(&cfg, seed);
            for (i, a) in s.objects.iter().enumerate() {
                a.bbox.validate().unwrap();
                for b in &s.objects[i + 1..] {
                    assert!(iou(&a.bbox, &b.bbox) <= cfg.max_overlap);
                    assert!(!a.bbox.contains(&b.bbox) && !b.bbox.contains(&a.bbox));
                }
            }
            for (p, src) in s.proposals.iter().zip(&s.sources) {
                if let ProposalSource::Object(id) = src {
                    assert!(iou(&p.bbox, &s.objects[*id].bbox) >= 0.5);
                }
            }
            assert_eq!(s.patches.len(), 16);
        }
    }

    #[test]
    fn impossible_packing_is_an_error() {
        let cfg = SynthConfig {
            min_box: 200.0,
            max_box: 250.0,
            max_overlap: 0.0,
            zero_count_probability: 0.0,
            count_ratio: 1.0,
            placement_retries: 20,
            ..SynthConfig::default()
        };
        let dict = FeatureDictionary::new(32, 7);
        let err = generate_scene(&cfg, &dict, "dog", &mut Rng::new(1));
        assert!(matches!(err, Err(Error::Placement(_))));
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = SynthConfig::default();
        assert_eq!(scene(&cfg, 11), scene(&cfg, 11));
        assert_ne!(scene(&cfg, 11), scene(&cfg, 21));
    }

    #[test]
    fn count_sampler_respects_range() {
        let mut rng = Rng::new(3);
        let mut seen = [0usize; 16];
        for _ in 0..20_000 {
            seen[sample_count(15, 0.75, 0.05, &mut rng)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0));
        assert!(seen[1] > seen[2] && seen[2] > seen[5]);
    }
}
