use std::fmt;

use serde::{Deserialize, Serialize};

use super::scene::{Scene, BACKGROUNDS, CLASSES, COLORS, STATES};
use crate::error::{Error, Result};
use crate::numeric::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    SimpleCount,
    AttributeCount,
    BackgroundRelation,
    Positional,
    Negation,
    Absurd,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 6] = [
        TemplateKind::SimpleCount,
        TemplateKind::AttributeCount,
        TemplateKind::BackgroundRelation,
        TemplateKind::Positional,
        TemplateKind::Negation,
        TemplateKind::Absurd,
    ];

    pub const COMPLEX_TEST: [TemplateKind; 4] = [
        TemplateKind::AttributeCount,
        TemplateKind::BackgroundRelation,
        TemplateKind::Positional,
        TemplateKind::Negation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::SimpleCount => "simple-count",
            TemplateKind::AttributeCount => "attribute-count",
            TemplateKind::BackgroundRelation => "background-relation",
            TemplateKind::Positional => "positional",
            TemplateKind::Negation => "negation",
            TemplateKind::Absurd => "absurd",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relation of a counted object's center to the reference object's center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below];

    fn holds(self, (x, y): (f64, f64), (rx, ry): (f64, f64)) -> bool {
        match self {
            Relation::LeftOf => x < rx,
            Relation::RightOf => x > rx,
            Relation::Above => y < ry,
            Relation::Below => y > ry,
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "to the left of",
            Relation::RightOf => "to the right of",
            Relation::Above => "higher up than",
            Relation::Below => "closer to the bottom than",
        }
    }
}

/// A question template with its slot fillers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Template {
    SimpleCount { class: String },
    AttributeCount { class: String, attribute: String },
    BackgroundRelation { class: String, background: String },
    Positional { class: String, relation: Relation, reference: String },
    Negation { class: String, attribute: String },
    Absurd { class: String, attribute: String },
}

fn known(list: &[&str], word: &str) -> Result<()> {
    if list.contains(&word) {
        Ok(())
    } else {
        Err(Error::UnknownSlot(word.into()))
    }
}

fn known_attribute(word: &str) -> Result<()> {
    known(&COLORS, word).or_else(|_| known(&STATES, word))
}

pub fn plural(class: &str) -> String {
    format!("{class}s")
}

impl Template {
    pub fn kind(&self) -> TemplateKind {
        match self {
            Template::SimpleCount { .. } => TemplateKind::SimpleCount,
            Template::AttributeCount { .. } => TemplateKind::AttributeCount,
            Template::BackgroundRelation { .. } => TemplateKind::BackgroundRelation,
            Template::Positional { .. } => TemplateKind::Positional,
            Template::Negation { .. } => TemplateKind::Negation,
            Template::Absurd { .. } => TemplateKind::Absurd,
        }
    }

    pub fn class(&self) -> &str {
        match self {
            Template::SimpleCount { class }
            | Template::AttributeCount { class, .. }
            | Template::BackgroundRelation { class, .. }
            | Template::Positional { class, .. }
            | Template::Negation { class, .. }
            | Template::Absurd { class, .. } => class,
        }
    }

    pub fn validate(&self) -> Result<()> {
        known(&CLASSES, self.class())?;
        match self {
            Template::SimpleCount { .. } => Ok(()),
            Template::AttributeCount { attribute, .. } | Template::Negation { attribute, .. } | Template::Absurd { attribute, .. } => {
                known_attribute(attribute)
            }
            Template::BackgroundRelation { background, .. } => known(&BACKGROUNDS, background),
            Template::Positional { reference, .. } => known(&CLASSES, reference),
        }
    }

    /// Question text in one of the template's phrasings.
    pub fn render(&self, rng: &mut Rng) -> String {
        let p = plural(self.class());
        match self {
            Template::SimpleCount { .. } => {
                let forms = [
                    format!("How many {p} are there?"),
                    format!("How many {p}?"),
                    format!("How many {p} are in the image?"),
                    format!("How many {p} are in the photo?"),
                    format!("How many {p} can you see?"),
                ];
                forms[rng.index(forms.len())].clone()
            }
            Template::AttributeCount { attribute, .. } | Template::Absurd { attribute, .. } => {
                format!("How many {attribute} {p} are there?")
            }
            Template::BackgroundRelation { background, .. } => {
                let prep = if background == "water" || background == "sky" { "in" } else { "on" };
                format!("How many {p} are {prep} the {background}?")
            }
            Template::Positional { relation, reference, .. } => {
                format!("How many {p} are {} the {reference}?", relation.phrase())
            }
            Template::Negation { attribute, .. } => format!("How many {p} are not {attribute}?"),
        }
    }
}

/// Exhaustive ground-truth count of `template` over the objects of `scene`.
pub fn oracle_count(scene: &Scene, template: &Template) -> Result<usize> {
    template.validate()?;
    let of_class = || scene.objects.iter().filter(|o| o.class == template.class());
    Ok(match template {
        Template::SimpleCount { .. } => of_class().count(),
        Template::AttributeCount { attribute, .. } | Template::Absurd { attribute, .. } => {
            of_class().filter(|o| o.has_attribute(attribute)).count()
        }
        Template::Negation { attribute, .. } => of_class().filter(|o| !o.has_attribute(attribute)).count(),
        Template::BackgroundRelation { background, .. } => {
            of_class().filter(|o| scene.background_at(&o.bbox) == background).count()
        }
        Template::Positional { relation, reference, .. } => {
            let refs: Vec<_> = scene.objects.iter().filter(|o| &o.class == reference).collect();
            let [r] = refs.as_slice() else {
                return Err(Error::InvalidArgument(format!(
                    "reference class {reference} must appear exactly once, found {}",
                    refs.len()
                )));
            };
            let c = r.bbox.center();
            of_class().filter(|o| o.id != r.id && relation.holds(o.bbox.center(), c)).count()
        }
    })
}

/// Pick slot fillers for `kind` about `focus` in `scene`. With probability `informative`,
/// fillers whose answer lies strictly between 0 and the plain class total are preferred,
/// then any answer other than the total.
/// Returns `None` when the scene cannot support the kind.
pub fn choose_template(scene: &Scene, kind: TemplateKind, focus: &str, informative: f64, rng: &mut Rng) -> Result<Option<Template>> {
    let class = focus.to_string();
    let attributes = || COLORS.iter().chain(&STATES).map(|a| a.to_string());
    let candidates: Vec<Template> = match kind {
        TemplateKind::SimpleCount => return Ok(Some(Template::SimpleCount { class })),
        TemplateKind::AttributeCount => {
            attributes().map(|attribute| Template::AttributeCount { class: class.clone(), attribute }).collect()
        }
        TemplateKind::Negation => attributes().map(|attribute| Template::Negation { class: class.clone(), attribute }).collect(),
        TemplateKind::BackgroundRelation => BACKGROUNDS
            .iter()
            .map(|b| Template::BackgroundRelation { class: class.clone(), background: b.to_string() })
            .collect(),
        TemplateKind::Positional => CLASSES
            .iter()
            .filter(|c| **c != focus && scene.class_count(c) == 1)
            .flat_map(|r| {
                Relation::ALL.map(|relation| Template::Positional { class: class.clone(), relation, reference: r.to_string() })
            })
            .collect(),
        TemplateKind::Absurd => {
            let absent: Vec<&str> = CLASSES.iter().copied().filter(|c| scene.class_count(c) == 0).collect();
            if absent.is_empty() {
                return Ok(None);
            }
            let attrs: Vec<String> = attributes().collect();
            return Ok(Some(Template::Absurd {
                class: absent[rng.index(absent.len())].to_string(),
                attribute: attrs[rng.index(attrs.len())].clone(),
            }));
        }
    };
    if candidates.is_empty() {
        return Ok(None);
    }
    let total = scene.class_count(focus);
    let mut strict = Vec::new();
    let mut differing = Vec::new();
    for t in &candidates {
        let answer = oracle_count(scene, t)?;
        if answer != total {
            differing.push(t.clone());
            if answer > 0 {
                strict.push(t.clone());
            }
        }
    }
    let pool = if rng.bernoulli(informative) {
        [&strict, &differing, &candidates].into_iter().find(|p| !p.is_empty()).expect("candidates are non-empty")
    } else {
        &candidates
    };
    Ok(Some(pool[rng.index(pool.len())].clone()))
}
