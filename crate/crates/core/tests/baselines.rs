use tally_core::baselines::SynonymMatcher;
use tally_core::eval::{evaluate, predict_all, CountModel, ExperimentConfig};
use tally_core::question::Lexicon;
use tally_core::synth::{emit_dataset, DatasetConfig, SceneRecord, Split, TemplateKind};

fn records(mix: [f64; 6], scenes: usize, seed: u64) -> Vec<SceneRecord> {
    let cfg = DatasetConfig { scenes, split_ratios: [1.0, 0.0, 0.0], train_mix: mix, ..DatasetConfig::default() };
    let mut out = emit_dataset(&cfg, seed).unwrap();
    out.iter_mut().for_each(|r| r.split = Split::TestComplex);
    out
}

#[test]
fn detect_is_exact_on_simple_questions() {
    let recs = records([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 400, 1);
    let model = CountModel::Detect(SynonymMatcher::default());
    let refs: Vec<&SceneRecord> = recs.iter().collect();
    let preds = predict_all(&model, &refs, 15, &Lexicon::default()).unwrap();
    for (r, p) in recs.iter().zip(preds) {
        assert_eq!(p, r.answer as i64, "{}", r.question);
    }
}

#[test]
fn detect_accuracy_on_complex_templates_is_the_class_total_agreement_rate() {
    for kind in [TemplateKind::BackgroundRelation, TemplateKind::Negation] {
        let mut mix = [0.0; 6];
        mix[TemplateKind::ALL.iter().position(|k| *k == kind).unwrap()] = 1.0;
        let recs = records(mix, 400, 2);
        let agree = recs.iter().filter(|r| r.answer == r.scene.class_count(r.template.class())).count();
        let expected = 100.0 * agree as f64 / recs.len() as f64;
        let report = evaluate(&CountModel::Detect(SynonymMatcher::default()), &recs, &ExperimentConfig::default(), 0).unwrap();
        let got = report.split(Split::TestComplex).unwrap().accuracy;
        assert!((got - expected).abs() < 1e-12, "{kind}: {got} vs {expected}");
        assert!(got < 100.0);
    }
}

#[test]
fn guess_ignores_its_input() {
    let recs = records([0.4, 0.12, 0.12, 0.12, 0.12, 0.12], 200, 3);
    let refs: Vec<&SceneRecord> = recs.iter().collect();
    for k in [0, 1, 2, 15] {
        let preds = predict_all(&CountModel::Guess(k), &refs, 15, &Lexicon::default()).unwrap();
        assert!(preds.iter().all(|&p| p == k as i64));
    }
}
