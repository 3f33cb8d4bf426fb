use tally_core::checkpoint::Checkpoint;
use tally_core::eval::{evaluate, train_loop, CountModel, ExperimentConfig, ModelKind};
use tally_core::synth::{emit_dataset, read_jsonl, write_jsonl, Split};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.scenes = 240;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 16;
    cfg
}

#[test]
fn checkpoint_files_reproduce_the_trained_model() {
    let cfg = small_config();
    let records = emit_dataset(&cfg.dataset, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let data = dir.path().join("data.jsonl");
    write_jsonl(&records, std::fs::File::create(&data).unwrap()).unwrap();
    let loaded = read_jsonl(std::io::BufReader::new(std::fs::File::open(&data).unwrap())).unwrap();
    assert_eq!(loaded, records);

    for kind in ["rcn", "q+i", "i-only", "detect", "guess-2"] {
        let kind: ModelKind = kind.parse().unwrap();
        let outcome = train_loop(kind, &loaded, &cfg, 6).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        outcome.model.to_checkpoint().unwrap().save(&path).unwrap();
        let restored = CountModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(restored.name(), outcome.model.name());

        let again = evaluate(&restored, &loaded, &cfg, 6).unwrap();
        assert_eq!(again.splits, outcome.report.splits, "{kind}");
        assert_eq!(again.config_fingerprint, cfg.fingerprint());
        let sizes: Vec<usize> = again.splits.iter().map(|s| s.size).collect();
        let expected: Vec<usize> = [Split::TestSimple, Split::TestComplex]
            .iter()
            .map(|s| records.iter().filter(|r| r.split == *s).count())
            .collect();
        assert_eq!(sizes, expected);
    }
}

#[test]
fn training_log_is_complete() {
    let cfg = small_config();
    let records = emit_dataset(&cfg.dataset, 8).unwrap();
    let outcome = train_loop(ModelKind::Rcn, &records, &cfg, 9).unwrap();
    let log = outcome.report.training.as_ref().unwrap();
    assert_eq!(log.epochs.len(), 3);
    assert!(log.best_epoch <= 3);
    assert!(log.validation_size > 0 && log.train_size + log.validation_size == 150);
    assert!((log.initial_loss - 16f64.ln()).abs() < 1e-9);
    for e in &log.epochs {
        assert!(e.train_loss.is_finite());
        assert_eq!(e.test_accuracy.len(), 2);
    }
}
