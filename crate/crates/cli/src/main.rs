use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use tally_core::checkpoint::Checkpoint;
use tally_core::eval::{
    evaluate, histogram, histogram_table, results_table, template_table, train_loop, ComparisonStats, CountModel,
    ExperimentConfig, ModelKind, DEFAULT_CONFIG_TOML,
};
use tally_core::geometry::{comparison_count, grid_comparison_count};
use tally_core::question::{classify_text, Lexicon, QuestionClass};
use tally_core::rcn::{RcnInput, RcnModel};
use tally_core::synth::{emit_dataset, read_jsonl, write_jsonl, SceneRecord, Split};

#[derive(Parser)]
#[command(name = "tally", version, about = "Counting-question toolkit: synthetic data, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSON lines.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML experiment config; only the [dataset] table is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the total scene count.
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label each question in a text file (one per line) simple or complex.
    Classify {
        input: PathBuf,
        /// Extra `word<TAB>tag` lexicon entries.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Extra stop phrases, one per line.
        #[arg(long)]
        stop_phrases: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint and report.
    Train {
        /// rcn, guess-K, q-only, i-only, q+i or detect.
        #[arg(long, default_value = "rcn")]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset from gen-data; generated from the config and seed when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// test-simple, test-complex or all.
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write per-proposal relevance scores of an RCN checkpoint.
    Visualize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer histograms and comparison counts of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 15)]
        max_count: usize,
        /// Write the statistics as JSON here as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the default config with every key documented.
    Config,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ExperimentConfig::from_toml(&text)?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_data(path: &Path) -> Result<Vec<SceneRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_jsonl(BufReader::new(file))?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn filter_split(records: Vec<SceneRecord>, split: Option<&str>) -> Result<Vec<SceneRecord>> {
    match split {
        None | Some("all") => Ok(records),
        Some(s) => {
            let split: Split = s.parse()?;
            Ok(records.into_iter().filter(|r| r.split == split).collect())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData { seed, config, scenes, out } => {
            let mut cfg = load_config(config.as_deref())?.dataset;
            if let Some(n) = scenes {
                cfg.scenes = n;
            }
            let records = emit_dataset(&cfg, seed)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_jsonl(&records, BufWriter::new(file))?;
            let sizes = cfg.split_sizes();
            println!("wrote {} scenes to {} (train {}, test-simple {}, test-complex {})", records.len(), out.display(), sizes[0], sizes[1], sizes[2]);
        }
        Command::Classify { input, lexicon, stop_phrases } => {
            let mut lex = Lexicon::default();
            if let Some(p) = lexicon {
                lex.load_words(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?;
            }
            if let Some(p) = stop_phrases {
                lex.load_stop_phrases(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?);
            }
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut out = std::io::stdout().lock();
            for q in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                let label = match classify_text(q, &lex) {
                    QuestionClass::Simple => "simple",
                    QuestionClass::Complex => "complex",
                };
                writeln!(out, "{label}\t{q}")?;
            }
        }
        Command::Train { kind, config, seed, data, checkpoint, report } => {
            let kind: ModelKind = kind.parse()?;
            let cfg = load_config(config.as_deref())?;
            let records = match &data {
                Some(p) => load_data(p)?,
                None => emit_dataset(&cfg.dataset, seed)?,
            };
            let outcome = train_loop(kind, &records, &cfg, seed)?;
            write_text(&checkpoint, &outcome.model.to_checkpoint()?.to_json()?)?;
            write_text(&report, &outcome.report.to_json()?)?;
            if let Some(log) = &outcome.report.training {
                for e in &log.epochs {
                    let val = e.validation_accuracy.map_or("-".into(), |v| format!("{v:.1}"));
                    println!("epoch {:>3}  loss {:.4}  validation {}", e.epoch, e.train_loss, val);
                }
                println!("initial loss {:.4}, kept epoch {}", log.initial_loss, log.best_epoch);
            }
            print!("{}", results_table(&[&outcome.report]));
        }
        Command::Eval { checkpoint, data, split, config, seed, report } => {
            let cfg = load_config(config.as_deref())?;
            let model = CountModel::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            let records = filter_split(load_data(&data)?, Some(&split))?;
            let rep = evaluate(&model, &records, &cfg, seed)?;
            if rep.splits.is_empty() {
                bail!("no test-split records in {}", data.display());
            }
            if let Some(p) = report {
                write_text(&p, &rep.to_json()?)?;
            }
            print!("{}", results_table(&[&rep]));
            for s in &rep.splits {
                println!();
                print!("{}", template_table(&[&rep], s.split));
            }
        }
        Command::Visualize { checkpoint, data, split, limit, out } => {
            let model = RcnModel::from_checkpoint(&Checkpoint::load(&checkpoint)?)?;
            let mut records = filter_split(load_data(&data)?, split.as_deref())?;
            if let Some(n) = limit {
                records.truncate(n);
            }
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            for r in &records {
                let tokens = model.vocab.encode(&r.question);
                let input = RcnInput { proposals: &r.scene.proposals, patches: &r.scene.patches, tokens: &tokens };
                let prediction = model.predict(&input)?;
                let scores = model.proposal_scores(&input)?;
                let line = json!({
                    "id": r.id,
                    "question": r.question,
                    "answer": r.answer,
                    "prediction": prediction.count,
                    "scores": scores,
                    "boxes": r.scene.proposals.iter().map(|p| [p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max]).collect::<Vec<_>>(),
                    "sources": r.scene.sources,
                });
                serde_json::to_writer(&mut w, &line)?;
                writeln!(w)?;
            }
            w.flush()?;
            println!("wrote scores for {} scenes to {}", records.len(), out.display());
        }
        Command::Stats { data, max_count, json } => {
            let records = load_data(&data)?;
            let mut hists = Vec::new();
            let mut stats = Vec::new();
            for split in Split::ALL {
                let recs: Vec<&SceneRecord> = records.iter().filter(|r| r.split == split).collect();
                if recs.is_empty() {
                    continue;
                }
                let answers: Vec<i64> = recs.iter().map(|r| r.answer as i64).collect();
                hists.push((split, histogram(&answers, 0, max_count as i64)?));
                stats.push((split, ComparisonStats::of(&recs)?));
            }
            let columns: Vec<(&str, &[usize])> = hists.iter().map(|(s, h)| (s.name(), h.as_slice())).collect();
            print!("{}", histogram_table(&columns));
            println!();
            for (split, s) in &stats {
                println!(
                    "{:<13} scenes {:>6}  mean n {:>6.2}  mean m {:>5.1}  mean comparisons {:>8.1}",
                    split.name(),
                    s.scenes,
                    s.mean_proposals,
                    s.mean_patches,
                    s.mean_comparisons
                );
            }
            let rcn = comparison_count(31.12, 16.0);
            let grid = grid_comparison_count(14);
            println!("reference: n=31.12, m=16 gives {:.0} comparisons; a 14x14 grid gives {grid} ({:.1}x)", rcn, grid as f64 / rcn);
            if let Some(p) = json {
                let value = json!({
                    "histograms": hists.iter().map(|(s, h)| (s.name(), h)).collect::<std::collections::BTreeMap<_, _>>(),
                    "comparisons": stats.iter().map(|(s, c)| (s.name(), c)).collect::<std::collections::BTreeMap<_, _>>(),
                });
                write_text(&p, &serde_json::to_string_pretty(&value)?)?;
            }
        }
        Command::Config => print!("{DEFAULT_CONFIG_TOML}"),
    }
    Ok(())
}
