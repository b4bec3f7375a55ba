use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use pu_rank::corpus::{
    convert_tsv, corpus_stats, generate_synthetic, load_categories, load_corpus, read_gold_sets, split_dataset,
    vote_summary, write_categories, write_corpus, Dataset, SplitTag, SynthConfig, VoteRecord,
};
use pu_rank::encoder::{encode_all, EmbeddingTable};
use pu_rank::eval::{
    classification_table, comparative_rank_analysis, misclassification_text, propagation_quality,
    propagation_quality_text,
};
use pu_rank::pipeline::{
    evaluate, paired_comparison, run_trials, run_trials_with, train, TrainConfig, TrainedModel, TrialData,
};
use pu_rank::propagation::{propagate, PropagationConfig, Variant};
use pu_rank::{Error, Result};

#[derive(Parser)]
#[command(name = "pu-rank", version, about = "PU/PN multi-label ranking with label propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (categories, splits, embeddings, hidden train gold).
    Generate(GenerateArgs),
    /// Train a model and write a checkpoint plus a JSON-lines epoch log.
    Train(TrainArgs),
    /// Propagate labels over a training corpus with a model's encoder.
    Propagate(PropagateArgs),
    /// Score a test corpus: accuracy, recall@k, MRR and misclassifications.
    Evaluate(EvaluateArgs),
    /// Corpus statistics and optional inter-rater agreement.
    Stats(StatsArgs),
    /// Repeat training over consecutive seeds and compare two configurations.
    Trials(TrialsArgs),
    /// Convert a tab-separated corpus to JSON lines, optionally splitting it.
    Convert(ConvertArgs),
}

/// Standard corpus directory: categories.json, {train,valid,test}.jsonl, embeddings.txt.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Embedding table; defaults to <data>/embeddings.txt.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl DataArgs {
    fn categories(&self) -> PathBuf {
        self.data.join("categories.json")
    }

    fn split(&self, split: SplitTag) -> Result<Dataset> {
        let name = match split {
            SplitTag::Train => "train.jsonl",
            SplitTag::Valid => "valid.jsonl",
            SplitTag::Test => "test.jsonl",
        };
        load_corpus(self.data.join(name), self.categories(), split)
    }

    fn table(&self) -> Result<EmbeddingTable> {
        let path = self.embeddings.clone().unwrap_or_else(|| self.data.join("embeddings.txt"));
        EmbeddingTable::read_text(path)
    }

    fn trial_data(&self) -> Result<TrialData> {
        Ok(TrialData {
            train: self.split(SplitTag::Train)?,
            valid: self.split(SplitTag::Valid)?,
            test: self.split(SplitTag::Test)?,
            table: self.table()?,
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// SynthConfig JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TrainConfig JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Epoch log; defaults to <out>.log.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Nearest,
    Mean,
}

#[derive(Args)]
struct PropagateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Defaults to the model's training mode (mean for pn models).
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Complete train gold sets (JSON lines) for the quality report.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; propagation draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Second model for the comparative rank analysis (this model is B).
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; evaluation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    categories: PathBuf,
    #[arg(long, default_value = "train")]
    split: SplitTag,
    /// Vote records (JSON lines of {request_id, category, votes}).
    #[arg(long)]
    votes: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    raters: u32,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; statistics are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrialsArgs {
    #[arg(long)]
    config_a: PathBuf,
    #[arg(long)]
    config_b: Option<PathBuf>,
    /// Fixed corpus directory shared by every trial.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// SynthConfig JSON; each trial generates its own corpus with the trial seed.
    #[arg(long)]
    synth: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    categories: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stratified train/valid/test ratios, e.g. 0.8,0.1,0.1; writes three files into --out.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn config_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: SynthConfig = config_or_default(a.config.as_ref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let corpus = generate_synthetic(&cfg)?;
    corpus.write_to_dir(&a.out)?;
    println!(
        "wrote {} train / {} valid / {} test requests over {} categories to {}",
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len(),
        corpus.train.category_count(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = config_or_default(a.config.as_ref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let train_set = a.data.split(SplitTag::Train)?;
    let valid_set = a.data.split(SplitTag::Valid)?;
    let table = a.data.table()?;
    let model = train(&train_set, &valid_set, &table, &cfg)?;
    model.save(&a.out)?;

    let log_path = a.log.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.jsonl");
        p.into()
    });
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for rec in &model.log {
        let line = serde_json::to_string(rec).map_err(|e| Error::Checkpoint(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(&log_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&log_path, e))?;
    match model.best_epoch {
        Some(e) => println!("best validation MRR at epoch {e}; checkpoint {}", a.out.display()),
        None => println!("checkpoint {}", a.out.display()),
    }
    Ok(())
}

fn cmd_propagate(a: PropagateArgs) -> Result<()> {
    let table = a.data.table()?;
    let model = TrainedModel::load(&a.model, Some(&table))?;
    let train_set = a.data.split(SplitTag::Train)?;
    let variant = match a.variant {
        Some(VariantArg::Nearest) => Variant::Nearest,
        Some(VariantArg::Mean) => Variant::Mean,
        None => model.config.mode.variant().unwrap_or(Variant::Mean),
    };
    let vectors = encode_all(&train_set, &model.table)?;
    let cfg = PropagationConfig {
        variant,
        category_count: train_set.category_count(),
    };
    let result = propagate(&train_set, &vectors, &cfg)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    if let Some(out) = &a.out {
        write_json(&result, out)?;
    }
    let given = train_set.given();
    let propagated = result.propagated_positives(&given);
    println!(
        "{:?} propagation: mean distance {:.6}, {} propagated positives",
        variant,
        result.mean_distance,
        propagated.iter().map(|p| p.len()).sum::<usize>()
    );
    if let Some(gold_path) = &a.gold {
        let gold = read_gold_sets(gold_path)?;
        let q = propagation_quality(&propagated, &gold, &given, &train_set.functions())?;
        print!("{}", propagation_quality_text(&q));
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let table = a.data.table()?;
    let model = TrainedModel::load(&a.model, Some(&table))?;
    let test = a.data.split(SplitTag::Test)?;
    let report = evaluate(&model, &test, a.k)?;
    let name = model.config.mode.as_str().to_owned();
    print!("{}", classification_table(&[(name, report.metrics)]));
    print!("{}", misclassification_text(&report.misclassification, &test.categories, 10));

    let mut json = serde_json::json!({ "metrics": report.metrics, "misclassification": report.misclassification });
    if let Some(base_path) = &a.baseline {
        let baseline = TrainedModel::load(base_path, Some(&table))?;
        let base_report = evaluate(&baseline, &test, a.k)?;
        let cmp = comparative_rank_analysis(&base_report.rankings, &report.rankings, &test.gold_or_given())?;
        match cmp.percentage {
            Some(p) => println!("comparative rank analysis: {p:.2}% of {} qualifying requests", cmp.qualifying),
            None => println!("comparative rank analysis: no qualifying requests"),
        }
        json["baseline_metrics"] = serde_json::to_value(base_report.metrics).expect("metrics serialise");
        json["comparative_rank"] = serde_json::to_value(cmp).expect("analysis serialises");
    }
    if let Some(out) = &a.out {
        write_json(&json, out)?;
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let d = load_corpus(&a.corpus, &a.categories, a.split)?;
    let mut report = corpus_stats(&d);
    if let Some(path) = &a.votes {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let votes = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<VoteRecord>(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report = report.with_votes(vote_summary(&votes, a.raters)?);
    }
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_json(&report, out)?;
    }
    Ok(())
}

fn cmd_trials(a: TrialsArgs) -> Result<()> {
    let load = |p: &PathBuf| -> Result<TrainConfig> {
        let mut cfg: TrainConfig = read_json(p)?;
        if let Some(seed) = a.seed {
            cfg.seed = seed;
        }
        if let Some(n) = a.trials {
            cfg.trial_count = n;
        }
        Ok(cfg)
    };
    let cfg_a = load(&a.config_a)?;
    let cfg_b = a.config_b.as_ref().map(load).transpose()?;

    let run = |cfg: &TrainConfig| -> Result<pu_rank::pipeline::TrialReport> {
        match (&a.data, &a.synth) {
            (Some(dir), None) => {
                let data = DataArgs {
                    data: dir.clone(),
                    embeddings: None,
                }
                .trial_data()?;
                run_trials(cfg, &data)
            }
            (None, Some(synth_path)) => {
                let synth: SynthConfig = read_json(synth_path)?;
                run_trials_with(cfg, |seed| {
                    let s = generate_synthetic(&SynthConfig { seed, ..synth.clone() })?;
                    Ok(TrialData {
                        train: s.train,
                        valid: s.valid,
                        test: s.test,
                        table: s.embeddings,
                    })
                })
            }
            _ => Err(Error::InvalidConfig("pass exactly one of --data or --synth".into())),
        }
    };

    let report_a = run(&cfg_a)?;
    let rows = |name: &str, r: &pu_rank::pipeline::TrialReport| {
        format!(
            "{name}: accuracy {:.4} ± {:.4}  R@{} {:.4} ± {:.4}  MRR {:.4} ± {:.4}  ({} trials)",
            r.accuracy.mean,
            r.accuracy.std,
            r.config.eval_k,
            r.recall_at_k.mean,
            r.recall_at_k.std,
            r.mrr.mean,
            r.mrr.std,
            r.runs.len()
        )
    };
    println!("{}", rows("A", &report_a));
    match cfg_b {
        None => {
            if let Some(out) = &a.out {
                write_json(&report_a, out)?;
            }
        }
        Some(cfg_b) => {
            let report_b = run(&cfg_b)?;
            println!("{}", rows("B", &report_b));
            let paired = paired_comparison(report_a, report_b)?;
            for (name, c) in [("accuracy", &paired.accuracy), ("recall", &paired.recall_at_k), ("mrr", &paired.mrr)] {
                println!(
                    "B - A {name}: mean {:+.4}, wins {} losses {} ties {}, t = {}",
                    c.mean_difference,
                    c.wins,
                    c.losses,
                    c.ties,
                    c.t_statistic.map_or_else(|| "n/a".to_owned(), |t| format!("{t:.3}"))
                );
            }
            if let Some(out) = &a.out {
                write_json(&paired, out)?;
            }
        }
    }
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let categories = load_categories(&a.categories)?;
    let requests = convert_tsv(&text)?;
    let has_gold = requests.iter().all(|r| r.gold_categories.is_some());
    let dataset = Dataset {
        categories,
        requests,
        split: if has_gold { SplitTag::Test } else { SplitTag::Train },
    };
    dataset.validate()?;
    match a.split {
        None => {
            write_corpus(&dataset, &a.out)?;
            println!("wrote {} requests to {}", dataset.len(), a.out.display());
        }
        Some(r) => {
            let r: [f64; 3] = r
                .try_into()
                .map_err(|r: Vec<f64>| Error::InvalidConfig(format!("--split needs 3 ratios, got {}", r.len())))?;
            let (train_set, valid_set, test_set) = split_dataset(&dataset, r, a.seed)?;
            fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            write_categories(&dataset.categories, a.out.join("categories.json"))?;
            write_corpus(&train_set, a.out.join("train.jsonl"))?;
            write_corpus(&valid_set, a.out.join("valid.jsonl"))?;
            write_corpus(&test_set, a.out.join("test.jsonl"))?;
            println!(
                "wrote {} / {} / {} requests to {}",
                train_set.len(),
                valid_set.len(),
                test_set.len(),
                a.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Trials(a) => cmd_trials(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
