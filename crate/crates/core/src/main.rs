use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use sketchparse::data::{generate_synthetic, load_jsonl, save_jsonl, split, GenConfig, Record, Shape, SplitTag};
use sketchparse::lf::tokenize_question;
use sketchparse::multitask::LossWeights;
use sketchparse::pipeline::{
    hard_subset, train_system, EvalReport, FusionWeights, System, SystemConfig, TuningSummary,
};
use sketchparse::{Error, Result};

#[derive(Parser)]
#[command(name = "sketchparse", version, about = "Sketch-based semantic parser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus split into train, dev, test and hard files.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 625)]
        per_class: usize,
        /// Comma-separated sketch shapes.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<Shape>>,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 40)]
        predicates: usize,
    },
    /// Train every stage and write a checkpoint directory.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        hidden: Option<usize>,
        /// Classification and labeling loss weights, e.g. `1,2`.
        #[arg(long, value_parser = parse_loss_weights)]
        loss_weights: Option<LossWeights>,
    },
    /// Predict logical forms for a JSONL file of questions.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and write a JSON report.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        hard: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the sketch, patterns and template of one JSON sample.
    Inspect {
        #[arg(long)]
        sample: String,
    },
}

fn parse_loss_weights(s: &str) -> std::result::Result<LossWeights, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [c, l] = parts.as_slice() else {
        return Err("expected two comma-separated weights".into());
    };
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .ok()
            .filter(|w| w.is_finite() && *w >= 0.0)
            .ok_or_else(|| format!("invalid weight `{x}`"))
    };
    Ok(LossWeights {
        classification: parse(c)?,
        labeling: parse(l)?,
    })
}

#[derive(Serialize)]
struct Report<'a> {
    weights: FusionWeights,
    tuning: TuningSummary,
    test: &'a EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    hard: Option<&'a EvalReport>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_error(path, e))?))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn gen_data(out: &Path, cfg: GenConfig) -> Result<()> {
    cfg.validate()?;
    let corpus = generate_synthetic(&cfg);
    let (train, dev, test) = split(&corpus, [0.8, 0.1, 0.1], cfg.seed)?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    save_jsonl(&train, out.join("train.jsonl"))?;
    save_jsonl(&dev, out.join("dev.jsonl"))?;
    save_jsonl(&test, out.join("test.jsonl"))?;
    save_jsonl(&hard_subset(&test), out.join("hard.jsonl"))?;
    println!(
        "wrote {} train, {} dev, {} test samples to {}",
        train.len(),
        dev.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn predict(model: &Path, input: &Path, out: &Path) -> Result<()> {
    let system = System::load(model)?;
    let reader = BufReader::new(File::open(input).map_err(|e| io_error(input, e))?);
    let mut w = create(out)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_error(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_error = |message: String| Error::ParseError { line: i + 1, message };
        let mut record: Map<String, Value> = serde_json::from_str(&line).map_err(|e| parse_error(e.to_string()))?;
        let question = record
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_error("missing `question`".into()))?;
        let prediction = system.analyze(&tokenize_question(question)?)?;
        record.insert(
            "predicted_logical_form".into(),
            Value::String(prediction.top().unwrap_or_default().to_string()),
        );
        record.insert("predicted_sketch".into(), Value::String(prediction.class.clone()));
        record.insert("candidates".into(), serde_json::to_value(&prediction.candidates)?);
        if let Some(d) = &prediction.diagnostic {
            record.insert("diagnostic".into(), Value::String(d.clone()));
        }
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(|e| io_error(out, e))?;
    }
    w.flush().map_err(|e| io_error(out, e))
}

fn evaluate(model: &Path, test: &Path, hard: Option<&Path>, report: &Path) -> Result<()> {
    let system = System::load(model)?;
    let test_report = system.evaluate(&load_jsonl(test, SplitTag::Test)?)?;
    let hard_report = hard
        .map(|p| load_jsonl(p, SplitTag::Hard).and_then(|c| system.evaluate(&c)))
        .transpose()?;
    let mut w = create(report)?;
    serde_json::to_writer_pretty(
        &mut w,
        &Report {
            weights: system.weights,
            tuning: system.tuning,
            test: &test_report,
            hard: hard_report.as_ref(),
        },
    )?;
    w.write_all(b"\n").map_err(|e| io_error(report, e))?;
    w.flush().map_err(|e| io_error(report, e))?;
    println!("acc_l {:.4} on {} samples", test_report.acc_l, test_report.samples);
    if let Some(h) = &hard_report {
        println!("acc_l {:.4} on {} hard samples", h.acc_l, h.samples);
    }
    Ok(())
}

fn inspect(sample: &str) -> Result<()> {
    let record: Record = serde_json::from_str(sample)?;
    let s = record.into_sample()?;
    println!("sketch:           {}", s.sketch());
    println!("sketch class:     {}", s.sketch_class);
    println!("question pattern: {}", s.question_pattern()?);
    println!("lf pattern:       {}", s.lf_pattern()?);
    println!("template:         {}", s.template()?);
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            out,
            seed,
            per_class,
            classes,
            entities,
            predicates,
        } => gen_data(
            &out,
            GenConfig {
                shapes: classes.unwrap_or_else(|| Shape::DEFAULT.to_vec()),
                entity_vocab: entities,
                predicate_vocab: predicates,
                per_class,
                seed,
            },
        ),
        Command::Train {
            train,
            dev,
            out,
            epochs,
            seed,
            hidden,
            loss_weights,
        } => {
            let mut cfg = SystemConfig::default();
            if let Some(seed) = seed {
                cfg = cfg.with_seed(seed);
            }
            if let Some(e) = epochs {
                cfg.multitask.epochs = e;
            }
            if let Some(h) = hidden {
                cfg.multitask.hidden = h;
                cfg.matcher.hidden = h;
            }
            if let Some(w) = loss_weights {
                cfg.multitask.loss_weights = w;
            }
            let train = load_jsonl(&train, SplitTag::Train)?;
            let dev = load_jsonl(&dev, SplitTag::Dev)?;
            let system = train_system(&train, &dev, &cfg)?;
            system.save(&out)?;
            println!(
                "dev accuracy {:.4} (pattern-only {:.4}), weights {:?}",
                system.tuning.tuned_accuracy, system.tuning.baseline_accuracy, system.weights
            );
            Ok(())
        }
        Command::Predict { model, input, out } => predict(&model, &input, &out),
        Command::Evaluate {
            model,
            test,
            hard,
            report,
        } => evaluate(&model, &test, hard.as_deref(), &report),
        Command::Inspect { sample } => inspect(&sample),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
