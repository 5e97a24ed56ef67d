use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use narrate::dataset::{load_dataset, validate, write_dataset, Dataset};
use narrate::harness::{render_text, run_experiment, run_sweep, ExperimentConfig, Report, SweepAxis};
use narrate::synth::{generate_corpus, CorpusConfig};
use narrate::tokenizer::{chunk, Chunk, Tokenizer, TokenizerParams};
use serde_json::json;

#[derive(Parser)]
#[command(name = "narrate", version, about = "Motion tokenization and narration retrieval experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its ground truth.
    Synth {
        /// Corpus config JSON; flags below fill in when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 3)]
        positions: usize,
        #[arg(long, default_value_t = 8)]
        primitives: usize,
        #[arg(long, default_value_t = 10)]
        segments: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset directory and print a validation summary.
    Validate { dataset: PathBuf },
    /// Fit a tokenizer on every annotated interval of a dataset.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        /// Tokenizer parameters JSON (defaults when omitted).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tokenize every segment and position with a fitted codebook, as JSON lines.
    Tokenize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment config and write report.json and report.txt.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment once per value of one axis and write trend.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// K, window, views or augment.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 8,16,32,64.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a report.json (or a directory holding one) as text.
    Report { path: PathBuf },
}

struct CliError {
    message: String,
    path: Option<PathBuf>,
}

impl CliError {
    fn at(path: &Path, message: impl ToString) -> Self {
        Self { message: message.to_string(), path: Some(path.to_path_buf()) }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::at(path, e))
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).map_err(|e| CliError::at(path, e))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_file(path).and_then(|c| c.with_env_seed()).map_err(|e| CliError::at(path, e))?;
    cfg.check().map_err(|e| CliError::at(path, e))?;
    Ok(cfg)
}

fn fit_chunks(d: &Dataset, params: &TokenizerParams) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for session in &d.sessions {
        for seg in &session.segments {
            for &p in &seg.positions {
                if let Some(stream) = session.stream(p) {
                    let (_, chunks) = chunk(stream, seg.start_s, seg.end_s, params.window_s, params.overlap)
                        .map_err(|e| CliError { message: e.to_string(), path: None })?;
                    out.extend(chunks.into_iter().filter(|c| c.missing_fraction <= params.max_fit_missing));
                }
            }
        }
    }
    Ok(out)
}

fn sample_rate(d: &Dataset, path: &Path) -> Result<f64> {
    let mut rates = d.sessions.iter().flat_map(|s| s.streams.iter().map(|st| st.sample_rate_hz));
    let first = rates.next().ok_or_else(|| CliError::at(path, "dataset has no streams"))?;
    if rates.any(|r| r != first) {
        return Err(CliError::at(path, "streams disagree on sample rate"));
    }
    Ok(first)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, subjects, positions, primitives, segments, seed, out } => {
            let cfg = match &config {
                Some(p) => serde_json::from_str::<CorpusConfig>(&read(p)?).map_err(|e| CliError::at(p, e))?,
                None => CorpusConfig::new(subjects, positions, primitives, segments, seed),
            };
            let (dataset, truth) = generate_corpus(&cfg).map_err(|e| CliError {
                message: e.to_string(),
                path: config.clone(),
            })?;
            write_dataset(&dataset, &out).map_err(|e| CliError::at(&out, e))?;
            let gt = out.join("ground_truth.jsonl");
            truth.write_to(&gt).map_err(|e| CliError::at(&gt, e))?;
            println!(
                "{}",
                json!({"sessions": dataset.sessions.len(), "segments": dataset.segment_count(), "out": out})
            );
        }
        Command::Validate { dataset } => {
            let d = load(&dataset)?;
            let report = validate(&d);
            if !report.is_valid() {
                let first = &report.violations[0];
                return Err(CliError::at(
                    &dataset,
                    format!("{} violations; first at {}: {}", report.violations.len(), first.location, first.message),
                ));
            }
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Fit { dataset, params, seed, out } => {
            let tp: TokenizerParams = match &params {
                Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::at(p, e))?,
                None => TokenizerParams::default(),
            };
            let d = load(&dataset)?;
            let fs = sample_rate(&d, &dataset)?;
            let chunks = fit_chunks(&d, &tp)?;
            let tok = Tokenizer::fit(&tp, fs, &chunks, seed).map_err(|e| CliError::at(&dataset, e))?;
            write(&out, &tok.to_json())?;
            println!(
                "{}",
                json!({"chunks": chunks.len(), "k": tp.k, "iterations": tok.codebook.fit.iterations, "out": out})
            );
        }
        Command::Tokenize { dataset, codebook, out } => {
            let tok = Tokenizer::from_json(&read(&codebook)?).map_err(|e| CliError::at(&codebook, e))?;
            let d = load(&dataset)?;
            if sample_rate(&d, &dataset)? != tok.sample_rate_hz {
                return Err(CliError::at(&dataset, "sample rate differs from the codebook's"));
            }
            let mut lines = String::new();
            for session in &d.sessions {
                for seg in &session.segments {
                    for &p in &seg.positions {
                        let Some(stream) = session.stream(p) else { continue };
                        let (_, mut seq) =
                            tok.tokenize(stream, seg.start_s, seg.end_s).map_err(|e| CliError::at(&dataset, e))?;
                        seq.segment_id = Some(seg.id.clone());
                        lines.push_str(&serde_json::to_string(&seq).expect("tokens serialize"));
                        lines.push('\n');
                    }
                }
            }
            match out {
                Some(p) => write(&p, &lines)?,
                None => print!("{lines}"),
            }
        }
        Command::Eval { config, out } => {
            let mut cfg = load_config(&config)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let dir = cfg.output_dir.clone().ok_or_else(|| CliError::at(&config, "no output directory; pass --out"))?;
            let report = run_experiment(&cfg).map_err(|e| CliError::at(&config, e))?;
            report.write_to(&dir).map_err(|e| CliError { message: e.to_string(), path: Some(dir.clone()) })?;
            println!("{}", json!({"folds": report.folds.len(), "out": dir}));
        }
        Command::Sweep { config, axis, values, out } => {
            let cfg = load_config(&config)?;
            let axis = SweepAxis::parse(&axis).map_err(|e| CliError::at(&config, e))?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| CliError::at(&config, "no output directory; pass --out"))?;
            let outcome = run_sweep(&cfg, axis, &values, Some(&dir)).map_err(|e| CliError::at(&config, e))?;
            println!("{}", json!({"values": outcome.reports.len(), "out": dir}));
        }
        Command::Report { path } => {
            let file = if path.is_dir() { path.join("report.json") } else { path };
            let report = Report::from_json(&read(&file)?).map_err(|e| CliError::at(&file, e))?;
            print!("{}", render_text(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.message, "path": e.path}));
            ExitCode::FAILURE
        }
    }
}
