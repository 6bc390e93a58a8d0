//! `ils`: build, inspect and review a grounded lesion-segmentation dataset.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ils_core::config::Config;
use ils_core::eval::{load_ground_truth, load_predictions, render_text, score_segmentation, score_text};
use ils_core::model::Split;
use ils_core::pipeline::{run_pipeline, RunOptions, Stage};
use ils_core::qc::{self, QcRecord};
use ils_core::report::LocationLexicon;
use ils_core::study::{load_study, Manifest};
use ils_core::synth::{corpus_specs, write_corpus, DetectorNoise};
use ils_core::{io, overlay};
use ils_review::{load_samples, render_report, ReviewState};

#[derive(Parser)]
#[command(name = "ils", version, about = "Grounded lesion masks and instruction-answer pairs from chest X-ray studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// QC and ground every study; writes masks and grounding records.
    Ground(PipelineArgs),
    /// Generate pairs from existing grounding records.
    Pairs(PipelineArgs),
    /// Ground and generate pairs in one go.
    Run(PipelineArgs),
    /// Validate studies and run the mask cross-check and CTR.
    Qc(QcArgs),
    /// Score predictions against a pairs file.
    Eval(EvalArgs),
    /// Write a synthetic corpus with known ground truth.
    Synth(SynthArgs),
    /// Tint a mask over an image.
    Overlay(OverlayArgs),
    /// Start the expert review service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; values override the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `thresholds.edema.tau_ano=0.02`.
    /// Applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Manifest, one study record per line.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(short = 'j', long, default_value_t = 1)]
    parallelism: usize,
    /// Location lexicon (phrase TAB labels) replacing the built-in one.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct QcArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the records as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth pairs (pairs.jsonl of a generated dataset).
    #[arg(long)]
    pairs: PathBuf,
    /// Predictions: JSON lines of {pair_id, mask_path, answer_text}.
    #[arg(long)]
    predictions: PathBuf,
    /// Directory that mask references in the pairs file are relative to.
    /// Defaults to the pairs file's directory.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Write both reports as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(short, long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum box corner displacement in pixels.
    #[arg(long, default_value_t = 0)]
    jitter: u32,
    /// Maximum absolute change to detector confidences.
    #[arg(long, default_value_t = 0.0)]
    confidence_noise: f64,
    /// Extra low-confidence boxes per study.
    #[arg(long, default_value_t = 0)]
    decoys: u32,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Output directory of a pipeline run.
    #[arg(long)]
    dataset: PathBuf,
    /// Manifest the dataset was built from.
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated expert ids.
    #[arg(long, value_delimiter = ',', required = true)]
    experts: Vec<String>,
    /// Seed for dealing negatives among experts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Verdict log; defaults to `<dataset>/review/verdicts.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Print the current acceptance report and exit instead of serving.
    #[arg(long)]
    report: bool,
}

/// Sets `path` (dotted) in `table` to `raw`, read as a TOML value when it
/// parses as one and as a string otherwise.
fn set_key(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).with_context(|| format!("empty key in `{path}`"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("`{p}` in `{path}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<Config> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    if args.overrides.is_empty() {
        return match &args.config {
            Some(p) => Config::load(p).map_err(Into::into),
            None => Ok(Config::default()),
        };
    }
    let mut table: toml::Table = toml::from_str(&text).context("parsing config")?;
    for o in &args.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("`--set {o}`: expected KEY=VALUE"))?;
        set_key(&mut table, k.trim(), v.trim())?;
    }
    Ok(Config::from_toml_str(&toml::to_string(&table)?)?)
}

fn pipeline(args: &PipelineArgs, stage: Stage) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let lexicon = match &args.lexicon {
        Some(p) => LocationLexicon::load(p)?,
        None => LocationLexicon::default(),
    };
    let manifest = Manifest::load(&args.manifest)?;
    let opts = RunOptions {
        parallelism: args.parallelism,
        stage,
    };
    let s = run_pipeline(&manifest, &cfg, &lexicon, &args.out, opts)?;
    println!(
        "{} studies: {} processed ({} reused), {} excluded by QC, {} quarantined",
        s.studies, s.processed, s.reused, s.qc_excluded, s.quarantined
    );
    if stage != Stage::Ground {
        println!("{} pairs written to {}", s.pairs, args.out.join("pairs.jsonl").display());
    }
    Ok(())
}

fn run_qc(args: &QcArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let manifest = Manifest::load(&args.manifest)?;
    let mut records: Vec<QcRecord> = Vec::new();
    let mut invalid = Vec::new();
    let mut stdout = std::io::stdout().lock();
    for study in &manifest.studies {
        match load_study(study, &manifest.root) {
            Ok(art) => {
                let r = qc::assess(&study.study_id, &study.qc_flags, &art.organs, &art.secondary_organs(), cfg.qc.rel_tol)?;
                let ctr = r.ctr.map_or("-".to_string(), |c| format!("{c:.3}"));
                let status = if r.passed() { "pass".to_string() } else { r.flags.iter().chain(&r.cross_check.reasons).cloned().collect::<Vec<_>>().join("; ") };
                let _ = writeln!(stdout, "{}\tctr {ctr}\t{status}", study.study_id);
                records.push(r);
            }
            Err(violations) => {
                for v in &violations {
                    let _ = writeln!(stdout, "{}\tinvalid\t{v}", study.study_id);
                }
                invalid.push(serde_json::json!({
                    "study_id": study.study_id,
                    "violations": violations.iter().map(ToString::to_string).collect::<Vec<_>>(),
                }));
            }
        }
    }
    if let Some(out) = &args.out {
        io::write_json(out, &serde_json::json!({ "studies": records, "invalid": invalid }))?;
    }
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let root = match &args.root {
        Some(r) => r.clone(),
        None => args.pairs.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    let truth = load_ground_truth(&args.pairs, &root)?;
    let preds = load_predictions(&args.predictions)?;
    let seg = score_segmentation(&preds, &truth)?;
    let text = score_text(&preds, &truth)?;
    print!("{}", render_text(&seg, &text));
    if let Some(p) = &args.json {
        io::write_json(p, &serde_json::json!({ "segmentation": seg, "text": text }))?;
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let noise = DetectorNoise {
        jitter_px: args.jitter,
        confidence_noise: args.confidence_noise,
        decoys: args.decoys,
    };
    let specs = corpus_specs(args.n, args.seed, noise);
    let (manifest, _) = write_corpus(&specs, &args.out)?;
    println!(
        "{} studies written; manifest at {}",
        manifest.studies.len(),
        args.out.join("manifest.jsonl").display()
    );
    Ok(())
}

fn run_overlay(args: &OverlayArgs) -> Result<()> {
    let image = io::read_image(&args.image)?;
    let mask = io::read_mask(&args.mask)?;
    overlay::write_overlay(&image, &mask, &args.out)?;
    Ok(())
}

fn run_serve(args: &ServeArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let samples = load_samples(&args.dataset, &manifest, args.split)?;
    if samples.is_empty() {
        bail!("no {} pairs in {}", args.split, args.dataset.display());
    }
    let log = args
        .log
        .clone()
        .unwrap_or_else(|| args.dataset.join("review").join("verdicts.jsonl"));
    let state = Arc::new(ReviewState::new(samples, &args.experts, args.seed, &log)?);
    if args.report {
        let ex = state.export();
        print!("{}", render_report(&ex.report));
        println!("excluded {}, unreviewed {}", ex.excluded.len(), ex.unreviewed.len());
        return Ok(());
    }
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("review service listening on http://{}", args.addr);
    rt.block_on(ils_review::serve(state, args.addr))?;
    Ok(())
}

/// The error chain joined with ": ", skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ground(a) => pipeline(a, Stage::Ground),
        Command::Pairs(a) => pipeline(a, Stage::Pairs),
        Command::Run(a) => pipeline(a, Stage::All),
        Command::Qc(a) => run_qc(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::Overlay(a) => run_overlay(a),
        Command::Serve(a) => run_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
