use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prp_rerank::bench::synthetic::{self, GoldPlacement, SyntheticSpec};
use prp_rerank::bench::{self, ComparatorConfig, ConfigDelta, Dataset, RunConfig};
use prp_rerank::comparator::{ComparisonRecord, HttpBackend};
use prp_rerank::eval::{calibrate, write_ledger_csv, EvalReport, LedgerRow};
use prp_rerank::ingest::write_jsonl;
use prp_rerank::prompt::parse_templates;
use prp_rerank::prompt_select::{build_labeled_pairs, read_pairs, select_prompt};
use prp_rerank::selection::SelectionTrace;

#[derive(Debug, Parser)]
#[command(name = "prp", version, about = "Pairwise reranking of retriever shortlists")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the worker pool width.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for reports and artifacts.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rerank every query and write the report, reranked lists and traces.
    Rerank,
    /// Run the pipeline once per Top-K value.
    SweepTopk {
        /// Comma-separated Top-K values; defaults to `sweep_k` in the config.
        #[arg(long, value_delimiter = ',')]
        k_values: Vec<usize>,
    },
    /// Apply config deltas cumulatively and write the speedup ledger.
    Ladder {
        /// JSON array of deltas; defaults to `ladder` in the config.
        #[arg(long)]
        steps: Option<PathBuf>,
    },
    /// Score candidate templates on labelled pairs against the remote backend.
    SelectPrompt {
        /// Template file; defaults to the config's templates or the bundled set.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Labelled pairs (JSONL); built from the dataset's gold labels when absent.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Fit prefill and per-token latency from recorded traces.
    CalibrateCost(CalibrateArgs),
    /// Write a seeded synthetic dataset and a matching config.
    GenSynthetic(SynthArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Traces (JSONL) as written by `rerank`.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = 1)]
    tokens_out: u32,
    #[arg(long, default_value_t = 1)]
    parallel_width: u32,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    docs: usize,
    #[arg(long, default_value_t = 500)]
    queries: usize,
    #[arg(long, default_value_t = 25)]
    shortlist: usize,
    /// `uniform`, `geometric:P` or `fixed:RANK`.
    #[arg(long, default_value = "geometric:0.35", value_parser = parse_placement)]
    placement: GoldPlacement,
    #[arg(long, default_value_t = 0.1)]
    absent_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
}

fn parse_placement(s: &str) -> Result<GoldPlacement, String> {
    let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
    match (kind, arg) {
        ("uniform", None) => Ok(GoldPlacement::Uniform),
        ("geometric", Some(p)) => p
            .parse()
            .map(|p| GoldPlacement::Geometric { p })
            .map_err(|e| format!("geometric parameter: {e}")),
        ("fixed", Some(r)) => r
            .parse()
            .map(|rank| GoldPlacement::Fixed { rank })
            .map_err(|e| format!("fixed rank: {e}")),
        _ => Err(format!("unrecognised placement {s:?}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic(args) => return gen_synthetic(&cli, args),
        Command::CalibrateCost(args) => return calibrate_cost(&cli, args),
        _ => {}
    }
    let cfg = load_config(&cli)?;
    let out = cli.output.clone().or_else(|| cfg.output.clone());
    match &cli.command {
        Command::Rerank => rerank(&cfg, out.as_deref()),
        Command::SweepTopk { k_values } => sweep(&cfg, k_values, out.as_deref()),
        Command::Ladder { steps } => ladder(&cfg, steps.as_deref(), out.as_deref()),
        Command::SelectPrompt { templates, pairs } => {
            prompt(&cfg, templates.as_deref(), pairs.as_deref(), out.as_deref())
        }
        Command::CalibrateCost(_) | Command::GenSynthetic(_) => unreachable!(),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_deref().context("--config is required for this command")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn write_reports_csv(dir: &Path, name: &str, reports: Vec<EvalReport>, ks: &[usize]) -> Result<()> {
    let rows: Vec<LedgerRow> = reports
        .into_iter()
        .map(|report| LedgerRow {
            report,
            speedup_factor: None,
            cumulative_speedup: None,
            measured_speedup_factor: None,
        })
        .collect();
    write_ledger_csv(&rows, ks, create(dir, name)?)?;
    Ok(())
}

fn rerank(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let output = bench::run_pipeline(cfg)?;
    if let Some(dir) = out {
        write_json(dir, "report.json", &output.report)?;
        write_reports_csv(dir, "report.csv", vec![output.report.clone()], &cfg.recall_ks)?;
        write_jsonl(create(dir, "reranked.jsonl")?, &output.lists)?;
        write_jsonl(create(dir, "traces.jsonl")?, &output.traces)?;
    }
    print_json(&output.report)
}

fn sweep(cfg: &RunConfig, k_values: &[usize], out: Option<&Path>) -> Result<()> {
    let ks = if k_values.is_empty() {
        &cfg.sweep_k[..]
    } else {
        k_values
    };
    let data = Dataset::load(cfg)?;
    let reports = bench::sweep_top_k(&data, cfg, ks)?;
    if let Some(dir) = out {
        write_json(dir, "sweep.json", &reports)?;
        write_reports_csv(dir, "sweep.csv", reports.clone(), &cfg.recall_ks)?;
    }
    print_json(&reports)
}

fn ladder(cfg: &RunConfig, steps: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let steps: Vec<ConfigDelta> = match steps {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))?
        }
        None => cfg.ladder.clone(),
    };
    let data = Dataset::load(cfg)?;
    let rows = bench::ladder(&data, cfg, &steps)?;
    if let Some(dir) = out {
        write_json(dir, "ladder.json", &rows)?;
        write_ledger_csv(&rows, &cfg.recall_ks, create(dir, "ladder.csv")?)?;
    }
    write_ledger_csv(&rows, &cfg.recall_ks, std::io::stdout().lock())?;
    Ok(())
}

fn prompt(cfg: &RunConfig, templates: Option<&Path>, pairs: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let ComparatorConfig::Remote(remote) = &cfg.comparator else {
        bail!("select-prompt needs a remote comparator; the simulator does not read prompt text");
    };
    let backend = HttpBackend::new(remote)?;
    let data = Dataset::load(cfg)?;
    let templates = match templates {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_templates(&text)?
        }
        None => data.templates.clone(),
    };
    let pairs = match pairs {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_pairs(BufReader::new(f))?
        }
        None => build_labeled_pairs(&data.runs, &data.queries, &data.corpus, cfg.seed),
    };
    log::info!("scoring {} templates on {} pairs", templates.len(), pairs.len());
    let selection = select_prompt(&templates, &pairs, &backend)?;
    if let Some(dir) = out {
        write_json(dir, "prompt_selection.json", &selection)?;
    }
    print_json(&selection)
}

fn calibrate_cost(cli: &Cli, args: &CalibrateArgs) -> Result<()> {
    let f = File::open(&args.traces).with_context(|| format!("opening {}", args.traces.display()))?;
    let mut records: Vec<ComparisonRecord> = Vec::new();
    for line in std::io::BufRead::lines(BufReader::new(f)) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: SelectionTrace = serde_json::from_str(&line).context("parsing trace")?;
        records.extend(trace.records);
    }
    let fit = calibrate(&records)?;
    let model = fit.into_model(args.tokens_out, args.parallel_width);
    let result = serde_json::json!({ "fit": fit, "cost_model": model });
    if let Some(dir) = &cli.output {
        write_json(dir, "cost_model.json", &result)?;
    }
    print_json(&result)
}

fn gen_synthetic(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let dir = cli.output.as_deref().context("gen-synthetic needs --output DIR")?;
    let spec = SyntheticSpec {
        docs: args.docs,
        queries: args.queries,
        shortlist: args.shortlist,
        placement: args.placement.clone(),
        absent_rate: args.absent_rate,
        margin: args.margin,
        seed: cli.seed.unwrap_or(0),
    };
    let data = synthetic::generate(&spec)?;
    let config = synthetic::write_dataset(&data, &spec, dir)?;
    println!("{}", config.display());
    Ok(())
}
