use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use psycholex::corpus::{self, IngestOptions, ParseMode};
use psycholex::openvocab::LogBase;
use psycholex::pipeline::{self, Analysis, CohortPair, CorrelationInput, PipelineError, RunConfig};
use psycholex::report::AnalysisReport;
use psycholex::stats::CorrelationMethod;
use psycholex::synth::{self, SynthConfig, SynthPlatform};

#[derive(Parser, Debug)]
#[command(
    name = "psycholex",
    version,
    about = "Cohort language and behaviour analytics for social-media corpora"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PSYCHOLEX_THREADS")]
    threads: Option<usize>,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a JSONL corpus and print its summary table as CSV.
    Ingest(IngestArgs),
    /// Vocabulary overlap, language models and KL divergences.
    Openvocab(AnalysisArgs),
    /// Lexicon category proportions with Welch tests.
    Lexicon(AnalysisArgs),
    /// Emotion profiles, radar chart and correlation heatmaps.
    Emotion(AnalysisArgs),
    /// Engagement markers and monthly posting time-gaps.
    Behavior(AnalysisArgs),
    /// Re-render tables and charts from a saved report.json.
    Report(ReportArgs),
    /// Run every configured analysis from a JSON config file.
    RunAll(RunAllArgs),
    /// Write a seeded synthetic corpus as JSONL.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct ParseFlags {
    /// Abort on the first malformed line (default).
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Skip malformed lines and report them.
    #[arg(long)]
    lenient: bool,
}

impl ParseFlags {
    fn strict(&self) -> Option<bool> {
        if self.lenient {
            Some(false)
        } else if self.strict {
            Some(true)
        } else {
            None
        }
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    parse: ParseFlags,
    /// Also write the normalized corpus as JSONL.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalysisArgs {
    #[arg(long)]
    input: PathBuf,
    /// Cohort pair as POSITIVE:CONTROL; repeatable.
    #[arg(long = "pair", required = true, value_parser = parse_pair)]
    pairs: Vec<CohortPair>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[command(flatten)]
    parse: ParseFlags,
    #[command(flatten)]
    params: Params,
}

#[derive(Args, Debug, Default)]
struct Params {
    /// Emoticon pattern list replacing the bundled one.
    #[arg(long)]
    emoticons: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Jelinek-Mercer smoothing weight, in (0, 1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Logarithm base for KL divergence: e or 2.
    #[arg(long)]
    log_base: Option<LogBase>,
    /// Significance level for Welch tests.
    #[arg(long)]
    alpha: Option<f64>,
    /// Category lexicon (path or builtin:NAME); repeatable.
    #[arg(long = "lexicon")]
    lexicons: Vec<String>,
    /// Restrict category lexicons to these categories (comma separated).
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
    /// Emotion lexicon (path or builtin:NAME).
    #[arg(long)]
    emotion_lexicon: Option<String>,
    #[arg(long, value_parser = parse_method)]
    correlation: Option<CorrelationMethod>,
    /// counts or fractions (default) of documents per emotion.
    #[arg(long)]
    correlation_input: Option<CorrelationInput>,
    /// Fraction of users sampled for the per-user reference comparison.
    #[arg(long)]
    reference_fraction: Option<f64>,
}

impl Params {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.emoticons {
            cfg.emoticons = Some(p.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.log_base {
            cfg.log_base = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if !self.lexicons.is_empty() {
            cfg.lexicons = self.lexicons.clone();
        }
        if let Some(v) = &self.categories {
            cfg.categories = Some(v.clone());
        }
        if let Some(v) = &self.emotion_lexicon {
            cfg.emotion_lexicon = v.clone();
        }
        if let Some(v) = self.correlation {
            cfg.correlation = v;
        }
        if let Some(v) = self.correlation_input {
            cfg.correlation_input = v;
        }
        if let Some(v) = self.reference_fraction {
            cfg.reference_sample_fraction = v;
        }
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A report.json written by an earlier run.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunAllArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the corpus path in the config.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the analyses in the config (comma separated).
    #[arg(long, value_delimiter = ',')]
    analyses: Option<Vec<Analysis>>,
    #[command(flatten)]
    parse: ParseFlags,
    #[command(flatten)]
    params: Params,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Users per cohort.
    #[arg(long, default_value_t = 250)]
    users: usize,
    #[arg(long, default_value_t = 200)]
    docs: usize,
    #[arg(long, default_value_t = 20)]
    tokens: usize,
    /// reddit, twitter or mixed.
    #[arg(long, default_value = "mixed")]
    platform: SynthPlatform,
    #[arg(long, default_value = "positive")]
    positive_label: String,
    #[arg(long, default_value = "control")]
    control_label: String,
    /// Prefix for user ids.
    #[arg(long, default_value = "")]
    id_prefix: String,
}

fn parse_pair(s: &str) -> Result<CohortPair, String> {
    let (p, c) = s
        .split_once(':')
        .ok_or_else(|| format!("expected POSITIVE:CONTROL, got {s:?}"))?;
    if p.is_empty() || c.is_empty() {
        return Err(format!("expected POSITIVE:CONTROL, got {s:?}"));
    }
    Ok(CohortPair {
        positive: p.to_string(),
        control: c.to_string(),
    })
}

fn parse_method(s: &str) -> Result<CorrelationMethod, String> {
    match s {
        "pearson" => Ok(CorrelationMethod::Pearson),
        "spearman" => Ok(CorrelationMethod::Spearman),
        other => Err(format!(
            "unknown correlation {other:?} (expected pearson or spearman)"
        )),
    }
}

fn ingest_options(strict: Option<bool>) -> IngestOptions {
    IngestOptions {
        mode: if strict == Some(false) {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        },
        now: None,
    }
}

fn run_analysis(args: AnalysisArgs, analysis: Analysis) -> Result<()> {
    let mut cfg = RunConfig::new(args.input, args.pairs);
    cfg.out = args.out;
    cfg.analyses = vec![analysis];
    if let Some(s) = args.parse.strict() {
        cfg.strict = s;
    }
    args.params.apply(&mut cfg);
    execute(&cfg)
}

fn execute(cfg: &RunConfig) -> Result<()> {
    let out = pipeline::run(cfg).map_err(module_error)?;
    log::info!(
        "wrote {} sections and {} models to {} ({} tests)",
        out.report.sections.len(),
        out.models.len(),
        cfg.out.display(),
        out.report.metadata.tests_performed
    );
    for note in &out.report.metadata.notes {
        log::info!("note: {note}");
    }
    Ok(())
}

fn module_error(e: PipelineError) -> anyhow::Error {
    anyhow!("[{}] {e}", e.module())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let (corpus, report) = corpus::ingest(&args.input, &ingest_options(args.parse.strict()))
        .map_err(|e| anyhow!("[corpus] {e}"))?;
    for s in &report.skipped {
        log::warn!("line {} skipped: {}", s.line, s.reason);
    }
    log::info!(
        "{} records, {} users, platform {}, digest {}",
        report.records,
        corpus.user_count(),
        corpus.platform(),
        corpus.digest()
    );
    if let Some(path) = &args.export {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        corpus.write_jsonl(&mut w)?;
        w.flush()?;
    }
    let table = pipeline::summary_table(&corpus::summarize(&corpus));
    io::stdout().write_all(table.to_csv()?.as_bytes())?;
    Ok(())
}

fn rerender(args: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.from)
        .with_context(|| format!("cannot read {}", args.from.display()))?;
    let report = AnalysisReport::from_json(&text).map_err(|e| anyhow!("[report] {e}"))?;
    let written = report
        .write(&args.out, &pipeline::timestamp_now())
        .map_err(|e| anyhow!("[report] {e}"))?;
    log::info!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn run_all(args: RunAllArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&args.config).map_err(module_error)?;
    if let Some(p) = args.input {
        cfg.input = p;
    }
    if let Some(p) = args.out {
        cfg.out = p;
    }
    if let Some(a) = args.analyses {
        cfg.analyses = a;
    }
    if let Some(s) = args.parse.strict() {
        cfg.strict = s;
    }
    args.params.apply(&mut cfg);
    execute(&cfg)
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        positive_label: args.positive_label,
        control_label: args.control_label,
        positive_users: args.users,
        control_users: args.users,
        docs_per_user: args.docs,
        tokens_per_doc: args.tokens,
        platform: args.platform,
        id_prefix: args.id_prefix,
        ..SynthConfig::default()
    };
    let corpus = synth::generate(&cfg).map_err(|e| anyhow!("[synth] {e}"))?;
    write_corpus(&corpus, &args.out)?;
    log::info!(
        "wrote {} documents to {}",
        corpus.document_count(),
        args.out.display()
    );
    Ok(())
}

fn write_corpus(corpus: &psycholex::corpus::Corpus, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    corpus.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "warn"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("cannot size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Openvocab(a) => run_analysis(a, Analysis::Openvocab),
        Command::Lexicon(a) => run_analysis(a, Analysis::Lexicons),
        Command::Emotion(a) => run_analysis(a, Analysis::Emotions),
        Command::Behavior(a) => run_analysis(a, Analysis::Behavior),
        Command::Report(a) => rerender(a),
        Command::RunAll(a) => run_all(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
