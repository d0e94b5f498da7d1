//! The `reprstruct` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 I/O
//! error. Every failure prints one `error[<kind>]: <detail>` line to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate_runs, build_label_sets, compute_series, correlate_keys_across_runs, correlate_within_run,
    read_series_csv, write_series_csv, MeasureSeries, SeriesOptions,
};
use crate::error::Error;
use crate::estimator::{check_bins, fit_bins, DEFAULT_BINS};
use crate::io::{read_label_file, read_manifest, read_matrix, read_tokens, validate_alignment, HREP_MAGIC};
use crate::labels::{token_count, DEFAULT_MIN_COUNT};
use crate::measures::{AnalyzeOptions, MeasureReport, PreparedBatch, RegularityBaseline, Weighting};
use crate::synth::{closed_form, generate, oracle_measures, SynthConfig, SynthMode, ORACLE_MAX_ROWS};

/// Environment variable capping worker threads (0 or unset = all cores).
pub const THREADS_ENV: &str = "REPRSTRUCT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "reprstruct",
    version,
    about = "Information-theoretic structure measures for vector representations"
)]
pub struct Cli {
    /// JSON file whose keys mirror the long flag names; flags win on conflict.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure one representation dump against label sets.
    Analyze(AnalyzeArgs),
    /// Measure every checkpoint of a run manifest; writes a series CSV.
    Series(SeriesArgs),
    /// Spearman correlation within a run or across runs at one step.
    Correlate(CorrelateArgs),
    /// Mean and 95% CI of a measure across runs at one step.
    Aggregate(AggregateArgs),
    /// Generate a synthetic representation system.
    Synth(SynthArgs),
    /// Summarize a representation dump or tokens file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Unweighted,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Monotone,
    Contextual,
    Uniform,
}

fn parse_bins(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    check_bins(n).map_err(|e| e.to_string())?;
    Ok(n)
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AnalyzeArgs {
    /// Representation dump (HREP, NPY or header-less CSV).
    #[arg(long)]
    pub reps: Option<PathBuf>,
    /// Tokens JSONL, one sentence per line.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    /// Comma-separated label sets: token, pos, bigram, or a --labels name.
    #[arg(long)]
    pub sets: Option<String>,
    /// Extra per-row label file, `name=path` (one label per line).
    #[arg(long = "labels", value_name = "NAME=PATH")]
    pub labels: Vec<String>,
    #[arg(long, value_parser = parse_bins)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Plain plug-in entropies, without the Miller-Madow correction.
    #[arg(long)]
    pub no_correction: bool,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    /// Measure regularity against this set's variation instead of information.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Omit per-label breakdowns from the report.
    #[arg(long)]
    pub no_per_label: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the timestamp out of the report's meta block.
    #[arg(long)]
    pub no_meta_time: bool,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SeriesArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub sets: Option<String>,
    #[arg(long, value_parser = parse_bins)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub no_correction: bool,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    /// Fail on the first unreadable checkpoint instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct CorrelateArgs {
    /// Series CSV for a within-run correlation across steps.
    #[arg(long, conflicts_with = "runs")]
    pub series: Option<PathBuf>,
    /// Run to use when the series CSV holds several.
    #[arg(long)]
    pub run: Option<String>,
    /// Series CSVs for an across-run correlation at --at-step.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub at_step: Option<u64>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AggregateArgs {
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub key: Option<String>,
    #[arg(long)]
    pub step: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bin count used for the distinct-bin check and printed expectations.
    #[arg(long, value_parser = parse_bins)]
    pub bins: Option<usize>,
    /// Context offset scale in [0, 1] (contextual mode).
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the brute-force oracle and print its measures.
    #[arg(long)]
    pub with_oracle: bool,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct InspectArgs {
    pub path: Option<PathBuf>,
}

/// A failure ready to be printed and turned into an exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "usage".into(),
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: e.exit_code(),
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("missing required flag --{flag}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

fn split_sets(sets: Option<String>) -> Vec<String> {
    sets.unwrap_or_else(|| "token".into())
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn weighting(w: Option<WeightingArg>) -> Weighting {
    match w {
        Some(WeightingArg::Frequency) => Weighting::Frequency,
        _ => Weighting::Unweighted,
    }
}

fn load_config(path: &Path) -> CliResult<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if !v.is_object() {
        return Err(CliError::usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    }
    Ok(v)
}

fn from_config<T: for<'de> Deserialize<'de>>(config: &serde_json::Value, path: &Path) -> CliResult<T> {
    T::deserialize(config).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

macro_rules! merge {
    ($cli:expr, $cfg:expr; opt: [$($o:ident),*] $(; flag: [$($f:ident),*])? $(; list: [$($l:ident),*])?) => {{
        $( $cli.$o = $cli.$o.take().or($cfg.$o.take()); )*
        $( $( $cli.$f = $cli.$f || $cfg.$f; )* )?
        $( $( if $cli.$l.is_empty() { $cli.$l = std::mem::take(&mut $cfg.$l); } )* )?
    }};
}

fn apply_config(cli: &mut Cli) -> CliResult<()> {
    let Some(path) = cli.config.clone() else {
        return Ok(());
    };
    let cfg = load_config(&path)?;
    match &mut cli.command {
        Command::Analyze(a) => {
            let mut c: AnalyzeArgs = from_config(&cfg, &path)?;
            merge!(a, c; opt: [reps, tokens, sets, bins, min_count, weighting, baseline, out];
                flag: [no_correction, no_per_label, no_meta_time]; list: [labels]);
            if let Some(b) = a.bins {
                check_bins(b)?;
            }
        }
        Command::Series(a) => {
            let mut c: SeriesArgs = from_config(&cfg, &path)?;
            merge!(a, c; opt: [manifest, sets, bins, min_count, weighting, out]; flag: [no_correction, strict]);
            if let Some(b) = a.bins {
                check_bins(b)?;
            }
        }
        Command::Correlate(a) => {
            let mut c: CorrelateArgs = from_config(&cfg, &path)?;
            merge!(a, c; opt: [series, run, at_step, x, y, out]; list: [runs]);
        }
        Command::Aggregate(a) => {
            let mut c: AggregateArgs = from_config(&cfg, &path)?;
            merge!(a, c; opt: [key, step, out]; list: [runs]);
        }
        Command::Synth(a) => {
            let mut c: SynthArgs = from_config(&cfg, &path)?;
            merge!(a, c; opt: [mode, labels, contexts, dims, samples, noise, seed, bins, separation, out];
                flag: [with_oracle]);
        }
        Command::Inspect(a) => {
            let mut c: InspectArgs = from_config(&cfg, &path)?;
            merge!(a, c; opt: [path]);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Meta {
    tool: &'static str,
    version: &'static str,
    n_bins: usize,
    corrected: bool,
    min_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix: Option<u64>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    meta: Meta,
    #[serde(flatten)]
    report: &'a MeasureReport,
}

fn fmt_measure(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

/// Human-readable summary of a report.
pub fn summary_table(report: &MeasureReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "bins={} corrected={} min_count={}",
        report.n_bins, report.corrected, report.min_count
    );
    let _ = writeln!(s, "information      {:.6}", report.information);
    let _ = writeln!(
        s,
        "{:<16} {:>10} {:>11} {:>16}",
        "set", "variation", "regularity", "disentanglement"
    );
    for set in &report.sets {
        match (&set.measures, &set.error) {
            (Some(m), _) => {
                let _ = writeln!(
                    s,
                    "{:<16} {:>10} {:>11} {:>16}",
                    set.name,
                    fmt_measure(Some(m.variation)),
                    fmt_measure(Some(m.regularity)),
                    fmt_measure(m.disentanglement)
                );
            }
            (None, err) => {
                let _ = writeln!(s, "{:<16} error: {}", set.name, err.as_deref().unwrap_or("unknown"));
            }
        }
    }
    s
}

fn analyze_options(
    no_correction: bool,
    min_count: Option<usize>,
    w: Option<WeightingArg>,
    baseline: Option<String>,
    per_label: bool,
) -> CliResult<AnalyzeOptions> {
    let min_count = min_count.unwrap_or(DEFAULT_MIN_COUNT);
    if min_count == 0 {
        return Err(CliError::usage("--min-count must be at least 1"));
    }
    Ok(AnalyzeOptions {
        corrected: !no_correction,
        min_count,
        weighting: weighting(w),
        regularity_baseline: baseline.map_or(RegularityBaseline::Information, RegularityBaseline::Variation),
        per_label,
    })
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult<String> {
    let reps = required(a.reps, "reps")?;
    let tokens = required(a.tokens, "tokens")?;
    let n_bins = a.bins.unwrap_or(DEFAULT_BINS);
    let sets = split_sets(a.sets);
    let opts = analyze_options(a.no_correction, a.min_count, a.weighting, a.baseline, !a.no_per_label)?;

    let mut extra = BTreeMap::new();
    for spec in &a.labels {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--labels expects NAME=PATH, got {spec:?}")))?;
        extra.insert(name.to_string(), read_label_file(path)?);
    }
    for name in &sets {
        if !matches!(name.as_str(), "token" | "pos" | "bigram") && !extra.contains_key(name) {
            return Err(CliError::usage(format!(
                "unknown label set {name:?}; pass --labels {name}=PATH"
            )));
        }
    }

    let batch = read_matrix(&reps)?;
    let records = read_tokens(&tokens)?;
    validate_alignment(&batch, &records)?;
    let label_sets = build_label_sets(&sets, &records, &extra)?;
    let spec = fit_bins(&batch, n_bins)?;
    let report = PreparedBatch::new(&batch, &spec)?.analyze(&label_sets, &opts)?;

    if let Some(out) = a.out {
        let generated_unix = (!a.no_meta_time).then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        let file = ReportFile {
            meta: Meta {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                n_bins,
                corrected: opts.corrected,
                min_count: opts.min_count,
                generated_unix,
            },
            report: &report,
        };
        let mut json = serde_json::to_vec_pretty(&file).expect("report serializes");
        json.push(b'\n');
        write_file(&out, &json)?;
    }
    Ok(summary_table(&report))
}

fn cmd_series(a: SeriesArgs) -> CliResult<String> {
    let manifest = read_manifest(required(a.manifest, "manifest")?)?;
    let opts = SeriesOptions {
        n_bins: a.bins.unwrap_or(DEFAULT_BINS),
        sets: split_sets(a.sets),
        analyze: analyze_options(a.no_correction, a.min_count, a.weighting, None, false)?,
        strict: a.strict,
    };
    let series = compute_series(&manifest, &opts)?;
    let mut buf = Vec::new();
    write_series_csv(std::slice::from_ref(&series), &mut buf)?;
    match a.out {
        Some(out) => {
            write_file(&out, &buf)?;
            Ok(format!(
                "wrote {} rows for run {} to {}\n",
                series.points.len(),
                series.run_id,
                out.display()
            ))
        }
        None => Ok(String::from_utf8(buf).expect("csv is utf-8")),
    }
}

fn load_runs(paths: &[PathBuf]) -> CliResult<Vec<MeasureSeries>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_series_csv(p)?);
    }
    Ok(all)
}

fn emit_json<T: Serialize>(value: &T, out: Option<PathBuf>) -> CliResult<String> {
    let mut json = serde_json::to_string_pretty(value).expect("result serializes");
    json.push('\n');
    if let Some(out) = out {
        write_file(&out, json.as_bytes())?;
    }
    Ok(json)
}

fn cmd_correlate(a: CorrelateArgs) -> CliResult<String> {
    let x = required(a.x, "x")?;
    let y = required(a.y, "y")?;
    let result = match (a.series, a.runs.is_empty()) {
        (Some(path), true) => {
            let runs = read_series_csv(&path)?;
            let series = match &a.run {
                Some(id) => runs
                    .iter()
                    .find(|s| &s.run_id == id)
                    .ok_or_else(|| CliError::usage(format!("run {id:?} not in {}", path.display())))?,
                None if runs.len() == 1 => &runs[0],
                None => {
                    return Err(CliError::usage(format!(
                        "{} holds {} runs; pick one with --run",
                        path.display(),
                        runs.len()
                    )))
                }
            };
            correlate_within_run(series, &x, &y)?
        }
        (None, false) => {
            let step = required(a.at_step, "at-step")?;
            correlate_keys_across_runs(&load_runs(&a.runs)?, &x, &y, step)?
        }
        _ => return Err(CliError::usage("pass either --series or --runs")),
    };
    emit_json(&result, a.out)
}

fn cmd_aggregate(a: AggregateArgs) -> CliResult<String> {
    if a.runs.is_empty() {
        return Err(CliError::usage("missing required flag --runs"));
    }
    let key = required(a.key, "key")?;
    let step = required(a.step, "step")?;
    let agg = aggregate_runs(&load_runs(&a.runs)?, &key, step)?;
    emit_json(&agg, a.out)
}

fn cmd_synth(a: SynthArgs) -> CliResult<String> {
    let out = required(a.out, "out")?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        mode: match a.mode.unwrap_or(ModeArg::Monotone) {
            ModeArg::Monotone => SynthMode::Monotone,
            ModeArg::Contextual => SynthMode::Contextual,
            ModeArg::Uniform => SynthMode::Uniform,
        },
        labels: a.labels.unwrap_or(d.labels),
        contexts: a.contexts.unwrap_or(d.contexts),
        dims: a.dims.unwrap_or(d.dims),
        samples: a.samples.unwrap_or(d.samples),
        noise_sigma: a.noise.unwrap_or(d.noise_sigma),
        seed: a.seed.unwrap_or(d.seed),
        n_bins: a.bins.unwrap_or(d.n_bins),
        separation: a.separation.unwrap_or(d.separation),
    };
    let system = generate(&cfg)?;
    let written = system.write(&out)?;

    let mut s = String::new();
    for p in &written {
        let _ = writeln!(s, "wrote {}", p.display());
    }
    if let Some(cf) = closed_form(&cfg) {
        let _ = writeln!(
            s,
            "expected (plug-in, bins={}): information={:.6} variation={:.6} regularity={:.6} disentanglement={}",
            cfg.n_bins,
            cf.information,
            cf.variation,
            cf.regularity,
            fmt_measure(cf.disentanglement)
        );
    }
    if a.with_oracle {
        if system.batch.rows() > ORACLE_MAX_ROWS {
            let _ = writeln!(
                s,
                "oracle skipped: {} rows exceeds {ORACLE_MAX_ROWS}",
                system.batch.rows()
            );
        } else {
            let spec = fit_bins(&system.batch, cfg.n_bins)?;
            let mut sets = vec![system.token.clone()];
            sets.extend(system.context_set());
            let opts = AnalyzeOptions {
                corrected: false,
                min_count: 1,
                per_label: false,
                ..Default::default()
            };
            let report = oracle_measures(&system.batch, &spec, &sets, &opts)?;
            s.push_str("oracle (plug-in):\n");
            s.push_str(&summary_table(&report));
        }
    }
    Ok(s)
}

fn cmd_inspect(a: InspectArgs) -> CliResult<String> {
    let path = required(a.path, "path")?;
    let mut head = [0u8; 6];
    {
        use std::io::Read;
        let mut f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let n = f.read(&mut head).map_err(|e| Error::io(&path, e))?;
        head[n..].fill(0);
    }
    let is_matrix = head == *HREP_MAGIC
        || head.starts_with(b"\x93NUMPY")
        || head.starts_with(b"HREP")
        || path
            .extension()
            .is_some_and(|e| e == "hrep" || e == "npy" || e == "csv");
    let mut s = String::new();
    if is_matrix {
        let batch = read_matrix(&path)?;
        let spec = fit_bins(&batch, 2)?;
        let _ = writeln!(
            s,
            "rows={}, dims={}, degenerate_dims={:?}",
            batch.rows(),
            batch.dims(),
            spec.degenerate_dims()
        );
        for d in 0..batch.dims() {
            let _ = writeln!(
                s,
                "dim {d}: min={} max={}{}",
                spec.lo(d),
                spec.hi(d),
                if spec.is_degenerate(d) { " degenerate" } else { "" }
            );
        }
    } else {
        let records = read_tokens(&path)?;
        let with_pos = records.iter().filter(|r| r.pos.is_some()).count();
        let pos = match with_pos {
            0 => "absent",
            n if n == records.len() => "present",
            _ => "partial",
        };
        let _ = writeln!(
            s,
            "sentences={}, tokens={}, pos={pos}",
            records.len(),
            token_count(&records)
        );
    }
    Ok(s)
}

/// Runs a parsed invocation and returns what should go to stdout.
pub fn run(mut cli: Cli) -> CliResult<String> {
    apply_config(&mut cli)?;
    match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Series(a) => cmd_series(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        // only fails if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return 1;
        }
    };
    let outcome = init_threads().and_then(|()| run(cli));
    match outcome {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind, e.message);
            e.code
        }
    }
}
