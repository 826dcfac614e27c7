//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or file-format error, 2 invalid arguments or
//! preconditions, 3 capacity error. Failures print one line to stderr:
//! `error kind=<kind> msg=<json string>`.

pub mod formats;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::baselines::{baseline_select, BaselineMethod, BaselineSpec};
use crate::error::{Error, Result};
use crate::oracle::{binomial, brute_force_optimum, OracleLimit};
use crate::pipeline::{evaluate_selection, select_coreset, Budget, PipelineConfig, ScoreSource};
use crate::problem::{EmbeddingMatrix, ScoreVector, SelectionProblem, SparseSimilarity};
use crate::scoring::{normalize_scores, ssp_scores, KMeansParams};
use crate::simgraph::{build_knn_similarity, l2_normalize, KnnParams};
use crate::solver::{SolverParams, Temperature};

use formats::{
    format_histogram, format_scores, format_similarity, read_embeddings, read_scores, read_similarity, write_atomic,
    SelectionFile, TOOL_VERSION,
};

#[derive(Debug, Parser)]
#[command(name = "infomax", version, about = "Information-maximizing coreset selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the sparse kNN similarity graph.
    Knn(KnnArgs),
    /// Compute intra-sample scores.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Select a coreset with the iterative solver.
    Select(SelectArgs),
    /// Select with a reference method.
    Baseline(BaselineArgs),
    /// Exhaustive optimum for small instances.
    Oracle(OracleArgs),
    /// Diagnostics for an existing selection.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct KnnArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Keep negative similarities instead of clamping them to zero.
    #[arg(long)]
    no_clamp: bool,
    /// Keep only directed edges.
    #[arg(long)]
    no_symmetrize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ScoreCommand {
    /// Distance to the k-means centroid.
    Ssp(SspArgs),
}

#[derive(Debug, Args)]
struct SspArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("size").required(true).args(["ratio", "budget"])))]
struct BudgetArgs {
    /// Fraction of samples to keep, rounded half up.
    #[arg(long)]
    ratio: Option<f64>,
    /// Number of samples to keep.
    #[arg(long)]
    budget: Option<usize>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        match (self.ratio, self.budget) {
            (Some(r), _) => Budget::Ratio(r),
            (None, Some(p)) => Budget::Count(p),
            (None, None) => unreachable!("clap enforces the group"),
        }
    }

    fn echo(&self, params: &mut Map<String, Value>) {
        if let Some(r) = self.ratio {
            params.insert("ratio".into(), json!(r));
        }
        if let Some(p) = self.budget {
            params.insert("budget".into(), json!(p));
        }
    }
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// External score table; when absent, scores come from k-means (`--clusters`).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<usize>,
    #[command(flatten)]
    size: BudgetArgs,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    #[arg(long, default_value = "auto")]
    temperature: String,
    #[arg(long, default_value_t = 1e-6)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a metrics report (JSON) and its histogram (CSV next to it).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// random, top_score, k_center, moderate, ccs or d2_greedy.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Similarity table; otherwise built from `--embeddings` with `--k`.
    #[arg(long)]
    similarity: Option<PathBuf>,
    #[command(flatten)]
    size: BudgetArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    similarity: PathBuf,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 2_000_000)]
    max_combinations: u64,
    /// Use the scores as given (must lie in [0, 1]) instead of min-max normalizing.
    #[arg(long)]
    raw_scores: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    selection: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Defaults to the value recorded in the selection file, else 0.3.
    #[arg(long)]
    alpha: Option<f64>,
    /// Defaults to the value recorded in the selection file, else 5.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Histogram CSV path; defaults to `<out>.histogram.csv`.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

/// Exit code for an error class.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format(_) => 1,
        Error::Input(_) | Error::Numeric(_) => 2,
        Error::Capacity(_) => 3,
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            let msg = match &err {
                Error::Io(e) => e.to_string(),
                Error::Input(m) | Error::Numeric(m) | Error::Capacity(m) | Error::Format(m) => m.clone(),
            };
            eprintln!("error kind={} msg={}", err.kind(), Value::String(msg));
            exit_code(&err)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Knn(a) => cmd_knn(a),
        Command::Score(ScoreCommand::Ssp(a)) => cmd_ssp(a),
        Command::Select(a) => cmd_select(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn unit_embeddings(e: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if e.is_normalized() {
        Ok(e.clone())
    } else {
        l2_normalize(e)
    }
}

fn cmd_knn(a: KnnArgs) -> Result<()> {
    let e = read_embeddings(&a.embeddings)?;
    let params = KnnParams {
        k: a.k,
        clamp_negative: !a.no_clamp,
        symmetrize: !a.no_symmetrize,
    };
    let k = build_knn_similarity(&unit_embeddings(&e)?, &params)?;
    log::info!("kNN graph: {} samples, {} stored entries", k.n(), k.nnz());
    write_atomic(&a.out, format_similarity(&k).as_bytes())
}

fn cmd_ssp(a: SspArgs) -> Result<()> {
    let e = read_embeddings(&a.embeddings)?;
    let params = KMeansParams {
        max_iters: a.max_iters,
        ..KMeansParams::new(a.clusters, a.seed)
    };
    let s = ssp_scores(&e, &params)?;
    write_atomic(&a.out, format_scores(&s).as_bytes())
}

fn check_len(what: &str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(Error::input(format!(
            "{what} covers {got} samples, embeddings have {n}"
        )));
    }
    Ok(())
}

fn histogram_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".histogram.csv");
    PathBuf::from(name)
}

fn write_report(path: &Path, histogram: Option<&Path>, report: &crate::pipeline::MetricsReport) -> Result<()> {
    let mut doc = serde_json::to_value(report).expect("serializable");
    let obj = doc.as_object_mut().expect("struct serializes to an object");
    obj.insert("tool_version".into(), json!(TOOL_VERSION));
    obj.insert("timestamp".into(), json!(formats::unix_timestamp()));
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    let hist = histogram.map(Path::to_path_buf).unwrap_or_else(|| histogram_path(path));
    write_atomic(&hist, format_histogram(&report.score_histogram).as_bytes())
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let e = read_embeddings(&a.embeddings)?;
    let temperature: Temperature = a.temperature.parse()?;
    let (scores, score_source) = match (&a.scores, a.clusters) {
        (Some(path), _) => {
            let s = read_scores(path)?;
            check_len("score file", s.len(), e.n())?;
            (Some(s), ScoreSource::External)
        }
        (None, Some(c)) => (None, ScoreSource::Ssp(KMeansParams::new(c, a.seed))),
        (None, None) => return Err(Error::input("either --scores or --clusters is required")),
    };
    let config = PipelineConfig {
        budget: a.size.budget(),
        partitions: a.partitions,
        knn: KnnParams {
            k: a.k,
            ..KnnParams::default()
        },
        solver: SolverParams {
            iters: a.iters,
            alpha: a.alpha,
            temperature,
            jitter_eps: a.jitter,
            seed: a.seed,
        },
        seed: a.seed,
        score_source,
    };
    let sel = select_coreset(&config, &e, scores.as_ref())?;
    for (t, d) in sel.result.trace.iter().enumerate() {
        log::info!("iteration {} |dX|_1 = {d:e}", t + 1);
    }

    let mut params = Map::new();
    params.insert("method".into(), json!("infomax"));
    a.size.echo(&mut params);
    params.insert("budget_resolved".into(), json!(sel.result.selected.len()));
    params.insert("alpha".into(), json!(a.alpha));
    params.insert("k".into(), json!(a.k));
    params.insert("iters".into(), json!(a.iters));
    params.insert("partitions".into(), json!(a.partitions));
    params.insert("temperature".into(), json!(temperature.to_string()));
    params.insert("jitter".into(), json!(a.jitter));
    params.insert("seed".into(), json!(a.seed));
    match score_source {
        ScoreSource::External => params.insert("score_source".into(), json!("file")),
        ScoreSource::Ssp(k) => {
            params.insert("clusters".into(), json!(k.clusters));
            params.insert("score_source".into(), json!("ssp"))
        }
    };
    let file = SelectionFile::new(
        sel.result.selected.clone(),
        sel.result.objective,
        params,
        sel.result.trace.clone(),
    );
    file.write(&a.out)?;

    if let Some(report_path) = &a.report {
        let report = evaluate_selection(&sel.result.selected, &e, &sel.problem, &sel.raw_scores)?;
        write_report(report_path, None, &report)?;
    }
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let method: BaselineMethod = a.method.parse()?;
    let embeddings = a.embeddings.as_deref().map(read_embeddings).transpose()?;
    let raw = a.scores.as_deref().map(read_scores).transpose()?;
    let n = match (&embeddings, &raw) {
        (Some(e), _) => e.n(),
        (None, Some(s)) => s.len(),
        (None, None) => return Err(Error::input("--embeddings or --scores is required")),
    };
    let raw = match raw {
        Some(s) => {
            check_len("score file", s.len(), n)?;
            s
        }
        // Constant scores make k_center start at sample 0.
        None if method == BaselineMethod::KCenter => ScoreVector::new(vec![0.5; n])?,
        None => return Err(Error::input(format!("{} requires --scores", method.name()))),
    };
    let similarity = match (&a.similarity, &embeddings) {
        (Some(path), _) => read_similarity(path, n)?,
        (None, Some(e)) => build_knn_similarity(
            &unit_embeddings(e)?,
            &KnnParams {
                k: a.k,
                ..KnnParams::default()
            },
        )?,
        (None, None) if method == BaselineMethod::D2Greedy => {
            return Err(Error::input("d2_greedy requires --similarity or --embeddings"))
        }
        (None, None) => SparseSimilarity::empty(n),
    };
    let p = a.size.budget().resolve(n)?;
    let problem = SelectionProblem::new(normalize_scores(&raw), similarity, p, a.alpha)?;
    let spec = BaselineSpec {
        method,
        seed: a.seed,
        bins: a.bins,
        gamma: a.gamma,
    };
    let result = baseline_select(&spec, &problem, embeddings.as_ref())?;

    let mut params = Map::new();
    params.insert("method".into(), json!(method.name()));
    a.size.echo(&mut params);
    params.insert("budget_resolved".into(), json!(p));
    params.insert("alpha".into(), json!(a.alpha));
    params.insert("k".into(), json!(a.k));
    params.insert("seed".into(), json!(a.seed));
    params.insert("bins".into(), json!(a.bins));
    params.insert("gamma".into(), json!(a.gamma));
    SelectionFile::new(result.selected, result.objective, params, result.trace).write(&a.out)
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let raw = read_scores(&a.scores)?;
    let n = raw.len();
    let limit = OracleLimit {
        max_combinations: a.max_combinations,
    };
    if a.budget >= 1 && a.budget <= n {
        let count = binomial(n, a.budget);
        if count > limit.max_combinations as u128 {
            return Err(Error::Capacity(format!(
                "C({n}, {}) = {count} subsets exceeds the limit of {}",
                a.budget, limit.max_combinations
            )));
        }
    }
    let similarity = read_similarity(&a.similarity, n)?;
    let scores = if a.raw_scores { raw } else { normalize_scores(&raw) };
    let problem = SelectionProblem::new(scores, similarity, a.budget, a.alpha)?;
    let best = brute_force_optimum(&problem, &limit)?;
    let doc = json!({
        "tool_version": TOOL_VERSION,
        "selected": best.selected,
        "objective": best.objective,
        "combinations": binomial(n, a.budget).to_string(),
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    print!("{text}");
    if let Some(out) = &a.out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let selection = SelectionFile::read(&a.selection)?;
    let e = read_embeddings(&a.embeddings)?;
    let raw = read_scores(&a.scores)?;
    check_len("score file", raw.len(), e.n())?;
    let alpha = a
        .alpha
        .or_else(|| selection.params.get("alpha").and_then(Value::as_f64))
        .unwrap_or(0.3);
    let k =
        a.k.or_else(|| selection.params.get("k").and_then(Value::as_u64).map(|k| k as usize))
            .unwrap_or(5);
    let n = e.n();
    let similarity = if n > 1 {
        build_knn_similarity(
            &unit_embeddings(&e)?,
            &KnnParams {
                k: k.min(n - 1),
                ..KnnParams::default()
            },
        )?
    } else {
        SparseSimilarity::empty(n)
    };
    let p = selection.selected.len().max(1);
    let problem = SelectionProblem::new(normalize_scores(&raw), similarity, p.min(n), alpha)?;
    let report = evaluate_selection(&selection.selected, &e, &problem, &raw)?;
    write_report(&a.out, a.histogram.as_deref(), &report)
}
