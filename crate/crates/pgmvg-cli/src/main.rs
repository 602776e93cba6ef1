//! Command line frontend: generate synthetic worlds, cluster embeddings,
//! score labelings, and convert embedding files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! inconsistent inputs), 3 runtime error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use pgmvg::{
    evaluate, generate, read_embeddings, read_ids, read_labels, run_pgmvg, write_embeddings,
    write_ids, write_labels, ConfigError, DecisionRule, EmbeddingError, EmbeddingMatrix,
    EvalError, IoError, RunConfig, RunError, RunOptions, SynthError, SynthSpec, Verdict,
};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pgmvg", version, about = "Pseudo-label clustering over multi-model kNN graphs")]
struct Cli {
    /// Worker threads (0 uses every core). Output is identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-model embedding world with known speakers
    Synth(SynthArgs),
    /// Cluster embeddings into pseudo-speaker labels
    Cluster(Box<ClusterArgs>),
    /// Score a labeling against ground truth
    Eval(EvalArgs),
    /// Convert embeddings between text and .pgmv
    Convert(ConvertArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// World description file (key = value lines); defaults used when absent
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory for model<N>.pgmv, utts.ids, and truth.tsv
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Embedding file, once per model
    #[arg(long = "emb", required = true)]
    emb: Vec<PathBuf>,
    /// Utterance ID sidecar (one per line, shared by all models)
    #[arg(long)]
    ids: PathBuf,
    /// Output label file (id\tlabel per line)
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration history TSV with the effective config in its header
    #[arg(long)]
    history: Option<PathBuf>,
    /// Config file (key = value); command-line flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the final edge list as TSV (a\tb per line)
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// Write one TSV row per merge assessment
    #[arg(long)]
    dump_fits: Option<PathBuf>,
    /// Skip mean recentering (embeddings already domain-matched)
    #[arg(long)]
    skip_adaptation: bool,

    #[arg(long)]
    k_init: Option<usize>,
    #[arg(long)]
    k_step: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    th_high: Option<f64>,
    #[arg(long)]
    th_low: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[arg(long)]
    stop_new_node_frac: Option<f64>,
    #[arg(long)]
    stop_cluster_delta_frac: Option<f64>,
    #[arg(long)]
    outlier_rank: Option<usize>,
    #[arg(long)]
    outlier_threshold: Option<f64>,
    #[arg(long)]
    sigma_floor: Option<f64>,
    #[arg(long)]
    em_max_iters: Option<usize>,
    #[arg(long)]
    em_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels (id\tlabel)
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels (id\tlabel)
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Text rows (whitespace-separated numbers) to binary
    #[arg(long, conflicts_with = "to_text")]
    to_pgmv: bool,
    /// Binary to text rows
    #[arg(long)]
    to_text: bool,
}

enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Model { .. }
            | RunError::Preprocess { .. }
            | RunError::Shape(_)
            | RunError::EmptyAfterFilter { .. } => CliError::Data(e.to_string()),
            RunError::Knn(_) | RunError::Assess { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Failures while writing results are runtime errors, not data errors.
fn as_runtime(e: IoError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        // a second build_global in-process is harmless; the pool stands
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Synth(args) => run_synth(&args),
        Command::Cluster(args) => run_cluster(&args),
        Command::Eval(args) => run_eval(&args),
        Command::Convert(args) => run_convert(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            SynthSpec::from_kv_text(&text)?
        }
        None => SynthSpec::default(),
    };
    let (models, ids, truth) = generate(&spec)?;
    let dir = &args.out_prefix;
    std::fs::create_dir_all(dir)?;
    for (n, m) in models.iter().enumerate() {
        write_embeddings(&dir.join(format!("model{n}.pgmv")), m).map_err(as_runtime)?;
    }
    write_ids(&dir.join("utts.ids"), &ids).map_err(as_runtime)?;
    write_labels(&dir.join("truth.tsv"), &ids, &truth).map_err(as_runtime)?;
    println!("rows\t{}", ids.len());
    println!("models\t{}", models.len());
    Ok(())
}

fn effective_config(args: &ClusterArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            RunConfig::from_kv_text(&text)?
        }
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = args.$field {
                config.$field = v;
            }
        };
    }
    take!(k_init);
    take!(k_step);
    take!(k_max);
    take!(th_high);
    take!(th_low);
    take!(epsilon);
    take!(min_cluster_size);
    take!(stop_new_node_frac);
    take!(stop_cluster_delta_frac);
    take!(outlier_rank);
    take!(outlier_threshold);
    take!(sigma_floor);
    take!(em_max_iters);
    take!(em_tol);
    take!(seed);
    Ok(config)
}

fn rule_tag(rule: DecisionRule) -> &'static str {
    match rule {
        DecisionRule::SecondMeanHigh => "CASE1",
        DecisionRule::DominantPrimary => "CASE2",
        DecisionRule::OverlappingBands => "CASE3",
        DecisionRule::Separated => "CASE4",
    }
}

fn verdict_tag(v: Verdict) -> &'static str {
    match v {
        Verdict::Merge => "MERGE",
        Verdict::NoMerge => "NO_MERGE",
    }
}

fn run_cluster(args: &ClusterArgs) -> Result<(), CliError> {
    let config = effective_config(args)?;
    let validated = config.clone().validate()?;

    let mut models = Vec::with_capacity(args.emb.len());
    for (n, path) in args.emb.iter().enumerate() {
        models.push(read_embeddings(path, n)?);
    }
    let rows = models[0].rows();
    let ids = read_ids(&args.ids, rows)?;

    let options = RunOptions {
        skip_adaptation: args.skip_adaptation,
        collect_graph_snapshots: args.dump_graph.is_some(),
        collect_fit_records: args.dump_fits.is_some(),
    };
    let out = run_pgmvg(&models, &ids, &validated, &options)?;

    write_labels(&args.out, &ids, &out.labels).map_err(as_runtime)?;

    if let Some(path) = &args.history {
        let mut text = String::new();
        for line in config.to_kv_text().lines() {
            writeln!(text, "# {line}").unwrap();
        }
        writeln!(text, "k\tnodes\tnew_nodes\tclasses\tmerges\trejected_edges").unwrap();
        for r in &out.history {
            writeln!(
                text,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.k, r.nodes, r.new_nodes, r.classes, r.merges, r.rejected_edges
            )
            .unwrap();
        }
        std::fs::write(path, text)?;
    }

    if let Some(path) = &args.dump_graph {
        let mut text = String::new();
        if let Some(last) = out.graph_snapshots.last() {
            for e in &last.edges {
                writeln!(text, "{}\t{}", e.a(), e.b()).unwrap();
            }
        }
        std::fs::write(path, text)?;
    }

    if let Some(path) = &args.dump_fits {
        let mut text = String::from("k\tclass_a\tclass_b");
        for n in 0..models.len() {
            write!(
                text,
                "\tmu1_{n}\tmu2_{n}\tsigma1_{n}\tsigma2_{n}\tw1_{n}"
            )
            .unwrap();
        }
        text.push_str("\tverdict\tcase\n");
        for f in &out.fit_records {
            write!(text, "{}\t{}\t{}", f.k, f.class_a, f.class_b).unwrap();
            for d in &f.per_model {
                write!(
                    text,
                    "\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    d.fit.mu1, d.fit.mu2, d.fit.sigma1, d.fit.sigma2, d.fit.w1
                )
                .unwrap();
            }
            writeln!(text, "\t{}\t{}", verdict_tag(f.verdict), rule_tag(f.rule)).unwrap();
        }
        std::fs::write(path, text)?;
    }

    println!("classes\t{}", out.labels.num_classes());
    println!("coverage\t{:.6}", out.labels.coverage());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    if pred.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} predicted labels vs {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let truth_by_id: HashMap<&str, i64> =
        truth.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    if truth_by_id.len() != truth.len() {
        return Err(CliError::Data("duplicate ids in truth file".into()));
    }
    let mut p = Vec::with_capacity(pred.len());
    let mut t = Vec::with_capacity(pred.len());
    for (id, label) in &pred {
        let Some(&tl) = truth_by_id.get(id.as_str()) else {
            return Err(CliError::Data(format!("id {id} missing from truth file")));
        };
        p.push(*label);
        t.push(tl);
    }
    let report = evaluate(&p, &t)?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn read_text_matrix(path: &Path) -> Result<EmbeddingMatrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                CliError::Data(format!("line {}: bad number {tok:?}", i + 1))
            })?;
            data.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(CliError::Data(format!(
                    "line {}: {count} values, expected {d}",
                    i + 1
                )));
            }
            _ => {}
        }
    }
    let dim = dim.ok_or_else(|| CliError::Data("no rows in text input".into()))?;
    Ok(EmbeddingMatrix::new(0, dim, data)?)
}

fn run_convert(args: &ConvertArgs) -> Result<(), CliError> {
    match (args.to_pgmv, args.to_text) {
        (true, false) => {
            let m = read_text_matrix(&args.input)?;
            write_embeddings(&args.output, &m).map_err(as_runtime)?;
            Ok(())
        }
        (false, true) => {
            let m = read_embeddings(&args.input, 0)?;
            let mut text = String::new();
            for i in 0..m.rows() {
                let row = m.row(i);
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        text.push(' ');
                    }
                    // shortest 32-bit representation; parses back to the same value
                    write!(text, "{}", *v as f32).unwrap();
                }
                text.push('\n');
            }
            std::fs::write(&args.output, text)?;
            Ok(())
        }
        _ => Err(CliError::Usage(
            "convert needs exactly one of --to-pgmv or --to-text".into(),
        )),
    }
}
