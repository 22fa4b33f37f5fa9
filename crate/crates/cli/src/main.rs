//! Command-line front end: ingest datasets or graphs, build decompositions
//! and private release structures, audit them with error censuses, and run
//! the multiplicative-weights release engine.
//!
//! All machine-readable output is JSON; a short human summary goes to
//! standard error. Reports embed the library version, the full
//! configuration, the seed, and the input hash, so identical runs produce
//! byte-identical artifacts. Exit codes: 0 success, 1 internal failure,
//! 2 usage or precondition failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use submod_release::approximator::{
    error_census, CensusDistribution, CensusMode, CensusReport, DecompositionDoc,
    ProductDistribution, QueryFamily, ReleaseDoc, ReleaseStructure,
};
use submod_release::decomposition::{decompose_general, decompose_monotone};
use submod_release::error::Error as CoreError;
use submod_release::mw::{
    mw_release, BudgetedSqOracle, ConceptFamily, ExhaustiveWeakLearner, MonotoneConjunctions,
    MwConfig, RoundTrace, WeightedDistribution,
};
use submod_release::privacy::{min_database_size, BudgetReport, PrivacyBudget};
use submod_release::queries::{
    conjunction_value, cut_oracle, disjunction_oracle, release_conjunctions, release_cuts,
    BitDataset, Graph, PrivacyMode, WidthSampler,
};
use submod_release::ValueOracle;

#[derive(Parser)]
#[command(name = "submod-release", version = submod_release::VERSION)]
#[command(about = "Private release of counting-query families via submodular decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Release all monotone conjunction queries of a binary dataset.
    ReleaseConjunctions(ReleaseArgs),
    /// Release the cut function of a graph.
    ReleaseCuts(ReleaseArgs),
    /// Build and serialize a decomposition without estimating means.
    Decompose(DecomposeArgs),
    /// Multiplicative-weights release of all monotone conjunctions.
    MwRelease(MwArgs),
    /// Compare a serialized release structure against ground truth.
    Census(CensusArgs),
}

#[derive(Parser)]
struct ReleaseArgs {
    /// Dataset CSV (conjunctions) or edge-list file (cuts).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    /// Differential-privacy parameter; mutually exclusive with --noise-off.
    #[arg(long, conflicts_with = "noise_off")]
    epsilon: Option<f64>,
    /// Run without noise (diagnostics only; the artifact is NOT private).
    #[arg(long)]
    noise_off: bool,
    /// Learn for width-w queries: the evaluation rate becomes w/d.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Parser)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: FunctionKind,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    seed: u64,
    /// Acknowledge that this command evaluates the raw data exactly.
    #[arg(long)]
    exact_oracle: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Parser)]
struct MwArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long, conflicts_with = "noise_off")]
    epsilon: Option<f64>,
    #[arg(long)]
    noise_off: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Parser)]
struct CensusArgs {
    /// Release artifact produced by a release subcommand.
    #[arg(long)]
    release: PathBuf,
    /// Ground-truth source: the dataset or graph the artifact answers for.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = CensusModeArg::Exhaustive)]
    mode: CensusModeArg,
    /// Sample count for --mode sampled.
    #[arg(long)]
    samples: Option<u64>,
    /// Census over weight-w masks instead of the uniform product.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Acknowledge that this command evaluates the raw data exactly.
    #[arg(long)]
    exact_oracle: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionKind {
    Disjunction,
    Cut,
}

#[derive(Clone, Copy, ValueEnum)]
enum CensusModeArg {
    Exhaustive,
    Sampled,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::InvalidArgument(_) | CoreError::Parse(_) | CoreError::UnknownKey(_) => 2,
            CoreError::Capacity(_) | CoreError::BudgetExhausted { .. } | CoreError::Contract(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 2,
            message: format!("json: {}", e),
        }
    }
}

/// Report wrapper written to the output file and standard output.
#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: String,
    command: String,
    config: serde_json::Value,
    input_sha256: String,
    result: T,
}

fn emit<T: Serialize>(
    command: &str,
    config: impl Serialize,
    input_sha256: String,
    result: T,
    output: &Path,
) -> Result<(), Failure> {
    let envelope = Envelope {
        version: submod_release::VERSION.to_string(),
        command: command.to_string(),
        config: serde_json::to_value(config)?,
        input_sha256,
        result,
    };
    let mut text = serde_json::to_string_pretty(&envelope)?;
    text.push('\n');
    std::fs::write(output, &text)?;
    print!("{}", text);
    Ok(())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {}", path.display(), e)))
}

fn privacy_mode(epsilon: Option<f64>, noise_off: bool) -> Result<PrivacyMode, Failure> {
    match (epsilon, noise_off) {
        (Some(eps), false) => {
            if eps.is_nan() || eps <= 0.0 {
                return Err(Failure::usage(format!(
                    "--epsilon must be positive, got {}",
                    eps
                )));
            }
            Ok(PrivacyMode::Laplace { epsilon: eps })
        }
        (None, true) => Ok(PrivacyMode::NoiseOff),
        _ => Err(Failure::usage(
            "pass exactly one of --epsilon <EPS> or --noise-off",
        )),
    }
}

/// Range checks run before any data is read.
fn check_unit_interval(name: &str, value: f64) -> Result<(), Failure> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Failure::usage(format!(
            "--{} must be in (0,1], got {}",
            name, value
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ReleaseConfig {
    input: String,
    output: String,
    alpha: f64,
    beta: f64,
    epsilon: Option<f64>,
    noise_off: bool,
    width: Option<usize>,
    seed: u64,
}

#[derive(Serialize)]
struct ReleaseResult {
    family: QueryFamily,
    buckets: usize,
    budget: BudgetReport,
    release: ReleaseDoc,
}

fn eval_distribution(d: usize, width: Option<usize>) -> Result<ProductDistribution, Failure> {
    match width {
        None => Ok(ProductDistribution::uniform(d)),
        Some(w) => {
            if w == 0 || w > d {
                return Err(Failure::usage(format!("--width {} out of range 1..={}", w, d)));
            }
            Ok(ProductDistribution::rate(d, w as f64 / d as f64)?)
        }
    }
}

fn run_release_conjunctions(args: &ReleaseArgs) -> Result<(), Failure> {
    check_unit_interval("alpha", args.alpha)?;
    check_unit_interval("beta", args.beta)?;
    let mode = privacy_mode(args.epsilon, args.noise_off)?;
    let data = BitDataset::from_csv_str(&read_input(&args.input)?)?;
    let dist = eval_distribution(data.dim(), args.width)?;
    let out = release_conjunctions(&data, args.alpha, args.beta, mode, &dist, args.seed)?;
    let config = ReleaseConfig {
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        alpha: args.alpha,
        beta: args.beta,
        epsilon: args.epsilon,
        noise_off: args.noise_off,
        width: args.width,
        seed: args.seed,
    };
    eprintln!(
        "released {} buckets over {} conjunction queries; budget {}/{}{}",
        out.structure.bucket_count(),
        1u128 << data.dim(),
        out.budget.used_queries,
        out.budget.declared_queries,
        if out.budget.noise_off {
            " (NOISE OFF: not private)"
        } else {
            ""
        }
    );
    let result = ReleaseResult {
        family: QueryFamily::Conjunction,
        buckets: out.structure.bucket_count(),
        budget: out.budget,
        release: out.structure.to_doc(),
    };
    emit(
        "release-conjunctions",
        config,
        data.sha256().to_string(),
        result,
        &args.output,
    )
}

fn run_release_cuts(args: &ReleaseArgs) -> Result<(), Failure> {
    check_unit_interval("alpha", args.alpha)?;
    check_unit_interval("beta", args.beta)?;
    let mode = privacy_mode(args.epsilon, args.noise_off)?;
    let graph = Graph::from_edge_list_str(&read_input(&args.input)?)?;
    let dist = eval_distribution(graph.n_vertices(), args.width)?;
    let out = release_cuts(&graph, args.alpha, args.beta, mode, &dist, args.seed)?;
    let config = ReleaseConfig {
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        alpha: args.alpha,
        beta: args.beta,
        epsilon: args.epsilon,
        noise_off: args.noise_off,
        width: args.width,
        seed: args.seed,
    };
    eprintln!(
        "released {} cut pieces over {} vertices; budget {}/{}{}",
        out.structure.bucket_count(),
        graph.n_vertices(),
        out.budget.used_queries,
        out.budget.declared_queries,
        if out.budget.noise_off {
            " (NOISE OFF: not private)"
        } else {
            ""
        }
    );
    let result = ReleaseResult {
        family: QueryFamily::Cut,
        buckets: out.structure.bucket_count(),
        budget: out.budget,
        release: out.structure.to_doc(),
    };
    emit(
        "release-cuts",
        config,
        graph.sha256(),
        result,
        &args.output,
    )
}

#[derive(Serialize)]
struct DecomposeConfig {
    input: String,
    output: String,
    kind: String,
    gamma: f64,
    seed: u64,
    exact_oracle: bool,
    noise_off: bool,
}

fn run_decompose(args: &DecomposeArgs) -> Result<(), Failure> {
    if !args.exact_oracle {
        return Err(Failure::usage(
            "decompose evaluates the raw data exactly; pass --exact-oracle to acknowledge",
        ));
    }
    if args.gamma.is_nan() || args.gamma <= 0.0 {
        return Err(Failure::usage(format!(
            "--gamma must be positive, got {}",
            args.gamma
        )));
    }
    let text = read_input(&args.input)?;
    let (doc, hash, kind) = match args.kind {
        FunctionKind::Disjunction => {
            let data = BitDataset::from_csv_str(&text)?;
            let oracle = disjunction_oracle(&data);
            let dec = decompose_monotone(&oracle, args.gamma)?;
            (
                DecompositionDoc::Monotone(dec.to_doc()),
                data.sha256().to_string(),
                "disjunction",
            )
        }
        FunctionKind::Cut => {
            let graph = Graph::from_edge_list_str(&text)?;
            let oracle = cut_oracle(&graph);
            let dec = decompose_general(&oracle, args.gamma)?;
            (DecompositionDoc::Double(dec.to_doc()), graph.sha256(), "cut")
        }
    };
    let buckets = match &doc {
        DecompositionDoc::Monotone(m) => m.buckets.len(),
        DecompositionDoc::Double(d) => d.inner.iter().map(|i| i.buckets.len()).sum(),
    };
    eprintln!("decomposed {} ({} buckets)", kind, buckets);
    let config = DecomposeConfig {
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        kind: kind.to_string(),
        gamma: args.gamma,
        seed: args.seed,
        exact_oracle: true,
        noise_off: true,
    };
    emit("decompose", config, hash, doc, &args.output)
}

#[derive(Serialize)]
struct MwConfigEcho {
    input: String,
    output: String,
    alpha: f64,
    epsilon: Option<f64>,
    noise_off: bool,
    seed: u64,
    engine: MwConfig,
}

#[derive(Serialize)]
struct MwResult {
    rounds: usize,
    concepts: usize,
    budget: BudgetReport,
    answers: Vec<f64>,
    trace: Vec<RoundTrace>,
}

const MW_MAX_DIM: usize = 12;

fn run_mw_release(args: &MwArgs) -> Result<(), Failure> {
    check_unit_interval("alpha", args.alpha)?;
    privacy_mode(args.epsilon, args.noise_off)?;
    let data = BitDataset::from_csv_str(&read_input(&args.input)?)?;
    let d = data.dim();
    if d > MW_MAX_DIM {
        return Err(Failure::usage(format!(
            "mw-release materializes 2^d points and concepts; d={} exceeds the cap {}",
            d, MW_MAX_DIM
        )));
    }
    let family = Arc::new(MonotoneConjunctions::new(d)?);
    let n_points = family.n_points();
    let cfg = MwConfig::for_exhaustive_release(args.alpha, n_points)?;
    let empirical = WeightedDistribution::empirical(
        n_points,
        data.rows().iter().map(|r| r.as_u64() as usize),
    )?;
    let declared = family.len() as u64;
    let budget = match privacy_mode(args.epsilon, args.noise_off)? {
        PrivacyMode::NoiseOff => Arc::new(PrivacyBudget::noise_off(declared, data.len() as u64)),
        PrivacyMode::Laplace { epsilon } => {
            let needed = min_database_size(declared, cfg.tau, cfg.beta, epsilon)?;
            if (data.len() as u64) < needed {
                return Err(Failure::usage(format!(
                    "database too small for a private run: need at least {} records, have {}",
                    needed,
                    data.len()
                )));
            }
            Arc::new(PrivacyBudget::new(epsilon, declared, data.len() as u64)?)
        }
    };
    let noise_off = budget.is_noise_off();
    let oracle = BudgetedSqOracle::new(
        Arc::clone(&family),
        empirical.clone(),
        Arc::clone(&budget),
        if noise_off { 0.0 } else { cfg.tau },
        args.seed,
    );
    // The potential trace reads the raw data distribution, so it is only
    // attached to diagnostics runs.
    let diagnostics = if noise_off { Some(&empirical) } else { None };
    let out = mw_release(
        family.as_ref(),
        &ExhaustiveWeakLearner,
        &oracle,
        &cfg,
        n_points,
        diagnostics,
    )?;
    eprintln!(
        "mw release converged in {} rounds (cap {}); budget {}/{}{}",
        out.rounds,
        cfg.rounds_cap,
        budget.used(),
        budget.declared(),
        if noise_off {
            " (NOISE OFF: not private)"
        } else {
            ""
        }
    );
    let config = MwConfigEcho {
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        alpha: args.alpha,
        epsilon: args.epsilon,
        noise_off,
        seed: args.seed,
        engine: cfg,
    };
    let result = MwResult {
        rounds: out.rounds,
        concepts: family.len(),
        budget: budget.report(),
        answers: out.answers,
        trace: out.trace,
    };
    emit(
        "mw-release",
        config,
        data.sha256().to_string(),
        result,
        &args.output,
    )
}

#[derive(Serialize)]
struct CensusConfig {
    release: String,
    input: String,
    output: String,
    mode: String,
    samples: Option<u64>,
    width: Option<usize>,
    seed: u64,
    exact_oracle: bool,
}

fn truth_oracle(family: QueryFamily, d: usize, input_text: &str) -> Result<(ValueOracle, String), Failure> {
    match family {
        QueryFamily::Disjunction => {
            let data = BitDataset::from_csv_str(input_text)?;
            if data.dim() != d {
                return Err(Failure::usage(format!(
                    "artifact is over {} attributes, dataset has {}",
                    d,
                    data.dim()
                )));
            }
            let hash = data.sha256().to_string();
            Ok((disjunction_oracle(&data), hash))
        }
        QueryFamily::Conjunction => {
            let data = BitDataset::from_csv_str(input_text)?;
            if data.dim() != d {
                return Err(Failure::usage(format!(
                    "artifact is over {} attributes, dataset has {}",
                    d,
                    data.dim()
                )));
            }
            let hash = data.sha256().to_string();
            let oracle = ValueOracle::exact(d, move |s| {
                conjunction_value(&data, s).expect("dimension checked")
            });
            Ok((oracle, hash))
        }
        QueryFamily::Cut => {
            let graph = Graph::from_edge_list_str(input_text)?;
            if graph.n_vertices() != d {
                return Err(Failure::usage(format!(
                    "artifact is over {} vertices, graph has {}",
                    d,
                    graph.n_vertices()
                )));
            }
            let hash = graph.sha256();
            Ok((cut_oracle(&graph), hash))
        }
        QueryFamily::Generic => Err(Failure::usage(
            "artifact does not name a query family; cannot build ground truth",
        )),
    }
}

fn run_census(args: &CensusArgs) -> Result<(), Failure> {
    if !args.exact_oracle {
        return Err(Failure::usage(
            "census evaluates the raw data exactly; pass --exact-oracle to acknowledge",
        ));
    }
    let release_text = read_input(&args.release)?;
    let envelope: Envelope<ReleaseResult2> = serde_json::from_str(&release_text)
        .map_err(|e| Failure::usage(format!("cannot parse release artifact: {}", e)))?;
    let structure = ReleaseStructure::from_doc(&envelope.result.release)?;
    let d = structure.params().universe_size;
    let family = structure.params().family;
    let input_text = read_input(&args.input)?;
    let (truth, input_hash) = truth_oracle(family, d, &input_text)?;
    let uniform = ProductDistribution::uniform(d);
    let dist = match args.width {
        None => CensusDistribution::Product(&uniform),
        Some(w) => CensusDistribution::WidthUniform(WidthSampler::new(w, d)?),
    };
    let mode = match args.mode {
        CensusModeArg::Exhaustive => CensusMode::Exhaustive,
        CensusModeArg::Sampled => CensusMode::Sampled {
            samples: args
                .samples
                .ok_or_else(|| Failure::usage("--mode sampled requires --samples"))?,
            seed: args.seed,
        },
    };
    let report: CensusReport = error_census(&structure, &truth, dist, mode)?;
    eprintln!(
        "census over {} queries: Pr[err > {}] = {:.4}, max err {:.4}",
        report.points, report.alpha, report.prob_exceeding_alpha, report.max_abs_error
    );
    let config = CensusConfig {
        release: args.release.display().to_string(),
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        mode: match args.mode {
            CensusModeArg::Exhaustive => "exhaustive".to_string(),
            CensusModeArg::Sampled => "sampled".to_string(),
        },
        samples: args.samples,
        width: args.width,
        seed: args.seed,
        exact_oracle: true,
    };
    emit("census", config, input_hash, report, &args.output)
}

/// Deserialization twin of [`ReleaseResult`]; only the release document is
/// needed to rebuild the structure.
#[derive(Deserialize)]
struct ReleaseResult2 {
    release: ReleaseDoc,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::ReleaseConjunctions(args) => run_release_conjunctions(args),
        Command::ReleaseCuts(args) => run_release_cuts(args),
        Command::Decompose(args) => run_decompose(args),
        Command::MwRelease(args) => run_mw_release(args),
        Command::Census(args) => run_census(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
