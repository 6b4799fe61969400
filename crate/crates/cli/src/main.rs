use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use carkit::decode::{decode, DecodeMethod, OrdinalDecodeMode};
use carkit::encode::{
    encode_onehot_with, encode_ordinal_with, encode_smooth1, encode_smooth2, encode_smooth3, OrdinalMode,
    DEFAULT_GAMMA_SMOOTH1, DEFAULT_GAMMA_SMOOTH2, DEFAULT_GAMMA_SMOOTH3,
};
use carkit::io::{self, pgm};
use carkit::losses::gradcheck::check_loss;
use carkit::losses::LossKind;
use carkit::metrics::{ause_breakdown, depth_metrics, DepthMetrics, MetricKind, DEFAULT_STEP};
use carkit::synth::{run_benchmark, RunConfig};
use carkit::tables::{
    make_adaptive_table, make_uniform_log_table, normalize_widths, IndexMode, DEFAULT_WIDTH_EPS,
};
use carkit::uncertainty::{
    e_dist, e_dist_adaptive, e_dist_ordinal_with, ensemble_variance, one_minus_mcp, shannon_entropy, ReencodeMode,
    UncertaintyMap,
};
use carkit::{CarError, DepthMap, DepthRange, ProbSemantics, Result};

#[derive(Parser)]
#[command(name = "carkit", version, about = "Depth classification toolkit: tables, targets, decoding, uncertainty, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a depth table and write it as JSON.
    Bins(BinsArgs),
    /// Turn ground-truth depth into a classification target map.
    Encode(EncodeArgs),
    /// Restore depth from a probability map.
    Decode(DecodeArgs),
    /// Score per-pixel uncertainty.
    Uncert(UncertArgs),
    /// Depth accuracy metrics.
    Eval(EvalArgs),
    /// Sparsification curve and AUSE of an uncertainty map.
    Sparsify(SparsifyArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the synthetic benchmark.
    Synth(SynthArgs),
}

#[derive(clap::Args)]
struct BinsArgs {
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    k: usize,
    /// Raw bin widths (.npy or JSON array); normalized before use.
    #[arg(long)]
    adaptive_widths: Option<PathBuf>,
    /// Floor added to every raw width.
    #[arg(long, default_value_t = DEFAULT_WIDTH_EPS)]
    eps: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Onehot,
    Ordinal,
    Smooth1,
    Smooth2,
    Smooth3,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrdinalFlag {
    Literal,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexFlag {
    Nearest,
    Floor,
}

#[derive(clap::Args)]
struct EncodeArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum)]
    scheme: Scheme,
    /// Smoothing coefficient (defaults per scheme).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "literal")]
    ordinal_mode: OrdinalFlag,
    #[arg(long, value_enum, default_value = "nearest")]
    index_mode: IndexFlag,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeFlag {
    Soft,
    Argmax,
    Ordinal,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClampFlag {
    Clamped,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemanticsFlag {
    Softmax,
    Sigmoid,
}

impl From<SemanticsFlag> for ProbSemantics {
    fn from(s: SemanticsFlag) -> Self {
        match s {
            SemanticsFlag::Softmax => ProbSemantics::Softmax,
            SemanticsFlag::Sigmoid => ProbSemantics::PerClassSigmoid,
        }
    }
}

#[derive(clap::Args)]
struct PgmArgs {
    /// Also write a 16-bit PGM preview.
    #[arg(long, requires = "width")]
    pgm: Option<PathBuf>,
    /// Image width in pixels for the PGM preview.
    #[arg(long)]
    width: Option<usize>,
}

#[derive(clap::Args)]
struct DecodeArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    probs: PathBuf,
    #[arg(long, value_enum)]
    method: DecodeFlag,
    /// Probability semantics of the input (default: sigmoid for ordinal, softmax otherwise).
    #[arg(long, value_enum)]
    semantics: Option<SemanticsFlag>,
    #[arg(long, value_enum, default_value = "clamped")]
    ordinal_mode: ClampFlag,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    pgm: PgmArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum UncertFlag {
    #[value(name = "s-entr")]
    SEntr,
    #[value(name = "1-mcp")]
    OneMinusMcp,
    EDist,
    EDistAdaptive,
    EDistOrdinal,
    Variance,
}

#[derive(clap::Args)]
struct UncertArgs {
    #[arg(long, value_enum)]
    method: UncertFlag,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Decoded depth; repeat for the ensemble variance.
    #[arg(long)]
    depth: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "strict")]
    reencode: OrdinalFlag,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    pgm: PgmArgs,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    #[arg(long)]
    json: bool,
    /// Write the full-precision result here as well.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricFlag {
    Rmse,
    AbsRel,
}

#[derive(clap::Args)]
struct SparsifyArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    uncert: PathBuf,
    #[arg(long, value_enum, default_value = "rmse")]
    metric: MetricFlag,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Print the AUSE.
    #[arg(long)]
    ause: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossFlag {
    All,
    Ce,
    Wce,
    Mbce,
    Ordinal,
    Smoothl1,
    Si,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    loss: LossFlag,
    /// Random instances per loss.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Run configuration (JSON). Missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn read_widths(path: &Path) -> Result<Vec<f64>> {
    if path.extension().is_some_and(|e| e == "json") {
        io::read_json(path)
    } else {
        io::read_f64_vec(path)
    }
}

fn bins(args: BinsArgs) -> Result<()> {
    let range = DepthRange::new(args.a, args.b)?;
    let table = match &args.adaptive_widths {
        Some(p) => {
            let raw = read_widths(p)?;
            if raw.len() != args.k {
                return Err(CarError::BadConfig(format!("--k {} but {} widths given", args.k, raw.len())));
            }
            make_adaptive_table(range, &normalize_widths(&raw, args.eps)?)?
        }
        None => make_uniform_log_table(range, args.k)?,
    };
    io::write_table(&args.output, &table)?;
    let v = table.values();
    match table.q() {
        Some(q) => println!(
            "{} log table, K={}, q={}, centers {}..{}",
            table.space().name(),
            table.k(),
            fmt6(q),
            fmt6(v[0]),
            fmt6(v[v.len() - 1])
        ),
        None => println!(
            "{} table, K={}, values {}..{}",
            table.space().name(),
            table.k(),
            fmt6(v[0]),
            fmt6(v[v.len() - 1])
        ),
    }
    Ok(())
}

fn encode_cmd(args: EncodeArgs) -> Result<()> {
    let table = io::read_table(&args.table)?;
    let gt = io::read_ground_truth(&args.gt, args.mask.as_deref())?;
    let index = match args.index_mode {
        IndexFlag::Nearest => IndexMode::Nearest,
        IndexFlag::Floor => IndexMode::Floor,
    };
    let labels = match args.scheme {
        Scheme::Onehot => encode_onehot_with(&gt, &table, index)?,
        Scheme::Ordinal => encode_ordinal_with(
            &gt,
            &table,
            match args.ordinal_mode {
                OrdinalFlag::Literal => OrdinalMode::Literal,
                OrdinalFlag::Strict => OrdinalMode::Strict,
            },
        )?,
        Scheme::Smooth1 => encode_smooth1(&gt, &table, args.gamma.unwrap_or(DEFAULT_GAMMA_SMOOTH1))?,
        Scheme::Smooth2 => encode_smooth2(&gt, &table, args.gamma.unwrap_or(DEFAULT_GAMMA_SMOOTH2))?,
        Scheme::Smooth3 => encode_smooth3(&gt, &table, args.gamma.unwrap_or(DEFAULT_GAMMA_SMOOTH3))?,
    };
    io::write_matrix(&args.output, labels.matrix())?;
    println!("{} labels, {} pixels x {} classes ({} valid)", labels.kind().name(), labels.n(), labels.k(), gt.n_valid());
    Ok(())
}

fn write_pgm(pgm: &PgmArgs, values: &[f64], mask: &[bool], scale: Option<(f64, f64)>) -> Result<()> {
    if let (Some(path), Some(width)) = (&pgm.pgm, pgm.width) {
        match scale {
            Some((lo, hi)) => pgm::write_depth(path, values, mask, width, lo, hi)?,
            None => pgm::write_normalized(path, values, mask, width)?,
        }
    }
    Ok(())
}

fn summarize(values: &[f64]) -> String {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    format!("min {} mean {} max {}", fmt6(lo), fmt6(mean), fmt6(hi))
}

fn decode_cmd(args: DecodeArgs) -> Result<()> {
    let table = io::read_table(&args.table)?;
    let method = match args.method {
        DecodeFlag::Soft => DecodeMethod::SoftWeighted,
        DecodeFlag::Argmax => DecodeMethod::Argmax,
        DecodeFlag::Ordinal => DecodeMethod::OrdinalSum,
        DecodeFlag::Adaptive => DecodeMethod::Adaptive,
    };
    let semantics = args.semantics.map(ProbSemantics::from).unwrap_or(match method {
        DecodeMethod::OrdinalSum => ProbSemantics::PerClassSigmoid,
        _ => ProbSemantics::Softmax,
    });
    let probs = io::read_probs(&args.probs, semantics)?;
    let mode = match args.ordinal_mode {
        ClampFlag::Clamped => OrdinalDecodeMode::Clamped,
        ClampFlag::Literal => OrdinalDecodeMode::Literal,
    };
    let depth = decode(&table, &probs, method, mode)?;
    io::write_depth_map(&args.output, &depth)?;
    let r = table.range();
    write_pgm(&args.pgm, &depth.values, &depth.mask, Some((r.a, r.b)))?;
    println!("decoded {} pixels: {}", depth.len(), summarize(&depth.values));
    Ok(())
}

fn uncert_cmd(args: UncertArgs) -> Result<()> {
    let missing = |flag: &str| CarError::BadConfig(format!("--{flag} is required for this method"));
    let map: UncertaintyMap = if let UncertFlag::Variance = args.method {
        let maps = args
            .depth
            .iter()
            .map(|p| io::read_depth_map(p, None))
            .collect::<Result<Vec<DepthMap>>>()?;
        ensemble_variance(&maps)?
    } else {
        let probs_path = args.probs.as_deref().ok_or_else(|| missing("probs"))?;
        let semantics = match args.method {
            UncertFlag::EDistOrdinal => ProbSemantics::PerClassSigmoid,
            _ => ProbSemantics::Softmax,
        };
        let probs = io::read_probs(probs_path, semantics)?;
        match args.method {
            UncertFlag::SEntr => shannon_entropy(&probs)?,
            UncertFlag::OneMinusMcp => one_minus_mcp(&probs)?,
            m => {
                let table = io::read_table(args.table.as_deref().ok_or_else(|| missing("table"))?)?;
                let depth = match args.depth.as_slice() {
                    [d] => io::read_depth_map(d, None)?,
                    [] => return Err(missing("depth")),
                    _ => return Err(CarError::BadConfig("give exactly one --depth".into())),
                };
                match m {
                    UncertFlag::EDist => e_dist(&table, &probs, &depth)?,
                    UncertFlag::EDistAdaptive => e_dist_adaptive(&table, &probs, &depth)?,
                    _ => e_dist_ordinal_with(
                        &table,
                        &probs,
                        &depth,
                        match args.reencode {
                            OrdinalFlag::Strict => ReencodeMode::Strict,
                            OrdinalFlag::Literal => ReencodeMode::Literal,
                        },
                    )?,
                }
            }
        }
    };
    io::write_f64_vec(&args.output, &map.values)?;
    write_pgm(&args.pgm, &map.values, &vec![true; map.len()], None)?;
    println!("{} over {} pixels: {}", map.method.name(), map.len(), summarize(&map.values));
    Ok(())
}

fn metrics_text(m: &DepthMetrics) -> String {
    let cols = [m.rmse, m.abs_rel, m.sq_rel, m.rmse_log, m.log10, m.delta1, m.delta2, m.delta3];
    let mut row: Vec<String> = cols.iter().map(|&v| fmt6(v)).collect();
    row.push(m.n_valid.to_string());
    row.join(",")
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let gt = io::read_ground_truth(&args.gt, args.mask.as_deref())?;
    let pred = io::read_depth_map(&args.pred, None)?;
    let m = depth_metrics(&pred, &gt)?;
    if args.json {
        let rounded = |v: f64| fmt6(v).parse::<f64>().unwrap_or(v);
        let shown = DepthMetrics {
            rmse: rounded(m.rmse),
            abs_rel: rounded(m.abs_rel),
            sq_rel: rounded(m.sq_rel),
            rmse_log: rounded(m.rmse_log),
            log10: rounded(m.log10),
            delta1: rounded(m.delta1),
            delta2: rounded(m.delta2),
            delta3: rounded(m.delta3),
            n_valid: m.n_valid,
        };
        print!("{}", io::to_json_string(&shown)?);
    } else {
        println!("{}", DepthMetrics::CSV_HEADER);
        println!("{}", metrics_text(&m));
    }
    if let Some(out) = &args.output {
        if args.json {
            io::write_json(out, &m)?;
        } else {
            fs::write(out, format!("{}\n{}\n", DepthMetrics::CSV_HEADER, m.csv_row()))?;
        }
    }
    Ok(())
}

fn sparsify_cmd(args: SparsifyArgs) -> Result<()> {
    let gt = io::read_ground_truth(&args.gt, args.mask.as_deref())?;
    let pred = io::read_depth_map(&args.pred, None)?;
    let values = io::read_f64_vec(&args.uncert)?;
    let uncert = UncertaintyMap {
        values,
        method: carkit::uncertainty::UncertaintyMethod::SEntr,
    };
    let kind = match args.metric {
        MetricFlag::Rmse => MetricKind::Rmse,
        MetricFlag::AbsRel => MetricKind::AbsRel,
    };
    let b = ause_breakdown(&pred, &gt, &uncert, kind, args.step)?;
    fs::write(&args.output, b.curve.to_csv())?;
    if args.ause {
        println!("{}", fmt6(b.ause));
    } else {
        println!("{} curve with {} points written", kind.name(), b.curve.len());
    }
    Ok(())
}

/// Returns whether every checked loss met its tolerance.
fn gradcheck_cmd(args: GradcheckArgs) -> bool {
    let kinds: Vec<LossKind> = match args.loss {
        LossFlag::All => LossKind::ALL.to_vec(),
        LossFlag::Ce => vec![LossKind::Ce],
        LossFlag::Wce => vec![LossKind::Wce],
        LossFlag::Mbce => vec![LossKind::Mbce],
        LossFlag::Ordinal => vec![LossKind::Ordinal],
        LossFlag::Smoothl1 => vec![LossKind::SmoothL1],
        LossFlag::Si => vec![LossKind::ScaleInvariant],
    };
    let mut ok = true;
    for k in kinds {
        let r = check_loss(k, args.points, args.seed);
        println!(
            "{:<9} max rel error {:.6e} (tol {:.0e}) {}",
            k.name(),
            r.max_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        );
        ok &= r.passed();
    }
    ok
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let config: RunConfig = match &args.config {
        Some(p) => io::read_json(p)?,
        None => RunConfig::default(),
    };
    let report = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CarError::BadConfig(e.to_string()))?
            .install(|| run_benchmark(&config))?,
        None => run_benchmark(&config)?,
    };
    io::write_json(&args.output, &report)?;
    let dir = args.output.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    for c in &report.cells {
        fs::write(dir.join(&c.loss_trace_file), io::loss_trace_csv(&c.loss_trace))?;
    }
    for (name, s) in &report.summary {
        let abs_rel = s.metrics.get("abs_rel").map(|m| fmt6(m.mean)).unwrap_or_else(|| "-".into());
        let mut line = format!("{name:<18} abs_rel {abs_rel}  ause_rmse");
        for (method, kinds) in &s.ause {
            if let Some(v) = kinds.get("rmse") {
                line.push_str(&format!(" {method}={}", fmt6(v.mean)));
            }
        }
        if s.failed > 0 {
            line.push_str(&format!("  ({} failed)", s.failed));
        }
        println!("{line}");
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} seed {} failed: {}", c.strategy, c.seed, c.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn exit_for(e: &CarError) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_io() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
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
    let result = match cli.command {
        Command::Bins(a) => bins(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Uncert(a) => uncert_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sparsify(a) => sparsify_cmd(a),
        Command::Gradcheck(a) => {
            return if gradcheck_cmd(a) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
