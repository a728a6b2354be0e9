//! `weyl`: command-line access to evaluation, maximal functions, Diophantine
//! classification, bound checks and scaling campaigns for quadratic Weyl sums.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use weyl_core::bounds::{self, content_hash, records_csv, BoundCheckRecord, Grouping};
use weyl_core::diophant::{classify_time, jarnik_csv, jarnik_witnesses, major_arc_points, major_arcs_csv, Regime};
use weyl_core::experiments::{run_campaign, CampaignSummary};
use weyl_core::io::{atomic_write, encode_grid, grid_csv, BinaryGrid};
use weyl_core::maximal::{lp_norm, maximal_grid_with, restricted_sup_exact, sup_over_t_exact, MaxGridOptions};
use weyl_core::structures::{build_collection, count_vs_bound, level_set, partition_by_q, verify_one_dimensional};
use weyl_core::{
    eval_naive_exact, eval_point_exact, eval_t_grid_exact, eval_x_grid_exact, CampaignConfig, Coord, GridSpec,
    OneDimCollection, ProfileCache, WeylError, WeylScale,
};

#[derive(Parser)]
#[command(name = "weyl", version, about = "Quadratic Weyl sums w_N(x,t) = sum_{n<=N} e(nx + n^2 t)")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate w_N(x,t) at one point; prints "re im".
    Eval(EvalArgs),
    /// Evaluate w_N on a uniform grid in x (fixed t) or in t (fixed x) by one DFT.
    #[command(subcommand)]
    Grid(GridCmd),
    /// Certified sup over t of |w_N(x,t)| (optionally over a window of t): the maximal
    /// function whose L^4 norm grows like N^(3/4) up to log factors.
    Maxfn(MaxfnArgs),
    /// L^p norm of x -> sup_t |w_N(x,t)|; the L^4 norm is conjectured sharp at N^(3/4+eps)
    /// and bounded below by N^(3/4) from the x near 0 cell.
    Norm(NormArgs),
    /// Dirichlet data of a time t at scale (N, alpha): the approximant a/q and whether it
    /// meets q <= c log^2 N 2^m and |t - a/q| <= c log^2 N 2^m / (q N^2).
    Classify(ClassifyArgs),
    /// Rational boxes where |w_N| is large: odd major arcs, or Jarnik-type neighbourhoods.
    #[command(subcommand)]
    Arcs(ArcsCmd),
    /// Measure of {x : sup_t |w_N(x,t)| >= c N^alpha}, expected to be O(N^(3 - 4 alpha + eps)).
    Levelset(LevelsetArgs),
    /// Rectangles carrying large values: build, check one-dimensionality, split by the
    /// denominator of the witness time, and count against N^(5(1 - alpha)).
    #[command(subcommand)]
    Collection(CollectionCmd),
    /// Empirical checks of the inequalities satisfied by w_N.
    #[command(subcommand)]
    Check(CheckCmd),
    /// Run a scaling campaign from a key=value or JSON config and write reports.
    Campaign(CampaignArgs),
    /// Print a campaign summary.json in readable form.
    Report(ReportArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "N")]
    n: u64,
    /// Decimal or exact "a/q".
    #[arg(long)]
    x: Coord,
    /// Decimal or exact "a/q".
    #[arg(long)]
    t: Coord,
    #[arg(long, value_enum, default_value_t = Method::Recurrence)]
    method: Method,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Blocked phase recurrence (residue tables for rational inputs).
    Recurrence,
    /// Direct summation with compensated accumulation.
    Naive,
}

#[derive(Subcommand)]
enum GridCmd {
    /// w_N(j/m, t) for j < m.
    X(GridXArgs),
    /// w_N(x, k/K) for k < K.
    T(GridTArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum GridFormat {
    Csv,
    Bin,
}

#[derive(Args)]
struct GridXArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    t: Coord,
    /// Grid size; must exceed N.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
    format: GridFormat,
}

#[derive(Args)]
struct GridTArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    x: Coord,
    /// Grid size; must exceed N^2.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
    format: GridFormat,
}

#[derive(Args)]
struct MaxfnArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    x: Coord,
    /// Target undershoot as a multiple of N^(3/4).
    #[arg(long, default_value = "0.05", value_parser = real)]
    tol: f64,
    /// Restrict to lo <= t <= hi.
    #[arg(long, value_parser = real)]
    lo: Option<f64>,
    #[arg(long, value_parser = real)]
    hi: Option<f64>,
}

#[derive(Args, Clone)]
struct ProfileArgs {
    /// Target undershoot as a multiple of N^(3/4).
    #[arg(long, default_value = "0.05", value_parser = real)]
    tol: f64,
    /// Base x-grid has at least density * N nodes.
    #[arg(long, default_value_t = 4)]
    density: u64,
    /// Coarse t-grid has at least k_factor * N^2 nodes.
    #[arg(long, default_value_t = 8)]
    k_factor: u64,
    /// Rounds of local x-bisection.
    #[arg(long, default_value_t = 1)]
    refine: u32,
    /// Write the profile (x,sup,t_star,cell_width) here.
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

impl ProfileArgs {
    fn options(&self) -> MaxGridOptions {
        MaxGridOptions {
            density: self.density,
            k_factor: self.k_factor,
            refine_levels: self.refine,
            ..MaxGridOptions::default()
        }
    }

    fn profile(&self, n: u64) -> anyhow::Result<weyl_core::MaxProfile> {
        let p = maximal_grid_with(n, n as usize, self.tol, &self.options())?;
        if let Some(out) = &self.profile_out {
            atomic_write(out, p.to_csv().as_bytes())?;
        }
        Ok(p)
    }
}

#[derive(Args)]
struct NormArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long, default_value = "4", value_parser = real)]
    p: f64,
    #[command(flatten)]
    profile: ProfileArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, value_parser = real)]
    t: f64,
    #[arg(long = "N")]
    n: u64,
    #[arg(long, value_parser = real)]
    alpha: f64,
    /// Small/large denominator split at N^delta.
    #[arg(long, default_value = "0.05", value_parser = real)]
    delta: f64,
    #[arg(long, default_value = "1", value_parser = real)]
    c: f64,
}

#[derive(Subcommand)]
enum ArcsCmd {
    /// Boxes |x - b/q| <= 1/(100N), |t - a/q| <= 1/(100N^2) with q^2 <= N.
    Major(MajorArgs),
    /// Points within q^-(2+beta) of a/q for q in a range.
    Jarnik(JarnikArgs),
}

#[derive(Args)]
struct MajorArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    q_max: u64,
    /// Keep only odd q.
    #[arg(long)]
    odd_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JarnikArgs {
    #[arg(long, value_parser = real)]
    beta: f64,
    #[arg(long)]
    q_lo: u64,
    #[arg(long)]
    q_hi: u64,
    #[arg(long)]
    odd_only: bool,
    #[arg(long)]
    primes_only: bool,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LevelsetArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long, value_parser = real)]
    alpha: f64,
    #[arg(long, default_value = "1", value_parser = real)]
    c: f64,
    /// Write the covering intervals (lo,hi,width) here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    profile: ProfileArgs,
}

#[derive(Subcommand)]
enum CollectionCmd {
    /// One rectangle per dyadic x-tile where the maximal function reaches N^alpha.
    Build(BuildArgs),
    /// Confirm that no point is covered by three x-projections.
    Verify(InputArgs),
    /// Group rectangles by the denominator of their witness time.
    Partition(PartitionArgs),
    /// Compare the rectangle count with N^(5(1 - alpha) + eps).
    Count(CountArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long, value_parser = real)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    profile: ProfileArgs,
}

#[derive(Args)]
struct InputArgs {
    /// A collection written by `collection build`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "0.05", value_parser = real)]
    delta: f64,
    #[arg(long, default_value = "1", value_parser = real)]
    c: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "0", value_parser = real)]
    eps: f64,
}

#[derive(Subcommand)]
enum CheckCmd {
    /// |w_N(x,t)| against log N * N / (sqrt(q) (1 + N |t - a/q|^(1/2))), a/q the Dirichlet
    /// approximant at level N. One point with --x/--t, else a seeded random sweep.
    Bourgain(BourgainArgs),
    /// |v_q| <= C (q log q)^(1/2) |w_q| for the residue-class decomposition near a/q.
    WeylRatio(WeylRatioArgs),
    /// |w_N| >= c N / sqrt(q) within 1/(100N) x 1/(100N^2) of (b/q, a/q), q odd.
    MajorArc(MajorArcArgs),
    /// L^4 norm of sup over a window of length eta against N max(1/N, eta)^(1/4).
    Mv(MvArgs),
    /// |w_N(x,t)| against the completion sum S_M(x,t) = sum_h |w_M(x + h/M, t)| / h.
    Completion(CompletionArgs),
    /// sup_t |w_N(x,t)| >= 0.9 N for every x in [0, 1e-6/N].
    Sharpness(SharpnessArgs),
    /// N_q = floor(q^(1/(2(1-alpha)))/100) and |w_{N_q}| >= N_q^(alpha - delta) at a
    /// major-arc witness: odd Jarnik points lie in the alpha - delta large-value set.
    Jarnik(JarnikCheckArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Write per-record CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the summary JSON (with seed and parameter hash) here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct BourgainArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long, value_parser = real, requires = "t")]
    x: Option<f64>,
    #[arg(long, value_parser = real, requires = "x")]
    t: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = GroupingArg::Literal)]
    grouping: GroupingArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    /// 1 + N |t - a/q|^(1/2).
    Literal,
    /// 1 + (N |t - a/q|)^(1/2).
    Alternate,
}

#[derive(Args)]
struct WeylRatioArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    a: u64,
    #[arg(long, value_parser = real)]
    x: f64,
    #[arg(long, value_parser = real)]
    t: f64,
}

#[derive(Args)]
struct MajorArcArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    a: u64,
    #[arg(long)]
    b: u64,
    #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
    x_offset: f64,
    #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
    t_offset: f64,
}

#[derive(Args)]
struct MvArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long, value_parser = real)]
    eta: f64,
    /// x-grid size (default 2N).
    #[arg(long)]
    x_samples: Option<usize>,
    #[arg(long, default_value_t = 4)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CompletionArgs {
    #[arg(long = "N")]
    n: u64,
    #[arg(long = "M")]
    m: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SharpnessArgs {
    #[arg(long = "N")]
    n: u64,
}

#[derive(Args)]
struct JarnikCheckArgs {
    #[arg(long, value_parser = real)]
    alpha: f64,
    #[arg(long)]
    q: u64,
    #[arg(long, default_value = "0.05", value_parser = real)]
    delta: f64,
    /// Units a scanned for the best witness.
    #[arg(long, default_value_t = 16)]
    a_candidates: usize,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override one key, e.g. --set seed=7 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Keep maximal profiles here between runs.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A summary.json, or the directory holding it.
    #[arg(long)]
    input: PathBuf,
}

/// A rational "a/q" or a decimal.
fn real(s: &str) -> Result<f64, String> {
    match s.split_once('/') {
        Some((a, q)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            if q == 0.0 {
                return Err("zero denominator".into());
            }
            Ok(a / q)
        }
        None => s.trim().parse().map_err(|_| format!("`{s}` is not a number")),
    }
}

/// Validation failures, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(flag: &str, msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(Usage(format!("invalid value for `{flag}`: {msg}")))
}

fn flag_for(param: &str) -> String {
    match param {
        "tolerance" => "--tol".into(),
        "t_interval" => "--lo/--hi".into(),
        "q_range" => "--q-lo/--q-hi".into(),
        "samples_per_q" => "--samples".into(),
        "epsilon" => "--eps".into(),
        "a_candidates" => "--a-candidates".into(),
        p => format!("--{}", p.replace('_', "-")),
    }
}

fn exit_code(err: &anyhow::Error) -> (u8, String) {
    if let Some(u) = err.downcast_ref::<Usage>() {
        return (2, u.0.clone());
    }
    match err.downcast_ref::<WeylError>() {
        Some(WeylError::InvalidArgument { param, reason }) => {
            (2, format!("invalid value for `{}`: {reason}", flag_for(param)))
        }
        _ => (1, format!("{err:#}")),
    }
}

fn fmt_num(v: f64) -> String {
    // print -0 as 0
    format!("{}", v + 0.0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: invalid value for `--threads`: must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, msg) = exit_code(&e);
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Eval(a) => {
            let w = match a.method {
                Method::Recurrence => eval_point_exact(a.n, &a.x, &a.t)?,
                Method::Naive => eval_naive_exact(a.n, &a.x, &a.t)?,
            };
            println!("{} {}", fmt_num(w.re), fmt_num(w.im));
        }
        Command::Grid(GridCmd::X(a)) => {
            let values = eval_x_grid_exact(a.n, &a.t, a.m)?;
            write_grid(&a.out, a.format, a.n, a.t.value(), GridSpec::uniform(a.m), &values)?;
            println!("{} values written to {}", values.len(), a.out.display());
        }
        Command::Grid(GridCmd::T(a)) => {
            let values = eval_t_grid_exact(a.n, &a.x, a.k)?;
            write_grid(&a.out, a.format, a.n, a.x.value(), GridSpec::uniform(a.k), &values)?;
            println!("{} values written to {}", values.len(), a.out.display());
        }
        Command::Maxfn(a) => {
            let s = match (a.lo, a.hi) {
                (None, None) => sup_over_t_exact(a.n, &a.x, a.tol)?,
                (lo, hi) => restricted_sup_exact(a.n, &a.x, (lo.unwrap_or(0.0), hi.unwrap_or(1.0)), a.tol)?,
            };
            println!("{} {} {}", fmt_num(s.sup), fmt_num(s.t_star), fmt_num(s.certificate.max_undershoot));
        }
        Command::Norm(a) => {
            let p = a.profile.profile(a.n)?;
            println!("{}", fmt_num(lp_norm(&p, a.p)?));
        }
        Command::Classify(a) => {
            let scale = WeylScale::with_default_eta(a.n, a.alpha)?;
            if !(0.0..1.0).contains(&a.t) {
                return Err(usage("--t", format!("{} is outside [0, 1)", a.t)));
            }
            let c = classify_time(a.t, &scale, a.delta, a.c)?;
            let regime = match c.regime {
                Regime::SmallQ(_) => "small-q",
                Regime::LargeQ(_) => "large-q",
            };
            let rivals: Vec<String> = c.rivals.iter().map(|r| r.to_string()).collect();
            println!(
                "approximant={} distance={:e} m={} regime={regime} passes={} q_limit={} rivals=[{}]",
                c.approximant,
                c.distance,
                c.m,
                c.passes_lemma,
                fmt_num(c.q_limit),
                rivals.join(",")
            );
        }
        Command::Arcs(ArcsCmd::Major(a)) => {
            let boxes = major_arc_points(a.n, a.q_max, a.odd_only)?;
            atomic_write(&a.out, major_arcs_csv(&boxes).as_bytes())?;
            println!("{} boxes written to {}", boxes.len(), a.out.display());
        }
        Command::Arcs(ArcsCmd::Jarnik(a)) => {
            let pts = jarnik_witnesses(a.beta, (a.q_lo, a.q_hi), a.odd_only, a.primes_only, a.samples)?;
            atomic_write(&a.out, jarnik_csv(&pts).as_bytes())?;
            println!("{} points written to {}", pts.len(), a.out.display());
        }
        Command::Levelset(a) => {
            let p = a.profile.profile(a.n)?;
            let r = level_set(&p, a.alpha, a.c)?;
            if let Some(out) = &a.out {
                atomic_write(out, r.to_csv().as_bytes())?;
            }
            println!("{}", fmt_num(r.total_measure));
        }
        Command::Collection(c) => run_collection(c)?,
        Command::Check(c) => run_check(c)?,
        Command::Campaign(a) => {
            let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
            let mut cfg = CampaignConfig::parse(&text)?;
            for kv in &a.overrides {
                let (k, v) = kv.split_once('=').ok_or_else(|| usage("--set", format!("`{kv}` is not KEY=VALUE")))?;
                cfg.set(k.trim(), v.trim()).map_err(|e| usage("--set", e))?;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(d) = a.output_dir {
                cfg.output_dir = d;
            }
            cfg.validate()?;
            let cache = match &a.cache_dir {
                Some(d) => ProfileCache::persistent(d),
                None => ProfileCache::new(),
            };
            println!("seed={}", cfg.seed);
            let s = run_campaign(&cfg, &cache)?;
            println!(
                "maximal L4 slope {:.4} (r2 {:.4}); reports in {}",
                s.maximal_norm.l4.slope,
                s.maximal_norm.l4.r_squared,
                cfg.output_dir.display()
            );
        }
        Command::Report(a) => {
            let path = if a.input.is_dir() { a.input.join("summary.json") } else { a.input.clone() };
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let s: CampaignSummary = serde_json::from_str(&text).context("parsing summary")?;
            print!("{}", render_report(&s));
        }
    }
    Ok(())
}

fn write_grid(
    out: &Path,
    format: GridFormat,
    n: u64,
    fixed: f64,
    grid: GridSpec,
    values: &[weyl_core::Complex64],
) -> anyhow::Result<()> {
    let bytes = match format {
        GridFormat::Csv => grid_csv(&grid, values).into_bytes(),
        GridFormat::Bin => encode_grid(&BinaryGrid {
            n,
            size: values.len() as u64,
            fixed,
            values: values.to_vec(),
        }),
    };
    atomic_write(out, &bytes)?;
    Ok(())
}

fn read_collection(path: &Path) -> anyhow::Result<OneDimCollection> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage("--input", format!("{}: {e}", path.display())))
}

fn run_collection(cmd: CollectionCmd) -> anyhow::Result<()> {
    match cmd {
        CollectionCmd::Build(a) => {
            let p = a.profile.profile(a.n)?;
            let coll = build_collection(&p, a.alpha)?;
            atomic_write(&a.out, serde_json::to_string_pretty(&coll)?.as_bytes())?;
            println!("{}", coll.rects.len());
        }
        CollectionCmd::Verify(a) => {
            let coll = read_collection(&a.input)?;
            let check = verify_one_dimensional(&coll);
            match check.witness {
                None => println!("ok"),
                Some(x) => {
                    println!("not one-dimensional: x = {x} is covered three or more times");
                    return Err(anyhow!("collection is not one-dimensional"));
                }
            }
        }
        CollectionCmd::Partition(a) => {
            let coll = read_collection(&a.input)?;
            let part = partition_by_q(&coll, a.delta, a.c)?;
            for (q, rects) in &part.classes {
                println!("q={q} rects={}", rects.len());
            }
            println!("unassigned={} contested={}", part.unassigned.len(), part.contested());
            if let Some(out) = &a.out {
                atomic_write(out, serde_json::to_string_pretty(&part)?.as_bytes())?;
            }
        }
        CollectionCmd::Count(a) => {
            let coll = read_collection(&a.input)?;
            let c = count_vs_bound(&coll, a.eps)?;
            println!("{} {} {}", c.count, fmt_num(c.bound), fmt_num(c.ratio));
        }
    }
    Ok(())
}

fn emit(out: &OutArgs, records: &[BoundCheckRecord], summary: serde_json::Value) -> anyhow::Result<()> {
    if let Some(p) = &out.out {
        atomic_write(p, records_csv(records).as_bytes())?;
    }
    if let Some(p) = &out.summary {
        atomic_write(p, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    }
    Ok(())
}

fn print_record(r: &BoundCheckRecord) {
    println!("{} {} {}", fmt_num(r.lhs), fmt_num(r.rhs_envelope), fmt_num(r.ratio));
    if r.flagged {
        println!("flagged");
    }
}

fn run_check(cmd: CheckCmd) -> anyhow::Result<()> {
    match cmd {
        CheckCmd::Bourgain(a) => {
            let grouping = match a.grouping {
                GroupingArg::Literal => Grouping::Literal,
                GroupingArg::Alternate => Grouping::Alternate,
            };
            if let (Some(x), Some(t)) = (a.x, a.t) {
                let r = bounds::bourgain_envelope(a.n, x, t, grouping)?;
                print_record(&r);
                emit(&a.out, std::slice::from_ref(&r), json!({ "record": r }))?;
            } else {
                if a.samples == 0 {
                    return Err(usage("--samples", "must be at least 1"));
                }
                println!("seed={}", a.seed);
                let (recs, s) = bounds::bourgain_sweep(a.n, a.samples, a.seed, grouping)?;
                let params = json!({ "N": a.n, "samples": a.samples, "seed": a.seed, "grouping": format!("{grouping:?}") });
                println!("max_ratio={} p50={} p90={} p99={}", s.max_ratio, s.p50, s.p90, s.p99);
                emit(&a.out, &recs, json!({ "summary": s, "seed": a.seed, "param_hash": content_hash(&params)?, "params": params }))?;
            }
        }
        CheckCmd::WeylRatio(a) => print_record(&bounds::classical_weyl_ratio(a.n, a.q, a.a, a.x, a.t)?),
        CheckCmd::MajorArc(a) => print_record(&bounds::major_arc_lower(a.n, a.q, a.a, a.b, a.x_offset, a.t_offset)?),
        CheckCmd::Mv(a) => {
            println!("seed={}", a.seed);
            let xs = a.x_samples.unwrap_or(2 * a.n as usize);
            let r = bounds::mv_local_check(a.n, a.eta, xs, a.draws, a.seed)?;
            let s = &r.summary;
            println!("max_ratio={} p50={} samples={}", s.max_ratio, s.p50, s.sample_count);
            let params = json!({ "N": a.n, "eta": a.eta, "x_samples": xs, "draws": a.draws, "seed": a.seed });
            emit(&a.out, &[], json!({ "report": r, "seed": a.seed, "param_hash": content_hash(&params)?, "params": params }))?;
        }
        CheckCmd::Completion(a) => {
            if a.samples == 0 {
                return Err(usage("--samples", "must be at least 1"));
            }
            println!("seed={}", a.seed);
            let (recs, s) = bounds::completion_check(a.n, a.m, a.samples, a.seed)?;
            println!("max_ratio={} p50={} p90={} p99={}", s.max_ratio, s.p50, s.p90, s.p99);
            let params = json!({ "N": a.n, "M": a.m, "samples": a.samples, "seed": a.seed });
            emit(&a.out, &recs, json!({ "summary": s, "seed": a.seed, "param_hash": content_hash(&params)?, "params": params }))?;
        }
        CheckCmd::Sharpness(a) => {
            let r = bounds::sharpness_witness(a.n)?;
            print_record(&r);
            if r.flagged {
                return Err(anyhow!("sharpness witness below 0.9 N"));
            }
        }
        CheckCmd::Jarnik(a) => {
            let r = bounds::jarnik_containment(a.alpha, a.q, a.delta, a.a_candidates)?;
            println!("N_q={} a={} b={}", r.params["N_q"], r.params["a"], r.params["b"]);
            print_record(&r);
        }
    }
    Ok(())
}

fn render_report(s: &CampaignSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed {}  params {}\n", s.seed, s.param_hash));
    out.push_str(&format!("N = {:?}\n\n", s.config.n_list));
    let m = &s.maximal_norm;
    out.push_str("maximal function norms\n");
    for (i, &(n, l4)) in m.l4.points.iter().enumerate() {
        out.push_str(&format!(
            "  N={n:<6} L2={:<12.4} L4={:<12.4} L6={:<12.4} L4/N^0.75={:.4}\n",
            m.l2.points[i].1,
            l4,
            m.l6.points[i].1,
            l4 / (n as f64).powf(0.75)
        ));
    }
    out.push_str(&format!(
        "  slopes: p=2 {:.4}  p=4 {:.4} (r2 {:.4}, reference 0.75, within slack: {})  p=6 {:.4}\n\n",
        m.l2.slope, m.l4.slope, m.l4.r_squared, s.maximal_norm_check.within_slack, m.l6.slope
    ));
    out.push_str("level sets\n");
    for (k, c) in &s.levelset_checks {
        out.push_str(&format!(
            "  {k:<18} slope {:>8.4} (reference {:.2}, within slack: {})\n",
            c.slope, c.reference, c.within_slack
        ));
    }
    out.push_str("\nrectangle counts\n");
    for (k, f) in &s.rect_counts {
        out.push_str(&format!("  {k:<12} slope {:.4}\n", f.slope));
    }
    if let Some(f) = &s.progression_in_q {
        out.push_str(&format!("\nprogression norm in q at N={}: slope {:.4}\n", s.config.progression_size(), f.slope));
    }
    out.push_str("\nrefined Strichartz (random unit-scale collection)\n");
    for &(n, l, e) in &s.strichartz {
        out.push_str(&format!("  N={n:<6} lhs={l:.4e} N^(1/4)={e:.4}\n"));
    }
    out.push_str("\nbox counts of level-set unions\n");
    for t in &s.box_counts {
        let slope = t.slope.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!("  alpha={} slope {slope} (reference {:.2})\n", t.alpha, 4.0 * (1.0 - t.alpha)));
    }
    if !s.skipped.is_empty() {
        out.push_str("\nskipped\n");
        for k in &s.skipped {
            out.push_str(&format!("  {k}\n"));
        }
    }
    out
}
