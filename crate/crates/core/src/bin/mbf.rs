use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use matchbox::coding::{sufficient_scan_depth, Schedule, DEFAULT_SCAN_DEPTH};
use matchbox::holonomy::{classify_at_depth, Evidence};
use matchbox::report::{self, CheckConfig, Emit, RunConfig, Suite};
use matchbox::systems::{Dist, System, SystemRef};
use matchbox::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mbf", version, about = "Branched-manifold presentations of symbolic matchbox manifolds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the hierarchy, towers, complexes and bonding maps and write artifacts.
    Build(BuildArgs),
    /// Run the invariant suites.
    Check(CheckArgs),
    /// Finite-depth expansive/equicontinuous evidence.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct Common {
    /// System spec file, or one of the built-in names (dyadic, dyadic-2d, fibonacci, thue-morse).
    #[arg(long)]
    system: String,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long)]
    scan_depth: Option<usize>,
    /// cylinder or self-similar.
    #[arg(long, default_value = "cylinder")]
    schedule: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Point pairs for the injectivity proxy.
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated subset of dot, json, csv.
    #[arg(long, default_value = "dot,json,csv")]
    emit: String,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated suites; all when omitted.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long, default_value_t = 100)]
    nets: usize,
    /// Feed a corrupted bonding map to the factorization check.
    #[arg(long)]
    corrupt: bool,
    /// Also write the report here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    system: String,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Separation threshold as an exponent: ε = 2^-eps.
    #[arg(long, default_value_t = 1)]
    eps: u64,
}

fn load_system(name: &str) -> Result<SystemRef, Error> {
    let path = Path::new(name);
    if path.exists() {
        return System::load(path);
    }
    match name {
        "dyadic" => Ok(System::dyadic()),
        "dyadic-2d" => Ok(System::dyadic_2d()),
        "fibonacci" | "fib" => Ok(System::fibonacci()),
        "thue-morse" | "tm" => Ok(System::thue_morse()),
        _ => Err(Error::Io(format!("no such system file: {name}"))),
    }
}

/// Floor below which a scan cannot trace even one return per level.
fn minimum_scan_depth(levels: usize) -> usize {
    4 * levels + 4
}

fn run_config(c: &Common, emit: BTreeSet<Emit>) -> Result<RunConfig, Error> {
    let schedule: Schedule = c.schedule.parse()?;
    let mut scan_depth = c.scan_depth.unwrap_or(DEFAULT_SCAN_DEPTH);
    let floor = minimum_scan_depth(c.levels);
    if scan_depth < floor {
        eprintln!("warning: scan depth raised from {scan_depth} to {floor}");
        scan_depth = floor;
    }
    if let Some(cap) = std::env::var("MBF_SCAN_DEPTH_CAP").ok().and_then(|v| v.parse::<usize>().ok()) {
        if scan_depth > cap {
            eprintln!("warning: scan depth capped at {cap} by MBF_SCAN_DEPTH_CAP");
            scan_depth = cap;
        }
    }
    if c.levels == 0 {
        return Err(Error::MalformedSpec("levels must be at least 1".into()));
    }
    Ok(RunConfig { levels: c.levels, scan_depth, schedule, emit, seed: c.seed, samples: c.samples })
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::DepthInsufficient { needed } => {
            eprintln!("error: {e}");
            eprintln!("rerun with --scan-depth {needed}");
            ExitCode::from(3)
        }
        Error::RejectPeriodic { .. } | Error::RejectNotPrimitive { .. } | Error::MalformedSpec(_) | Error::NoSeed => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        _ => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Upper bound for the search behind a DEPTH_INSUFFICIENT hint.
const HINT_SEARCH_LIMIT: usize = 1 << 22;

/// Replaces the depth reported by the failing step with the smallest depth that lets the whole
/// run through.
fn with_depth_hint(e: Error, sys: &SystemRef, cfg: &RunConfig) -> Error {
    let Error::DepthInsufficient { needed } = e else { return e };
    match sufficient_scan_depth(sys, cfg.levels, cfg.schedule, needed.max(cfg.scan_depth + 1), HINT_SEARCH_LIMIT) {
        Ok(d) => Error::DepthInsufficient { needed: d.max(needed) },
        Err(_) => Error::DepthInsufficient { needed },
    }
}

fn parse_list<T: std::str::FromStr<Err = Error> + Ord>(s: &str) -> Result<BTreeSet<T>, Error> {
    s.split(',').filter(|x| !x.is_empty()).map(|x| x.trim().parse()).collect()
}

fn build(a: BuildArgs) -> Result<ExitCode, Error> {
    let sys = load_system(&a.common.system)?;
    let cfg = run_config(&a.common, parse_list(&a.emit)?)?;
    eprintln!("seed = {}", cfg.seed);
    let out = report::build(&sys, &cfg).map_err(|e| with_depth_hint(e, &sys, &cfg))?;
    report::write_atomic(&a.out_dir, &out.artifacts)?;
    for art in &out.artifacts {
        println!("{}", a.out_dir.join(&art.name).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn check(a: CheckArgs) -> Result<ExitCode, Error> {
    let sys = load_system(&a.common.system)?;
    let run = run_config(&a.common, BTreeSet::new())?;
    eprintln!("seed = {}", run.seed);
    let suites = match &a.suite {
        Some(s) => parse_list(s)?,
        None => Suite::ALL.into_iter().collect(),
    };
    let cfg = CheckConfig { run, suites, nets: a.nets, corrupt: a.corrupt };
    let results = report::check(&sys, &cfg).map_err(|e| with_depth_hint(e, &sys, &cfg.run))?;
    let doc = json!({
        "system": sys.name,
        "seed": cfg.run.seed,
        "passed": results.iter().all(|r| r.passed()),
        "suites": results.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("json values serialise") + "\n";
    if let Some(dir) = &a.out_dir {
        report::write_atomic(dir, &[report::Artifact { name: "check.json".into(), contents: text.clone() }])?;
    }
    print!("{text}");
    for r in &results {
        match &r.failure {
            None => eprintln!("PASS {}", r.suite.name()),
            Some(f) => eprintln!("FAIL {}: {f}", r.suite.name()),
        }
    }
    Ok(if results.iter().all(|r| r.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn classify(a: ClassifyArgs) -> Result<ExitCode, Error> {
    let sys = load_system(&a.system)?;
    let verdict = match classify_at_depth(&sys, a.depth, Dist::pow(a.eps)) {
        Ok(Evidence::Equicontinuous) => "equicontinuous".to_string(),
        Ok(Evidence::Expansive { eps }) => format!("expansive (eps = {eps})"),
        Err(Error::Inconclusive) => "inconclusive".to_string(),
        Err(e) => return Err(e),
    };
    println!("{}", json!({"system": sys.name, "depth": a.depth, "evidence": verdict}));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Build(a) => build(a),
        Cmd::Check(a) => check(a),
        Cmd::Classify(a) => classify(a),
    };
    r.unwrap_or_else(|e| exit_for(&e))
}
