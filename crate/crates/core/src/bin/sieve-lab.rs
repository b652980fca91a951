use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sieve_lab::exact::{self, EnumerationOptions, FiniteMarginals, LimitMarginalOptions, Pattern};
use sieve_lab::par::{with_workers, Execution, DEFAULT_SEED};
use sieve_lab::point_process::{replicate_limit_kr, replicate_limit_z, StopParams};
use sieve_lab::sieve::{replicate, ReplicateConfig, Statistic};
use sieve_lab::stats::EmpiricalPmf;
use sieve_lab::verify::{run_law_checks, run_suite, CriterionResult, Suite, VerifyConfig};
use sieve_lab::{Extended, StickLaw};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Exact and Monte Carlo experiments for the Bernoulli sieve.
#[derive(Parser, Debug)]
#[command(name = "sieve-lab", version)]
struct Cli {
    /// Stick law: uniform, beta-theta:T, beta:A,B, heavy:A or mixture:W*beta:A,B+...
    #[arg(long, global = true, default_value = "uniform")]
    law: String,

    /// Master seed; decimal or 0x-prefixed hex.
    #[arg(long, global = true, env = "SIEVE_LAB_SEED", value_parser = parse_seed, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads for replicate loops (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// mu, nu and the joint moments E[W^a (1-W)^b] for a + b <= max-order.
    Moments {
        #[arg(long, default_value_t = 6)]
        max_order: u32,
    },
    /// Exact pattern probabilities for n balls.
    ExactPattern(ExactPatternArgs),
    /// Limit law of the first counts or of one coordinate.
    LimitPmf(LimitPmfArgs),
    /// E[K_r*] for r = 0..=r-max.
    ExpectedKr {
        #[arg(long, visible_alias = "rmax", default_value_t = 3)]
        r_max: u32,
    },
    /// Monte Carlo of the finite sieve.
    SimulateSieve(SimulateSieveArgs),
    /// Monte Carlo of the limit model.
    SimulateLimit(SimulateLimitArgs),
    /// Runs a verification suite; exits nonzero unless every check passes.
    Verify {
        #[arg(long, default_value = "basic")]
        suite: Suite,
        /// Run the law-generic checks for --law instead of the fixed suite.
        #[arg(long)]
        law_checks: bool,
    },
}

#[derive(Args, Debug)]
struct ExactPatternArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, visible_alias = "kmax", default_value_t = 40)]
    k_max: u32,
    /// Single pattern such as 2-0-1; its total must equal n.
    #[arg(long)]
    pattern: Option<Pattern>,
    /// Emit marginal laws of Z, I_n, K_n and K_{n,r} instead of patterns.
    #[arg(long)]
    marginals: bool,
    #[arg(long, default_value_t = 5_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 1e-16)]
    prune_floor: f64,
}

#[derive(Args, Debug)]
struct LimitPmfArgs {
    /// First counts n_1-...-n_l.
    #[arg(long, conflicts_with_all = ["coordinate", "marginal"])]
    parts: Option<Pattern>,
    /// Coordinate l of a single marginal.
    #[arg(long, conflicts_with = "marginal")]
    coordinate: Option<u32>,
    /// Shorthand for --coordinate L --cap CAP.
    #[arg(long, num_args = 2, value_names = ["L", "CAP"])]
    marginal: Option<Vec<u32>>,
    #[arg(long, default_value_t = 50)]
    cap: u32,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct SimulateSieveArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, visible_alias = "reps", default_value_t = 10_000)]
    replicates: u64,
    /// pattern, z-prefix:L (z for L = 8), r-counts (kr), depth or occupied; default depends on n.
    #[arg(long, visible_alias = "stat", value_parser = parse_statistic)]
    statistic: Option<Statistic>,
    #[arg(long, visible_alias = "rmax", default_value_t = 2)]
    r_max: u32,
}

#[derive(Args, Debug)]
struct SimulateLimitArgs {
    #[arg(long, visible_alias = "reps", default_value_t = 10_000)]
    replicates: u64,
    /// Tabulate (Z^(1), ..., Z^(L)).
    #[arg(long, visible_alias = "depth", conflicts_with = "kr")]
    z_prefix: Option<usize>,
    /// Average K_r* for r <= R instead.
    #[arg(long)]
    kr: Option<u32>,
    #[arg(long, default_value_t = 12)]
    consecutive: usize,
    #[arg(long, default_value_t = 4.0)]
    factor: f64,
    #[arg(long, default_value_t = 1_000_000)]
    gap_budget: u64,
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| format!("bad seed {s:?}: {e}"))
}

fn parse_statistic(s: &str) -> std::result::Result<Statistic, String> {
    match s {
        "pattern" => Ok(Statistic::Pattern),
        "z" => Ok(Statistic::ZPrefix(8)),
        "r-counts" | "kr" => Ok(Statistic::RCounts),
        "depth" => Ok(Statistic::Depth),
        "occupied" => Ok(Statistic::Occupied),
        _ => match s.strip_prefix("z-prefix:").map(str::parse::<usize>) {
            Some(Ok(len)) if len > 0 => Ok(Statistic::ZPrefix(len)),
            _ => Err(format!("unknown statistic {s:?}")),
        },
    }
}

struct Output {
    data: Value,
    csv: String,
    success: bool,
}

impl Output {
    fn ok(data: Value, csv: String) -> Self {
        Self { data, csv, success: true }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).context("serializing result")
}

fn empirical_csv(pmf: &EmpiricalPmf<Vec<u32>>) -> String {
    let mut out = String::from("key,count,frequency,se\n");
    for (k, &c) in pmf.counts() {
        let key: Vec<String> = k.iter().map(u32::to_string).collect();
        out.push_str(&format!("{},{c},{},{}\n", key.join("-"), pmf.frequency(k), pmf.standard_error(k)));
    }
    out
}

fn moments(law: &StickLaw, max_order: u32) -> Result<Output> {
    let mut rows = Vec::new();
    let mut csv = String::from("a,b,moment\n");
    for total in 0..=max_order {
        for a in 0..=total {
            let b = total - a;
            let m = law.joint_moment(a, b)?;
            rows.push(json!({ "a": a, "b": b, "moment": m }));
            csv.push_str(&format!("{a},{b},{m}\n"));
        }
    }
    let data = json!({ "mu": law.mu()?, "nu": law.nu()?, "moments": rows });
    Ok(Output::ok(data, csv))
}

fn exact_pattern(law: &StickLaw, args: &ExactPatternArgs) -> Result<Output> {
    if let Some(p) = &args.pattern {
        if p.total() != args.n {
            bail!("pattern {p} has {} balls, expected n = {}", p.total(), args.n);
        }
        let prob = exact::pattern_prob(law, p)?;
        return Ok(Output::ok(
            json!({ "pattern": p, "probability": prob }),
            format!("pattern,probability\n{p},{prob}\n"),
        ));
    }
    let opts = EnumerationOptions {
        budget: args.budget,
        prune_floor: args.prune_floor,
        execution: Execution::Parallel,
    };
    let pmf = exact::enumerate_finite(law, args.n, args.k_max, &opts)?;
    if args.marginals {
        let m = FiniteMarginals::from_pmf(&pmf, args.k_max as usize);
        let mut csv = String::from("statistic,value,probability\n");
        for (i, table) in m.z.iter().enumerate() {
            for (v, p) in table {
                csv.push_str(&format!("Z{},{v},{p}\n", i + 1));
            }
        }
        for (name, table) in [("I", &m.depth), ("K", &m.occupied)] {
            for (v, p) in table {
                csv.push_str(&format!("{name},{v},{p}\n"));
            }
        }
        for (r, table) in m.r_counts.iter().enumerate() {
            for (v, p) in table {
                csv.push_str(&format!("K_{r},{v},{p}\n"));
            }
        }
        return Ok(Output::ok(to_value(&m)?, csv));
    }
    Ok(Output::ok(pmf.to_json(), pmf.to_csv()))
}

fn limit_pmf(law: &StickLaw, args: &LimitPmfArgs) -> Result<Output> {
    if let Some(p) = &args.parts {
        let prob = exact::limit_pmf(law, p.parts())?;
        return Ok(Output::ok(
            json!({ "parts": p, "probability": prob }),
            format!("parts,probability\n{p},{prob}\n"),
        ));
    }
    let (coordinate, cap) = match (&args.marginal, args.coordinate) {
        (Some(m), _) => (m[0], m[1]),
        (None, Some(c)) => (c, args.cap),
        (None, None) => bail!("limit-pmf needs --parts, --coordinate or --marginal"),
    };
    let opts = LimitMarginalOptions {
        tolerance: args.tolerance,
        ..LimitMarginalOptions::default()
    };
    let m = exact::limit_marginal(law, coordinate, cap, &opts)?;
    let mut csv = String::from("value,probability\n");
    for (v, p) in &m.pmf {
        csv.push_str(&format!("{v},{p}\n"));
    }
    Ok(Output::ok(to_value(&m)?, csv))
}

fn expected_kr(law: &StickLaw, r_max: u32) -> Result<Output> {
    let mut rows = Vec::new();
    let mut csv = String::from("r,expected\n");
    for r in 0..=r_max {
        let e: Extended = exact::expected_kr(law, r)?;
        rows.push(json!({ "r": r, "expected": e }));
        csv.push_str(&format!("{r},{e}\n"));
    }
    Ok(Output::ok(json!({ "rows": rows }), csv))
}

fn simulate_sieve(law: &StickLaw, seed: u64, args: &SimulateSieveArgs) -> Result<Output> {
    let config = ReplicateConfig {
        statistic: args.statistic.unwrap_or(Statistic::default_for(args.n)),
        r_max: args.r_max,
        ..ReplicateConfig::new(args.n, args.replicates, seed)
    };
    let s = replicate(law, &config)?;
    let means: Vec<Value> = s
        .r_counts
        .iter()
        .enumerate()
        .map(|(r, m)| json!({ "r": r, "mean": m.mean(), "se": m.standard_error() }))
        .collect();
    let data = json!({
        "n": s.n,
        "statistic": s.statistic,
        "pmf": s.pmf,
        "r_count_means": means,
        "depth": s.depth.estimate(),
        "occupied": s.occupied.estimate(),
    });
    Ok(Output::ok(data, empirical_csv(&s.pmf)))
}

fn simulate_limit(law: &StickLaw, seed: u64, args: &SimulateLimitArgs) -> Result<Output> {
    if let Some(r_max) = args.kr {
        let stop = StopParams {
            consecutive: args.consecutive,
            factor: args.factor,
            gap_budget: args.gap_budget,
        };
        let s = replicate_limit_kr(law, r_max, &stop, args.replicates, seed, Execution::Parallel)?;
        let mut rows = Vec::new();
        let mut csv = String::from("r,mean,se\n");
        match &s.k0 {
            Some(m) => {
                rows.push(json!({ "r": 0, "mean": m.mean(), "se": m.standard_error() }));
                csv.push_str(&format!("0,{},{}\n", m.mean(), m.standard_error()));
            }
            None => {
                rows.push(json!({ "r": 0, "mean": Extended::Infinite }));
                csv.push_str("0,inf,\n");
            }
        }
        for (i, m) in s.positive.iter().enumerate() {
            rows.push(json!({ "r": i + 1, "mean": m.mean(), "se": m.standard_error() }));
            csv.push_str(&format!("{},{},{}\n", i + 1, m.mean(), m.standard_error()));
        }
        let data = json!({
            "replicates": s.replicates(),
            "stop": stop,
            "means": rows,
            "unconfident": s.unconfident,
            "max_gaps_scanned": s.max_gaps_scanned,
        });
        return Ok(Output::ok(data, csv));
    }
    let len = args.z_prefix.unwrap_or(2);
    let pmf = replicate_limit_z(law, len, args.replicates, seed, Execution::Parallel)?;
    Ok(Output::ok(json!({ "z_prefix": len, "pmf": pmf }), empirical_csv(&pmf)))
}

fn verify(law: &StickLaw, seed: u64, suite: Suite, law_checks: bool) -> Result<Output> {
    let cfg = VerifyConfig::new(suite, seed);
    let results: Vec<CriterionResult> = if law_checks {
        run_law_checks(law, &cfg)
    } else {
        run_suite(&cfg)
    };
    let mut csv = String::from("id,name,passed,summary\n");
    for r in &results {
        eprintln!("[{}] {:>2} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.id, r.name, r.summary);
        csv.push_str(&format!("{},{},{},\"{}\"\n", r.id, r.name, r.passed, r.summary.replace('"', "'")));
    }
    let success = results.iter().all(|r| r.passed);
    Ok(Output {
        data: json!({ "suite": suite, "passed": success, "criteria": results }),
        csv,
        success,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Moments { .. } => "moments",
        Command::ExactPattern(_) => "exact-pattern",
        Command::LimitPmf(_) => "limit-pmf",
        Command::ExpectedKr { .. } => "expected-kr",
        Command::SimulateSieve(_) => "simulate-sieve",
        Command::SimulateLimit(_) => "simulate-limit",
        Command::Verify { .. } => "verify",
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let law: StickLaw = cli.law.parse().with_context(|| format!("parsing law {:?}", cli.law))?;
    let started = Instant::now();
    let out = with_workers(cli.workers, || -> Result<Output> {
        match &cli.command {
            Command::Moments { max_order } => moments(&law, *max_order),
            Command::ExactPattern(a) => exact_pattern(&law, a),
            Command::LimitPmf(a) => limit_pmf(&law, a),
            Command::ExpectedKr { r_max } => expected_kr(&law, *r_max),
            Command::SimulateSieve(a) => simulate_sieve(&law, cli.seed, a),
            Command::SimulateLimit(a) => simulate_limit(&law, cli.seed, a),
            Command::Verify { suite, law_checks } => verify(&law, cli.seed, *suite, *law_checks),
        }
    })?;
    eprintln!("{} finished in {:.2?}", command_name(&cli.command), started.elapsed());
    let text = match cli.format {
        Format::Json => {
            let doc = json!({
                "meta": {
                    "law": law.to_string(),
                    "seed": cli.seed,
                    "command": command_name(&cli.command),
                    "version": env!("CARGO_PKG_VERSION"),
                },
                "data": out.data,
            });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        Format::Csv => out.csv,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(out.success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
