//! Command-line front end: equivalence runs, benchmarks, sustainability
//! search, the experiment sweep, and single pipeline runs. All logic
//! lives in the library; this binary parses flags, resolves the
//! configuration, dispatches, and maps outcomes to exit codes
//! (0 success/PASS, 1 FAIL, 2 configuration error).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aggstream::agg::LoopVariant;
use aggstream::error::Error;
use aggstream::exec::{run_deterministic, RunOptions};
use aggstream::harness::{
    config::ConfigFile, equiv, find_max_sustainable, run_bench, run_equivalence, run_sweep,
    sweep::trend_report, SweepOptions, WorkloadConfig,
};

#[derive(Parser)]
#[command(name = "aggstream", version, about = "Stream engine built on one minimal Aggregate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// TOML workload config (versioned; flags override file values).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// dedicated | agg | agg-plus
    #[arg(long, global = true)]
    mode: Option<String>,
    /// F | M | FM | J | O
    #[arg(long, global = true)]
    op: Option<String>,
    /// Injection rate in records per second (per stream).
    #[arg(long, global = true)]
    rate: Option<f64>,
    /// Benchmark duration in seconds.
    #[arg(long, global = true)]
    duration: Option<u64>,
    /// Warmup seconds excluded from results.
    #[arg(long, global = true)]
    warmup: Option<u64>,
    /// Cooldown seconds excluded from results.
    #[arg(long, global = true)]
    cooldown: Option<u64>,
    /// Ingress watermark period in ticks.
    #[arg(long = "wm-period", global = true)]
    wm_period: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV output path (bench) or directory (sweep).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run the literal loop formulations instead of the repaired ones.
    #[arg(long = "strict-paper-listings", global = true)]
    strict_paper_listings: bool,
    /// Disable the loop guards (fault injection).
    #[arg(long = "no-guards", global = true)]
    no_guards: bool,
    /// Input size for equiv and run.
    #[arg(long, global = true)]
    records: Option<u64>,
    #[arg(long, global = true)]
    selectivity: Option<f64>,
    /// Busy-loop iterations per user-function call.
    #[arg(long, global = true)]
    cost: Option<u64>,
    /// Window advance in ticks.
    #[arg(long, global = true)]
    wa: Option<u64>,
    /// Window size in ticks.
    #[arg(long, global = true)]
    ws: Option<u64>,
    /// Allowed lateness in ticks.
    #[arg(long, global = true)]
    lateness: Option<u64>,
    /// Output period of operator O in ticks.
    #[arg(long, global = true)]
    period: Option<u64>,
    /// sum | max | count (operator O).
    #[arg(long, global = true)]
    fold: Option<String>,
    #[arg(long = "key-cardinality", global = true)]
    key_cardinality: Option<u64>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long = "latency-cap-ms", global = true)]
    latency_cap_ms: Option<f64>,
    #[arg(long = "max-violations", global = true)]
    max_violations: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run dedicated vs aggregate-composed builds on one input and
    /// compare output multisets.
    Equiv,
    /// One wall-clock benchmark run at the configured rate.
    Bench,
    /// Search an ascending rate grid for the maximum sustainable rate.
    Sustain {
        /// Comma-separated ascending rates to try.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
    /// The full selectivity x cost x operator grid across all modes.
    Sweep,
    /// Execute one pipeline deterministically and print its outputs.
    Run,
}

fn resolve(overrides: &Overrides) -> aggstream::Result<WorkloadConfig> {
    let mut cfg = WorkloadConfig::default();
    if let Some(path) = &overrides.config {
        let text = std::fs::read_to_string(path)?;
        cfg = ConfigFile::parse(&text)?.apply(cfg)?;
    }
    if let Some(v) = &overrides.op {
        cfg.operator = v.parse()?;
    }
    if let Some(v) = &overrides.mode {
        cfg.mode = v.parse()?;
    }
    if let Some(v) = &overrides.fold {
        cfg.fold = v.parse()?;
    }
    macro_rules! take {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = overrides.$flag { cfg.$field = v; })*
        };
    }
    take!(
        rate => rate, duration => duration_secs, warmup => warmup_secs,
        cooldown => cooldown_secs, wm_period => wm_period, seed => seed,
        records => records, selectivity => selectivity, cost => cost,
        wa => wa, ws => ws, lateness => lateness, period => period,
        key_cardinality => key_cardinality, parallelism => parallelism,
        latency_cap_ms => latency_cap_ms, max_violations => max_violations
    );
    if overrides.strict_paper_listings {
        cfg.variant = LoopVariant::Literal;
    }
    if overrides.no_guards {
        cfg.guards = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli, cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Graph { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: &Cli, cfg: WorkloadConfig) -> aggstream::Result<ExitCode> {
    match &cli.command {
        Command::Equiv => {
            let report = run_equivalence(&cfg)?;
            print!("{}", report.render());
            if report.pass {
                println!("PASS: output multisets equal across modes");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("FAIL: output multisets differ");
                Ok(ExitCode::from(1))
            }
        }
        Command::Bench => {
            let summary = run_bench(&cfg)?;
            if let Some(path) = &cli.overrides.out {
                std::fs::write(path, summary.to_csv())?;
                println!("wrote {}", path.display());
            } else {
                print!("{}", summary.to_csv());
            }
            println!(
                "mean injected {:.0}/s, throughput {:.0}/s, p99 {:.2} ms, {} cap violations, sustainable: {} (D={} ticks)",
                summary.mean_injected,
                summary.mean_throughput,
                summary.overall_p99_ms,
                summary.violations,
                summary.sustainable,
                cfg.wm_period,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sustain { rates } => {
            let grid = rates.clone().unwrap_or_else(|| SweepOptions::default().rate_grid);
            let (best, attempts) = find_max_sustainable(&cfg, &grid)?;
            for (rate, summary) in &attempts {
                println!(
                    "rate {rate:.0}/s: throughput {:.0}/s, p99 {:.2} ms, violations {}, sustainable {}",
                    summary.mean_throughput,
                    summary.overall_p99_ms,
                    summary.violations,
                    summary.sustainable,
                );
            }
            match best {
                Some(rate) => {
                    println!("max sustainable rate: {rate:.0}/s");
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("no rate in the grid is sustainable");
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Sweep => {
            let out_dir = cli.overrides.out.clone().unwrap_or_else(|| PathBuf::from("sweep-out"));
            let cells = run_sweep(&cfg, &SweepOptions::default(), Some(&out_dir))?;
            print!("{}", trend_report(&cells));
            println!("wrote {} cells to {}", cells.len(), out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run => {
            let graph = equiv::build_pipeline(&cfg, cfg.mode)?;
            let inputs = equiv::shared_inputs(&cfg, &[&graph]);
            let outcome = run_deterministic(&graph, inputs, &RunOptions::default())?;
            for el in &outcome.egress {
                println!("{el}");
            }
            eprintln!(
                "{} elements at egress ({} tuples), {} scheduler steps",
                outcome.egress.len(),
                outcome.egress_tuples().count(),
                outcome.stats.steps,
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
