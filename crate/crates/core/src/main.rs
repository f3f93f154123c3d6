use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gtn_core::gtn::{run_equivalence_suite, SuiteSize};
use gtn_core::harness::{self, ExperimentConfig, Family, SyntheticSpec};
use gtn_core::par::Exec;
use gtn_core::tt::{self, TensorizationPlan};

#[derive(Parser)]
#[command(name = "gtn", version, about = "Graph tensor network engine")]
struct Cli {
    /// Evaluate independent samples on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the model described by a JSON config.
    Run(RunArgs),
    /// Finite-difference gradient check.
    Check(CheckArgs),
    /// Classical layers against their GTN forms on random instances.
    Equiv(EquivArgs),
    /// Dense vs tensor-train parameter counts for a matrix.
    Compress(CompressArgs),
    /// Generate a synthetic teacher data set as CSV files.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run gtn, rnn_baseline and gcn_baseline on the same data.
    #[arg(long)]
    all_families: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Check analytic gradients against central differences.
    #[arg(long, required = true)]
    grad: bool,
    /// Model config; defaults to the desk-scale gtn model.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 4)]
    samples: usize,
    /// Check the baselines as well.
    #[arg(long)]
    all_families: bool,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 50)]
    rnn_instances: usize,
}

#[derive(Args)]
struct CompressArgs {
    /// K, rows of the weight matrix.
    #[arg(long)]
    rows: usize,
    /// J, columns of the weight matrix.
    #[arg(long)]
    cols: usize,
    /// Factors `K_1,..,K_N`, or `K_1,..,K_N:J_1,..,J_N` when they differ.
    #[arg(long)]
    plan: String,
    /// One rank for every bond, or `R_1,..,R_{N-1}`.
    #[arg(long)]
    ranks: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("{what}: cannot parse {t:?} as a positive integer"))
        })
        .collect()
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn compress(args: &CompressArgs) -> Result<(), String> {
    let (row_part, col_part) = match args.plan.split_once(':') {
        Some((r, c)) => (r, c),
        None => (args.plan.as_str(), args.plan.as_str()),
    };
    let rf = parse_list(row_part, "--plan")?;
    let cf = parse_list(col_part, "--plan")?;
    let plan = TensorizationPlan::for_matrix(args.rows, args.cols, rf, cf).map_err(|e| e.to_string())?;
    let given = parse_list(&args.ranks, "--ranks")?;
    let bonds = plan.num_cores() - 1;
    let ranks = if given.len() == 1 { vec![given[0]; bonds] } else { given };
    if ranks.contains(&0) {
        return Err("--ranks: ranks must be >= 1".into());
    }
    let tt_count = tt::tt_param_count_for(&plan, &ranks).map_err(|e| e.to_string())?;
    let dense = tt::dense_param_count(&plan);
    let ratio = 100.0 * (1.0 - tt_count as f64 / dense as f64);
    println!("dense={} TT={} compression={:.2}%", thousands(dense), thousands(tt_count), ratio);
    let bounds = plan.max_ranks();
    if ranks.iter().zip(&bounds).any(|(r, b)| r > b) {
        eprintln!("note: ranks {ranks:?} exceed the useful bounds {bounds:?}");
    }
    Ok(())
}

fn run(args: &RunArgs, exec: Exec) -> Result<(), String> {
    let cfg = ExperimentConfig::load(&args.config).map_err(|e| e.to_string())?;
    let families = if args.all_families { Family::ALL.to_vec() } else { vec![cfg.family] };
    let mut reports = Vec::new();
    for family in families {
        let mut c = cfg.clone();
        c.family = family;
        reports.push(harness::run_experiment(&c, exec).map_err(|e| format!("{}: {e}", family.label()))?);
    }
    print!("{}", harness::render_table(&reports));
    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(&reports)
    }
    .map_err(|e| e.to_string())?;
    match &args.report {
        Some(path) => std::fs::write(path, json).map_err(|e| format!("{}: {e}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn check(args: &CheckArgs, exec: Exec) -> Result<bool, String> {
    let base = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| e.to_string())?,
        None => ExperimentConfig::desk_default(Family::Gtn),
    };
    let families = if args.all_families { Family::ALL.to_vec() } else { vec![base.family] };
    let mut all_ok = true;
    for family in families {
        let mut cfg = base.clone();
        cfg.family = family;
        let r = harness::grad_check(&cfg, args.samples, args.h, args.tolerance, exec).map_err(|e| e.to_string())?;
        println!("{} model, {} entries, h = {:e}", family.label(), r.entries_checked, r.h);
        println!("  {:<14} {:>7} {:>14} {:>14}", "parameter", "size", "max rel err", "max abs err");
        for p in &r.per_param {
            println!(
                "  {:<14} {:>7} {:>14.3e} {:>14.3e}",
                p.name, p.entries, p.max_rel_error, p.max_abs_error
            );
        }
        println!(
            "max relative error: {:.3e} (tolerance {:e}) {}",
            r.max_rel_error,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
        all_ok &= r.passed;
    }
    Ok(all_ok)
}

fn equiv(args: &EquivArgs, exec: Exec) -> Result<bool, String> {
    let size = SuiteSize {
        direct: args.instances,
        rnn: args.rnn_instances,
    };
    let report = run_equivalence_suite(args.seed, size, exec).map_err(|e| e.to_string())?;
    println!("{:<28} {:>9} {:>14} {:>10}  result", "case", "instances", "max |diff|", "tolerance");
    for c in &report.cases {
        let tol = if c.exact { "exact".to_string() } else { format!("{:e}", c.tolerance) };
        println!(
            "{:<28} {:>9} {:>14.3e} {:>10}  {}",
            c.name,
            c.instances,
            c.max_abs_error,
            tol,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(report.all_passed())
}

fn synth(args: &SynthArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| format!("{}: {e}", args.spec.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", args.spec.display()))?;
    let data = harness::synth_generate(&spec).map_err(|e| e.to_string())?;
    for p in harness::write_synthetic(&data, &spec, &args.out).map_err(|e| e.to_string())? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let outcome = match &cli.command {
        Command::Run(a) => run(a, exec).map(|_| true),
        Command::Check(a) => check(a, exec),
        Command::Equiv(a) => equiv(a, exec),
        Command::Compress(a) => compress(a).map(|_| true),
        Command::Synth(a) => synth(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
