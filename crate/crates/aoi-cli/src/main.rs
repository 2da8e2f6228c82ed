//! `aoi`: threshold optimization, MDP solves, simulation, parameter sweeps
//! and the validation suite for the age-of-information storage trade-off.
//!
//! Exit codes: 0 success, 1 failed check or non-convergence, 2 usage error.

mod oracle;
mod output;
mod record;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use aoi_core::closed_form::ThresholdPolicy;
use aoi_core::mdp;
use aoi_core::optimizer;
use aoi_core::{ParamError, SystemParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

use record::RunRecord;

#[derive(Parser)]
#[command(
    name = "aoi",
    version,
    about = "Age-of-information vs. storage cost on an erasure channel: \
             solvers, simulator, and validation suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the optimal storage threshold for one parameter set
    Optimize(OptimizeArgs),
    /// Optimal threshold along a swept parameter axis, as CSV
    Sweep(SweepArgs),
    /// Solve the truncated MDP and report gain and policy structure
    SolveMdp(SolveMdpArgs),
    /// Monte Carlo simulation of a threshold policy, as CSV
    Simulate(SimulateArgs),
    /// Run the validation suite
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// Per-slot packet arrival probability, in (0,1)
    #[arg(long)]
    p: f64,
    /// Per-slot delivery success probability, in (0,1)
    #[arg(long)]
    q: f64,
    /// Storage cost per stored packet, >= 0
    #[arg(long)]
    c: f64,
}

impl ParamArgs {
    fn build(&self) -> Result<SystemParams, ParamError> {
        SystemParams::new(self.p, self.q, self.c)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Exhaustive scan instead of the bracketed search
    #[arg(long)]
    brute_force: bool,
    /// Scan bound for --brute-force
    #[arg(long, default_value_t = optimizer::DEFAULT_SEARCH_BOUND)]
    v_search: u32,
    /// Emit JSON instead of CSV
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Axis {
    P,
    Q,
    C,
}

#[derive(Args)]
struct SweepArgs {
    /// Swept parameter
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma list ("0.1,0.2,0.5") or range ("0.1:0.9:0.1"), strictly increasing
    #[arg(long)]
    values: String,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    brute_force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveMdpArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Age truncation of the solved MDP
    #[arg(long, default_value_t = mdp::DEFAULT_V_MAX)]
    v_max: u32,
    #[arg(long, default_value_t = mdp::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = mdp::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Solve the discounted problem at this factor and check value
    /// monotonicity, instead of the average-cost problem
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Storage threshold (>= 1)
    #[arg(long, conflicts_with = "never")]
    v_bar: Option<u32>,
    /// Never store
    #[arg(long)]
    never: bool,
    #[arg(long, default_value_t = 1_000_000)]
    horizon: u64,
    /// Slots discarded before averaging
    #[arg(long, default_value_t = 10_000)]
    burn_in: u64,
    /// Comma list ("1,2,3") or inclusive range ("1..5")
    #[arg(long, default_value = "1..5")]
    seeds: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Reduced grids and horizons (smoke test)
    #[arg(long)]
    quick: bool,
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn run_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), std::io::Error> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::SolveMdp(args) => cmd_solve_mdp(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn cmd_optimize(args: OptimizeArgs) -> ExitCode {
    let params = match args.params.build() {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let result = if args.brute_force {
        if args.v_search < 2 {
            return usage_error("--v-search must be >= 2");
        }
        optimizer::brute_force_threshold(&params, args.v_search)
    } else {
        optimizer::find_optimal_threshold(&params)
    };
    let result = match result {
        Ok(r) => r,
        Err(e) => return run_error(e),
    };
    let rec = RunRecord::from_result(&params, &result);
    let text = if args.json {
        let mut s = serde_json::to_string_pretty(&rec).expect("record serializes");
        s.push('\n');
        s
    } else {
        format!("{}\n{}\n", RunRecord::csv_header(), rec.to_csv_row())
    };
    match emit(&text, args.out.as_ref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => run_error(e),
    }
}

fn parse_values(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err("--values must not be empty".into());
    }
    let parts: Vec<f64> = if spec.contains(':') {
        let fields: Vec<&str> = spec.split(':').collect();
        if fields.len() != 3 {
            return Err(format!("range must be start:stop:step, got {spec:?}"));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("bad value {s:?}: {e}"));
        let (start, stop, step) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
        if step <= 0.0 {
            return Err("range step must be > 0".into());
        }
        let n = ((stop - start) / step + 1.5).floor() as i64;
        if n < 1 {
            return Err(format!("empty range {spec:?}"));
        }
        (0..n).map(|k| start + step * k as f64).filter(|&x| x <= stop + step * 1e-9).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad value {s:?}: {e}")))
            .collect::<Result<_, _>>()?
    };
    if parts.is_empty() {
        return Err("--values must not be empty".into());
    }
    if parts.windows(2).any(|w| w[1] <= w[0]) {
        return Err("--values must be strictly increasing".into());
    }
    Ok(parts)
}

fn cmd_sweep(args: SweepArgs) -> ExitCode {
    let values = match parse_values(&args.values) {
        Ok(v) => v,
        Err(e) => return usage_error(e),
    };
    let (axis_name, fixed) = match args.axis {
        Axis::P => ("p", (args.p, args.q, args.c)),
        Axis::Q => ("q", (args.q, args.p, args.c)),
        Axis::C => ("c", (args.c, args.p, args.q)),
    };
    if fixed.0.is_some() {
        return usage_error(format!("--{axis_name} cannot be fixed while sweeping it"));
    }
    // probe each swept value through the normal constructor
    let build: Box<dyn Fn(f64) -> Result<SystemParams, ParamError>> = match args.axis {
        Axis::P => {
            let (q, c) = match (args.q, args.c) {
                (Some(q), Some(c)) => (q, c),
                _ => return usage_error("sweeping p requires fixed --q and --c"),
            };
            Box::new(move |p| SystemParams::new(p, q, c))
        }
        Axis::Q => {
            let (p, c) = match (args.p, args.c) {
                (Some(p), Some(c)) => (p, c),
                _ => return usage_error("sweeping q requires fixed --p and --c"),
            };
            Box::new(move |q| SystemParams::new(p, q, c))
        }
        Axis::C => {
            let (p, q) = match (args.p, args.q) {
                (Some(p), Some(q)) => (p, q),
                _ => return usage_error("sweeping c requires fixed --p and --q"),
            };
            Box::new(move |c| SystemParams::new(p, q, c))
        }
    };
    for &x in &values {
        if let Err(e) = build(x) {
            return usage_error(format!("swept value {x}: {e}"));
        }
    }
    let csv = match output::sweep_csv(axis_name, &values, |x| build(x).unwrap(), args.brute_force)
    {
        Ok(csv) => csv,
        Err(e) => return run_error(e),
    };
    match emit(&csv, args.out.as_ref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => run_error(e),
    }
}

fn cmd_solve_mdp(args: SolveMdpArgs) -> ExitCode {
    let params = match args.params.build() {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    if let Some(alpha) = args.alpha {
        let solved =
            mdp::discounted_value_iteration(&params, alpha, args.v_max, args.tol, args.max_iter);
        let (table, report) = match solved {
            Ok(r) => r,
            Err(e) => return usage_error(e),
        };
        println!("alpha: {alpha}");
        println!("iterations: {}", report.iterations);
        println!("residual: {:e}", report.residual);
        println!("converged: {}", report.converged);
        if !report.converged {
            return run_error(format!(
                "discounted value iteration did not converge (residual {:e})",
                report.residual
            ));
        }
        let violations = mdp::check_monotone_in_age(&table);
        if violations.is_empty() {
            println!("monotone in age: yes");
        } else {
            println!("monotone in age: no ({} violations)", violations.len());
            return ExitCode::from(1);
        }
        return ExitCode::SUCCESS;
    }
    let solved = mdp::relative_value_iteration(&params, args.v_max, args.tol, args.max_iter);
    let (_, policy, report) = match solved {
        Ok(r) => r,
        Err(e) => return usage_error(e),
    };
    println!("gain: {}", report.gain.unwrap());
    match mdp::extract_threshold(&policy) {
        mdp::ThresholdExtraction::Threshold { v_bar } => println!("threshold: {v_bar}"),
        mdp::ThresholdExtraction::Never => println!("threshold: inf"),
        mdp::ThresholdExtraction::NotThreshold { age } => {
            println!("threshold: none (first violation at age {age})")
        }
    }
    println!("iterations: {}", report.iterations);
    println!("residual: {:e}", report.residual);
    println!("converged: {}", report.converged);
    if !report.converged {
        return run_error(format!(
            "relative value iteration did not converge (residual {:e})",
            report.residual
        ));
    }
    ExitCode::SUCCESS
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.parse().map_err(|e| format!("bad seed {a:?}: {e}"))?;
        let hi: u64 = b.parse().map_err(|e| format!("bad seed {b:?}: {e}"))?;
        if lo > hi {
            return Err(format!("empty seed range {spec:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    let seeds: Vec<u64> = spec
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| format!("bad seed {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err("--seeds must not be empty".into());
    }
    Ok(seeds)
}

fn cmd_simulate(args: SimulateArgs) -> ExitCode {
    let params = match args.params.build() {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let policy = match (args.v_bar, args.never) {
        (Some(v), false) if v >= 1 => ThresholdPolicy::AtAge(v),
        (Some(_), false) => return usage_error("--v-bar must be >= 1"),
        (None, true) => ThresholdPolicy::Never,
        (None, false) => return usage_error("one of --v-bar or --never is required"),
        (Some(_), true) => unreachable!("clap conflict"),
    };
    let seeds = match parse_seeds(&args.seeds) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    if args.horizon <= args.burn_in {
        return usage_error(format!(
            "horizon ({}) must be greater than burn-in ({})",
            args.horizon, args.burn_in
        ));
    }
    let csv = match output::simulate_csv(&params, &policy, args.horizon, args.burn_in, &seeds) {
        Ok(csv) => csv,
        Err(e) => return usage_error(e),
    };
    match emit(&csv, args.out.as_ref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => run_error(e),
    }
}

fn cmd_validate(args: ValidateArgs) -> ExitCode {
    let mode = if args.quick {
        validate::Mode::Quick
    } else {
        validate::Mode::Full
    };
    let checks = validate::run_all(mode);
    print!("{}", validate::render_report(&checks));
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
