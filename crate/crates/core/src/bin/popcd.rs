//! Command-line harness: `run`, `sweep`, `calibrate` and `states`.
//!
//! Exit status is 0 on success, 1 on a usage or input error and 2 when a run
//! breaks a safety property (a false positive, a lowered output bit in a
//! monotone run, or an estimator contract violation).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popcd::cdwb::Mode;
use popcd::engine::{InputKind, TrialReport};
use popcd::experiments::calibrate::{calibrate, Target};
use popcd::experiments::output::{write_csv, write_json, write_trace};
use popcd::experiments::{
    run_single, summarize, sweep, ProtocolConfig, ProtocolKind, SweepSpec, TrialSpec,
};
use popcd::primitives::LeaderAssignment;
use popcd::sizing::EstimatorKind;
use popcd::Error;

#[derive(Parser)]
#[command(name = "popcd", version, about = "Collision detection population protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded trial; prints a CSV row.
    Run(RunArgs),
    /// Trials over a list of population sizes.
    Sweep(SweepArgs),
    /// Sweep a constant and report the smallest passing value.
    Calibrate(CalibrateArgs),
    /// Maximum state bits per trial, excluding the rank.
    States(SweepArgs),
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
    let parse = |x: &str| x.trim().parse::<T>().map_err(|_| format!("bad value {x:?}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    #[arg(long, default_value = "cold")]
    protocol: ProtocolKind,
    #[arg(long, default_value = "distinct")]
    input: InputKind,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    m: Option<u16>,
    #[arg(long)]
    estimator: Option<EstimatorKind>,
    /// Bound offsets cL,cU for the composed protocol.
    #[arg(long, value_parser = parse_pair::<u32>)]
    offsets: Option<(u32, u32)>,
    /// Explicit nL,nU for the standalone detector.
    #[arg(long, value_parser = parse_pair::<u64>)]
    bounds: Option<(u64, u64)>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Pre-elected leaders for the standalone detector and phase clock.
    #[arg(long, value_parser = parse_leaders)]
    leaders: Option<LeaderAssignment>,
    #[arg(long)]
    c_fin: Option<u32>,
    /// Check every estimator step against its contract.
    #[arg(long)]
    check_contract: bool,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON mirror (next to --out, or instead of CSV on stdout).
    #[arg(long)]
    json: bool,
}

fn parse_leaders(s: &str) -> Result<LeaderAssignment, String> {
    match s {
        "single" => Ok(LeaderAssignment::Single),
        "none" => Ok(LeaderAssignment::None),
        "two" => Ok(LeaderAssignment::Two),
        _ => Err("expected single, none or two".into()),
    }
}

impl ProtocolArgs {
    fn config(&self) -> Result<ProtocolConfig, Error> {
        let mut c = ProtocolConfig::new(self.protocol);
        let specific = |flag: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Input(format!("--{flag} does not apply to --protocol {}", self.protocol)))
            }
        };
        let cold = self.protocol == ProtocolKind::Cold;
        let cdwb = self.protocol == ProtocolKind::Cdwb;
        if let Some(eta) = self.eta {
            specific("eta", cold || cdwb)?;
            c.eta = eta;
        }
        if let Some(m) = self.m {
            specific("m", self.protocol != ProtocolKind::Epidemic)?;
            c.m = m;
        }
        if let Some(e) = self.estimator {
            specific("estimator", cold)?;
            c.estimator = e;
        }
        if self.offsets.is_some() {
            specific("offsets", cold)?;
            c.offsets = self.offsets;
        }
        if self.bounds.is_some() {
            specific("bounds", cdwb)?;
            c.bounds = self.bounds;
        }
        if let Some(mode) = self.mode {
            specific("mode", cold || cdwb)?;
            c.mode = mode;
        }
        if let Some(l) = self.leaders {
            specific("leaders", cdwb || self.protocol == ProtocolKind::PhaseClock)?;
            c.leaders = l;
        }
        if let Some(cf) = self.c_fin {
            specific("c-fin", cold)?;
            c.c_fin = cf;
        }
        if self.check_contract {
            specific("check-contract", cold)?;
            c.check_contract = true;
        }
        Ok(c)
    }

    fn sink(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn emit(&self, reports: &[TrialReport]) -> Result<(), Error> {
        let rows: Vec<_> = reports.iter().map(|r| r.result.clone()).collect();
        let mut out = self.sink()?;
        if self.json && self.out.is_none() {
            write_json(&mut out, &rows)?;
        } else {
            write_csv(&mut out, &rows)?;
        }
        out.flush()?;
        if let (true, Some(path)) = (self.json, &self.out) {
            write_json(BufWriter::new(File::create(path.with_extension("json"))?), &rows)?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ProtocolArgs,
    #[arg(long)]
    n: usize,
    /// Write interaction records as JSON lines to standard error.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value_t = 10_000, requires = "trace")]
    trace_limit: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ProtocolArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    trials: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    target: Target,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the chosen constants as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Safety problems in finished runs.
fn violations(kind: ProtocolKind, reports: &[TrialReport]) -> Vec<String> {
    let mut found = Vec::new();
    for r in reports {
        let seed = r.result.seed;
        if r.result.false_positive && kind != ProtocolKind::Epidemic {
            found.push(format!("false positive (n={}, seed={seed})", r.result.n));
        }
        if r.collision_reversions > 0 {
            found.push(format!("output bit lowered (seed={seed})"));
        }
        if r.contract_violations > 0 {
            found.push(format!("{} estimator contract violations (seed={seed})", r.contract_violations));
        }
    }
    found
}

fn execute(cli: Cli) -> Result<Vec<String>, Error> {
    match cli.command {
        Command::Run(args) => {
            let c = &args.common;
            let mut spec = TrialSpec::new(c.config()?, args.n, c.input.clone(), c.seed);
            spec.budget = c.budget;
            let limit = if args.trace { args.trace_limit } else { 0 };
            let output = run_single(&spec, limit)?;
            if args.trace {
                write_trace(BufWriter::new(io::stderr().lock()), &output.trace)?;
            }
            c.emit(std::slice::from_ref(&output.report))?;
            Ok(violations(c.protocol, &[output.report]))
        }
        Command::Sweep(args) => {
            let c = &args.common;
            let spec = SweepSpec {
                config: c.config()?,
                n_list: args.n_list.clone(),
                trials: args.trials,
                input: c.input.clone(),
                budget: c.budget,
                base_seed: c.seed,
            };
            let reports = sweep(&spec)?;
            c.emit(&reports)?;
            let rows: Vec<_> = reports.iter().map(|r| r.result.clone()).collect();
            let summary = summarize(&rows);
            let mut err = io::stderr().lock();
            writeln!(err, "n\ttrials\treached\tmedian\tmean\tp95\tcdwb_share")?;
            let fmt = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.0}"));
            for s in &summary.sizes {
                writeln!(
                    err,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{:.2}",
                    s.n,
                    s.trials,
                    s.reached,
                    fmt(s.median_steps),
                    fmt(s.mean_steps),
                    fmt(s.p95_steps),
                    s.cdwb_fraction
                )?;
            }
            if let Some(fit) = summary.fit {
                writeln!(err, "slope {:.3} (r^2 {:.3})", fit.slope, fit.r_squared)?;
            }
            Ok(violations(c.protocol, &reports))
        }
        Command::States(args) => {
            let c = &args.common;
            let spec = SweepSpec {
                config: c.config()?,
                n_list: args.n_list.clone(),
                trials: args.trials,
                input: c.input.clone(),
                budget: c.budget,
                base_seed: c.seed,
            };
            let reports = sweep(&spec)?;
            let mut out = c.sink()?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["n", "seed", "max_state_bits"])?;
            for r in &reports {
                w.write_record([
                    r.result.n.to_string(),
                    r.result.seed.to_string(),
                    r.result.max_state_bits.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(Vec::new())
        }
        Command::Calibrate(args) => {
            let (n0, t0) = args.target.defaults();
            let report = calibrate(
                args.target,
                args.n.unwrap_or(n0),
                args.trials.unwrap_or(t0),
                args.seed,
            )?;
            match &args.out {
                Some(path) => write_json(BufWriter::new(File::create(path)?), &report)?,
                None => write_json(io::stdout().lock(), &report)?,
            }
            if let Some(path) = &args.config {
                write_json(BufWriter::new(File::create(path)?), &report.chosen)?;
            }
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(found) if found.is_empty() => ExitCode::SUCCESS,
        Ok(found) => {
            for f in found {
                eprintln!("popcd: {f}");
            }
            ExitCode::from(2)
        }
        Err(Error::Invariant(msg)) => {
            eprintln!("popcd: invariant violated: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("popcd: {e}");
            ExitCode::from(1)
        }
    }
}
