use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nctorus::cli::{parse_problem_file, run, Command, Overrides};

/// Computations on noncommutative complex tori driven by a JSON problem file.
#[derive(Parser, Debug)]
#[command(name = "nctorus", version)]
struct Args {
    /// Problem file (JSON).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// One of: index, hodge, flatness, kunneth, pushforward, standard1d,
    /// nonalg-scan, riemann-check, frobenius, decompose, siegel, splittorus,
    /// ncriemann-bound, detect-blocks.
    #[arg(long, value_name = "NAME")]
    command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mode cutoff N (the run is repeated at N + 2).
    #[arg(long, value_name = "N")]
    truncation: Option<usize>,
    #[arg(long = "tol-rel", value_name = "X")]
    tol_rel: Option<f64>,
    /// Search bound for riemann-check / splittorus and nonalg-scan.
    #[arg(long, value_name = "B")]
    bound: Option<i64>,
    /// Use exact rational arithmetic when J is rational.
    #[arg(long)]
    exact: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let text = match std::fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.input.display());
            return ExitCode::from(1);
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        truncation: args.truncation,
        tol_rel: args.tol_rel,
        bound: args.bound,
        exact: args.exact,
    };
    let report = match parse_problem_file(&text).and_then(|pf| run(args.command, &pf, &overrides)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let json = report.to_canonical_json();
    match &args.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{json}"),
    }
    ExitCode::from(report.exit_code() as u8)
}
