use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvlik_cli::{execute, CliError, CliResult, Command, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "tvlik", version, about = "Local likelihood estimation of time-varying parameter models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Input dataset CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Covariate CSV merged on `t`.
    #[arg(long, global = true)]
    covariate_input: Option<PathBuf>,
    /// Local polynomial order.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Fixed bandwidth (skips cross-validation).
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Comma-separated CV bandwidth grid.
    #[arg(long, global = true, value_delimiter = ',')]
    cv_grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    leave_out: Option<usize>,
    #[arg(long, global = true)]
    level: Option<f64>,
    /// Monte Carlo table (1 or 2).
    #[arg(long, global = true)]
    table: Option<u8>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Comma-separated sample sizes (`mc`) or the sample size (`simulate`).
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Unthinned CV inside `mc`.
    #[arg(long, global = true)]
    full_cv: bool,
    /// Comma-separated lag orders for `empirical`.
    #[arg(long, global = true, value_delimiter = ',')]
    p_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Simulate a dataset.
    Simulate,
    /// Fit the parameter path with standard errors.
    Fit,
    /// Cross-validate the bandwidth.
    Cv,
    /// Fit with pointwise confidence bands.
    Infer,
    /// Monte Carlo tables.
    Mc,
    /// Constant-parameter lag selection and time-varying PARX fit.
    Empirical,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Fit => Command::Fit,
            Cmd::Cv => Command::Cv,
            Cmd::Infer => Command::Infer,
            Cmd::Mc => Command::Mc,
            Cmd::Empirical => Command::Empirical,
        }
    }
}

fn effective_config(cli: &Cli, command: Command) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.io.output_dir = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(i) = &cli.input {
        cfg.io.input = Some(i.clone());
    }
    if let Some(i) = &cli.covariate_input {
        cfg.io.covariate_input = Some(i.clone());
    }
    if let Some(m) = cli.m {
        cfg.estimator.m = m;
    }
    if cli.b.is_some() {
        cfg.estimator.b = cli.b;
    }
    if let Some(g) = &cli.cv_grid {
        cfg.estimator.cv.grid = Some(g.clone());
    }
    if let Some(l) = cli.leave_out {
        cfg.estimator.cv.leave_out = l;
        cfg.estimator.cv.thin = cfg.estimator.cv.thin.max(1);
    }
    if let Some(l) = cli.level {
        cfg.estimator.level = l;
    }
    if let Some(t) = cli.table {
        cfg.mc.table = t;
    }
    if let Some(r) = cli.reps {
        cfg.mc.reps = r;
    }
    if let Some(n) = &cli.n {
        match command {
            Command::Simulate => {
                if n.len() != 1 {
                    return Err(CliError::config("simulate takes a single --n"));
                }
                cfg.simulate.n = n[0];
            }
            _ => cfg.mc.n = Some(n.clone()),
        }
    }
    if cli.full_cv {
        cfg.mc.cv_thin = 1;
    }
    if let Some(p) = &cli.p_list {
        cfg.empirical.p_list = p.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let command = Command::from(cli.command);
    let result = effective_config(&cli, command).and_then(|cfg| execute(command, &cfg));
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
