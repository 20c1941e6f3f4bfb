//! Command-line interface: simulate / fit / smooth / coverage / check /
//! lr-test over file-based inputs.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, files, or model
//! inputs), 2 numerical failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tvtp::diagnostics::{
    ar1_stationary_sampler, check_stationarity, log_moment_check, MomentCheck,
};
use tvtp::filter::{forward_filter, kim_smoother, S0Policy};
use tvtp::io::{
    load_fit_result, load_spec_file, read_data_csv, save_coverage_json, save_fit_result,
    write_coverage_csvs, write_data_csv, write_smoothed_csv, FitResultFile, SCHEMA_VERSION,
};
use tvtp::model::{Dataset, KernelFamily, ParamVector};
use tvtp::montecarlo::{run_coverage, CoverageConfig};
use tvtp::optimize::{fit, FitConfig, InitPolicy};
use tvtp::simulate::{simulate_covariates, simulate_latent_factor, simulate_tvtp, RegimeInit, WARMUP};
use tvtp::Error;

#[derive(Parser)]
#[command(name = "tvtp", version, about = "Regime-switching AR models with time-varying transition probabilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a spec file with parameter values.
    Simulate(SimulateArgs),
    /// Maximize the likelihood on a data CSV and write a fit-result JSON.
    Fit(FitArgs),
    /// Smoothed regime probabilities from a fitted model.
    Smooth(SmoothArgs),
    /// Monte Carlo confidence-interval coverage experiment.
    Coverage(CoverageArgs),
    /// Stationarity and moment diagnostics at the given parameters.
    Check(CheckArgs),
    /// Likelihood-ratio test between two fit results.
    LrTest(LrTestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Spec file (TOML or JSON) including a [params] section.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// AR coefficient of the simulated covariate process.
    #[arg(long, default_value_t = 0.4)]
    covariate_ar: f64,
    /// Include the true regime path as a final column.
    #[arg(long)]
    emit_truth: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial expanded state: an index, or "uniform".
    #[arg(long, default_value = "0")]
    s0: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SmoothArgs {
    /// Fit-result JSON from `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "0")]
    s0: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    /// Spec file whose [params] section is the true parameter vector.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = 0.4)]
    covariate_ar: f64,
    #[arg(long, default_value_t = 3)]
    starts: usize,
    /// Output prefix: writes <out>_{hessian,ops,demeaned_ops}.csv and
    /// <out>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 20000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.4)]
    covariate_ar: f64,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LrTestArgs {
    #[arg(long)]
    restricted: PathBuf,
    #[arg(long)]
    full: PathBuf,
    /// Degrees of freedom of the test.
    #[arg(long)]
    df: usize,
}

fn parse_s0(s: &str) -> Result<S0Policy, Error> {
    if s == "uniform" {
        Ok(S0Policy::Uniform)
    } else {
        s.parse::<usize>()
            .map(S0Policy::Fixed)
            .map_err(|_| Error::InvalidParam(format!("--s0 must be an index or 'uniform', got '{s}'")))
    }
}

fn require_params(theta: Option<ParamVector>) -> Result<ParamVector, Error> {
    theta.ok_or_else(|| Error::InvalidSpec("spec file has no [params] section".into()))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let (spec, theta) = load_spec_file(&args.spec)?;
    let theta = require_params(theta)?;
    let x_len = args.n + WARMUP + spec.p;
    let xs: Vec<Vec<f64>> = if spec.covariate_dim > 0 {
        let mut cols = Vec::new();
        for c in 0..spec.covariate_dim {
            cols.push(simulate_covariates(
                args.covariate_ar,
                x_len,
                200,
                args.seed.wrapping_add(1 + c as u64),
            )?);
        }
        (0..x_len)
            .map(|t| cols.iter().map(|col| col[t]).collect())
            .collect()
    } else {
        vec![Vec::new(); x_len]
    };
    let path = if spec.kernel.family == KernelFamily::LatentFactor {
        simulate_latent_factor(&spec, &theta, args.n, args.seed)?
    } else {
        simulate_tvtp(&spec, &theta, &xs, args.n, args.seed, RegimeInit::Fixed(0))?
    };
    let data = Dataset::new(path.y, xs[x_len - args.n..].to_vec(), &spec)?;
    let truth = args.emit_truth.then_some(path.regimes.as_slice());
    write_data_csv(&args.out, &spec, &data, truth)?;
    println!("wrote {} ({} observations)", args.out.display(), args.n);
    Ok(())
}

/// Conventional estimation-table layout: one parameter per row,
/// the estimate with standard errors in parentheses, and a log-likelihood
/// footer row.
fn table_report(file: &FitResultFile) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<14} {:>12} {:>14} {:>14} {:>14}\n",
        "parameter", "estimate", "se(hessian)", "se(ops)", "se(demeaned)"
    ));
    for (i, name) in file.param_names.iter().enumerate() {
        let h = match &file.se.hessian_based {
            Some(se) => format!("({:.4})", se[i]),
            None => "(n/a)".to_string(),
        };
        s.push_str(&format!(
            "{:<14} {:>12.4} {:>14} {:>14} {:>14}\n",
            name,
            file.theta_econ[i],
            h,
            format!("({:.4})", file.se.ops[i]),
            format!("({:.4})", file.se.demeaned_ops[i]),
        ));
    }
    s.push_str(&format!("{:<14} {:>12.4}\n", "log-likelihood", file.loglik));
    s
}

fn cmd_fit(args: &FitArgs) -> Result<(), Error> {
    let (spec, _) = load_spec_file(&args.spec)?;
    let (data, _) = read_data_csv(&args.data, &spec)?;
    let cfg = FitConfig {
        starts: args.starts,
        seed: args.seed,
        s0: parse_s0(&args.s0)?,
        level: args.level,
        init: InitPolicy::Heuristic,
        ..FitConfig::default()
    };
    let res = fit(&spec, &data, &cfg)?;
    save_fit_result(&args.out, &spec, &res)?;
    let file = FitResultFile::from_fit(&spec, &res);
    print!("{}", table_report(&file));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_smooth(args: &SmoothArgs) -> Result<(), Error> {
    let (spec, theta, _) = load_fit_result(&args.fit)?;
    let (data, _) = read_data_csv(&args.data, &spec)?;
    let s0 = parse_s0(&args.s0)?;
    let filt = forward_filter(&spec, &theta, &data, s0)?;
    let sm = kim_smoother(&spec, &theta, &data, &filt)?;
    write_smoothed_csv(&args.out, &spec, &sm)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_coverage(args: &CoverageArgs) -> Result<(), Error> {
    let (spec, theta) = load_spec_file(&args.spec)?;
    let theta = require_params(theta)?;
    let cfg = CoverageConfig {
        n: args.n,
        replications: args.reps,
        seed: args.seed,
        level: args.level,
        jobs: args.jobs,
        covariate_ar: args.covariate_ar,
        starts: args.starts,
    };
    let report = run_coverage(&spec, &theta, &cfg)?;
    let csvs = write_coverage_csvs(&args.out, &report)?;
    let json_path = PathBuf::from(format!("{}.json", args.out.display()));
    save_coverage_json(&json_path, &report)?;
    println!(
        "coverage: {} replications evaluated, {} failed, {} with invalid Hessian intervals",
        report.evaluated, report.failed_fits, report.invalid_hessian
    );
    for p in csvs {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<(), Error> {
    let (spec, theta) = load_spec_file(&args.spec)?;
    let theta = require_params(theta)?;
    let stationarity = check_stationarity(
        &spec,
        &theta,
        ar1_stationary_sampler(args.covariate_ar, spec.covariate_dim),
        args.draws.max(1000),
        args.seed,
    )?;
    println!("stationarity: {:?}", stationarity.verdict);
    if let Some(r) = stationarity.spectral_radius {
        println!("  spectral radius: {r:.6}");
    }
    if let Some(m) = stationarity.m_norm_estimate {
        println!(
            "  E||M(X)|| estimate: {m:.6} (se {:.6})",
            stationarity.m_norm_se.unwrap_or(0.0)
        );
    }
    let moment = log_moment_check(
        &spec,
        &theta,
        MomentCheck::MinTransition,
        ar1_stationary_sampler(args.covariate_ar, spec.covariate_dim),
        args.draws.max(10_000),
        args.seed,
    )?;
    println!(
        "log-moment (min transition): {:.6} (se {:.6}), stable: {}",
        moment.estimate, moment.se, moment.stable
    );
    if let Some(out) = &args.out {
        let body = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "stationarity": stationarity,
            "log_moment": moment,
        });
        std::fs::write(out, serde_json::to_string_pretty(&body).unwrap())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
fn chi2_upper_tail(df: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(df as f64 / 2.0, x / 2.0)
}

fn cmd_lr_test(args: &LrTestArgs) -> Result<(), Error> {
    if args.df == 0 {
        return Err(Error::InvalidParam("--df must be >= 1".into()));
    }
    let (_, _, restricted) = load_fit_result(&args.restricted)?;
    let (_, _, full) = load_fit_result(&args.full)?;
    let stat = 2.0 * (full.loglik - restricted.loglik);
    if stat < 0.0 {
        eprintln!(
            "warning: full-model log-likelihood ({:.6}) below restricted ({:.6})",
            full.loglik, restricted.loglik
        );
    }
    let p = chi2_upper_tail(args.df, stat.max(0.0));
    println!("lr_stat={stat:.6} df={} p_value={p:.6}", args.df);
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidSpec(_)
        | Error::InvalidParam(_)
        | Error::InvalidData(_)
        | Error::Io(_)
        | Error::Parse(_) => 1,
        Error::NonFinite(_)
        | Error::ZeroLikelihood { .. }
        | Error::TooLarge(_)
        | Error::Singular(_)
        | Error::OptimFailed(_)
        | Error::Unsupported(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Check(a) => cmd_check(a),
        Command::LrTest(a) => cmd_lr_test(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
