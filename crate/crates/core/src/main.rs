use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use collective_risk::cli::{
    cmd_compare, cmd_diagnose, cmd_fit, cmd_premium, cmd_risk, cmd_simulate, exit_code, parse_tau_grid,
    ModelSelection, Outcome, RunConfig, EXIT_CONVERGENCE,
};
use collective_risk::inference::SamplerConfig;
use collective_risk::io::save_portfolio;
use collective_risk::model::PriorConfig;
use collective_risk::simulation::{generate_portfolio, PopulationTable, StudyConfig, TrueHyper};
use collective_risk::{Error, Result};

/// Hierarchical Bayesian collective-risk models: fit, compare, price and
/// stress-test insurance portfolios.
#[derive(Parser)]
#[command(name = "crisk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit models and save draws and convergence diagnostics.
    Fit(FitArgs),
    /// DIC and CRPS for each model.
    Compare(FitArgs),
    /// Per-age-class premiums with 2.5% / 97.5% predictive bands.
    Premium(FitArgs),
    /// VaR / TVaR / ES curves over a level grid, CV and overdispersion.
    Risk(FitArgs),
    /// Simulation-recovery study under the log-t / negative binomial model.
    Simulate(SimArgs),
    /// Diagnostics for saved draw files.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    chains: usize,
    /// Iterations per chain, burn-in included.
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 5_000)]
    burnin: usize,
    /// Hyperprior family: gamma or half-cauchy.
    #[arg(long, default_value = "gamma")]
    prior: String,
}

impl SamplerArgs {
    fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.chains,
            n_iterations: self.iters,
            n_burnin: self.burnin,
            seed: self.seed,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// M1..M6, a comma-separated list, or all.
    #[arg(long, default_value = "all")]
    model: String,
    /// Portfolio CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Planning horizon in months.
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    /// Risk levels: n for 1/n..(n-1)/n, or a comma-separated list.
    #[arg(long, default_value = "100")]
    tau_grid: String,
    /// Fit all services summed together instead of one fit per service.
    #[arg(long)]
    pooled: bool,
    /// Largest acceptable split R-hat.
    #[arg(long, default_value_t = 1.1)]
    max_rhat: f64,
}

impl FitArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(self.input.clone(), self.out.clone());
        cfg.models = self.model.parse::<ModelSelection>()?.0;
        cfg.prior = self.sampler.prior.parse::<PriorConfig>()?;
        cfg.sampler = self.sampler.sampler();
        cfg.horizon = self.horizon;
        cfg.tau_grid = parse_tau_grid(&self.tau_grid)?;
        cfg.pooled = self.pooled;
        cfg.max_rhat = self.max_rhat;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of simulated datasets.
    #[arg(long, default_value_t = 30)]
    datasets: usize,
    /// Continue an interrupted study from its checkpoint.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    /// Only write a synthetic portfolio CSV with this many services to
    /// `<out>/synthetic_portfolio.csv`; no study is run.
    #[arg(long, value_name = "SERVICES")]
    portfolio_only: Option<u32>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// A draw file or a directory of `draws_*.csv` files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1.1)]
    max_rhat: f64,
}

fn report(outcome: &Outcome) -> i32 {
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for f in &outcome.convergence_failures {
        eprintln!("convergence failure: {f}");
    }
    if outcome.convergence_failures.is_empty() {
        0
    } else {
        EXIT_CONVERGENCE
    }
}

fn simulate(args: &SimArgs) -> Result<i32> {
    if let Some(n) = args.portfolio_only {
        if n == 0 {
            return Err(Error::Config("need at least one service".into()));
        }
        std::fs::create_dir_all(&args.out)?;
        let data = generate_portfolio(&TrueHyper::reference(), &PopulationTable::bundled(), n, args.sampler.seed)?;
        let path = args.out.join("synthetic_portfolio.csv");
        save_portfolio(&data, &path)?;
        println!("wrote {}", path.display());
        return Ok(0);
    }
    let mut study = StudyConfig::new(args.datasets, args.sampler.sampler(), args.sampler.seed);
    study.prior = args.sampler.prior.parse()?;
    study.horizon = args.horizon;
    let (outcome, rep) = cmd_simulate(&study, &args.out, args.resume)?;
    println!("hyperparameter      truth    MRB%      MSE%");
    for k in 0..rep.names.len() {
        println!(
            "{:<12} {:>10.3} {:>8.2} {:>9.2}",
            rep.names[k], rep.truth[k], rep.mrb_percent[k], rep.mse_percent[k]
        );
    }
    println!("mean U_a {:.2}% over {} datasets ({} excluded)", rep.mean_u_a(), rep.n_included, rep.n_excluded);
    Ok(report(&outcome))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Fit(a) => Ok(report(&cmd_fit(&a.config()?)?)),
        Command::Compare(a) => Ok(report(&cmd_compare(&a.config()?)?)),
        Command::Premium(a) => Ok(report(&cmd_premium(&a.config()?)?)),
        Command::Risk(a) => Ok(report(&cmd_risk(&a.config()?)?)),
        Command::Simulate(a) => simulate(&a),
        Command::Diagnose(a) => Ok(report(&cmd_diagnose(&a.input, &a.out, a.max_rhat)?)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
