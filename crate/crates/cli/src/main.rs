mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pyrcert::initializers::{DeepStyle, Scheme};
use pyrcert::ActivationParams;

use config::{DataSource, ExperimentConfig, Format, Method, Sigma, SweepCommand};

#[derive(Parser)]
#[command(
    name = "pyrcert",
    version,
    about = "Convergence certificates for deep pyramidal networks"
)]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $PYRCERT_OUT, then ./pyrcert-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check both initial conditions and compute the rate constants.
    Certify(NetArgs),
    /// Run gradient descent with per-step invariant checks.
    Train {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Estimate the smallest eigenvalue of the expected first-layer Gram matrix.
    LambdaStar {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long, value_enum)]
        sigma: Option<Sigma>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        r_max: Option<usize>,
    },
    /// Exact and bounded smallest singular value of Khatri-Rao powers over seeds.
    Kr {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        r: Option<usize>,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Hermite coefficients of a nonlinearity.
    Hermite {
        #[arg(long, value_enum)]
        sigma: Option<Sigma>,
        #[arg(long)]
        r_max: Option<usize>,
        #[arg(long)]
        quad_order: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Certify or train over a grid of seeds and starting gains.
    Sweep {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_enum)]
        command: Option<SweepCommand>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// JSON dataset bundle (`X`, `Y`, optional `shape`).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Args)]
struct NetArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long, value_parser = parse_style)]
    deep_style: Option<DeepStyle>,
    /// Gain doublings to try; 0 disables tuning.
    #[arg(long)]
    tune: Option<usize>,
    /// Initial weights (JSON) instead of a fresh draw.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    stop_loss: Option<f64>,
    #[arg(long)]
    log_every: Option<u64>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| "expected section31 or lecun".into())
}

fn parse_style(s: &str) -> Result<DeepStyle, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected scaled_identity or gaussian".into())
}

fn apply_data(cfg: &mut ExperimentConfig, a: &DataArgs) {
    if let Some(path) = &a.data {
        cfg.data = DataSource::File { path: path.clone() };
    }
    if let DataSource::Synthetic { n, d, .. } = &mut cfg.data {
        *n = a.n.unwrap_or(*n);
        *d = a.d.unwrap_or(*d);
    }
}

fn apply_activation(cfg: &mut ExperimentConfig, gamma: Option<f64>, beta: Option<f64>) -> Result<()> {
    if gamma.is_some() || beta.is_some() {
        cfg.activation = ActivationParams::new(
            gamma.unwrap_or(cfg.activation.gamma()),
            beta.unwrap_or(cfg.activation.beta()),
        )?;
    }
    Ok(())
}

fn apply_net(cfg: &mut ExperimentConfig, a: &NetArgs) -> Result<()> {
    apply_data(cfg, &a.data);
    apply_activation(cfg, a.gamma, a.beta)?;
    if a.widths.is_some() {
        cfg.widths = a.widths.clone();
    }
    if let Some(s) = a.scheme {
        cfg.init.scheme = s;
    }
    if let Some(s) = a.deep_style {
        cfg.init.deep_style = s;
    }
    cfg.init.c = a.c.unwrap_or(cfg.init.c);
    cfg.init.v = a.v.unwrap_or(cfg.init.v);
    cfg.tune_attempts = a.tune.unwrap_or(cfg.tune_attempts);
    if a.params.is_some() {
        cfg.params = a.params.clone();
    }
    Ok(())
}

fn apply_train(cfg: &mut ExperimentConfig, a: &TrainArgs) {
    if a.eta.is_some() {
        cfg.train.eta = a.eta;
    }
    cfg.train.max_steps = a.steps.unwrap_or(cfg.train.max_steps);
    cfg.train.stop_loss = a.stop_loss.unwrap_or(cfg.train.stop_loss);
    cfg.train.log_every = a.log_every.unwrap_or(cfg.train.log_every);
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.format = cli.format.unwrap_or(cfg.format);
    match &cli.cmd {
        Command::Certify(net) => apply_net(&mut cfg, net)?,
        Command::Train { net, train } => {
            apply_net(&mut cfg, net)?;
            apply_train(&mut cfg, train);
        }
        Command::LambdaStar {
            data,
            method,
            sigma,
            samples,
            r_max,
        } => {
            apply_data(&mut cfg, data);
            let s = &mut cfg.lambda_star;
            s.method = method.unwrap_or(s.method);
            s.sigma = sigma.unwrap_or(s.sigma);
            s.samples = samples.unwrap_or(s.samples);
            s.r_max = r_max.unwrap_or(s.r_max);
        }
        Command::Kr { data, r, seeds } => {
            apply_data(&mut cfg, data);
            cfg.kr.r = r.unwrap_or(cfg.kr.r);
            cfg.kr.seeds = seeds.unwrap_or(cfg.kr.seeds);
        }
        Command::Hermite {
            sigma,
            r_max,
            quad_order,
            gamma,
            beta,
        } => {
            apply_activation(&mut cfg, *gamma, *beta)?;
            let h = &mut cfg.hermite;
            h.sigma = sigma.unwrap_or(h.sigma);
            h.r_max = r_max.unwrap_or(h.r_max);
            h.quad_order = quad_order.unwrap_or(h.quad_order);
        }
        Command::Sweep {
            net,
            train,
            command,
            seeds,
        } => {
            apply_net(&mut cfg, net)?;
            apply_train(&mut cfg, train);
            cfg.sweep.command = command.unwrap_or(cfg.sweep.command);
            if let Some(s) = seeds {
                cfg.sweep.seeds = s.clone();
            }
            if let Some(c) = net.c {
                cfg.sweep.c = vec![c];
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = build_config(cli)?;
    match cli.cmd {
        Command::Certify(_) => commands::certify(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::LambdaStar { .. } => commands::lambda_star(&cfg),
        Command::Kr { .. } => commands::kr(&cfg),
        Command::Hermite { .. } => commands::hermite(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
