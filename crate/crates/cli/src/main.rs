use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uncoupled::chain::report::{analyze, resistance_dot};
use uncoupled::chain::{stochastic_potentials, AnalysisOptions, ChainAlgorithm, ChainModel};
use uncoupled::cnum::suggest_frame_size;
use uncoupled::experiment::{run_experiment, ExperimentConfig, SweepParameter, SweepSpec};
use uncoupled::verify::{verify, CheckStatus, VerifyOptions};
use uncoupled::{Error, GameDefinition};

const EXIT_IO: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "uncoupled", version, about = "Completely uncoupled utility-maximization dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file: one CSV trace and one JSON summary per seed.
    Run {
        config: PathBuf,
        /// Replaces the seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Keep every n-th slot in traces.
        #[arg(long)]
        stride: Option<u64>,
    },
    /// Run an experiment file over a list of values of one parameter.
    Sweep {
        config: PathBuf,
        /// epsilon, frame-len, num-frames, window, horizon or beta.
        #[arg(long)]
        parameter: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Certify a small game and print a JSON pass/fail report.
    Verify {
        game: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        windows: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        tv_horizon: usize,
        #[arg(long, default_value_t = 20_000)]
        state_cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact chain analysis: potentials, stable states, stationary laws, TV curves.
    Analyze {
        game: PathBuf,
        #[arg(long, value_enum, default_value = "gnum")]
        algorithm: ChainKind,
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Fixed weights for the frame-based chain.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        #[arg(long)]
        exponent_c: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        tv_horizon: usize,
        #[arg(long, default_value_t = 0.1)]
        zeta: f64,
        #[arg(long, default_value_t = 20_000)]
        state_cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the resistance graph in Graphviz format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Print the frame length N(V+1)/(η ε^((c+1)N)).
    SuggestFrame {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        v: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Write the two-node illustration game.
    ExampleGame { out: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainKind {
    Gnum,
    Cnum,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => println!("{body}"),
    }
    Ok(())
}

fn load_experiment(config: &Path, seeds: Option<Vec<u64>>, output_dir: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(d) = output_dir {
        cfg.output_dir = d;
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> Result<(), Failure> {
    for artifact in run_experiment(cfg)? {
        println!("{}\t{}", artifact.csv.display(), artifact.summary_path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, seeds, output_dir, stride } => {
            let mut cfg = load_experiment(&config, seeds, output_dir)?;
            if stride.is_some() {
                cfg.record_stride = stride;
            }
            execute(&cfg)
        }
        Command::Sweep { config, parameter, values, seeds, output_dir } => {
            let mut cfg = load_experiment(&config, seeds, output_dir)?;
            let parameter: SweepParameter = parameter.parse().map_err(Error::Config)?;
            cfg.sweep = Some(SweepSpec { parameter, values });
            execute(&cfg)
        }
        Command::Verify { game, windows, tv_horizon, state_cap, seed, out } => {
            let game = GameDefinition::load(&game)?;
            let options = VerifyOptions { windows, tv_horizon, state_cap, seed, ..VerifyOptions::default() };
            let report = verify(&game, &options)?;
            write_or_print(out.as_deref(), &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
            for c in &report.checks {
                log::info!("{:?} {}: {}", c.status, c.name, c.detail);
            }
            match report.count(CheckStatus::Fail) {
                0 => Ok(()),
                n => Err(Failure::Checks(n)),
            }
        }
        Command::Analyze { game, algorithm, window, lambda, exponent_c, epsilons, tv_horizon, zeta, state_cap, out, dot } => {
            let game = GameDefinition::load(&game)?;
            let algorithm = match algorithm {
                ChainKind::Gnum => ChainAlgorithm::Gnum { window },
                ChainKind::Cnum => ChainAlgorithm::Cnum {
                    lambda: lambda.unwrap_or_else(|| vec![1.0; game.env.num_nodes()]),
                },
            };
            let options = AnalysisOptions { algorithm, exponent_c, epsilons, tv_horizon, zeta, state_cap };
            let report = analyze(&game.env, &game.utilities, &options)?;
            write_or_print(out.as_deref(), &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
            if let Some(path) = dot {
                let model = ChainModel::new(&game.env, &game.utilities, options.algorithm.clone(), exponent_c, state_cap)?;
                let potentials = stochastic_potentials(&model);
                fs::write(path, resistance_dot(&model, Some(&potentials)))?;
            }
            Ok(())
        }
        Command::SuggestFrame { nodes, v, eta, epsilon, c } => {
            if nodes == 0 || !(v > 0.0) || !(eta > 0.0) || !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::Config("nodes, v and eta must be positive and epsilon must lie in (0, 1)".into()).into());
            }
            let c = c.unwrap_or(nodes as f64 + 1.0);
            println!("{}", suggest_frame_size(nodes, v, eta, epsilon, c));
            Ok(())
        }
        Command::ExampleGame { out } => Ok(GameDefinition::two_node_example().save(out)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(n)) => {
            eprintln!("{n} verification check(s) failed");
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invariant() {
                EXIT_INVARIANT
            } else if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_IO
            })
        }
    }
}
