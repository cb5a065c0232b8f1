//! Experiment files: one engine configuration run over a list of seeds,
//! optionally swept over one parameter. Every run writes a CSV trace and a
//! JSON summary into the output directory.
//!
//! ```toml
//! game = "two_node.toml"
//! output_dir = "out"
//! seeds = [1, 2]
//!
//! [algorithm]
//! kind = "cnum"
//! epsilon = 0.01
//! frame_len = 1000000
//! num_frames = 200
//!
//! [sweep]
//! parameter = "epsilon"
//! values = [0.1, 0.01, 0.001, 0.0001]
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{exact_gradient_run, loglinear_baseline_run, ExactGradientConfig, LogLinearConfig, LogLinearMode};
use crate::cnum::{run_cnum, CNumConfig};
use crate::error::{Error, Result};
use crate::gamefile::GameDefinition;
use crate::gnum::{run_gnum, GNumConfig};
use crate::trace::{Algorithm, RunSummary, RunTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlgorithmConfig {
    Gnum(GNumConfig),
    Cnum(CNumConfig),
    ExactGradient(ExactGradientConfig),
    Loglinear(LogLinearConfig),
}

impl AlgorithmConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            AlgorithmConfig::Gnum(_) => Algorithm::Gnum,
            AlgorithmConfig::Cnum(_) => Algorithm::Cnum,
            AlgorithmConfig::ExactGradient(_) => Algorithm::ExactGradient,
            AlgorithmConfig::Loglinear(_) => Algorithm::Loglinear,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            AlgorithmConfig::Gnum(c) => c.seed = seed,
            AlgorithmConfig::Cnum(c) => c.seed = seed,
            AlgorithmConfig::ExactGradient(_) => {}
            AlgorithmConfig::Loglinear(c) => c.seed = seed,
        }
        out
    }

    pub fn with_stride(&self, stride: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            AlgorithmConfig::Gnum(c) => c.record_stride = stride,
            AlgorithmConfig::Cnum(c) => c.record_stride = stride,
            AlgorithmConfig::ExactGradient(_) => {}
            AlgorithmConfig::Loglinear(c) => c.record_stride = stride,
        }
        out
    }

    /// Checks the engine's parameter constraints against the game.
    pub fn validate(&self, game: &GameDefinition) -> Result<()> {
        match self {
            AlgorithmConfig::Gnum(c) => c.params(&game.env).map(|_| ()),
            AlgorithmConfig::Cnum(c) => c.params(&game.env, &game.utilities).map(|_| ()),
            AlgorithmConfig::ExactGradient(c) => {
                c.schedule.validate(false)?;
                c.lambda0.resolve(game.env.num_nodes()).map(|_| ())
            }
            AlgorithmConfig::Loglinear(c) => {
                if !(c.beta.is_finite() && c.beta >= 0.0) {
                    return Err(Error::Config(format!("beta {} must be finite and nonnegative", c.beta)));
                }
                Ok(())
            }
        }
    }

    pub fn run(&self, game: &GameDefinition) -> Result<RunTrace> {
        match self {
            AlgorithmConfig::Gnum(c) => run_gnum(&game.env, c, &game.utilities),
            AlgorithmConfig::Cnum(c) => run_cnum(&game.env, c, &game.utilities),
            AlgorithmConfig::ExactGradient(c) => exact_gradient_run(&game.env, &game.utilities, c),
            AlgorithmConfig::Loglinear(c) => loglinear_baseline_run(&game.env, &game.utilities, c),
        }
    }

    /// Copy with one swept parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let integer = || -> Result<u64> {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::Config(format!("{} must be a positive integer, got {value}", parameter.name())));
            }
            Ok(value as u64)
        };
        let unsupported = || Error::Config(format!("{} cannot be swept for {}", parameter.name(), self.algorithm().tag()));
        match (parameter, &mut out) {
            (SweepParameter::Epsilon, AlgorithmConfig::Gnum(c)) => c.epsilon = value,
            (SweepParameter::Epsilon, AlgorithmConfig::Cnum(c)) => c.epsilon = value,
            (SweepParameter::FrameLen, AlgorithmConfig::Cnum(c)) => c.frame_len = integer()?,
            (SweepParameter::FrameLen, AlgorithmConfig::Loglinear(c)) => match &mut c.mode {
                LogLinearMode::Adaptive { frame_len, .. } => *frame_len = integer()?,
                LogLinearMode::Fixed { .. } => return Err(unsupported()),
            },
            (SweepParameter::NumFrames, AlgorithmConfig::Cnum(c)) => c.num_frames = integer()? as usize,
            (SweepParameter::NumFrames, AlgorithmConfig::ExactGradient(c)) => c.num_frames = integer()? as usize,
            (SweepParameter::Window, AlgorithmConfig::Gnum(c)) => c.window = integer()? as usize,
            (SweepParameter::Horizon, AlgorithmConfig::Gnum(c)) => c.horizon = integer()?,
            (SweepParameter::Beta, AlgorithmConfig::Loglinear(c)) => c.beta = value,
            _ => return Err(unsupported()),
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    Epsilon,
    FrameLen,
    NumFrames,
    Window,
    Horizon,
    Beta,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::FrameLen => "frame-len",
            SweepParameter::NumFrames => "num-frames",
            SweepParameter::Window => "window",
            SweepParameter::Horizon => "horizon",
            SweepParameter::Beta => "beta",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            SweepParameter::Epsilon,
            SweepParameter::FrameLen,
            SweepParameter::NumFrames,
            SweepParameter::Window,
            SweepParameter::Horizon,
            SweepParameter::Beta,
        ]
        .into_iter()
        .find(|p| p.name() == s || p.name().replace('-', "_") == s)
        .ok_or_else(|| format!("unknown sweep parameter {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Game file; relative paths resolve against the experiment file.
    pub game: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Overrides the engine's `record_stride` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<u64>,
    pub algorithm: AlgorithmConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    /// Parses the file and resolves relative `game` and `output_dir` paths
    /// against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.game.is_relative() {
            cfg.game = base.join(&cfg.game);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn load_game(&self) -> Result<GameDefinition> {
        if !self.game.exists() {
            return Err(Error::Config(format!("game file {} does not exist", self.game.display())));
        }
        GameDefinition::load(&self.game)
    }

    /// `(label, engine config)` for every sweep point; a single unlabeled
    /// point without a sweep.
    pub fn points(&self) -> Result<Vec<(Option<String>, AlgorithmConfig)>> {
        let base = match self.record_stride {
            Some(s) => self.algorithm.with_stride(s),
            None => self.algorithm.clone(),
        };
        match &self.sweep {
            None => Ok(vec![(None, base)]),
            Some(sweep) => sweep
                .values
                .iter()
                .map(|&v| Ok((Some(format!("{}={v}", sweep.parameter.name())), base.with_parameter(sweep.parameter, v)?)))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<GameDefinition> {
        let game = self.load_game()?;
        for (_, point) in self.points()? {
            point.validate(&game)?;
        }
        Ok(game)
    }
}

/// Files written for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub label: Option<String>,
    pub seed: u64,
    pub csv: PathBuf,
    pub summary_path: PathBuf,
    pub summary: RunSummary,
}

/// JSON document written next to each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub game: PathBuf,
    pub label: Option<String>,
    #[serde(flatten)]
    pub summary: RunSummary,
}

fn file_stem(algorithm: Algorithm, label: Option<&str>, seed: u64) -> String {
    match label {
        Some(l) => format!("{}_{}_seed{seed}", algorithm.tag(), l.replace(['=', '/'], "_")),
        None => format!("{}_seed{seed}", algorithm.tag()),
    }
}

/// Runs every (sweep point, seed) pair in parallel. The first engine error
/// aborts the experiment; invariant violations keep their error kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunArtifact>> {
    let game = cfg.validate()?;
    if cfg.seeds.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let jobs: Vec<(Option<String>, AlgorithmConfig, u64)> = cfg
        .points()?
        .into_iter()
        .flat_map(|(label, point)| cfg.seeds.iter().map(move |&s| (label.clone(), point.with_seed(s), s)))
        .collect();
    jobs.into_par_iter()
        .map(|(label, point, seed)| {
            let trace = point.run(&game)?;
            let stem = file_stem(point.algorithm(), label.as_deref(), seed);
            let csv = cfg.output_dir.join(format!("{stem}.csv"));
            trace.write_csv(BufWriter::new(fs::File::create(&csv)?))?;
            let summary = trace.summary();
            let summary_path = cfg.output_dir.join(format!("{stem}.json"));
            let doc = SummaryFile { game: cfg.game.clone(), label: label.clone(), summary: summary.clone() };
            fs::write(&summary_path, serde_json::to_vec_pretty(&doc)?)?;
            log::info!("wrote {}", csv.display());
            Ok(RunArtifact { label, seed, csv, summary_path, summary })
        })
        .collect()
}
