//! Experiment configuration (TOML).
//!
//! ```toml
//! mode = "samc"                 # samc | samle | sa_generic | oracle | validate
//! chain_file = "chain10.txt"    # optional, bundled CHAIN10 when absent
//! k_max = 200000
//! k0 = 20000                    # default k_max / 10
//! replications = 1
//! seed = 0                      # replication r uses seed + r
//! snapshot_stride = 1000
//! output_dir = "out"            # SAMCMC_OUTPUT_DIR overrides
//!
//! [schedule]                    # a_k = c1·k^(−eta), b_k = c2·k^(−xi)
//! c1 = 1.0
//! eta = 0.7
//! c2 = 2.0
//! xi = 0.55
//! tau = 0.5
//! alpha = 10.0
//!
//! [ladder]                      # K_s = ball(theta0, r0·growth^s)
//! r0 = 10.0
//! growth = 10.0
//! theta0 = [0.0, 0.0]           # default zeros
//! initial_state = 1             # samc only, 1-based
//!
//! [samle]
//! data_file = "gaussian_toy.txt"  # optional, bundled fixture when absent
//! step = 1.0                    # per-coordinate half-width
//! bound = 1e100
//! sweeps = 1
//! scan = "componentwise"         # or "joint"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use samcmc::chain::ChainError;
use samcmc::samle::{FixtureError, GaussianToy, SamleOptions, Scan, HUGE_BOX};
use samcmc::schedule::ScheduleError;
use samcmc::truncation::{DEFAULT_GROWTH, DEFAULT_R0};
use samcmc::{validate_schedule, FiniteChainSpec, GainSchedule, ValidationReport};
use serde::Deserialize;
use thiserror::Error;

pub const OUTPUT_DIR_ENV: &str = "SAMCMC_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("schedule rejected: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("chain file: {0}")]
    Chain(#[from] ChainError),
    #[error("data file: {0}")]
    Fixture(#[from] FixtureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Samc,
    Samle,
    SaGeneric,
    Oracle,
    Validate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Samc => "samc",
            Mode::Samle => "samle",
            Mode::SaGeneric => "sa_generic",
            Mode::Oracle => "oracle",
            Mode::Validate => "validate",
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    c1: Option<f64>,
    eta: Option<f64>,
    c2: Option<f64>,
    xi: Option<f64>,
    tau: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLadder {
    r0: Option<f64>,
    growth: Option<f64>,
    theta0: Option<Vec<f64>>,
    initial_state: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSamle {
    data_file: Option<PathBuf>,
    step: Option<f64>,
    bound: Option<f64>,
    sweeps: Option<usize>,
    scan: Option<RawScan>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawScan {
    Componentwise,
    Joint,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    chain_file: Option<PathBuf>,
    k_max: Option<usize>,
    k0: Option<usize>,
    replications: Option<usize>,
    seed: Option<u64>,
    snapshot_stride: Option<usize>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    schedule: RawSchedule,
    #[serde(default)]
    ladder: RawLadder,
    #[serde(default)]
    samle: RawSamle,
}

pub const DEFAULT_K_MAX: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    pub r0: f64,
    pub growth: f64,
    /// Also the ladder centre and the reinitialization point.
    pub theta0: Vec<f64>,
    /// 0-based.
    pub initial_state: usize,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub chain: FiniteChainSpec,
    /// `None` means the bundled CHAIN10 instance.
    pub chain_file: Option<PathBuf>,
    pub schedule: GainSchedule,
    pub ladder: LadderConfig,
    pub k_max: usize,
    pub k0: usize,
    pub replications: usize,
    pub seed: u64,
    pub snapshot_stride: usize,
    pub output_dir: PathBuf,
    pub samle: SamleOptions,
    pub toy: GaussianToy,
}

impl ExperimentConfig {
    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    pub fn theta_dim(&self) -> usize {
        match self.mode {
            Mode::Samle => 1,
            _ => self.chain.n_regions() - 1,
        }
    }

    pub fn validation(&self) -> ValidationReport {
        validate_schedule(&self.schedule).expect("domain checked at load")
    }
}

/// Reads, resolves and validates a config; a schedule failing any clause is an error.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let cfg = load_config_unchecked(path)?;
    validate_schedule(&cfg.schedule)?.into_result()?;
    Ok(cfg)
}

/// Like [`load_config`] but leaves the schedule clauses to the caller.
pub fn load_config_unchecked(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base, &path.display().to_string())
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let chain_file = raw.chain_file.as_deref().map(resolve);
    let chain = match &chain_file {
        Some(p) => FiniteChainSpec::load(p)?,
        None => FiniteChainSpec::chain10(),
    };
    let toy = match raw.samle.data_file.as_deref().map(resolve) {
        Some(p) => GaussianToy::load(p)?,
        None => GaussianToy::fixture(),
    };

    let d = GainSchedule::default();
    let s = &raw.schedule;
    let schedule = GainSchedule::new(
        s.c1.unwrap_or(d.c1),
        s.eta.unwrap_or(d.eta),
        s.c2.unwrap_or(d.c2),
        s.xi.unwrap_or(d.xi),
        s.tau.unwrap_or(d.tau),
        s.alpha.unwrap_or(d.alpha),
    )?;

    let k_max = raw.k_max.unwrap_or(DEFAULT_K_MAX);
    if k_max == 0 {
        return Err(ConfigError::Invalid("k_max must be at least 1".into()));
    }
    let k0 = raw.k0.unwrap_or(k_max / 10);
    if k0 >= k_max {
        return Err(ConfigError::Invalid(format!("k0 = {k0} must be below k_max = {k_max}")));
    }
    let replications = raw.replications.unwrap_or(1);
    if replications == 0 {
        return Err(ConfigError::Invalid("replications must be at least 1".into()));
    }

    let theta_dim = match raw.mode {
        Mode::Samle => 1,
        _ => chain.n_regions() - 1,
    };
    let theta0 = raw.ladder.theta0.clone().unwrap_or_else(|| vec![0.0; theta_dim]);
    if theta0.len() != theta_dim {
        return Err(ConfigError::Invalid(format!(
            "ladder.theta0 has {} components, {} mode needs {theta_dim}",
            theta0.len(),
            raw.mode
        )));
    }
    let initial_state = raw.ladder.initial_state.unwrap_or(1);
    if initial_state == 0 || initial_state > chain.n_states() {
        return Err(ConfigError::Invalid(format!(
            "ladder.initial_state = {initial_state} outside 1..={}",
            chain.n_states()
        )));
    }
    let ladder = LadderConfig {
        r0: raw.ladder.r0.unwrap_or(DEFAULT_R0),
        growth: raw.ladder.growth.unwrap_or(DEFAULT_GROWTH),
        theta0,
        initial_state: initial_state - 1,
    };
    if !(ladder.r0 > 0.0 && ladder.r0.is_finite()) || !(ladder.growth > 1.0 && ladder.growth.is_finite()) {
        return Err(ConfigError::Invalid(format!(
            "ladder needs r0 > 0 and growth > 1, got r0 = {}, growth = {}",
            ladder.r0, ladder.growth
        )));
    }

    let sd = SamleOptions::default();
    let samle = SamleOptions {
        step: raw.samle.step.unwrap_or(sd.step),
        bound: raw.samle.bound.unwrap_or(HUGE_BOX),
        sweeps: raw.samle.sweeps.unwrap_or(sd.sweeps),
        scan: match raw.samle.scan {
            Some(RawScan::Joint) => Scan::Joint,
            Some(RawScan::Componentwise) => Scan::Componentwise,
            None => sd.scan,
        },
    };
    if !(samle.step > 0.0 && samle.step.is_finite()) || !(samle.bound > 0.0) || samle.sweeps == 0 {
        return Err(ConfigError::Invalid(format!(
            "samle needs step > 0, bound > 0, sweeps ≥ 1, got {samle:?}"
        )));
    }

    let output_dir = match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => resolve(raw.output_dir.as_deref().unwrap_or(Path::new("out"))),
    };

    Ok(ExperimentConfig {
        mode: raw.mode,
        chain,
        chain_file,
        schedule,
        ladder,
        k_max,
        k0,
        replications,
        seed: raw.seed.unwrap_or(0),
        snapshot_stride: raw.snapshot_stride.unwrap_or(samcmc::driver::DEFAULT_SNAPSHOT_STRIDE),
        output_dir,
        samle,
        toy,
    })
}
