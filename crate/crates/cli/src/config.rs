//! Run configuration: one TOML file, overridable by command-line flags.
//!
//! The file pins everything a run depends on — system size, circuit pattern,
//! Hamiltonian, solver constants, accuracy target, and the root seed — so
//! that re-running a manifest's echoed configuration reproduces the original
//! data outputs byte for byte.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use natgrad::allocation::PlanMode;
use natgrad::ansatz::{parse_pattern, Block};
use natgrad::estimator::FisherProtocol;
use natgrad::evolution::{
    EpsTarget, EvolutionConfig, GroupingStrategy, HamiltonianSpec, InitMode, OmegaSpec, ScanConfig,
};
use natgrad::pauli::{random_omega, HamiltonianKind};

/// A problem with the configuration (unreadable file, bad key, value out of
/// range). The process exits with status 2 when it hits one.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Whole configuration file. Unknown keys are rejected so typos surface as
/// config errors instead of silently running defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Root seed; every random draw in a run flows from it through named
    /// substreams, so one integer pins the whole run.
    #[serde(default)]
    pub seed: u64,
    pub system: System,
    pub ansatz: Ansatz,
    #[serde(default)]
    pub hamiltonian: Hamiltonian,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub eps: Eps,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub fisher: Fisher,
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default)]
    pub point: Point,
    #[serde(default)]
    pub evolve: Evolve,
    #[serde(default)]
    pub allocate: Allocate,
    #[serde(default)]
    pub validate: Validate,
    #[serde(default)]
    pub scan: Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    /// Number of qubits.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ansatz {
    /// Layer pattern such as "B1B2B2".
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hamiltonian {
    pub kind: HamiltonianKind,
    /// Two-site coupling strength.
    pub j: f64,
    /// Draw the on-site fields from this seed instead of the root seed,
    /// decoupling the Hamiltonian instance from the rest of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_seed: Option<u64>,
    /// Explicit on-site fields; takes precedence over any seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

impl Default for Hamiltonian {
    fn default() -> Self {
        Hamiltonian {
            kind: HamiltonianKind::Chain,
            j: 1.0,
            omega_seed: None,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    /// Metric regularization strength.
    pub eta: f64,
    /// Step size.
    pub lambda: f64,
    pub max_iters: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Solver {
            eta: 0.1,
            lambda: 0.2,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsMode {
    /// The target is the value itself.
    Absolute,
    /// The target is value times the current update norm.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Eps {
    pub mode: EpsMode,
    pub value: f64,
}

impl Default for Eps {
    fn default() -> Self {
        Eps {
            mode: EpsMode::Absolute,
            value: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Explicit,
    Random,
    NearOptimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Init {
    pub mode: InitKind,
    /// Starting angles for `mode = "explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Gaussian noise width for `mode = "near_optimum"`.
    pub perturbation: f64,
    /// Plain-gradient refinement steps before perturbing.
    pub presteps: usize,
    /// Refinement step size.
    pub prerate: f64,
}

impl Default for Init {
    fn default() -> Self {
        Init {
            mode: InitKind::Random,
            theta: None,
            perturbation: 0.1,
            presteps: 200,
            prerate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fisher {
    pub protocol: FisherProtocol,
}

impl Default for Fisher {
    fn default() -> Self {
        Fisher {
            protocol: FisherProtocol::PureAbc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grouping {
    pub strategy: GroupingStrategy,
}

impl Default for Grouping {
    fn default() -> Self {
        Grouping {
            strategy: GroupingStrategy::PerTerm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    /// A seeded uniform draw, the same angles an `evolve` run would start
    /// from under random initialization.
    Random,
    /// The all-zeros point.
    Zero,
}

/// The parameter point at which `allocate`, `validate`, and `bounds` work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Point {
    pub source: PointSource,
    /// Explicit angles; takes precedence over `source`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl Default for Point {
    fn default() -> Self {
        Point {
            source: PointSource::Random,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Evolve {
    /// Compute the exact ground energy alongside the trace when the
    /// dimension permits.
    pub ground_energy: bool,
}

impl Default for Evolve {
    fn default() -> Self {
        Evolve {
            ground_energy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Allocate {
    pub mode: PlanMode,
}

impl Default for Allocate {
    fn default() -> Self {
        Allocate {
            mode: PlanMode::Optimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Validate {
    /// Monte-Carlo repetitions; at least 100.
    pub trials: usize,
    /// Plan to validate: `uniform` or `optimal_symmetric` (the independent
    /// accounting of `optimal` cannot be realized by measurements).
    pub mode: PlanMode,
}

impl Default for Validate {
    fn default() -> Self {
        Validate {
            trials: 1000,
            mode: PlanMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scan {
    /// Qubit counts to sweep.
    pub sizes: Vec<usize>,
    /// Hamiltonian instances per qubit count.
    pub instances: usize,
    /// Descend until the update norm falls to this value.
    pub target_update_norm: f64,
}

impl Default for Scan {
    fn default() -> Self {
        Scan {
            sizes: vec![4, 6, 8],
            instances: 10,
            target_update_norm: 0.1,
        }
    }
}

impl Config {
    /// Parse a file without further checks; callers apply flag overrides and
    /// then run [`Config::check`].
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Structural checks deserialization cannot express.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.system.n == 0 {
            return Err(ConfigError("system.n must be at least 1".into()));
        }
        parse_pattern(&self.ansatz.pattern)
            .map_err(|e| ConfigError(format!("ansatz.pattern: {e}")))?;
        if self.solver.lambda <= 0.0 || self.solver.lambda.is_nan() {
            return Err(ConfigError(format!(
                "solver.lambda must be positive, got {}",
                self.solver.lambda
            )));
        }
        if self.solver.eta < 0.0 || self.solver.eta.is_nan() {
            return Err(ConfigError(format!(
                "solver.eta must be nonnegative, got {}",
                self.solver.eta
            )));
        }
        if self.solver.max_iters == 0 {
            return Err(ConfigError("solver.max_iters must be at least 1".into()));
        }
        if self.eps.value <= 0.0 || self.eps.value.is_nan() {
            return Err(ConfigError(format!(
                "eps.value must be positive, got {}",
                self.eps.value
            )));
        }
        if let Some(omega) = &self.hamiltonian.omega {
            if omega.len() != self.system.n {
                return Err(ConfigError(format!(
                    "hamiltonian.omega has {} entries for {} qubits",
                    omega.len(),
                    self.system.n
                )));
            }
        }
        if self.scan.sizes.is_empty() {
            return Err(ConfigError("scan.sizes must not be empty".into()));
        }
        if self.scan.instances == 0 {
            return Err(ConfigError("scan.instances must be at least 1".into()));
        }
        if self.scan.target_update_norm <= 0.0 || self.scan.target_update_norm.is_nan() {
            return Err(ConfigError(format!(
                "scan.target_update_norm must be positive, got {}",
                self.scan.target_update_norm
            )));
        }
        Ok(())
    }

    /// The TOML text a manifest echoes; feeding it back reproduces the run.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn blocks(&self) -> Result<Vec<Block>, ConfigError> {
        parse_pattern(&self.ansatz.pattern).map_err(|e| ConfigError(format!("ansatz.pattern: {e}")))
    }

    pub fn eps_target(&self) -> EpsTarget {
        match self.eps.mode {
            EpsMode::Absolute => EpsTarget::Absolute(self.eps.value),
            EpsMode::Relative => EpsTarget::Relative(self.eps.value),
        }
    }

    /// On-site fields resolve in precedence order: explicit list, dedicated
    /// seed, root seed.
    pub fn hamiltonian_spec(&self) -> HamiltonianSpec {
        let omega = if let Some(w) = &self.hamiltonian.omega {
            OmegaSpec::Explicit(w.clone())
        } else if let Some(seed) = self.hamiltonian.omega_seed {
            OmegaSpec::Explicit(random_omega(self.system.n, seed))
        } else {
            OmegaSpec::Seeded
        };
        HamiltonianSpec {
            kind: self.hamiltonian.kind,
            j: self.hamiltonian.j,
            omega,
        }
    }

    fn init_mode(&self) -> Result<InitMode, ConfigError> {
        match self.init.mode {
            InitKind::Random => Ok(InitMode::Random),
            InitKind::Explicit => {
                let theta = self.init.theta.clone().ok_or_else(|| {
                    ConfigError("init.mode = \"explicit\" needs init.theta".into())
                })?;
                Ok(InitMode::Explicit(theta))
            }
            InitKind::NearOptimum => Ok(InitMode::NearOptimum {
                perturbation: self.init.perturbation,
                presteps: self.init.presteps,
                prerate: self.init.prerate,
            }),
        }
    }

    pub fn to_evolution(&self) -> Result<EvolutionConfig, ConfigError> {
        Ok(EvolutionConfig {
            n: self.system.n,
            blocks: self.blocks()?,
            hamiltonian: self.hamiltonian_spec(),
            eta: self.solver.eta,
            lambda: self.solver.lambda,
            max_iters: self.solver.max_iters,
            eps: self.eps_target(),
            protocol: self.fisher.protocol,
            init: self.init_mode()?,
            seed: self.seed,
            ground_energy: self.evolve.ground_energy,
        })
    }

    pub fn to_scan(&self) -> Result<ScanConfig, ConfigError> {
        Ok(ScanConfig {
            kind: self.hamiltonian.kind,
            j: self.hamiltonian.j,
            blocks: self.blocks()?,
            sizes: self.scan.sizes.clone(),
            instances: self.scan.instances,
            target_update_norm: self.scan.target_update_norm,
            eta: self.solver.eta,
            lambda: self.solver.lambda,
            max_iters: self.solver.max_iters,
            protocol: self.fisher.protocol,
            seed: self.seed,
        })
    }

    /// The init mode that realizes the configured parameter point for the
    /// single-point commands.
    pub fn point_init(&self, parameter_count: usize) -> InitMode {
        if let Some(theta) = &self.point.theta {
            InitMode::Explicit(theta.clone())
        } else {
            match self.point.source {
                PointSource::Random => InitMode::Random,
                PointSource::Zero => InitMode::Explicit(vec![0.0; parameter_count]),
            }
        }
    }
}

/// Parse a `--theta` argument: "random", "zero", or comma-separated angles.
pub fn parse_theta_arg(s: &str) -> Result<Point, ConfigError> {
    match s {
        "random" => Ok(Point {
            source: PointSource::Random,
            theta: None,
        }),
        "zero" => Ok(Point {
            source: PointSource::Zero,
            theta: None,
        }),
        _ => {
            let values = s
                .split(',')
                .map(|part| part.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| {
                    ConfigError(format!(
                        "--theta must be \"random\", \"zero\", or comma-separated angles: {e}"
                    ))
                })?;
            Ok(Point {
                source: PointSource::Random,
                theta: Some(values),
            })
        }
    }
}

/// Parse a `--mode` argument into a plan mode.
pub fn parse_mode_arg(s: &str) -> Result<PlanMode, ConfigError> {
    match s {
        "uniform" => Ok(PlanMode::Uniform),
        "optimal" => Ok(PlanMode::Optimal),
        "optimal_symmetric" => Ok(PlanMode::OptimalSymmetric),
        _ => Err(ConfigError(format!(
            "--mode must be uniform, optimal, or optimal_symmetric, got {s:?}"
        ))),
    }
}

/// Parse a `--sizes` argument: comma-separated qubit counts.
pub fn parse_sizes_arg(s: &str) -> Result<Vec<usize>, ConfigError> {
    s.split(',')
        .map(|part| part.trim().parse::<usize>())
        .collect::<Result<Vec<usize>, _>>()
        .map_err(|e| ConfigError(format!("--sizes must be comma-separated qubit counts: {e}")))
}
