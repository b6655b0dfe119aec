//! Natural-gradient descent with per-iteration measurement-cost accounting.
//!
//! Each iteration estimates the metric tensor and gradient exactly on the
//! simulator, applies the regularized-inverse update
//! theta <- theta - lambda * (F + eta*Id)^{-1} g, and records what that step
//! *would have cost* on hardware: exact shot totals for both estimator
//! families, the optimal-plan total, and the overhead relative to plain
//! sampled gradient descent. The scan over system sizes at the bottom reuses
//! the same loop to compare metric and gradient budgets at matched
//! convergence depth.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{optimal_plan, overhead_report, shot_budget, CircuitCosts};
use crate::ansatz::{build_layered_ansatz, AnsatzCircuit, Block};
use crate::estimator::{FisherProtocol, MetricEstimate};
use crate::pauli::{build_hamiltonian, random_omega, HamiltonianKind, PauliSum};
use crate::propagation::RegularizedInverse;
use crate::rng::{stream_rng, Stream};
use crate::state::StateVector;
use crate::{Error, Result};

/// Accuracy target for the per-iteration budgets: a fixed update error, or a
/// fraction of the current update norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsTarget {
    Absolute(f64),
    Relative(f64),
}

impl EpsTarget {
    pub fn resolve(&self, update_norm: f64) -> f64 {
        match *self {
            EpsTarget::Absolute(e) => e,
            EpsTarget::Relative(r) => r * update_norm,
        }
    }

    pub fn is_relative(&self) -> bool {
        matches!(self, EpsTarget::Relative(_))
    }
}

/// How many circuits one gradient shot costs: one per Hamiltonian term, or
/// one per qubit-wise commuting group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingStrategy {
    PerTerm,
    Qubitwise,
}

impl GroupingStrategy {
    pub fn gradient_cost(&self, h: &PauliSum) -> f64 {
        match self {
            GroupingStrategy::PerTerm => h.term_count() as f64,
            GroupingStrategy::Qubitwise => h.qubitwise_commuting_groups().len() as f64,
        }
    }
}

/// Circuits per metric-entry shot under each estimation protocol.
pub fn protocol_circuit_cost(p: FisherProtocol) -> f64 {
    match p {
        FisherProtocol::PureAbc => 2.0,
        FisherProtocol::SwapTest => 1.0,
    }
}

#[derive(Debug, Clone)]
pub enum OmegaSpec {
    /// On-site field strengths given outright.
    Explicit(Vec<f64>),
    /// Drawn uniformly from [-1, 1) using the run seed.
    Seeded,
}

#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub kind: HamiltonianKind,
    pub j: f64,
    pub omega: OmegaSpec,
}

impl HamiltonianSpec {
    pub fn build(&self, n: usize, seed: u64) -> Result<PauliSum> {
        let omega = match &self.omega {
            OmegaSpec::Explicit(w) => w.clone(),
            OmegaSpec::Seeded => random_omega(n, seed),
        };
        build_hamiltonian(self.kind, n, self.j, &omega)
    }
}

#[derive(Debug, Clone)]
pub enum InitMode {
    /// Start from these angles.
    Explicit(Vec<f64>),
    /// Uniform angles in [-pi, pi).
    Random,
    /// Random start refined by plain gradient descent, then perturbed with
    /// Gaussian noise of the given width — a controlled distance from a
    /// local optimum.
    NearOptimum {
        perturbation: f64,
        presteps: usize,
        prerate: f64,
    },
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub n: usize,
    pub blocks: Vec<Block>,
    pub hamiltonian: HamiltonianSpec,
    pub eta: f64,
    pub lambda: f64,
    pub max_iters: usize,
    pub eps: EpsTarget,
    pub protocol: FisherProtocol,
    pub init: InitMode,
    pub seed: u64,
    /// Compute the exact ground energy alongside the trace (dimension
    /// permitting) so energies can be judged against it.
    pub ground_energy: bool,
}

/// State and cost diagnostics of one iteration, captured before the step.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: usize,
    pub theta: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub natgrad_norm: f64,
    pub kappa_uniform: f64,
    pub kappa_optimal: f64,
    /// Exact metric-family shot total 2 nu^2 S_F / eps^2.
    pub n_f: f64,
    /// Exact gradient-family shot total 2 nu S_g / eps^2.
    pub n_g: f64,
    /// Total of the continuous proportional allocation at the same target.
    pub n_opt: f64,
    pub spc_inv: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub rows: Vec<TraceRow>,
    pub ground_energy: Option<f64>,
    /// Set when the energy rose for twenty consecutive iterations.
    pub diverged: bool,
}

/// Column layout of [`trace_to_csv`].
pub const TRACE_CSV_HEADER: &str =
    "t,energy,grad_norm,natgrad_norm,kappa_uniform,kappa_optimal,n_f,n_g,n_opt,spc_inv";

/// Render the per-iteration diagnostics; angle vectors are omitted so rows
/// have a fixed width at every dimension.
pub fn trace_to_csv(trace: &EvolutionTrace) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.energy,
            r.grad_norm,
            r.natgrad_norm,
            r.kappa_uniform,
            r.kappa_optimal,
            r.n_f,
            r.n_g,
            r.n_opt,
            r.spc_inv
        ));
    }
    out
}

/// theta - lambda * inv * g.
pub fn natural_gradient_step(
    theta: &[f64],
    inv: &RegularizedInverse,
    grad: &DVector<f64>,
    lambda: f64,
) -> Vec<f64> {
    let v = inv.apply(grad);
    theta
        .iter()
        .zip(v.iter())
        .map(|(t, vk)| t - lambda * vk)
        .collect()
}

/// Unpreconditioned descent theta <- theta - rate * g; used to approach a
/// local optimum cheaply before perturbed starts.
pub fn plain_gradient_descent(
    circuit: &AnsatzCircuit,
    h: &PauliSum,
    theta: &[f64],
    steps: usize,
    rate: f64,
) -> Result<Vec<f64>> {
    let mut theta = theta.to_vec();
    for _ in 0..steps {
        let m = MetricEstimate::compute(circuit, &theta, h, FisherProtocol::PureAbc)?;
        for (t, g) in theta.iter_mut().zip(m.grad.iter()) {
            *t -= rate * g;
        }
    }
    Ok(theta)
}

/// Starting angles for a run: explicit values, a seeded uniform draw, or a
/// classically refined point with Gaussian perturbation.
pub fn initial_theta(
    cfg: &EvolutionConfig,
    circuit: &AnsatzCircuit,
    h: &PauliSum,
) -> Result<Vec<f64>> {
    let nu = circuit.parameter_count();
    let random = |salt: u64| -> Vec<f64> {
        let mut rng = stream_rng(cfg.seed, Stream::Theta0, &[salt]);
        (0..nu).map(|_| rng.gen_range(-PI..PI)).collect()
    };
    match &cfg.init {
        InitMode::Explicit(theta) => {
            if theta.len() != nu {
                return Err(Error::DimensionMismatch(format!(
                    "{} initial angles for {nu} parameters",
                    theta.len()
                )));
            }
            Ok(theta.clone())
        }
        InitMode::Random => Ok(random(0)),
        InitMode::NearOptimum {
            perturbation,
            presteps,
            prerate,
        } => {
            let refined = plain_gradient_descent(circuit, h, &random(0), *presteps, *prerate)?;
            let noise = Normal::new(0.0, *perturbation)
                .map_err(|e| Error::InvalidArgument(format!("perturbation width: {e}")))?;
            let mut rng = stream_rng(cfg.seed, Stream::Perturbation, &[]);
            Ok(refined.iter().map(|t| t + noise.sample(&mut rng)).collect())
        }
    }
}

struct IterationCosts {
    kappa_uniform: f64,
    kappa_optimal: f64,
    n_f: f64,
    n_g: f64,
    n_opt: f64,
}

fn iteration_costs(
    m: &MetricEstimate,
    inv: &RegularizedInverse,
    eps: f64,
) -> Result<IterationCosts> {
    // Unit circuit costs: the trace records shot totals; per-circuit factors
    // are a reporting concern of the closed-form budgets.
    let unit = CircuitCosts { f_f: 1.0, f_g: 1.0 };
    let spc_h: f64 = m.h_coeffs.iter().map(|c| c * c).sum();
    let budget = shot_budget(m, inv, eps, unit, spc_h)?;
    let (kappa_uniform, kappa_optimal) = match overhead_report(m, inv, eps, false) {
        Ok(r) => (r.kappa_uniform, r.kappa_optimal),
        // every gradient component exact: the reference cost is zero and the
        // ratio carries no information
        Err(Error::Degenerate(_)) => (f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    let n_opt = optimal_plan(m, inv, eps, false)?.total_continuous();
    Ok(IterationCosts {
        kappa_uniform,
        kappa_optimal,
        n_f: budget.n_f_exact,
        n_g: budget.n_g_exact,
        n_opt,
    })
}

/// How many consecutive energy increases mark a run as diverged.
const DIVERGENCE_PATIENCE: usize = 20;

/// Run natural-gradient descent and record per-iteration cost diagnostics.
pub fn run(cfg: &EvolutionConfig) -> Result<EvolutionTrace> {
    let circuit = build_layered_ansatz(cfg.n, &cfg.blocks)?;
    let h = cfg.hamiltonian.build(cfg.n, cfg.seed)?;
    let mut theta = initial_theta(cfg, &circuit, &h)?;
    let relative = cfg.eps.is_relative();

    let mut rows = Vec::with_capacity(cfg.max_iters);
    let mut rising = 0usize;
    let mut diverged = false;
    let mut prev_energy = f64::INFINITY;
    for t in 0..cfg.max_iters {
        let m = MetricEstimate::compute(&circuit, &theta, &h, cfg.protocol)?;
        let inv = RegularizedInverse::new(&m.fisher, cfg.eta)?;
        let v = inv.apply(&m.grad);
        let natgrad_norm = v.norm();
        let eps = cfg.eps.resolve(natgrad_norm);
        let energy = circuit.prepare_state(&theta)?.expectation(&h)?;
        let mut costs = iteration_costs(&m, &inv, eps)?;
        if relative {
            let vsq = v.norm_squared();
            let scale = if vsq > 0.0 { m.grad.norm_squared() / vsq } else { f64::NAN };
            costs.kappa_uniform *= scale;
            costs.kappa_optimal *= scale;
        }
        rows.push(TraceRow {
            t,
            theta: theta.clone(),
            energy,
            grad_norm: m.grad.norm(),
            natgrad_norm,
            kappa_uniform: costs.kappa_uniform,
            kappa_optimal: costs.kappa_optimal,
            n_f: costs.n_f,
            n_g: costs.n_g,
            n_opt: costs.n_opt,
            spc_inv: inv.spc(),
        });
        if energy > prev_energy {
            rising += 1;
            if rising >= DIVERGENCE_PATIENCE {
                diverged = true;
            }
        } else {
            rising = 0;
        }
        prev_energy = energy;
        theta = theta
            .iter()
            .zip(v.iter())
            .map(|(t, vk)| t - cfg.lambda * vk)
            .collect();
    }

    let ground_energy = if cfg.ground_energy && cfg.n <= 10 {
        Some(ground_state_energy(&h, cfg.seed)?)
    } else {
        None
    };
    Ok(EvolutionTrace {
        rows,
        ground_energy,
        diverged,
    })
}

/// Smallest eigenvalue of the Hamiltonian by the Lanczos iteration with full
/// reorthogonalization, never materializing the dense operator.
pub fn ground_state_energy(h: &PauliSum, seed: u64) -> Result<f64> {
    let n = h.qubit_count();
    let dim = 1usize << n;
    let steps = dim.min(200);
    let mut rng = stream_rng(seed, Stream::Spectrum, &[]);
    let mut amps: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    let mut basis = vec![StateVector::from_amplitudes(n, amps)?];
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    for j in 0..steps {
        let vj = basis[j].clone();
        let mut w = vj.apply_pauli_sum(h)?;
        let alpha = vj.inner(&w)?.re;
        alphas.push(alpha);
        // subtract the projections onto every previous vector; small
        // subspaces make the extra orthogonalization cheap and rock solid
        for b in &basis {
            let overlap = b.inner(&w)?;
            w.axpy(-overlap, b);
        }
        let beta = w.norm();
        if beta < 1e-12 || j + 1 == steps {
            break;
        }
        betas.push(beta);
        w.scale(Complex64::new(1.0 / beta, 0.0));
        basis.push(w);
    }
    let m = alphas.len();
    let mut tri = DMatrix::zeros(m, m);
    for j in 0..m {
        tri[(j, j)] = alphas[j];
        if j + 1 < m {
            tri[(j, j + 1)] = betas[j];
            tri[(j + 1, j)] = betas[j];
        }
    }
    Ok(tri.symmetric_eigen().eigenvalues.min())
}

/// Scan setup: one hardware-cost ratio per (size, disorder instance).
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub kind: HamiltonianKind,
    pub j: f64,
    pub blocks: Vec<Block>,
    pub sizes: Vec<usize>,
    pub instances: usize,
    /// Descend until the update norm falls to this value.
    pub target_update_norm: f64,
    pub eta: f64,
    pub lambda: f64,
    /// Iteration cap; instances that fail to reach the target are excluded
    /// from the aggregates but still reported.
    pub max_iters: usize,
    pub protocol: FisherProtocol,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub n: usize,
    pub instance: usize,
    /// Metric-to-gradient budget ratio nu S_F / S_g at the stopping point;
    /// the accuracy target cancels.
    pub ratio: f64,
    pub converged: bool,
    pub iters: usize,
}

#[derive(Debug, Clone)]
pub struct ScanAggregate {
    pub n: usize,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub converged: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    pub aggregates: Vec<ScanAggregate>,
}

pub const SCAN_ROWS_CSV_HEADER: &str = "n,instance,converged,iters,ratio";
pub const SCAN_AGGREGATE_CSV_HEADER: &str = "n,mean_ratio,std_ratio,converged,excluded";

pub fn scan_rows_to_csv(table: &ScanTable) -> String {
    let mut out = String::from(SCAN_ROWS_CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n, r.instance, r.converged, r.iters, r.ratio
        ));
    }
    out
}

pub fn scan_aggregates_to_csv(table: &ScanTable) -> String {
    let mut out = String::from(SCAN_AGGREGATE_CSV_HEADER);
    out.push('\n');
    for a in &table.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.n, a.mean_ratio, a.std_ratio, a.converged, a.excluded
        ));
    }
    out
}

fn scan_instance(cfg: &ScanConfig, n: usize, instance: usize) -> Result<ScanRow> {
    let circuit = build_layered_ansatz(n, &cfg.blocks)?;
    let omega: Vec<f64> = {
        let mut rng = stream_rng(cfg.seed, Stream::Omega, &[n as u64, instance as u64]);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let h = build_hamiltonian(cfg.kind, n, cfg.j, &omega)?;
    let nu = circuit.parameter_count();
    let mut theta: Vec<f64> = {
        let mut rng = stream_rng(cfg.seed, Stream::Theta0, &[n as u64, instance as u64]);
        (0..nu).map(|_| rng.gen_range(-PI..PI)).collect()
    };
    let mut iters = 0;
    loop {
        let m = MetricEstimate::compute(&circuit, &theta, &h, cfg.protocol)?;
        let inv = RegularizedInverse::new(&m.fisher, cfg.eta)?;
        let v = inv.apply(&m.grad);
        let converged = v.norm() <= cfg.target_update_norm;
        if converged || iters >= cfg.max_iters {
            let sums = crate::allocation::cost_sums(&m, &inv)?;
            let ratio = if sums.s_g > 0.0 {
                nu as f64 * sums.s_f / sums.s_g
            } else {
                f64::NAN
            };
            return Ok(ScanRow {
                n,
                instance,
                ratio,
                converged,
                iters,
            });
        }
        for (t, vk) in theta.iter_mut().zip(v.iter()) {
            *t -= cfg.lambda * vk;
        }
        iters += 1;
    }
}

/// Descend every (size, instance) pair to matched depth and compare the two
/// measurement families there.
pub fn qubit_scan(cfg: &ScanConfig) -> Result<ScanTable> {
    let jobs: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| (0..cfg.instances).map(move |i| (n, i)))
        .collect();
    let rows: Vec<ScanRow> = jobs
        .par_iter()
        .map(|&(n, i)| scan_instance(cfg, n, i))
        .collect::<Result<Vec<_>>>()?;
    let aggregates = cfg
        .sizes
        .iter()
        .map(|&n| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.converged && r.ratio.is_finite())
                .map(|r| r.ratio)
                .collect();
            let excluded = rows.iter().filter(|r| r.n == n).count() - values.len();
            let mean = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            let std = if values.is_empty() {
                f64::NAN
            } else {
                (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                    / values.len() as f64)
                    .sqrt()
            };
            ScanAggregate {
                n,
                mean_ratio: mean,
                std_ratio: std,
                converged: values.len(),
                excluded,
            }
        })
        .collect();
    Ok(ScanTable { rows, aggregates })
}
