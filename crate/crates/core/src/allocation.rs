//! Shot budgets: how many repetitions each measured quantity needs so that
//! the natural-gradient update v = (F + eta*Id)^{-1} g reaches a target
//! accuracy eps.
//!
//! Two plans are offered. The *uniform* plan gives every metric entry the
//! same count and every gradient entry the same count, splitting the error
//! budget evenly between the two estimator families. The *optimal* plan
//! distributes shots proportionally to sqrt(weight * variance) per element,
//! which minimizes the total count at fixed predicted error (and hence the
//! predicted error at fixed total count). Closed-form worst-case bounds and
//! the measurement-overhead diagnostics derived from them live here too.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimator::MetricEstimate;
use crate::propagation::{
    predicted_epsilon2, propagation_coefficients, PropagationCoefficients, RegularizedInverse,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Same count for every metric entry; same count for every gradient entry.
    Uniform,
    /// Per-element counts proportional to sqrt(weight * variance), all nu^2
    /// metric entries treated independently.
    Optimal,
    /// As `Optimal`, but entry (k,l) and (l,k) share one measurement; counts
    /// live on the lower triangle.
    OptimalSymmetric,
}

/// Integer shot counts per element, plus the continuous allocation they were
/// rounded from.
#[derive(Debug, Clone)]
pub struct AllocationPlan {
    pub mode: PlanMode,
    /// Shots per metric entry. Symmetric for `Uniform`/`Optimal`; lower
    /// triangle only (upper zero) for `OptimalSymmetric`.
    pub fisher_shots: DMatrix<u64>,
    pub grad_shots: DVector<u64>,
    /// Unrounded counts the integer counts were derived from.
    pub fisher_continuous: DMatrix<f64>,
    pub grad_continuous: DVector<f64>,
    /// Accuracy target the plan was built for.
    pub eps2_target: f64,
    /// First-order error of the integer plan; at most `eps2_target`.
    pub predicted_eps2: f64,
}

impl AllocationPlan {
    pub fn dim(&self) -> usize {
        self.grad_shots.len()
    }

    pub(crate) fn check_dim(&self, nu: usize) -> Result<()> {
        if self.dim() != nu || self.fisher_shots.nrows() != nu || self.fisher_shots.ncols() != nu {
            return Err(Error::DimensionMismatch(format!(
                "plan dimension {} does not match {nu}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Total integer shots across both estimator families.
    pub fn total_shots(&self) -> u64 {
        self.fisher_shots.iter().sum::<u64>() + self.grad_shots.iter().sum::<u64>()
    }

    /// Total of the continuous allocation.
    pub fn total_continuous(&self) -> f64 {
        self.fisher_continuous.iter().sum::<f64>() + self.grad_continuous.iter().sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlanDto::from(self)).expect("plan serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: PlanDto =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("plan JSON: {e}")))?;
        dto.into_plan()
    }
}

#[derive(Serialize, Deserialize)]
struct PlanDto {
    mode: PlanMode,
    nu: usize,
    eps2_target: f64,
    predicted_eps2: f64,
    total_shots: u64,
    /// Row-major nu x nu.
    fisher_shots: Vec<u64>,
    grad_shots: Vec<u64>,
    fisher_continuous: Vec<f64>,
    grad_continuous: Vec<f64>,
}

impl From<&AllocationPlan> for PlanDto {
    fn from(p: &AllocationPlan) -> Self {
        let nu = p.dim();
        PlanDto {
            mode: p.mode,
            nu,
            eps2_target: p.eps2_target,
            predicted_eps2: p.predicted_eps2,
            total_shots: p.total_shots(),
            fisher_shots: (0..nu)
                .flat_map(|k| (0..nu).map(move |l| (k, l)))
                .map(|(k, l)| p.fisher_shots[(k, l)])
                .collect(),
            grad_shots: p.grad_shots.iter().copied().collect(),
            fisher_continuous: (0..nu)
                .flat_map(|k| (0..nu).map(move |l| (k, l)))
                .map(|(k, l)| p.fisher_continuous[(k, l)])
                .collect(),
            grad_continuous: p.grad_continuous.iter().copied().collect(),
        }
    }
}

impl PlanDto {
    fn into_plan(self) -> Result<AllocationPlan> {
        let nu = self.nu;
        if self.fisher_shots.len() != nu * nu
            || self.grad_shots.len() != nu
            || self.fisher_continuous.len() != nu * nu
            || self.grad_continuous.len() != nu
        {
            return Err(Error::Parse("plan JSON has inconsistent shapes".into()));
        }
        Ok(AllocationPlan {
            mode: self.mode,
            fisher_shots: DMatrix::from_row_slice(nu, nu, &self.fisher_shots),
            grad_shots: DVector::from_row_slice(&self.grad_shots),
            fisher_continuous: DMatrix::from_row_slice(nu, nu, &self.fisher_continuous),
            grad_continuous: DVector::from_row_slice(&self.grad_continuous),
            eps2_target: self.eps2_target,
            predicted_eps2: self.predicted_eps2,
        })
    }
}

/// Error weights and their sums for one (inverse, estimate) pair; the scalars
/// every budget formula below is built from.
#[derive(Debug, Clone)]
pub struct CostSums {
    pub coeffs: PropagationCoefficients,
    /// sum_kl a_kl Var{F_kl}
    pub s_f: f64,
    /// sum_k b_k Var[g_k]
    pub s_g: f64,
    /// sum_l Var[g_l] (plain sampled-gradient budget, no inversion)
    pub s_smpl: f64,
}

pub fn cost_sums(m: &MetricEstimate, inv: &RegularizedInverse) -> Result<CostSums> {
    let coeffs = propagation_coefficients(inv, &m.grad)?;
    let nu = m.parameter_count();
    let mut s_f = 0.0;
    let mut s_g = 0.0;
    for k in 0..nu {
        for l in 0..nu {
            s_f += coeffs.a[(k, l)] * m.var_fisher[(k, l)];
        }
        s_g += coeffs.b[k] * m.var_grad[k];
    }
    let s_smpl = m.var_grad.iter().sum();
    Ok(CostSums {
        coeffs,
        s_f,
        s_g,
        s_smpl,
    })
}

fn ceil_shots(x: f64) -> u64 {
    debug_assert!(x.is_finite() && x >= 0.0);
    x.ceil() as u64
}

/// Rebalance integer counts after rounding. The predicted error is
/// sum_e w_e / n_e, so moving one shot from element d to element r changes it
/// by w_r / (n_r (n_r + 1)) gained minus w_d / (n_d (n_d - 1)) lost. Ceiling
/// each element independently can leave profitable moves on the table (an
/// element rounded up from just above an integer donates cheaply); this pass
/// applies them until no single-shot transfer lowers the prediction, making
/// the integer plan exchange-stable at fixed total.
fn exchange_refine(weights: &[f64], shots: &mut [u64]) {
    debug_assert_eq!(weights.len(), shots.len());
    // each move strictly lowers a sum bounded below over a finite state
    // space, so this terminates; the cap is a defensive backstop
    for _ in 0..200_000 {
        let mut best_gain = 0.0;
        let mut recipient = usize::MAX;
        let mut best_loss = f64::INFINITY;
        let mut donor = usize::MAX;
        for (e, (&w, &n)) in weights.iter().zip(shots.iter()).enumerate() {
            if w <= 0.0 {
                continue;
            }
            let nf = n as f64;
            let gain = w / (nf * (nf + 1.0));
            if gain > best_gain {
                best_gain = gain;
                recipient = e;
            }
            if n >= 2 {
                let loss = w / (nf * (nf - 1.0));
                if loss < best_loss {
                    best_loss = loss;
                    donor = e;
                }
            }
        }
        if donor == usize::MAX || recipient == usize::MAX {
            break;
        }
        if best_loss >= best_gain * (1.0 - 1e-12) {
            break;
        }
        shots[donor] -= 1;
        shots[recipient] += 1;
    }
}

/// Same count for every metric entry and every gradient entry, splitting the
/// error budget evenly between the two families: each metric entry gets
/// ceil(2 S_F / eps^2) shots and each gradient entry ceil(2 S_g / eps^2),
/// with a floor of one shot so every element is actually measured.
pub fn uniform_plan(
    m: &MetricEstimate,
    inv: &RegularizedInverse,
    eps: f64,
) -> Result<AllocationPlan> {
    if eps <= 0.0 || eps.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "accuracy target must be positive, got {eps}"
        )));
    }
    let nu = m.parameter_count();
    let sums = cost_sums(m, inv)?;
    let eps2 = eps * eps;
    let per_fisher = 2.0 * sums.s_f / eps2;
    let per_grad = 2.0 * sums.s_g / eps2;
    let n_f = ceil_shots(per_fisher).max(1);
    let n_g = ceil_shots(per_grad).max(1);
    let fisher_shots = DMatrix::from_element(nu, nu, n_f);
    let grad_shots = DVector::from_element(nu, n_g);
    let plan = AllocationPlan {
        mode: PlanMode::Uniform,
        fisher_continuous: DMatrix::from_element(nu, nu, per_fisher),
        grad_continuous: DVector::from_element(nu, per_grad),
        fisher_shots,
        grad_shots,
        eps2_target: eps2,
        predicted_eps2: 0.0,
    };
    finish_plan(plan, &sums, m)
}

/// Shots proportional to sqrt(weight * variance) per element. Elements with
/// zero weight or zero variance get zero shots (nothing to measure, or the
/// measurement cannot err). With `symmetric` the mirrored metric entries
/// share one measurement and the counts live on the lower triangle. Integer
/// counts are rounded up and then exchange-balanced, so no single-shot
/// transfer between elements can lower the predicted error.
pub fn optimal_plan(
    m: &MetricEstimate,
    inv: &RegularizedInverse,
    eps: f64,
    symmetric: bool,
) -> Result<AllocationPlan> {
    if eps <= 0.0 || eps.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "accuracy target must be positive, got {eps}"
        )));
    }
    let nu = m.parameter_count();
    let sums = cost_sums(m, inv)?;
    let eps2 = eps * eps;
    let weight = |k: usize, l: usize| {
        if symmetric {
            if l > k {
                0.0
            } else {
                sums.coeffs.a_sym[(k, l)]
            }
        } else {
            sums.coeffs.a[(k, l)]
        }
    };
    let mut root_sum = 0.0;
    for k in 0..nu {
        for l in 0..nu {
            root_sum += (weight(k, l) * m.var_fisher[(k, l)]).sqrt();
        }
        root_sum += (sums.coeffs.b[k] * m.var_grad[k]).sqrt();
    }
    let fisher_continuous = DMatrix::from_fn(nu, nu, |k, l| {
        root_sum * (weight(k, l) * m.var_fisher[(k, l)]).sqrt() / eps2
    });
    let grad_continuous = DVector::from_fn(nu, |k, _| {
        root_sum * (sums.coeffs.b[k] * m.var_grad[k]).sqrt() / eps2
    });
    let mut fisher_shots = fisher_continuous.map(ceil_shots);
    let mut grad_shots = grad_continuous.map(ceil_shots);
    let mut weights = Vec::with_capacity(nu * nu + nu);
    let mut counts = Vec::with_capacity(nu * nu + nu);
    for k in 0..nu {
        for l in 0..nu {
            weights.push(weight(k, l) * m.var_fisher[(k, l)]);
            counts.push(fisher_shots[(k, l)]);
        }
    }
    for k in 0..nu {
        weights.push(sums.coeffs.b[k] * m.var_grad[k]);
        counts.push(grad_shots[k]);
    }
    exchange_refine(&weights, &mut counts);
    for k in 0..nu {
        for l in 0..nu {
            fisher_shots[(k, l)] = counts[k * nu + l];
        }
        grad_shots[k] = counts[nu * nu + k];
    }
    let plan = AllocationPlan {
        mode: if symmetric {
            PlanMode::OptimalSymmetric
        } else {
            PlanMode::Optimal
        },
        fisher_shots,
        grad_shots,
        fisher_continuous,
        grad_continuous,
        eps2_target: eps2,
        predicted_eps2: 0.0,
    };
    finish_plan(plan, &sums, m)
}

fn finish_plan(
    mut plan: AllocationPlan,
    sums: &CostSums,
    m: &MetricEstimate,
) -> Result<AllocationPlan> {
    let predicted =
        predicted_epsilon2(&sums.coeffs, &m.var_fisher, &m.var_grad, Some(&plan))?;
    // Ceiling rounding can only tighten the budget; a plan that predicts
    // worse than its own target indicates a construction bug.
    if predicted > plan.eps2_target * (1.0 + 1e-9) {
        return Err(Error::InvalidPlan(format!(
            "plan predicts eps^2 = {predicted} above its target {}",
            plan.eps2_target
        )));
    }
    plan.predicted_eps2 = predicted;
    Ok(plan)
}

/// Closed-form shot counts: worst-case bounds alongside the exact sums they
/// dominate, each family sized for half the error budget.
#[derive(Debug, Clone, Serialize)]
pub struct ShotBudget {
    /// 2 eps^-2 nu^4 Spc[inv]^2 max_l g_l^2 * f_F
    pub n_f_bound: f64,
    /// 2 eps^-2 nu^2 Spc[inv] Spc[H] * f_g
    pub n_g_bound: f64,
    /// 2 eps^-2 nu^2 S_F
    pub n_f_exact: f64,
    /// 2 eps^-2 nu S_g
    pub n_g_exact: f64,
}

/// Per-measurement circuit cost factors: how many distinct circuit
/// executions one "shot" of each estimator family implies.
#[derive(Debug, Clone, Copy)]
pub struct CircuitCosts {
    /// Circuits per metric-entry shot (2 for the three-component protocol,
    /// 1 for the overlap protocol).
    pub f_f: f64,
    /// Circuits per gradient-entry shot: one per Hamiltonian term, or one
    /// per qubit-wise commuting group when grouped.
    pub f_g: f64,
}

/// Worst-case and exact total shot counts at accuracy `eps`, each family
/// budgeted for eps^2 / 2. `spc_h` is the squared-coefficient norm of the
/// Hamiltonian. Returns an error if an exact sum exceeds its bound, which
/// cannot happen for genuine estimates and flags corrupted inputs.
pub fn shot_budget(
    m: &MetricEstimate,
    inv: &RegularizedInverse,
    eps: f64,
    costs: CircuitCosts,
    spc_h: f64,
) -> Result<ShotBudget> {
    if eps <= 0.0 || eps.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "accuracy target must be positive, got {eps}"
        )));
    }
    let nu = m.parameter_count() as f64;
    let sums = cost_sums(m, inv)?;
    let eps2 = eps * eps;
    let spc_inv = inv.spc();
    let g_inf_sq = m.grad.amax().powi(2);
    let budget = ShotBudget {
        n_f_bound: 2.0 / eps2 * nu.powi(4) * spc_inv * spc_inv * g_inf_sq * costs.f_f,
        n_g_bound: 2.0 / eps2 * nu * nu * spc_inv * spc_h * costs.f_g,
        n_f_exact: 2.0 / eps2 * nu * nu * sums.s_f * costs.f_f,
        n_g_exact: 2.0 / eps2 * nu * sums.s_g * costs.f_g,
    };
    let tol = 1.0 + 1e-9;
    if budget.n_f_exact > budget.n_f_bound * tol + 1e-12 {
        return Err(Error::SpectralBound(format!(
            "exact metric budget {} exceeds its worst-case bound {}",
            budget.n_f_exact, budget.n_f_bound
        )));
    }
    if budget.n_g_exact > budget.n_g_bound * tol + 1e-12 {
        return Err(Error::SpectralBound(format!(
            "exact gradient budget {} exceeds its worst-case bound {}",
            budget.n_g_exact, budget.n_g_bound
        )));
    }
    Ok(budget)
}

/// Measurement overhead of metric-aware descent relative to plain sampled
/// gradient descent at matched step precision.
#[derive(Debug, Clone, Serialize)]
pub struct OverheadReport {
    /// (nu S_F + S_g) / S_smpl under uniform allocation.
    pub kappa_uniform: f64,
    /// Sigma^2 / (2 nu S_smpl) under the jointly optimal allocation,
    /// measured against the same plain-gradient baseline as
    /// `kappa_uniform`; never exceeds it.
    pub kappa_optimal: f64,
    /// Metric share nu S_F / S_smpl; kappa_uniform minus this is bounded by
    /// eta^-2 whatever the state.
    pub y: f64,
    /// Mean squared singular value of the inverse.
    pub spc_inv: f64,
    /// Plain-gradient reference count nu S_smpl / eps^2.
    pub n_smpl: f64,
}

/// Overhead of natural-gradient estimation over plain gradient sampling at
/// the same per-step accuracy. In relative-accuracy mode both targets scale
/// with their own update norms, which multiplies kappa by |g|^2 / |v|^2.
/// Degenerate when every gradient component is exact (S_smpl = 0).
pub fn overhead_report(
    m: &MetricEstimate,
    inv: &RegularizedInverse,
    eps: f64,
    relative: bool,
) -> Result<OverheadReport> {
    let sums = cost_sums(m, inv)?;
    if sums.s_smpl <= 0.0 {
        return Err(Error::Degenerate(
            "every gradient component has zero variance; overhead is undefined".into(),
        ));
    }
    let nu = m.parameter_count() as f64;
    let mut scale = 1.0;
    if relative {
        let v = inv.apply(&m.grad);
        let vsq = v.norm_squared();
        if vsq <= 0.0 {
            return Err(Error::Degenerate(
                "natural-gradient update vanishes; relative overhead is undefined".into(),
            ));
        }
        scale = m.grad.norm_squared() / vsq;
    }
    let mut root_sum = 0.0;
    let nu_usize = m.parameter_count();
    for k in 0..nu_usize {
        for l in 0..nu_usize {
            root_sum += (sums.coeffs.a[(k, l)] * m.var_fisher[(k, l)]).sqrt();
        }
        root_sum += (sums.coeffs.b[k] * m.var_grad[k]).sqrt();
    }
    let eps2 = eps * eps;
    // Both overheads divide by the same baseline. kappa_uniform =
    // (2 nu^2 S_F + 2 nu S_g) / N, so the baseline is N = 2 nu S_smpl
    // shots per unit eps^-2; the optimal total Sigma^2 divides by the same
    // N, which keeps the two figures comparable and the optimal one never
    // larger (per-family Cauchy-Schwarz plus (x+y)^2 <= 2x^2 + 2y^2).
    Ok(OverheadReport {
        kappa_uniform: scale * (nu * sums.s_f + sums.s_g) / sums.s_smpl,
        kappa_optimal: scale * root_sum * root_sum / (2.0 * nu * sums.s_smpl),
        y: scale * nu * sums.s_f / sums.s_smpl,
        spc_inv: inv.spc(),
        n_smpl: nu * sums.s_smpl / eps2,
    })
}
