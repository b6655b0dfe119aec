//! Finite-shot simulation of the metric and gradient estimators.
//!
//! Every measured quantity is a Pauli expectation m in [-1, 1], realized as
//! 2 * Binomial(n, (1+m)/2) / n - 1. Mirrored metric entries share one set of
//! draws, so sampled tensors are symmetric by construction; the two state
//! overlaps entering an off-diagonal three-component estimate are drawn
//! independently, as they come from distinct circuit executions. Randomness
//! is derived per element from the caller's seed, so results depend only on
//! the seed, never on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::allocation::{AllocationPlan, PlanMode};
use crate::estimator::{FisherProtocol, MetricEstimate};
use crate::propagation::RegularizedInverse;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::{Error, Result};

/// One finite-shot realization of the estimated tensor and gradient.
#[derive(Debug, Clone)]
pub struct ShotSample {
    pub fisher: DMatrix<f64>,
    pub grad: DVector<f64>,
}

fn draw_expectation(rng: &mut impl Rng, exact: f64, shots: u64) -> f64 {
    let p = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
    let hits = Binomial::new(shots, p).expect("clamped probability").sample(rng);
    2.0 * hits as f64 / shots as f64 - 1.0
}

/// Simulate every measurement in `plan` and assemble the noisy estimates.
///
/// Entries with zero shots must have zero estimator variance and are returned
/// exactly. Plans outside the symmetric mode must assign mirrored metric
/// entries equal counts, since one measurement serves both.
pub fn sample_estimates(
    m: &MetricEstimate,
    plan: &AllocationPlan,
    seed: u64,
) -> Result<ShotSample> {
    let nu = m.parameter_count();
    plan.check_dim(nu)?;
    let symmetric_mode = plan.mode == PlanMode::OptimalSymmetric;
    if !symmetric_mode {
        for k in 0..nu {
            for l in 0..k {
                if plan.fisher_shots[(k, l)] != plan.fisher_shots[(l, k)] {
                    return Err(Error::InvalidPlan(format!(
                        "metric entries ({k},{l}) and ({l},{k}) share a measurement \
                         but are assigned different shot counts"
                    )));
                }
            }
        }
    }
    let abc = match m.protocol {
        FisherProtocol::PureAbc => Some(m.abc.as_ref().ok_or_else(|| {
            Error::InvalidArgument("estimate lacks the overlap components its protocol needs".into())
        })?),
        FisherProtocol::SwapTest => None,
    };

    let mut fisher = DMatrix::zeros(nu, nu);
    for k in 0..nu {
        for l in 0..=k {
            let shots = plan.fisher_shots[(k, l)];
            let value = if shots == 0 {
                if m.var_fisher[(k, l)] > 0.0 {
                    return Err(Error::InvalidPlan(format!(
                        "metric entry ({k},{l}) has nonzero variance but zero shots"
                    )));
                }
                m.fisher[(k, l)]
            } else {
                let element = (k * (k + 1) / 2 + l) as u64;
                let mut rng = stream_rng(seed, Stream::Shots, &[element]);
                match abc {
                    Some(abc) => {
                        let a = draw_expectation(&mut rng, abc.a[(k, l)], shots);
                        let b_row = draw_expectation(&mut rng, abc.b[k], shots);
                        let b_col = draw_expectation(&mut rng, abc.b[l], shots);
                        let c_row = draw_expectation(&mut rng, abc.c[k], shots);
                        let c_col = draw_expectation(&mut rng, abc.c[l], shots);
                        a - b_row * b_col - c_row * c_col
                    }
                    None => draw_expectation(&mut rng, m.fisher[(k, l)], shots),
                }
            };
            fisher[(k, l)] = value;
            fisher[(l, k)] = value;
        }
    }

    let pair_count = (nu * (nu + 1) / 2) as u64;
    let mut grad = DVector::zeros(nu);
    for k in 0..nu {
        let shots = plan.grad_shots[k];
        if shots == 0 {
            if m.var_grad[k] > 0.0 {
                return Err(Error::InvalidPlan(format!(
                    "gradient entry {k} has nonzero variance but zero shots"
                )));
            }
            grad[k] = m.grad[k];
            continue;
        }
        let mut rng = stream_rng(seed, Stream::Shots, &[pair_count + k as u64]);
        let mut value = 0.0;
        for (l, &h) in m.h_coeffs.iter().enumerate() {
            value -= h * draw_expectation(&mut rng, m.elements[(k, l)], shots);
        }
        grad[k] = value;
    }

    Ok(ShotSample { fisher, grad })
}

/// Monte-Carlo estimate of the natural-gradient error under a plan.
#[derive(Debug, Clone)]
pub struct EpsilonEstimate {
    /// Mean of |v_noisy - v_exact|^2 over the trials.
    pub empirical_eps2: f64,
    /// Standard error of that mean.
    pub std_error: f64,
    pub trials: usize,
}

/// Numerically stable fixed-order summation; the reduction tree depends only
/// on the slice length, keeping results identical across thread counts.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (left, right) = values.split_at(n / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}

/// Repeatedly simulate the plan, invert each noisy tensor, and measure the
/// resulting update error against the exact natural gradient.
///
/// Each trial's randomness is derived from (`seed`, trial index), so the
/// estimate is reproducible bit for bit at any parallelism. Fewer than 100
/// trials would make the standard error useless and is rejected.
pub fn empirical_epsilon(
    m: &MetricEstimate,
    plan: &AllocationPlan,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<EpsilonEstimate> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 trials are needed for a usable standard error, got {trials}"
        )));
    }
    let exact_inv = RegularizedInverse::from_noisy(&m.fisher, eta)?;
    let v_exact = exact_inv.apply(&m.grad);
    let squared_errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_seed(seed, Stream::Shots, &[trial as u64]);
            let sample = sample_estimates(m, plan, trial_seed)?;
            let inv = RegularizedInverse::from_noisy(&sample.fisher, eta)?;
            let v = inv.apply(&sample.grad);
            Ok((v - &v_exact).norm_squared())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = pairwise_sum(&squared_errors) / trials as f64;
    let centered: Vec<f64> = squared_errors.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = if trials > 1 {
        pairwise_sum(&centered) / (trials - 1) as f64
    } else {
        0.0
    };
    Ok(EpsilonEstimate {
        empirical_eps2: mean,
        std_error: (variance / trials as f64).sqrt(),
        trials,
    })
}
