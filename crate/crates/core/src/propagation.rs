//! Regularized inversion of the metric tensor and first-order propagation of
//! shot noise through it.
//!
//! The optimizer consumes v = (F + eta*Id)^{-1} g. Estimating F and g from
//! finite shots perturbs v; to first order the expected squared error
//! decomposes entrywise as
//!
//!   eps^2 = sum_kl a_kl Var{F_kl} / n_kl + sum_k b_k Var[g_k] / n_k
//!
//! with coefficients built from the inverse: b_k is the squared norm of row k
//! of the inverse, and a_kl = (sum_i inv_ik^2) v_l^2 follows from
//! differentiating the update, d(inv) = -inv dF inv, so a matrix perturbation
//! enters through the update vector itself. A Monte-Carlo harness that
//! perturbs the tensor directly reproduces these weights to within a fraction
//! of a percent; see the tests. They are what every measurement budget in
//! [`crate::allocation`] is built from.

use nalgebra::{DMatrix, DVector};

use crate::allocation::{AllocationPlan, PlanMode};
use crate::{Error, Result};

/// Mean squared singular value of a square matrix, ||A||_F^2 / d.
pub fn spc(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spc is defined for square matrices");
    m.iter().map(|x| x * x).sum::<f64>() / m.nrows() as f64
}

/// Condition number sigma_max / sigma_min; infinite for singular matrices.
pub fn cnd(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalue slack accepted when certifying positive semidefiniteness of an
/// exact metric tensor.
const PSD_TOL: f64 = 1e-8;
/// Below this smallest singular value an unregularized inversion is refused.
const SINGULAR_TOL: f64 = 1e-12;
/// Worst-case squared magnitude of a single metric entry for one-parameter
/// rotation gates; enters the spectral bounds symbolically.
pub const GATE_NORM_SQ: f64 = 1.0;

/// (F + eta*Id)^{-1} of a symmetric matrix, by symmetric eigendecomposition
/// (the singular values are needed alongside the inverse anyway).
#[derive(Debug, Clone)]
pub struct RegularizedInverse {
    inverse: DMatrix<f64>,
    /// Singular values of the *inverse*, descending.
    singular: Vec<f64>,
    eta: f64,
}

fn eigen_invert(f: &DMatrix<f64>, eta: f64) -> Result<(DMatrix<f64>, Vec<f64>, f64, f64)> {
    let nu = f.nrows();
    if f.ncols() != nu {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            f.nrows(),
            f.ncols()
        )));
    }
    if eta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "regularization must be nonnegative, got {eta}"
        )));
    }
    let asym = (f - f.transpose()).amax();
    if asym > PSD_TOL {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let sym = (f + f.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        lambda_min = lambda_min.min(l);
        lambda_max = lambda_max.max(l);
    }
    let shifted: Vec<f64> = eig.eigenvalues.iter().map(|&l| l + eta).collect();
    if shifted.iter().any(|&s| s.abs() < SINGULAR_TOL) {
        return Err(Error::Singular {
            sigma_min: shifted.iter().fold(f64::INFINITY, |m, s| m.min(s.abs())),
        });
    }
    let q = &eig.eigenvectors;
    let inv_diag = DMatrix::from_diagonal(&DVector::from_iterator(
        nu,
        shifted.iter().map(|&s| 1.0 / s),
    ));
    let inverse = q * inv_diag * q.transpose();
    let mut singular: Vec<f64> = shifted.iter().map(|&s| 1.0 / s.abs()).collect();
    singular.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((inverse, singular, lambda_min, lambda_max))
}

impl RegularizedInverse {
    /// Invert an *exact* metric tensor and certify the spectral bounds that
    /// hold for such matrices: eigenvalues of F within [0, nu * r_g^2] up to
    /// roundoff, hence sigma_max <= 1/eta and
    /// sigma_min >= 1/(nu * r_g^2 + eta).
    pub fn new(f: &DMatrix<f64>, eta: f64) -> Result<Self> {
        let nu = f.nrows();
        let (inverse, singular, lambda_min, lambda_max) = eigen_invert(f, eta)?;
        if lambda_min < -PSD_TOL {
            return Err(Error::SpectralBound(format!(
                "metric tensor has eigenvalue {lambda_min:.6e} < 0"
            )));
        }
        let max_entry = f.amax();
        let entry_cap = GATE_NORM_SQ + PSD_TOL;
        if max_entry > entry_cap {
            return Err(Error::SpectralBound(format!(
                "metric entry {max_entry} exceeds the single-gate cap {GATE_NORM_SQ}"
            )));
        }
        if lambda_max > nu as f64 * entry_cap {
            return Err(Error::SpectralBound(format!(
                "metric eigenvalue {lambda_max} exceeds nu * r_g^2 = {}",
                nu as f64 * GATE_NORM_SQ
            )));
        }
        Ok(Self {
            inverse,
            singular,
            eta,
        })
    }

    /// Invert a sampled (noisy) matrix: no positivity or entry-bound
    /// certificates, only a singularity check. Shot-noise harnesses use this;
    /// the spectral guarantees above are statements about exact tensors.
    pub fn from_noisy(f: &DMatrix<f64>, eta: f64) -> Result<Self> {
        let (inverse, singular, _, _) = eigen_invert(f, eta)?;
        Ok(Self {
            inverse,
            singular,
            eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.singular.last().unwrap()
    }

    /// Spc of the inverse, mean squared singular value.
    pub fn spc(&self) -> f64 {
        self.singular.iter().map(|s| s * s).sum::<f64>() / self.singular.len() as f64
    }

    pub fn cnd(&self) -> f64 {
        self.sigma_max() / self.sigma_min()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inverse * v
    }
}

/// Closed-form spectral window for inverses of exact metric tensors:
/// returns (sigma_min lower bound, sigma_max upper bound) for dimension `nu`
/// and regularization `eta`. The sigma_max bound is infinite at eta = 0.
pub fn spectral_window(nu: usize, eta: f64) -> (f64, f64) {
    let lower = 1.0 / (nu as f64 * GATE_NORM_SQ + eta);
    let upper = if eta > 0.0 { 1.0 / eta } else { f64::INFINITY };
    (lower, upper)
}

/// Entrywise weights of the first-order error budget.
#[derive(Debug, Clone)]
pub struct PropagationCoefficients {
    /// a_kl, weight of Var{F_kl} under independent per-entry accounting.
    pub a: DMatrix<f64>,
    /// b_k, weight of Var[g_k]; squared norm of row k of the inverse.
    pub b: DVector<f64>,
    /// Lower-triangular fold of `a` for plans that measure entry (k,l) and
    /// (l,k) with the same draws: diagonal kept, a_kl + a_lk below, zero above.
    pub a_sym: DMatrix<f64>,
}

/// Build the error-budget weights from the inverse and the exact gradient.
pub fn propagation_coefficients(
    inv: &RegularizedInverse,
    grad: &DVector<f64>,
) -> Result<PropagationCoefficients> {
    let nu = inv.dim();
    if grad.len() != nu {
        return Err(Error::DimensionMismatch(format!(
            "gradient length {} vs inverse dimension {nu}",
            grad.len()
        )));
    }
    let m = inv.matrix();
    // rows and columns coincide for a symmetric inverse
    let colsq = DVector::from_fn(nu, |k, _| (0..nu).map(|i| m[(i, k)] * m[(i, k)]).sum());
    let b = colsq.clone();
    let v = inv.apply(grad);
    let a = DMatrix::from_fn(nu, nu, |k, l| colsq[k] * v[l] * v[l]);
    let mut a_sym = DMatrix::zeros(nu, nu);
    for k in 0..nu {
        a_sym[(k, k)] = a[(k, k)];
        for l in 0..k {
            a_sym[(k, l)] = a[(k, l)] + a[(l, k)];
        }
    }
    Ok(PropagationCoefficients { a, b, a_sym })
}

/// Predicted eps^2 for the given single-shot variances.
///
/// Without a plan this is the single-shot budget sum_kl a_kl Var{F_kl} +
/// sum_k b_k Var[g_k]. With a plan each contribution is divided by its shot
/// count; symmetric-mode plans are folded onto the lower triangle. An element
/// with zero shots and nonzero variance is an error; zero-variance elements
/// contribute nothing regardless.
pub fn predicted_epsilon2(
    coeffs: &PropagationCoefficients,
    var_fisher: &DMatrix<f64>,
    var_grad: &DVector<f64>,
    plan: Option<&AllocationPlan>,
) -> Result<f64> {
    let nu = coeffs.b.len();
    if var_fisher.nrows() != nu || var_fisher.ncols() != nu || var_grad.len() != nu {
        return Err(Error::DimensionMismatch(
            "variance shapes do not match coefficient dimension".into(),
        ));
    }
    let mut total = 0.0;
    match plan {
        None => {
            for k in 0..nu {
                for l in 0..nu {
                    total += coeffs.a[(k, l)] * var_fisher[(k, l)];
                }
                total += coeffs.b[k] * var_grad[k];
            }
        }
        Some(p) => {
            p.check_dim(nu)?;
            let symmetric_fold = p.mode == PlanMode::OptimalSymmetric;
            for k in 0..nu {
                let range = if symmetric_fold { 0..=k } else { 0..=(nu - 1) };
                for l in range {
                    let weight = if symmetric_fold {
                        coeffs.a_sym[(k, l)]
                    } else {
                        coeffs.a[(k, l)]
                    };
                    let contribution = weight * var_fisher[(k, l)];
                    let n = p.fisher_shots[(k, l)];
                    if contribution > 0.0 {
                        if n == 0 {
                            return Err(Error::InvalidPlan(format!(
                                "metric entry ({k},{l}) carries error weight but zero shots"
                            )));
                        }
                        total += contribution / n as f64;
                    }
                }
                let cg = coeffs.b[k] * var_grad[k];
                let n = p.grad_shots[k];
                if cg > 0.0 {
                    if n == 0 {
                        return Err(Error::InvalidPlan(format!(
                            "gradient entry {k} carries error weight but zero shots"
                        )));
                    }
                    total += cg / n as f64;
                }
            }
        }
    }
    Ok(total)
}
