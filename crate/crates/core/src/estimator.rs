//! Exact expectation values of the measurement circuits behind the energy
//! gradient and the metric tensor, together with their single-shot variances.
//!
//! Every estimated quantity is an affine function of Bernoulli probabilities:
//! a circuit outcome with expectation value `m` in [-1, 1] is measured as
//! p = (m+1)/2, so a single shot carries variance 4p(1-p) = 1 - m^2. The
//! structures here record both the exact values and those variances; actual
//! binomial sampling lives in [`crate::shots`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzCircuit;
use crate::pauli::PauliSum;
use crate::state::StateVector;
use crate::{Error, Result};

/// How the metric tensor is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherProtocol {
    /// Entries assembled from the overlap components A_kl, B_k, C_k; five
    /// probability objects per entry, single-shot variance at most 2.
    PureAbc,
    /// Direct overlap estimation of each entry; one probability object per
    /// entry, single-shot variance 1 - F_kl^2.
    SwapTest,
}

/// Worst-case single-shot variance of one metric entry under a protocol.
pub fn protocol_variance_bound(p: FisherProtocol) -> f64 {
    match p {
        FisherProtocol::PureAbc => 2.0,
        FisherProtocol::SwapTest => 1.0,
    }
}

/// Overlap components of the metric tensor:
/// A_kl = Re<0|D_k' D_l|0>, B_k = Re<0|D_k' U|0>, C_k = Im<0|D_k' U|0>.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcComponents {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

impl AbcComponents {
    /// Assemble the metric tensor. The rank-one parts *subtract*:
    ///
    /// F_kl = A_kl - B_k B_l - C_k C_l.
    ///
    /// With B, C the real/imaginary parts of <D_k 0|psi> this equals the
    /// projected-derivative form 4 Re<d_k psi|(1 - |psi><psi|)|d_l psi>,
    /// which the finite-difference oracle in the test suite confirms; it
    /// also makes every diagonal entry 1 - |<D_k 0|psi>|^2 >= 0.
    pub fn fisher(&self) -> DMatrix<f64> {
        let nu = self.a.nrows();
        DMatrix::from_fn(nu, nu, |k, l| {
            self.a[(k, l)] - self.b[k] * self.b[l] - self.c[k] * self.c[l]
        })
    }

    /// First-order single-shot variance of each assembled entry, treating the
    /// five underlying probabilities as independently measured:
    ///
    /// Var{F_kl} = (1-A_kl^2) + (1-B_k^2)B_l^2 + (1-B_l^2)B_k^2
    ///           + (1-C_k^2)C_l^2 + (1-C_l^2)C_k^2.
    ///
    /// Bounded by 2 entrywise.
    pub fn variance(&self) -> DMatrix<f64> {
        let nu = self.a.nrows();
        DMatrix::from_fn(nu, nu, |k, l| {
            let (a, bk, bl, ck, cl) =
                (self.a[(k, l)], self.b[k], self.b[l], self.c[k], self.c[l]);
            let v = (1.0 - a * a)
                + (1.0 - bk * bk) * bl * bl
                + (1.0 - bl * bl) * bk * bk
                + (1.0 - ck * ck) * cl * cl
                + (1.0 - cl * cl) * ck * ck;
            v.max(0.0)
        })
    }
}

/// Expectation values of the gradient measurement circuits,
/// M_kl = Im<0|D_k' P_l U|0>, one row per parameter, one column per
/// Hamiltonian term. All entries lie in [-1, 1].
pub fn gradient_matrix_elements(
    circuit: &AnsatzCircuit,
    theta: &[f64],
    h: &PauliSum,
) -> Result<DMatrix<f64>> {
    if h.qubit_count() != circuit.qubit_count() {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit Hamiltonian with {}-qubit circuit",
            h.qubit_count(),
            circuit.qubit_count()
        )));
    }
    let nu = circuit.parameter_count();
    let psi = circuit.prepare_state(theta)?;
    let derivs: Vec<StateVector> = (0..nu)
        .map(|k| circuit.derivative_state(theta, k))
        .collect::<Result<_>>()?;
    let applied: Vec<StateVector> = h
        .terms()
        .iter()
        .map(|t| psi.apply_pauli_string(&t.axes))
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(nu, h.term_count());
    for (k, d) in derivs.iter().enumerate() {
        for (l, ps) in applied.iter().enumerate() {
            m[(k, l)] = d.inner(ps)?.im;
        }
    }
    Ok(m)
}

/// Energy gradient and its single-shot variance from the element matrix:
/// g_k = -sum_l h_l M_kl, Var[g_k] = sum_l h_l^2 (1 - M_kl^2).
///
/// The variance is for the per-term protocol in which one composite shot of
/// g_k measures each of the r_h terms once.
pub fn gradient_with_variance(m: &DMatrix<f64>, h: &PauliSum) -> (DVector<f64>, DVector<f64>) {
    let coeffs = h.coefficients();
    let nu = m.nrows();
    let grad = DVector::from_fn(nu, |k, _| {
        -coeffs.iter().enumerate().map(|(l, hl)| hl * m[(k, l)]).sum::<f64>()
    });
    let var = DVector::from_fn(nu, |k, _| {
        coeffs
            .iter()
            .enumerate()
            .map(|(l, hl)| hl * hl * (1.0 - m[(k, l)] * m[(k, l)]).max(0.0))
            .sum::<f64>()
    });
    (grad, var)
}

/// Overlap components of the metric at a parameter point.
pub fn fisher_abc(circuit: &AnsatzCircuit, theta: &[f64]) -> Result<AbcComponents> {
    let nu = circuit.parameter_count();
    let psi = circuit.prepare_state(theta)?;
    let derivs: Vec<StateVector> = (0..nu)
        .map(|k| circuit.derivative_state(theta, k))
        .collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(nu, nu);
    for k in 0..nu {
        for l in k..nu {
            let v = derivs[k].inner(&derivs[l])?.re;
            a[(k, l)] = v;
            a[(l, k)] = v;
        }
    }
    let mut b = DVector::zeros(nu);
    let mut c = DVector::zeros(nu);
    for k in 0..nu {
        let o = derivs[k].inner(&psi)?;
        b[k] = o.re;
        c[k] = o.im;
    }
    Ok(AbcComponents { a, b, c })
}

/// Single-shot variance of direct overlap estimation, 1 - F_kl^2.
/// Every entry must satisfy |F_kl| <= 1 (up to roundoff).
pub fn fisher_variance_swap(fisher: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    for &f in fisher.iter() {
        if f.abs() > 1.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "metric entry {f} outside [-1, 1]; overlap estimation undefined"
            )));
        }
    }
    Ok(fisher.map(|f| (1.0 - f * f).max(0.0)))
}

/// Exact values and single-shot variances of everything the optimizer
/// measures at one parameter point.
#[derive(Debug, Clone)]
pub struct MetricEstimate {
    pub fisher: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub var_fisher: DMatrix<f64>,
    pub var_grad: DVector<f64>,
    pub protocol: FisherProtocol,
    /// Gradient circuit expectations, the probability objects behind `grad`.
    pub elements: DMatrix<f64>,
    /// Hamiltonian coefficients matching the columns of `elements`.
    pub h_coeffs: Vec<f64>,
    /// Overlap components behind `fisher` (PureAbc protocol only).
    pub abc: Option<AbcComponents>,
}

impl MetricEstimate {
    pub fn compute(
        circuit: &AnsatzCircuit,
        theta: &[f64],
        h: &PauliSum,
        protocol: FisherProtocol,
    ) -> Result<Self> {
        let abc = fisher_abc(circuit, theta)?;
        let fisher = abc.fisher();
        let elements = gradient_matrix_elements(circuit, theta, h)?;
        let (grad, var_grad) = gradient_with_variance(&elements, h);
        let (var_fisher, abc) = match protocol {
            FisherProtocol::PureAbc => (abc.variance(), Some(abc)),
            FisherProtocol::SwapTest => (fisher_variance_swap(&fisher)?, None),
        };
        Ok(Self {
            fisher,
            grad,
            var_fisher,
            var_grad,
            protocol,
            elements,
            h_coeffs: h.coefficients(),
            abc,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.grad.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EstimateDto::from(self)).expect("serializable")
    }
}

/// Row-major dense matrix payload for JSON output.
#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDto {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

#[derive(Serialize)]
struct EstimateDto {
    nu: usize,
    protocol: FisherProtocol,
    fisher: MatrixDto,
    grad: Vec<f64>,
    var_fisher: MatrixDto,
    var_grad: Vec<f64>,
    elements: MatrixDto,
    h_coeffs: Vec<f64>,
}

impl From<&MetricEstimate> for EstimateDto {
    fn from(m: &MetricEstimate) -> Self {
        EstimateDto {
            nu: m.parameter_count(),
            protocol: m.protocol,
            fisher: MatrixDto::from_matrix(&m.fisher),
            grad: m.grad.iter().cloned().collect(),
            var_fisher: MatrixDto::from_matrix(&m.var_fisher),
            var_grad: m.var_grad.iter().cloned().collect(),
            elements: MatrixDto::from_matrix(&m.elements),
            h_coeffs: m.h_coeffs.clone(),
        }
    }
}
