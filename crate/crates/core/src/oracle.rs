//! Independent reference implementations used by the test suite.
//!
//! Everything here recomputes quantities of the main code path by a
//! different route: explicit Kronecker-product matrices instead of
//! bit-indexed kernels, central finite differences instead of analytic
//! derivative circuits, and Monte-Carlo perturbation instead of closed-form
//! error propagation. Tests compare the two routes; production code should
//! not call into this module (it is exponentially slower by design).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::ansatz::AnsatzCircuit;
use crate::pauli::{PauliAxis, PauliSum};
use crate::state::StateVector;

fn single_qubit_matrix(ax: PauliAxis) -> DMatrix<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match ax {
        PauliAxis::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        PauliAxis::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        PauliAxis::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        PauliAxis::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::from_element(ar * br, ac * bc, Complex64::new(0.0, 0.0));
    for i in 0..ar {
        for k in 0..ac {
            for j in 0..br {
                for l in 0..bc {
                    out[(i * br + j, k * bc + l)] = a[(i, k)] * b[(j, l)];
                }
            }
        }
    }
    out
}

/// Dense 2^n x 2^n matrix of a Pauli string; qubit q is bit q of the index.
pub fn dense_pauli_string(axes: &[PauliAxis]) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for &ax in axes.iter().rev() {
        m = kron(&m, &single_qubit_matrix(ax));
    }
    m
}

/// Dense matrix of a full Pauli sum.
pub fn dense_operator(h: &PauliSum) -> DMatrix<Complex64> {
    let d = 1usize << h.qubit_count();
    let mut m = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    for t in h.terms() {
        m += dense_pauli_string(&t.axes).map(|x| x * t.coefficient);
    }
    m
}

/// tr[H^2]/d computed from the dense matrix.
pub fn spc_dense(h: &PauliSum) -> f64 {
    let m = dense_operator(h);
    let sq = &m * &m;
    let d = sq.nrows();
    (0..d).map(|i| sq[(i, i)].re).sum::<f64>() / d as f64
}

/// <psi|H|psi> from the dense matrix.
pub fn expectation_dense(h: &PauliSum, s: &StateVector) -> f64 {
    let m = dense_operator(h);
    let v = DVector::from_row_slice(s.amplitudes());
    let mv = &m * &v;
    v.iter()
        .zip(mv.iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

/// Ground-state energy from dense exact diagonalization via the real
/// symmetric embedding [[Re H, -Im H], [Im H, Re H]].
pub fn ground_energy_dense(h: &PauliSum) -> f64 {
    let m = dense_operator(h);
    let d = m.nrows();
    let mut s = DMatrix::<f64>::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            s[(i, j)] = m[(i, j)].re;
            s[(d + i, d + j)] = m[(i, j)].re;
            s[(i, d + j)] = -m[(i, j)].im;
            s[(d + i, j)] = m[(i, j)].im;
        }
    }
    let eig = s.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Central-difference energy gradient, d E / d theta_k.
pub fn fd_gradient(c: &AnsatzCircuit, h: &PauliSum, theta: &[f64], delta: f64) -> DVector<f64> {
    let nu = c.parameter_count();
    DVector::from_fn(nu, |k, _| {
        let mut tp = theta.to_vec();
        tp[k] += delta;
        let mut tm = theta.to_vec();
        tm[k] -= delta;
        let ep = c.prepare_state(&tp).unwrap().expectation(h).unwrap();
        let em = c.prepare_state(&tm).unwrap().expectation(h).unwrap();
        (ep - em) / (2.0 * delta)
    })
}

fn fd_state_derivatives(c: &AnsatzCircuit, theta: &[f64], delta: f64) -> Vec<Vec<Complex64>> {
    let nu = c.parameter_count();
    (0..nu)
        .map(|k| {
            let mut tp = theta.to_vec();
            tp[k] += delta;
            let mut tm = theta.to_vec();
            tm[k] -= delta;
            let sp = c.prepare_state(&tp).unwrap();
            let sm = c.prepare_state(&tm).unwrap();
            sp.amplitudes()
                .iter()
                .zip(sm.amplitudes())
                .map(|(a, b)| (a - b) / (2.0 * delta))
                .collect()
        })
        .collect()
}

/// Fidelity-susceptibility metric from finite differences:
/// F_kl = 4 Re[<d_k psi|d_l psi> - <d_k psi|psi><psi|d_l psi>].
pub fn fd_fisher(c: &AnsatzCircuit, theta: &[f64], delta: f64) -> DMatrix<f64> {
    let nu = c.parameter_count();
    let psi = c.prepare_state(theta).unwrap();
    let derivs = fd_state_derivatives(c, theta, delta);
    let overlap_with_psi: Vec<Complex64> = derivs
        .iter()
        .map(|d| {
            d.iter()
                .zip(psi.amplitudes())
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
        .collect();
    DMatrix::from_fn(nu, nu, |k, l| {
        let dd: Complex64 = derivs[k]
            .iter()
            .zip(&derivs[l])
            .map(|(a, b)| a.conj() * b)
            .sum();
        // <d_k psi|psi><psi|d_l psi> = o_k * conj(o_l)
        let proj = overlap_with_psi[k] * overlap_with_psi[l].conj();
        4.0 * (dd - proj).re
    })
}

/// Monte-Carlo first-order error propagation: perturb every matrix entry and
/// every vector entry with Gaussian noise of the given variances (scaled down
/// by `scale` to stay in the linear regime), recompute the regularized
/// natural gradient by full inversion, and average the squared deviation.
/// The result is rescaled back, i.e. it estimates the epsilon^2 produced by
/// unit-scale variances. With `symmetric` the matrix perturbation is drawn on
/// the lower triangle and mirrored, the ensemble a shared measurement of
/// mirrored entries produces; otherwise all nu^2 entries are independent.
#[allow(clippy::too_many_arguments)]
pub fn mc_first_order_epsilon2(
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    var_f: &DMatrix<f64>,
    var_g: &DVector<f64>,
    eta: f64,
    symmetric: bool,
    trials: usize,
    scale: f64,
    seed: u64,
) -> f64 {
    let nu = f.nrows();
    let reg = DMatrix::identity(nu, nu) * eta;
    let base = (f + &reg).clone().try_inverse().expect("regular base matrix");
    let v = &base * g;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Shots, &[0xfeed]);
    let mut acc = 0.0;
    for _ in 0..trials {
        let mut df = DMatrix::from_fn(nu, nu, |k, l| {
            scale * var_f[(k, l)].sqrt() * normal.sample(&mut rng)
        });
        if symmetric {
            for k in 0..nu {
                for l in 0..k {
                    df[(l, k)] = df[(k, l)];
                }
            }
        }
        let dg = DVector::from_fn(nu, |k, _| {
            scale * var_g[k].sqrt() * normal.sample(&mut rng)
        });
        let vp = (f + &df + &reg)
            .clone()
            .try_inverse()
            .expect("perturbed matrix invertible")
            * (g + &dg);
        acc += (vp - &v).norm_squared();
    }
    acc / (trials as f64 * scale * scale)
}

/// Uniform random angles in [-pi, pi), used all over the test suite.
pub fn random_theta(nu: usize, seed: u64) -> Vec<f64> {
    let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Theta0, &[]);
    (0..nu)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_layered_ansatz, parse_pattern};
    use crate::pauli::{build_hamiltonian, HamiltonianKind, PauliTerm};

    #[test]
    fn dense_matrices_match_kernel_application() {
        // The dense route (Kronecker products) and the kernel route (bit
        // masks) must agree on a non-trivial state for every axis mix.
        let c = build_layered_ansatz(3, &parse_pattern("B1B2").unwrap()).unwrap();
        let theta = random_theta(c.parameter_count(), 5);
        let s = c.prepare_state(&theta).unwrap();
        for axes_str in ["XYZ", "ZIX", "YYI", "IIZ", "XXX"] {
            let t = PauliTerm::from_str_axes(1.0, axes_str).unwrap();
            let kernel = s.apply_pauli_string(&t.axes).unwrap();
            let dense = dense_pauli_string(&t.axes);
            let v = DVector::from_row_slice(s.amplitudes());
            let dv = &dense * &v;
            for (a, b) in kernel.amplitudes().iter().zip(dv.iter()) {
                assert!((a - b).norm() < 1e-12, "{axes_str}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn spc_matches_dense_trace() {
        for (kind, n) in [
            (HamiltonianKind::Chain, 3),
            (HamiltonianKind::Chain, 4),
            (HamiltonianKind::Quadratic, 4),
            (HamiltonianKind::Cubic, 4),
        ] {
            let omega: Vec<f64> = (0..n).map(|i| 0.3 * i as f64 - 0.2).collect();
            let h = build_hamiltonian(kind, n, 0.9, &omega).unwrap();
            let fast = h.spc();
            let dense = spc_dense(&h);
            assert!(
                (fast - dense).abs() < 1e-10,
                "{kind:?} n={n}: {fast} vs {dense}"
            );
        }
    }

    #[test]
    fn expectation_matches_dense() {
        let h = build_hamiltonian(HamiltonianKind::Chain, 3, 1.0, &[0.4, -0.1, 0.7]).unwrap();
        let c = build_layered_ansatz(3, &parse_pattern("B1B2").unwrap()).unwrap();
        let theta = random_theta(c.parameter_count(), 11);
        let s = c.prepare_state(&theta).unwrap();
        let fast = s.expectation(&h).unwrap();
        let dense = expectation_dense(&h, &s);
        assert!((fast - dense).abs() < 1e-10);
    }

    #[test]
    fn dense_ground_energy_of_single_qubit_field() {
        let h = crate::pauli::PauliSum::from_terms(
            1,
            vec![PauliTerm::from_str_axes(0.7, "Z").unwrap()],
        )
        .unwrap();
        assert!((ground_energy_dense(&h) + 0.7).abs() < 1e-10);
    }
}
