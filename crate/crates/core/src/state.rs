//! Dense statevector over n qubits with bit-indexed Pauli kernels.
//!
//! Qubit `q` corresponds to bit `q` of the basis index. A Pauli string acts
//! in a single pass: X/Y axes form a flip mask, Y and Z axes contribute a
//! sign through the parity of the masked index, and the Y count fixes a
//! global i^{#Y} phase. No operator matrices are ever materialized.

use num_complex::Complex64;

use crate::pauli::{PauliAxis, PauliSum};
use crate::{Error, Result};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Normalized pure state of `n` qubits as 2^n complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros computational basis state |0...0>.
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![C_ZERO; 1 << n];
        amps[0] = C_ONE;
        Self { n, amps }
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes for {n} qubits, got {}",
                1usize << n,
                amps.len()
            )));
        }
        Ok(Self { n, amps })
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_axes(&self, axes: &[PauliAxis]) -> Result<()> {
        if axes.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "Pauli string over {} qubits applied to {}-qubit state",
                axes.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Apply a Pauli string P, returning P|psi>.
    pub fn apply_pauli_string(&self, axes: &[PauliAxis]) -> Result<StateVector> {
        self.check_axes(axes)?;
        let mut flip: usize = 0; // X or Y: bit toggles
        let mut sign_mask: usize = 0; // Y or Z: sign from input bit
        let mut y_count: u32 = 0;
        for (q, &ax) in axes.iter().enumerate() {
            match ax {
                PauliAxis::I => {}
                PauliAxis::X => flip |= 1 << q,
                PauliAxis::Y => {
                    flip |= 1 << q;
                    sign_mask |= 1 << q;
                    y_count += 1;
                }
                PauliAxis::Z => sign_mask |= 1 << q,
            }
        }
        // i^{#Y}: each Y maps |0>->i|1>, |1>->-i|0>, i.e. phase i * (-1)^bit.
        let global = match y_count % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        let mut out = vec![C_ZERO; self.amps.len()];
        for (x, &a) in self.amps.iter().enumerate() {
            let sign = if ((x & sign_mask).count_ones() & 1) == 1 {
                -1.0
            } else {
                1.0
            };
            out[x ^ flip] = global * sign * a;
        }
        Ok(StateVector { n: self.n, amps: out })
    }

    /// Apply exp(-i theta P / 2) = cos(theta/2) - i sin(theta/2) P.
    pub fn apply_pauli_rotation(&self, axes: &[PauliAxis], theta: f64) -> Result<StateVector> {
        let ps = self.apply_pauli_string(axes)?;
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let ms = Complex64::new(0.0, -(theta / 2.0).sin());
        let amps = self
            .amps
            .iter()
            .zip(&ps.amps)
            .map(|(&a, &b)| c * a + ms * b)
            .collect();
        Ok(StateVector { n: self.n, amps })
    }

    /// Apply a full Pauli sum, H|psi> = sum_l h_l P_l |psi>.
    pub fn apply_pauli_sum(&self, h: &PauliSum) -> Result<StateVector> {
        if h.qubit_count() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{}-qubit operator applied to {}-qubit state",
                h.qubit_count(),
                self.n
            )));
        }
        let mut acc = vec![C_ZERO; self.amps.len()];
        for term in h.terms() {
            let applied = self.apply_pauli_string(&term.axes)?;
            for (dst, src) in acc.iter_mut().zip(&applied.amps) {
                *dst += term.coefficient * src;
            }
        }
        Ok(StateVector { n: self.n, amps: acc })
    }

    /// Inner product <self|other> (conjugate-linear in self).
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "inner product between {}- and {}-qubit states",
                self.n, other.n
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Real expectation value <psi|H|psi> of a Hermitian Pauli sum.
    pub fn expectation(&self, h: &PauliSum) -> Result<f64> {
        let mut acc = 0.0;
        for term in h.terms() {
            let applied = self.apply_pauli_string(&term.axes)?;
            let v = self.inner(&applied)?;
            debug_assert!(
                v.im.abs() < 1e-10,
                "expectation of a Hermitian string came out complex: {v}"
            );
            acc += term.coefficient * v.re;
        }
        Ok(acc)
    }

    pub fn scale(&mut self, s: Complex64) {
        for a in &mut self.amps {
            *a *= s;
        }
    }

    /// self += s * other, used by iterative eigensolvers.
    pub fn axpy(&mut self, s: Complex64, other: &StateVector) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += s * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{build_hamiltonian, HamiltonianKind, PauliTerm};
    use proptest::prelude::*;

    fn axes(s: &str) -> Vec<PauliAxis> {
        PauliTerm::from_str_axes(1.0, s).unwrap().axes
    }

    fn assert_close(a: Complex64, b: Complex64) {
        assert!((a - b).norm() < 1e-12, "{a} != {b}");
    }

    #[test]
    fn pauli_strings_on_basis_states() {
        let zero = StateVector::zero(1);
        let x = zero.apply_pauli_string(&axes("X")).unwrap();
        assert_close(x.amplitudes()[0], Complex64::new(0.0, 0.0));
        assert_close(x.amplitudes()[1], Complex64::new(1.0, 0.0));

        let y = zero.apply_pauli_string(&axes("Y")).unwrap();
        assert_close(y.amplitudes()[1], Complex64::new(0.0, 1.0));

        let z = zero.apply_pauli_string(&axes("Z")).unwrap();
        assert_close(z.amplitudes()[0], Complex64::new(1.0, 0.0));

        // Z|1> = -|1>
        let one = StateVector::from_amplitudes(
            1,
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let z1 = one.apply_pauli_string(&axes("Z")).unwrap();
        assert_close(z1.amplitudes()[1], Complex64::new(-1.0, 0.0));

        // Y|1> = -i|0>
        let y1 = one.apply_pauli_string(&axes("Y")).unwrap();
        assert_close(y1.amplitudes()[0], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn x_rotation_by_pi_gives_minus_i_one() {
        let s = StateVector::zero(1)
            .apply_pauli_rotation(&axes("X"), std::f64::consts::PI)
            .unwrap();
        assert_close(s.amplitudes()[0], Complex64::new(0.0, 0.0));
        assert_close(s.amplitudes()[1], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn z_rotation_is_a_phase_on_basis_states() {
        let theta = 0.7;
        let s = StateVector::zero(1)
            .apply_pauli_rotation(&axes("Z"), theta)
            .unwrap();
        assert_close(s.amplitudes()[0], Complex64::from_polar(1.0, -theta / 2.0));
    }

    #[test]
    fn zz_rotation_phases_two_qubit_basis() {
        let theta = 1.1;
        let s = StateVector::zero(2)
            .apply_pauli_rotation(&axes("ZZ"), theta)
            .unwrap();
        assert_close(s.amplitudes()[0], Complex64::from_polar(1.0, -theta / 2.0));
    }

    #[test]
    fn expectation_of_rx_under_z_is_cosine() {
        for theta in [0.0, 0.3, 1.2, 2.9] {
            let s = StateVector::zero(1)
                .apply_pauli_rotation(&axes("X"), theta)
                .unwrap();
            let h = crate::pauli::PauliSum::from_terms(
                1,
                vec![PauliTerm::from_str_axes(1.0, "Z").unwrap()],
            )
            .unwrap();
            assert!((s.expectation(&h).unwrap() - theta.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_expectation_on_zero_state_counts_zz_bonds() {
        // On |0000> only the ZZ couplings contribute, one +J per periodic bond.
        let h = build_hamiltonian(HamiltonianKind::Chain, 4, 1.0, &[0.0; 4]).unwrap();
        let e = StateVector::zero(4).expectation(&h).unwrap();
        assert!((e - 4.0).abs() < 1e-12, "got {e}");
    }

    #[test]
    fn apply_pauli_sum_matches_termwise_application() {
        let h = build_hamiltonian(HamiltonianKind::Quadratic, 3, 0.8, &[0.2, -0.5, 0.9]).unwrap();
        let s = StateVector::zero(3)
            .apply_pauli_rotation(&axes("XII"), 0.4)
            .unwrap()
            .apply_pauli_rotation(&axes("IYI"), 1.3)
            .unwrap();
        let hs = s.apply_pauli_sum(&h).unwrap();
        let e_direct = s.inner(&hs).unwrap();
        let e = s.expectation(&h).unwrap();
        assert!((e_direct.re - e).abs() < 1e-12);
        assert!(e_direct.im.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rotations_preserve_norm(
            axes_raw in proptest::collection::vec(0..4u8, 3),
            theta in -6.0f64..6.0,
        ) {
            let ax: Vec<PauliAxis> = axes_raw
                .iter()
                .map(|&a| match a {
                    0 => PauliAxis::I,
                    1 => PauliAxis::X,
                    2 => PauliAxis::Y,
                    _ => PauliAxis::Z,
                })
                .collect();
            let s = StateVector::zero(3).apply_pauli_rotation(&ax, theta).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pauli_strings_are_involutions(axes_raw in proptest::collection::vec(0..4u8, 3)) {
            let ax: Vec<PauliAxis> = axes_raw
                .iter()
                .map(|&a| match a {
                    0 => PauliAxis::I,
                    1 => PauliAxis::X,
                    2 => PauliAxis::Y,
                    _ => PauliAxis::Z,
                })
                .collect();
            // Start from a non-trivial state so the check is not vacuous.
            let s = StateVector::zero(3)
                .apply_pauli_rotation(&[PauliAxis::X, PauliAxis::Y, PauliAxis::I], 0.9)
                .unwrap();
            let twice = s
                .apply_pauli_string(&ax)
                .unwrap()
                .apply_pauli_string(&ax)
                .unwrap();
            for (a, b) in s.amplitudes().iter().zip(twice.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
