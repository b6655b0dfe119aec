//! Hardware-efficient layered ansatz circuits.
//!
//! Every gate is a single-parameter Pauli rotation U_k(theta_k) =
//! exp(-i theta_k P_k / 2) with a non-identity generator string P_k, one
//! fresh parameter per gate. The derivative of the prepared state is
//! d_k |psi> = -(i/2) D_k |0>, where D_k inserts P_k right after U_k in the
//! gate sequence; D_k is itself unitary so every estimator built on it stays
//! a bounded-probability measurement.

use serde::{Deserialize, Serialize};

use crate::pauli::{PauliAxis, PauliTerm};
use crate::state::StateVector;
use crate::{Error, Result};

/// One parametrized rotation gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    /// Generator Pauli string, non-identity.
    pub generator: Vec<PauliAxis>,
    /// Position of this gate's parameter; equals the gate's index in the
    /// circuit (validated on construction).
    pub parameter_index: usize,
}

/// Ansatz building blocks.
///
/// * `B1`: one X rotation per qubit.
/// * `B2`: ZZ rotations on every nearest-neighbour ring pair, then one Y and
///   one X rotation per qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    B1,
    B2,
}

/// Parse a pattern string like `"B1B2B2"` into blocks.
pub fn parse_pattern(s: &str) -> Result<Vec<Block>> {
    let mut blocks = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if i + 1 < bytes.len() && bytes[i] == b'B' {
            match bytes[i + 1] {
                b'1' => blocks.push(Block::B1),
                b'2' => blocks.push(Block::B2),
                _ => return Err(Error::Parse(format!("bad block in pattern '{s}'"))),
            }
            i += 2;
        } else {
            return Err(Error::Parse(format!("bad ansatz pattern '{s}'")));
        }
    }
    if blocks.is_empty() {
        return Err(Error::Parse("empty ansatz pattern".into()));
    }
    Ok(blocks)
}

pub fn pattern_string(blocks: &[Block]) -> String {
    blocks
        .iter()
        .map(|b| match b {
            Block::B1 => "B1",
            Block::B2 => "B2",
        })
        .collect()
}

/// A fixed gate sequence over `n` qubits with `nu = gates.len()` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzCircuit {
    n: usize,
    gates: Vec<GateSpec>,
}

impl AnsatzCircuit {
    /// Validates that generators are non-identity, act on `n` qubits, and
    /// that parameter indices are exactly the gate positions.
    pub fn new(n: usize, gates: Vec<GateSpec>) -> Result<Self> {
        if gates.is_empty() {
            return Err(Error::InvalidArgument("circuit has no gates".into()));
        }
        for (i, g) in gates.iter().enumerate() {
            if g.generator.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "gate {i} generator acts on {} qubits, circuit is over {n}",
                    g.generator.len()
                )));
            }
            if g.generator.iter().all(|&a| a == PauliAxis::I) {
                return Err(Error::InvalidArgument(format!(
                    "gate {i} has an identity generator"
                )));
            }
            if g.parameter_index != i {
                return Err(Error::InvalidArgument(format!(
                    "gate {i} carries parameter index {}; parameters must follow gate order",
                    g.parameter_index
                )));
            }
        }
        Ok(Self { n, gates })
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    /// Parameter count nu.
    pub fn parameter_count(&self) -> usize {
        self.gates.len()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.gates.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters supplied for a {}-gate circuit",
                theta.len(),
                self.gates.len()
            )));
        }
        Ok(())
    }

    /// Prepared state U_nu ... U_1 |0...0>.
    pub fn prepare_state(&self, theta: &[f64]) -> Result<StateVector> {
        self.check_theta(theta)?;
        let mut s = StateVector::zero(self.n);
        for (g, &t) in self.gates.iter().zip(theta) {
            s = s.apply_pauli_rotation(&g.generator, t)?;
        }
        Ok(s)
    }

    /// The unitary derivative companion D_k |0>: gates 0..=k applied, then
    /// P_k, then the remaining gates. The state derivative is
    /// -(i/2) times this vector. `k` is a zero-based parameter index.
    pub fn derivative_state(&self, theta: &[f64], k: usize) -> Result<StateVector> {
        self.check_theta(theta)?;
        if k >= self.gates.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter index {k} out of range for {} gates",
                self.gates.len()
            )));
        }
        let mut s = StateVector::zero(self.n);
        for (i, (g, &t)) in self.gates.iter().zip(theta).enumerate() {
            s = s.apply_pauli_rotation(&g.generator, t)?;
            if i == k {
                s = s.apply_pauli_string(&self.gates[k].generator)?;
            }
        }
        Ok(s)
    }

    /// JSON form `{"n": .., "gates": [{"p": "XI..", "idx": 1}, ..]}` with
    /// 1-based parameter indices.
    pub fn to_json(&self) -> String {
        let dto = CircuitDto {
            n: self.n,
            gates: self
                .gates
                .iter()
                .map(|g| GateDto {
                    p: PauliTerm::new(1.0, g.generator.clone()).axes_string(),
                    idx: g.parameter_index + 1,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dto).expect("serializable")
    }

    pub fn from_json(input: &str) -> Result<Self> {
        let dto: CircuitDto =
            serde_json::from_str(input).map_err(|e| Error::Parse(format!("bad JSON: {e}")))?;
        let gates = dto
            .gates
            .iter()
            .map(|g| {
                if g.idx == 0 {
                    return Err(Error::Parse("gate indices are 1-based".into()));
                }
                Ok(GateSpec {
                    generator: PauliTerm::from_str_axes(1.0, &g.p)?.axes,
                    parameter_index: g.idx - 1,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(dto.n, gates)
    }
}

#[derive(Serialize, Deserialize)]
struct CircuitDto {
    n: usize,
    gates: Vec<GateDto>,
}

#[derive(Serialize, Deserialize)]
struct GateDto {
    p: String,
    idx: usize,
}

fn single_site(n: usize, q: usize, ax: PauliAxis) -> Vec<PauliAxis> {
    let mut axes = vec![PauliAxis::I; n];
    axes[q] = ax;
    axes
}

/// Build the layered ansatz for a block pattern.
///
/// B1 appends N X rotations (qubit-ascending). B2 appends N ring ZZ
/// rotations on pairs (q, q+1 mod N) in ascending q, then N Y rotations,
/// then N X rotations. For `"B1B2B2"` this gives nu = 7N parameters.
pub fn build_layered_ansatz(n: usize, blocks: &[Block]) -> Result<AnsatzCircuit> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "layered ansatz needs at least 1 qubit".into(),
        ));
    }
    let mut gens: Vec<Vec<PauliAxis>> = Vec::new();
    for block in blocks {
        match block {
            Block::B1 => {
                for q in 0..n {
                    gens.push(single_site(n, q, PauliAxis::X));
                }
            }
            Block::B2 => {
                if n < 2 {
                    return Err(Error::InvalidArgument(
                        "the entangling block needs at least 2 qubits".into(),
                    ));
                }
                for q in 0..n {
                    let mut axes = vec![PauliAxis::I; n];
                    axes[q] = PauliAxis::Z;
                    axes[(q + 1) % n] = PauliAxis::Z;
                    gens.push(axes);
                }
                for q in 0..n {
                    gens.push(single_site(n, q, PauliAxis::Y));
                }
                for q in 0..n {
                    gens.push(single_site(n, q, PauliAxis::X));
                }
            }
        }
    }
    let gates = gens
        .into_iter()
        .enumerate()
        .map(|(i, generator)| GateSpec {
            generator,
            parameter_index: i,
        })
        .collect();
    AnsatzCircuit::new(n, gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn pattern_parsing() {
        assert_eq!(parse_pattern("B1B2B2").unwrap(), vec![Block::B1, Block::B2, Block::B2]);
        assert!(parse_pattern("B3").is_err());
        assert!(parse_pattern("").is_err());
        assert_eq!(pattern_string(&[Block::B1, Block::B2]), "B1B2");
    }

    #[test]
    fn parameter_counts_for_layered_patterns() {
        let c = build_layered_ansatz(12, &parse_pattern("B1B2B2").unwrap()).unwrap();
        assert_eq!(c.parameter_count(), 84);
        let c = build_layered_ansatz(8, &parse_pattern("B1B2B2").unwrap()).unwrap();
        assert_eq!(c.parameter_count(), 56);
        let c = build_layered_ansatz(4, &[Block::B1]).unwrap();
        assert_eq!(c.parameter_count(), 4);
        // two qubits: the ring degenerates to the same pair twice
        let c = build_layered_ansatz(2, &[Block::B2]).unwrap();
        assert_eq!(c.parameter_count(), 6);
    }

    #[test]
    fn zero_angles_prepare_the_reference_state() {
        let c = build_layered_ansatz(3, &parse_pattern("B1B2").unwrap()).unwrap();
        let s = c.prepare_state(&vec![0.0; c.parameter_count()]).unwrap();
        assert!((s.amplitudes()[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((s.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_companion_is_unitary_applied_to_zero() {
        let c = build_layered_ansatz(3, &parse_pattern("B1B2").unwrap()).unwrap();
        let theta: Vec<f64> = (0..c.parameter_count()).map(|i| 0.3 + 0.1 * i as f64).collect();
        for k in [0, 3, c.parameter_count() - 1] {
            let d = c.derivative_state(&theta, k).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference_of_the_state() {
        let c = build_layered_ansatz(2, &parse_pattern("B1B2").unwrap()).unwrap();
        let nu = c.parameter_count();
        let theta: Vec<f64> = (0..nu).map(|i| 0.2 + 0.17 * i as f64).collect();
        let delta = 1e-5;
        for k in 0..nu {
            let d = c.derivative_state(&theta, k).unwrap();
            let mut tp = theta.clone();
            tp[k] += delta;
            let mut tm = theta.clone();
            tm[k] -= delta;
            let sp = c.prepare_state(&tp).unwrap();
            let sm = c.prepare_state(&tm).unwrap();
            let half_i = Complex64::new(0.0, -0.5);
            let mut max_err: f64 = 0.0;
            for (i, amp_d) in d.amplitudes().iter().enumerate() {
                let fd = (sp.amplitudes()[i] - sm.amplitudes()[i]) / (2.0 * delta);
                let analytic = half_i * amp_d;
                max_err = max_err.max((fd - analytic).norm());
            }
            assert!(max_err < 1e-8, "param {k}: max err {max_err}");
        }
    }

    #[test]
    fn single_qubit_derivative_at_zero_is_excitation() {
        // One X gate at theta = 0: D|0> = X|0> = |1>.
        let c = AnsatzCircuit::new(
            2,
            vec![GateSpec {
                generator: vec![PauliAxis::X, PauliAxis::I],
                parameter_index: 0,
            }],
        )
        .unwrap();
        let d = c.derivative_state(&[0.0], 0).unwrap();
        assert!((d.amplitudes()[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let c = build_layered_ansatz(3, &parse_pattern("B1B2").unwrap()).unwrap();
        let back = AnsatzCircuit::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);

        let bad = r#"{"n": 2, "gates": [{"p": "II", "idx": 1}]}"#;
        assert!(AnsatzCircuit::from_json(bad).is_err());
        let bad_order = r#"{"n": 2, "gates": [{"p": "XI", "idx": 2}]}"#;
        assert!(AnsatzCircuit::from_json(bad_order).is_err());
    }
}
