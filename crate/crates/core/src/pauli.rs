//! Pauli-string algebra: weighted sums of tensor products of Pauli operators,
//! H = sum_l h_l P_l, plus the benchmark Hamiltonian families used throughout
//! the crate.
//!
//! Strings are stored axis-per-qubit (`axes[q]` acts on qubit `q`), sums are
//! kept in a canonical lexicographic order with duplicate strings merged, and
//! all coefficients are real (Hermitian by construction).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// Coefficient magnitude below which a *merged* pair of terms is treated as
/// cancelled and removed. Explicitly constructed single terms are kept even
/// at zero coefficient (generated Hamiltonians keep their structural on-site
/// terms when a field coefficient happens to be zero).
pub const MERGE_EPS: f64 = 1e-12;

/// Single-qubit Pauli axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    I,
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(PauliAxis::I),
            'X' => Ok(PauliAxis::X),
            'Y' => Ok(PauliAxis::Y),
            'Z' => Ok(PauliAxis::Z),
            _ => Err(Error::Parse(format!("invalid Pauli axis '{c}'"))),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            PauliAxis::I => 'I',
            PauliAxis::X => 'X',
            PauliAxis::Y => 'Y',
            PauliAxis::Z => 'Z',
        }
    }
}

/// One weighted Pauli string.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub axes: Vec<PauliAxis>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, axes: Vec<PauliAxis>) -> Self {
        Self { coefficient, axes }
    }

    /// Parse axes from a string like `"XXIZ"`; position `i` acts on qubit `i`.
    pub fn from_str_axes(coefficient: f64, s: &str) -> Result<Self> {
        let axes = s.chars().map(PauliAxis::from_char).collect::<Result<_>>()?;
        Ok(Self { coefficient, axes })
    }

    pub fn axes_string(&self) -> String {
        self.axes.iter().map(|a| a.to_char()).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.axes.iter().all(|&a| a == PauliAxis::I)
    }

    /// Qubit-wise commutation: on every qubit the axes are equal or one is I.
    pub fn qubitwise_commutes(&self, other: &PauliTerm) -> bool {
        self.axes
            .iter()
            .zip(&other.axes)
            .all(|(&a, &b)| a == PauliAxis::I || b == PauliAxis::I || a == b)
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.coefficient, self.axes_string())
    }
}

/// A Hermitian operator as a merged, canonically ordered sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    /// Build a sum over `n` qubits, merging duplicate strings and sorting
    /// lexicographically. Merged coefficients below [`MERGE_EPS`] are dropped
    /// when they arise from actual cancellation (two or more contributions);
    /// singleton zero-coefficient terms are structural and kept.
    pub fn from_terms(n: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        for t in &terms {
            if t.axes.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "term '{}' has {} axes, sum is over {} qubits",
                    t.axes_string(),
                    t.axes.len(),
                    n
                )));
            }
        }
        let mut sorted = terms;
        // the coefficient tiebreak fixes the summation order inside each
        // duplicate group, so the merged value is independent of input order
        sorted.sort_by(|a, b| {
            a.axes
                .cmp(&b.axes)
                .then(a.coefficient.total_cmp(&b.coefficient))
        });
        let mut merged: Vec<(PauliTerm, usize)> = Vec::with_capacity(sorted.len());
        for t in sorted {
            match merged.last_mut() {
                Some((prev, count)) if prev.axes == t.axes => {
                    prev.coefficient += t.coefficient;
                    *count += 1;
                }
                _ => merged.push((t, 1)),
            }
        }
        let terms = merged
            .into_iter()
            .filter(|(t, count)| *count == 1 || t.coefficient.abs() >= MERGE_EPS)
            .map(|(t, _)| t)
            .collect();
        Ok(Self { n, terms })
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Number of Pauli strings r_h.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    /// Mean squared singular value, `tr[H^2] / 2^n = sum_l h_l^2`.
    ///
    /// Pauli strings are orthogonal under the normalized trace inner product,
    /// so the Frobenius norm collapses to the coefficient norm.
    pub fn spc(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient * t.coefficient).sum()
    }

    /// Greedy partition into qubit-wise commuting groups: each term joins the
    /// first group whose members all qubit-wise commute with it. The number of
    /// groups is what a grouped measurement protocol pays per composite shot.
    pub fn qubitwise_commuting_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, term) in self.terms.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|g| g.iter().all(|&j| self.terms[j].qubitwise_commutes(term)))
            {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        groups
    }

    /// Plain line format, one `<coefficient> <axes>` pair per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_lines(input: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut n = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (c, p) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(p), None) => (c, p),
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected '<coefficient> <axes>', got '{line}'",
                        lineno + 1
                    )))
                }
            };
            let coefficient = c
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: bad coefficient: {e}", lineno + 1)))?;
            let term = PauliTerm::from_str_axes(coefficient, p)?;
            match n {
                None => n = Some(term.axes.len()),
                Some(n) if n != term.axes.len() => {
                    return Err(Error::Parse(format!(
                        "line {}: axes length {} differs from earlier {}",
                        lineno + 1,
                        term.axes.len(),
                        n
                    )))
                }
                _ => {}
            }
            terms.push(term);
        }
        let n = n.ok_or_else(|| Error::Parse("no terms in input".into()))?;
        Self::from_terms(n, terms)
    }

    /// JSON form `{"n": .., "terms": [{"c": .., "p": "XXII"}, ..]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SumDto::from(self)).expect("serializable")
    }

    pub fn from_json(input: &str) -> Result<Self> {
        let dto: SumDto =
            serde_json::from_str(input).map_err(|e| Error::Parse(format!("bad JSON: {e}")))?;
        let terms = dto
            .terms
            .iter()
            .map(|t| PauliTerm::from_str_axes(t.c, &t.p))
            .collect::<Result<_>>()?;
        Self::from_terms(dto.n, terms)
    }
}

#[derive(Serialize, Deserialize)]
struct SumDto {
    n: usize,
    terms: Vec<TermDto>,
}

#[derive(Serialize, Deserialize)]
struct TermDto {
    c: f64,
    p: String,
}

impl From<&PauliSum> for SumDto {
    fn from(s: &PauliSum) -> Self {
        SumDto {
            n: s.n,
            terms: s
                .terms
                .iter()
                .map(|t| TermDto {
                    c: t.coefficient,
                    p: t.axes_string(),
                })
                .collect(),
        }
    }
}

/// Benchmark Hamiltonian families. The locality exponent of Spc[H] grows as
/// N, N^2, N^3 along the list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    /// Periodic Heisenberg ring: J(XX+YY+ZZ) on nearest neighbours plus the
    /// wrap-around bond, with on-site Z fields.
    Chain,
    /// All-to-all Heisenberg couplings J(XX+YY+ZZ) on every pair, plus
    /// on-site Z fields.
    Quadratic,
    /// J X_k Y_l Z_m on every qubit triple k < l < m, plus on-site Z fields.
    Cubic,
}

impl HamiltonianKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HamiltonianKind::Chain => "chain",
            HamiltonianKind::Quadratic => "quadratic",
            HamiltonianKind::Cubic => "cubic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(HamiltonianKind::Chain),
            "quadratic" => Ok(HamiltonianKind::Quadratic),
            "cubic" => Ok(HamiltonianKind::Cubic),
            _ => Err(Error::Parse(format!(
                "unknown hamiltonian kind '{s}' (expected chain|quadratic|cubic)"
            ))),
        }
    }
}

fn two_site(n: usize, a: usize, b: usize, ax: PauliAxis, coeff: f64) -> PauliTerm {
    let mut axes = vec![PauliAxis::I; n];
    axes[a] = ax;
    axes[b] = ax;
    PauliTerm::new(coeff, axes)
}

/// Build one of the benchmark Hamiltonians. `omega` must have length `n`;
/// on-site terms are kept even when a field coefficient is zero.
pub fn build_hamiltonian(
    kind: HamiltonianKind,
    n: usize,
    j: f64,
    omega: &[f64],
) -> Result<PauliSum> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "hamiltonian needs at least 1 qubit".into(),
        ));
    }
    if omega.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "omega has length {}, expected {n}",
            omega.len()
        )));
    }
    let heis = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
    let mut terms = Vec::new();
    match kind {
        HamiltonianKind::Chain => {
            for i in 0..n {
                let (a, b) = (i, (i + 1) % n);
                for ax in heis {
                    terms.push(two_site(n, a, b, ax, j));
                }
            }
        }
        HamiltonianKind::Quadratic => {
            for l in 0..n {
                for k in (l + 1)..n {
                    for ax in heis {
                        terms.push(two_site(n, k, l, ax, j));
                    }
                }
            }
        }
        HamiltonianKind::Cubic => {
            for k in 0..n {
                for l in (k + 1)..n {
                    for m in (l + 1)..n {
                        let mut axes = vec![PauliAxis::I; n];
                        axes[k] = PauliAxis::X;
                        axes[l] = PauliAxis::Y;
                        axes[m] = PauliAxis::Z;
                        terms.push(PauliTerm::new(j, axes));
                    }
                }
            }
        }
    }
    for (i, &w) in omega.iter().enumerate() {
        let mut axes = vec![PauliAxis::I; n];
        axes[i] = PauliAxis::Z;
        terms.push(PauliTerm::new(w, axes));
    }
    PauliSum::from_terms(n, terms)
}

/// Draw on-site field coefficients uniformly from [-1, 1), one per qubit, from
/// the omega substream of `seed`.
pub fn random_omega(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Omega, &[]);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
