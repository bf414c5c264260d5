//! Spin operators, tensor-product embeddings, the XY chain Hamiltonian and
//! the classical-noise coupling operator.
//!
//! Basis convention used everywhere in this crate: qubit 1 is the most
//! significant tensor factor and |e> sorts before |g>, so index 0 is |e...e>
//! and index 2^N-1 is |g...g>.

use crate::{Error, Result, C64};
use ndarray as nd;
use serde::{Deserialize, Serialize};

/// Static parameters of the chain and its bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_qubits: usize,
    pub j_x: f64,
    pub j_y: f64,
    pub omega0: f64,
    pub gamma: f64,
    pub nbar: f64,
    pub periodic: bool,
}

impl ChainSpec {
    pub fn new(
        n_qubits: usize,
        j_x: f64,
        j_y: f64,
        omega0: f64,
        gamma: f64,
        nbar: f64,
        periodic: bool,
    ) -> Result<Self> {
        let spec = ChainSpec { n_qubits, j_x, j_y, omega0, gamma, nbar, periodic };
        spec.validate()?;
        Ok(spec)
    }

    /// Same spec parameterized by the symmetric/antisymmetric couplings
    /// J = (j_x+j_y)/2 and Delta = (j_x-j_y)/2.
    pub fn from_j_delta(
        n_qubits: usize,
        j: f64,
        delta: f64,
        omega0: f64,
        gamma: f64,
        nbar: f64,
        periodic: bool,
    ) -> Result<Self> {
        Self::new(n_qubits, j + delta, j - delta, omega0, gamma, nbar, periodic)
    }

    /// Reference parameter set used by every table experiment:
    /// omega0=4, J=0.2, Delta=0.1, gamma=0.01, nbar=0, periodic chain.
    pub fn reference(n_qubits: usize) -> Self {
        Self::from_j_delta(n_qubits, 0.2, 0.1, 4.0, 0.01, 0.0, true)
            .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.n_qubits) {
            return Err(Error::InvalidArgument(format!(
                "n_qubits must be 2, 3 or 4, got {}",
                self.n_qubits
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.nbar < 0.0 {
            return Err(Error::InvalidArgument(format!("nbar must be >= 0, got {}", self.nbar)));
        }
        for (name, v) in [
            ("j_x", self.j_x),
            ("j_y", self.j_y),
            ("omega0", self.omega0),
            ("gamma", self.gamma),
            ("nbar", self.nbar),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Symmetric coupling J = (j_x + j_y)/2.
    pub fn j(&self) -> f64 {
        0.5 * (self.j_x + self.j_y)
    }

    /// Anisotropy Delta = (j_x - j_y)/2.
    pub fn delta(&self) -> f64 {
        0.5 * (self.j_x - self.j_y)
    }

    /// Hilbert-space dimension 2^N.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Nearest-neighbor bonds as 1-based pairs, each distinct bond once.
    /// For N=2 the periodic closure coincides with the open bond, which is
    /// therefore included a single time.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        let mut bonds: Vec<(usize, usize)> = (1..n).map(|k| (k, k + 1)).collect();
        if self.periodic && n > 2 {
            bonds.push((n, 1));
        }
        bonds
    }
}

/// Which qubits the classical noise couples to, and how strongly.
/// `qubits` holds 1-based indices; the coupling operator is the collective
/// sum of their S^z (so {3,4} is the M_34 arrangement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlacement {
    pub qubits: Vec<usize>,
    pub strength: f64,
}

impl NoisePlacement {
    pub fn new(qubits: impl IntoIterator<Item = usize>, strength: f64) -> Self {
        let mut qubits: Vec<usize> = qubits.into_iter().collect();
        qubits.sort_unstable();
        qubits.dedup();
        NoisePlacement { qubits, strength }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.strength < 0.0 || !self.strength.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise strength must be finite and >= 0, got {}",
                self.strength
            )));
        }
        for &q in &self.qubits {
            if q == 0 || q > n_qubits {
                return Err(Error::InvalidArgument(format!(
                    "noise placement qubit {q} out of range 1..={n_qubits}"
                )));
            }
        }
        Ok(())
    }

    /// Same qubit set at a different strength.
    pub fn with_strength(&self, strength: f64) -> Self {
        NoisePlacement { qubits: self.qubits.clone(), strength }
    }

    /// Compact label like "M34"; "M0" for the empty set.
    pub fn label(&self) -> String {
        if self.qubits.is_empty() {
            return "M0".to_string();
        }
        let digits: String = self.qubits.iter().map(|q| q.to_string()).collect();
        format!("M{digits}")
    }
}

/// Dense operator on the N-qubit Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub dim: usize,
    pub entries: nd::Array2<C64>,
}

impl OperatorMatrix {
    pub fn from_entries(entries: nd::Array2<C64>) -> Self {
        let dim = entries.nrows();
        assert_eq!(dim, entries.ncols(), "operator matrices are square");
        OperatorMatrix { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix { dim, entries: nd::Array2::zeros((dim, dim)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinAxis {
    X,
    Y,
    Z,
}

fn pauli(axis: SpinAxis) -> nd::Array2<C64> {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        SpinAxis::X => nd::array![[z, o], [o, z]],
        SpinAxis::Y => nd::array![[z, -i], [i, z]],
        SpinAxis::Z => nd::array![[o, z], [z, -o]],
    }
}

/// Kronecker product (first factor most significant).
pub fn kron(a: &nd::Array2<C64>, b: &nd::Array2<C64>) -> nd::Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = nd::Array2::<C64>::zeros((ar * br, ac * bc));
    for ia in 0..ar {
        for ja in 0..ac {
            let f = a[[ia, ja]];
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for ib in 0..br {
                for jb in 0..bc {
                    out[[ia * br + ib, ja * bc + jb]] = f * b[[ib, jb]];
                }
            }
        }
    }
    out
}

/// Embeds a single-qubit operator at 1-based position `qubit` of an
/// `n_qubits` register (identity on all other factors).
fn embed(op: &nd::Array2<C64>, qubit: usize, n_qubits: usize) -> nd::Array2<C64> {
    let mut m = nd::Array2::<C64>::ones((1, 1));
    let id = nd::Array2::<C64>::eye(2);
    for k in 1..=n_qubits {
        m = if k == qubit { kron(&m, op) } else { kron(&m, &id) };
    }
    m
}

fn check_qubit(qubit: usize, n_qubits: usize) -> Result<()> {
    if qubit == 0 || qubit > n_qubits {
        return Err(Error::InvalidArgument(format!(
            "qubit index {qubit} out of range 1..={n_qubits}"
        )));
    }
    Ok(())
}

/// S^axis on one qubit of the register: the Pauli matrix over 2, embedded.
pub fn spin_operator(qubit: usize, axis: SpinAxis, n_qubits: usize) -> Result<OperatorMatrix> {
    check_qubit(qubit, n_qubits)?;
    let half = pauli(axis).mapv(|z| z * 0.5);
    Ok(OperatorMatrix::from_entries(embed(&half, qubit, n_qubits)))
}

/// S^- = S^x - i S^y on one qubit: maps |e> to |g> there, annihilates |g>.
pub fn lowering_operator(qubit: usize, n_qubits: usize) -> Result<OperatorMatrix> {
    check_qubit(qubit, n_qubits)?;
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let sm = nd::array![[z, z], [o, z]];
    Ok(OperatorMatrix::from_entries(embed(&sm, qubit, n_qubits)))
}

/// S^+ = (S^-)^dagger on one qubit.
pub fn raising_operator(qubit: usize, n_qubits: usize) -> Result<OperatorMatrix> {
    check_qubit(qubit, n_qubits)?;
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let sp = nd::array![[z, o], [z, z]];
    Ok(OperatorMatrix::from_entries(embed(&sp, qubit, n_qubits)))
}

/// H0 = sum over bonds (Jx Sx Sx + Jy Sy Sy) + omega0 sum Sz.
pub fn build_hamiltonian(spec: &ChainSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    Ok(hamiltonian_for_bonds(spec, &spec.bonds()))
}

/// Sensitivity variant that counts the N=2 periodic bond twice (the naive
/// sum over n=1..N with wraparound). Not used by any experiment.
pub fn build_hamiltonian_double_bond(spec: &ChainSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let mut bonds = spec.bonds();
    if spec.periodic && spec.n_qubits == 2 {
        bonds.push((2, 1));
    }
    Ok(hamiltonian_for_bonds(spec, &bonds))
}

fn hamiltonian_for_bonds(spec: &ChainSpec, bonds: &[(usize, usize)]) -> OperatorMatrix {
    let n = spec.n_qubits;
    let d = spec.dim();
    let mut h = nd::Array2::<C64>::zeros((d, d));
    for &(a, b) in bonds {
        let sxa = spin_operator(a, SpinAxis::X, n).unwrap().entries;
        let sxb = spin_operator(b, SpinAxis::X, n).unwrap().entries;
        let sya = spin_operator(a, SpinAxis::Y, n).unwrap().entries;
        let syb = spin_operator(b, SpinAxis::Y, n).unwrap().entries;
        h += &crate::linalg::matmul(&sxa, &sxb).mapv(|z| z * spec.j_x);
        h += &crate::linalg::matmul(&sya, &syb).mapv(|z| z * spec.j_y);
    }
    for q in 1..=n {
        let sz = spin_operator(q, SpinAxis::Z, n).unwrap().entries;
        h += &sz.mapv(|z| z * spec.omega0);
    }
    OperatorMatrix::from_entries(h)
}

/// V = sum of S^z over the placement qubits; the zero matrix for an empty
/// placement. The strength M multiplies the double commutator, not V itself.
pub fn noise_operator(placement: &NoisePlacement, n_qubits: usize) -> Result<OperatorMatrix> {
    placement.validate(n_qubits)?;
    let d = 1usize << n_qubits;
    let mut v = nd::Array2::<C64>::zeros((d, d));
    for &q in &placement.qubits {
        v += &spin_operator(q, SpinAxis::Z, n_qubits)?.entries;
    }
    Ok(OperatorMatrix::from_entries(v))
}

/// Closed-form spectrum of the 3-qubit periodic chain, ascending.
pub fn spectrum3_closed_form(j: f64, delta: f64, omega: f64) -> [f64; 8] {
    let (jj, d, w) = (j, delta, omega);
    let r1 = ((jj - 2.0 * w).powi(2) + 3.0 * d * d).sqrt();
    let r2 = ((jj + 2.0 * w).powi(2) + 3.0 * d * d).sqrt();
    let mut ev = [
        (jj + w + r1) / 2.0,
        (jj + w - r1) / 2.0,
        (jj - w + r2) / 2.0,
        (jj - w - r2) / 2.0,
        (-jj + w) / 2.0,
        (-jj + w) / 2.0,
        (-jj - w) / 2.0,
        (-jj - w) / 2.0,
    ];
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Closed-form spectrum of the 4-qubit periodic chain, ascending.
pub fn spectrum4_closed_form(j: f64, delta: f64, omega: f64) -> [f64; 16] {
    let (jj, d, w) = (j, delta, omega);
    let inner = (d.powi(4) + (4.0 * w * w + 2.0 * jj * jj) * d * d + (jj * jj - 2.0 * w * w).powi(2))
        .sqrt();
    let a = (jj * jj + d * d + 2.0 * w * w + inner).sqrt();
    let b = (jj * jj + d * d + 2.0 * w * w - inner).max(0.0).sqrt();
    let c = (w * w + d * d).sqrt();
    let mut ev = [
        a,
        -a,
        b,
        -b,
        -jj + c,
        -jj - c,
        jj + c,
        jj - c,
        w,
        w,
        -w,
        -w,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}
