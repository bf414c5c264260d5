//! Initial preparations: product kets, catalogued density-matrix tables,
//! the W state and its dephased variant, and the partial trace down to the
//! observed qubit pair.

use ndarray as nd;

use crate::dynamics::DensityMatrix;
use crate::{linalg, C64, Error, Result};

/// Tolerance for the positive-semidefiniteness check on preparations.
pub const PREP_PSD_TOL: f64 = 1e-12;
/// Tolerance for trace and Hermitian-closure checks on table preparations.
pub const PREP_TOL: f64 = 1e-9;

/// One assignment into an N-qubit density matrix, 1-based row/column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub row: usize,
    pub col: usize,
    pub value: C64,
}

impl TableEntry {
    pub fn new(row: usize, col: usize, value: impl Into<C64>) -> Self {
        Self { row, col, value: value.into() }
    }
}

/// How a preparation is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum PrepKind {
    /// Product ket given as a string of `e`/`g` labels, qubit 1 first.
    Product(String),
    /// Explicit matrix-element assignments; unlisted entries are zero.
    Table(Vec<TableEntry>),
    WState,
    WStateDephased,
}

/// A named or ad-hoc initial state of the full chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub n_qubits: usize,
    pub kind: PrepKind,
}

impl Preparation {
    /// Product ket from a label string such as `"eeg"`.
    pub fn product(labels: &str) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidPreparation("empty product label".into()));
        }
        if let Some(bad) = labels.chars().find(|c| *c != 'e' && *c != 'g') {
            return Err(Error::InvalidPreparation(format!(
                "product label may contain only 'e' and 'g', found {bad:?}"
            )));
        }
        Ok(Self { n_qubits: labels.len(), kind: PrepKind::Product(labels.to_string()) })
    }

    /// Table preparation from explicit entries (validated at build time).
    pub fn table(n_qubits: usize, entries: Vec<TableEntry>) -> Self {
        Self { n_qubits, kind: PrepKind::Table(entries) }
    }

    pub fn w_state() -> Self {
        Self { n_qubits: 3, kind: PrepKind::WState }
    }

    pub fn w_state_dephased() -> Self {
        Self { n_qubits: 3, kind: PrepKind::WStateDephased }
    }

    /// Look up a preparation by catalog key or product label.
    pub fn from_key(key: &str) -> Result<Self> {
        if key == "w_state" {
            return Ok(Self::w_state());
        }
        if key == "w_state_dephased" {
            return Ok(Self::w_state_dephased());
        }
        if let Some((n, entries)) = catalog_entries(key) {
            return Ok(Self::table(n, entries));
        }
        if !key.is_empty() && key.chars().all(|c| c == 'e' || c == 'g') {
            return Self::product(key);
        }
        Err(Error::InvalidPreparation(format!(
            "unknown preparation key {key:?}; expected a catalog key or an e/g product label"
        )))
    }

    /// Build the full N-qubit density matrix.
    pub fn build(&self) -> Result<DensityMatrix> {
        make_preparation(self)
    }
}

/// All catalog keys addressable from the CLI, in table order.
pub fn catalog_keys() -> Vec<&'static str> {
    let mut keys = vec!["phi_plus_2q", "psi_plus_2q"];
    keys.extend((1..=5).map(|i| PHI3_KEYS[i - 1]));
    keys.extend((1..=5).map(|i| PSI3_KEYS[i - 1]));
    keys.extend((1..=7).map(|i| PHI4_KEYS[i - 1]));
    keys.extend((1..=7).map(|i| PSI4_KEYS[i - 1]));
    keys.push("w_state");
    keys.push("w_state_dephased");
    keys
}

const PHI3_KEYS: [&str; 5] = [
    "phi_plus_3q_prep1",
    "phi_plus_3q_prep2",
    "phi_plus_3q_prep3",
    "phi_plus_3q_prep4",
    "phi_plus_3q_prep5",
];
const PSI3_KEYS: [&str; 5] = [
    "psi_plus_3q_prep1",
    "psi_plus_3q_prep2",
    "psi_plus_3q_prep3",
    "psi_plus_3q_prep4",
    "psi_plus_3q_prep5",
];
const PHI4_KEYS: [&str; 7] = [
    "phi_plus_4q_prep1",
    "phi_plus_4q_prep2",
    "phi_plus_4q_prep3",
    "phi_plus_4q_prep4",
    "phi_plus_4q_prep5",
    "phi_plus_4q_prep6",
    "phi_plus_4q_prep7",
];
const PSI4_KEYS: [&str; 7] = [
    "psi_plus_4q_prep1",
    "psi_plus_4q_prep2",
    "psi_plus_4q_prep3",
    "psi_plus_4q_prep4",
    "psi_plus_4q_prep5",
    "psi_plus_4q_prep6",
    "psi_plus_4q_prep7",
];

/// Mirror real-valued upper/lower entries into a Hermitian entry list.
fn sym(raw: &[(usize, usize, f64)]) -> Vec<TableEntry> {
    let mut out = Vec::with_capacity(raw.len() * 2);
    for &(r, c, v) in raw {
        out.push(TableEntry::new(r, c, v));
        if r != c {
            out.push(TableEntry::new(c, r, v));
        }
    }
    out
}

/// Psi-plus pair on qubits (1,2) tensored with a diagonal environment
/// mixture; `weights` are the populations of |ee>,|eg>,|ge>,|gg> on (3,4).
fn psi4_env(weights: [f64; 4]) -> Vec<TableEntry> {
    let mut raw = Vec::new();
    for (k, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            raw.push((5 + k, 5 + k, w));
            raw.push((9 + k, 9 + k, w));
            raw.push((9 + k, 5 + k, w));
        }
    }
    sym(&raw)
}

fn catalog_entries(key: &str) -> Option<(usize, Vec<TableEntry>)> {
    let t = |n: usize, raw: &[(usize, usize, f64)]| Some((n, sym(raw)));
    match key {
        "phi_plus_2q" => t(2, &[(1, 1, 0.5), (4, 4, 0.5), (4, 1, 0.5)]),
        "psi_plus_2q" => t(2, &[(2, 2, 0.5), (3, 3, 0.5), (3, 2, 0.5)]),

        "phi_plus_3q_prep1" | "phi_plus_3q_balanced" => t(
            3,
            &[
                (1, 1, 0.25),
                (2, 2, 0.25),
                (7, 7, 0.25),
                (8, 8, 0.25),
                (7, 1, 0.25),
                (8, 2, 0.25),
            ],
        ),
        "phi_plus_3q_prep2" => t(3, &[(2, 2, 0.5), (8, 8, 0.5), (8, 2, 0.5)]),
        "phi_plus_3q_prep3" => t(
            3,
            &[
                (1, 1, 0.4),
                (2, 2, 0.1),
                (7, 7, 0.4),
                (8, 8, 0.1),
                (7, 1, 0.4),
                (8, 2, 0.1),
            ],
        ),
        "phi_plus_3q_prep4" => t(
            3,
            &[
                (1, 1, 0.1),
                (2, 2, 0.4),
                (7, 7, 0.1),
                (8, 8, 0.4),
                (7, 1, 0.1),
                (8, 2, 0.4),
            ],
        ),
        "phi_plus_3q_prep5" => t(3, &[(1, 1, 0.5), (7, 7, 0.5), (7, 1, 0.5)]),

        "psi_plus_3q_prep1" => t(
            3,
            &[
                (3, 3, 0.25),
                (4, 4, 0.25),
                (5, 5, 0.25),
                (6, 6, 0.25),
                (5, 3, 0.25),
                (6, 4, 0.25),
            ],
        ),
        "psi_plus_3q_prep2" => t(3, &[(4, 4, 0.5), (6, 6, 0.5), (6, 4, 0.5)]),
        "psi_plus_3q_prep3" => t(3, &[(3, 3, 0.5), (5, 5, 0.5), (5, 3, 0.5)]),
        "psi_plus_3q_prep4" => t(
            3,
            &[
                (3, 3, 0.4),
                (4, 4, 0.1),
                (5, 5, 0.4),
                (6, 6, 0.1),
                (5, 3, 0.4),
                (6, 4, 0.1),
            ],
        ),
        "psi_plus_3q_prep5" => t(
            3,
            &[
                (3, 3, 0.1),
                (4, 4, 0.4),
                (5, 5, 0.1),
                (6, 6, 0.4),
                (5, 3, 0.1),
                (6, 4, 0.4),
            ],
        ),

        "phi_plus_4q_prep1" | "phi_plus_4q_balanced" => {
            let mut raw: Vec<(usize, usize, f64)> = Vec::new();
            for i in [1usize, 2, 3, 4, 13, 14, 15, 16] {
                raw.push((i, i, 0.125));
            }
            for k in 1usize..=4 {
                raw.push((12 + k, k, 0.125));
            }
            t(4, &raw)
        }
        "phi_plus_4q_prep2" => t(4, &[(1, 1, 0.5), (13, 13, 0.5), (13, 1, 0.5)]),
        "phi_plus_4q_prep3" => t(4, &[(2, 2, 0.5), (14, 14, 0.5), (14, 2, 0.5)]),
        "phi_plus_4q_prep4" => t(
            4,
            &[
                (3, 3, 0.25),
                (4, 4, 0.25),
                (15, 15, 0.25),
                (16, 16, 0.25),
                (15, 3, 0.25),
                (16, 4, 0.25),
            ],
        ),
        "phi_plus_4q_prep5" => t(
            4,
            &[
                (1, 1, 0.25),
                (2, 2, 0.25),
                (13, 13, 0.25),
                (14, 14, 0.25),
                (13, 1, 0.25),
                (14, 2, 0.25),
            ],
        ),
        "phi_plus_4q_prep6" => t(4, &[(4, 4, 0.5), (16, 16, 0.5), (16, 4, 0.5)]),
        "phi_plus_4q_prep7" => t(
            4,
            &[
                (1, 1, 1.0 / 16.0),
                (2, 2, 1.0 / 16.0),
                (3, 3, 3.0 / 16.0),
                (4, 4, 3.0 / 16.0),
                (13, 13, 1.0 / 16.0),
                (14, 14, 1.0 / 16.0),
                (15, 15, 3.0 / 16.0),
                (16, 16, 3.0 / 16.0),
                (13, 1, 1.0 / 16.0),
                (14, 2, 1.0 / 16.0),
                (15, 3, 3.0 / 16.0),
                (16, 4, 3.0 / 16.0),
            ],
        ),

        "psi_plus_4q_prep1" | "psi_plus_4q_balanced" => {
            Some((4, psi4_env([0.125, 0.125, 0.125, 0.125])))
        }
        "psi_plus_4q_prep2" => Some((4, psi4_env([3.0 / 16.0, 3.0 / 16.0, 1.0 / 16.0, 1.0 / 16.0]))),
        "psi_plus_4q_prep3" => Some((4, psi4_env([1.0 / 16.0, 1.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0]))),
        "psi_plus_4q_prep4" => Some((4, psi4_env([0.5, 0.0, 0.0, 0.0]))),
        "psi_plus_4q_prep5" => Some((4, psi4_env([0.0, 0.5, 0.0, 0.0]))),
        "psi_plus_4q_prep6" => Some((4, psi4_env([0.0, 0.0, 0.5, 0.0]))),
        "psi_plus_4q_prep7" => Some((4, psi4_env([0.0, 0.0, 0.0, 0.5]))),
        _ => None,
    }
}

/// Nine 1/3 entries over basis indices {2,3,5} (1-based), i.e. the uniform
/// superposition of |eeg>, |ege>, |gee>.
fn w_entries() -> Vec<TableEntry> {
    let third = 1.0 / 3.0;
    sym(&[
        (2, 2, third),
        (3, 3, third),
        (5, 5, third),
        (3, 2, third),
        (5, 2, third),
        (5, 3, third),
    ])
}

/// W state with qubit 3 fully dephased: the (2,3) and (2,5) coherences are
/// removed (both connect different qubit-3 values), the (3,5) coherence that
/// feeds the reduced pair state survives. This is the unique positive
/// completion that leaves the reduced (1,2) state unchanged.
fn w_dephased_entries() -> Vec<TableEntry> {
    let third = 1.0 / 3.0;
    sym(&[(2, 2, third), (3, 3, third), (5, 5, third), (5, 3, third)])
}

/// The dephased-W matrix directly.
pub fn w_state_dephased() -> DensityMatrix {
    make_preparation(&Preparation::w_state_dephased()).expect("catalog state is valid")
}

/// Assemble and validate the full density matrix for a preparation.
pub fn make_preparation(prep: &Preparation) -> Result<DensityMatrix> {
    let n = prep.n_qubits;
    if n == 0 || n > 8 {
        return Err(Error::InvalidPreparation(format!(
            "n_qubits must be in 1..=8, got {n}"
        )));
    }
    let dim = 1usize << n;
    let entries: Vec<TableEntry> = match &prep.kind {
        PrepKind::Product(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidPreparation(format!(
                    "product label {labels:?} has {} qubits, preparation says {n}",
                    labels.len()
                )));
            }
            let mut idx = 0usize;
            for ch in labels.chars() {
                idx = 2 * idx + if ch == 'g' { 1 } else { 0 };
            }
            return DensityMatrix::basis_projector(n, idx);
        }
        PrepKind::Table(entries) => entries.clone(),
        PrepKind::WState => {
            if n != 3 {
                return Err(Error::InvalidPreparation("w_state is a 3-qubit state".into()));
            }
            w_entries()
        }
        PrepKind::WStateDephased => {
            if n != 3 {
                return Err(Error::InvalidPreparation(
                    "w_state_dephased is a 3-qubit state".into(),
                ));
            }
            w_dephased_entries()
        }
    };

    let mut rho = nd::Array2::<C64>::zeros((dim, dim));
    let mut seen = std::collections::HashMap::new();
    for e in &entries {
        if e.row == 0 || e.col == 0 || e.row > dim || e.col > dim {
            return Err(Error::InvalidPreparation(format!(
                "entry ({},{}) outside 1..={dim}",
                e.row, e.col
            )));
        }
        if let Some(prev) = seen.insert((e.row, e.col), e.value) {
            if (prev - e.value).norm() > PREP_TOL {
                return Err(Error::InvalidPreparation(format!(
                    "conflicting duplicate entry at ({},{})",
                    e.row, e.col
                )));
            }
        }
        rho[[e.row - 1, e.col - 1]] = e.value;
    }

    // Hermitian closure: every off-diagonal assignment needs its conjugate.
    for (&(r, c), &v) in &seen {
        if r == c {
            if v.im.abs() > PREP_TOL {
                return Err(Error::InvalidPreparation(format!(
                    "diagonal entry ({r},{r}) has imaginary part {:.3e}",
                    v.im
                )));
            }
            if v.re < -PREP_TOL {
                return Err(Error::InvalidPreparation(format!(
                    "diagonal entry ({r},{r}) is negative: {:.3e}",
                    v.re
                )));
            }
            continue;
        }
        match seen.get(&(c, r)) {
            Some(w) if (w.conj() - v).norm() <= PREP_TOL => {}
            Some(_) => {
                return Err(Error::InvalidPreparation(format!(
                    "entries ({r},{c}) and ({c},{r}) are not conjugates"
                )));
            }
            None => {
                return Err(Error::InvalidPreparation(format!(
                    "entry ({r},{c}) lacks its Hermitian partner ({c},{r})"
                )));
            }
        }
    }

    let trace: C64 = (0..dim).map(|i| rho[[i, i]]).sum();
    if (trace.re - 1.0).abs() > PREP_TOL || trace.im.abs() > PREP_TOL {
        return Err(Error::InvalidPreparation(format!(
            "trace is {:.12}, expected 1",
            trace.re
        )));
    }

    let min_eig = linalg::hermitian_eigenvalues(&rho)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -PREP_PSD_TOL {
        return Err(Error::InvalidPreparation(format!(
            "not positive semidefinite: min eigenvalue {min_eig:.3e}"
        )));
    }

    Ok(DensityMatrix::new_unchecked(rho))
}

/// Trace out all qubits not in `keep` (1-based, ascending, distinct).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let dim = rho.dim;
    let n = dim.trailing_zeros() as usize;
    if dim != 1 << n {
        return Err(Error::InvalidArgument(format!(
            "density matrix dimension {dim} is not a power of two"
        )));
    }
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "keep set must be strictly ascending".into(),
        ));
    }
    if keep[0] < 1 || *keep.last().unwrap() > n {
        return Err(Error::InvalidArgument(format!(
            "keep set outside 1..={n}"
        )));
    }

    let k = keep.len();
    let traced: Vec<usize> = (1..=n).filter(|q| !keep.contains(q)).collect();
    let kd = 1usize << k;
    let td = 1usize << traced.len();

    // Full basis index from kept-part `a` and traced-part `t`; qubit q
    // occupies bit (n - q), qubit 1 most significant.
    let compose = |a: usize, t: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            let bit = (a >> (k - 1 - pos)) & 1;
            idx |= bit << (n - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let bit = (t >> (traced.len() - 1 - pos)) & 1;
            idx |= bit << (n - q);
        }
        idx
    };

    let mut out = nd::Array2::<C64>::zeros((kd, kd));
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..td {
                acc += rho.entries[[compose(a, t), compose(b, t)]];
            }
            out[[a, b]] = acc;
        }
    }
    Ok(DensityMatrix::new_unchecked(out))
}

/// Parse a table preparation from text: one `row col re [im]` entry per
/// line, 1-based indices, values as decimals or fractions like `3/16`.
/// Blank lines and `#` comments are skipped.
pub fn parse_table_file(text: &str, n_qubits: usize) -> Result<Preparation> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::InvalidPreparation(format!(
                "line {}: expected 'row col re [im]', got {line:?}",
                lineno + 1
            )));
        }
        let idx = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::InvalidPreparation(format!("line {}: bad index {s:?}", lineno + 1))
            })
        };
        let num = |s: &str| -> Result<f64> {
            parse_number(s).ok_or_else(|| {
                Error::InvalidPreparation(format!("line {}: bad value {s:?}", lineno + 1))
            })
        };
        let row = idx(fields[0])?;
        let col = idx(fields[1])?;
        let re = num(fields[2])?;
        let im = if fields.len() == 4 { num(fields[3])? } else { 0.0 };
        entries.push(TableEntry::new(row, col, C64::new(re, im)));
    }
    Ok(Preparation::table(n_qubits, entries))
}

/// Decimal or `p/q` rational.
fn parse_number(s: &str) -> Option<f64> {
    if let Some((p, q)) = s.split_once('/') {
        let p: f64 = p.trim().parse().ok()?;
        let q: f64 = q.trim().parse().ok()?;
        if q == 0.0 {
            return None;
        }
        Some(p / q)
    } else {
        s.parse().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nd::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> DensityMatrix {
        let a = Array2::from_shape_fn((dim, dim), |_| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let h = linalg::matmul(&a, &linalg::dagger(&a));
        let tr: C64 = (0..dim).map(|i| h[[i, i]]).sum();
        DensityMatrix::new_unchecked(h.mapv(|z| z / tr))
    }

    #[test]
    fn product_eeg_is_projector_onto_index_1() {
        let rho = Preparation::product("eeg").unwrap().build().unwrap();
        assert_eq!(rho.dim, 8);
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert_eq!(rho.entries[[i, j]], c(want, 0.0));
            }
        }
    }

    #[test]
    fn w_state_matrix_has_nine_thirds() {
        let rho = Preparation::w_state().build().unwrap();
        let third = 1.0 / 3.0;
        let mut nonzero = 0;
        for i in 0..8 {
            for j in 0..8 {
                let v = rho.entries[[i, j]];
                if v.norm() > 0.0 {
                    nonzero += 1;
                    assert!((v.re - third).abs() < 1e-15 && v.im == 0.0);
                    assert!([1usize, 2, 4].contains(&i) && [1usize, 2, 4].contains(&j));
                }
            }
        }
        assert_eq!(nonzero, 9);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn balanced_phi3_reduces_to_phi_plus_pair() {
        let rho = Preparation::from_key("phi_plus_3q_prep1").unwrap().build().unwrap();
        let red = partial_trace(&rho, &[1, 2]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i == 0 || i == 3) && (j == 0 || j == 3) { 0.5 } else { 0.0 };
                assert!(
                    (red.entries[[i, j]] - c(want, 0.0)).norm() < 1e-12,
                    "({i},{j}) = {:?}",
                    red.entries[[i, j]]
                );
            }
        }
    }

    #[test]
    fn dephased_w_keeps_reduction_and_positivity() {
        let w = Preparation::w_state().build().unwrap();
        let wd = w_state_dephased();

        // identical reduced pair state, the matrix the reduction should equal
        let red_w = partial_trace(&w, &[1, 2]).unwrap();
        let red_wd = partial_trace(&wd, &[1, 2]).unwrap();
        let third = 1.0 / 3.0;
        let expect = [
            [third, 0.0, 0.0, 0.0],
            [0.0, third, third, 0.0],
            [0.0, third, third, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((red_w.entries[[i, j]] - c(expect[i][j], 0.0)).norm() < 1e-12);
                assert!((red_w.entries[[i, j]] - red_wd.entries[[i, j]]).norm() < 1e-12);
            }
        }

        // spectrum {2/3, 1/3, 0 x6}: a proper state, unlike the naive
        // construction that only drops the (2,3) coherence
        let mut eigs = linalg::hermitian_eigenvalues(&wd.entries);
        eigs.sort_by(f64::total_cmp);
        assert!(eigs[0] > -1e-12);
        assert!((eigs[6] - 1.0 / 3.0).abs() < 1e-12);
        assert!((eigs[7] - 2.0 / 3.0).abs() < 1e-12);

        // dephasing qubit 3 removes exactly the (2,3) and (2,5) coherence
        // pairs: four entries differ
        let mut diffs = 0;
        for i in 0..8 {
            for j in 0..8 {
                if (w.entries[[i, j]] - wd.entries[[i, j]]).norm() > 1e-15 {
                    diffs += 1;
                }
            }
        }
        assert_eq!(diffs, 4);
    }

    #[test]
    fn literal_single_pair_dephasing_is_rejected_as_non_psd() {
        // dropping only the (2,3)/(3,2) pair leaves min eigenvalue (1-sqrt2)/3
        let third = 1.0 / 3.0;
        let prep = Preparation::table(
            3,
            sym(&[
                (2, 2, third),
                (3, 3, third),
                (5, 5, third),
                (5, 2, third),
                (5, 3, third),
            ]),
        );
        let err = prep.build().unwrap_err();
        match err {
            Error::InvalidPreparation(msg) => assert!(msg.contains("positive semidefinite")),
            other => panic!("expected InvalidPreparation, got {other:?}"),
        }
    }

    #[test]
    fn partial_trace_of_product_keeps_first_pair() {
        let rho = Preparation::product("eeg").unwrap().build().unwrap();
        let red = partial_trace(&rho, &[1, 2]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_eq!(red.entries[[i, j]], c(want, 0.0));
            }
        }
    }

    #[test]
    fn partial_trace_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5747);
        for n in [2usize, 3, 4] {
            let dim = 1 << n;
            let rho = random_density(&mut rng, dim);
            let mut keeps: Vec<Vec<usize>> = vec![];
            for q in 1..=n {
                keeps.push(vec![q]);
            }
            for a in 1..=n {
                for b in (a + 1)..=n {
                    keeps.push(vec![a, b]);
                }
            }
            for keep in keeps {
                let red = partial_trace(&rho, &keep).unwrap();
                // oracle: loop over all full-index pairs, accumulate where
                // every traced qubit bit agrees
                let k = keep.len();
                let kd = 1usize << k;
                let mut want = Array2::<C64>::zeros((kd, kd));
                for i in 0..dim {
                    for j in 0..dim {
                        let mut ok = true;
                        for q in 1..=n {
                            if !keep.contains(&q) && ((i >> (n - q)) & 1) != ((j >> (n - q)) & 1) {
                                ok = false;
                                break;
                            }
                        }
                        if !ok {
                            continue;
                        }
                        let mut a = 0usize;
                        let mut b = 0usize;
                        for (pos, &q) in keep.iter().enumerate() {
                            a |= ((i >> (n - q)) & 1) << (k - 1 - pos);
                            b |= ((j >> (n - q)) & 1) << (k - 1 - pos);
                        }
                        want[[a, b]] += rho.entries[[i, j]];
                    }
                }
                for a in 0..kd {
                    for b in 0..kd {
                        assert!(
                            (red.entries[[a, b]] - want[[a, b]]).norm() < 1e-12,
                            "n={n} keep={keep:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7e57);
        for _ in 0..200 {
            let rho = random_density(&mut rng, 16);
            let red = partial_trace(&rho, &[1, 2]).unwrap();
            assert!((red.trace().re - 1.0).abs() < 1e-10);
            assert!(red.min_eigenvalue() >= -1e-12);
            assert!(red.herm_deviation() < 1e-12);
        }
    }

    #[test]
    fn every_catalog_preparation_is_valid_and_reduces_to_exact_x_form() {
        for key in catalog_keys() {
            let prep = Preparation::from_key(key).unwrap();
            let rho = prep.build().unwrap_or_else(|e| panic!("{key}: {e}"));
            assert!((rho.trace().re - 1.0).abs() < 1e-9, "{key}");
            assert!(rho.min_eigenvalue() > -1e-12, "{key}");
            let red = partial_trace(&rho, &[1, 2]).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let on_pattern = i == j || i + j == 3;
                    if !on_pattern {
                        assert_eq!(
                            red.entries[[i, j]],
                            c(0.0, 0.0),
                            "{key}: off-pattern ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn table_validation_rejects_bad_input() {
        // missing Hermitian partner
        let p = Preparation::table(2, vec![TableEntry::new(1, 1, 0.5), TableEntry::new(4, 4, 0.5), TableEntry::new(4, 1, 0.5), TableEntry::new(1, 4, c(0.5, 0.1))]);
        assert!(matches!(p.build(), Err(Error::InvalidPreparation(ref m)) if m.contains("conjugate")));

        let p = Preparation::table(2, vec![TableEntry::new(2, 2, 1.0), TableEntry::new(3, 2, 0.5)]);
        assert!(matches!(p.build(), Err(Error::InvalidPreparation(ref m)) if m.contains("partner")));

        // trace off
        let p = Preparation::table(2, vec![TableEntry::new(1, 1, 0.7)]);
        assert!(matches!(p.build(), Err(Error::InvalidPreparation(ref m)) if m.contains("trace")));

        // negative diagonal
        let p = Preparation::table(
            2,
            vec![TableEntry::new(1, 1, 1.5), TableEntry::new(2, 2, -0.5)],
        );
        assert!(matches!(p.build(), Err(Error::InvalidPreparation(ref m)) if m.contains("negative")));

        // index out of range
        let p = Preparation::table(2, vec![TableEntry::new(5, 5, 1.0)]);
        assert!(matches!(p.build(), Err(Error::InvalidPreparation(ref m)) if m.contains("outside")));

        // bad product label
        assert!(Preparation::product("exg").is_err());
        assert!(Preparation::from_key("no_such_prep").is_err());
    }

    #[test]
    fn parse_table_file_reads_fractions_and_comments() {
        let text = "# Bell pair\n1 1 1/2\n4 4 0.5\n4 1 1/2 0\n1 4 1/2\n";
        let prep = parse_table_file(text, 2).unwrap();
        let rho = prep.build().unwrap();
        assert!((rho.entries[[0, 0]].re - 0.5).abs() < 1e-15);
        assert!((rho.entries[[3, 0]].re - 0.5).abs() < 1e-15);

        assert!(parse_table_file("1 1\n", 2).is_err());
        assert!(parse_table_file("1 1 x\n", 2).is_err());
        assert!(parse_table_file("1 1 1/0\n", 2).is_err());
    }

    #[test]
    fn catalog_psi4_rows_have_expected_support() {
        // env-gg row: entries only at (8,8), (12,12), (12,8), (8,12)
        let rho = Preparation::from_key("psi_plus_4q_prep7").unwrap().build().unwrap();
        let mut support: Vec<(usize, usize)> = vec![];
        for i in 0..16 {
            for j in 0..16 {
                if rho.entries[[i, j]].norm() > 0.0 {
                    support.push((i + 1, j + 1));
                }
            }
        }
        support.sort();
        assert_eq!(support, vec![(8, 8), (8, 12), (12, 8), (12, 12)]);
        for &(i, j) in &support {
            assert_eq!(rho.entries[[i - 1, j - 1]], c(0.5, 0.0));
        }
    }
}
