//! Pauli strings, weighted Pauli sums and the model Hamiltonians.
//!
//! Strings are stored as an `(x_mask, z_mask)` pair: bit `q` of `x_mask` is
//! set for X or Y on qubit `q`, bit `q` of `z_mask` for Z or Y. Qubit 0 is the
//! least-significant bit. Text labels are written most-significant qubit
//! first, so `"ZI"` is Z on qubit 1.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register for which dense matrices are materialised.
pub const MAX_DENSE_QUBITS: usize = 12;
/// Largest register a [`PauliString`] can address.
pub const MAX_QUBITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    /// `0..4` to `I, X, Y, Z`; higher bits are ignored.
    pub fn from_index(k: u8) -> Self {
        match k & 3 {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    fn label(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x_mask: u64,
    z_mask: u64,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            x_mask: 0,
            z_mask: 0,
        }
    }

    pub fn from_masks(n_qubits: usize, x_mask: u64, z_mask: u64) -> Result<Self> {
        check_width(n_qubits)?;
        let valid = if n_qubits == 64 {
            u64::MAX
        } else {
            (1u64 << n_qubits) - 1
        };
        if (x_mask | z_mask) & !valid != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask bits outside {n_qubits} qubits"
            )));
        }
        Ok(Self {
            n_qubits,
            x_mask,
            z_mask,
        })
    }

    /// Builds a string from `(qubit, op)` pairs; unnamed qubits are identity.
    pub fn from_ops(n_qubits: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        check_width(n_qubits)?;
        let mut out = Self::identity(n_qubits);
        for &(q, op) in ops {
            if q >= n_qubits {
                return Err(Error::InvalidArgument(format!(
                    "qubit {q} outside {n_qubits}-qubit register"
                )));
            }
            out.set(q, op);
        }
        Ok(out)
    }

    fn set(&mut self, q: usize, op: Pauli) {
        let bit = 1u64 << q;
        let (x, z) = op.bits();
        self.x_mask = if x { self.x_mask | bit } else { self.x_mask & !bit };
        self.z_mask = if z { self.z_mask | bit } else { self.z_mask & !bit };
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_mask(&self) -> u64 {
        self.x_mask
    }

    pub fn z_mask(&self) -> u64 {
        self.z_mask
    }

    /// Qubits acted on non-trivially.
    pub fn support(&self) -> u64 {
        self.x_mask | self.z_mask
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    /// True when the string contains only I and Z.
    pub fn is_diagonal(&self) -> bool {
        self.x_mask == 0
    }

    pub fn op(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x_mask >> q & 1 == 1, self.z_mask >> q & 1 == 1)
    }

    pub fn ops(&self) -> Vec<Pauli> {
        (0..self.n_qubits).map(|q| self.op(q)).collect()
    }

    fn y_count(&self) -> u32 {
        (self.x_mask & self.z_mask).count_ones()
    }

    /// Phase picked up by basis state `k`: `P|k> = phase(k) |k ^ x_mask>`.
    #[inline]
    pub fn phase(&self, k: usize) -> Complex64 {
        let sign = if ((k as u64) & self.z_mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        i_pow(self.y_count()) * sign
    }

    /// Applies the string to a vector of amplitudes, writing into `out`.
    pub fn apply(&self, amps: &[Complex64], out: &mut [Complex64]) {
        let x = self.x_mask as usize;
        let z = self.z_mask;
        let base = i_pow(self.y_count());
        for (k, a) in amps.iter().enumerate() {
            let sign = if ((k as u64) & z).count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            out[k ^ x] = base * sign * a;
        }
    }

    /// `<psi|P|psi>`; real for a Hermitian string.
    pub fn expectation(&self, amps: &[Complex64]) -> f64 {
        let x = self.x_mask as usize;
        let z = self.z_mask;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, a) in amps.iter().enumerate() {
            let sign = if ((k as u64) & z).count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            acc += amps[k ^ x].conj() * a * sign;
        }
        (acc * i_pow(self.y_count())).re
    }

    /// Qubit-wise commutation: on every qubit the two ops are equal or one is I.
    pub fn qubitwise_commutes(&self, other: &PauliString) -> bool {
        let both = self.support() & other.support();
        (self.x_mask ^ other.x_mask) & both == 0 && (self.z_mask ^ other.z_mask) & both == 0
    }

    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        check_dense(self.n_qubits)?;
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            m[(k ^ self.x_mask as usize, k)] = self.phase(k);
        }
        Ok(m)
    }
}

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

fn check_width(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidSize(format!(
            "qubit count must be in 1..={MAX_QUBITS}, got {n}"
        )));
    }
    Ok(())
}

fn check_dense(n: usize) -> Result<()> {
    if n > MAX_DENSE_QUBITS {
        return Err(Error::InvalidSize(format!(
            "dense matrices limited to {MAX_DENSE_QUBITS} qubits, got {n}"
        )));
    }
    Ok(())
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in (0..self.n_qubits).rev() {
            write!(f, "{}", self.op(q).label())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s.chars().count();
        check_width(n)?;
        let mut out = PauliString::identity(n);
        for (pos, c) in s.chars().enumerate() {
            let op = match c {
                'I' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => return Err(Error::InvalidArgument(format!("unknown Pauli label {other:?}"))),
            };
            out.set(n - 1 - pos, op);
        }
        Ok(out)
    }
}

/// Real-weighted sum of Pauli strings, i.e. a Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    /// Collects terms, merging repeated strings by adding coefficients.
    /// First-occurrence order is kept.
    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, PauliString)>,
    {
        check_width(n_qubits)?;
        let mut merged: Vec<(f64, PauliString)> = Vec::new();
        let mut index: HashMap<PauliString, usize> = HashMap::new();
        for (c, p) in terms {
            if p.n_qubits() != n_qubits {
                return Err(Error::Dimension(format!(
                    "term {p} has {} qubits, sum has {n_qubits}",
                    p.n_qubits()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient on {p}")));
            }
            match index.get(&p) {
                Some(&i) => merged[i].0 += c,
                None => {
                    index.insert(p, merged.len());
                    merged.push((c, p));
                }
            }
        }
        Ok(Self {
            n_qubits,
            terms: merged,
        })
    }

    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::from_terms(n_qubits, std::iter::empty())
    }

    /// `c * I` on `n_qubits`.
    pub fn identity(n_qubits: usize, c: f64) -> Result<Self> {
        Self::from_terms(n_qubits, [(c, PauliString::identity(n_qubits))])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(|(_, p)| p.is_diagonal())
    }

    /// `H|psi>` written into `out`.
    pub fn apply(&self, amps: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        let mut scratch = vec![Complex64::new(0.0, 0.0); amps.len()];
        for (c, p) in &self.terms {
            p.apply(amps, &mut scratch);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += s * *c;
            }
        }
    }

    /// Diagonal of a diagonal sum, indexed by computational basis state.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        if !self.is_diagonal() {
            return Err(Error::UnsupportedHamiltonian(
                "diagonal requested for a sum with X/Y terms".into(),
            ));
        }
        if self.n_qubits > 30 {
            return Err(Error::InvalidSize(format!("{} qubits", self.n_qubits)));
        }
        let dim = 1usize << self.n_qubits;
        Ok((0..dim)
            .map(|k| self.terms.iter().map(|(c, p)| c * p.phase(k).re).sum::<f64>())
            .collect())
    }

    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        check_dense(self.n_qubits)?;
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for (c, p) in &self.terms {
            for k in 0..dim {
                m[(k ^ p.x_mask() as usize, k)] += p.phase(k) * *c;
            }
        }
        Ok(m)
    }

    /// Line-oriented text form: `<coefficient> <label>` per term.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, p) in &self.terms {
            out.push_str(&format!("{c} {p}\n"));
        }
        out
    }

    /// Parses [`PauliSum::to_text`] output. Blank lines and `#` comments are skipped.
    pub fn parse_text(src: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut width = None;
        for (lineno, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let mut fields = line.split_whitespace();
            let (Some(coef), Some(label), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(format!(
                    "expected `<coefficient> <label>`, got {line:?}"
                )));
            };
            let c: f64 = coef
                .parse()
                .map_err(|_| parse_err(format!("bad coefficient {coef:?}")))?;
            let p: PauliString = label.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            match width {
                None => width = Some(p.n_qubits()),
                Some(w) if w != p.n_qubits() => {
                    return Err(parse_err(format!("label width {} != {w}", p.n_qubits())))
                }
                _ => {}
            }
            terms.push((c, p));
        }
        let n = width.ok_or(Error::Parse {
            line: 0,
            msg: "no terms".into(),
        })?;
        Self::from_terms(n, terms)
    }
}

/// `J * sum_i Z_i Z_{i+1} + h * sum_i X_i` on an open chain.
pub fn build_ising_chain(n: usize, j: f64, h: f64) -> Result<PauliSum> {
    if n == 0 {
        return Err(Error::InvalidSize("ising chain needs at least one spin".into()));
    }
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    build_ising_graph(&edges, n, j, h)
}

/// `J * sum_{(i,j) in edges} Z_i Z_j + h * sum_i X_i`.
pub fn build_ising_graph(edges: &[(usize, usize)], n: usize, j: f64, h: f64) -> Result<PauliSum> {
    check_width(n)?;
    let mut seen = std::collections::HashSet::new();
    let mut terms = Vec::with_capacity(edges.len() + n);
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidEdge(a, b, n));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::InvalidEdge(a, b, n));
        }
        terms.push((j, PauliString::from_ops(n, &[(a, Pauli::Z), (b, Pauli::Z)])?));
    }
    for q in 0..n {
        terms.push((h, PauliString::from_ops(n, &[(q, Pauli::X)])?));
    }
    PauliSum::from_terms(n, terms)
}

/// MaxCut cost on a circle with next-neighbour (`w1`) and third-neighbour
/// (`w2`) couplings.
pub fn build_maxcut_circle(n: usize, w1: f64, w2: f64) -> Result<PauliSum> {
    if n < 4 {
        return Err(Error::InvalidSize(format!(
            "circle graph needs at least 4 nodes, got {n}"
        )));
    }
    let zz = |a: usize, b: usize| PauliString::from_ops(n, &[(a, Pauli::Z), (b, Pauli::Z)]);
    let mut terms = Vec::with_capacity(2 * n);
    for i in 0..n {
        terms.push((w1, zz(i, (i + 1) % n)?));
    }
    for i in 0..n {
        terms.push((w2, zz(i, (i + 3) % n)?));
    }
    PauliSum::from_terms(n, terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisTag {
    Z,
    X,
    Y,
}

/// A product measurement basis and the sum terms it can estimate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementBasis {
    pub rotations: Vec<BasisTag>,
    pub member_terms: Vec<usize>,
}

/// Greedy first-fit grouping into qubit-wise commuting measurement bases.
pub fn group_commuting_bases(h: &PauliSum) -> Vec<MeasurementBasis> {
    let n = h.n_qubits();
    let mut groups: Vec<(Vec<Option<BasisTag>>, Vec<usize>)> = Vec::new();
    for (idx, (_, p)) in h.terms().iter().enumerate() {
        let wanted: Vec<Option<BasisTag>> = (0..n)
            .map(|q| match p.op(q) {
                Pauli::I => None,
                Pauli::X => Some(BasisTag::X),
                Pauli::Y => Some(BasisTag::Y),
                Pauli::Z => Some(BasisTag::Z),
            })
            .collect();
        let slot = groups.iter().position(|(tags, _)| {
            tags.iter()
                .zip(&wanted)
                .all(|(t, w)| t.is_none() || w.is_none() || t == w)
        });
        match slot {
            Some(g) => {
                let (tags, members) = &mut groups[g];
                for (t, w) in tags.iter_mut().zip(&wanted) {
                    if t.is_none() {
                        *t = *w;
                    }
                }
                members.push(idx);
            }
            None => groups.push((wanted, vec![idx])),
        }
    }
    groups
        .into_iter()
        .map(|(tags, member_terms)| MeasurementBasis {
            rotations: tags.into_iter().map(|t| t.unwrap_or(BasisTag::Z)).collect(),
            member_terms,
        })
        .collect()
}
