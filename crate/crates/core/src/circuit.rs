//! Parametric circuits, ansatz builders and circuit transforms.
//!
//! Rotations follow `R_P(a) = exp(-i a P / 2)` for `P` in `{X, Y, Z, ZZ}`.
//! A parametric angle is `scale * theta[index]`, which lets one parameter
//! drive several gates (QAOA) while each hardware-efficient rotation owns its
//! own parameter with unit scale.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Rzz,
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    Cx,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Rzz)
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Rzz | GateKind::Cx => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Rzz => "RZZ",
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::S => "S",
            GateKind::Sdg => "SDG",
            GateKind::Cx => "CX",
        }
    }

    /// Single-qubit Pauli gate for a Pauli operator (`None` for identity).
    pub fn from_pauli(p: Pauli) -> Option<GateKind> {
        match p {
            Pauli::I => None,
            Pauli::X => Some(GateKind::X),
            Pauli::Y => Some(GateKind::Y),
            Pauli::Z => Some(GateKind::Z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Fixed(f64),
    Param { index: usize, scale: f64 },
}

impl Angle {
    pub fn param(index: usize) -> Self {
        Angle::Param { index, scale: 1.0 }
    }

    pub fn resolve(&self, theta: &[f64]) -> f64 {
        match *self {
            Angle::Fixed(a) => a,
            Angle::Param { index, scale } => scale * theta[index],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    kind: GateKind,
    qubits: [usize; 2],
    angle: Option<Angle>,
}

fn check_gate_shape(kind: GateKind, qubits: &[usize], has_angle: bool) -> Result<[usize; 2]> {
    if qubits.len() != kind.arity() {
        return Err(Error::InvalidArgument(format!(
            "{} acts on {} qubits, got {}",
            kind.name(),
            kind.arity(),
            qubits.len()
        )));
    }
    if kind.arity() == 2 && qubits[0] == qubits[1] {
        return Err(Error::InvalidEdge(qubits[0], qubits[1], 0));
    }
    if kind.is_rotation() != has_angle {
        return Err(Error::InvalidArgument(format!(
            "{} {} an angle",
            kind.name(),
            if kind.is_rotation() { "needs" } else { "takes no" }
        )));
    }
    Ok([qubits[0], *qubits.get(1).unwrap_or(&qubits[0])])
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize], angle: Option<Angle>) -> Result<Self> {
        let qubits = check_gate_shape(kind, qubits, angle.is_some())?;
        Ok(Self { kind, qubits, angle })
    }

    pub fn fixed(kind: GateKind, qubits: &[usize]) -> Result<Self> {
        Self::new(kind, qubits, None)
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn angle(&self) -> Option<Angle> {
        self.angle
    }

    fn bind(&self, theta: &[f64]) -> BoundGate {
        BoundGate {
            kind: self.kind,
            qubits: self.qubits,
            angle: self.angle.map_or(0.0, |a| a.resolve(theta)),
        }
    }
}

/// Gate with a concrete angle; Clifford kinds carry angle 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundGate {
    pub kind: GateKind,
    qubits: [usize; 2],
    pub angle: f64,
}

impl BoundGate {
    pub fn new(kind: GateKind, qubits: &[usize], angle: f64) -> Result<Self> {
        let qubits = check_gate_shape(kind, qubits, kind.is_rotation())?;
        let angle = if kind.is_rotation() { angle } else { 0.0 };
        Ok(Self { kind, qubits, angle })
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn adjoint(&self) -> BoundGate {
        let kind = match self.kind {
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            k => k,
        };
        BoundGate {
            kind,
            qubits: self.qubits,
            angle: if self.kind.is_rotation() { -self.angle } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_params: usize,
}

impl Circuit {
    /// Validates qubit ranges and that every parameter index is below `n_params`.
    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>, n_params: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 30 {
            return Err(Error::InvalidSize(format!(
                "circuits support 1..=30 qubits, got {n_qubits}"
            )));
        }
        for g in &gates {
            if let Some(&q) = g.qubits().iter().find(|&&q| q >= n_qubits) {
                return Err(Error::InvalidArgument(format!(
                    "{} on qubit {q} outside {n_qubits}-qubit register",
                    g.kind.name()
                )));
            }
            if let Some(Angle::Param { index, .. }) = g.angle {
                if index >= n_params {
                    return Err(Error::InvalidArgument(format!(
                        "parameter p{index} outside 0..{n_params}"
                    )));
                }
            }
        }
        Ok(Self {
            n_qubits,
            gates,
            n_params,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn check_arity(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params {
            return Err(Error::Arity {
                expected: self.n_params,
                got: theta.len(),
            });
        }
        Ok(())
    }

    pub fn bind(&self, theta: &[f64]) -> Result<BoundCircuit> {
        self.check_arity(theta)?;
        Ok(BoundCircuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().map(|g| g.bind(theta)).collect(),
            params: theta.to_vec(),
        })
    }

    /// True when every parameter drives exactly one rotation with unit scale,
    /// which is what the two-term parameter-shift rule requires.
    pub fn has_simple_parameters(&self) -> bool {
        let mut uses = vec![0usize; self.n_params];
        for g in &self.gates {
            if let Some(Angle::Param { index, scale }) = g.angle {
                if scale != 1.0 {
                    return false;
                }
                uses[index] += 1;
            }
        }
        uses.iter().all(|&u| u == 1)
    }

    pub fn cx_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Cx).count()
    }

    /// Depth counting only CX gates (ASAP layering).
    pub fn cx_depth(&self) -> usize {
        cx_depth(self.n_qubits, self.gates.iter().map(|g| (g.kind, g.qubits())))
    }
}

fn cx_depth<'a>(n: usize, gates: impl Iterator<Item = (GateKind, &'a [usize])>) -> usize {
    let mut level = vec![0usize; n];
    for (kind, qs) in gates {
        if kind == GateKind::Cx {
            let l = level[qs[0]].max(level[qs[1]]) + 1;
            level[qs[0]] = l;
            level[qs[1]] = l;
        }
    }
    level.into_iter().max().unwrap_or(0)
}

fn write_gate(f: &mut fmt::Formatter<'_>, kind: GateKind, qs: &[usize]) -> fmt::Result {
    write!(f, "{} {}", kind.name(), qs[0])?;
    if let Some(q1) = qs.get(1) {
        write!(f, ",{q1}")?;
    }
    Ok(())
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.gates {
            write_gate(f, g.kind, g.qubits())?;
            match g.angle {
                Some(Angle::Fixed(a)) => write!(f, " {a}")?,
                Some(Angle::Param { index, scale }) if scale == 1.0 => write!(f, " p{index}")?,
                Some(Angle::Param { index, scale }) => write!(f, " {scale}*p{index}")?,
                None => {}
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A circuit with every angle resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCircuit {
    n_qubits: usize,
    gates: Vec<BoundGate>,
    params: Vec<f64>,
}

impl BoundCircuit {
    pub fn from_gates(n_qubits: usize, gates: Vec<BoundGate>) -> Result<Self> {
        if let Some(g) = gates.iter().find(|g| g.qubits().iter().any(|&q| q >= n_qubits)) {
            return Err(Error::InvalidArgument(format!(
                "{} outside {n_qubits}-qubit register",
                g.kind.name()
            )));
        }
        Ok(Self {
            n_qubits,
            gates,
            params: Vec::new(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[BoundGate] {
        &self.gates
    }

    /// Parameter values this circuit was bound with.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn cx_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind == GateKind::Cx).count()
    }

    pub fn cx_depth(&self) -> usize {
        cx_depth(self.n_qubits, self.gates.iter().map(|g| (g.kind, g.qubits())))
    }

    pub fn push(&mut self, gate: BoundGate) -> Result<()> {
        if gate.qubits().iter().any(|&q| q >= self.n_qubits) {
            return Err(Error::InvalidArgument(format!(
                "{} outside {}-qubit register",
                gate.kind.name(),
                self.n_qubits
            )));
        }
        self.gates.push(gate);
        Ok(())
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &BoundCircuit) -> Result<BoundCircuit> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::Dimension(format!(
                "{} vs {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        let mut gates = self.gates.clone();
        gates.extend_from_slice(&other.gates);
        Ok(BoundCircuit {
            n_qubits: self.n_qubits,
            gates,
            params: self.params.clone(),
        })
    }

    /// Reversed gate order with each gate adjointed.
    pub fn inverse(&self) -> BoundCircuit {
        BoundCircuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(BoundGate::adjoint).collect(),
            params: self.params.clone(),
        }
    }

    /// Replaces every CX by `2m + 1` consecutive CX gates.
    pub fn fold_cx(&self, m: usize) -> BoundCircuit {
        let mut gates = Vec::with_capacity(self.gates.len() + 2 * m * self.cx_count());
        for g in &self.gates {
            let reps = if g.kind == GateKind::Cx { 2 * m + 1 } else { 1 };
            gates.extend(std::iter::repeat_n(*g, reps));
        }
        BoundCircuit {
            n_qubits: self.n_qubits,
            gates,
            params: self.params.clone(),
        }
    }

    /// Wraps every CX in a random Pauli frame that leaves the logical
    /// operation unchanged up to a global sign.
    pub fn twirl_cx<R: Rng + ?Sized>(&self, rng: &mut R) -> BoundCircuit {
        self.twirl_cx_with(|| {
            let k: u8 = rng.random_range(0..16);
            (Pauli::from_index(k), Pauli::from_index(k >> 2))
        })
    }

    /// Twirl with caller-chosen `(control, target)` pre-Paulis.
    pub fn twirl_cx_with(&self, mut choose: impl FnMut() -> (Pauli, Pauli)) -> BoundCircuit {
        let mut gates = Vec::with_capacity(self.gates.len() + 4 * self.cx_count());
        for g in &self.gates {
            if g.kind != GateKind::Cx {
                gates.push(*g);
                continue;
            }
            let (c, t) = (g.qubits[0], g.qubits[1]);
            let pre = choose();
            let post = cx_conjugate(pre);
            let paulis = |gates: &mut Vec<BoundGate>, (pc, pt): (Pauli, Pauli)| {
                for (q, p) in [(c, pc), (t, pt)] {
                    if let Some(kind) = GateKind::from_pauli(p) {
                        gates.push(BoundGate {
                            kind,
                            qubits: [q, q],
                            angle: 0.0,
                        });
                    }
                }
            };
            paulis(&mut gates, pre);
            gates.push(*g);
            paulis(&mut gates, post);
        }
        BoundCircuit {
            n_qubits: self.n_qubits,
            gates,
            params: self.params.clone(),
        }
    }
}

impl fmt::Display for BoundCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.gates {
            write_gate(f, g.kind, g.qubits())?;
            if g.kind.is_rotation() {
                write!(f, " {}", g.angle)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Pauli pair `P'` with `CX P CX = ±P'` for `(control, target)` pairs.
pub fn cx_conjugate((pc, pt): (Pauli, Pauli)) -> (Pauli, Pauli) {
    let (xc, zc) = pc.bits();
    let (xt, zt) = pt.bits();
    (Pauli::from_bits(xc, zc ^ zt), Pauli::from_bits(xt ^ xc, zt))
}

/// Nearest-neighbour pairs `(i, i+1)` of an open chain.
pub fn chain_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

/// Orders entangler pairs into greedily coloured CX layers.
fn schedule_entangler(n: usize, entangler: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut busy: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut colored: Vec<(usize, (usize, usize))> = Vec::with_capacity(entangler.len());
    for &(a, b) in entangler {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidEdge(a, b, n));
        }
        let color = (0..)
            .find(|c| !busy[a].contains(c) && !busy[b].contains(c))
            .expect("unbounded range");
        busy[a].push(color);
        busy[b].push(color);
        colored.push((color, (a, b)));
    }
    colored.sort_by_key(|&(c, _)| c);
    Ok(colored.into_iter().map(|(_, e)| e).collect())
}

/// Hardware-efficient ansatz: `layers + 1` rotation layers (RY on every
/// qubit, then RZ on every qubit) interleaved with `layers` CX layers over
/// `entangler`. Has `2 n (layers + 1)` parameters.
pub fn build_hea(n: usize, layers: usize, entangler: &[(usize, usize)]) -> Result<Circuit> {
    if n == 0 {
        return Err(Error::InvalidSize("ansatz needs at least one qubit".into()));
    }
    let schedule = schedule_entangler(n, entangler)?;
    let mut gates = Vec::new();
    let mut next = 0usize;
    for layer in 0..=layers {
        for kind in [GateKind::Ry, GateKind::Rz] {
            for q in 0..n {
                gates.push(Gate::new(kind, &[q], Some(Angle::param(next)))?);
                next += 1;
            }
        }
        if layer < layers {
            for &(a, b) in &schedule {
                gates.push(Gate::fixed(GateKind::Cx, &[a, b])?);
            }
        }
    }
    Circuit::from_gates(n, gates, next)
}

/// QAOA ansatz for a diagonal cost: `|+>^n` then `reps` blocks of cost
/// rotations `RZZ(2 gamma w)` / `RZ(2 gamma w)` and mixer `RX(2 beta)`.
/// Parameters are ordered `(gamma_1, beta_1, ..., gamma_r, beta_r)`.
pub fn build_qaoa(cost: &PauliSum, reps: usize) -> Result<Circuit> {
    let n = cost.n_qubits();
    for (_, p) in cost.terms() {
        if !p.is_diagonal() || p.weight() > 2 {
            return Err(Error::UnsupportedHamiltonian(format!(
                "QAOA cost term {p} is not Z or ZZ"
            )));
        }
    }
    let mut gates: Vec<Gate> = (0..n)
        .map(|q| Gate::fixed(GateKind::H, &[q]))
        .collect::<Result<_>>()?;
    for rep in 0..reps {
        let (gamma, beta) = (2 * rep, 2 * rep + 1);
        for (w, p) in cost.terms() {
            let qs: Vec<usize> = (0..n).filter(|&q| p.support() >> q & 1 == 1).collect();
            let angle = Some(Angle::Param {
                index: gamma,
                scale: 2.0 * w,
            });
            match qs.len() {
                0 => {}
                1 => gates.push(Gate::new(GateKind::Rz, &qs, angle)?),
                _ => gates.push(Gate::new(GateKind::Rzz, &qs, angle)?),
            }
        }
        for q in 0..n {
            gates.push(Gate::new(
                GateKind::Rx,
                &[q],
                Some(Angle::Param {
                    index: beta,
                    scale: 2.0,
                }),
            )?);
        }
    }
    Circuit::from_gates(n, gates, 2 * reps)
}
