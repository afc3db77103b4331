//! Statevector simulation, exact and shot-based estimators, and synthetic noise.
//!
//! Gate noise uses quantum trajectories. A single [`simulate`] call draws one
//! Pauli-fault pattern. Shot-based estimators draw an independent pattern per
//! shot and simulate each distinct pattern once, so their statistics follow
//! the Pauli channel.

mod noise;
mod statevector;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use serde::{Deserialize, Serialize};

pub use noise::{NoiseModel, ReadoutError};
pub use statevector::StateVector;

use crate::circuit::{BoundCircuit, BoundGate, Circuit, GateKind};
use crate::error::{Error, Result};
use crate::pauli::{group_commuting_bases, BasisTag, MeasurementBasis, Pauli, PauliSum};
use crate::rng::SimRng;

/// Shots per circuit, or the infinite-shot limit using exact Born probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shots {
    Exact,
    Finite(u64),
}

impl Shots {
    pub fn is_exact(self) -> bool {
        matches!(self, Shots::Exact)
    }

    /// Shots charged per circuit; the exact limit is charged as one.
    pub fn charge(self) -> u64 {
        match self {
            Shots::Exact => 1,
            Shots::Finite(m) => m,
        }
    }

    fn validate(self) -> Result<()> {
        if self == Shots::Finite(0) {
            return Err(Error::InvalidArgument("shot count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Estimate plus the circuit and shot budget it consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledValue {
    pub value: f64,
    pub circuits_run: usize,
    pub shots_used: u64,
}

/// Outcome histogram keyed by basis-state index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShotResult {
    pub n_qubits: usize,
    pub shots: u64,
    pub counts: BTreeMap<usize, u64>,
}

impl ShotResult {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            shots: 0,
            counts: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, outcome: usize, count: u64) {
        if count > 0 {
            *self.counts.entry(outcome).or_insert(0) += count;
            self.shots += count;
        }
    }

    pub fn bitstring(&self, outcome: usize) -> String {
        format!("{:0width$b}", outcome, width = self.n_qubits)
    }

    /// Counts keyed by bitstrings, most-significant qubit first.
    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .counts
            .iter()
            .map(|(&k, &v)| (self.bitstring(k), v.into()))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn from_json(n_qubits: usize, value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("counts must be a JSON object".into()))?;
        let mut out = ShotResult::new(n_qubits);
        for (k, v) in obj {
            if k.len() != n_qubits {
                return Err(Error::Dimension(format!("bitstring {k:?} for {n_qubits} qubits")));
            }
            let idx = usize::from_str_radix(k, 2)
                .map_err(|_| Error::InvalidArgument(format!("bad bitstring {k:?}")))?;
            let c = v
                .as_u64()
                .ok_or_else(|| Error::InvalidArgument(format!("bad count for {k:?}")))?;
            out.record(idx, c);
        }
        Ok(out)
    }

    /// Mean of `(-1)^{popcount(k & mask)}` over the histogram.
    pub fn parity_mean(&self, mask: u64) -> f64 {
        let total: f64 = self
            .counts
            .iter()
            .map(|(&k, &c)| parity_sign(k, mask) * c as f64)
            .sum();
        total / self.shots as f64
    }
}

#[inline]
fn parity_sign(k: usize, mask: u64) -> f64 {
    if ((k as u64) & mask).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Pauli fault inserted after the `cx_index`-th CX of a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliFault {
    pub cx_index: usize,
    /// Non-identity pair code in `1..16`: control Pauli in bits 0-1, target in bits 2-3.
    pub code: u8,
}

impl PauliFault {
    pub fn new(cx_index: usize, control: Pauli, target: Pauli) -> Self {
        let idx = |p: Pauli| match p {
            Pauli::I => 0u8,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        };
        Self {
            cx_index,
            code: idx(control) | idx(target) << 2,
        }
    }

    pub fn paulis(&self) -> (Pauli, Pauli) {
        (Pauli::from_index(self.code), Pauli::from_index(self.code >> 2))
    }
}

/// Runs `c` on `|0...0>` with the given faults (sorted by `cx_index`).
pub fn simulate_with_faults(c: &BoundCircuit, faults: &[PauliFault]) -> StateVector {
    let mut s = StateVector::zero(c.n_qubits());
    let mut pending = faults.iter().peekable();
    let mut cx_seen = 0usize;
    for g in c.gates() {
        s.apply_gate(g);
        if g.kind == GateKind::Cx {
            while let Some(f) = pending.next_if(|f| f.cx_index == cx_seen) {
                let (pc, pt) = f.paulis();
                s.apply_pauli(g.qubits()[0], pc);
                s.apply_pauli(g.qubits()[1], pt);
            }
            cx_seen += 1;
        }
    }
    s
}

/// Applies `c` to `|0...0>`. With gate noise, one trajectory is drawn from
/// `rng`, which is then required.
pub fn simulate(
    c: &BoundCircuit,
    noise: Option<&NoiseModel>,
    rng: Option<&mut SimRng>,
) -> Result<StateVector> {
    match noise.filter(|n| n.has_gate_error()) {
        None => Ok(simulate_with_faults(c, &[])),
        Some(model) => {
            let rng = rng.ok_or_else(|| Error::InvalidArgument("gate noise needs a random stream".into()))?;
            let faults = draw_trajectory(c.cx_count(), model.cx_pauli_error, rng);
            let mut s = simulate_with_faults(c, &faults);
            s.normalize();
            Ok(s)
        }
    }
}

fn random_fault(cx_index: usize, rng: &mut SimRng) -> PauliFault {
    PauliFault {
        cx_index,
        code: rng.random_range(1..16),
    }
}

fn draw_trajectory(n_cx: usize, p: f64, rng: &mut SimRng) -> Vec<PauliFault> {
    let mut faults = Vec::new();
    for i in 0..n_cx {
        if rng.random::<f64>() < p {
            faults.push(random_fault(i, rng));
        }
    }
    faults
}

/// Independent fault patterns for `shots` executions, grouped by pattern.
/// Returns the fault-free shot count and the faulty groups.
fn draw_fault_groups(
    n_cx: usize,
    p: f64,
    shots: u64,
    rng: &mut SimRng,
) -> (u64, BTreeMap<Vec<PauliFault>, u64>) {
    let mut groups = BTreeMap::new();
    if n_cx == 0 || p == 0.0 {
        return (shots, groups);
    }
    let total = shots as u128 * n_cx as u128;
    let mut per_shot: BTreeMap<u64, Vec<PauliFault>> = BTreeMap::new();
    if p >= 1.0 {
        for shot in 0..shots {
            per_shot.insert(shot, (0..n_cx).map(|i| random_fault(i, rng)).collect());
        }
    } else {
        // jump between fault sites on the flattened (shot, cx) grid
        let geo = Geometric::new(p).expect("0 < p < 1");
        let mut pos: u128 = 0;
        loop {
            pos += geo.sample(rng) as u128;
            if pos >= total {
                break;
            }
            let shot = (pos / n_cx as u128) as u64;
            let cx = (pos % n_cx as u128) as usize;
            let fault = random_fault(cx, rng);
            per_shot.entry(shot).or_default().push(fault);
            pos += 1;
        }
    }
    let faulty = per_shot.len() as u64;
    for (_, pattern) in per_shot {
        *groups.entry(pattern).or_insert(0) += 1;
    }
    (shots - faulty, groups)
}

/// Folds independent readout flips into a probability vector.
pub fn apply_readout_channel(probs: &mut [f64], noise: &NoiseModel) {
    for (q, r) in noise.readout.iter().enumerate() {
        if r.is_ideal() {
            continue;
        }
        let bit = 1usize << q;
        for k in 0..probs.len() {
            if k & bit == 0 {
                let (p0, p1) = (probs[k], probs[k | bit]);
                probs[k] = p0 * (1.0 - r.p0to1) + p1 * r.p1to0;
                probs[k | bit] = p0 * r.p0to1 + p1 * (1.0 - r.p1to0);
            }
        }
    }
}

fn sample_multinomial(probs: &[f64], shots: u64, rng: &mut SimRng, out: &mut ShotResult) {
    if shots == 0 {
        return;
    }
    if (probs.len() as u64) <= shots {
        // conditional binomials, one per outcome
        let mut remaining = shots;
        let mut mass = 1.0f64;
        for (k, &p) in probs.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let q = if mass > 0.0 {
                (p / mass).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let c = if k + 1 == probs.len() || q >= 1.0 {
                remaining
            } else {
                Binomial::new(remaining, q).expect("valid binomial").sample(rng)
            };
            out.record(k, c);
            remaining -= c;
            mass -= p;
        }
    } else {
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p;
            cdf.push(acc);
        }
        let mut local: BTreeMap<usize, u64> = BTreeMap::new();
        for _ in 0..shots {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
            *local.entry(k).or_insert(0) += 1;
        }
        for (k, c) in local {
            out.record(k, c);
        }
    }
}

/// Measurement outcome of one circuit execution batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Counts(ShotResult),
    Probabilities(Vec<f64>),
}

impl Outcome {
    pub fn parity_mean(&self, mask: u64) -> f64 {
        match self {
            Outcome::Counts(c) => c.parity_mean(mask),
            Outcome::Probabilities(p) => p.iter().enumerate().map(|(k, &w)| parity_sign(k, mask) * w).sum(),
        }
    }
}

/// Measures `circuit` followed by the noiseless `suffix` in the Z basis.
/// `clean` must be the fault-free state of `circuit` (before the suffix).
fn measure(
    clean: &StateVector,
    circuit: &BoundCircuit,
    suffix: &[BoundGate],
    noise: Option<&NoiseModel>,
    shots: Shots,
    rng: &mut SimRng,
) -> Outcome {
    let finish = |mut s: StateVector| {
        s.apply_gates(suffix);
        let mut p = s.probabilities();
        if let Some(model) = noise {
            apply_readout_channel(&mut p, model);
        }
        p
    };
    let gate_noise = noise.filter(|m| m.has_gate_error());
    match (shots, gate_noise) {
        (Shots::Exact, None) => Outcome::Probabilities(finish(clean.clone())),
        (Shots::Exact, Some(model)) => {
            let faults = draw_trajectory(circuit.cx_count(), model.cx_pauli_error, rng);
            Outcome::Probabilities(finish(simulate_with_faults(circuit, &faults)))
        }
        (Shots::Finite(m), None) => {
            let mut out = ShotResult::new(clean.n_qubits());
            sample_multinomial(&finish(clean.clone()), m, rng, &mut out);
            Outcome::Counts(out)
        }
        (Shots::Finite(m), Some(model)) => {
            let (clean_shots, groups) = draw_fault_groups(circuit.cx_count(), model.cx_pauli_error, m, rng);
            let mut out = ShotResult::new(clean.n_qubits());
            sample_multinomial(&finish(clean.clone()), clean_shots, rng, &mut out);
            for (pattern, count) in groups {
                let p = finish(simulate_with_faults(circuit, &pattern));
                sample_multinomial(&p, count, rng, &mut out);
            }
            Outcome::Counts(out)
        }
    }
}

/// Samples `shots` Z-basis outcomes of `c` under `noise`.
pub fn sample_counts(
    c: &BoundCircuit,
    noise: Option<&NoiseModel>,
    shots: u64,
    rng: &mut SimRng,
) -> Result<ShotResult> {
    Shots::Finite(shots).validate()?;
    let clean = simulate_with_faults(c, &[]);
    match measure(&clean, c, &[], noise, Shots::Finite(shots), rng) {
        Outcome::Counts(r) => Ok(r),
        Outcome::Probabilities(_) => unreachable!("finite shots yield counts"),
    }
}

/// Gates rotating `basis` onto the computational basis.
pub fn basis_rotation(basis: &MeasurementBasis) -> Vec<BoundGate> {
    let mut gates = Vec::new();
    for (q, tag) in basis.rotations.iter().enumerate() {
        match tag {
            BasisTag::Z => {}
            BasisTag::X => gates.push(BoundGate::new(GateKind::H, &[q], 0.0).expect("1q gate")),
            BasisTag::Y => {
                gates.push(BoundGate::new(GateKind::Sdg, &[q], 0.0).expect("1q gate"));
                gates.push(BoundGate::new(GateKind::H, &[q], 0.0).expect("1q gate"));
            }
        }
    }
    gates
}

/// Weighted sum of term parities for one basis outcome.
pub fn basis_energy(h: &PauliSum, basis: &MeasurementBasis, outcome: &Outcome) -> f64 {
    basis
        .member_terms
        .iter()
        .map(|&t| {
            let (c, p) = &h.terms()[t];
            if p.is_identity() {
                *c
            } else {
                c * outcome.parity_mean(p.support())
            }
        })
        .sum()
}

pub fn expectation_exact(s: &StateVector, h: &PauliSum) -> Result<f64> {
    if s.n_qubits() != h.n_qubits() {
        return Err(Error::Dimension(format!(
            "state has {} qubits, hamiltonian {}",
            s.n_qubits(),
            h.n_qubits()
        )));
    }
    Ok(h.terms()
        .iter()
        .map(|(c, p)| c * p.expectation(s.amplitudes()))
        .sum())
}

/// Energy estimate from `shots` per qubit-wise commuting basis.
pub fn expectation_sampled(
    c: &BoundCircuit,
    h: &PauliSum,
    shots: Shots,
    rng: &mut SimRng,
    noise: Option<&NoiseModel>,
) -> Result<SampledValue> {
    expectation_sampled_in(c, h, &group_commuting_bases(h), shots, rng, noise)
}

pub(crate) fn expectation_sampled_in(
    c: &BoundCircuit,
    h: &PauliSum,
    bases: &[MeasurementBasis],
    shots: Shots,
    rng: &mut SimRng,
    noise: Option<&NoiseModel>,
) -> Result<SampledValue> {
    shots.validate()?;
    if c.n_qubits() != h.n_qubits() {
        return Err(Error::Dimension(format!(
            "circuit has {} qubits, hamiltonian {}",
            c.n_qubits(),
            h.n_qubits()
        )));
    }
    let clean = simulate_with_faults(c, &[]);
    let mut value = 0.0;
    for basis in bases {
        let outcome = measure(&clean, c, &basis_rotation(basis), noise, shots, rng);
        value += basis_energy(h, basis, &outcome);
    }
    Ok(SampledValue {
        value,
        circuits_run: bases.len(),
        shots_used: match shots {
            Shots::Exact => 0,
            Shots::Finite(m) => m * bases.len() as u64,
        },
    })
}

pub fn fidelity_exact(c: &Circuit, theta: &[f64], omega: &[f64]) -> Result<f64> {
    let a = simulate_with_faults(&c.bind(theta)?, &[]);
    let b = simulate_with_faults(&c.bind(omega)?, &[]);
    Ok(a.fidelity(&b).min(1.0))
}

/// Compute-uncompute estimate of `|<phi(theta)|phi(omega)>|^2`: the
/// frequency of the all-zeros outcome of `U(theta)^dag U(omega)|0>`.
pub fn fidelity_compute_uncompute(
    c: &Circuit,
    theta: &[f64],
    omega: &[f64],
    shots: Shots,
    rng: &mut SimRng,
    noise: Option<&NoiseModel>,
) -> Result<SampledValue> {
    let reference = FidelityReference::new(c, theta, noise)?;
    let value = reference.estimate(c, omega, shots, rng, noise)?;
    Ok(SampledValue {
        value,
        circuits_run: 1,
        shots_used: match shots {
            Shots::Exact => 0,
            Shots::Finite(m) => m,
        },
    })
}

/// `arccos^2 |<phi(theta)|phi(omega)>|`.
pub fn fubini_study_distance(c: &Circuit, theta: &[f64], omega: &[f64]) -> Result<f64> {
    let f = fidelity_exact(c, theta, omega)?;
    Ok(f.sqrt().min(1.0).acos().powi(2))
}

/// Cached `phi(theta)` side of repeated fidelity estimates at fixed `theta`.
#[derive(Debug, Clone)]
pub struct FidelityReference {
    state: StateVector,
    uncompute: Option<BoundCircuit>,
}

impl FidelityReference {
    pub fn new(c: &Circuit, theta: &[f64], noise: Option<&NoiseModel>) -> Result<Self> {
        let bound = c.bind(theta)?;
        let state = simulate_with_faults(&bound, &[]);
        let uncompute = noise
            .filter(|m| m.has_gate_error() || m.has_readout_error())
            .map(|_| bound.inverse());
        Ok(Self { state, uncompute })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn estimate(
        &self,
        c: &Circuit,
        omega: &[f64],
        shots: Shots,
        rng: &mut SimRng,
        noise: Option<&NoiseModel>,
    ) -> Result<f64> {
        shots.validate()?;
        let forward = c.bind(omega)?;
        let Some(uncompute) = &self.uncompute else {
            let f = self.state.fidelity(&simulate_with_faults(&forward, &[])).min(1.0);
            return Ok(match shots {
                Shots::Exact => f,
                Shots::Finite(m) => binomial(m, f, rng) as f64 / m as f64,
            });
        };
        let model = noise.expect("uncompute circuit only built with noise");
        let full = forward.then(uncompute)?;
        let zero_prob = |s: StateVector| {
            let mut p = s.probabilities();
            apply_readout_channel(&mut p, model);
            p[0].clamp(0.0, 1.0)
        };
        match shots {
            Shots::Exact => {
                let faults = draw_trajectory(full.cx_count(), model.cx_pauli_error, rng);
                Ok(zero_prob(simulate_with_faults(&full, &faults)))
            }
            Shots::Finite(m) => {
                let (clean, groups) = draw_fault_groups(full.cx_count(), model.cx_pauli_error, m, rng);
                let mut zeros = binomial(clean, zero_prob(simulate_with_faults(&full, &[])), rng);
                for (pattern, count) in groups {
                    zeros += binomial(count, zero_prob(simulate_with_faults(&full, &pattern)), rng);
                }
                Ok(zeros as f64 / m as f64)
            }
        }
    }
}

fn binomial(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p.clamp(0.0, 1.0))
        .expect("valid binomial")
        .sample(rng)
}

/// Energy and fidelity oracle for a fixed ansatz, observable, shot budget
/// and noise model. This is what the drivers sample through.
#[derive(Debug, Clone)]
pub struct Estimator {
    circuit: Circuit,
    hamiltonian: PauliSum,
    bases: Vec<MeasurementBasis>,
    shots: Shots,
    noise: Option<NoiseModel>,
}

impl Estimator {
    pub fn new(
        circuit: &Circuit,
        hamiltonian: &PauliSum,
        shots: Shots,
        noise: Option<NoiseModel>,
    ) -> Result<Self> {
        shots.validate()?;
        if circuit.n_qubits() != hamiltonian.n_qubits() {
            return Err(Error::Dimension(format!(
                "circuit has {} qubits, hamiltonian {}",
                circuit.n_qubits(),
                hamiltonian.n_qubits()
            )));
        }
        if let Some(n) = &noise {
            n.validate()?;
        }
        Ok(Self {
            circuit: circuit.clone(),
            hamiltonian: hamiltonian.clone(),
            bases: group_commuting_bases(hamiltonian),
            shots,
            noise,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn hamiltonian(&self) -> &PauliSum {
        &self.hamiltonian
    }

    pub fn shots(&self) -> Shots {
        self.shots
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    pub fn bases_per_energy(&self) -> usize {
        self.bases.len()
    }

    fn is_ideal(&self) -> bool {
        self.shots.is_exact() && self.noise.is_none()
    }

    pub fn energy(&self, theta: &[f64], rng: &mut SimRng) -> Result<f64> {
        let bound = self.circuit.bind(theta)?;
        if self.is_ideal() {
            return expectation_exact(&simulate_with_faults(&bound, &[]), &self.hamiltonian);
        }
        Ok(expectation_sampled_in(
            &bound,
            &self.hamiltonian,
            &self.bases,
            self.shots,
            rng,
            self.noise.as_ref(),
        )?
        .value)
    }

    pub fn exact_energy(&self, theta: &[f64]) -> Result<f64> {
        let bound = self.circuit.bind(theta)?;
        expectation_exact(&simulate_with_faults(&bound, &[]), &self.hamiltonian)
    }

    pub fn fidelity_reference(&self, theta: &[f64]) -> Result<FidelityReference> {
        FidelityReference::new(&self.circuit, theta, self.noise.as_ref())
    }

    pub fn fidelity(&self, reference: &FidelityReference, omega: &[f64], rng: &mut SimRng) -> Result<f64> {
        reference.estimate(&self.circuit, omega, self.shots, rng, self.noise.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_hea, chain_edges};
    use crate::pauli::build_ising_chain;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_theta(d: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn hea_at_zero_is_all_zeros() {
        let c = build_hea(4, 2, &chain_edges(4)).unwrap();
        let s = simulate(&c.bind(&[0.0; 24]).unwrap(), None, None).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_preserved_with_faults() {
        let c = build_hea(3, 2, &chain_edges(3)).unwrap();
        let mut rng = SimRng::new(4);
        let noise = NoiseModel::uniform(3, 0.0, 1.0).unwrap();
        for _ in 0..20 {
            let b = c.bind(&random_theta(18, &mut rng)).unwrap();
            let s = simulate(&b, Some(&noise), Some(&mut rng)).unwrap();
            assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-10);
        }
        assert!(simulate(&c.bind(&[0.0; 18]).unwrap(), Some(&noise), None).is_err());
    }

    #[test]
    fn forced_xx_after_cx() {
        let b =
            BoundCircuit::from_gates(2, vec![BoundGate::new(GateKind::Cx, &[0, 1], 0.0).unwrap()]).unwrap();
        let s = simulate_with_faults(&b, &[PauliFault::new(0, Pauli::X, Pauli::X)]);
        assert_abs_diff_eq!(s.amplitudes()[3].norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ising_energy_of_zero_state() {
        let h = build_ising_chain(2, 0.5, -1.0).unwrap();
        assert_abs_diff_eq!(expectation_exact(&StateVector::zero(2), &h).unwrap(), 0.5);
        let zero = PauliSum::zero(2).unwrap();
        assert_eq!(expectation_exact(&StateVector::zero(2), &zero).unwrap(), 0.0);
        assert!(expectation_exact(&StateVector::zero(3), &h).is_err());
    }

    #[test]
    fn exact_mode_matches_exact_expectation() {
        let c = build_hea(4, 1, &chain_edges(4)).unwrap();
        let h = PauliSum::from_terms(
            4,
            [
                (0.5, "ZZII".parse().unwrap()),
                (-0.3, "XIXI".parse().unwrap()),
                (0.7, "IYYI".parse().unwrap()),
                (1.1, "IIII".parse().unwrap()),
            ],
        )
        .unwrap();
        let mut rng = SimRng::new(9);
        for _ in 0..10 {
            let b = c.bind(&random_theta(16, &mut rng)).unwrap();
            let exact = expectation_exact(&simulate(&b, None, None).unwrap(), &h).unwrap();
            let sampled = expectation_sampled(&b, &h, Shots::Exact, &mut rng, None).unwrap();
            assert_abs_diff_eq!(exact, sampled.value, epsilon = 1e-10);
            assert_eq!(sampled.circuits_run, 3);
        }
    }

    #[test]
    fn ising_uses_two_circuits() {
        let c = build_hea(4, 1, &chain_edges(4)).unwrap();
        let h = build_ising_chain(4, 0.5, -1.0).unwrap();
        let mut rng = SimRng::new(1);
        let v = expectation_sampled(
            &c.bind(&[0.3; 16]).unwrap(),
            &h,
            Shots::Finite(100),
            &mut rng,
            None,
        )
        .unwrap();
        assert_eq!(v.circuits_run, 2);
        assert_eq!(v.shots_used, 200);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let c = build_hea(3, 1, &chain_edges(3)).unwrap();
        let b = c.bind(&[0.4; 12]).unwrap();
        let noise = NoiseModel::uniform(3, 0.05, 0.1).unwrap();
        let a = sample_counts(&b, Some(&noise), 500, &mut SimRng::new(5)).unwrap();
        let bb = sample_counts(&b, Some(&noise), 500, &mut SimRng::new(5)).unwrap();
        assert_eq!(a, bb);
        assert_eq!(a.counts.values().sum::<u64>(), 500);
    }

    #[test]
    fn fidelity_basics() {
        let c = build_hea(2, 1, &chain_edges(2)).unwrap();
        let mut rng = SimRng::new(2);
        let t = random_theta(8, &mut rng);
        let w = random_theta(8, &mut rng);
        assert_abs_diff_eq!(fidelity_exact(&c, &t, &t).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            fidelity_exact(&c, &t, &w).unwrap(),
            fidelity_exact(&c, &w, &t).unwrap(),
            epsilon = 1e-12
        );
        let ry = Circuit::from_gates(
            1,
            vec![
                crate::circuit::Gate::new(GateKind::Ry, &[0], Some(crate::circuit::Angle::param(0))).unwrap(),
            ],
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(
            fidelity_exact(&ry, &[0.0], &[std::f64::consts::PI]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            fubini_study_distance(&ry, &[0.0], &[std::f64::consts::PI]).unwrap(),
            std::f64::consts::FRAC_PI_2.powi(2),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(fubini_study_distance(&c, &t, &t).unwrap(), 0.0, epsilon = 1e-12);
        assert!(fidelity_exact(&c, &t, &[0.0]).is_err());
    }

    #[test]
    fn compute_uncompute_exact_mode() {
        let c = build_hea(3, 1, &chain_edges(3)).unwrap();
        let t = vec![0.2; 12];
        let mut rng = SimRng::new(0);
        let v = fidelity_compute_uncompute(&c, &t, &t, Shots::Exact, &mut rng, None).unwrap();
        assert_abs_diff_eq!(v.value, 1.0, epsilon = 1e-12);
        assert_eq!(v.circuits_run, 1);
        // the noisy path runs the doubled circuit
        let noise = NoiseModel::uniform(3, 0.0, 0.0).unwrap();
        let w: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let direct = fidelity_exact(&c, &t, &w).unwrap();
        let via = fidelity_compute_uncompute(&c, &t, &w, Shots::Exact, &mut rng, Some(&noise)).unwrap();
        let noisy_readout = NoiseModel::uniform(3, 1e-12, 0.0).unwrap();
        let via2 =
            fidelity_compute_uncompute(&c, &t, &w, Shots::Exact, &mut rng, Some(&noisy_readout)).unwrap();
        assert_abs_diff_eq!(direct, via.value, epsilon = 1e-12);
        assert_abs_diff_eq!(direct, via2.value, epsilon = 1e-10);
    }

    #[test]
    fn readout_scrambling_gives_uniform_zero_probability() {
        let n = 4;
        let c = build_hea(n, 1, &chain_edges(n)).unwrap();
        let noise = NoiseModel::uniform(n, 0.5, 0.0).unwrap();
        let mut rng = SimRng::new(8);
        let t = random_theta(16, &mut rng);
        let w = random_theta(16, &mut rng);
        let v = fidelity_compute_uncompute(&c, &t, &w, Shots::Exact, &mut rng, Some(&noise)).unwrap();
        assert_abs_diff_eq!(v.value, 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn readout_channel_preserves_mass() {
        let mut p = vec![0.1, 0.2, 0.3, 0.4];
        let noise = NoiseModel::new(
            vec![
                ReadoutError {
                    p0to1: 0.1,
                    p1to0: 0.3,
                },
                ReadoutError::symmetric(0.05),
            ],
            0.0,
        )
        .unwrap();
        apply_readout_channel(&mut p, &noise);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(NoiseModel::uniform(2, 1.5, 0.0).is_err());
    }

    #[test]
    fn shot_json_round_trip() {
        let mut r = ShotResult::new(3);
        r.record(5, 7);
        r.record(0, 2);
        let j = r.to_json();
        assert_eq!(j["101"], 7);
        assert_eq!(ShotResult::from_json(3, &j).unwrap(), r);
    }

    #[test]
    fn fault_groups_conserve_shots() {
        let mut rng = SimRng::new(3);
        let (clean, groups) = draw_fault_groups(10, 0.02, 1000, &mut rng);
        let faulty: u64 = groups.values().sum();
        assert_eq!(clean + faulty, 1000);
        // about 1 - 0.98^10 = 18% of shots carry a fault
        assert!((120..260).contains(&faulty), "{faulty}");
        assert!(groups.keys().all(|k| k.windows(2).all(|w| w[0] < w[1])));
    }
}
