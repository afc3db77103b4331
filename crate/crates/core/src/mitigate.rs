//! Simulated error mitigation: readout inversion on the observed subspace,
//! CX-folding ZNE with an exponential fit, and Pauli-twirled energies.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{basis_rotation, sample_counts, NoiseModel, ShotResult};
use crate::circuit::BoundCircuit;
use crate::error::{Error, Result};
use crate::pauli::{group_commuting_bases, MeasurementBasis, PauliSum};
use crate::rng::SimRng;

const NORM_TOL: f64 = 1e-9;
/// Relative size below which ZNE differences count as flat.
const FLAT_TOL: f64 = 1e-12;

/// Per-qubit readout transfer matrices, `m[read][held]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    matrices: Vec<[[f64; 2]; 2]>,
}

impl CalibrationSet {
    pub fn new(matrices: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        for (q, m) in matrices.iter().enumerate() {
            for held in 0..2 {
                let col = [m[0][held], m[1][held]];
                if col.iter().any(|x| !(0.0..=1.0).contains(x)) || (col[0] + col[1] - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "calibration of qubit {q} is not column-stochastic"
                    )));
                }
            }
        }
        Ok(Self { matrices })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self {
            matrices: vec![[[1.0, 0.0], [0.0, 1.0]]; n_qubits],
        }
    }

    /// Ground-truth calibration of the readout part of `noise`.
    pub fn from_noise(noise: &NoiseModel, n_qubits: usize) -> Self {
        let matrices = (0..n_qubits)
            .map(|q| {
                let r = noise.readout_for(q);
                let t = |held: bool, read: bool| r.transition(held, read);
                [[t(false, false), t(true, false)], [t(false, true), t(true, true)]]
            })
            .collect();
        Self { matrices }
    }

    pub fn n_qubits(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, q: usize) -> [[f64; 2]; 2] {
        self.matrices[q]
    }

    /// Probability of reading `read` from basis state `held`.
    pub fn transition(&self, read: usize, held: usize) -> f64 {
        self.matrices
            .iter()
            .enumerate()
            .map(|(q, m)| m[(read >> q) & 1][(held >> q) & 1])
            .product()
    }
}

/// Quasi-probabilities over bitstrings; weights may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiDistribution {
    n_qubits: usize,
    weights: BTreeMap<usize, f64>,
}

impl QuasiDistribution {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn weights(&self) -> &BTreeMap<usize, f64> {
        &self.weights
    }

    pub fn get(&self, outcome: usize) -> f64 {
        self.weights.get(&outcome).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Quasi-expectation of the Z-parity on the qubits in `mask`.
    pub fn parity_mean(&self, mask: u64) -> f64 {
        self.weights
            .iter()
            .map(|(&k, &w)| {
                if (k as u64 & mask).count_ones().is_multiple_of(2) {
                    w
                } else {
                    -w
                }
            })
            .sum()
    }

    /// Weighted Z-parity expectations of the members of `basis`, measured
    /// after its rotation. Identity terms contribute their coefficient.
    pub fn basis_energy(&self, h: &PauliSum, basis: &MeasurementBasis) -> f64 {
        basis
            .member_terms
            .iter()
            .map(|&t| {
                let (c, p) = &h.terms()[t];
                c * self.parity_mean(p.support())
            })
            .sum()
    }
}

/// Inverts the readout channel on the subspace of observed bitstrings.
///
/// Columns of the truncated transfer matrix are renormalized so the result
/// keeps total weight 1.
pub fn m3_mitigate(counts: &ShotResult, calib: &CalibrationSet) -> Result<QuasiDistribution> {
    let total: u64 = counts.counts.values().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no counts to mitigate".into()));
    }
    if calib.n_qubits() != counts.n_qubits {
        return Err(Error::Dimension(format!(
            "calibration for {} qubits, counts for {}",
            calib.n_qubits(),
            counts.n_qubits
        )));
    }
    let keys: Vec<usize> = counts.counts.keys().copied().collect();
    let d = keys.len();
    let mut a = DMatrix::from_fn(d, d, |i, j| calib.transition(keys[i], keys[j]));
    for mut col in a.column_iter_mut() {
        let s: f64 = col.sum();
        if s <= 0.0 {
            return Err(Error::IllConditionedCalibration(
                "an observed bitstring cannot be produced by any observed state".into(),
            ));
        }
        col /= s;
    }
    let p = DVector::from_iterator(d, counts.counts.values().map(|&c| c as f64 / total as f64));
    let q = a
        .lu()
        .solve(&p)
        .filter(|q| q.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::IllConditionedCalibration(format!("{d}x{d} transfer matrix is singular")))?;
    Ok(QuasiDistribution {
        n_qubits: counts.n_qubits,
        weights: keys.into_iter().zip(q.iter().copied()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZneModel {
    /// `E(z) = a + b exp(c z)`
    Exponential { a: f64, b: f64, c: f64 },
    /// Least-squares line, used when the exponential fit is degenerate.
    Linear { intercept: f64, slope: f64 },
}

impl ZneModel {
    pub fn eval(&self, zeta: f64) -> f64 {
        match *self {
            ZneModel::Exponential { a, b, c } => a + b * (c * zeta).exp(),
            ZneModel::Linear { intercept, slope } => intercept + slope * zeta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZneFit {
    pub e0: f64,
    pub model: ZneModel,
    pub fallback: bool,
}

fn linear_fit(points: &[(f64, f64)]) -> ZneFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    ZneFit {
        e0: intercept,
        model: ZneModel::Linear { intercept, slope },
        fallback: true,
    }
}

/// Extrapolates `(zeta, E)` points to `zeta = 0`.
///
/// Three equally spaced points get the exact exponential fit. Anything the
/// exponential cannot describe (non-monotone or flat differences, other point
/// counts) falls back to a straight line and sets `fallback`.
pub fn zne_extrapolate(points: &[(f64, f64)]) -> Result<ZneFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidArgument("non-finite extrapolation point".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("fold levels must be distinct".into()));
    }
    let [(z1, e1), (z2, e2), (z3, e3)] = match pts[..] {
        [p1, p2, p3] => [p1, p2, p3],
        _ => return Ok(linear_fit(&pts)),
    };
    let step = z2 - z1;
    if ((z3 - z2) - step).abs() > 1e-12 * step.abs().max(1.0) {
        return Ok(linear_fit(&pts));
    }
    let scale = e1.abs().max(e2.abs()).max(e3.abs()).max(1.0);
    let (d1, d2) = (e2 - e1, e3 - e2);
    let ratio = d2 / d1;
    if d1.abs() <= FLAT_TOL * scale || !(ratio > 0.0) || !ratio.is_finite() || (ratio - 1.0).abs() <= FLAT_TOL
    {
        return Ok(linear_fit(&pts));
    }
    let c = ratio.ln() / step;
    let b = d1 / ((c * z2).exp() - (c * z1).exp());
    let a = e1 - b * (c * z1).exp();
    Ok(ZneFit {
        e0: a + b,
        model: ZneModel::Exponential { a, b, c },
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZneConfig {
    /// Noise scale factors `zeta = 2m + 1`.
    pub fold_levels: Vec<usize>,
    pub n_twirls: usize,
    /// Shots per basis per twirl instance.
    pub shots: u64,
}

impl Default for ZneConfig {
    fn default() -> Self {
        Self {
            fold_levels: vec![1, 3, 5],
            n_twirls: 25,
            shots: 1000,
        }
    }
}

impl ZneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fold_levels.len() < 3 {
            return Err(Error::InvalidArgument("need at least 3 fold levels".into()));
        }
        if self.fold_levels.iter().any(|z| z % 2 == 0) {
            return Err(Error::InvalidArgument("fold levels must be odd".into()));
        }
        if self.fold_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("fold levels must be ascending".into()));
        }
        if self.n_twirls == 0 || self.shots == 0 {
            return Err(Error::InvalidArgument(
                "n_twirls and shots must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub fold_levels: Vec<usize>,
    /// Twirl-averaged, readout-mitigated energy per fold level.
    pub energies: Vec<f64>,
    pub n_twirls: usize,
    pub shots: u64,
    pub fit: ZneFit,
    pub e0: f64,
}

impl MitigationReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is plain data")
    }
}

/// Readout-mitigated energy of one noisy circuit instance.
pub fn m3_energy(
    c: &BoundCircuit,
    h: &PauliSum,
    noise: &NoiseModel,
    calib: &CalibrationSet,
    shots: u64,
    rng: &mut SimRng,
) -> Result<f64> {
    let bases = group_commuting_bases(h);
    m3_energy_in(c, h, &bases, noise, calib, shots, rng)
}

fn m3_energy_in(
    c: &BoundCircuit,
    h: &PauliSum,
    bases: &[MeasurementBasis],
    noise: &NoiseModel,
    calib: &CalibrationSet,
    shots: u64,
    rng: &mut SimRng,
) -> Result<f64> {
    let mut energy = 0.0;
    for basis in bases {
        let mut rotated = c.clone();
        for g in basis_rotation(basis) {
            rotated.push(g)?;
        }
        let counts = sample_counts(&rotated, Some(noise), shots, rng)?;
        energy += m3_mitigate(&counts, calib)?.basis_energy(h, basis);
    }
    Ok(energy)
}

/// Twirled, folded and readout-mitigated energies at each fold level,
/// extrapolated to zero noise.
pub fn mitigated_energy(
    c: &BoundCircuit,
    h: &PauliSum,
    noise: &NoiseModel,
    zcfg: &ZneConfig,
    calib: &CalibrationSet,
    rng: &mut SimRng,
) -> Result<MitigationReport> {
    zcfg.validate()?;
    if c.n_qubits() != h.n_qubits() || calib.n_qubits() != h.n_qubits() {
        return Err(Error::Dimension(
            "circuit, hamiltonian and calibration disagree on qubit count".into(),
        ));
    }
    let bases = group_commuting_bases(h);
    let base = rng.fork();
    let mut energies = Vec::with_capacity(zcfg.fold_levels.len());
    for (li, &zeta) in zcfg.fold_levels.iter().enumerate() {
        let per_twirl = (0..zcfg.n_twirls)
            .into_par_iter()
            .map(|t| {
                let mut r = base.child((li * zcfg.n_twirls + t) as u64);
                let circuit = c.twirl_cx(&mut r).fold_cx(zeta / 2);
                m3_energy_in(&circuit, h, &bases, noise, calib, zcfg.shots, &mut r)
            })
            .collect::<Result<Vec<f64>>>()?;
        energies.push(per_twirl.iter().sum::<f64>() / zcfg.n_twirls as f64);
    }
    let points: Vec<(f64, f64)> = zcfg
        .fold_levels
        .iter()
        .zip(&energies)
        .map(|(&z, &e)| (z as f64, e))
        .collect();
    let fit = zne_extrapolate(&points)?;
    Ok(MitigationReport {
        fold_levels: zcfg.fold_levels.clone(),
        energies,
        n_twirls: zcfg.n_twirls,
        shots: zcfg.shots,
        e0: fit.e0,
        fit,
    })
}
