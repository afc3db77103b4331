//! Quantum geometric tensor and evolution gradient: exact values by
//! derivative-state insertion, and their SPSA sample estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Estimator, Shots, StateVector};
use crate::circuit::{Angle, Circuit};
use crate::error::{Error, Result};
use crate::pauli::PauliSum;
use crate::rng::SimRng;

/// Real part of the quantum geometric tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Qgt(pub DMatrix<f64>);

/// `b_i = -Re <d_i phi|H|phi>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvoGrad(pub DVector<f64>);

impl Qgt {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.0 - self.0.transpose()).abs().max()
    }
}

impl EvoGrad {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub n_samples: usize,
    pub shots: Shots,
}

impl SamplerConfig {
    pub const EPSILON_EXACT: f64 = 1e-2;
    pub const EPSILON_SHOTS: f64 = 1e-1;

    /// Default perturbation for the given shot mode.
    pub fn new(n_samples: usize, shots: Shots) -> Self {
        let epsilon = if shots.is_exact() {
            Self::EPSILON_EXACT
        } else {
            Self::EPSILON_SHOTS
        };
        Self {
            epsilon,
            n_samples,
            shots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample per step".into()));
        }
        Ok(())
    }
}

/// `phi(theta)` and its partial derivatives `|d_i phi>`.
pub fn derivative_states(c: &Circuit, theta: &[f64]) -> Result<(StateVector, Vec<StateVector>)> {
    let bound = c.bind(theta)?;
    let n = c.n_qubits();
    let empty = StateVector::from_amplitudes(n, vec![Complex64::new(0.0, 0.0); 1 << n])?;
    let mut derivs = vec![empty; c.n_params()];
    let mut prefix = StateVector::zero(n);
    for (j, (g, bg)) in c.gates().iter().zip(bound.gates()).enumerate() {
        prefix.apply_gate(bg);
        if let Some(Angle::Param { index, scale }) = g.angle() {
            // the generator commutes with its own rotation, so inserting it
            // after the gate is the same as before
            let mut s = prefix.clone();
            s.apply_generator(g.kind(), g.qubits())?;
            s.apply_gates(&bound.gates()[j + 1..]);
            derivs[index].axpy(Complex64::new(0.0, -0.5 * scale), &s);
        }
    }
    Ok((prefix, derivs))
}

fn qgt_from_states(phi: &StateVector, derivs: &[StateVector]) -> Qgt {
    let d = derivs.len();
    let overlaps: Vec<Complex64> = derivs.iter().map(|s| s.inner(phi)).collect();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (derivs[i].inner(&derivs[j]) - overlaps[i] * overlaps[j].conj()).re;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Qgt(g)
}

fn gradient_from_states(phi: &StateVector, derivs: &[StateVector], h: &PauliSum) -> Result<EvoGrad> {
    if h.n_qubits() != phi.n_qubits() {
        return Err(Error::Dimension(format!(
            "hamiltonian has {} qubits, circuit {}",
            h.n_qubits(),
            phi.n_qubits()
        )));
    }
    let mut h_phi = vec![Complex64::new(0.0, 0.0); phi.dim()];
    h.apply(phi.amplitudes(), &mut h_phi);
    let h_phi = StateVector::from_amplitudes(phi.n_qubits(), h_phi)?;
    Ok(EvoGrad(DVector::from_iterator(
        derivs.len(),
        derivs.iter().map(|s| -s.inner(&h_phi).re),
    )))
}

pub fn qgt_exact(c: &Circuit, theta: &[f64]) -> Result<Qgt> {
    let (phi, derivs) = derivative_states(c, theta)?;
    Ok(qgt_from_states(&phi, &derivs))
}

pub fn evolution_gradient_exact(c: &Circuit, theta: &[f64], h: &PauliSum) -> Result<EvoGrad> {
    let (phi, derivs) = derivative_states(c, theta)?;
    gradient_from_states(&phi, &derivs, h)
}

/// Both exact quantities from one set of derivative states.
pub fn qgt_and_gradient_exact(c: &Circuit, theta: &[f64], h: &PauliSum) -> Result<(Qgt, EvoGrad)> {
    let (phi, derivs) = derivative_states(c, theta)?;
    Ok((
        qgt_from_states(&phi, &derivs),
        gradient_from_states(&phi, &derivs, h)?,
    ))
}

/// Uniform draw from `{-1, +1}^d`.
pub fn rademacher<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn shifted(theta: &[f64], eps: f64, dir: &DVector<f64>) -> Vec<f64> {
    theta.iter().zip(dir.iter()).map(|(t, v)| t + eps * v).collect()
}

/// One rank-two SPSA sample of the QGT from four fidelity evaluations
/// `fidelity(omega, rng) ~ |<phi(theta)|phi(omega)>|^2`.
pub fn sample_qgt<F>(theta: &[f64], epsilon: f64, rng: &mut SimRng, mut fidelity: F) -> Result<Qgt>
where
    F: FnMut(&[f64], &mut SimRng) -> Result<f64>,
{
    let d = theta.len();
    let d1 = rademacher(d, rng);
    let d2 = rademacher(d, rng);
    let plus = &d1 + &d2;
    let minus = &d1 - &d2;
    let df = fidelity(&shifted(theta, epsilon, &plus), rng)?
        - fidelity(&shifted(theta, epsilon, &minus), rng)?
        - fidelity(&shifted(theta, -epsilon, &minus), rng)?
        + fidelity(&shifted(theta, -epsilon, &plus), rng)?;
    let outer = &d1 * d2.transpose();
    let sym = (&outer + outer.transpose()) * 0.5;
    Ok(Qgt(sym * (-0.5 * df / (4.0 * epsilon * epsilon))))
}

/// One SPSA sample of the evolution gradient from two energy evaluations.
pub fn sample_evolution_gradient<F>(
    theta: &[f64],
    epsilon: f64,
    rng: &mut SimRng,
    mut energy: F,
) -> Result<EvoGrad>
where
    F: FnMut(&[f64], &mut SimRng) -> Result<f64>,
{
    let delta = rademacher(theta.len(), rng);
    let de = energy(&shifted(theta, epsilon, &delta), rng)? - energy(&shifted(theta, -epsilon, &delta), rng)?;
    Ok(EvoGrad(delta * (-0.5 * de / (2.0 * epsilon))))
}

pub fn average_batch(samples: &[(Qgt, EvoGrad)]) -> Result<(Qgt, EvoGrad)> {
    let Some((g0, b0)) = samples.first() else {
        return Err(Error::InvalidArgument("empty sample batch".into()));
    };
    let mut g = DMatrix::zeros(g0.dim(), g0.dim());
    let mut b = DVector::zeros(b0.dim());
    for (gs, bs) in samples {
        g += &gs.0;
        b += &bs.0;
    }
    let inv = 1.0 / samples.len() as f64;
    Ok((Qgt(g * inv), EvoGrad(b * inv)))
}

const BATCH_CHUNK: usize = 256;

/// `n_samples` independent (QGT, gradient) samples at `theta`, averaged.
///
/// Each sample runs on its own child stream so the result does not depend
/// on how the work is scheduled.
pub fn sample_batch(
    est: &Estimator,
    theta: &[f64],
    cfg: &SamplerConfig,
    rng: &mut SimRng,
) -> Result<(Qgt, EvoGrad)> {
    cfg.validate()?;
    est.circuit().check_arity(theta)?;
    let reference = est.fidelity_reference(theta)?;
    let base = rng.fork();
    let d = theta.len();
    let (mut g, mut b) = (DMatrix::zeros(d, d), DVector::zeros(d));
    // bounded chunks keep memory flat for large batches; sums stay in index order
    for start in (0..cfg.n_samples as u64).step_by(BATCH_CHUNK) {
        let end = (start + BATCH_CHUNK as u64).min(cfg.n_samples as u64);
        let chunk = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut r = base.child(i);
                let g = sample_qgt(theta, cfg.epsilon, &mut r, |w, r| est.fidelity(&reference, w, r))?;
                let b = sample_evolution_gradient(theta, cfg.epsilon, &mut r, |w, r| est.energy(w, r))?;
                Ok((g, b))
            })
            .collect::<Result<Vec<_>>>()?;
        for (gs, bs) in &chunk {
            g += &gs.0;
            b += &bs.0;
        }
    }
    let inv = 1.0 / cfg.n_samples as f64;
    Ok((Qgt(g * inv), EvoGrad(b * inv)))
}

/// Gradient-only batch, for plain SPSA.
pub fn sample_gradient_batch(
    est: &Estimator,
    theta: &[f64],
    cfg: &SamplerConfig,
    rng: &mut SimRng,
) -> Result<EvoGrad> {
    cfg.validate()?;
    est.circuit().check_arity(theta)?;
    let base = rng.fork();
    let samples = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = base.child(i);
            sample_evolution_gradient(theta, cfg.epsilon, &mut r, |w, r| est.energy(w, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut b = DVector::zeros(theta.len());
    for s in &samples {
        b += &s.0;
    }
    Ok(EvoGrad(b / samples.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Momentum,
    GlobalAverage,
}

/// Running estimates `g_bar`, `b_bar` across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub g_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub tau1: f64,
    pub tau2: f64,
    pub k: usize,
    pub mode: EstimatorMode,
}

impl EstimatorState {
    pub fn momentum(g0: Qgt, b0: EvoGrad, tau1: f64, tau2: f64) -> Result<Self> {
        for t in [tau1, tau2] {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::InvalidArgument(format!("momentum {t} outside [0, 1)")));
            }
        }
        if g0.dim() != b0.dim() {
            return Err(Error::Dimension(format!(
                "qgt {} vs gradient {}",
                g0.dim(),
                b0.dim()
            )));
        }
        Ok(Self {
            g_bar: g0.0,
            b_bar: b0.0,
            tau1,
            tau2,
            k: 0,
            mode: EstimatorMode::Momentum,
        })
    }

    /// Global-average state starting from the identity metric.
    pub fn global_average(d: usize) -> Self {
        Self {
            g_bar: DMatrix::identity(d, d),
            b_bar: DVector::zeros(d),
            tau1: 0.0,
            tau2: 0.0,
            k: 0,
            mode: EstimatorMode::GlobalAverage,
        }
    }

    pub fn update_momentum(&mut self, g: &Qgt, b: &EvoGrad) -> Result<()> {
        if self.mode != EstimatorMode::Momentum {
            return Err(Error::InvalidArgument("state is not in momentum mode".into()));
        }
        self.check_dims(g, Some(b))?;
        self.g_bar = &self.g_bar * self.tau1 + &g.0 * (1.0 - self.tau1);
        self.b_bar = &self.b_bar * self.tau2 + &b.0 * (1.0 - self.tau2);
        self.k += 1;
        Ok(())
    }

    pub fn update_global_average(&mut self, g: &Qgt) -> Result<()> {
        if self.mode != EstimatorMode::GlobalAverage {
            return Err(Error::InvalidArgument(
                "state is not in global-average mode".into(),
            ));
        }
        self.check_dims(g, None)?;
        self.k += 1;
        let k = self.k as f64;
        self.g_bar = &self.g_bar * (k / (k + 1.0)) + &g.0 * (1.0 / (k + 1.0));
        Ok(())
    }

    fn check_dims(&self, g: &Qgt, b: Option<&EvoGrad>) -> Result<()> {
        let d = self.b_bar.len();
        if g.dim() != d || b.is_some_and(|b| b.dim() != d) {
            return Err(Error::Dimension(format!("update does not match dimension {d}")));
        }
        Ok(())
    }
}

/// Frobenius (matrices) or Euclidean (vectors) distance.
pub fn sampling_error<R, C, S1, S2>(
    estimate: &nalgebra::Matrix<f64, R, C, S1>,
    exact: &nalgebra::Matrix<f64, R, C, S2>,
) -> Result<f64>
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::Storage<f64, R, C>,
    S2: nalgebra::Storage<f64, R, C>,
{
    if estimate.shape() != exact.shape() {
        return Err(Error::Dimension(format!(
            "{:?} vs {:?}",
            estimate.shape(),
            exact.shape()
        )));
    }
    Ok(estimate
        .iter()
        .zip(exact.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}
