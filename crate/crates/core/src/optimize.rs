//! Ground-state minimizers: SPSA, QN-SPSA and SA-QITE with a decaying
//! sample schedule.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::backend::{expectation_exact, simulate, Estimator, Shots, StateVector};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::evolve::ResourceModel;
use crate::gradients::{
    qgt_and_gradient_exact, sample_batch, sample_gradient_batch, EstimatorState, SamplerConfig,
};
use crate::linsolve::{psd_abs, solve, SolverKind};
use crate::pauli::PauliSum;
use crate::rng::SimRng;

pub const CSV_VERSION: &str = "# saqite optimize v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// SPSA learning rate, or the Euler timestep of the natural-gradient
    /// methods (`theta += eta (g + delta I)^-1 b` with `b = -grad E / 2`).
    pub eta: f64,
    pub epsilon: f64,
    pub shots: Shots,
    pub max_iters: usize,
    /// Stop once this many measurements have been spent.
    pub budget: Option<u64>,
    pub n0: usize,
    pub decay: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub delta: f64,
    pub solver: SolverKind,
    /// Replace the metric estimate by its matrix absolute value before the
    /// solve. Natural-gradient methods only.
    #[serde(default)]
    pub psd_projection: bool,
    /// Stop as soon as `p_optimal` reaches this level. Needs an optimal set.
    #[serde(default)]
    pub stop_at_p_optimal: Option<f64>,
    pub seed: u64,
}

impl OptimizerConfig {
    /// MaxCut settings: 8000 shots, `epsilon = 1e-2`, `N0 = 10` decaying by
    /// 0.9, `tau1 = 0.99`, `tau2 = 0`, diagonal shift `delta = 100`, and PSD
    /// projection of the metric estimate.
    pub fn maxcut(eta: f64) -> Self {
        Self {
            eta,
            epsilon: 1e-2,
            shots: Shots::Finite(8000),
            max_iters: 10_000,
            budget: None,
            n0: 10,
            decay: 0.9,
            tau1: 0.99,
            tau2: 0.0,
            delta: 100.0,
            solver: SolverKind::DiagShift,
            psd_projection: true,
            stop_at_p_optimal: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.n0 == 0 {
            return Err(Error::InvalidArgument("n0 must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// `N_k = max(1, floor(decay^k N0))`.
    pub fn samples_at(&self, k: usize) -> usize {
        let n = (self.decay.powi(k as i32) * self.n0 as f64 + 1e-9).floor() as usize;
        n.max(1)
    }

    fn sampler(&self, n_samples: usize) -> SamplerConfig {
        SamplerConfig {
            epsilon: self.epsilon,
            n_samples,
            shots: self.shots,
        }
    }

    fn finished(&self, log: &IterateLog) -> bool {
        let spent = log.total_measurements();
        let hit = match (self.stop_at_p_optimal, log.p_optimal.last()) {
            (Some(level), Some(&p)) => p >= level,
            _ => false,
        };
        hit || self.budget.is_some_and(|b| spent >= b)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateLog {
    pub thetas: Vec<Vec<f64>>,
    /// Noiseless energy of `phi(theta)`.
    pub energies: Vec<f64>,
    /// Empty when no optimal set was supplied.
    pub p_optimal: Vec<f64>,
    pub measurements_cumulative: Vec<u64>,
}

impl IterateLog {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn total_measurements(&self) -> u64 {
        self.measurements_cumulative.last().copied().unwrap_or(0)
    }

    /// Measurements spent when `p_optimal` first reached `level`.
    pub fn measurements_to_reach(&self, level: f64) -> Option<u64> {
        self.p_optimal
            .iter()
            .position(|&p| p >= level)
            .map(|k| self.measurements_cumulative[k])
    }

    /// Energy of the last iterate recorded within `budget` measurements.
    pub fn energy_at_budget(&self, budget: u64) -> f64 {
        let k = self.measurements_cumulative.partition_point(|&m| m <= budget);
        self.energies[k.saturating_sub(1)]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_VERSION}")?;
        writeln!(w, "iter,energy,p_optimal,n_measurements_cumulative")?;
        for k in 0..self.len() {
            let p = self.p_optimal.get(k).map(|p| p.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{}",
                k, self.energies[k], p, self.measurements_cumulative[k]
            )?;
        }
        Ok(())
    }
}

/// Records iterates with their noiseless energy and optimal-set weight.
struct Recorder<'a> {
    c: &'a Circuit,
    h: &'a PauliSum,
    optimal: Option<&'a [usize]>,
    log: IterateLog,
}

impl<'a> Recorder<'a> {
    fn new(c: &'a Circuit, h: &'a PauliSum, optimal: Option<&'a [usize]>) -> Self {
        Self {
            c,
            h,
            optimal,
            log: IterateLog::default(),
        }
    }

    fn push(&mut self, theta: &[f64], cost: u64) -> Result<()> {
        let s = simulate(&self.c.bind(theta)?, None, None)?;
        let spent = self.log.total_measurements() + cost;
        self.log.thetas.push(theta.to_vec());
        self.log.energies.push(expectation_exact(&s, self.h)?);
        if let Some(opt) = self.optimal {
            self.log.p_optimal.push(p_optimal_indices(&s, opt)?);
        }
        self.log.measurements_cumulative.push(spent);
        Ok(())
    }
}

/// Plain SPSA with fixed `eta` and `epsilon`, one gradient sample per step.
pub fn spsa_minimize(
    c: &Circuit,
    h: &PauliSum,
    theta0: &[f64],
    cfg: &OptimizerConfig,
    optimal: Option<&[usize]>,
) -> Result<IterateLog> {
    cfg.validate()?;
    c.check_arity(theta0)?;
    let est = Estimator::new(c, h, cfg.shots, None)?;
    let model = ResourceModel::new(est.bases_per_energy());
    let cost = model.spsa_step(1, cfg.shots);
    let mut rng = SimRng::new(cfg.seed);
    let mut rec = Recorder::new(c, h, optimal);
    let mut theta = theta0.to_vec();
    rec.push(&theta, 0)?;
    for k in 1..=cfg.max_iters {
        if cfg.finished(&rec.log) {
            break;
        }
        let b = sample_gradient_batch(&est, &theta, &cfg.sampler(1), &mut rng).map_err(|e| e.at_step(k))?;
        // b = -grad E / 2
        for (t, bi) in theta.iter_mut().zip(b.0.iter()) {
            *t += 2.0 * cfg.eta * bi;
        }
        rec.push(&theta, cost)?;
    }
    Ok(rec.log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flavor {
    /// Global QGT average from the identity, fresh gradient every step.
    QnSpsa,
    /// Exact start, momentum on both estimates, decaying batch size.
    SaQite,
}

fn natural_gradient_minimize(
    c: &Circuit,
    h: &PauliSum,
    theta0: &[f64],
    cfg: &OptimizerConfig,
    optimal: Option<&[usize]>,
    flavor: Flavor,
) -> Result<IterateLog> {
    cfg.validate()?;
    c.check_arity(theta0)?;
    let est = Estimator::new(c, h, cfg.shots, None)?;
    let model = ResourceModel::new(est.bases_per_energy());
    let mut rng = SimRng::new(cfg.seed);
    let mut rec = Recorder::new(c, h, optimal);
    let mut theta = theta0.to_vec();
    rec.push(&theta, 0)?;

    let mut st = match flavor {
        Flavor::QnSpsa => EstimatorState::global_average(c.n_params()),
        Flavor::SaQite => {
            let (g0, b0) = qgt_and_gradient_exact(c, theta0, h)?;
            EstimatorState::momentum(g0, b0, cfg.tau1, cfg.tau2)?
        }
    };
    for k in 1..=cfg.max_iters {
        if cfg.finished(&rec.log) {
            break;
        }
        let n_k = cfg.samples_at(k);
        let step = |st: &mut EstimatorState, rng: &mut SimRng| -> Result<DVector<f64>> {
            let (g, b) = sample_batch(&est, &theta, &cfg.sampler(n_k), rng)?;
            let b = match flavor {
                Flavor::QnSpsa => {
                    st.update_global_average(&g)?;
                    b.0
                }
                Flavor::SaQite => {
                    st.update_momentum(&g, &b)?;
                    st.b_bar.clone()
                }
            };
            let g = if cfg.psd_projection {
                psd_abs(&st.g_bar)?
            } else {
                st.g_bar.clone()
            };
            Ok(solve(cfg.solver, &g, &b, cfg.delta)?.theta_dot)
        };
        let theta_dot = step(&mut st, &mut rng).map_err(|e| e.at_step(k))?;
        for (t, v) in theta.iter_mut().zip(theta_dot.iter()) {
            *t += cfg.eta * v;
        }
        rec.push(&theta, model.saqite_step(n_k, cfg.shots))?;
    }
    Ok(rec.log)
}

/// QN-SPSA: globally averaged QGT samples starting from the identity.
pub fn qnspsa_minimize(
    c: &Circuit,
    h: &PauliSum,
    theta0: &[f64],
    cfg: &OptimizerConfig,
    optimal: Option<&[usize]>,
) -> Result<IterateLog> {
    natural_gradient_minimize(c, h, theta0, cfg, optimal, Flavor::QnSpsa)
}

/// SA-QITE as a minimizer: exact start, QGT momentum `tau1`, gradient
/// momentum `tau2`, and `N_k` samples at iteration `k`.
pub fn saqite_minimize(
    c: &Circuit,
    h: &PauliSum,
    theta0: &[f64],
    cfg: &OptimizerConfig,
    optimal: Option<&[usize]>,
) -> Result<IterateLog> {
    natural_gradient_minimize(c, h, theta0, cfg, optimal, Flavor::SaQite)
}

/// Total weight of the basis states `optimal` in `s`.
pub fn p_optimal_indices(s: &StateVector, optimal: &[usize]) -> Result<f64> {
    if optimal.is_empty() {
        return Err(Error::InvalidArgument("optimal set is empty".into()));
    }
    optimal
        .iter()
        .map(|&k| {
            s.amplitudes()
                .get(k)
                .map(|a| a.norm_sqr())
                .ok_or_else(|| Error::Dimension(format!("basis index {k} out of range")))
        })
        .sum()
}

/// Like [`p_optimal_indices`] with bitstrings, most-significant qubit first.
pub fn p_optimal(s: &StateVector, optimal: &[String]) -> Result<f64> {
    let idx = optimal
        .iter()
        .map(|b| parse_bitstring(b, s.n_qubits()))
        .collect::<Result<Vec<_>>>()?;
    p_optimal_indices(s, &idx)
}

pub fn parse_bitstring(b: &str, n_qubits: usize) -> Result<usize> {
    if b.len() != n_qubits || !b.bytes().all(|c| c == b'0' || c == b'1') {
        return Err(Error::Dimension(format!("{b:?} is not a {n_qubits}-bit string")));
    }
    Ok(usize::from_str_radix(b, 2).expect("checked binary digits"))
}

pub fn format_bitstring(k: usize, n_qubits: usize) -> String {
    format!("{k:0n_qubits$b}")
}

/// Minimum of a diagonal Hamiltonian and every basis state attaining it
/// (within `1e-9` relative).
pub fn brute_force_minimizers(h: &PauliSum) -> Result<(f64, Vec<usize>)> {
    let diag = h.diagonal()?;
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min.abs().max(1.0);
    let arg = (0..diag.len()).filter(|&k| diag[k] <= min + tol).collect();
    Ok((min, arg))
}
