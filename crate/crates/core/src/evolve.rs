//! Imaginary-time drivers (VarQITE and SA-QITE), the normalized Taylor
//! reference, integrated infidelity and measurement accounting.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::backend::{expectation_exact, simulate, Estimator, NoiseModel, Shots, StateVector};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gradients::{qgt_and_gradient_exact, sample_batch, EstimatorState, EvoGrad, Qgt, SamplerConfig};
use crate::linsolve::{solve, SolverKind};
use crate::pauli::{group_commuting_bases, PauliSum};
use crate::rng::SimRng;

pub const CSV_VERSION: &str = "# saqite evolve v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionMode {
    VarQite,
    SaQite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub delta_t: f64,
    pub t_final: f64,
    pub solver: SolverKind,
    pub delta: f64,
    pub sampler: SamplerConfig,
    pub tau1: f64,
    pub tau2: f64,
    pub mode: EvolutionMode,
    pub seed: u64,
    /// Synthetic device noise applied to every sampled circuit.
    pub noise: Option<NoiseModel>,
}

impl EvolutionConfig {
    /// Exact VarQITE with the stable-subspace solver, `dt = 0.01`, `T = 1.5`.
    pub fn varqite(delta: f64, shots: Shots) -> Self {
        Self {
            delta_t: 0.01,
            t_final: 1.5,
            solver: SolverKind::StableSubspace,
            delta,
            sampler: SamplerConfig::new(1, shots),
            tau1: 0.0,
            tau2: 0.0,
            mode: EvolutionMode::VarQite,
            seed: 0,
            noise: None,
        }
    }

    pub fn saqite(delta: f64, n_samples: usize, shots: Shots, tau1: f64, tau2: f64) -> Self {
        Self {
            sampler: SamplerConfig::new(n_samples, shots),
            tau1,
            tau2,
            mode: EvolutionMode::SaQite,
            ..Self::varqite(delta, shots)
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.delta_t + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta_t must be positive, got {}",
                self.delta_t
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        self.sampler.validate()
    }
}

/// Circuit counts behind each measurement tally. Every circuit is charged
/// the configured shots, or one in exact mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub qgt_circuits_per_element: u64,
    pub grad_circuits_per_element: u64,
    pub spsa_fidelity_circuits_per_sample: u64,
    pub spsa_energy_evals_per_sample: u64,
    pub bases_per_energy: u64,
}

impl ResourceModel {
    pub fn new(bases_per_energy: usize) -> Self {
        Self {
            qgt_circuits_per_element: 1,
            grad_circuits_per_element: 2,
            spsa_fidelity_circuits_per_sample: 4,
            spsa_energy_evals_per_sample: 2,
            bases_per_energy: bases_per_energy as u64,
        }
    }

    pub fn for_hamiltonian(h: &PauliSum) -> Self {
        Self::new(group_commuting_bases(h).len())
    }

    pub fn varqite_step(&self, d: usize, shots: Shots) -> u64 {
        let d = d as u64;
        (d * (d + 1) / 2 * self.qgt_circuits_per_element
            + d * self.grad_circuits_per_element * self.bases_per_energy)
            * shots.charge()
    }

    pub fn saqite_step(&self, n_samples: usize, shots: Shots) -> u64 {
        n_samples as u64
            * (self.spsa_fidelity_circuits_per_sample
                + self.spsa_energy_evals_per_sample * self.bases_per_energy)
            * shots.charge()
    }

    /// Gradient-only SPSA samples.
    pub fn spsa_step(&self, n_samples: usize, shots: Shots) -> u64 {
        n_samples as u64 * self.spsa_energy_evals_per_sample * self.bases_per_energy * shots.charge()
    }
}

/// Per-step measurement cost of a run with these settings.
pub fn count_measurements(cfg: &EvolutionConfig, d: usize, model: &ResourceModel) -> u64 {
    match cfg.mode {
        EvolutionMode::VarQite => model.varqite_step(d, cfg.sampler.shots),
        EvolutionMode::SaQite => model.saqite_step(cfg.sampler.n_samples, cfg.sampler.shots),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    /// Noiseless energy of `phi(theta)` at every step.
    pub energies: Vec<f64>,
    pub fidelities_vs_reference: Option<Vec<f64>>,
    pub measurements_cumulative: Vec<u64>,
}

impl EvolutionResult {
    fn start(c: &Circuit, h: &PauliSum, theta0: &[f64]) -> Result<Self> {
        Ok(Self {
            times: vec![0.0],
            thetas: vec![theta0.to_vec()],
            energies: vec![exact_energy(c, h, theta0)?],
            fidelities_vs_reference: None,
            measurements_cumulative: vec![0],
        })
    }

    fn push(&mut self, c: &Circuit, h: &PauliSum, t: f64, theta: &[f64], cost: u64) -> Result<()> {
        let total = self.measurements_cumulative.last().copied().unwrap_or(0) + cost;
        self.times.push(t);
        self.thetas.push(theta.to_vec());
        self.energies.push(exact_energy(c, h, theta)?);
        self.measurements_cumulative.push(total);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_measurements(&self) -> u64 {
        self.measurements_cumulative.last().copied().unwrap_or(0)
    }

    /// Fills `fidelities_vs_reference` with `|<phi(theta_k)|psi(t_k)>|^2`.
    pub fn attach_reference(&mut self, c: &Circuit, reference: &ReferenceTrajectory) -> Result<()> {
        let fids = self
            .times
            .iter()
            .zip(&self.thetas)
            .map(|(&t, theta)| {
                let phi = simulate(&c.bind(theta)?, None, None)?;
                Ok(phi.fidelity(reference.state_at(t)?).min(1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        self.fidelities_vs_reference = Some(fids);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_VERSION}")?;
        writeln!(w, "t,energy,fidelity_vs_ref,n_measurements_cumulative")?;
        for k in 0..self.len() {
            let fid = self
                .fidelities_vs_reference
                .as_ref()
                .map(|f| f[k].to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{}",
                self.times[k], self.energies[k], fid, self.measurements_cumulative[k]
            )?;
        }
        Ok(())
    }

    pub fn params_json(&self) -> serde_json::Value {
        serde_json::json!({ "times": self.times, "thetas": self.thetas })
    }
}

fn exact_energy(c: &Circuit, h: &PauliSum, theta: &[f64]) -> Result<f64> {
    expectation_exact(&simulate(&c.bind(theta)?, None, None)?, h)
}

fn euler(theta: &mut [f64], theta_dot: &DVector<f64>, dt: f64) {
    for (t, v) in theta.iter_mut().zip(theta_dot.iter()) {
        *t += dt * v;
    }
}

/// Adds the shot noise of an `m`-shot Hadamard-test estimate to each QGT
/// entry. Entries are read as `x = 4 g_ij` in `[-1, 1]`.
fn shot_noised_qgt(g: &Qgt, m: u64, rng: &mut SimRng) -> Qgt {
    let d = g.dim();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x = (4.0 * g.0[(i, j)]).clamp(-1.0, 1.0);
            let k = Binomial::new(m, 0.5 * (1.0 + x))
                .expect("valid probability")
                .sample(rng);
            let v = 0.25 * (2.0 * k as f64 / m as f64 - 1.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Qgt(out)
}

/// `-dE/(2 dtheta)` by the two-term shift rule on sampled energies.
fn parameter_shift_gradient(est: &Estimator, theta: &[f64], rng: &mut SimRng) -> Result<EvoGrad> {
    if !est.circuit().has_simple_parameters() {
        return Err(Error::UnsupportedGradient(
            "parameter shift needs one unit-scale rotation per parameter".into(),
        ));
    }
    let mut b = DVector::zeros(theta.len());
    let mut w = theta.to_vec();
    for i in 0..theta.len() {
        w[i] = theta[i] + FRAC_PI_2;
        let plus = est.energy(&w, rng)?;
        w[i] = theta[i] - FRAC_PI_2;
        let minus = est.energy(&w, rng)?;
        w[i] = theta[i];
        b[i] = -0.25 * (plus - minus);
    }
    Ok(EvoGrad(b))
}

/// The McLachlan system `(g, b)` at `theta` as VarQITE measures it.
fn varqite_system(est: &Estimator, theta: &[f64], rng: &mut SimRng) -> Result<(Qgt, EvoGrad)> {
    let (g, b) = qgt_and_gradient_exact(est.circuit(), theta, est.hamiltonian())?;
    match (est.shots(), est.noise()) {
        (Shots::Exact, None) => Ok((g, b)),
        (shots, _) => {
            let g = match shots {
                Shots::Exact => g,
                Shots::Finite(m) => shot_noised_qgt(&g, m, rng),
            };
            Ok((g, parameter_shift_gradient(est, theta, rng)?))
        }
    }
}

/// One exact VarQITE Euler step.
pub fn varqite_step(
    c: &Circuit,
    h: &PauliSum,
    theta: &[f64],
    delta_t: f64,
    solver: SolverKind,
    delta: f64,
) -> Result<Vec<f64>> {
    let (g, b) = qgt_and_gradient_exact(c, theta, h)?;
    let rep = solve(solver, &g.0, &b.0, delta)?;
    let mut next = theta.to_vec();
    euler(&mut next, &rep.theta_dot, delta_t);
    Ok(next)
}

pub fn varqite(c: &Circuit, theta0: &[f64], h: &PauliSum, cfg: &EvolutionConfig) -> Result<EvolutionResult> {
    if cfg.mode != EvolutionMode::VarQite {
        return Err(Error::InvalidArgument("config is not in varqite mode".into()));
    }
    run(c, theta0, h, cfg)
}

pub fn saqite(c: &Circuit, theta0: &[f64], h: &PauliSum, cfg: &EvolutionConfig) -> Result<EvolutionResult> {
    if cfg.mode != EvolutionMode::SaQite {
        return Err(Error::InvalidArgument("config is not in saqite mode".into()));
    }
    run(c, theta0, h, cfg)
}

/// Dispatches on `cfg.mode`.
pub fn run(c: &Circuit, theta0: &[f64], h: &PauliSum, cfg: &EvolutionConfig) -> Result<EvolutionResult> {
    cfg.validate()?;
    c.check_arity(theta0)?;
    let est = Estimator::new(c, h, cfg.sampler.shots, cfg.noise.clone())?;
    let model = ResourceModel::new(est.bases_per_energy());
    let step_cost = count_measurements(cfg, c.n_params(), &model);
    let mut rng = SimRng::new(cfg.seed);
    let mut theta = theta0.to_vec();
    let mut out = EvolutionResult::start(c, h, theta0)?;

    let mut state = match cfg.mode {
        EvolutionMode::VarQite => None,
        EvolutionMode::SaQite => {
            let (g0, b0) = qgt_and_gradient_exact(c, theta0, h)?;
            Some(EstimatorState::momentum(g0, b0, cfg.tau1, cfg.tau2)?)
        }
    };

    for k in 1..=cfg.n_steps() {
        let mut step = || -> Result<DVector<f64>> {
            let (g, b) = match state.as_mut() {
                None => {
                    let (g, b) = varqite_system(&est, &theta, &mut rng)?;
                    (g.0, b.0)
                }
                Some(st) => {
                    let (g, b) = sample_batch(&est, &theta, &cfg.sampler, &mut rng)?;
                    st.update_momentum(&g, &b)?;
                    (st.g_bar.clone(), st.b_bar.clone())
                }
            };
            Ok(solve(cfg.solver, &g, &b, cfg.delta)?.theta_dot)
        };
        let theta_dot = step().map_err(|e| e.at_step(k))?;
        euler(&mut theta, &theta_dot, cfg.delta_t);
        out.push(c, h, k as f64 * cfg.delta_t, &theta, step_cost)?;
    }
    Ok(out)
}

/// States of the normalized first-order Taylor evolution on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub delta_t: f64,
    pub states: Vec<StateVector>,
}

impl ReferenceTrajectory {
    /// Reference state on the grid point nearest to `t`.
    pub fn state_at(&self, t: f64) -> Result<&StateVector> {
        let k = (t / self.delta_t).round();
        let off = (t - k * self.delta_t).abs();
        if k < 0.0 || off > 1e-6 * self.delta_t {
            return Err(Error::Dimension(format!(
                "t = {t} is off the reference grid of spacing {}",
                self.delta_t
            )));
        }
        self.states
            .get(k as usize)
            .ok_or_else(|| Error::Dimension(format!("t = {t} is past the end of the reference")))
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| k as f64 * self.delta_t).collect()
    }

    pub fn energies(&self, h: &PauliSum) -> Result<Vec<f64>> {
        self.states.iter().map(|s| expectation_exact(s, h)).collect()
    }
}

/// `psi <- (I - dt H) psi / ||.||` from `psi0` up to `t_final`.
pub fn reference_taylor(
    h: &PauliSum,
    psi0: &StateVector,
    delta_t: f64,
    t_final: f64,
) -> Result<ReferenceTrajectory> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta_t must be positive, got {delta_t}"
        )));
    }
    if h.n_qubits() != psi0.n_qubits() {
        return Err(Error::Dimension(format!(
            "hamiltonian has {} qubits, state {}",
            h.n_qubits(),
            psi0.n_qubits()
        )));
    }
    let n_steps = (t_final / delta_t).round() as usize;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut psi = psi0.clone();
    psi.normalize();
    states.push(psi.clone());
    let mut h_psi = vec![Complex64::new(0.0, 0.0); psi.dim()];
    for k in 1..=n_steps {
        h.apply(psi.amplitudes(), &mut h_psi);
        for (a, hp) in psi.amplitudes_mut().iter_mut().zip(&h_psi) {
            *a -= hp * delta_t;
        }
        let norm = psi.normalize();
        if !(norm > 1e-12 && norm.is_finite()) {
            return Err(
                Error::InvalidArgument(format!("Taylor step norm {norm:e}; delta_t too large")).at_step(k),
            );
        }
        states.push(psi.clone());
    }
    Ok(ReferenceTrajectory { delta_t, states })
}

/// `(1/T) int_0^T (1 - F(t)) dt` by the trapezoid rule over the run's grid.
pub fn integrated_infidelity(result: &EvolutionResult, t_final: f64) -> Result<f64> {
    let fids = result
        .fidelities_vs_reference
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no reference fidelities attached".into()))?;
    if !(t_final > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_final must be positive, got {t_final}"
        )));
    }
    let last = result.times.last().copied().unwrap_or(0.0);
    if (last - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::Dimension(format!(
            "run ends at t = {last}, expected {t_final}"
        )));
    }
    let area: f64 = result
        .times
        .windows(2)
        .zip(fids.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * ((1.0 - f[0]) + (1.0 - f[1])))
        .sum();
    Ok(area / t_final)
}
