//! Per-seed experiment runners and the aggregate writer.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use saqite_core::backend::{expectation_exact, simulate, Estimator, NoiseModel, Shots};
use saqite_core::circuit::{build_hea, build_qaoa, chain_edges, Circuit};
use saqite_core::evolve::{
    integrated_infidelity, reference_taylor, run as evolve_run, EvolutionConfig, EvolutionMode,
    EvolutionResult,
};
use saqite_core::gradients::{qgt_and_gradient_exact, sample_batch, sampling_error, SamplerConfig};
use saqite_core::linsolve::SolverKind;
use saqite_core::mitigate::{mitigated_energy, CalibrationSet};
use saqite_core::optimize::{
    brute_force_minimizers, qnspsa_minimize, saqite_minimize, spsa_minimize, OptimizerConfig,
};
use saqite_core::pauli::{build_ising_graph, build_maxcut_circle, PauliSum};
use saqite_core::SimRng;

use crate::config::{
    EvolveBlock, EvolveMode, Experiment, ExperimentConfig, LoadedConfig, MitigateState, ModelConfig,
    OptimizeBlock, OptimizerKind, ResourceRow, ResourcesBlock,
};

pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const SAMPLE_ERROR_CSV_VERSION: &str = "# saqite sample-error v1";
pub const MITIGATE_CSV_VERSION: &str = "# saqite mitigate v1";

/// QAOA start used when `theta0` is not given: small angles off the
/// `|+>^n` point, alternating gamma and beta.
const QAOA_GAMMA0: f64 = 1e-3;
const QAOA_BETA0: f64 = 1e-2;

pub fn hea_layers(n: usize) -> usize {
    (n as f64).ln().ceil().max(1.0) as usize
}

fn hea_for(n: usize, layers: Option<usize>, edges: &[(usize, usize)]) -> saqite_core::Result<Circuit> {
    build_hea(n, layers.unwrap_or_else(|| hea_layers(n)), edges)
}

fn ising(
    n: usize,
    j: f64,
    h: f64,
    edges: &Option<Vec<[usize; 2]>>,
) -> saqite_core::Result<(Vec<(usize, usize)>, PauliSum)> {
    let edges = match edges {
        Some(e) => e.iter().map(|&[a, b]| (a, b)).collect(),
        None => chain_edges(n),
    };
    let ham = build_ising_graph(&edges, n, j, h)?;
    Ok((edges, ham))
}

/// Ansatz and Hamiltonian for the model section.
pub fn build_model(cfg: &ExperimentConfig) -> saqite_core::Result<(Circuit, PauliSum)> {
    match &cfg.model {
        ModelConfig::Ising { n, j, h, edges } => {
            let (edges, ham) = ising(*n, *j, *h, edges)?;
            Ok((hea_for(*n, cfg.ansatz.layers, &edges)?, ham))
        }
        ModelConfig::MaxcutCircle { n, w1, w2 } => {
            let ham = build_maxcut_circle(*n, *w1, *w2)?;
            Ok((build_qaoa(&ham, cfg.ansatz.reps.unwrap_or(2))?, ham))
        }
    }
}

pub fn theta0(cfg: &ExperimentConfig, c: &Circuit) -> Vec<f64> {
    if let Some(t) = &cfg.ansatz.theta0 {
        return t.clone();
    }
    match cfg.model {
        ModelConfig::Ising { .. } => vec![0.0; c.n_params()],
        ModelConfig::MaxcutCircle { .. } => (0..c.n_params())
            .map(|k| if k % 2 == 0 { QAOA_GAMMA0 } else { QAOA_BETA0 })
            .collect(),
    }
}

pub fn evolution_config(b: &EvolveBlock, noise: Option<NoiseModel>, seed: u64) -> EvolutionConfig {
    let shots = b.shots.shots();
    let mut cfg = match b.mode {
        EvolveMode::Varqite => EvolutionConfig::varqite(b.delta, shots),
        EvolveMode::Saqite => EvolutionConfig::saqite(b.delta, b.n_samples, shots, b.tau1, b.tau2),
    };
    cfg.delta_t = b.delta_t;
    cfg.t_final = b.t_final;
    cfg.solver = b.solver;
    if let Some(e) = b.epsilon {
        cfg.sampler.epsilon = e;
    }
    cfg.noise = noise;
    cfg.seed = seed;
    cfg
}

pub fn optimizer_config(o: &OptimizeBlock, seed: u64) -> OptimizerConfig {
    let mut cfg = OptimizerConfig::maxcut(o.eta);
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { cfg.$f = v; } )* };
    }
    take!(
        epsilon,
        max_iters,
        n0,
        decay,
        tau1,
        tau2,
        delta,
        solver,
        psd_projection
    );
    if let Some(s) = o.shots {
        cfg.shots = s.shots();
    }
    cfg.budget = o.budget;
    cfg.stop_at_p_optimal = o.stop_at_p_optimal;
    cfg.seed = seed;
    cfg
}

/// VarQITE and SA-QITE settings for one resources row.
pub fn resource_configs(
    r: &ResourcesBlock,
    row: &ResourceRow,
    seed: u64,
    exact: bool,
) -> [EvolutionConfig; 2] {
    let shots = |m: u64| if exact { Shots::Exact } else { Shots::Finite(m) };
    let mut var = EvolutionConfig::varqite(r.delta, shots(row.varqite_shots));
    let mut sa = EvolutionConfig::saqite(r.delta, row.n_samples, shots(row.saqite_shots), r.tau1, row.tau2);
    if let Some(e) = r.epsilon {
        sa.sampler.epsilon = e;
    }
    for cfg in [&mut var, &mut sa] {
        cfg.delta_t = r.delta_t;
        cfg.t_final = r.t_final;
        cfg.solver = r.solver;
        cfg.seed = seed;
    }
    [var, sa]
}

/// Metrics and files of one seed. Non-finite metrics mean "not reached".
#[derive(Debug, Clone)]
pub struct SeedOutput {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl SeedOutput {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            metrics: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn file(&mut self, name: String, body: Vec<u8>) {
        self.files.push((name, body));
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: BTreeMap<String, Option<f64>>,
}

/// `aggregate.json`. Means and standard deviations skip missing values;
/// `std` is the sample deviation, zero for a single value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub experiment: Experiment,
    pub params: serde_json::Value,
    pub per_seed: Vec<SeedRecord>,
    pub mean: BTreeMap<String, Option<f64>>,
    pub std: BTreeMap<String, Option<f64>>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn aggregate(cfg: &ExperimentConfig, outputs: &[SeedOutput]) -> Result<Aggregate> {
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    let keys: Vec<&String> = outputs
        .first()
        .map(|o| o.metrics.keys().collect())
        .unwrap_or_default();
    for key in keys {
        let vals: Vec<f64> = outputs
            .iter()
            .filter_map(|o| o.metrics.get(key).copied().and_then(finite))
            .collect();
        let (m, s) = mean_std(&vals);
        mean.insert(key.clone(), m);
        std.insert(key.clone(), s);
    }
    Ok(Aggregate {
        experiment: cfg.experiment,
        params: serde_json::to_value(cfg)?,
        per_seed: outputs
            .iter()
            .map(|o| SeedRecord {
                seed: o.seed,
                metrics: o.metrics.iter().map(|(k, &v)| (k.clone(), finite(v))).collect(),
            })
            .collect(),
        mean,
        std,
    })
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(m), Some(s))
}

/// Runs every seed, then writes the per-seed files and `aggregate.json`.
/// Nothing is written if any seed fails.
pub fn run(loaded: &LoadedConfig, exact: bool) -> Result<Aggregate> {
    let cfg = &loaded.config;
    let out_dir = cfg.output_dir.as_deref().context("no output directory")?;
    let outputs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed, exact).with_context(|| format!("seed {seed}")))
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(cfg, &outputs)?;
    write_outputs(out_dir, &outputs, &agg)?;
    Ok(agg)
}

fn write_outputs(dir: &Path, outputs: &[SeedOutput], agg: &Aggregate) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for o in outputs {
        for (name, body) in &o.files {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let path = dir.join(AGGREGATE_FILE);
    let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, agg)?;
    writeln!(f)?;
    Ok(())
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, exact: bool) -> Result<SeedOutput> {
    match cfg.experiment {
        Experiment::Evolve => evolve_seed(cfg, seed),
        Experiment::RegularizeCompare => regularize_seed(cfg, seed),
        Experiment::Optimize => optimize_seed(cfg, seed),
        Experiment::SampleError => sample_error_seed(cfg, seed),
        Experiment::Mitigate => mitigate_seed(cfg, seed),
        Experiment::Resources => resources_seed(cfg, seed, exact),
    }
}

fn noise_model(cfg: &ExperimentConfig) -> Result<Option<NoiseModel>> {
    Ok(cfg.noise.as_ref().map(|nc| nc.model(cfg.model.n())).transpose()?)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Runs one trajectory against the Taylor reference from `phi(theta0)`.
fn trajectory(
    c: &Circuit,
    h: &PauliSum,
    theta0: &[f64],
    cfg: &EvolutionConfig,
    reference_dt: f64,
) -> Result<(EvolutionResult, f64)> {
    let psi0 = simulate(&c.bind(theta0)?, None, None)?;
    let reference = reference_taylor(h, &psi0, reference_dt, cfg.t_final)?;
    let mut res = evolve_run(c, theta0, h, cfg)?;
    res.attach_reference(c, &reference)?;
    let infid = integrated_infidelity(&res, cfg.t_final)?;
    Ok((res, infid))
}

fn record_trajectory(out: &mut SeedOutput, stem: &str, res: &EvolutionResult) -> Result<()> {
    out.file(format!("{stem}.csv"), csv_bytes(|w| res.write_csv(w))?);
    out.file(
        format!("{stem}_params.json"),
        serde_json::to_vec_pretty(&res.params_json())?,
    );
    Ok(())
}

fn evolve_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let b = cfg.evolve.as_ref().context("missing [evolve]")?;
    let (c, h) = build_model(cfg)?;
    let theta0 = theta0(cfg, &c);
    let ecfg = evolution_config(b, noise_model(cfg)?, seed);
    let (res, infid) = trajectory(&c, &h, &theta0, &ecfg, b.reference_dt)?;
    let mut out = SeedOutput::new(seed);
    out.metric("integrated_infidelity", infid);
    out.metric("n_total", res.total_measurements() as f64);
    out.metric(
        "final_energy",
        *res.energies.last().expect("non-empty trajectory"),
    );
    out.metric(
        "final_fidelity",
        res.fidelities_vs_reference
            .as_ref()
            .and_then(|f| f.last().copied())
            .unwrap_or(f64::NAN),
    );
    record_trajectory(&mut out, &format!("seed_{seed}"), &res)?;
    Ok(out)
}

fn solver_name(s: SolverKind) -> &'static str {
    match s {
        SolverKind::DiagShift => "diag_shift",
        SolverKind::StableSubspace => "stable_subspace",
    }
}

fn regularize_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let b = cfg.evolve.as_ref().context("missing [evolve]")?;
    let solvers = &cfg
        .regularize_compare
        .as_ref()
        .context("missing [regularize_compare]")?
        .solvers;
    let (c, h) = build_model(cfg)?;
    let theta0 = theta0(cfg, &c);
    let mut out = SeedOutput::new(seed);
    for &solver in solvers {
        let mut ecfg = evolution_config(b, noise_model(cfg)?, seed);
        ecfg.solver = solver;
        let (res, infid) = trajectory(&c, &h, &theta0, &ecfg, b.reference_dt)?;
        let name = solver_name(solver);
        out.metric(format!("integrated_infidelity_{name}"), infid);
        out.metric(
            format!("final_energy_{name}"),
            *res.energies.last().expect("non-empty trajectory"),
        );
        record_trajectory(&mut out, &format!("seed_{seed}_{name}"), &res)?;
    }
    Ok(out)
}

fn optimize_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let o = cfg.optimize.as_ref().context("missing [optimize]")?;
    let (c, h) = build_model(cfg)?;
    let theta0 = theta0(cfg, &c);
    let (ground, optimal) = brute_force_minimizers(&h)?;
    let ocfg = optimizer_config(o, seed);
    let log = match o.method {
        OptimizerKind::Spsa => spsa_minimize(&c, &h, &theta0, &ocfg, Some(&optimal)),
        OptimizerKind::Qnspsa => qnspsa_minimize(&c, &h, &theta0, &ocfg, Some(&optimal)),
        OptimizerKind::Saqite => saqite_minimize(&c, &h, &theta0, &ocfg, Some(&optimal)),
    }?;
    let mut out = SeedOutput::new(seed);
    out.metric("ground_energy", ground);
    out.metric(
        "final_energy",
        *log.energies.last().expect("log starts with theta0"),
    );
    out.metric(
        "final_p_optimal",
        *log.p_optimal.last().expect("optimal set given"),
    );
    out.metric("n_total", log.total_measurements() as f64);
    out.metric("iterations", (log.len() - 1) as f64);
    for &level in &o.milestones {
        let m = log
            .measurements_to_reach(level)
            .map_or(f64::INFINITY, |m| m as f64);
        out.metric(format!("measurements_to_p_optimal_{level}"), m);
    }
    out.file(format!("seed_{seed}.csv"), csv_bytes(|w| log.write_csv(w))?);
    Ok(out)
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn sample_error_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let s = cfg.sample_error.as_ref().context("missing [sample_error]")?;
    let (c, h) = build_model(cfg)?;
    let theta = theta0(cfg, &c);
    let shots = s.shots.shots();
    let est = Estimator::new(&c, &h, shots, noise_model(cfg)?)?;
    let (g, b) = qgt_and_gradient_exact(&c, &theta, &h)?;
    let epsilon = s.epsilon.unwrap_or_else(|| SamplerConfig::new(1, shots).epsilon);
    let d = theta.len();
    let mut rng = SimRng::new(seed);
    let (mut gsum, mut bsum) = (DMatrix::zeros(d, d), DVector::zeros(d));
    let mut rows = Vec::with_capacity(s.sizes.len());
    let mut done = 0;
    // one stream of samples, errors of the running average at each size
    for &n in &s.sizes {
        let batch = SamplerConfig {
            epsilon,
            n_samples: n - done,
            shots,
        };
        let (gs, bs) = sample_batch(&est, &theta, &batch, &mut rng)?;
        gsum += gs.0 * batch.n_samples as f64;
        bsum += bs.0 * batch.n_samples as f64;
        done = n;
        let eg = sampling_error(&(&gsum / n as f64), &g.0)?;
        let eb = sampling_error(&(&bsum / n as f64), &b.0)?;
        rows.push((n, eg, eb));
    }
    let mut out = SeedOutput::new(seed);
    let last = rows.last().expect("sizes validated non-empty");
    out.metric("err_g_final", last.1);
    out.metric("err_b_final", last.2);
    if rows.len() > 1 {
        let ns: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        out.metric(
            "slope_g",
            log_slope(&ns, &rows.iter().map(|r| r.1).collect::<Vec<_>>()),
        );
        out.metric(
            "slope_b",
            log_slope(&ns, &rows.iter().map(|r| r.2).collect::<Vec<_>>()),
        );
    }
    out.file(
        format!("seed_{seed}.csv"),
        csv_bytes(|w| {
            writeln!(w, "{SAMPLE_ERROR_CSV_VERSION}")?;
            writeln!(w, "N,err_g,err_b")?;
            for (n, eg, eb) in &rows {
                writeln!(w, "{n},{eg},{eb}")?;
            }
            Ok(())
        })?,
    );
    Ok(out)
}

fn mitigate_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let m = cfg.mitigate.as_ref().context("missing [mitigate]")?;
    let noise = noise_model(cfg)?.context("missing [noise]")?;
    let (c, h) = build_model(cfg)?;
    let start = theta0(cfg, &c);
    let theta = match m.state {
        MitigateState::Initial => start,
        MitigateState::Evolved => {
            let mut ecfg = EvolutionConfig::varqite(m.delta, Shots::Exact);
            ecfg.t_final = m.t_final;
            evolve_run(&c, &start, &h, &ecfg)?
                .thetas
                .pop()
                .expect("non-empty trajectory")
        }
    };
    let bound = c.bind(&theta)?;
    let exact = expectation_exact(&simulate(&bound, None, None)?, &h)?;
    let calib = CalibrationSet::from_noise(&noise, c.n_qubits());
    let rep = mitigated_energy(&bound, &h, &noise, &m.zne(), &calib, &mut SimRng::new(seed))?;
    let mut out = SeedOutput::new(seed);
    out.metric("exact_energy", exact);
    out.metric("unmitigated_energy", rep.energies[0]);
    out.metric("mitigated_energy", rep.e0);
    out.metric("abs_error_unmitigated", (rep.energies[0] - exact).abs());
    out.metric("abs_error_mitigated", (rep.e0 - exact).abs());
    out.metric("fit_fallback", if rep.fit.fallback { 1.0 } else { 0.0 });
    out.file(
        format!("seed_{seed}.csv"),
        csv_bytes(|w| {
            writeln!(w, "{MITIGATE_CSV_VERSION}")?;
            writeln!(w, "zeta,energy")?;
            for (z, e) in rep.fold_levels.iter().zip(&rep.energies) {
                writeln!(w, "{z},{e}")?;
            }
            Ok(())
        })?,
    );
    out.file(
        format!("seed_{seed}_report.json"),
        serde_json::to_vec_pretty(&rep.to_json())?,
    );
    Ok(out)
}

fn resources_seed(cfg: &ExperimentConfig, seed: u64, exact: bool) -> Result<SeedOutput> {
    let r = cfg.resources.as_ref().context("missing [resources]")?;
    let ModelConfig::Ising { j, h, .. } = cfg.model else {
        anyhow::bail!("resources needs an ising model");
    };
    let mut out = SeedOutput::new(seed);
    for row in &r.rows {
        let (edges, ham) = ising(row.n, j, h, &None)?;
        let c = hea_for(row.n, cfg.ansatz.layers, &edges)?;
        let theta0 = vec![0.0; c.n_params()];
        let mut totals = [0.0; 2];
        for (k, ecfg) in resource_configs(r, row, seed, exact).iter().enumerate() {
            let (res, infid) = trajectory(&c, &ham, &theta0, ecfg, r.reference_dt)?;
            let method = match ecfg.mode {
                EvolutionMode::VarQite => "varqite",
                EvolutionMode::SaQite => "saqite",
            };
            totals[k] = res.total_measurements() as f64;
            out.metric(format!("n{}_{method}_infidelity", row.n), infid);
            out.metric(format!("n{}_{method}_n_total", row.n), totals[k]);
            record_trajectory(&mut out, &format!("seed_{seed}_n{}_{method}", row.n), &res)?;
        }
        out.metric(format!("n{}_ratio", row.n), totals[1] / totals[0]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_samples() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((s.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (Some(7.0), Some(0.0)));
        assert_eq!(mean_std(&[]), (None, None));
    }

    #[test]
    fn log_slope_of_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn hea_layers_match_log_rule() {
        assert_eq!(hea_layers(4), 2);
        assert_eq!(hea_layers(6), 2);
        assert_eq!(hea_layers(8), 3);
        assert_eq!(hea_layers(1), 1);
    }
}
