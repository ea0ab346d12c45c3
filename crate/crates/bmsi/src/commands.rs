//! The CLI subcommands as library functions. Each returns a one-line summary.

use std::fs;
use std::path::{Path, PathBuf};

use bmsi_core::dictionary::EdgeIndex;
use bmsi_core::experiment::{self, NetworkInference, TrialMetrics};
use bmsi_core::metronome;
use bmsi_core::oscillator::{simulate_network, NetworkGroundTruth, SimConfig, TrajectoryMeta};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind, NetworkSpec};
use crate::exec::RayonExecutor;
use crate::formats::{self, num, Provenance};
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn prepare(cfg: &mut ExperimentConfig, opts: &RunOptions) -> Result<(PathBuf, Provenance, RayonExecutor), CliError> {
    if let Some(seed) = opts.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    let dir = opts.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let exec = RayonExecutor::new(opts.threads)?;
    Ok((dir, Provenance::new(cfg), exec))
}

fn require_network(cfg: &ExperimentConfig) -> Result<(NetworkGroundTruth, SimConfig), CliError> {
    if cfg.kind == Kind::MetronomeInfer {
        return Err(CliError::config("this command needs an oscillator network config, not kind \"metronome_infer\""));
    }
    cfg.network_setup()
}

fn write_truth(dir: &Path, prov: &Provenance, truth: &NetworkGroundTruth, sim: &SimConfig) -> Result<(), CliError> {
    let body = json!({ "network": NetworkSpec::from_truth(truth), "sim": sim });
    formats::write_json(&dir.join("truth.json"), prov, body)
}

pub fn simulate(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<String, CliError> {
    let (dir, prov, _) = prepare(&mut cfg, opts)?;
    let (truth, sim) = require_network(&cfg)?;
    let traj = simulate_network(&truth, &sim)?;
    formats::write_trajectory(&dir.join("trajectory.csv"), &prov, &traj)?;
    write_truth(&dir, &prov, &truth, &sim)?;
    Ok(format!("simulated {} nodes x {} samples into {}", traj.n_nodes(), traj.n_samples(), dir.display()))
}

fn edge_names(idx: &EdgeIndex, bits: &[bool]) -> Vec<String> {
    idx.edges
        .iter()
        .zip(bits)
        .filter(|(_, &b)| b)
        .map(|(e, _)| {
            let mut s = format!("{}:{},{}", formats::kind_name(e.kind), e.i + 1, e.j + 1);
            if let Some(k) = e.k {
                s.push_str(&format!(",{}", k + 1));
            }
            s
        })
        .collect()
}

fn metrics_json(inf: &NetworkInference, m: Option<&TrialMetrics>) -> Value {
    let idx = EdgeIndex::new(inf.problem.model.layout.n_nodes());
    let s = &inf.estimate.structure;
    let mut v = json!({
        "edges_hat": edge_names(&idx, &s.edges),
        "d_hat": s.d.iter().map(|d| d.iter().map(|&b| b as u8).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "l2_hat": s.l2,
        "l3_hat": s.l3,
        "sigma_hat": inf.estimate.sigma_hat,
    });
    if let Some(m) = m {
        v["e_c"] = json!(m.e_c);
        v["e_c_edges"] = json!(m.e_c_edges);
        v["e_theta"] = json!(m.e_theta);
        v["exact"] = json!(m.exact);
    }
    v
}

fn write_inference(dir: &Path, prov: &Provenance, inf: &NetworkInference, m: Option<&TrialMetrics>, samples: bool) -> Result<(), CliError> {
    let layout = &inf.problem.model.layout;
    formats::write_inclusion(dir, prov, &inf.inclusion, layout.n_nodes())?;
    let active = layout.effective_indicators(&inf.estimate.structure);
    formats::write_theta(&dir.join("theta_hat.csv"), prov, &inf.problem.dicts, &active, &inf.estimate.theta)?;
    formats::write_json(&dir.join("dictionary.json"), prov, formats::dictionary_json(&inf.problem.dicts))?;
    formats::write_json(
        &dir.join("diagnostics.json"),
        prov,
        formats::diagnostics_json(&inf.samples, layout, &inf.estimate.sigma_hat),
    )?;
    formats::write_json(&dir.join("metrics.json"), prov, metrics_json(inf, m))?;
    if samples {
        formats::write_samples(&dir.join("samples.ndjson"), prov, &inf.samples)?;
    }
    Ok(())
}

fn summary(inf: &NetworkInference, m: &TrialMetrics) -> String {
    let s = &inf.estimate.structure;
    format!(
        "E_c = {:.4}, E_theta = {:.4}, exact = {}, l2 = {}, l3 = {}",
        m.e_c, m.e_theta, m.exact, s.l2, s.l3
    )
}

pub fn infer(mut cfg: ExperimentConfig, trajectory: &Path, opts: &RunOptions) -> Result<String, CliError> {
    let (dir, prov, exec) = prepare(&mut cfg, opts)?;
    let (truth, sim) = require_network(&cfg)?;
    let meta = TrajectoryMeta { seed: sim.seed, sigma_d: sim.sigma_d, sigma_o: sim.sigma_o };
    let traj = formats::read_trajectory(trajectory, sim.dt, meta)?;
    if traj.n_nodes() != truth.n_nodes {
        return Err(CliError::config(format!(
            "{}: {} phase columns but the config has {} nodes",
            trajectory.display(),
            traj.n_nodes(),
            truth.n_nodes
        )));
    }
    let inf = experiment::infer_network(&traj, &cfg.inference, &exec)?;
    let m = experiment::evaluate(&truth, &inf)?;
    write_inference(&dir, &prov, &inf, Some(&m), cfg.write_samples)?;
    Ok(summary(&inf, &m))
}

/// Simulates, infers and scores reference configuration `id`. `base` supplies
/// inference settings; its network sections are ignored.
pub fn reproduce(id: u8, base: Option<ExperimentConfig>, opts: &RunOptions) -> Result<String, CliError> {
    let mut cfg = base.unwrap_or_else(|| ExperimentConfig::new(Kind::OscillatorInfer));
    cfg.kind = Kind::OscillatorInfer;
    cfg.preset = Some(id);
    cfg.network = None;
    cfg.sim = None;
    experiment::preset(id, 0).map_err(|e| CliError::config(e.to_string()))?;
    let (dir, prov, exec) = prepare(&mut cfg, opts)?;
    let (truth, sim) = cfg.network_setup()?;
    let traj = simulate_network(&truth, &sim)?;
    formats::write_trajectory(&dir.join("trajectory.csv"), &prov, &traj)?;
    write_truth(&dir, &prov, &truth, &sim)?;
    let inf = experiment::infer_network(&traj, &cfg.inference, &exec)?;
    let m = experiment::evaluate(&truth, &inf)?;
    write_inference(&dir, &prov, &inf, Some(&m), cfg.write_samples)?;
    Ok(format!("configuration {id}: {}", summary(&inf, &m)))
}

pub fn sweep(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<String, CliError> {
    let (dir, prov, exec) = prepare(&mut cfg, opts)?;
    let spec = cfg.sweep.clone().ok_or_else(|| CliError::config("missing field `sweep`"))?;
    let (truth, sim) = require_network(&cfg)?;
    let points = experiment::sweep(&truth, &sim, &cfg.inference, spec.axis, &spec.values, spec.repeats, sim.seed, &exec)?;
    let axis = spec.axis.name();
    let header = [axis, "runs", "failures", "e_c_mean", "e_c_stderr", "e_theta_mean", "e_theta_stderr", "exact_fraction"];
    let rows = points.iter().map(|p| {
        vec![
            num(p.value),
            p.e_c.n.to_string(),
            p.failures().to_string(),
            num(p.e_c.mean),
            num(p.e_c.stderr),
            num(p.e_theta.mean),
            num(p.e_theta.stderr),
            num(p.exact_fraction),
        ]
    });
    formats::write_csv(&dir.join("sweep.csv"), &prov, &header, rows)?;
    let rows = points.iter().flat_map(|p| {
        p.runs.iter().map(move |r| {
            let mut row = vec![num(p.value), r.seed.to_string()];
            match &r.outcome {
                Ok(m) => row.extend([num(m.e_c), num(m.e_c_edges), num(m.e_theta), m.exact.to_string(), String::new()]),
                Err(e) => row.extend([String::new(), String::new(), String::new(), String::new(), e.clone()]),
            }
            row
        })
    });
    formats::write_csv(&dir.join("sweep_runs.csv"), &prov, &[axis, "seed", "e_c", "e_c_edges", "e_theta", "exact", "error"], rows)?;
    let failed: usize = points.iter().map(|p| p.failures()).sum();
    Ok(format!("{} grid points x {} repeats over {axis}; {failed} failed runs", points.len(), spec.repeats))
}

pub fn metronome(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<String, CliError> {
    if cfg.kind != Kind::MetronomeInfer {
        return Err(CliError::config("the metronome command needs kind \"metronome_infer\""));
    }
    let (dir, prov, exec) = prepare(&mut cfg, opts)?;
    let spec = cfg.metronome.clone().unwrap_or_default();
    let study = experiment::metronome_study(&spec.mechanics, &spec.windows, spec.l_max, &cfg.inference, &exec)?;
    let ph = &study.phases;
    let rows = (0..ph.len()).map(|m| vec![num(m as f64 * ph.dt), num(ph.theta[0][m]), num(ph.theta[1][m]), num(ph.psi[m])]);
    formats::write_csv(&dir.join("phase.csv"), &prov, &["t", "theta1", "theta2", "psi"], rows)?;
    let cols = metronome::psi_columns(spec.l_max);
    let label = |(l, t): &(u8, bmsi_core::dictionary::Trig)| format!("{}({l}*psi)", formats::trig_name(*t));
    for w in &study.windows {
        let rows = cols.iter().zip(&w.inclusion.edges).zip(&w.estimate.theta[0]).map(|((c, p), th)| vec![label(c), num(*p), num(*th)]);
        let file = format!("inclusion_t{}.csv", w.t_end);
        formats::write_csv(&dir.join(file), &prov, &["basis", "probability", "coefficient"], rows)?;
    }
    let rows = metronome::sample_field(&study.coefficients, 512).into_iter().map(|(p, f)| vec![num(p), num(f)]);
    formats::write_csv(&dir.join("field.csv"), &prov, &["psi", "dpsi_dt"], rows)?;
    let body = json!({
        "coefficients": cols.iter().zip(&study.coefficients).map(|(c, v)| json!({"basis": label(c), "value": v})).collect::<Vec<_>>(),
        "fixed_points": study.fixed_points,
    });
    formats::write_json(&dir.join("fixed_points.json"), &prov, body)?;
    let stable = study.fixed_points.iter().filter(|f| f.stability == metronome::Stability::Stable).count();
    let last = study.windows.last().expect("at least one window");
    let sin2 = cols.iter().position(|c| *c == (2, bmsi_core::dictionary::Trig::Sin)).map(|k| last.inclusion.edges[k]);
    Ok(format!(
        "{} windows; last window P(sin 2psi) = {}; {} stable fixed points",
        study.windows.len(),
        sin2.map_or("n/a".into(), |p| format!("{p:.3}")),
        stable
    ))
}
