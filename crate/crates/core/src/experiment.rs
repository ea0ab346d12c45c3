//! End-to-end pipelines: the three reference network configurations, network
//! inference and scoring, parameter sweeps, and the metronome window study.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::bayes::{NodeSuffStats, Priors};
use crate::dictionary::{evaluate_design_matrix, CouplingKind, Dictionary, Edge, ModelLayout};
use crate::metrics::{self, MetricSummary, PointEstimate};
use crate::metronome::{self, FixedPoint, MetronomeSpec, PhaseSeries};
use crate::oscillator::{compute_targets, simulate_network, CouplingTerm, NetworkGroundTruth, SimConfig, Trajectory};
use crate::sampler::{self, build_ladder, InclusionTable, Model, PosteriorSamples, ReplicaExecutor, SamplerConfig, Sequential};
use crate::{Error, Result};

/// Settings shared by every inference run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct InferenceSettings {
    pub l2_max: u8,
    pub l3_max: u8,
    pub per_node_d: bool,
    pub priors: Priors,
    pub replicas: usize,
    pub eta: f64,
    pub sampler: SamplerConfig,
    pub cutoff: f64,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            l2_max: 3,
            l3_max: 3,
            per_node_d: false,
            priors: Priors::default(),
            replicas: 40,
            eta: 1.3,
            sampler: SamplerConfig::default(),
            cutoff: 0.5,
        }
    }
}

/// Ground truth and simulation settings of reference configuration 1, 2 or 3.
pub fn preset(id: u8, seed: u64) -> Result<(NetworkGroundTruth, SimConfig)> {
    let (lag2, lag3, l3, omega, sigma_d) = match id {
        1 => (1.0, 1.0, 1, vec![0.5, 1.0, 1.5], 0.1),
        2 => (1.0, 0.0, 2, vec![0.4, 0.8, 1.2], 0.1),
        3 => (1.0, 0.0, 2, vec![0.4, 0.8, 1.2], 0.5),
        _ => return Err(Error::invalid(format!("unknown configuration {id}; expected 1, 2 or 3"))),
    };
    let k = 0.5;
    let mut terms = Vec::new();
    for edge in [Edge::pairwise(1, 0), Edge::pairwise(2, 0)] {
        terms.push(CouplingTerm { edge, harmonic: 1, strength: k, lag: lag2 });
    }
    for edge in [Edge::new(CouplingKind::ThreeBodyAsym, 0, 1, 2), Edge::new(CouplingKind::ThreeBodySym, 2, 0, 1)] {
        for harmonic in 1..=l3 {
            terms.push(CouplingTerm { edge, harmonic, strength: k, lag: lag3 });
        }
    }
    let truth = NetworkGroundTruth { n_nodes: 3, omega, terms, l2_true: 1, l3_true: l3 };
    let sim = SimConfig { dt: 0.1, n_steps: 2000, sigma_d, sigma_o: 0.0, x0: vec![0.0, 2.0, 4.0], seed, substeps: 1 };
    Ok((truth, sim))
}

/// Model built from a trajectory, with the dictionaries that define its columns.
#[derive(Debug, Clone)]
pub struct NetworkProblem {
    pub model: Model,
    pub dicts: Vec<Dictionary>,
}

pub fn network_problem(traj: &Trajectory, settings: &InferenceSettings) -> Result<NetworkProblem> {
    traj.validate()?;
    let (layout, dicts) = ModelLayout::network(traj.n_nodes(), settings.l2_max, settings.l3_max, settings.per_node_d)?;
    let y = compute_targets(traj)?;
    let stats = dicts
        .iter()
        .zip(&y)
        .map(|(d, yi)| NodeSuffStats::new(&evaluate_design_matrix(traj, d)?, yi))
        .collect::<Result<Vec<_>>>()?;
    let model = Model::new(layout, stats, settings.priors, traj.dt)?;
    Ok(NetworkProblem { model, dicts })
}

#[derive(Debug, Clone)]
pub struct NetworkInference {
    pub problem: NetworkProblem,
    pub samples: PosteriorSamples,
    pub inclusion: InclusionTable,
    pub estimate: PointEstimate,
}

pub fn infer_network<E: ReplicaExecutor>(traj: &Trajectory, settings: &InferenceSettings, exec: &E) -> Result<NetworkInference> {
    let problem = network_problem(traj, settings)?;
    let ladder = build_ladder(settings.replicas, settings.eta)?;
    let samples = sampler::run(&problem.model, &ladder, &settings.sampler, exec)?;
    let inclusion = sampler::inclusion_probabilities(&samples.records, &problem.model.layout)?;
    let estimate = metrics::point_estimate(&problem.model, &samples.records, &inclusion, settings.cutoff)?;
    Ok(NetworkInference { problem, samples, inclusion, estimate })
}

/// Scores of one inference run against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialMetrics {
    /// Hamming error over column-level effective indicators.
    pub e_c: f64,
    /// Hamming error over edge bits only.
    pub e_c_edges: f64,
    pub e_theta: f64,
    /// Effective indicators match exactly.
    pub exact: bool,
}

pub fn evaluate(truth: &NetworkGroundTruth, inf: &NetworkInference) -> Result<TrialMetrics> {
    let layout = &inf.problem.model.layout;
    let true_s = metrics::truth_structure(truth, layout)?;
    let c_true = layout.effective_indicators(&true_s);
    let c_hat = layout.effective_indicators(&inf.estimate.structure);
    let e_c = metrics::hamming_error(&c_true, &c_hat)?;
    let e_c_edges = metrics::hamming_error(&[true_s.edges.clone()], &[inf.estimate.structure.edges.clone()])?;
    let theta_true = metrics::mask(&metrics::truth_coefficients(truth, &inf.problem.dicts), &c_true);
    let e_theta = metrics::rmse_theta(&theta_true, &inf.estimate.theta)?;
    Ok(TrialMetrics { e_c, e_c_edges, e_theta, exact: c_true == c_hat })
}

pub fn run_trial<E: ReplicaExecutor>(
    truth: &NetworkGroundTruth,
    sim: &SimConfig,
    settings: &InferenceSettings,
    exec: &E,
) -> Result<(NetworkInference, TrialMetrics)> {
    let traj = simulate_network(truth, sim)?;
    let inf = infer_network(&traj, settings, exec)?;
    let m = evaluate(truth, &inf)?;
    Ok((inf, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SweepAxis {
    /// Number of differenced samples `M`.
    DataCount,
    SigmaD,
    SigmaO,
}

impl SweepAxis {
    pub fn apply(self, value: f64, sim: &mut SimConfig) -> Result<()> {
        match self {
            SweepAxis::DataCount => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(Error::invalid(format!("data count {value} is not a positive integer")));
                }
                sim.n_steps = value as usize;
            }
            SweepAxis::SigmaD => sim.sigma_d = value,
            SweepAxis::SigmaO => sim.sigma_o = value,
        }
        sim.validate()
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::DataCount => "M",
            SweepAxis::SigmaD => "sigma_d",
            SweepAxis::SigmaO => "sigma_o",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRun {
    pub seed: u64,
    pub outcome: core::result::Result<TrialMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub value: f64,
    pub e_c: MetricSummary,
    pub e_theta: MetricSummary,
    pub exact_fraction: f64,
    pub runs: Vec<SweepRun>,
}

impl SweepPoint {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Runs `repeats` seeds (`base_seed`, `base_seed + 1`, ...) at every grid value. The
/// executor spreads runs over workers; each run samples its replicas sequentially.
/// Failed runs are kept in the report with their error message.
pub fn sweep<E: ReplicaExecutor>(
    truth: &NetworkGroundTruth,
    base: &SimConfig,
    settings: &InferenceSettings,
    axis: SweepAxis,
    values: &[f64],
    repeats: usize,
    base_seed: u64,
    exec: &E,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() || repeats == 0 {
        return Err(Error::invalid("sweep needs at least one grid value and one repeat"));
    }
    let mut sims = Vec::with_capacity(values.len());
    for &v in values {
        let mut sim = base.clone();
        axis.apply(v, &mut sim).map_err(|e| Error::invalid(format!("{} = {v}: {e}", axis.name())))?;
        sims.push(sim);
    }
    let mut slots: Vec<(usize, SweepRun)> = (0..values.len())
        .flat_map(|p| (0..repeats).map(move |r| (p, SweepRun { seed: base_seed + r as u64, outcome: Err(String::new()) })))
        .collect();
    exec.run_each(&mut slots, |_, (p, run)| {
        let mut sim = sims[*p].clone();
        sim.seed = run.seed;
        let mut s = settings.clone();
        s.sampler.seed = run.seed;
        run.outcome = run_trial(truth, &sim, &s, &Sequential)
            .map(|(_, m)| m)
            .map_err(|e| format!("{} = {}, seed {}: {e}", axis.name(), values[*p], run.seed));
        Ok(())
    })?;
    let mut points = Vec::with_capacity(values.len());
    for (p, &value) in values.iter().enumerate() {
        let runs: Vec<SweepRun> = slots.iter().filter(|(q, _)| *q == p).map(|(_, r)| r.clone()).collect();
        let ok: Vec<TrialMetrics> = runs.iter().filter_map(|r| r.outcome.as_ref().ok().copied()).collect();
        let e_c: Vec<f64> = ok.iter().map(|m| m.e_c).collect();
        let e_theta: Vec<f64> = ok.iter().map(|m| m.e_theta).collect();
        let exact = if ok.is_empty() { 0.0 } else { ok.iter().filter(|m| m.exact).count() as f64 / ok.len() as f64 };
        points.push(SweepPoint { value, e_c: metrics::summarize(&e_c), e_theta: metrics::summarize(&e_theta), exact_fraction: exact, runs });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetronomeWindow {
    pub t_end: f64,
    pub inclusion: InclusionTable,
    pub estimate: PointEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetronomeStudy {
    pub phases: PhaseSeries,
    pub windows: Vec<MetronomeWindow>,
    /// Fitted field coefficients of the last window, in `psi_columns` order.
    pub coefficients: Vec<f64>,
    pub fixed_points: Vec<FixedPoint>,
}

/// Simulates the metronomes once and infers the phase-difference model on each
/// window `[0, t_end]`.
pub fn metronome_study<E: ReplicaExecutor>(
    spec: &MetronomeSpec,
    windows: &[f64],
    l_max: u8,
    settings: &InferenceSettings,
    exec: &E,
) -> Result<MetronomeStudy> {
    if windows.is_empty() {
        return Err(Error::invalid("at least one window is required"));
    }
    let states = metronome::simulate_metronomes(spec)?;
    let phases = metronome::extract_phase(&states)?;
    let ladder = build_ladder(settings.replicas, settings.eta)?;
    let mut out = Vec::with_capacity(windows.len());
    for &t_end in windows {
        let ps = phases.window(t_end)?;
        let reg = metronome::build_psi_regression(&ps, l_max)?;
        let stats = NodeSuffStats::new(&reg.design, &reg.y)?;
        let model = Model::new(reg.layout, vec![stats], settings.priors, ps.dt)?;
        let samples = sampler::run(&model, &ladder, &settings.sampler, exec)
            .map_err(|e| Error::invalid(format!("window [0, {t_end}]: {e}").to_string()))?;
        let inclusion = sampler::inclusion_probabilities(&samples.records, &model.layout)?;
        let estimate = metrics::point_estimate(&model, &samples.records, &inclusion, settings.cutoff)?;
        out.push(MetronomeWindow { t_end, inclusion, estimate });
    }
    let coefficients = out.last().map(|w| w.estimate.theta[0].clone()).unwrap_or_default();
    let fixed_points = metronome::fixed_points(&coefficients);
    Ok(MetronomeStudy { phases, windows: out, coefficients, fixed_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::EdgeIndex;

    #[test]
    fn presets_validate() {
        for id in 1..=3 {
            let (truth, sim) = preset(id, 0).unwrap();
            truth.validate().unwrap();
            sim.validate().unwrap();
        }
        assert!(preset(4, 0).is_err());
        let (t2, s2) = preset(2, 0).unwrap();
        let (_, s3) = preset(3, 0).unwrap();
        assert_eq!(t2.terms.len(), 6);
        assert_eq!((s2.sigma_d, s3.sigma_d), (0.1, 0.5));
    }

    #[test]
    fn first_configuration_does_not_lock() {
        let (truth, sim) = preset(1, 1).unwrap();
        let traj = simulate_network(&truth, &sim).unwrap();
        assert_eq!(traj.n_samples(), 2001);
        for i in 0..3 {
            for j in i + 1..3 {
                let (mut re, mut im) = (0.0, 0.0);
                for m in 0..traj.n_samples() {
                    let d = traj.x[j][m] - traj.x[i][m];
                    re += d.cos();
                    im += d.sin();
                }
                let r = (re * re + im * im).sqrt() / traj.n_samples() as f64;
                assert!(r < 0.9, "pair ({i}, {j}) order {r}");
            }
        }
    }

    #[test]
    fn truth_bits_of_the_first_configuration() {
        let (truth, _) = preset(1, 0).unwrap();
        let (layout, _) = ModelLayout::network(3, 3, 3, false).unwrap();
        let s = metrics::truth_structure(&truth, &layout).unwrap();
        let idx = EdgeIndex::new(3);
        let on: Vec<Edge> = s.edges.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| idx.edges[k]).collect();
        assert_eq!(on.len(), 4);
        assert_eq!(s.d[0], [true; 6]);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let (truth, sim) = preset(1, 0).unwrap();
        let s = InferenceSettings::default();
        assert!(sweep(&truth, &sim, &s, SweepAxis::DataCount, &[], 1, 0, &Sequential).is_err());
        assert!(sweep(&truth, &sim, &s, SweepAxis::DataCount, &[10.5], 1, 0, &Sequential).is_err());
    }

    #[test]
    fn short_sweep_reports_one_row_per_point() {
        let (truth, sim) = preset(1, 0).unwrap();
        let settings = InferenceSettings {
            l2_max: 1,
            l3_max: 1,
            replicas: 3,
            sampler: SamplerConfig { n_sweeps: 40, burn_in: 20, thinning: 2, ..SamplerConfig::default() },
            ..InferenceSettings::default()
        };
        let pts = sweep(&truth, &sim, &settings, SweepAxis::DataCount, &[200.0], 1, 3, &Sequential).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].runs.len(), 1);
        assert!(pts[0].e_c.single);
        assert_eq!(pts[0].failures(), 0);
    }
}
