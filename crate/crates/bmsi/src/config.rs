//! Experiment configuration files.
//!
//! Configs are JSON documents with a schema version. Unknown keys are rejected.
//! Node indices in configs and output files are 1-based.

use std::path::{Path, PathBuf};

use bmsi_core::dictionary::{CouplingKind, Edge};
use bmsi_core::experiment::{self, InferenceSettings, SweepAxis};
use bmsi_core::metronome::MetronomeSpec;
use bmsi_core::oscillator::{CouplingTerm, NetworkGroundTruth, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    OscillatorInfer,
    MetronomeInfer,
    Sweep,
}

/// One coupling term. `nodes` is `[i, j]` for pairwise terms (node `j` drives
/// node `i`) and `[i, j, k]` for three-body terms, with `i` the driven node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub kind: CouplingKind,
    pub nodes: Vec<usize>,
    pub harmonic: u8,
    pub strength: f64,
    pub lag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n_nodes: usize,
    pub omega: Vec<f64>,
    pub terms: Vec<TermSpec>,
    pub l2_true: u8,
    pub l3_true: u8,
}

impl NetworkSpec {
    pub fn to_truth(&self) -> Result<NetworkGroundTruth, CliError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (t, spec) in self.terms.iter().enumerate() {
            let bad = |why: &str| CliError::config(format!("network.terms[{t}]: {why}"));
            if spec.nodes.iter().any(|&n| n == 0) {
                return Err(bad("node indices start at 1"));
            }
            let z: Vec<usize> = spec.nodes.iter().map(|n| n - 1).collect();
            let edge = match (spec.kind, z.as_slice()) {
                (CouplingKind::Pairwise, &[i, j]) => Edge::pairwise(i, j),
                (CouplingKind::ThreeBodySym, &[i, j, k]) => Edge::new(spec.kind, i, j.min(k), j.max(k)),
                (kind, &[i, j, k]) if kind != CouplingKind::Pairwise => Edge::new(kind, i, j, k),
                _ => return Err(bad("pairwise terms take 2 nodes, three-body terms take 3")),
            };
            terms.push(CouplingTerm { edge, harmonic: spec.harmonic, strength: spec.strength, lag: spec.lag });
        }
        let truth = NetworkGroundTruth {
            n_nodes: self.n_nodes,
            omega: self.omega.clone(),
            terms,
            l2_true: self.l2_true,
            l3_true: self.l3_true,
        };
        truth.validate().map_err(|e| CliError::config(format!("network: {e}")))?;
        Ok(truth)
    }

    pub fn from_truth(truth: &NetworkGroundTruth) -> Self {
        let terms = truth
            .terms
            .iter()
            .map(|t| {
                let mut nodes = vec![t.edge.i + 1, t.edge.j + 1];
                nodes.extend(t.edge.k.map(|k| k + 1));
                TermSpec { kind: t.edge.kind, nodes, harmonic: t.harmonic, strength: t.strength, lag: t.lag }
            })
            .collect();
        NetworkSpec { n_nodes: truth.n_nodes, omega: truth.omega.clone(), terms, l2_true: truth.l2_true, l3_true: truth.l3_true }
    }
}

fn default_windows() -> Vec<f64> {
    vec![300.0, 500.0, 1000.0]
}

fn default_l_max() -> u8 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetronomeStudySpec {
    #[serde(default)]
    pub mechanics: MetronomeSpec,
    #[serde(default = "default_windows")]
    pub windows: Vec<f64>,
    /// Highest harmonic of the phase-difference model.
    #[serde(default = "default_l_max")]
    pub l_max: u8,
}

impl Default for MetronomeStudySpec {
    fn default() -> Self {
        MetronomeStudySpec { mechanics: MetronomeSpec::default(), windows: default_windows(), l_max: default_l_max() }
    }
}

fn default_repeats() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub kind: Kind,
    /// Use reference configuration 1, 2 or 3 instead of `network` and `sim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    /// With a preset, replaces the preset's simulation settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub inference: InferenceSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metronome: Option<MetronomeStudySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Also write every retained sample as NDJSON.
    #[serde(default)]
    pub write_samples: bool,
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        ExperimentConfig {
            schema: SCHEMA,
            kind,
            preset: None,
            network: None,
            sim: None,
            inference: InferenceSettings::default(),
            metronome: None,
            sweep: None,
            output: None,
            write_samples: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::config(format!("schema: unsupported version {} (expected {SCHEMA})", self.schema)));
        }
        fn ctx(what: &'static str) -> impl Fn(bmsi_core::Error) -> CliError {
            move |e| CliError::config(format!("{what}: {e}"))
        }
        self.inference.priors.validate().map_err(ctx("inference.priors"))?;
        self.inference.sampler.validate().map_err(ctx("inference.sampler"))?;
        if !(0.0..1.0).contains(&self.inference.cutoff) {
            return Err(CliError::config("inference.cutoff: must lie in [0, 1)"));
        }
        match self.kind {
            Kind::OscillatorInfer | Kind::Sweep => {
                self.network_setup()?;
            }
            Kind::MetronomeInfer => {
                let m = self.metronome.clone().unwrap_or_default();
                m.mechanics.validate().map_err(ctx("metronome.mechanics"))?;
                if m.windows.is_empty() || m.windows.iter().any(|&w| !(w > 0.0 && w <= m.mechanics.t_end)) {
                    return Err(CliError::config("metronome.windows: need at least one window in (0, t_end]"));
                }
                if m.l_max == 0 {
                    return Err(CliError::config("metronome.l_max: must be at least 1"));
                }
            }
        }
        if self.kind == Kind::Sweep {
            let s = self.sweep.as_ref().ok_or_else(|| CliError::config("missing field `sweep` for kind \"sweep\""))?;
            if s.values.is_empty() || s.repeats == 0 {
                return Err(CliError::config("sweep: need at least one value and one repeat"));
            }
            let (_, sim) = self.network_setup()?;
            for &v in &s.values {
                s.axis.apply(v, &mut sim.clone()).map_err(|e| CliError::config(format!("sweep.values: {e}")))?;
            }
        }
        Ok(())
    }

    /// Ground truth and simulation settings, from the preset or the explicit sections.
    pub fn network_setup(&self) -> Result<(NetworkGroundTruth, SimConfig), CliError> {
        let (truth, sim) = match (self.preset, &self.network) {
            (Some(_), Some(_)) => return Err(CliError::config("`preset` and `network` are mutually exclusive")),
            (Some(id), None) => {
                let (truth, sim) = experiment::preset(id, 0).map_err(|e| CliError::config(format!("preset: {e}")))?;
                (truth, self.sim.clone().unwrap_or(sim))
            }
            (None, Some(net)) => {
                let sim = self.sim.clone().ok_or_else(|| CliError::config("missing field `sim` (required with `network`)"))?;
                (net.to_truth()?, sim)
            }
            (None, None) => return Err(CliError::config("missing field `network` (or `preset`)")),
        };
        sim.validate().map_err(|e| CliError::config(format!("sim: {e}")))?;
        if sim.x0.len() != truth.n_nodes {
            return Err(CliError::config(format!("sim.x0: {} entries for {} nodes", sim.x0.len(), truth.n_nodes)));
        }
        Ok((truth, sim))
    }

    /// Overrides every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.inference.sampler.seed = seed;
        if self.kind == Kind::MetronomeInfer {
            self.metronome.get_or_insert_with(Default::default).mechanics.seed = seed;
        }
        if self.kind != Kind::MetronomeInfer {
            if let Ok((_, mut sim)) = self.network_setup() {
                sim.seed = seed;
                self.sim = Some(sim);
            }
        }
    }

    /// Seed reported in output headers.
    pub fn seed(&self) -> u64 {
        match self.kind {
            Kind::MetronomeInfer => self.metronome.as_ref().map(|m| m.mechanics.seed).unwrap_or(MetronomeSpec::default().seed),
            _ => self.sim.as_ref().map(|s| s.seed).unwrap_or(self.inference.sampler.seed),
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_based_terms_round_trip() {
        let (truth, _) = experiment::preset(1, 0).unwrap();
        let spec = NetworkSpec::from_truth(&truth);
        assert_eq!(spec.terms[0].nodes, vec![2, 1]);
        assert_eq!(spec.to_truth().unwrap(), truth);
    }

    #[test]
    fn symmetric_terms_are_normalized() {
        let spec = NetworkSpec {
            n_nodes: 3,
            omega: vec![1.0; 3],
            terms: vec![TermSpec { kind: CouplingKind::ThreeBodySym, nodes: vec![3, 2, 1], harmonic: 1, strength: 0.5, lag: 0.0 }],
            l2_true: 1,
            l3_true: 1,
        };
        assert_eq!(spec.to_truth().unwrap().terms[0].edge, Edge::new(CouplingKind::ThreeBodySym, 2, 0, 1));
    }

    #[test]
    fn zero_index_is_rejected() {
        let spec = NetworkSpec {
            n_nodes: 2,
            omega: vec![1.0; 2],
            terms: vec![TermSpec { kind: CouplingKind::Pairwise, nodes: vec![0, 1], harmonic: 1, strength: 0.5, lag: 0.0 }],
            l2_true: 1,
            l3_true: 1,
        };
        assert!(spec.to_truth().is_err());
    }

    #[test]
    fn missing_and_unknown_keys() {
        let e = ExperimentConfig::parse(r#"{"schema": 1}"#).unwrap_err();
        assert!(e.to_string().contains("kind"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::parse(r#"{"schema": 1, "kind": "oscillator_infer", "preset": 1, "colour": 3}"#).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = ExperimentConfig::parse(r#"{"schema": 1, "kind": "oscillator_infer"}"#).unwrap_err();
        assert!(e.to_string().contains("network"), "{e}");
        let e = ExperimentConfig::parse(r#"{"schema": 2, "kind": "oscillator_infer", "preset": 1}"#).unwrap_err();
        assert!(e.to_string().contains("schema"), "{e}");
    }

    #[test]
    fn preset_config_with_overrides() {
        let cfg = ExperimentConfig::parse(
            r#"{"schema": 1, "kind": "sweep", "preset": 1,
                "inference": {"replicas": 4, "sampler": {"n_sweeps": 100, "burn_in": 50}},
                "sweep": {"axis": "sigma_o", "values": [0.0, 0.1]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.inference.replicas, 4);
        assert_eq!(cfg.inference.sampler.thinning, 10);
        assert_eq!(cfg.sweep.as_ref().unwrap().repeats, 10);
        let bad = r#"{"schema": 1, "kind": "sweep", "preset": 1, "sweep": {"axis": "data_count", "values": [0.5]}}"#;
        assert!(ExperimentConfig::parse(bad).is_err());
    }

    #[test]
    fn seed_override_reaches_every_stream() {
        let mut cfg = ExperimentConfig::new(Kind::OscillatorInfer);
        cfg.preset = Some(2);
        let h0 = cfg.hash();
        cfg.set_seed(42);
        assert_eq!(cfg.seed(), 42);
        assert_eq!(cfg.inference.sampler.seed, 42);
        assert_ne!(cfg.hash(), h0);
        let mut m = ExperimentConfig::new(Kind::MetronomeInfer);
        m.set_seed(9);
        assert_eq!(m.metronome.unwrap().mechanics.seed, 9);
    }
}
