//! Synthetic phase trajectories from a generalized oscillator network with pairwise
//! and three-body couplings, integrated by Euler–Maruyama.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dictionary::Edge;
use crate::rng::{self, Tag};
use crate::{Error, Result};

/// One harmonic of one coupling: `strength * sin(harmonic * phase(edge) + lag)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CouplingTerm {
    pub edge: Edge,
    pub harmonic: u8,
    pub strength: f64,
    pub lag: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkGroundTruth {
    pub n_nodes: usize,
    pub omega: Vec<f64>,
    pub terms: Vec<CouplingTerm>,
    pub l2_true: u8,
    pub l3_true: u8,
}

impl NetworkGroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::invalid("network needs at least one node"));
        }
        if self.omega.len() != self.n_nodes {
            return Err(Error::dimension(format!(
                "omega has {} entries for {} nodes",
                self.omega.len(),
                self.n_nodes
            )));
        }
        if self.omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("omega must be finite"));
        }
        for t in &self.terms {
            t.edge.validate(self.n_nodes)?;
            let cap = if t.edge.is_pairwise() { self.l2_true } else { self.l3_true };
            if t.harmonic == 0 || t.harmonic > cap {
                return Err(Error::invalid(format!(
                    "harmonic {} of {:?} outside 1..={}",
                    t.harmonic, t.edge, cap
                )));
            }
            if !t.strength.is_finite() || !t.lag.is_finite() {
                return Err(Error::invalid(format!("non-finite coupling on {:?}", t.edge)));
            }
        }
        Ok(())
    }

    /// Drift `f_i(x)` for every node.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.omega);
        for t in &self.terms {
            let phase = t.edge.phase(x);
            out[t.edge.target()] += t.strength * (t.harmonic as f64 * phase + t.lag).sin();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub sigma_d: f64,
    pub sigma_o: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    /// Internal Euler steps per observation interval.
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub substeps: u32,
}

#[cfg(feature = "serde")]
fn one() -> u32 {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        if !(self.sigma_d >= 0.0) || !(self.sigma_o >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x0 must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub sigma_d: f64,
    pub sigma_o: f64,
}

/// Sampled states, one row per node, each of length `n_steps + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vec<f64>>,
    pub dt: f64,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(x: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let traj = Trajectory { x, dt, meta: TrajectoryMeta::default() };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::dimension("trajectory has no nodes"));
        }
        let len = self.x[0].len();
        if self.x.iter().any(|row| row.len() != len) {
            return Err(Error::dimension("trajectory rows differ in length"));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory has non-finite entries"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn n_samples(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// All node states at sample `m`, written into `out`.
    pub fn state_at(&self, m: usize, out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.x) {
            *o = row[m];
        }
    }

    /// Keeps the first `n` samples.
    pub fn truncated(&self, n: usize) -> Trajectory {
        let x = self.x.iter().map(|row| row[..n.min(row.len())].to_vec()).collect();
        Trajectory { x, dt: self.dt, meta: self.meta.clone() }
    }
}

pub fn simulate_network(truth: &NetworkGroundTruth, cfg: &SimConfig) -> Result<Trajectory> {
    truth.validate()?;
    cfg.validate()?;
    let n = truth.n_nodes;
    if cfg.x0.len() != n {
        return Err(Error::dimension(format!("x0 has {} entries for {} nodes", cfg.x0.len(), n)));
    }
    let mut dyn_rngs: Vec<_> = (0..n).map(|i| rng::stream(cfg.seed, Tag::Dynamics, i as u32)).collect();
    let mut obs_rngs: Vec<_> = (0..n).map(|i| rng::stream(cfg.seed, Tag::Observation, i as u32)).collect();

    let h = cfg.dt / cfg.substeps as f64;
    let noise = cfg.sigma_d * h.sqrt();
    let mut x = cfg.x0.clone();
    let mut f = vec![0.0; n];
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(cfg.n_steps + 1)).collect();
    for (row, &v) in rows.iter_mut().zip(&x) {
        row.push(v);
    }
    for step in 0..cfg.n_steps {
        for _ in 0..cfg.substeps {
            truth.drift(&x, &mut f);
            if let Some(i) = f.iter().position(|v| !v.is_finite()) {
                return Err(Error::Divergence { step, what: format!("drift of node {}", i + 1) });
            }
            for i in 0..n {
                x[i] += f[i] * h;
                if noise > 0.0 {
                    x[i] += noise * rng::normal(&mut dyn_rngs[i]);
                }
            }
        }
        for (row, &v) in rows.iter_mut().zip(&x) {
            row.push(v);
        }
    }
    if cfg.sigma_o > 0.0 {
        for (row, r) in rows.iter_mut().zip(obs_rngs.iter_mut()) {
            for v in row.iter_mut() {
                *v += cfg.sigma_o * rng::normal(r);
            }
        }
    }
    Ok(Trajectory {
        x: rows,
        dt: cfg.dt,
        meta: TrajectoryMeta { seed: cfg.seed, sigma_d: cfg.sigma_d, sigma_o: cfg.sigma_o },
    })
}

/// Per-node first differences `Y_{i,m} = X_{i,m+1} - X_{i,m}`.
pub fn compute_targets(traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    if traj.n_samples() < 2 {
        return Err(Error::dimension("need at least two samples to difference"));
    }
    Ok(traj.x.iter().map(|row| row.windows(2).map(|w| w[1] - w[0]).collect()).collect())
}
