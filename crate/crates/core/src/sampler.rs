//! Parallel-tempering MCMC over the joint indicator and scale state.
//!
//! Each rung runs Metropolis–Hastings sweeps on `P(Y|x)^beta P(x)`; adjacent rungs
//! exchange states on an alternating even/odd schedule. Every rung owns its random
//! stream, so the result does not depend on how rungs are scheduled on threads.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::bayes::{log_bernoulli, log_prior, ModelState, NodeState, NodeSuffStats, Priors, ScalePrior, Workspace};
use crate::dictionary::{HarmonicClass, ModelLayout, StructureState};
use crate::rng::{self, StreamRng, Tag};
use crate::{Error, Result};

/// Geometric inverse-temperature ladder `beta_r = eta^(r - R)` with `beta_1 = 0`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplicaLadder {
    pub betas: Vec<f64>,
    pub eta: f64,
}

pub fn build_ladder(r: usize, eta: f64) -> Result<ReplicaLadder> {
    if r < 2 {
        return Err(Error::invalid("a ladder needs at least two rungs"));
    }
    if !(eta > 1.0) || !eta.is_finite() {
        return Err(Error::invalid("ladder factor eta must exceed 1"));
    }
    let mut betas: Vec<f64> = (1..=r).map(|k| eta.powi(k as i32 - r as i32)).collect();
    betas[0] = 0.0;
    betas[r - 1] = 1.0;
    Ok(ReplicaLadder { betas, eta })
}

impl ReplicaLadder {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SamplerConfig {
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub exchange_period: usize,
    pub seed: u64,
    pub sigma_step: f64,
    pub tau_step: f64,
    /// Tune step sizes during burn-in; they are frozen afterwards.
    pub adapt: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_sweeps: 20_000,
            burn_in: 10_000,
            thinning: 10,
            exchange_period: 1,
            seed: 0,
            sigma_step: 0.1,
            tau_step: 0.2,
            adapt: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps == 0 || self.thinning == 0 || self.exchange_period == 0 {
            return Err(Error::invalid("sweep, thinning and exchange counts must be at least 1"));
        }
        if self.burn_in >= self.n_sweeps {
            return Err(Error::invalid("burn_in must be smaller than n_sweeps"));
        }
        if !(self.sigma_step > 0.0) || !(self.tau_step > 0.0) {
            return Err(Error::invalid("proposal steps must be positive"));
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        (self.n_sweeps - self.burn_in) / self.thinning
    }
}

/// Data and priors of one inference problem.
#[derive(Debug, Clone)]
pub struct Model {
    pub layout: ModelLayout,
    pub stats: Vec<NodeSuffStats>,
    pub priors: Priors,
    pub dt: f64,
}

impl Model {
    pub fn new(layout: ModelLayout, stats: Vec<NodeSuffStats>, priors: Priors, dt: f64) -> Result<Self> {
        priors.validate()?;
        if stats.len() != layout.n_nodes() {
            return Err(Error::dimension("one set of statistics per node is required"));
        }
        for (i, s) in stats.iter().enumerate() {
            if s.gamma != layout.n_cols(i) {
                return Err(Error::dimension(format!("node {} has {} columns, layout expects {}", i + 1, s.gamma, layout.n_cols(i))));
            }
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        Ok(Model { layout, stats, priors, dt })
    }

    /// Independent draw from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelState {
        let layout = &self.layout;
        let p = &self.priors;
        let edges = (0..layout.n_bits).map(|_| rng.random::<f64>() < p.p).collect();
        let d = (0..layout.n_d_vectors())
            .map(|_| {
                let mut v = [true; 6];
                for (db, bit) in v.iter_mut().enumerate() {
                    let u = rng.random::<f64>();
                    if layout.d_free[db] {
                        *bit = u < p.p_d();
                    }
                }
                v
            })
            .collect();
        let l2 = rng.random_range(1..=layout.l2_max);
        let l3 = rng.random_range(1..=layout.l3_max);
        let nodes = (0..layout.n_nodes())
            .map(|i| NodeState {
                sigma: p.sigma.sample(rng),
                tau: (0..layout.n_cols(i)).map(|_| p.tau.sample(rng)).collect(),
            })
            .collect();
        ModelState { structure: StructureState { edges, d, l2, l3 }, nodes }
    }
}

/// Acceptance counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tally {
    pub proposed: u64,
    pub accepted: u64,
}

impl Tally {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MoveStats {
    pub edge: Tally,
    pub d: Tally,
    pub sigma: Tally,
    pub tau: Tally,
    pub order: Tally,
}

/// A state together with its cached per-node log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub state: ModelState,
    pub loglik: Vec<f64>,
}

impl Chain {
    pub fn total_loglik(&self) -> f64 {
        self.loglik.iter().sum()
    }
}

/// Anything that can sit on a rung of the ladder and trade states with its neighbour.
pub trait Tempered {
    fn beta(&self) -> f64;
    fn log_likelihood(&self) -> f64;
    fn swap_states(&mut self, other: &mut Self);
}

/// One exchange pass over the pairs `(r, r+1)` with `r = parity, parity + 2, ...`.
/// `tallies[r]` counts attempts between rungs `r` and `r + 1`.
pub fn exchange_pass<T: Tempered, R: Rng + ?Sized>(rungs: &mut [T], parity: usize, rng: &mut R, tallies: &mut [Tally]) {
    let mut r = parity;
    while r + 1 < rungs.len() {
        let (lo, hi) = rungs.split_at_mut(r + 1);
        let (a, b) = (&mut lo[r], &mut hi[0]);
        let log_a = (b.beta() - a.beta()) * (a.log_likelihood() - b.log_likelihood());
        let u: f64 = rng.random();
        let accept = log_a >= 0.0 || u < log_a.exp();
        if accept {
            a.swap_states(b);
        }
        tallies[r].record(accept);
        r += 2;
    }
}

/// Runs a closure over every replica; implementations may use threads.
pub trait ReplicaExecutor {
    fn run_each<T, F>(&self, items: &mut [T], f: F) -> Result<()>
    where
        T: Send,
        F: Fn(usize, &mut T) -> Result<()> + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ReplicaExecutor for Sequential {
    fn run_each<T, F>(&self, items: &mut [T], f: F) -> Result<()>
    where
        T: Send,
        F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
    {
        items.iter_mut().enumerate().try_for_each(|(r, item)| f(r, item))
    }
}

const ADAPT_WINDOW: u64 = 100;

/// One rung: its temperature, random stream, step sizes, and current chain.
#[derive(Debug, Clone)]
pub struct Replica {
    pub beta: f64,
    pub chain: Chain,
    pub moves: MoveStats,
    pub sigma_step: f64,
    pub tau_step: f64,
    rng: StreamRng,
    ws: Workspace,
    active: Vec<usize>,
    scratch: Vec<usize>,
    saved: Vec<(usize, usize, f64)>,
    window: [Tally; 2],
    loglik_sum: f64,
    loglik_count: u64,
}

impl Tempered for Replica {
    fn beta(&self) -> f64 {
        self.beta
    }

    fn log_likelihood(&self) -> f64 {
        self.chain.total_loglik()
    }

    fn swap_states(&mut self, other: &mut Self) {
        core::mem::swap(&mut self.chain, &mut other.chain);
    }
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if !x.is_finite() {
        return lo;
    }
    if x < lo - 4.0 * w || x > hi + 4.0 * w {
        x = lo + (x - lo).rem_euclid(2.0 * w);
    }
    loop {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
}

impl Replica {
    pub fn new(model: &Model, beta: f64, mut rng: StreamRng, cfg: &SamplerConfig) -> Result<Self> {
        let state = model.sample_prior(&mut rng);
        let mut rep = Replica {
            beta,
            chain: Chain { state, loglik: vec![0.0; model.layout.n_nodes()] },
            moves: MoveStats::default(),
            sigma_step: cfg.sigma_step,
            tau_step: cfg.tau_step,
            rng,
            ws: Workspace::default(),
            active: Vec::new(),
            scratch: Vec::new(),
            saved: Vec::new(),
            window: [Tally::default(); 2],
            loglik_sum: 0.0,
            loglik_count: 0,
        };
        rep.refresh_loglik(model)?;
        Ok(rep)
    }

    /// Starts from a given state instead of a prior draw.
    pub fn with_state(model: &Model, beta: f64, rng: StreamRng, cfg: &SamplerConfig, state: ModelState) -> Result<Self> {
        let mut rep = Replica::new(model, beta, rng, cfg)?;
        rep.chain.state = state;
        rep.refresh_loglik(model)?;
        Ok(rep)
    }

    /// Time-averaged log-likelihood since the counter was last reset.
    pub fn mean_loglik(&self) -> f64 {
        if self.loglik_count == 0 {
            f64::NAN
        } else {
            self.loglik_sum / self.loglik_count as f64
        }
    }

    fn refresh_loglik(&mut self, model: &Model) -> Result<()> {
        for i in 0..model.layout.n_nodes() {
            self.chain.loglik[i] = self.node_loglik(model, i)?;
        }
        Ok(())
    }

    fn node_loglik(&mut self, model: &Model, i: usize) -> Result<f64> {
        let state = &self.chain.state;
        model.layout.active_columns_into(i, &state.structure, &mut self.active);
        let node = &state.nodes[i];
        self.ws.log_marginal_likelihood(&model.stats[i], &self.active, node.sigma, &node.tau, model.dt)
    }

    fn accept(&mut self, log_a: f64) -> bool {
        let u: f64 = self.rng.random();
        log_a >= 0.0 || u < log_a.exp()
    }

    /// Redraws `tau` of the given columns of node `i` from the prior, remembering old values.
    fn redraw_tau(&mut self, model: &Model, i: usize, cols: &[usize]) {
        for &c in cols {
            let old = self.chain.state.nodes[i].tau[c];
            self.saved.push((i, c, old));
            self.chain.state.nodes[i].tau[c] = model.priors.tau.sample(&mut self.rng);
        }
    }

    fn restore_tau(&mut self) {
        for &(i, c, v) in self.saved.iter().rev() {
            self.chain.state.nodes[i].tau[c] = v;
        }
    }

    /// Log-likelihood of node `i` after a structural change, skipping the evaluation
    /// when its active set is unchanged and none of its active `tau` moved.
    fn node_loglik_after(&mut self, model: &Model, i: usize, before: &StructureState) -> Result<f64> {
        model.layout.active_columns_into(i, before, &mut self.scratch);
        model.layout.active_columns_into(i, &self.chain.state.structure, &mut self.active);
        let same = self.active == self.scratch && !self.saved.iter().any(|&(n, c, _)| n == i && self.active.contains(&c));
        if same {
            Ok(self.chain.loglik[i])
        } else {
            self.node_loglik(model, i)
        }
    }

    /// Metropolis step on a structural change already applied to the state.
    /// `nodes` lists the nodes whose likelihood may change.
    fn settle_structure(&mut self, model: &Model, before: StructureState, nodes: &[usize], log_prior_ratio: f64) -> Result<bool> {
        if log_prior_ratio == f64::NEG_INFINITY {
            self.chain.state.structure = before;
            self.restore_tau();
            return Ok(false);
        }
        let mut new_ll = Vec::with_capacity(nodes.len());
        let mut delta = 0.0;
        for &i in nodes {
            let ll = self.node_loglik_after(model, i, &before)?;
            delta += ll - self.chain.loglik[i];
            new_ll.push(ll);
        }
        let accepted = self.accept(self.beta * delta + log_prior_ratio);
        if accepted {
            for (&i, ll) in nodes.iter().zip(new_ll) {
                self.chain.loglik[i] = ll;
            }
        } else {
            self.chain.state.structure = before;
            self.restore_tau();
        }
        Ok(accepted)
    }

    fn flip_edge(&mut self, model: &Model, i: usize, bit: usize) -> Result<()> {
        let before = self.chain.state.structure.clone();
        let old = before.edges[bit];
        self.chain.state.structure.edges[bit] = !old;
        self.saved.clear();
        let cols: Vec<usize> = model.layout.columns_of_bit(i, bit).collect();
        self.redraw_tau(model, i, &cols);
        let lpr = log_bernoulli(model.priors.p, !old) - log_bernoulli(model.priors.p, old);
        let acc = self.settle_structure(model, before, &[i], lpr)?;
        self.moves.edge.record(acc);
        Ok(())
    }

    fn flip_d(&mut self, model: &Model, dv: usize, db: usize) -> Result<()> {
        let layout = &model.layout;
        let before = self.chain.state.structure.clone();
        let old = before.d[dv][db];
        self.chain.state.structure.d[dv][db] = !old;
        self.saved.clear();
        let nodes: Vec<usize> = (0..layout.n_nodes()).filter(|&i| layout.d_index(i) == dv).collect();
        for &i in &nodes {
            let cols: Vec<usize> = layout.columns_of_d(i, db).collect();
            self.redraw_tau(model, i, &cols);
        }
        let q = model.priors.p_d();
        let lpr = log_bernoulli(q, !old) - log_bernoulli(q, old);
        let acc = self.settle_structure(model, before, &nodes, lpr)?;
        self.moves.d.record(acc);
        Ok(())
    }

    fn move_order(&mut self, model: &Model, class: HarmonicClass) -> Result<()> {
        let layout = &model.layout;
        let (cur, max) = match class {
            HarmonicClass::Pairwise => (self.chain.state.structure.l2, layout.l2_max),
            HarmonicClass::ThreeBody => (self.chain.state.structure.l3, layout.l3_max),
        };
        let up = self.rng.random::<bool>();
        let next = if up { cur as i32 + 1 } else { cur as i32 - 1 };
        if next < 1 || next > max as i32 {
            self.moves.order.record(false);
            return Ok(());
        }
        let next = next as u8;
        let before = self.chain.state.structure.clone();
        match class {
            HarmonicClass::Pairwise => self.chain.state.structure.l2 = next,
            HarmonicClass::ThreeBody => self.chain.state.structure.l3 = next,
        }
        self.saved.clear();
        let level = cur.max(next);
        let nodes: Vec<usize> = (0..layout.n_nodes()).collect();
        for &i in &nodes {
            let cols: Vec<usize> = layout.columns_of_harmonic(i, class, level).collect();
            self.redraw_tau(model, i, &cols);
        }
        let acc = self.settle_structure(model, before, &nodes, 0.0)?;
        self.moves.order.record(acc);
        Ok(())
    }

    fn move_sigma(&mut self, model: &Model, i: usize) -> Result<()> {
        let ScalePrior::Uniform { lo, hi } = model.priors.sigma else {
            return Ok(());
        };
        let old = self.chain.state.nodes[i].sigma;
        let prop = reflect(old + self.sigma_step * rng::normal(&mut self.rng), lo, hi);
        self.chain.state.nodes[i].sigma = prop;
        let ll = self.node_loglik(model, i)?;
        let acc = self.accept(self.beta * (ll - self.chain.loglik[i]));
        if acc {
            self.chain.loglik[i] = ll;
        } else {
            self.chain.state.nodes[i].sigma = old;
        }
        self.moves.sigma.record(acc);
        self.window[0].record(acc);
        Ok(())
    }

    fn move_tau(&mut self, model: &Model, i: usize) -> Result<()> {
        let ScalePrior::Uniform { lo, hi } = model.priors.tau else {
            return Ok(());
        };
        let active = model.layout.active_columns(i, &self.chain.state.structure);
        for c in active {
            let old = self.chain.state.nodes[i].tau[c];
            let prop = reflect(old + self.tau_step * rng::normal(&mut self.rng), lo, hi);
            self.chain.state.nodes[i].tau[c] = prop;
            let ll = self.node_loglik(model, i)?;
            let acc = self.accept(self.beta * (ll - self.chain.loglik[i]));
            if acc {
                self.chain.loglik[i] = ll;
            } else {
                self.chain.state.nodes[i].tau[c] = old;
            }
            self.moves.tau.record(acc);
            self.window[1].record(acc);
        }
        Ok(())
    }

    /// Replaces the state by an exact prior draw (used on the `beta = 0` rung).
    fn prior_refresh(&mut self, model: &Model) -> Result<()> {
        self.chain.state = model.sample_prior(&mut self.rng);
        self.refresh_loglik(model)
    }

    /// One full local sweep.
    pub fn sweep(&mut self, model: &Model, adapt: bool) -> Result<()> {
        if self.beta == 0.0 {
            self.prior_refresh(model)?;
        } else {
            let layout = &model.layout;
            for i in 0..layout.n_nodes() {
                let bits: Vec<usize> = layout.node_bits(i).collect();
                for b in bits {
                    self.flip_edge(model, i, b)?;
                }
                self.move_sigma(model, i)?;
                self.move_tau(model, i)?;
            }
            for dv in 0..layout.n_d_vectors() {
                for db in 0..6 {
                    if layout.d_free[db] {
                        self.flip_d(model, dv, db)?;
                    }
                }
            }
            if layout.l2_max > 1 {
                self.move_order(model, HarmonicClass::Pairwise)?;
            }
            if layout.l3_max > 1 {
                self.move_order(model, HarmonicClass::ThreeBody)?;
            }
            if adapt {
                self.adapt(model);
            }
        }
        Ok(())
    }

    fn adapt(&mut self, model: &Model) {
        let span = |p: &ScalePrior| match *p {
            ScalePrior::Uniform { lo, hi } => hi - lo,
            ScalePrior::Fixed(_) => 1.0,
        };
        let limits = [span(&model.priors.sigma), span(&model.priors.tau)];
        for (k, step) in [&mut self.sigma_step, &mut self.tau_step].into_iter().enumerate() {
            let w = &mut self.window[k];
            if w.proposed < ADAPT_WINDOW {
                continue;
            }
            let rate = w.rate();
            if rate > 0.45 {
                *step = (*step * 1.25).min(limits[k]);
            } else if rate < 0.2 {
                *step = (*step * 0.8).max(1e-6);
            }
            *w = Tally::default();
        }
    }

    fn observe(&mut self) {
        self.loglik_sum += self.chain.total_loglik();
        self.loglik_count += 1;
    }
}

/// One retained draw of the `beta = 1` rung.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleRecord {
    pub sweep: usize,
    pub log_posterior: f64,
    pub log_likelihood: f64,
    pub structure: StructureState,
    pub sigma: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorSamples {
    pub records: Vec<SampleRecord>,
    pub betas: Vec<f64>,
    /// Exchange attempts between rung `r` and `r + 1`.
    pub swaps: Vec<Tally>,
    /// Per-rung move acceptance.
    pub moves: Vec<MoveStats>,
    /// Per-rung mean log-likelihood after burn-in.
    pub mean_loglik: Vec<f64>,
    pub sigma_steps: Vec<f64>,
    pub tau_steps: Vec<f64>,
}

/// Runs parallel tempering and records the `beta = 1` rung after burn-in.
pub fn run<E: ReplicaExecutor>(model: &Model, ladder: &ReplicaLadder, cfg: &SamplerConfig, exec: &E) -> Result<PosteriorSamples> {
    run_from(model, ladder, cfg, exec, None)
}

/// Like [`run`], optionally starting every rung from `init` instead of the prior.
pub fn run_from<E: ReplicaExecutor>(
    model: &Model,
    ladder: &ReplicaLadder,
    cfg: &SamplerConfig,
    exec: &E,
    init: Option<&ModelState>,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let r = ladder.len();
    let mut reps = (0..r)
        .map(|k| {
            let stream = rng::stream(cfg.seed, Tag::Replica, k as u32);
            match init {
                Some(s) => Replica::with_state(model, ladder.betas[k], stream, cfg, s.clone()),
                None => Replica::new(model, ladder.betas[k], stream, cfg),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut exchange_rng = rng::stream(cfg.seed, Tag::Exchange, 0);
    let mut swaps = vec![Tally::default(); r.saturating_sub(1)];
    let mut parity = 0;
    let mut records = Vec::with_capacity(cfg.n_records());
    for sweep in 0..cfg.n_sweeps {
        let adapt = cfg.adapt && sweep < cfg.burn_in;
        exec.run_each(&mut reps, |k, rep| {
            rep.sweep(model, adapt).map_err(|e| Error::Sampler { rung: k, sweep, source: Box::new(e) })
        })?;
        if (sweep + 1) % cfg.exchange_period == 0 {
            exchange_pass(&mut reps, parity, &mut exchange_rng, &mut swaps);
            parity ^= 1;
        }
        if sweep >= cfg.burn_in {
            reps.iter_mut().for_each(Replica::observe);
            if (sweep - cfg.burn_in + 1) % cfg.thinning == 0 {
                let top = &reps[r - 1].chain;
                let ll = top.total_loglik();
                records.push(SampleRecord {
                    sweep,
                    log_posterior: ll + log_prior(&top.state, &model.layout, &model.priors),
                    log_likelihood: ll,
                    structure: top.state.structure.clone(),
                    sigma: top.state.nodes.iter().map(|n| n.sigma).collect(),
                    tau: top.state.nodes.iter().map(|n| n.tau.clone()).collect(),
                });
            }
        }
    }
    Ok(PosteriorSamples {
        records,
        betas: ladder.betas.clone(),
        swaps,
        moves: reps.iter().map(|p| p.moves).collect(),
        mean_loglik: reps.iter().map(Replica::mean_loglik).collect(),
        sigma_steps: reps.iter().map(|p| p.sigma_step).collect(),
        tau_steps: reps.iter().map(|p| p.tau_step).collect(),
    })
}

/// Posterior inclusion probabilities and harmonic-order histograms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InclusionTable {
    pub edges: Vec<f64>,
    pub d: Vec<[f64; 6]>,
    /// `l2_hist[l - 1]` is the posterior mass of order `l`.
    pub l2_hist: Vec<f64>,
    pub l3_hist: Vec<f64>,
}

pub fn inclusion_probabilities(records: &[SampleRecord], layout: &ModelLayout) -> Result<InclusionTable> {
    if records.is_empty() {
        return Err(Error::invalid("no posterior samples"));
    }
    let n = records.len() as f64;
    let mut t = InclusionTable {
        edges: vec![0.0; layout.n_bits],
        d: vec![[0.0; 6]; layout.n_d_vectors()],
        l2_hist: vec![0.0; layout.l2_max as usize],
        l3_hist: vec![0.0; layout.l3_max as usize],
    };
    for rec in records {
        let s = &rec.structure;
        layout.check_structure(s)?;
        for (acc, &b) in t.edges.iter_mut().zip(&s.edges) {
            *acc += b as u8 as f64;
        }
        for (acc, bits) in t.d.iter_mut().zip(&s.d) {
            for (a, &b) in acc.iter_mut().zip(bits) {
                *a += b as u8 as f64;
            }
        }
        t.l2_hist[s.l2 as usize - 1] += 1.0;
        t.l3_hist[s.l3 as usize - 1] += 1.0;
    }
    t.edges.iter_mut().for_each(|v| *v /= n);
    t.d.iter_mut().flatten().for_each(|v| *v /= n);
    t.l2_hist.iter_mut().for_each(|v| *v /= n);
    t.l3_hist.iter_mut().for_each(|v| *v /= n);
    Ok(t)
}
