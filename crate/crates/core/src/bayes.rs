//! Priors, the coefficient-marginalized likelihood, tempered posterior, and the
//! conditional coefficient posterior.
//!
//! The likelihood of a node is `N(Y | 0, s^2 I + dt^2 G_c L_c G_c^T)` with `L_c` the
//! diagonal of active `tau^2`. It is evaluated through the `k x k` matrix
//! `A = s^2 L_c^{-1} + dt^2 G_c^T G_c`, so a call never touches the `M` samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dictionary::{DesignMatrix, ModelLayout, StructureState};
use crate::linalg::{dot, Cholesky};
use crate::{Error, Result};

/// Prior on a positive scale parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScalePrior {
    Uniform { lo: f64, hi: f64 },
    /// Point mass; the parameter is never moved.
    Fixed(f64),
}

impl ScalePrior {
    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            ScalePrior::Uniform { lo, hi } if v >= lo && v <= hi => -(hi - lo).ln(),
            ScalePrior::Fixed(x) if v == x => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.log_density(v) > f64::NEG_INFINITY
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalePrior::Uniform { lo, hi } => crate::rng::uniform(rng, lo, hi),
            ScalePrior::Fixed(x) => x,
        }
    }

    /// Midpoint of the support, used as a deterministic starting value.
    pub fn center(&self) -> f64 {
        match *self {
            ScalePrior::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalePrior::Fixed(x) => x,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            ScalePrior::Uniform { lo, hi } => lo > 0.0 && hi > lo && hi.is_finite(),
            ScalePrior::Fixed(x) => x > 0.0 && x.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{name} prior needs 0 < lo < hi (or a positive fixed value)")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Priors {
    /// Bernoulli inclusion probability of edge bits.
    pub p: f64,
    /// Inclusion probability of phase-lag bits; falls back to `p`.
    pub p_d: Option<f64>,
    pub sigma: ScalePrior,
    pub tau: ScalePrior,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            p: 0.5,
            p_d: None,
            sigma: ScalePrior::Uniform { lo: 0.025, hi: 5.77 },
            tau: ScalePrior::Uniform { lo: 0.01, hi: 10.0 },
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        // 0 and 1 are allowed: they pin every indicator
        if !(0.0..=1.0).contains(&self.p) || !self.p_d.is_none_or(|q| (0.0..=1.0).contains(&q)) {
            return Err(Error::invalid("inclusion probabilities must lie in [0, 1]"));
        }
        self.sigma.validate("sigma")?;
        self.tau.validate("tau")
    }

    pub fn p_d(&self) -> f64 {
        self.p_d.unwrap_or(self.p)
    }
}

/// `ln p` for a set bit and `ln(1 - p)` for a clear one.
pub fn log_bernoulli(p: f64, bit: bool) -> f64 {
    if bit {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// Continuous parameters of one node; `tau` covers every column, active or not.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeState {
    pub sigma: f64,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelState {
    pub structure: StructureState,
    pub nodes: Vec<NodeState>,
}

/// Cached `G^T G`, `G^T Y`, `Y^T Y` of one node at the dictionary caps.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSuffStats {
    pub gamma: usize,
    pub m: usize,
    pub gtg: Vec<f64>,
    pub gty: Vec<f64>,
    pub yty: f64,
}

impl NodeSuffStats {
    pub fn new(g: &DesignMatrix, y: &[f64]) -> Result<Self> {
        if g.rows != y.len() {
            return Err(Error::dimension(format!("design has {} rows but target has {}", g.rows, y.len())));
        }
        let n = g.cols;
        let mut gtg = vec![0.0; n * n];
        let mut gty = vec![0.0; n];
        for (m, &ym) in y.iter().enumerate() {
            let row = g.row(m);
            for a in 0..n {
                let ra = row[a];
                gty[a] += ra * ym;
                for b in 0..=a {
                    gtg[a * n + b] += ra * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                gtg[b * n + a] = gtg[a * n + b];
            }
        }
        Ok(NodeSuffStats { gamma: n, m: y.len(), gtg, gty, yty: dot(y, y) })
    }
}

/// Scratch buffers reused across likelihood evaluations.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    a: Vec<f64>,
    z: Vec<f64>,
    chol: Cholesky,
}

impl Workspace {
    fn factor(&mut self, stats: &NodeSuffStats, active: &[usize], sigma: f64, tau: impl Fn(usize) -> f64, dt: f64) -> Result<f64> {
        let k = active.len();
        let s2 = sigma * sigma;
        let dt2 = dt * dt;
        self.a.clear();
        self.a.resize(k * k, 0.0);
        let mut log_tau2 = 0.0;
        for (r, &ca) in active.iter().enumerate() {
            for (c, &cb) in active.iter().enumerate().take(r + 1) {
                let v = dt2 * stats.gtg[ca * stats.gamma + cb];
                self.a[r * k + c] = v;
                self.a[c * k + r] = v;
            }
            let t2 = tau(r) * tau(r);
            self.a[r * k + r] += s2 / t2;
            log_tau2 += t2.ln();
        }
        self.chol.refactor(&self.a, k)?;
        self.z.clear();
        self.z.extend(active.iter().map(|&c| stats.gty[c]));
        Ok(log_tau2)
    }

    /// Log marginal likelihood with `tau` indexed by full column number.
    pub fn log_marginal_likelihood(&mut self, stats: &NodeSuffStats, active: &[usize], sigma: f64, tau: &[f64], dt: f64) -> Result<f64> {
        self.lml(stats, active, sigma, |r| tau[active[r]], dt)
    }

    fn lml(&mut self, stats: &NodeSuffStats, active: &[usize], sigma: f64, tau: impl Fn(usize) -> f64, dt: f64) -> Result<f64> {
        let k = active.len() as f64;
        let m = stats.m as f64;
        let s2 = sigma * sigma;
        let log_tau2 = self.factor(stats, active, sigma, tau, dt)?;
        let log_det = m * s2.ln() + self.chol.log_det() + log_tau2 - k * s2.ln();
        self.chol.forward(&mut self.z);
        let quad = (stats.yty - dt * dt * dot(&self.z, &self.z)) / s2;
        Ok(-0.5 * m * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * quad)
    }
}

/// `log N(Y | 0, sigma^2 I + dt^2 G_c diag(tau_active^2) G_c^T)`.
pub fn log_marginal_likelihood(stats: &NodeSuffStats, active: &[usize], sigma: f64, tau_active: &[f64], dt: f64) -> Result<f64> {
    if active.len() != tau_active.len() {
        return Err(Error::dimension("one tau per active column is required"));
    }
    if active.iter().any(|&c| c >= stats.gamma) {
        return Err(Error::dimension("active column out of range"));
    }
    if !(sigma > 0.0) || tau_active.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::invalid("sigma and tau must be positive"));
    }
    Workspace::default().lml(stats, active, sigma, |r| tau_active[r], dt)
}

/// Gaussian posterior of the active coefficients given `sigma` and `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPosterior {
    pub mean: Vec<f64>,
    /// Row-major `k x k`.
    pub cov: Vec<f64>,
}

pub fn coefficient_posterior(stats: &NodeSuffStats, active: &[usize], sigma: f64, tau_active: &[f64], dt: f64) -> Result<CoefficientPosterior> {
    if active.len() != tau_active.len() {
        return Err(Error::dimension("one tau per active column is required"));
    }
    let mut ws = Workspace::default();
    ws.factor(stats, active, sigma, |r| tau_active[r], dt)?;
    let mut mean = ws.z.clone();
    ws.chol.solve(&mut mean);
    mean.iter_mut().for_each(|v| *v *= dt);
    let s2 = sigma * sigma;
    let cov = ws.chol.inverse().into_iter().map(|v| v * s2).collect();
    Ok(CoefficientPosterior { mean, cov })
}

/// Log prior of a full state. Every tau (active or not) carries its density, so the
/// value is a constant shift of the density over active parameters only.
pub fn log_prior(state: &ModelState, layout: &ModelLayout, priors: &Priors) -> f64 {
    let s = &state.structure;
    let mut lp = log_prior_bits(s, layout, priors);
    lp += log_uniform_order(s.l2, layout.l2_max) + log_uniform_order(s.l3, layout.l3_max);
    for node in &state.nodes {
        lp += priors.sigma.log_density(node.sigma);
        lp += node.tau.iter().map(|&t| priors.tau.log_density(t)).sum::<f64>();
    }
    lp
}

/// Bernoulli part of the prior over edge bits and sampled d bits.
pub fn log_prior_bits(s: &StructureState, layout: &ModelLayout, priors: &Priors) -> f64 {
    let mut lp: f64 = s.edges.iter().map(|&b| log_bernoulli(priors.p, b)).sum();
    for d in &s.d {
        for (db, &bit) in d.iter().enumerate() {
            if layout.d_free[db] {
                lp += log_bernoulli(priors.p_d(), bit);
            }
        }
    }
    lp
}

pub fn log_uniform_order(l: u8, l_max: u8) -> f64 {
    if l >= 1 && l <= l_max {
        -(l_max as f64).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Per-node log marginal likelihoods of `state`.
pub fn node_log_likelihoods(state: &ModelState, stats: &[NodeSuffStats], layout: &ModelLayout, dt: f64) -> Result<Vec<f64>> {
    let mut ws = Workspace::default();
    let mut active = Vec::new();
    (0..layout.n_nodes())
        .map(|i| {
            layout.active_columns_into(i, &state.structure, &mut active);
            let node = &state.nodes[i];
            ws.log_marginal_likelihood(&stats[i], &active, node.sigma, &node.tau, dt)
        })
        .collect()
}

/// `beta * sum_i log L_i + log prior`. At `beta = 0` the likelihood is not evaluated.
pub fn log_tempered_posterior(state: &ModelState, stats: &[NodeSuffStats], layout: &ModelLayout, priors: &Priors, beta: f64, dt: f64) -> Result<f64> {
    let lp = log_prior(state, layout, priors);
    if beta == 0.0 {
        return Ok(lp);
    }
    let ll: f64 = node_log_likelihoods(state, stats, layout, dt)?.iter().sum();
    Ok(beta * ll + lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct dense evaluation of the M x M Gaussian.
    fn dense_lml(g: &DMatrix<f64>, y: &DVector<f64>, active: &[usize], sigma: f64, tau: &[f64], dt: f64) -> f64 {
        let m = y.len();
        let mut cov = DMatrix::<f64>::identity(m, m) * sigma * sigma;
        for (r, &c) in active.iter().enumerate() {
            let col = g.column(c);
            cov += (col * col.transpose()) * (dt * dt * tau[r] * tau[r]);
        }
        let chol = cov.cholesky().unwrap();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let sol = chol.solve(y);
        -0.5 * m as f64 * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * y.dot(&sol)
    }

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, gamma: usize) -> (DesignMatrix, Vec<f64>, DMatrix<f64>) {
        let g: Vec<f64> = (0..m * gamma).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        let dm = DesignMatrix { node: 0, rows: m, cols: gamma, g: g.clone() };
        (dm, y, DMatrix::from_row_slice(m, gamma, &g))
    }

    #[test]
    fn empty_active_set_is_isotropic() {
        let dm = DesignMatrix { node: 0, rows: 3, cols: 1, g: vec![1.0; 3] };
        let y = [0.1, -0.2, 0.3];
        let stats = NodeSuffStats::new(&dm, &y).unwrap();
        let sigma = 0.7f64;
        let want = -1.5 * (2.0 * PI * sigma * sigma).ln() - dot(&y, &y) / (2.0 * sigma * sigma);
        assert_relative_eq!(log_marginal_likelihood(&stats, &[], sigma, &[], 0.1).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn two_sample_hand_case() {
        let dm = DesignMatrix { node: 0, rows: 2, cols: 1, g: vec![1.0, 0.0] };
        let stats = NodeSuffStats::new(&dm, &[0.0, 0.0]).unwrap();
        let got = log_marginal_likelihood(&stats, &[0], 1.0, &[1.0], 1.0).unwrap();
        assert_relative_eq!(got, -(2.0 * PI).ln() - 0.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (dm, y, g) = random_instance(&mut rng, 50, 6);
            let stats = NodeSuffStats::new(&dm, &y).unwrap();
            let active = [0, 2, 5];
            let tau = [0.3, 2.0, 7.0];
            let sigma = rng.random_range(0.05..2.0);
            let fast = log_marginal_likelihood(&stats, &active, sigma, &tau, 0.1).unwrap();
            let dense = dense_lml(&g, &DVector::from_vec(y.clone()), &active, sigma, &tau, 0.1);
            assert!(((fast - dense) / dense).abs() < 1e-8, "{fast} vs {dense}");
        }
    }

    #[test]
    fn scalar_posterior_example() {
        let dm = DesignMatrix { node: 0, rows: 1, cols: 1, g: vec![1.0] };
        let stats = NodeSuffStats::new(&dm, &[0.5]).unwrap();
        let post = coefficient_posterior(&stats, &[0], 1.0, &[10.0], 1.0).unwrap();
        assert_relative_eq!(post.mean[0], 0.5 / 1.01, epsilon = 1e-12);
        assert_relative_eq!(post.cov[0], 1.0 / 1.01, epsilon = 1e-12);
        let zero = NodeSuffStats::new(&dm, &[0.0]).unwrap();
        assert_eq!(coefficient_posterior(&zero, &[0], 0.3, &[2.0], 0.1).unwrap().mean[0], 0.0);
    }

    #[test]
    fn posterior_mean_shrinks_with_tau() {
        let dm = DesignMatrix { node: 0, rows: 1, cols: 1, g: vec![1.0] };
        let stats = NodeSuffStats::new(&dm, &[0.5]).unwrap();
        let means: Vec<f64> = [10.0, 3.0, 1.0, 0.3, 0.01]
            .iter()
            .map(|&t| coefficient_posterior(&stats, &[0], 1.0, &[t], 1.0).unwrap().mean[0])
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn posterior_mean_solves_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (dm, y, _) = random_instance(&mut rng, 80, 5);
        let stats = NodeSuffStats::new(&dm, &y).unwrap();
        let active = [0, 1, 3, 4];
        let tau = [1.0, 0.5, 4.0, 9.0];
        let (sigma, dt) = (0.3, 0.1);
        let post = coefficient_posterior(&stats, &active, sigma, &tau, dt).unwrap();
        let s2 = sigma * sigma;
        for (r, &a) in active.iter().enumerate() {
            let mut lhs = post.mean[r] / (tau[r] * tau[r]);
            for (c, &b) in active.iter().enumerate() {
                lhs += dt * dt / s2 * stats.gtg[a * 5 + b] * post.mean[c];
            }
            assert!((lhs - dt / s2 * stats.gty[a]).abs() < 1e-10);
        }
    }

    #[test]
    fn deactivating_a_vanishing_column_is_continuous() {
        // as tau -> 0 the one-column likelihood tends to the empty one
        let dm = DesignMatrix { node: 0, rows: 4, cols: 1, g: vec![1.0, -0.5, 0.2, 0.9] };
        let stats = NodeSuffStats::new(&dm, &[0.1, 0.0, -0.2, 0.05]).unwrap();
        let base = log_marginal_likelihood(&stats, &[], 0.2, &[], 0.1).unwrap();
        let mut prev = f64::INFINITY;
        for t in [1.0, 0.1, 0.01, 0.001] {
            let d = (log_marginal_likelihood(&stats, &[0], 0.2, &[t], 0.1).unwrap() - base).abs();
            // |delta| <= dt^2 t^2 (|G|^2 + (G.Y)^2 / s^2) / (2 s^2) to first order
            let bound = 0.01 * t * t * (stats.gtg[0] + stats.gty[0].powi(2) / 0.04) / 0.08;
            assert!(d <= bound * 1.01 + 1e-15, "{d} > {bound}");
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn prior_examples() {
        let (layout, _) = ModelLayout::network(3, 3, 3, false).unwrap();
        let priors = Priors::default();
        let mut state = ModelState {
            structure: layout.empty_structure(),
            nodes: (0..3).map(|i| NodeState { sigma: 0.5, tau: vec![1.0; layout.n_cols(i)] }).collect(),
        };
        let bits = (layout.n_bits + 6) as f64;
        assert_relative_eq!(log_prior_bits(&state.structure, &layout, &priors), -bits * 2f64.ln(), epsilon = 1e-12);
        state.structure.edges[3] = true;
        state.structure.d[0][1] = false;
        assert_relative_eq!(log_prior_bits(&state.structure, &layout, &priors), -bits * 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(log_uniform_order(2, 3), -(3f64.ln()));
        assert_eq!(log_uniform_order(4, 3), f64::NEG_INFINITY);
        state.nodes[1].sigma = 6.0;
        assert_eq!(log_prior(&state, &layout, &priors), f64::NEG_INFINITY);
        state.nodes[1].sigma = 0.02;
        assert_eq!(log_prior(&state, &layout, &priors), f64::NEG_INFINITY);
    }

    #[test]
    fn tempering_is_linear_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (dm, y, _) = random_instance(&mut rng, 40, 3);
        let stats = vec![NodeSuffStats::new(&dm, &y).unwrap()];
        let layout = ModelLayout::one_bit_per_column(3);
        let priors = Priors::default();
        let mut structure = layout.empty_structure();
        structure.edges = vec![true, false, true];
        let state = ModelState { structure, nodes: vec![NodeState { sigma: 0.4, tau: vec![1.0, 2.0, 3.0] }] };
        let p0 = log_tempered_posterior(&state, &stats, &layout, &priors, 0.0, 0.1).unwrap();
        let p1 = log_tempered_posterior(&state, &stats, &layout, &priors, 1.0, 0.1).unwrap();
        let ph = log_tempered_posterior(&state, &stats, &layout, &priors, 0.5, 0.1).unwrap();
        assert_eq!(p0, log_prior(&state, &layout, &priors));
        assert_relative_eq!(ph, 0.5 * (p0 + p1), epsilon = 1e-10);
    }

    #[test]
    fn posterior_differences_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (dm, y, g) = random_instance(&mut rng, 30, 4);
        let stats = vec![NodeSuffStats::new(&dm, &y).unwrap()];
        let layout = ModelLayout::one_bit_per_column(4);
        let priors = Priors { p: 0.3, ..Priors::default() };
        let tau = vec![0.5, 1.5, 2.5, 3.5];
        let make = |bits: [bool; 4]| {
            let mut s = layout.empty_structure();
            s.edges = bits.to_vec();
            ModelState { structure: s, nodes: vec![NodeState { sigma: 0.2, tau: tau.clone() }] }
        };
        let (a, b) = (make([true, false, false, true]), make([false, true, true, true]));
        let diff = log_tempered_posterior(&a, &stats, &layout, &priors, 1.0, 0.1).unwrap()
            - log_tempered_posterior(&b, &stats, &layout, &priors, 1.0, 0.1).unwrap();
        let yv = DVector::from_vec(y.clone());
        let la = dense_lml(&g, &yv, &[0, 3], 0.2, &[0.5, 3.5], 0.1) + 2.0 * 0.3f64.ln() + 2.0 * 0.7f64.ln();
        let lb = dense_lml(&g, &yv, &[1, 2, 3], 0.2, &[1.5, 2.5, 3.5], 0.1) + 3.0 * 0.3f64.ln() + 0.7f64.ln();
        assert_relative_eq!(diff, la - lb, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn permuting_active_columns_is_invariant(seed in 0u64..1000, rot in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (dm, y, _) = random_instance(&mut rng, 25, 4);
            let stats = NodeSuffStats::new(&dm, &y).unwrap();
            let mut active = vec![0usize, 1, 2, 3];
            let mut tau = vec![0.2, 0.9, 3.0, 8.0];
            let base = log_marginal_likelihood(&stats, &active, 0.3, &tau, 0.1).unwrap();
            active.rotate_left(rot);
            tau.rotate_left(rot);
            active.swap(0, 3);
            tau.swap(0, 3);
            let perm = log_marginal_likelihood(&stats, &active, 0.3, &tau, 0.1).unwrap();
            prop_assert!(((base - perm) / base).abs() < 1e-10);
        }
    }
}
