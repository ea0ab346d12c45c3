//! Point estimates from posterior samples and the structure / coefficient error metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::bayes::coefficient_posterior;
use crate::dictionary::{d_bit, BasisId, Dictionary, EdgeIndex, ModelLayout, StructureState};
use crate::oscillator::NetworkGroundTruth;
use crate::sampler::{InclusionTable, Model, SampleRecord};
use crate::{Error, Result};

/// Indicator is 1 iff its probability is strictly above `cutoff`; harmonic orders
/// take the histogram mode, the smaller order winning ties.
pub fn threshold(table: &InclusionTable, cutoff: f64) -> Result<StructureState> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::invalid("cutoff must lie in (0, 1)"));
    }
    let mode = |h: &[f64]| {
        let mut best = 0;
        for (k, &v) in h.iter().enumerate() {
            if v > h[best] {
                best = k;
            }
        }
        best as u8 + 1
    };
    Ok(StructureState {
        edges: table.edges.iter().map(|&p| p > cutoff).collect(),
        d: table.d.iter().map(|v| v.map(|p| p > cutoff)).collect(),
        l2: mode(&table.l2_hist),
        l3: mode(&table.l3_hist),
    })
}

/// Indicator state implied by a ground-truth network: an edge bit is set when the
/// edge carries any term, a d bit when some term has a nonzero coefficient on that
/// trig function.
pub fn truth_structure(truth: &NetworkGroundTruth, layout: &ModelLayout) -> Result<StructureState> {
    let index = EdgeIndex::new(truth.n_nodes);
    if index.len() != layout.n_bits {
        return Err(Error::dimension("ground truth does not match the model layout"));
    }
    let mut s = layout.empty_structure();
    let mut d = [false; 6];
    for t in &truth.terms {
        let bit = index.bit_of(&t.edge).ok_or_else(|| Error::invalid("ground-truth edge not indexed"))?;
        s.edges[bit] = true;
        let (sin_c, cos_c) = expand_term(t.strength, t.lag);
        d[d_bit(t.edge.kind, crate::dictionary::Trig::Sin)] |= sin_c.abs() > 1e-12;
        d[d_bit(t.edge.kind, crate::dictionary::Trig::Cos)] |= cos_c.abs() > 1e-12;
    }
    s.d.iter_mut().for_each(|v| *v = d);
    s.l2 = truth.l2_true;
    s.l3 = truth.l3_true;
    layout.check_structure(&s)?;
    Ok(s)
}

/// `K sin(x + a) = (K cos a) sin x + (K sin a) cos x`.
pub fn expand_term(strength: f64, lag: f64) -> (f64, f64) {
    (strength * lag.cos(), strength * lag.sin())
}

/// Ground-truth coefficient of every dictionary column (`omega_i` on the intrinsic column).
pub fn truth_coefficients(truth: &NetworkGroundTruth, dicts: &[Dictionary]) -> Vec<Vec<f64>> {
    dicts
        .iter()
        .map(|dict| {
            dict.entries
                .iter()
                .map(|b| match *b {
                    BasisId::Intrinsic => truth.omega[dict.node],
                    BasisId::Coupling { edge, harmonic, trig } => truth
                        .terms
                        .iter()
                        .filter(|t| t.edge == edge && t.harmonic == harmonic)
                        .map(|t| {
                            let (s, c) = expand_term(t.strength, t.lag);
                            match trig {
                                crate::dictionary::Trig::Sin => s,
                                crate::dictionary::Trig::Cos => c,
                            }
                        })
                        .sum(),
                })
                .collect()
        })
        .collect()
}

/// Normalized Hamming distance between per-node indicator vectors.
pub fn hamming_error(truth: &[Vec<bool>], hat: &[Vec<bool>]) -> Result<f64> {
    check_layout(truth.iter().map(Vec::len), hat.iter().map(Vec::len))?;
    let total: usize = truth.iter().map(Vec::len).sum();
    let diff: usize = truth.iter().zip(hat).map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count()).sum();
    Ok(if total == 0 { 0.0 } else { diff as f64 / total as f64 })
}

/// Root mean square difference between padded coefficient vectors.
pub fn rmse_theta(truth: &[Vec<f64>], hat: &[Vec<f64>]) -> Result<f64> {
    check_layout(truth.iter().map(Vec::len), hat.iter().map(Vec::len))?;
    let total: usize = truth.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let sq: f64 = truth.iter().zip(hat).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))).sum();
    Ok((sq / total as f64).sqrt())
}

fn check_layout(a: impl ExactSizeIterator<Item = usize>, b: impl ExactSizeIterator<Item = usize>) -> Result<()> {
    if a.len() != b.len() || a.zip(b).any(|(x, y)| x != y) {
        return Err(Error::dimension("indicator layouts differ"));
    }
    Ok(())
}

/// Thresholded structure with the scale estimates and padded coefficients.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointEstimate {
    pub structure: StructureState,
    pub sigma_hat: Vec<f64>,
    pub tau_hat: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

/// Posterior means of `sigma` per node and of each `tau` over the samples where its
/// column was active (over all samples when it never was).
pub fn scale_estimates(model: &Model, records: &[SampleRecord]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if records.is_empty() {
        return Err(Error::invalid("no posterior samples"));
    }
    let layout = &model.layout;
    let n = records.len() as f64;
    let sigma_hat = (0..layout.n_nodes()).map(|i| records.iter().map(|r| r.sigma[i]).sum::<f64>() / n).collect();
    let tau_hat = (0..layout.n_nodes())
        .map(|i| {
            (0..layout.n_cols(i))
                .map(|c| {
                    let (mut sum, mut cnt, mut all) = (0.0, 0usize, 0.0);
                    for r in records {
                        let t = r.tau[i][c];
                        all += t;
                        if layout.is_active(i, c, &r.structure) {
                            sum += t;
                            cnt += 1;
                        }
                    }
                    if cnt > 0 {
                        sum / cnt as f64
                    } else {
                        all / n
                    }
                })
                .collect()
        })
        .collect();
    Ok((sigma_hat, tau_hat))
}

/// Posterior-mean coefficients conditional on `structure`, zero-padded to the caps.
pub fn estimate_coefficients(model: &Model, structure: &StructureState, sigma_hat: &[f64], tau_hat: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let layout = &model.layout;
    (0..layout.n_nodes())
        .map(|i| {
            let active = layout.active_columns(i, structure);
            let tau: Vec<f64> = active.iter().map(|&c| tau_hat[i][c]).collect();
            let post = coefficient_posterior(&model.stats[i], &active, sigma_hat[i], &tau, model.dt)?;
            let mut theta = vec![0.0; layout.n_cols(i)];
            for (&c, v) in active.iter().zip(post.mean) {
                theta[c] = v;
            }
            Ok(theta)
        })
        .collect()
}

pub fn point_estimate(model: &Model, records: &[SampleRecord], table: &InclusionTable, cutoff: f64) -> Result<PointEstimate> {
    let structure = threshold(table, cutoff)?;
    let (sigma_hat, tau_hat) = scale_estimates(model, records)?;
    let theta = estimate_coefficients(model, &structure, &sigma_hat, &tau_hat)?;
    Ok(PointEstimate { structure, sigma_hat, tau_hat, theta })
}

/// Zeroes coefficients of inactive columns.
pub fn mask(theta: &[Vec<f64>], active: &[Vec<bool>]) -> Vec<Vec<f64>> {
    theta
        .iter()
        .zip(active)
        .map(|(t, a)| t.iter().zip(a).map(|(v, &on)| if on { *v } else { 0.0 }).collect())
        .collect()
}

/// Mean and standard error over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSummary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Set when only one value was available and the standard error is a placeholder.
    pub single: bool,
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary { mean: f64::NAN, stderr: f64::NAN, n, single: false };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MetricSummary { mean, stderr: 0.0, n, single: true };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    MetricSummary { mean, stderr: (var / n as f64).sqrt(), n, single: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{CouplingKind, Edge};
    use crate::oscillator::CouplingTerm;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn threshold_is_strict() {
        let t = InclusionTable { edges: vec![0.51, 0.5, 0.49], d: vec![[0.5; 6]], l2_hist: vec![0.4, 0.4, 0.2], l3_hist: vec![0.1, 0.2, 0.7] };
        let s = threshold(&t, 0.5).unwrap();
        assert_eq!(s.edges, vec![true, false, false]);
        assert_eq!(s.d[0], [false; 6]);
        assert_eq!((s.l2, s.l3), (1, 3));
        assert!(threshold(&t, 1.0).is_err());
    }

    #[test]
    fn hamming_examples() {
        let a = vec![vec![true, false, true, false]];
        assert_eq!(hamming_error(&a, &a).unwrap(), 0.0);
        let flipped = vec![vec![false, true, false, true]];
        assert_eq!(hamming_error(&a, &flipped).unwrap(), 1.0);
        assert_eq!(hamming_error(&a, &[vec![true, true, false, false]]).unwrap(), 0.5);
        assert!(hamming_error(&a, &[vec![true]]).is_err());
    }

    #[test]
    fn rmse_examples() {
        let t = vec![vec![0.0; 9]];
        let mut h = t.clone();
        assert_eq!(rmse_theta(&t, &h).unwrap(), 0.0);
        h[0][4] = 0.3;
        assert_relative_eq!(rmse_theta(&t, &h).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn lagged_coupling_expansion() {
        let (s, c) = expand_term(0.5, 1.0);
        assert_relative_eq!(s, 0.2702, epsilon = 1e-4);
        assert_relative_eq!(c, 0.4207, epsilon = 1e-4);
    }

    #[test]
    fn truth_tables_follow_the_lags() {
        let truth = NetworkGroundTruth {
            n_nodes: 3,
            omega: vec![0.4, 0.8, 1.2],
            terms: vec![
                CouplingTerm { edge: Edge::pairwise(1, 0), harmonic: 1, strength: 0.5, lag: 1.0 },
                CouplingTerm { edge: Edge::new(CouplingKind::ThreeBodySym, 2, 0, 1), harmonic: 2, strength: 0.5, lag: 0.0 },
            ],
            l2_true: 1,
            l3_true: 2,
        };
        let (layout, dicts) = ModelLayout::network(3, 3, 3, false).unwrap();
        let s = truth_structure(&truth, &layout).unwrap();
        assert_eq!(s.d[0], [true, true, false, false, true, false]);
        assert_eq!((s.l2, s.l3), (1, 2));
        let theta = truth_coefficients(&truth, &dicts);
        assert_eq!(theta[0][0], 0.4);
        let eff = layout.effective_indicators(&s);
        // every nonzero truth coefficient sits on an effective column
        for i in 0..3 {
            for c in 0..theta[i].len() {
                if theta[i][c] != 0.0 {
                    assert!(eff[i][c]);
                }
            }
        }
        assert_eq!(eff[2].iter().filter(|&&b| b).count(), 1 + 2);
    }

    #[test]
    fn summary_of_one_value_is_flagged() {
        let s = summarize(&[0.3]);
        assert!(s.single);
        assert_eq!(s.stderr, 0.0);
        let s = summarize(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(s.mean, 2.0);
        assert_relative_eq!(s.stderr, (1.0f64 / 3.0).sqrt());
    }

    fn bits(n: usize) -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(any::<bool>(), n)
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in bits(12), b in bits(12), c in bits(12)) {
            let (a, b, c) = (vec![a], vec![b], vec![c]);
            let ab = hamming_error(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming_error(&b, &a).unwrap());
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(hamming_error(&a, &c).unwrap() <= ab + hamming_error(&b, &c).unwrap() + 1e-15);
        }

        #[test]
        fn rmse_ignores_column_order(v in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..20), rot in 0usize..20) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let base = rmse_theta(&[a.clone()], &[b.clone()]).unwrap();
            let (mut a2, mut b2) = (a, b);
            let r = rot % a2.len();
            a2.rotate_left(r);
            b2.rotate_left(r);
            prop_assert!((base - rmse_theta(&[a2], &[b2]).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn masking_is_idempotent(v in proptest::collection::vec(-1.0f64..1.0, 8), m in bits(8)) {
            let once = mask(&[v], &[m.clone()]);
            prop_assert_eq!(mask(&once, &[m]), once);
        }
    }
}
