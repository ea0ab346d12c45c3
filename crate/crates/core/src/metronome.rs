//! Two coupled metronomes on a movable base: simulation, phase extraction, and the
//! phase-difference regression fed to the sampler.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::dictionary::{DesignMatrix, ModelLayout, Trig};
use crate::rng::{self, Tag};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetronomeSpec {
    pub eps: f64,
    pub mu: f64,
    /// Viscous damping.
    pub beta_damp: f64,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub dt_int: f64,
    pub sample_dt: f64,
    pub t_end: f64,
    pub x0: [f64; 2],
    pub v0: [f64; 2],
    pub seed: u64,
}

impl Default for MetronomeSpec {
    fn default() -> Self {
        MetronomeSpec {
            eps: 0.3,
            mu: 3.0,
            beta_damp: 0.2,
            a: 10.0,
            b: 10.0,
            sigma: 0.12,
            dt_int: 0.001,
            sample_dt: 0.1,
            t_end: 1000.0,
            x0: [1.0, 0.8],
            v0: [0.0, 0.0],
            seed: 1,
        }
    }
}

impl MetronomeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.dt_int > 0.0) || !(self.t_end > 0.0) || !(self.sample_dt > 0.0) {
            return Err(Error::invalid("eps, dt_int, sample_dt and t_end must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("sigma must be non-negative"));
        }
        self.substeps()?;
        Ok(())
    }

    fn substeps(&self) -> Result<usize> {
        let k = (self.sample_dt / self.dt_int).round();
        if k < 1.0 || ((k * self.dt_int - self.sample_dt) / self.sample_dt).abs() > 1e-9 {
            return Err(Error::invalid("sample_dt must be an integer multiple of dt_int"));
        }
        Ok(k as usize)
    }
}

/// Escapement drive: `a x^3 - b x^5` while `x v > 0`, else zero.
pub fn escapement(x: f64, v: f64, a: f64, b: f64) -> f64 {
    if x * v > 0.0 {
        let x3 = x * x * x;
        a * x3 - b * x3 * x * x
    } else {
        0.0
    }
}

/// Displacements and velocities sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetronomeStates {
    pub dt: f64,
    pub x: [Vec<f64>; 2],
    pub v: [Vec<f64>; 2],
}

impl MetronomeStates {
    pub fn len(&self) -> usize {
        self.x[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.x[0].is_empty()
    }
}

fn accelerations(spec: &MetronomeSpec, x: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    let (eps, mu, beta) = (spec.eps, spec.mu, spec.beta_damp);
    let g = [escapement(x[0], v[0], spec.a, spec.b), escapement(x[1], v[1], spec.a, spec.b)];
    let second = eps * eps * mu * (-beta * (v[0] + v[1]) + g[0] + g[1]);
    let base = mu * (x[0] + x[1]);
    [
        -x[0] - eps * (base + beta * v[0] - g[0]) + second,
        -x[1] - eps * (base + beta * v[1] - g[1]) + second,
    ]
}

/// Euler–Maruyama on the first-order system with noise on the velocities.
pub fn simulate_metronomes(spec: &MetronomeSpec) -> Result<MetronomeStates> {
    spec.validate()?;
    let every = spec.substeps()?;
    let n_int = (spec.t_end / spec.dt_int).round() as usize;
    let n_samples = n_int / every + 1;
    let mut rngs = [rng::stream(spec.seed, Tag::Metronome, 0), rng::stream(spec.seed, Tag::Metronome, 1)];
    let noise = spec.sigma * spec.dt_int.sqrt();
    let (mut x, mut v) = (spec.x0, spec.v0);
    let mut out = MetronomeStates {
        dt: spec.sample_dt,
        x: [Vec::with_capacity(n_samples), Vec::with_capacity(n_samples)],
        v: [Vec::with_capacity(n_samples), Vec::with_capacity(n_samples)],
    };
    let push = |out: &mut MetronomeStates, x: [f64; 2], v: [f64; 2]| {
        for k in 0..2 {
            out.x[k].push(x[k]);
            out.v[k].push(v[k]);
        }
    };
    push(&mut out, x, v);
    for step in 1..=n_int {
        let acc = accelerations(spec, x, v);
        for k in 0..2 {
            x[k] += v[k] * spec.dt_int;
            v[k] += acc[k] * spec.dt_int;
            if noise > 0.0 {
                v[k] += noise * rng::normal(&mut rngs[k]);
            }
        }
        if !(x[0].is_finite() && x[1].is_finite() && v[0].is_finite() && v[1].is_finite()) {
            return Err(Error::Divergence { step, what: format!("metronome state at t = {}", step as f64 * spec.dt_int) });
        }
        if step % every == 0 {
            push(&mut out, x, v);
        }
    }
    Ok(out)
}

/// Unwrapped phases of both oscillators and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub dt: f64,
    pub theta: [Vec<f64>; 2],
    pub psi: Vec<f64>,
}

impl PhaseSeries {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Samples with `t <= t_end`.
    pub fn window(&self, t_end: f64) -> Result<PhaseSeries> {
        let n = (t_end / self.dt).round() as usize + 1;
        if n > self.len() {
            return Err(Error::invalid(format!(
                "window [0, {t_end}] is longer than the series ({} samples at dt = {})",
                self.len(),
                self.dt
            )));
        }
        Ok(PhaseSeries {
            dt: self.dt,
            theta: [self.theta[0][..n].to_vec(), self.theta[1][..n].to_vec()],
            psi: self.psi[..n].to_vec(),
        })
    }
}

/// Adds multiples of `2 pi` so that consecutive values never jump by more than `pi`.
pub fn unwrap(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = 0.0;
    for (m, &r) in raw.iter().enumerate() {
        if m > 0 {
            let d = r - raw[m - 1];
            if d > PI {
                offset -= TAU * ((d + PI) / TAU).floor();
            } else if d < -PI {
                offset += TAU * ((-d + PI) / TAU).floor();
            }
        }
        out.push(r + offset);
    }
    out
}

/// Phase `theta = arg(x - i v) = atan2(-v, x)`, unwrapped; `psi = theta_1 - theta_2`.
pub fn extract_phase(states: &MetronomeStates) -> Result<PhaseSeries> {
    let mut theta: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for k in 0..2 {
        let mut raw = Vec::with_capacity(states.len());
        for (m, (&x, &v)) in states.x[k].iter().zip(&states.v[k]).enumerate() {
            if x.abs() < 1e-9 && v.abs() < 1e-9 {
                return Err(Error::AmplitudeCollapse { sample: m, time: m as f64 * states.dt });
            }
            raw.push((-v).atan2(x));
        }
        theta[k] = unwrap(&raw);
    }
    let psi = theta[0].iter().zip(&theta[1]).map(|(a, b)| a - b).collect();
    Ok(PhaseSeries { dt: states.dt, theta, psi })
}

/// Targets `psi_{m+1} - psi_m` and columns `sin(l psi_m), cos(l psi_m)` for `l = 1..=l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiRegression {
    pub y: Vec<f64>,
    pub design: DesignMatrix,
    pub columns: Vec<(u8, Trig)>,
    pub layout: ModelLayout,
}

pub fn psi_columns(l_max: u8) -> Vec<(u8, Trig)> {
    (1..=l_max).flat_map(|l| [(l, Trig::Sin), (l, Trig::Cos)]).collect()
}

pub fn build_psi_regression(ps: &PhaseSeries, l_max: u8) -> Result<PsiRegression> {
    if ps.len() < 2 {
        return Err(Error::dimension("phase series needs at least two samples"));
    }
    if l_max == 0 {
        return Err(Error::invalid("l_max must be at least 1"));
    }
    let columns = psi_columns(l_max);
    let rows = ps.len() - 1;
    let mut g = Vec::with_capacity(rows * columns.len());
    for &p in &ps.psi[..rows] {
        g.extend(columns.iter().map(|&(l, trig)| trig.eval(l as f64 * p)));
    }
    let y = ps.psi.windows(2).map(|w| w[1] - w[0]).collect();
    let cols = columns.len();
    Ok(PsiRegression {
        y,
        design: DesignMatrix { node: 0, rows, cols, g },
        layout: ModelLayout::one_bit_per_column(cols),
        columns,
    })
}

/// Value of the fitted trigonometric field at `psi`; `coefs` follow [`psi_columns`] order.
pub fn field(coefs: &[f64], psi: f64) -> f64 {
    coefs
        .iter()
        .enumerate()
        .map(|(c, &w)| {
            let l = (c / 2 + 1) as f64;
            if c % 2 == 0 {
                w * (l * psi).sin()
            } else {
                w * (l * psi).cos()
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Stability {
    Stable,
    Unstable,
    /// Touching zero without a sign change.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedPoint {
    pub psi: f64,
    pub stability: Stability,
}

const GRID: usize = 4096;

/// Zeros of the fitted field on `[0, 2 pi)`, from a 4096-point scan refined by bisection.
pub fn fixed_points(coefs: &[f64]) -> Vec<FixedPoint> {
    if coefs.iter().all(|&c| c == 0.0) {
        return Vec::new();
    }
    let h = TAU / GRID as f64;
    let f: Vec<f64> = (0..GRID).map(|k| field(coefs, k as f64 * h)).collect();
    let mut out = Vec::new();
    for k in 0..GRID {
        let (f0, f1) = (f[k], f[(k + 1) % GRID]);
        let prev = f[(k + GRID - 1) % GRID];
        if f0 == 0.0 {
            let stability = match (prev > 0.0, f1 < 0.0, prev < 0.0, f1 > 0.0) {
                (true, true, _, _) => Stability::Stable,
                (_, _, true, true) => Stability::Unstable,
                _ => Stability::Marginal,
            };
            out.push(FixedPoint { psi: k as f64 * h, stability });
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi) = (k as f64 * h, (k + 1) as f64 * h);
            let sign_lo = f0 > 0.0;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let fm = field(coefs, mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if (fm > 0.0) == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let psi = (0.5 * (lo + hi)).rem_euclid(TAU);
            let stability = if sign_lo { Stability::Stable } else { Stability::Unstable };
            out.push(FixedPoint { psi, stability });
        }
    }
    out
}

/// `n` evenly spaced samples of the field on `[0, 2 pi)`.
pub fn sample_field(coefs: &[f64], n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let psi = TAU * k as f64 / n as f64;
            (psi, field(coefs, psi))
        })
        .collect()
}
