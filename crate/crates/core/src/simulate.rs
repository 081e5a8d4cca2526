//! Monte Carlo check of a design: simulate surveys, fit the MLE, compare the spread of
//! `u^T p_hat` with the predicted variance `a(v; p) / C`.
//!
//! Random streams: every (replication, pattern) pair draws from its own ChaCha8 stream,
//! `seed` as key and `(replication << 16) | pattern_index` as stream id. Datasets are
//! therefore reproducible whatever the thread count or the order of evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copt::{self, Design};
use crate::error::{Error, Result};
use crate::linalg::{dot, solve_dense, SymMatrix};
use crate::model::{Channel, DiseaseModel, Parameter, TestPattern};

/// Outcome counts of one pattern, indexed like `outcome_space(pattern)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub pattern: TestPattern,
    pub counts: Vec<u64>,
}

impl PatternCounts {
    pub fn participants(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub seed: u64,
    pub replication: u64,
    pub patterns: Vec<PatternCounts>,
}

impl SurveyDataset {
    pub fn participants(&self) -> u64 {
        self.patterns.iter().map(|p| p.participants()).sum()
    }
}

fn stream_id(replication: u64, pattern_index: usize) -> u64 {
    (replication << 16) | pattern_index as u64
}

/// One simulated survey under `design` (integer counts) at the true parameter `p`.
pub fn sample_outcomes(design: &Design, p: &Parameter, model: &DiseaseModel, seed: u64) -> Result<SurveyDataset> {
    sample_replication(design, p, model, seed, 0)
}

pub fn sample_replication(
    design: &Design,
    p: &Parameter,
    model: &DiseaseModel,
    seed: u64,
    replication: u64,
) -> Result<SurveyDataset> {
    if p.dim() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "parameter has dimension {}, model expects {}",
            p.dim(),
            model.dim()
        )));
    }
    if design.entries.len() >= 1 << 16 {
        return Err(Error::InvalidInput("too many patterns for the stream layout".into()));
    }
    let mut states: Vec<f64> = p.as_slice().to_vec();
    states.push(p.reference_mass().max(0.0));
    let patterns = design
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.integer_count > 0)
        .map(|(i, e)| {
            if e.pattern.len() != model.num_tests() {
                return Err(Error::Structural(format!(
                    "pattern {} does not match {} tests",
                    e.pattern,
                    model.num_tests()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(replication, i));
            Ok(PatternCounts {
                pattern: e.pattern.clone(),
                counts: draw_pattern(&mut rng, &e.pattern, e.integer_count, &states, model),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurveyDataset {
        seed,
        replication,
        patterns,
    })
}

fn draw_pattern(rng: &mut ChaCha8Rng, t: &TestPattern, n: u64, states: &[f64], model: &DiseaseModel) -> Vec<u64> {
    let included: Vec<usize> = t.included().collect();
    let m = included.len();
    // P(positive | state) for each included test
    let positive: Vec<Vec<f64>> = (0..states.len())
        .map(|s| {
            included
                .iter()
                .map(|&j| {
                    let nominal = model.nominal_positive(s, j);
                    let r = model.tests[j].reliability(nominal);
                    if nominal {
                        r
                    } else {
                        1.0 - r
                    }
                })
                .collect()
        })
        .collect();
    let mut counts = vec![0u64; 1 << m];
    for _ in 0..n {
        let s = draw_state(rng, states);
        let mut index = 0usize;
        for (i, &prob) in positive[s].iter().enumerate() {
            if rng.random::<f64>() < prob {
                index |= 1 << (m - 1 - i);
            }
        }
        counts[index] += 1;
    }
    counts
}

fn draw_state(rng: &mut ChaCha8Rng, states: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (s, &ps) in states.iter().enumerate() {
        acc += ps;
        if x < acc {
            return s;
        }
    }
    // x landed in the rounding slack above the last cumulative sum
    states.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Stop when `|P(p + g) - p|_inf` falls below this, `g` being the gradient of the
    /// per-participant log-likelihood and `P` the projection onto the feasible set.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleFit {
    pub p_hat: Parameter,
    /// Total log-likelihood at `p_hat`.
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Log-likelihood of a dataset as a function of `p`, with precomputed channels.
pub struct Likelihood {
    terms: Vec<(Channel, Vec<f64>)>,
    total: f64,
    dim: usize,
}

impl Likelihood {
    pub fn new(dataset: &SurveyDataset, model: &DiseaseModel) -> Result<Self> {
        let mut terms = Vec::new();
        let mut total = 0.0;
        for pc in &dataset.patterns {
            if pc.pattern.len() != model.num_tests() {
                return Err(Error::Structural(format!(
                    "pattern {} does not match {} tests",
                    pc.pattern,
                    model.num_tests()
                )));
            }
            let ch = Channel::new(model, pc.pattern.clone());
            if ch.num_outcomes() != pc.counts.len() {
                return Err(Error::Structural(format!(
                    "pattern {} has {} outcomes, dataset lists {}",
                    pc.pattern,
                    ch.num_outcomes(),
                    pc.counts.len()
                )));
            }
            total += pc.participants() as f64;
            terms.push((ch, pc.counts.iter().map(|&c| c as f64).collect()));
        }
        if total == 0.0 {
            return Err(Error::InvalidInput("dataset has no participants".into()));
        }
        Ok(Likelihood {
            terms,
            total,
            dim: model.dim(),
        })
    }

    pub fn participants(&self) -> f64 {
        self.total
    }

    /// Total log-likelihood; `-inf` where an observed outcome has zero probability.
    pub fn value(&self, p: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (ch, counts) in &self.terms {
            for (prob, &n) in ch.mixture(p).into_iter().zip(counts) {
                if n > 0.0 {
                    if !(prob > 0.0) {
                        return f64::NEG_INFINITY;
                    }
                    acc += n * prob.ln();
                }
            }
        }
        acc
    }

    /// Hessian of the total log-likelihood, `-sum n_y d_y d_y^T / P_y^2`.
    pub fn hessian(&self, p: &[f64]) -> SymMatrix {
        let mut h = SymMatrix::zeros(self.dim);
        for (ch, counts) in &self.terms {
            for (o, (prob, &n)) in ch.mixture(p).into_iter().zip(counts).enumerate() {
                if n > 0.0 {
                    let d = ch.difference(o);
                    h.add_outer(d, d, -n / (prob * prob));
                }
            }
        }
        h
    }

    /// Gradient of the total log-likelihood, `sum n_y d_y / P_y`.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (ch, counts) in &self.terms {
            for (o, (prob, &n)) in ch.mixture(p).into_iter().zip(counts).enumerate() {
                if n > 0.0 {
                    let w = n / prob;
                    for (gi, di) in g.iter_mut().zip(ch.difference(o)) {
                        *gi += w * di;
                    }
                }
            }
        }
        g
    }
}

/// Euclidean projection onto `{p >= 0, sum(p) <= 1}`.
pub fn project_capped_simplex(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        return clipped;
    }
    // onto {p >= 0, sum(p) = 1}
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

fn stationarity(p: &[f64], g_mean: &[f64]) -> f64 {
    let stepped: Vec<f64> = p.iter().zip(g_mean).map(|(a, b)| a + b).collect();
    project_capped_simplex(&stepped)
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Maximizer of the concave model `g.s + s^T H s / 2` over steps keeping `p + s` in
/// `{p >= 0, sum(p) <= 1}`. The maximum sits in the relative interior of some face, so every
/// face (subset of active constraints) is solved as an equality-constrained problem and the
/// best feasible candidate wins. There are `2^(k+1)` faces, which is cheap for small `k`.
fn newton_step(p: &[f64], g: &[f64], h: &SymMatrix) -> Option<Vec<f64>> {
    let k = p.len();
    let slack = 1.0 - p.iter().sum::<f64>();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for face in 0u32..(1 << (k + 1)) {
        let active: Vec<usize> = (0..=k).filter(|&c| face >> c & 1 == 1).collect();
        let n = k + active.len();
        // [H  -E^T] [s]   [-g]
        // [E   0  ] [l] = [ f]
        let mut m = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 0..k {
            for j in 0..k {
                m[i][j] = h.get(i, j);
            }
            rhs[i] = -g[i];
        }
        for (r, &c) in active.iter().enumerate() {
            let row = k + r;
            if c < k {
                m[row][c] = 1.0;
                m[c][row] = -1.0;
                rhs[row] = -p[c];
            } else {
                for i in 0..k {
                    m[row][i] = 1.0;
                    m[i][row] = -1.0;
                }
                rhs[row] = slack;
            }
        }
        let Some(sol) = solve_dense(m, rhs) else { continue };
        let step = sol[..k].to_vec();
        let next: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
        if next.iter().any(|&x| x < -1e-12) || next.iter().sum::<f64>() > 1.0 + 1e-12 {
            continue;
        }
        let value = dot(g, &step) + 0.5 * h.quad_form(&step, &step);
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, step));
        }
    }
    best.map(|b| b.1)
}

/// Maximum-likelihood estimate over the parameter simplex, started at the centroid.
///
/// Projected Newton: each iteration maximizes the local quadratic model of the
/// log-likelihood over the feasible set, then backtracks (Armijo) along that step.
pub fn mle(dataset: &SurveyDataset, model: &DiseaseModel) -> Result<MleFit> {
    mle_with(dataset, model, &MleOptions::default())
}

pub fn mle_with(dataset: &SurveyDataset, model: &DiseaseModel, opts: &MleOptions) -> Result<MleFit> {
    let lik = Likelihood::new(dataset, model)?;
    let k = model.dim();
    let scale = 1.0 / lik.participants();
    let mut p = vec![1.0 / (k + 1) as f64; k];
    let mut f = lik.value(&p);
    for iter in 0..opts.max_iter {
        let g = lik.gradient(&p);
        let mean_g: Vec<f64> = g.iter().map(|x| x * scale).collect();
        if stationarity(&p, &mean_g) <= opts.tol {
            return Ok(MleFit {
                p_hat: Parameter::new(p)?,
                log_likelihood: f,
                iterations: iter,
            });
        }
        let mut h = lik.hessian(&p);
        // keep the model strictly concave when the data leave a direction unidentified
        let ridge = 1e-12 * (0..k).map(|i| -h.get(i, i)).fold(0.0, f64::max).max(1e-300);
        for i in 0..k {
            h.set(i, i, h.get(i, i) - ridge);
        }
        let stuck = || Error::NonConvergence {
            what: "maximum-likelihood fit",
            iterations: iter,
            best: p.clone(),
        };
        let step = newton_step(&p, &g, &h).ok_or_else(stuck)?;
        let slope = dot(&g, &step);
        if slope <= 64.0 * f64::EPSILON * f.abs() {
            // the predicted gain is below the resolution of f: values cannot rank the
            // trial points any more, but the Newton step is reliable this close
            p = project_capped_simplex(&p.iter().zip(&step).map(|(a, b)| a + b).collect::<Vec<_>>());
            f = lik.value(&p);
            continue;
        }
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            let trial = project_capped_simplex(&trial);
            let f_trial = lik.value(&trial);
            if f_trial >= f + 1e-4 * alpha * slope {
                p = trial;
                f = f_trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(stuck());
            }
        }
    }
    Err(Error::NonConvergence {
        what: "maximum-likelihood fit",
        iterations: opts.max_iter,
        best: p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub replications: usize,
    pub seed: u64,
    pub budget: f64,
    /// Sample variance of `u^T p_hat` over replications.
    pub empirical_var: f64,
    /// `a(v; p) / C`
    pub predicted_var: f64,
    /// `empirical_var / predicted_var`
    pub ratio: f64,
    /// Mean of `u^T p_hat - u^T p`.
    pub bias: f64,
    /// Standard error of `bias`.
    pub bias_se: f64,
    /// Jarque-Bera statistic of the standardized estimates.
    pub jarque_bera: f64,
    /// Asymptotic p-value of `jarque_bera` (chi-squared, 2 degrees of freedom).
    pub normality_p: f64,
}

/// Compensated running sum.
#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut k = Kahan::default();
    xs.for_each(|x| k.add(x));
    k.sum
}

/// Runs `replications` sample/fit cycles of `design` at the true `p`.
pub fn variance_check(
    p: &Parameter,
    model: &DiseaseModel,
    design: &Design,
    replications: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if replications < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 replications, got {replications}"
        )));
    }
    design.validate()?;
    let patterns = design.patterns();
    let predicted_var = copt::objective(&design.fractions(), p, model, &patterns)? / design.budget;
    if !predicted_var.is_finite() {
        return Err(Error::NoFiniteDesign {
            p: p.as_slice().to_vec(),
        });
    }
    let estimates = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let data = sample_replication(design, p, model, seed, r)?;
            Ok(mle(&data, model)?.p_hat.linear(&model.u))
        })
        .collect::<Result<Vec<f64>>>()?;

    let truth = p.linear(&model.u);
    let n = replications as f64;
    let mean = kahan_sum(estimates.iter().copied()) / n;
    let m2 = kahan_sum(estimates.iter().map(|x| (x - mean).powi(2))) / n;
    let m3 = kahan_sum(estimates.iter().map(|x| (x - mean).powi(3))) / n;
    let m4 = kahan_sum(estimates.iter().map(|x| (x - mean).powi(4))) / n;
    let empirical_var = m2 * n / (n - 1.0);
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jarque_bera = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    Ok(VarianceReport {
        replications,
        seed,
        budget: design.budget,
        empirical_var,
        predicted_var,
        ratio: empirical_var / predicted_var,
        bias: mean - truth,
        bias_se: (empirical_var / n).sqrt(),
        jarque_bera,
        normality_p: (-jarque_bera / 2.0).exp(),
    })
}
