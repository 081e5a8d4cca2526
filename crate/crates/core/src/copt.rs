//! Local c-optimal design.
//!
//! With budget fractions `v_t` on patterns, the asymptotic variance of `u^T p_hat` per unit
//! budget is `a(v; p) = u^T (sum_t v_t I_t(p) / c_t)^{-1} u`. The optimal fractions minimize
//! `a` over the probability simplex and do not depend on the budget; participant counts are
//! `w_t = v_t C / c_t` and the achieved variance is `a(v*; p) / C`.
//!
//! The solver is pairwise Frank-Wolfe with exact line search, started from the uniform
//! distribution, with periodic Newton polishing of the weights on the active support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, SymMatrix};
use crate::model::{Channel, DiseaseModel, Parameter, TestPattern};
use crate::normal::two_sided_z;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the Frank-Wolfe duality gap falls below `gap_tol * a(v; p)`.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Relative KKT residual a solution must reach.
    pub kkt_tol: f64,
    /// Weights at or below this are treated as off-support.
    pub support_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-9,
            max_iter: 100_000,
            kkt_tol: 1e-6,
            support_eps: 1e-7,
        }
    }
}

const POLISH_EVERY: usize = 8;

/// Cost-scaled information matrices `I_t(p) / c_t` of a pattern set at a fixed `p`.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    patterns: Vec<TestPattern>,
    costs: Vec<f64>,
    scaled: Vec<SymMatrix>,
    u: Vec<f64>,
}

/// Quantities shared by the objective, gradient and KKT computations at one `v`.
struct Evaluation {
    chol: Cholesky,
    /// `A(v)^{-1} u`
    x: Vec<f64>,
    objective: f64,
    /// `g_t = x^T (I_t / c_t) x`, the negated gradient.
    g: Vec<f64>,
}

impl LocalProblem {
    pub fn new(model: &DiseaseModel, p: &Parameter, patterns: &[TestPattern]) -> Result<Self> {
        if p.dim() != model.dim() {
            return Err(Error::InvalidInput(format!(
                "parameter has dimension {}, model expects {}",
                p.dim(),
                model.dim()
            )));
        }
        if patterns.is_empty() {
            return Err(Error::InvalidInput("pattern set is empty".into()));
        }
        if let Some(t) = patterns.iter().find(|t| t.len() != model.num_tests()) {
            return Err(Error::InvalidInput(format!(
                "pattern {t} does not match {} tests",
                model.num_tests()
            )));
        }
        let channels: Vec<Channel> = patterns.iter().map(|t| Channel::new(model, t.clone())).collect();
        Ok(LocalProblem::from_channels(&channels, p, &model.u))
    }

    /// Builds the problem from precomputed channels; used when many `p` share one model.
    pub fn from_channels(channels: &[Channel], p: &Parameter, u: &[f64]) -> Self {
        LocalProblem {
            patterns: channels.iter().map(|c| c.pattern().clone()).collect(),
            costs: channels.iter().map(Channel::cost).collect(),
            scaled: channels
                .iter()
                .map(|c| c.fisher(p.as_slice()).0.scaled(1.0 / c.cost()))
                .collect(),
            u: u.to_vec(),
        }
    }

    pub fn patterns(&self) -> &[TestPattern] {
        &self.patterns
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    fn check_fractions(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "got {} fractions for {} patterns",
                v.len(),
                self.len()
            )));
        }
        if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fractions must be finite and nonnegative: {v:?}"
            )));
        }
        Ok(())
    }

    /// `A(v) = sum_t v_t I_t / c_t`.
    pub fn information(&self, v: &[f64]) -> SymMatrix {
        let mut a = SymMatrix::zeros(self.u.len());
        for (m, &w) in self.scaled.iter().zip(v) {
            if w != 0.0 {
                a.add_scaled(m, w);
            }
        }
        a
    }

    fn evaluate_matrix(&self, a: &SymMatrix) -> Option<Evaluation> {
        let chol = Cholesky::new(a)?;
        let x = chol.solve(&self.u);
        let objective = linalg::dot(&self.u, &x);
        let g = self.scaled.iter().map(|m| m.quad_form(&x, &x)).collect();
        Some(Evaluation { chol, x, objective, g })
    }

    fn evaluate(&self, v: &[f64]) -> Option<Evaluation> {
        self.evaluate_matrix(&self.information(v))
    }

    /// `a(v; p)`, or `+inf` when `A(v)` is numerically singular.
    pub fn objective(&self, v: &[f64]) -> f64 {
        match Cholesky::new(&self.information(v)) {
            Some(chol) => linalg::dot(&self.u, &chol.solve(&self.u)),
            None => f64::INFINITY,
        }
    }

    /// Partial derivatives `-u^T A^{-1} (I_t / c_t) A^{-1} u`.
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_fractions(v)?;
        let ev = self.evaluate(v).ok_or(Error::Singular)?;
        Ok(ev.g.iter().map(|g| -g).collect())
    }

    /// Largest violation of the optimality conditions: `|g_t - mu|` on the support and
    /// `max(0, g_t - mu)` off it, where `mu = a(v; p)`.
    pub fn kkt_residual(&self, v: &[f64], support_eps: f64) -> Result<f64> {
        self.check_fractions(v)?;
        let ev = self.evaluate(v).ok_or(Error::Singular)?;
        Ok(kkt_from(&ev, v, support_eps))
    }

    /// Minimizes `a(v; p)` over the simplex.
    pub fn solve(&self, opts: &SolverOptions) -> Result<LocalSolution> {
        let n = self.len();
        let mut v = vec![1.0 / n as f64; n];
        let mut ev = self
            .evaluate(&v)
            .ok_or_else(|| Error::NoFiniteDesign { p: Vec::new() })?;
        let mut iterations = 0usize;
        let mut polished_clean = false;
        loop {
            let (s, gmax) = argmax_first(&ev.g);
            let gap = gmax - ev.objective;
            if gap <= opts.gap_tol * ev.objective {
                if polished_clean {
                    break;
                }
                // prune dust, then one last polish; re-check the gap afterwards
                let pruned = self.pruned(&v, opts.support_eps);
                let mut candidate = pruned;
                self.polish(&mut candidate);
                if let Some(cev) = self.evaluate(&candidate) {
                    if cev.objective <= ev.objective * (1.0 + 1e-12) {
                        v = candidate;
                        ev = cev;
                    }
                }
                polished_clean = true;
                continue;
            }
            polished_clean = false;
            if iterations >= opts.max_iter {
                return Err(Error::NonConvergence {
                    what: "c-optimal solver",
                    iterations,
                    best: v,
                });
            }
            iterations += 1;

            // away vertex: worst pattern currently in the support
            let d = (0..n)
                .filter(|&t| v[t] > 0.0)
                .min_by(|&i, &j| ev.g[i].total_cmp(&ev.g[j]))
                .expect("nonempty support");
            if d == s {
                break;
            }
            let max_step = v[d];
            let a = self.information(&v);
            let step = self.line_search(&a, s, d, max_step, ev.g[s] - ev.g[d]);
            if step >= max_step {
                v[s] += max_step;
                v[d] = 0.0;
            } else {
                v[s] += step;
                v[d] -= step;
            }
            if iterations.is_multiple_of(POLISH_EVERY) {
                self.polish(&mut v);
            }
            ev = match self.evaluate(&v) {
                Some(e) => e,
                None => {
                    return Err(Error::NonConvergence {
                        what: "c-optimal solver (iterate left the positive definite region)",
                        iterations,
                        best: v,
                    })
                }
            };
        }
        let kkt = kkt_from(&ev, &v, opts.support_eps);
        if kkt > opts.kkt_tol * ev.objective {
            return Err(Error::NonConvergence {
                what: "c-optimal solver (KKT residual above tolerance)",
                iterations,
                best: v,
            });
        }
        let mu_star = v.iter().zip(&ev.g).map(|(w, g)| w * g).sum();
        Ok(LocalSolution {
            fractions: v,
            objective: ev.objective,
            kkt_residual: kkt,
            mu_star,
            iterations,
        })
    }

    fn pruned(&self, v: &[f64], support_eps: f64) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|&w| if w > support_eps { w } else { 0.0 }).collect();
        let total: f64 = out.iter().sum();
        for w in &mut out {
            *w /= total;
        }
        out
    }

    /// Exact minimization of `a(v + gamma (e_s - e_d))` over `gamma in [0, max_step]`.
    /// `slope0 = g_s - g_d` is minus the directional derivative at `gamma = 0`.
    fn line_search(&self, a: &SymMatrix, s: usize, d: usize, max_step: f64, slope0: f64) -> f64 {
        let mut dir = self.scaled[s].clone();
        dir.add_scaled(&self.scaled[d], -1.0);
        // first and second derivative of the objective along the segment
        let derivs = |gamma: f64| -> Option<(f64, f64)> {
            let mut m = a.clone();
            m.add_scaled(&dir, gamma);
            let chol = Cholesky::new(&m)?;
            let x = chol.solve(&self.u);
            let dx = dir.mul_vec(&x);
            let d1 = -linalg::dot(&x, &dx);
            let d2 = 2.0 * linalg::dot(&dx, &chol.solve(&dx));
            Some((d1, d2))
        };
        match derivs(max_step) {
            Some((d1, _)) if d1 <= 0.0 => return max_step,
            _ => {}
        }
        let (mut lo, mut hi) = (0.0_f64, max_step);
        let mut gamma = 0.0;
        let target = 1e-14 * slope0.abs();
        for _ in 0..200 {
            let Some((d1, d2)) = derivs(gamma) else {
                hi = gamma;
                gamma = 0.5 * (lo + hi);
                continue;
            };
            if d1.abs() <= target {
                break;
            }
            if d1 < 0.0 {
                lo = gamma;
            } else {
                hi = gamma;
            }
            if hi - lo <= 1e-15 * max_step {
                break;
            }
            let newton = gamma - d1 / d2;
            gamma = if newton > lo && newton < hi && d2 > 0.0 {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        gamma
    }

    /// Newton steps on the support with the weights constrained to sum to one. Leaves `v`
    /// unchanged when a step would leave the support or fails to decrease the objective.
    fn polish(&self, v: &mut [f64]) {
        let support: Vec<usize> = (0..v.len()).filter(|&t| v[t] > 0.0).collect();
        let m = support.len();
        if m < 2 {
            return;
        }
        for _ in 0..30 {
            let Some(ev) = self.evaluate(v) else { return };
            // y_t = A^{-1} B_t x; Hessian H_st = 2 (B_s x)^T y_t
            let bx: Vec<Vec<f64>> = support.iter().map(|&t| self.scaled[t].mul_vec(&ev.x)).collect();
            let y: Vec<Vec<f64>> = bx.iter().map(|b| ev.chol.solve(b)).collect();
            let mut kkt = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for i in 0..m {
                for j in 0..m {
                    kkt[i][j] = 2.0 * linalg::dot(&bx[i], &y[j]);
                }
                kkt[i][m] = 1.0;
                kkt[m][i] = 1.0;
                rhs[i] = ev.g[support[i]];
            }
            let Some(sol) = linalg::solve_dense(kkt, rhs) else {
                return;
            };
            let delta = &sol[..m];
            if support.iter().zip(delta).any(|(&t, &dl)| v[t] + dl <= 0.0) {
                return;
            }
            let mut trial = v.to_vec();
            for (&t, &dl) in support.iter().zip(delta) {
                trial[t] += dl;
            }
            let total: f64 = trial.iter().sum();
            for w in &mut trial {
                *w /= total;
            }
            let f_new = self.objective(&trial);
            if !(f_new <= ev.objective) {
                return;
            }
            let size = delta.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
            v.copy_from_slice(&trial);
            if size < 1e-15 {
                return;
            }
        }
    }
}

fn argmax_first(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

fn kkt_from(ev: &Evaluation, v: &[f64], support_eps: f64) -> f64 {
    let mu = ev.objective;
    v.iter()
        .zip(&ev.g)
        .map(|(&w, &g)| {
            if w > support_eps {
                (g - mu).abs()
            } else {
                (g - mu).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Output of the simplex solve, independent of the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub fractions: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub mu_star: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEntry {
    pub pattern: TestPattern,
    pub cost: f64,
    /// Budget fraction `v_t`.
    pub fraction: f64,
    /// Participants `w_t = v_t C / c_t`.
    pub count: f64,
    pub integer_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub budget: f64,
    pub entries: Vec<DesignEntry>,
    /// Spend of the rounded design.
    pub integer_cost: f64,
}

impl Design {
    pub fn fractions(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.fraction).collect()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.count).collect()
    }

    pub fn patterns(&self) -> Vec<TestPattern> {
        self.entries.iter().map(|e| e.pattern.clone()).collect()
    }

    pub fn entry(&self, pattern: &TestPattern) -> Option<&DesignEntry> {
        self.entries.iter().find(|e| &e.pattern == pattern)
    }

    /// Integer count for the pattern given as 0/1 bits; zero when absent.
    pub fn integer_count_of(&self, bits: &[u8]) -> u64 {
        self.entries
            .iter()
            .find(|e| e.pattern.bits() == bits)
            .map_or(0, |e| e.integer_count)
    }

    pub fn fraction_of(&self, bits: &[u8]) -> f64 {
        self.entries
            .iter()
            .find(|e| e.pattern.bits() == bits)
            .map_or(0.0, |e| e.fraction)
    }

    /// Spend of the fractional design, `sum_t w_t c_t`.
    pub fn spend(&self) -> f64 {
        self.entries.iter().map(|e| e.count * e.cost).sum()
    }

    pub fn support(&self) -> Vec<&DesignEntry> {
        self.entries.iter().filter(|e| e.fraction > 0.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "design budget must be positive, got {}",
                self.budget
            )));
        }
        let total: f64 = self.entries.iter().map(|e| e.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "design fractions sum to {total}, expected 1"
            )));
        }
        if self.entries.iter().any(|e| !(e.fraction >= 0.0) || !(e.cost > 0.0)) {
            return Err(Error::InvalidInput(
                "design entries need nonnegative fractions and positive costs".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub p: Parameter,
    pub design: Design,
    /// `a(v*; p)`
    pub objective: f64,
    /// `a(v*; p) / C`
    pub min_variance: f64,
    pub kkt_residual: f64,
    pub mu_star: f64,
    pub iterations: usize,
}

impl SolveReport {
    pub fn relative_kkt_residual(&self) -> f64 {
        self.kkt_residual / self.objective
    }
}

fn local_problem(p: &Parameter, model: &DiseaseModel, patterns: &[TestPattern]) -> Result<LocalProblem> {
    LocalProblem::new(model, p, patterns)
}

/// `a(v; p)`; `+inf` when the information matrix of `v` is singular.
pub fn objective(v: &[f64], p: &Parameter, model: &DiseaseModel, patterns: &[TestPattern]) -> Result<f64> {
    let lp = local_problem(p, model, patterns)?;
    lp.check_fractions(v)?;
    Ok(lp.objective(v))
}

pub fn objective_gradient(
    v: &[f64],
    p: &Parameter,
    model: &DiseaseModel,
    patterns: &[TestPattern],
) -> Result<Vec<f64>> {
    local_problem(p, model, patterns)?.gradient(v)
}

pub fn kkt_check(
    v: &[f64],
    p: &Parameter,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    support_eps: f64,
) -> Result<f64> {
    local_problem(p, model, patterns)?.kkt_residual(v, support_eps)
}

/// Turns budget fractions into participant counts. Counts are rounded to the nearest
/// integer per pattern; the rounded design's spend is reported as `integer_cost`.
pub fn design_from_fractions(v: &[f64], budget: f64, patterns: &[TestPattern], model: &DiseaseModel) -> Result<Design> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidInput(format!("budget must be positive, got {budget}")));
    }
    if v.len() != patterns.len() {
        return Err(Error::InvalidInput(format!(
            "got {} fractions for {} patterns",
            v.len(),
            patterns.len()
        )));
    }
    let entries: Vec<DesignEntry> = patterns
        .iter()
        .zip(v)
        .map(|(t, &fraction)| {
            let cost = model.pattern_cost(t);
            let count = fraction * budget / cost;
            DesignEntry {
                pattern: t.clone(),
                cost,
                fraction,
                count,
                integer_count: count.round() as u64,
            }
        })
        .collect();
    let integer_cost = entries.iter().map(|e| e.integer_count as f64 * e.cost).sum();
    let design = Design {
        budget,
        entries,
        integer_cost,
    };
    design.validate()?;
    Ok(design)
}

pub(crate) fn solve_local(problem: &LocalProblem, p: &Parameter, opts: &SolverOptions) -> Result<LocalSolution> {
    problem.solve(opts).map_err(|e| match e {
        Error::NoFiniteDesign { .. } => Error::NoFiniteDesign {
            p: p.as_slice().to_vec(),
        },
        other => other,
    })
}

pub(crate) fn report_from_solution(
    sol: &LocalSolution,
    p: &Parameter,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    budget: f64,
) -> Result<SolveReport> {
    let design = design_from_fractions(&sol.fractions, budget, patterns, model)?;
    Ok(SolveReport {
        p: p.clone(),
        design,
        objective: sol.objective,
        min_variance: sol.objective / budget,
        kkt_residual: sol.kkt_residual,
        mu_star: sol.mu_star,
        iterations: sol.iterations,
    })
}

/// c-optimal design at `p` for the given budget.
pub fn solve_c_optimal(
    p: &Parameter,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    budget: f64,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let problem = local_problem(p, model, patterns)?;
    let sol = solve_local(&problem, p, opts)?;
    report_from_solution(&sol, p, model, patterns, budget)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginBudget {
    /// Budget at which the margin of error equals `moe` exactly.
    pub budget: f64,
    pub z: f64,
    pub objective: f64,
    pub moe: f64,
    pub alpha: f64,
}

/// Smallest budget whose c-optimal design attains margin of error `moe` at confidence
/// `1 - alpha`: `C = z^2 a(v*; p) / moe^2`.
pub fn budget_for_margin(
    p: &Parameter,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    moe: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<MarginBudget> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(moe > 0.0 && moe.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "margin of error must be positive, got {moe}"
        )));
    }
    let problem = local_problem(p, model, patterns)?;
    let sol = solve_local(&problem, p, opts)?;
    let z = two_sided_z(alpha);
    Ok(MarginBudget {
        budget: z * z * sol.objective / (moe * moe),
        z,
        objective: sol.objective,
        moe,
        alpha,
    })
}

/// Half-width of the normal confidence interval for the given variance.
pub fn margin_of_error(variance: f64, alpha: f64) -> f64 {
    two_sided_z(alpha) * variance.sqrt()
}
