//! Budget allocation across districts and across observable groups.
//!
//! Each stratum `d` gets its own design and a share of the budget. With `a_d` the optimal
//! per-stratum variance factor, the weighted estimate `sum_d n_d u^T p(d)` has variance
//! `sum_d n_d^2 a_d / C_d`, minimized by `C_d = C n_d sqrt(a_d) / sum_d' n_d' sqrt(a_d')`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copt::{self, LocalProblem, SolveReport};
use crate::error::{Error, Result};
use crate::minimax::{self, MinimaxOptions, SaddleReport};
use crate::model::{DiseaseModel, Parameter, ParameterBox, TestOverride, TestPattern};

/// Population fractions must sum to one within this slack.
pub const FRACTION_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Point(Parameter),
    Box(ParameterBox),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub name: String,
    pub population_fraction: f64,
    pub scenario: Scenario,
}

impl StratumSpec {
    pub fn point(name: impl Into<String>, population_fraction: f64, p: Parameter) -> Self {
        StratumSpec {
            name: name.into(),
            population_fraction,
            scenario: Scenario::Point(p),
        }
    }

    pub fn boxed(name: impl Into<String>, population_fraction: f64, region: ParameterBox) -> Self {
        StratumSpec {
            name: name.into(),
            population_fraction,
            scenario: Scenario::Box(region),
        }
    }
}

/// A group with its own test reliabilities, e.g. symptomatic vs asymptomatic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub fraction: f64,
    pub parameter: Parameter,
    #[serde(default)]
    pub overrides: Vec<TestOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumAllocation {
    pub name: String,
    /// `n_d` or `r_s`
    pub weight: f64,
    /// Optimal variance factor `a_d` (the worst-case value for box strata).
    pub objective: f64,
    pub budget: f64,
    /// `C_d / C`
    pub share: f64,
    pub solve: SolveReport,
    /// Present for box strata.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saddle: Option<SaddleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationReport {
    pub budget: f64,
    pub strata: Vec<StratumAllocation>,
    /// `sum_d n_d^2 a_d / C_d`
    pub total_variance: f64,
}

impl AllocationReport {
    pub fn stratum(&self, name: &str) -> Option<&StratumAllocation> {
        self.strata.iter().find(|s| s.name == name)
    }

    pub fn shares(&self) -> Vec<f64> {
        self.strata.iter().map(|s| s.share).collect()
    }
}

/// Budget shares `m_d = n_d sqrt(a_d) / sum_d' n_d' sqrt(a_d')`.
pub fn optimal_shares(weights: &[f64], objectives: &[f64]) -> Vec<f64> {
    let scores: Vec<f64> = weights.iter().zip(objectives).map(|(n, a)| n * a.sqrt()).collect();
    let total: f64 = scores.iter().sum();
    scores.iter().map(|s| s / total).collect()
}

/// `sum_d n_d^2 a_d / C_d` for arbitrary per-stratum budgets.
pub fn split_variance(weights: &[f64], objectives: &[f64], budgets: &[f64]) -> f64 {
    weights
        .iter()
        .zip(objectives)
        .zip(budgets)
        .map(|((n, a), c)| n * n * a / c)
        .sum()
}

pub fn weighted_variance(report: &AllocationReport) -> f64 {
    report
        .strata
        .iter()
        .map(|s| s.weight * s.weight * s.objective / s.budget)
        .sum()
}

fn check_weights(kind: &'static str, names: &[&str], weights: &[f64]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::InvalidInput(format!("at least one {kind} is required")));
    }
    for (name, &w) in names.iter().zip(weights) {
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::Stratum {
                kind,
                name: name.to_string(),
                source: Box::new(Error::InvalidInput(format!("fraction must lie in (0, 1], got {w}"))),
            });
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > FRACTION_SUM_TOL {
        return Err(Error::InvalidInput(format!(
            "{kind} fractions sum to {total}, expected 1"
        )));
    }
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::InvalidInput(format!("duplicate {kind} name `{a}`")));
        }
    }
    Ok(())
}

/// Per-stratum solve without a budget.
struct StratumSolution {
    objective: f64,
    p: Parameter,
    local: copt::LocalSolution,
    saddle: Option<SaddleReport>,
}

fn solve_point(
    model: &DiseaseModel,
    p: &Parameter,
    patterns: &[TestPattern],
    opts: &MinimaxOptions,
) -> Result<StratumSolution> {
    let problem = LocalProblem::new(model, p, patterns)?;
    let local = copt::solve_local(&problem, p, &opts.solver)?;
    Ok(StratumSolution {
        objective: local.objective,
        p: p.clone(),
        local,
        saddle: None,
    })
}

fn solve_box(
    model: &DiseaseModel,
    region: &ParameterBox,
    patterns: &[TestPattern],
    opts: &MinimaxOptions,
) -> Result<StratumSolution> {
    let sol = minimax::solve_worst_case(region, model, patterns, opts)?;
    let local = copt::LocalSolution {
        fractions: sol.saddle.v_star.clone(),
        objective: sol.local.objective,
        kkt_residual: sol.local.kkt_residual,
        mu_star: sol.local.mu_star,
        iterations: sol.local.iterations,
    };
    Ok(StratumSolution {
        objective: sol.saddle.game_value,
        p: sol.saddle.p_star.clone(),
        local,
        saddle: Some(sol.saddle),
    })
}

fn assemble(
    names: Vec<String>,
    weights: Vec<f64>,
    solutions: Vec<StratumSolution>,
    models: &[&DiseaseModel],
    patterns: &[TestPattern],
    budget: f64,
) -> Result<AllocationReport> {
    let objectives: Vec<f64> = solutions.iter().map(|s| s.objective).collect();
    let shares = optimal_shares(&weights, &objectives);
    let mut strata = Vec::with_capacity(names.len());
    for (((name, weight), sol), (share, model)) in names
        .into_iter()
        .zip(weights)
        .zip(solutions)
        .zip(shares.into_iter().zip(models))
    {
        let c_d = budget * share;
        let design = copt::design_from_fractions(&sol.local.fractions, c_d, patterns, model)?;
        let solve = SolveReport {
            p: sol.p,
            design,
            objective: sol.local.objective,
            min_variance: sol.local.objective / c_d,
            kkt_residual: sol.local.kkt_residual,
            mu_star: sol.local.mu_star,
            iterations: sol.local.iterations,
        };
        strata.push(StratumAllocation {
            name,
            weight,
            objective: sol.objective,
            budget: c_d,
            share,
            solve,
            saddle: sol.saddle,
        });
    }
    let mut report = AllocationReport {
        budget,
        strata,
        total_variance: 0.0,
    };
    report.total_variance = weighted_variance(&report);
    Ok(report)
}

fn check_budget(budget: f64) -> Result<()> {
    if budget > 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("budget must be positive, got {budget}")))
    }
}

/// Splits `budget` across districts sharing one model. Box strata use their worst-case value.
pub fn allocate_districts(
    strata: &[StratumSpec],
    model: &DiseaseModel,
    patterns: &[TestPattern],
    budget: f64,
    opts: &MinimaxOptions,
) -> Result<AllocationReport> {
    check_budget(budget)?;
    let names: Vec<&str> = strata.iter().map(|s| s.name.as_str()).collect();
    let weights: Vec<f64> = strata.iter().map(|s| s.population_fraction).collect();
    check_weights("stratum", &names, &weights)?;
    let solutions = strata
        .par_iter()
        .map(|s| {
            match &s.scenario {
                Scenario::Point(p) => solve_point(model, p, patterns, opts),
                Scenario::Box(b) => solve_box(model, b, patterns, opts),
            }
            .map_err(|e| Error::Stratum {
                kind: "stratum",
                name: s.name.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let models = vec![model; strata.len()];
    assemble(
        strata.iter().map(|s| s.name.clone()).collect(),
        weights,
        solutions,
        &models,
        patterns,
        budget,
    )
}

fn in_group(g: &GroupSpec, e: Error) -> Error {
    Error::Stratum {
        kind: "group",
        name: g.name.clone(),
        source: Box::new(e),
    }
}

/// Splits `budget` across groups whose test reliabilities differ from the base model.
pub fn allocate_groups(
    groups: &[GroupSpec],
    model: &DiseaseModel,
    patterns: &[TestPattern],
    budget: f64,
    opts: &MinimaxOptions,
) -> Result<AllocationReport> {
    check_budget(budget)?;
    let names: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
    let weights: Vec<f64> = groups.iter().map(|g| g.fraction).collect();
    check_weights("group", &names, &weights)?;
    let models = groups
        .iter()
        .map(|g| model.with_overrides(&g.overrides).map_err(|e| in_group(g, e)))
        .collect::<Result<Vec<_>>>()?;
    let solutions = groups
        .par_iter()
        .zip(&models)
        .map(|(g, m)| solve_point(m, &g.parameter, patterns, opts).map_err(|e| in_group(g, e)))
        .collect::<Result<Vec<_>>>()?;
    let model_refs: Vec<&DiseaseModel> = models.iter().collect();
    assemble(
        groups.iter().map(|g| g.name.clone()).collect(),
        weights,
        solutions,
        &model_refs,
        patterns,
        budget,
    )
}
