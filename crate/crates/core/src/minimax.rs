//! Worst-case design over a parameter box.
//!
//! The design is the minimizing player's strategy in the zero-sum game with payoff
//! `a(v; p)`: `v` ranges over the simplex on patterns, `p` over the box intersected with the
//! parameter simplex. The payoff is convex in `v` and concave in `p`.
//!
//! The worst case is located by exhaustive grid search: every feasible grid point gets its
//! own c-optimal solve, `p*` maximizes the resulting lower envelope and the reported design
//! is `v*(p*)`. The pair is then certified by re-evaluating `a(v*; .)` over the grid. When
//! the certificate fails, alternating best responses with averaging of the minimizing
//! player's strategies produce a refined strategy, reported next to the grid design.

use rayon::prelude::*;
use serde::Serialize;

use crate::copt::{self, Design, LocalProblem, LocalSolution, SolveReport, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{check_a2, A2Report, Channel, DiseaseModel, Parameter, ParameterBox, TestPattern};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxOptions {
    pub grid_step: f64,
    /// Relative tolerance of the saddle certificate.
    pub saddle_tol: f64,
    /// Cap on best-response rounds of the refinement.
    pub max_rounds: usize,
    pub solver: SolverOptions,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        MinimaxOptions {
            grid_step: 0.01,
            saddle_tol: 1e-4,
            max_rounds: 200,
            solver: SolverOptions::default(),
        }
    }
}

/// Payoff of the game; the same quantity as [`copt::objective`].
pub fn payoff(v: &[f64], p: &Parameter, model: &DiseaseModel, patterns: &[TestPattern]) -> Result<f64> {
    copt::objective(v, p, model, patterns)
}

/// Cost-scaled information of every grid point, sharing one set of channels.
pub struct GridGame {
    grid: Vec<Parameter>,
    problems: Vec<LocalProblem>,
}

impl GridGame {
    pub fn new(region: &ParameterBox, model: &DiseaseModel, patterns: &[TestPattern], grid_step: f64) -> Result<Self> {
        if region.dim() != model.dim() {
            return Err(Error::InvalidInput(format!(
                "box has dimension {}, model expects {}",
                region.dim(),
                model.dim()
            )));
        }
        if patterns.is_empty() {
            return Err(Error::InvalidInput("pattern set is empty".into()));
        }
        let grid = region.grid(grid_step)?;
        let channels: Vec<Channel> = patterns.iter().map(|t| Channel::new(model, t.clone())).collect();
        let problems = grid
            .par_iter()
            .map(|p| LocalProblem::from_channels(&channels, p, &model.u))
            .collect();
        Ok(GridGame { grid, problems })
    }

    pub fn grid(&self) -> &[Parameter] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn payoff_at(&self, v: &[f64], index: usize) -> f64 {
        self.problems[index].objective(v)
    }

    /// `max_p a(v; p)` over the grid with its first (lexicographically smallest) maximizer.
    pub fn best_response_value(&self, v: &[f64]) -> (f64, usize) {
        let values: Vec<f64> = self.problems.par_iter().map(|lp| lp.objective(v)).collect();
        first_max(&values)
    }

    /// c-optimal solve at every grid point, in grid order.
    pub fn lower_envelope(&self, opts: &SolverOptions) -> Result<Vec<LocalSolution>> {
        self.problems
            .par_iter()
            .zip(&self.grid)
            .map(|(lp, p)| copt::solve_local(lp, p, opts))
            .collect()
    }
}

fn first_max(values: &[f64]) -> (f64, usize) {
    let mut best = (values[0], 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleReport {
    pub patterns: Vec<TestPattern>,
    /// Minimizing player's strategy `v*(p*)`.
    pub v_star: Vec<f64>,
    /// Worst-case parameter: grid maximizer of `min_v a(v; p)`.
    pub p_star: Parameter,
    /// `a(v*; p*)`
    pub game_value: f64,
    /// `max_grid a(v*; p) - a(v*; p*)`
    pub saddle_gap: f64,
    pub certified: bool,
    pub grid_step: f64,
    pub grid_points: usize,
}

/// Averaged best-response strategy, computed when the grid design fails certification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub fractions: Vec<f64>,
    /// `max_grid a(v_bar; p)`
    pub worst_case_value: f64,
    pub worst_p: Parameter,
    /// `max_grid a(v_bar; p) - max_grid min_v a(v; p)`, an upper bound on suboptimality.
    pub duality_gap: f64,
    pub certified: bool,
    pub rounds: usize,
}

/// Budget-free part of the worst-case computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseSolution {
    pub saddle: SaddleReport,
    pub local: SolveSummary,
    pub refinement: Option<Refinement>,
    pub assumption: A2Report,
}

/// Local solve at `p*` without a budget attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub objective: f64,
    pub kkt_residual: f64,
    pub mu_star: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseReport {
    pub saddle: SaddleReport,
    /// `w*_t = v*_t C / c_t`
    pub design: Design,
    /// c-optimal report at `p*`; its design equals `design`.
    pub solve: SolveReport,
    pub refinement: Option<Refinement>,
    /// Refined strategy turned into participant counts, when a refinement was computed.
    pub refined_design: Option<Design>,
    pub assumption: A2Report,
}

pub fn solve_worst_case(
    region: &ParameterBox,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    opts: &MinimaxOptions,
) -> Result<WorstCaseSolution> {
    let assumption = check_a2(region, patterns, model, opts.grid_step)?;
    if !assumption.holds {
        return Err(Error::UnboundedWorstCase {
            worst_lambda_min: assumption.worst_lambda_min,
        });
    }
    let game = GridGame::new(region, model, patterns, opts.grid_step)?;
    let envelope = game.lower_envelope(&opts.solver)?;
    let values: Vec<f64> = envelope.iter().map(|s| s.objective).collect();
    let (game_value, star) = first_max(&values);
    let best = &envelope[star];
    let v_star = best.fractions.clone();

    let (worst, _) = game.best_response_value(&v_star);
    let saddle_gap = (worst - game_value).max(0.0);
    let certified = saddle_gap <= opts.saddle_tol * game_value;

    let refinement = if certified {
        None
    } else {
        Some(refine(&game, &envelope, &v_star, game_value, opts))
    };

    Ok(WorstCaseSolution {
        saddle: SaddleReport {
            patterns: patterns.to_vec(),
            v_star,
            p_star: game.grid[star].clone(),
            game_value,
            saddle_gap,
            certified,
            grid_step: opts.grid_step,
            grid_points: game.len(),
        },
        local: SolveSummary {
            objective: best.objective,
            kkt_residual: best.kkt_residual,
            mu_star: best.mu_star,
            iterations: best.iterations,
        },
        refinement,
        assumption,
    })
}

/// Fictitious play for the minimizing player: each round adds the c-optimal response to
/// the grid point that is worst for the current average. Keeps the best average seen.
fn refine(
    game: &GridGame,
    envelope: &[LocalSolution],
    start: &[f64],
    lower_bound: f64,
    opts: &MinimaxOptions,
) -> Refinement {
    let n = start.len();
    let mut sum = start.to_vec();
    let mut count = 1.0;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut rounds = 0;
    loop {
        let avg: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let (value, idx) = game.best_response_value(&avg);
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, avg, idx));
        }
        if value - lower_bound <= opts.saddle_tol * lower_bound || rounds >= opts.max_rounds {
            break;
        }
        rounds += 1;
        let response = &envelope[idx].fractions;
        for t in 0..n {
            sum[t] += response[t];
        }
        count += 1.0;
    }
    let (value, fractions, idx) = best.expect("at least one round");
    let duality_gap = (value - lower_bound).max(0.0);
    Refinement {
        fractions,
        worst_case_value: value,
        worst_p: game.grid[idx].clone(),
        duality_gap,
        certified: duality_gap <= opts.saddle_tol * lower_bound,
        rounds,
    }
}

/// Worst-case design for budget `budget`.
pub fn worst_case_design(
    region: &ParameterBox,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    budget: f64,
    opts: &MinimaxOptions,
) -> Result<WorstCaseReport> {
    let sol = solve_worst_case(region, model, patterns, opts)?;
    worst_case_report(sol, model, patterns, budget)
}

pub(crate) fn worst_case_report(
    sol: WorstCaseSolution,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    budget: f64,
) -> Result<WorstCaseReport> {
    let design = copt::design_from_fractions(&sol.saddle.v_star, budget, patterns, model)?;
    let refined_design = sol
        .refinement
        .as_ref()
        .map(|r| copt::design_from_fractions(&r.fractions, budget, patterns, model))
        .transpose()?;
    let solve = SolveReport {
        p: sol.saddle.p_star.clone(),
        design: design.clone(),
        objective: sol.local.objective,
        min_variance: sol.local.objective / budget,
        kkt_residual: sol.local.kkt_residual,
        mu_star: sol.local.mu_star,
        iterations: sol.local.iterations,
    };
    Ok(WorstCaseReport {
        saddle: sol.saddle,
        design,
        solve,
        refinement: sol.refinement,
        refined_design,
        assumption: sol.assumption,
    })
}

/// `max_grid a(v; p)` and its maximizer.
pub fn worst_case_value(
    v: &[f64],
    region: &ParameterBox,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    grid_step: f64,
) -> Result<(f64, Parameter)> {
    if v.len() != patterns.len() {
        return Err(Error::InvalidInput(format!(
            "got {} fractions for {} patterns",
            v.len(),
            patterns.len()
        )));
    }
    let game = GridGame::new(region, model, patterns, grid_step)?;
    let (value, idx) = game.best_response_value(v);
    Ok((value, game.grid[idx].clone()))
}

/// Equilibrium gaps of `(v, p)`:
/// `(max_grid a(v; .) - a(v; p), a(v; p) - min_v a(.; p))`. Both are nonnegative up to
/// solver tolerance and both small certifies an approximate equilibrium.
pub fn saddle_check(
    v: &[f64],
    p: &Parameter,
    region: &ParameterBox,
    model: &DiseaseModel,
    patterns: &[TestPattern],
    grid_step: f64,
    solver: &SolverOptions,
) -> Result<(f64, f64)> {
    let at_p = LocalProblem::new(model, p, patterns)?;
    if v.len() != patterns.len() {
        return Err(Error::InvalidInput(format!(
            "got {} fractions for {} patterns",
            v.len(),
            patterns.len()
        )));
    }
    let value = at_p.objective(v);
    let (grid_max, _) = worst_case_value(v, region, model, patterns, grid_step)?;
    let best_response = copt::solve_local(&at_p, p, solver)?;
    Ok((grid_max.max(value) - value, value - best_response.objective))
}
