//! Command dispatch and report rendering behind the `survey-design` binary.
//!
//! ```text
//! survey-design <COMMAND> --config <file> [--output json|table]
//!               [--grid-step S] [--moe M] [--alpha A] [--seed N] [--replications R]
//!               [--design <file>]
//! ```
//!
//! Exit status: 0 on success, 1 when the inputs are invalid, 2 when a solve fails.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::config::{load_config, RunConfig, ScenarioConfig};
use crate::copt::{self, Design, MarginBudget, SolveReport, SolverOptions};
use crate::error::{Error, Result};
use crate::minimax::{self, MinimaxOptions, WorstCaseReport};
use crate::model::{check_a1, check_a2, Parameter, TestPattern};
use crate::simulate::{self, VarianceReport};
use crate::strata::{self, AllocationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Locally optimal design at a point parameter.
    COptimal,
    /// Minimax design over a parameter box.
    WorstCase,
    /// Budget split across districts.
    Strata,
    /// Budget split across groups with their own test reliabilities.
    Groups,
    /// Budget that reaches a target margin of error.
    Budget,
    /// Monte Carlo check of the predicted variance.
    Simulate,
    /// Identifiability checks for the configured scenario.
    CheckAssumptions,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::COptimal => "c-optimal",
            Command::WorstCase => "worst-case",
            Command::Strata => "strata",
            Command::Groups => "groups",
            Command::Budget => "budget",
            Command::Simulate => "simulate",
            Command::CheckAssumptions => "check-assumptions",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    Json,
    #[default]
    Table,
}

/// Command-line overrides of the configured options.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid_step: Option<f64>,
    pub moe: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    /// Design to simulate instead of the c-optimal one.
    pub design: Option<Design>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub margin: MarginBudget,
    /// c-optimal design at the computed budget.
    pub solve: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub p: Parameter,
    pub design: Design,
    pub variance: VarianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    /// Scenario element checked: `point`, `box`, or a stratum / group name.
    pub name: String,
    /// `pointwise` (one parameter) or `uniform` (over a box grid).
    pub kind: &'static str,
    pub holds: bool,
    pub witness: Option<TestPattern>,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub holds: bool,
    pub checks: Vec<AssumptionCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReportBody {
    COptimal(SolveReport),
    WorstCase(Box<WorstCaseReport>),
    Allocation(AllocationReport),
    Budget(BudgetReport),
    Simulate(SimulationReport),
    Assumptions(AssumptionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: Command,
    pub currency: String,
    pub result: ReportBody,
}

fn scenario_mismatch(command: Command, config: &RunConfig, wanted: &str) -> Error {
    Error::Config {
        path: "scenario".into(),
        message: format!(
            "`{}` needs a `{wanted}` scenario, the document has `{}`",
            command.name(),
            config.scenario.kind()
        ),
    }
}

fn point(command: Command, config: &RunConfig) -> Result<&Parameter> {
    match &config.scenario {
        ScenarioConfig::Point(p) => Ok(p),
        _ => Err(scenario_mismatch(command, config, "point")),
    }
}

/// Runs one command against a validated configuration.
pub fn run(config: &RunConfig, command: Command, overrides: &Overrides) -> Result<Report> {
    let mut options = config.options.clone();
    if let Some(s) = overrides.grid_step {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidInput(format!("--grid-step must lie in (0, 1], got {s}")));
        }
        options.grid_step = s;
    }
    if let Some(a) = overrides.alpha {
        options.alpha = a;
    }
    if let Some(m) = overrides.moe {
        options.moe = Some(m);
    }
    if let Some(s) = overrides.seed {
        options.seed = s;
    }
    if let Some(r) = overrides.replications {
        options.replications = r;
    }
    let solver = SolverOptions::default();
    let minimax_opts = MinimaxOptions {
        grid_step: options.grid_step,
        ..MinimaxOptions::default()
    };
    let model = &config.model;
    let patterns = &config.patterns;

    let result = match command {
        Command::COptimal => {
            let p = point(command, config)?;
            ReportBody::COptimal(copt::solve_c_optimal(
                p,
                model,
                patterns,
                config.require_budget()?,
                &solver,
            )?)
        }
        Command::WorstCase => {
            let ScenarioConfig::Box(region) = &config.scenario else {
                return Err(scenario_mismatch(command, config, "box"));
            };
            let report = minimax::worst_case_design(region, model, patterns, config.require_budget()?, &minimax_opts)?;
            ReportBody::WorstCase(Box::new(report))
        }
        Command::Strata => {
            let ScenarioConfig::Strata(list) = &config.scenario else {
                return Err(scenario_mismatch(command, config, "strata"));
            };
            ReportBody::Allocation(strata::allocate_districts(
                list,
                model,
                patterns,
                config.require_budget()?,
                &minimax_opts,
            )?)
        }
        Command::Groups => {
            let ScenarioConfig::Groups(list) = &config.scenario else {
                return Err(scenario_mismatch(command, config, "groups"));
            };
            ReportBody::Allocation(strata::allocate_groups(
                list,
                model,
                patterns,
                config.require_budget()?,
                &minimax_opts,
            )?)
        }
        Command::Budget => {
            let p = point(command, config)?;
            let moe = options.moe.ok_or_else(|| Error::Config {
                path: "options.moe".into(),
                message: "`budget` needs a target margin of error (options.moe or --moe)".into(),
            })?;
            let margin = copt::budget_for_margin(p, model, patterns, moe, options.alpha, &solver)?;
            let solve = copt::solve_c_optimal(p, model, patterns, margin.budget, &solver)?;
            ReportBody::Budget(BudgetReport { margin, solve })
        }
        Command::Simulate => {
            let p = point(command, config)?;
            let design = match &overrides.design {
                Some(d) => {
                    check_design(d, config)?;
                    d.clone()
                }
                None => copt::solve_c_optimal(p, model, patterns, config.require_budget()?, &solver)?.design,
            };
            let variance = simulate::variance_check(p, model, &design, options.replications, options.seed)?;
            ReportBody::Simulate(SimulationReport {
                p: p.clone(),
                design,
                variance,
            })
        }
        Command::CheckAssumptions => ReportBody::Assumptions(check_assumptions(config, options.grid_step)?),
    };
    Ok(Report {
        command,
        currency: config.currency.clone(),
        result,
    })
}

fn check_design(design: &Design, config: &RunConfig) -> Result<()> {
    design.validate()?;
    for (i, e) in design.entries.iter().enumerate() {
        if e.pattern.len() != config.model.num_tests() {
            return Err(Error::Config {
                path: format!("design.entries[{i}].pattern"),
                message: format!(
                    "pattern {} does not match {} tests",
                    e.pattern,
                    config.model.num_tests()
                ),
            });
        }
        let cost = config.model.pattern_cost(&e.pattern);
        if (cost - e.cost).abs() > 1e-9 * cost {
            return Err(Error::Config {
                path: format!("design.entries[{i}].cost"),
                message: format!(
                    "pattern {} costs {cost} under the configured model, design says {}",
                    e.pattern, e.cost
                ),
            });
        }
    }
    Ok(())
}

fn check_assumptions(config: &RunConfig, grid_step: f64) -> Result<AssumptionReport> {
    let model = &config.model;
    let patterns = &config.patterns;
    let pointwise = |name: &str, p: &Parameter, m: &crate::model::DiseaseModel| -> Result<AssumptionCheck> {
        let r = check_a1(p, patterns, m)?;
        Ok(AssumptionCheck {
            name: name.to_string(),
            kind: "pointwise",
            holds: r.holds,
            witness: r.witness,
            lambda_min: r.lambda_min,
        })
    };
    let uniform = |name: &str, b: &crate::model::ParameterBox| -> Result<AssumptionCheck> {
        let r = check_a2(b, patterns, model, grid_step)?;
        Ok(AssumptionCheck {
            name: name.to_string(),
            kind: "uniform",
            holds: r.holds,
            witness: r.witness,
            lambda_min: r.worst_lambda_min,
        })
    };
    let checks = match &config.scenario {
        ScenarioConfig::Point(p) => vec![pointwise("point", p, model)?],
        ScenarioConfig::Box(b) => vec![uniform("box", b)?],
        ScenarioConfig::Strata(list) => list
            .iter()
            .map(|s| match &s.scenario {
                strata::Scenario::Point(p) => pointwise(&s.name, p, model),
                strata::Scenario::Box(b) => uniform(&s.name, b),
            })
            .collect::<Result<_>>()?,
        ScenarioConfig::Groups(list) => list
            .iter()
            .map(|g| pointwise(&g.name, &g.parameter, &model.with_overrides(&g.overrides)?))
            .collect::<Result<_>>()?,
    };
    Ok(AssumptionReport {
        holds: checks.iter().all(|c| c.holds),
        checks,
    })
}

pub fn render_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn design_table(out: &mut String, design: &Design, currency: &str) {
    let _ = writeln!(
        out,
        "  budget {} {currency}, rounded design spends {}",
        fmt_num(design.budget),
        fmt_num(design.integer_cost)
    );
    let _ = writeln!(
        out,
        "  {:<12} {:>10} {:>14} {:>10} {:>10}",
        "pattern", "fraction", "count", "integer", "cost"
    );
    for e in &design.entries {
        let _ = writeln!(
            out,
            "  {:<12} {:>10.6} {:>14.3} {:>10} {:>10}",
            e.pattern.to_string(),
            e.fraction,
            e.count,
            e.integer_count,
            fmt_num(e.cost)
        );
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x}")
    }
}

fn fmt_p(p: &Parameter) -> String {
    let parts: Vec<String> = p.as_slice().iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn solve_lines(out: &mut String, s: &SolveReport, currency: &str) {
    let _ = writeln!(out, "  p = {}", fmt_p(&s.p));
    let _ = writeln!(
        out,
        "  a(v*; p) = {:.6}   min variance = {:.6e}   kkt residual = {:.2e} (relative {:.2e})",
        s.objective,
        s.min_variance,
        s.kkt_residual,
        s.relative_kkt_residual()
    );
    design_table(out, &s.design, currency);
}

/// Human-readable rendering of a report. Everything shown is read off the report itself.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let cur = report.currency.as_str();
    let _ = writeln!(out, "{}", report.command.name());
    match &report.result {
        ReportBody::COptimal(s) => solve_lines(&mut out, s, cur),
        ReportBody::WorstCase(w) => {
            let sd = &w.saddle;
            let _ = writeln!(
                out,
                "  worst case p* = {}   game value = {:.6}   grid step {} ({} points)",
                fmt_p(&sd.p_star),
                sd.game_value,
                sd.grid_step,
                sd.grid_points
            );
            let _ = writeln!(
                out,
                "  saddle gap = {:.3e} (relative {:.2e}), certified: {}",
                sd.saddle_gap,
                sd.saddle_gap / sd.game_value,
                sd.certified
            );
            let (budget, spend): (f64, Vec<String>) = (
                w.design.budget,
                w.design
                    .support()
                    .iter()
                    .map(|e| format!("{} {:.2}%", e.pattern, 100.0 * e.fraction))
                    .collect(),
            );
            let _ = writeln!(out, "  budget split of {}: {}", fmt_num(budget), spend.join(", "));
            design_table(&mut out, &w.design, cur);
            if let (Some(r), Some(d)) = (&w.refinement, &w.refined_design) {
                let _ = writeln!(
                    out,
                    "  refined strategy after {} rounds: worst-case value {:.6} at {}, duality gap {:.3e}, certified: {}",
                    r.rounds,
                    r.worst_case_value,
                    fmt_p(&r.worst_p),
                    r.duality_gap,
                    r.certified
                );
                design_table(&mut out, d, cur);
            }
        }
        ReportBody::Allocation(a) => {
            let _ = writeln!(
                out,
                "  total budget {} {cur}, variance of weighted estimate {:.6e}",
                fmt_num(a.budget),
                a.total_variance
            );
            for s in &a.strata {
                let _ = writeln!(
                    out,
                    "\n  {} (weight {}): budget {:.2} ({:.2}%), a = {:.6}",
                    s.name,
                    s.weight,
                    s.budget,
                    100.0 * s.share,
                    s.objective
                );
                if let Some(sd) = &s.saddle {
                    let _ = writeln!(
                        out,
                        "  worst case p* = {}, certified: {}",
                        fmt_p(&sd.p_star),
                        sd.certified
                    );
                }
                solve_lines(&mut out, &s.solve, cur);
            }
        }
        ReportBody::Budget(b) => {
            let m = &b.margin;
            let _ = writeln!(
                out,
                "  margin of error {} at alpha {} (z = {:.9}) needs budget {:.2} {cur}",
                m.moe, m.alpha, m.z, m.budget
            );
            solve_lines(&mut out, &b.solve, cur);
        }
        ReportBody::Simulate(s) => {
            let v = &s.variance;
            let _ = writeln!(
                out,
                "  p = {}, {} replications, seed {}",
                fmt_p(&s.p),
                v.replications,
                v.seed
            );
            let _ = writeln!(
                out,
                "  empirical var = {:.6e}   predicted var = {:.6e}   ratio = {:.4}",
                v.empirical_var, v.predicted_var, v.ratio
            );
            let _ = writeln!(
                out,
                "  bias = {:.3e} (se {:.3e})   Jarque-Bera = {:.3} (p = {:.3})",
                v.bias, v.bias_se, v.jarque_bera, v.normality_p
            );
            design_table(&mut out, &s.design, cur);
        }
        ReportBody::Assumptions(a) => {
            let _ = writeln!(out, "  all hold: {}", a.holds);
            for c in &a.checks {
                let witness = c.witness.as_ref().map_or("none".to_string(), |t| t.to_string());
                let _ = writeln!(
                    out,
                    "  {:<16} {:<10} holds: {:<5}  witness {:<10} lambda_min {:.3e}",
                    c.name, c.kind, c.holds, witness, c.lambda_min
                );
            }
        }
    }
    out
}

/// Exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "survey-design",
    version,
    about = "Budget-constrained designs for multi-test prevalence surveys"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub output: OutputFormat,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Target margin of error (`budget`).
    #[arg(long)]
    pub moe: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Design to simulate (`simulate`): a design document or a report containing one.
    #[arg(long)]
    pub design: Option<PathBuf>,
}

/// Reads a design document, or the `result.design` / `result.solve.design` of a report.
pub fn load_design(path: &std::path::Path) -> Result<Design> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: format!("cannot read: {e}"),
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let candidate = if value.get("entries").is_some() {
        &value
    } else if let Some(d) = value.pointer("/result/design") {
        d
    } else if let Some(d) = value.pointer("/result/solve/design") {
        d
    } else {
        return Err(Error::Config {
            path: path.display().to_string(),
            message: "no design found (expected `entries`, `result.design` or `result.solve.design`)".into(),
        });
    };
    Ok(serde_json::from_value(candidate.clone())?)
}

fn execute(args: &Args) -> Result<String> {
    let config = load_config(&args.config)?;
    let overrides = Overrides {
        grid_step: args.grid_step,
        moe: args.moe,
        alpha: args.alpha,
        seed: args.seed,
        replications: args.replications,
        design: args.design.as_deref().map(load_design).transpose()?,
    };
    let report = run(&config, args.command, &overrides)?;
    Ok(match args.output {
        OutputFormat::Json => render_json(&report),
        OutputFormat::Table => render_table(&report),
    })
}

/// Parses `argv`, runs, writes the rendered report to `out` and errors to `err`;
/// returns the process exit status.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            // --help and --version land here too, with exit status 0
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 1;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&args) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
