//! Run configuration: one JSON document holding the model, the scenario and run options.
//!
//! ```json
//! {
//!   "currency": "Rs",
//!   "budget": 10000000,
//!   "model": {
//!     "tests": [
//!       { "id": "RAT", "cost": 450, "sensitivity": 0.5, "specificity": 0.975 },
//!       { "id": "RTPCR", "cost": 1600, "sensitivity": 0.95, "specificity": 0.97 },
//!       { "id": "antibody", "cost": 300, "sensitivity": 0.921, "specificity": 0.977 }
//!     ],
//!     "nominal": [[1, 1, 0], [0, 0, 1], [1, 1, 1], [0, 0, 0]],
//!     "u": [1, 1, 1]
//!   },
//!   "patterns": [[0, 0, 1], [1, 0, 1]],
//!   "scenario": { "point": { "p": [0.10, 0.30, 0.01] } },
//!   "options": { "grid_step": 0.01, "alpha": 0.05, "moe": 0.01, "seed": 2021, "replications": 200 }
//! }
//! ```
//!
//! `scenario` holds exactly one of
//!
//! - `point`: `{ "p": [...] }`
//! - `box`: `{ "lower": [...], "upper": [...] }`
//! - `strata`: `[{ "name", "population_fraction", "p" | "box" }, ...]`
//! - `groups`: `[{ "name", "fraction", "p", "overrides": [{ "test", "sensitivity"?, "specificity"? }] }, ...]`
//!
//! Optional keys and defaults: `currency` ("units"), `budget` (required by commands that
//! produce participant counts), `model.u` (all ones), `patterns` (every nonempty subset of
//! tests), and each entry of `options` (see [`RunOptions`]). The last row of
//! `model.nominal` is the reference state.
//!
//! Unknown keys are rejected. Every error names the offending path, e.g.
//! `model.tests[1].sensitivity`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{all_patterns, DiseaseModel, Parameter, ParameterBox, TestOverride, TestPattern, TestSpec};
use crate::strata::{GroupSpec, Scenario, StratumSpec, FRACTION_SUM_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Grid spacing of worst-case searches.
    pub grid_step: f64,
    /// Confidence level is `1 - alpha`.
    pub alpha: f64,
    /// Target margin of error for the `budget` command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moe: Option<f64>,
    pub seed: u64,
    pub replications: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            grid_step: 0.01,
            alpha: 0.05,
            moe: None,
            seed: 2021,
            replications: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioConfig {
    Point(Parameter),
    Box(ParameterBox),
    Strata(Vec<StratumSpec>),
    Groups(Vec<GroupSpec>),
}

impl ScenarioConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioConfig::Point(_) => "point",
            ScenarioConfig::Box(_) => "box",
            ScenarioConfig::Strata(_) => "strata",
            ScenarioConfig::Groups(_) => "groups",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub currency: String,
    pub budget: Option<f64>,
    pub model: DiseaseModel,
    pub patterns: Vec<TestPattern>,
    pub scenario: ScenarioConfig,
    pub options: RunOptions,
}

impl RunConfig {
    /// The budget, or an error naming `budget` when the document has none.
    pub fn require_budget(&self) -> Result<f64> {
        self.budget
            .ok_or_else(|| config_err("budget", "this command needs a budget"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawConfig::from(self)).expect("config serializes")
    }
}

fn config_err(path: impl Into<String>, message: impl ToString) -> Error {
    Error::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Re-labels a validation error from the model layer with a document path.
fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let path = path.into();
    move |e| match e {
        Error::InvalidInput(m) => config_err(path, m),
        other => config_err(path, other),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_currency")]
    currency: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budget: Option<f64>,
    model: RawModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patterns: Option<Vec<Vec<u8>>>,
    scenario: RawScenario,
    #[serde(default)]
    options: RunOptions,
}

fn default_currency() -> String {
    "units".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    tests: Vec<RawTest>,
    nominal: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    id: String,
    cost: f64,
    sensitivity: f64,
    specificity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawScenario {
    Point { p: Vec<f64> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Strata(Vec<RawStratum>),
    Groups(Vec<RawGroup>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStratum {
    name: String,
    population_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<f64>>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    region: Option<RawBox>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    name: String,
    fraction: f64,
    p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<RawOverride>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    test: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensitivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    specificity: Option<f64>,
}

impl From<&RunConfig> for RawConfig {
    fn from(c: &RunConfig) -> Self {
        let scenario = match &c.scenario {
            ScenarioConfig::Point(p) => RawScenario::Point {
                p: p.as_slice().to_vec(),
            },
            ScenarioConfig::Box(b) => RawScenario::Box {
                lower: b.lower.clone(),
                upper: b.upper.clone(),
            },
            ScenarioConfig::Strata(s) => RawScenario::Strata(
                s.iter()
                    .map(|s| {
                        let (p, region) = match &s.scenario {
                            Scenario::Point(p) => (Some(p.as_slice().to_vec()), None),
                            Scenario::Box(b) => (
                                None,
                                Some(RawBox {
                                    lower: b.lower.clone(),
                                    upper: b.upper.clone(),
                                }),
                            ),
                        };
                        RawStratum {
                            name: s.name.clone(),
                            population_fraction: s.population_fraction,
                            p,
                            region,
                        }
                    })
                    .collect(),
            ),
            ScenarioConfig::Groups(g) => RawScenario::Groups(
                g.iter()
                    .map(|g| RawGroup {
                        name: g.name.clone(),
                        fraction: g.fraction,
                        p: g.parameter.as_slice().to_vec(),
                        overrides: g
                            .overrides
                            .iter()
                            .map(|o| RawOverride {
                                test: o.test.clone(),
                                sensitivity: o.sensitivity,
                                specificity: o.specificity,
                            })
                            .collect(),
                    })
                    .collect(),
            ),
        };
        RawConfig {
            currency: c.currency.clone(),
            budget: c.budget,
            model: RawModel {
                tests: c
                    .model
                    .tests
                    .iter()
                    .map(|t| RawTest {
                        id: t.id.clone(),
                        cost: t.cost,
                        sensitivity: t.sensitivity,
                        specificity: t.specificity,
                    })
                    .collect(),
                nominal: c.model.nominal.clone(),
                u: Some(c.model.u.clone()),
            },
            patterns: Some(c.patterns.iter().map(|t| t.bits()).collect()),
            scenario,
            options: c.options.clone(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(
            if path == "." { "(document)".to_string() } else { path },
            e.into_inner(),
        )
    })?;
    validate(raw)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(path.display().to_string(), format!("cannot read: {e}")))?;
    parse_config(&text)
}

fn parameter(p: Vec<f64>, k: usize, path: &str) -> Result<Parameter> {
    if p.len() != k {
        return Err(config_err(path, format!("expected {k} coordinates, got {}", p.len())));
    }
    Parameter::new(p).map_err(at(path))
}

fn parameter_box(lower: Vec<f64>, upper: Vec<f64>, k: usize, path: &str) -> Result<ParameterBox> {
    if lower.len() != k || upper.len() != k {
        return Err(config_err(path, format!("bounds need {k} coordinates each")));
    }
    ParameterBox::new(lower, upper).map_err(at(path))
}

fn fractions_sum(values: impl Iterator<Item = f64>, path: &str) -> Result<()> {
    let total: f64 = values.sum();
    if (total - 1.0).abs() > FRACTION_SUM_TOL {
        return Err(config_err(path, format!("fractions sum to {total}, expected 1")));
    }
    Ok(())
}

fn unique_names<'a>(names: impl Iterator<Item = &'a str>, path: &str) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for (i, n) in names.enumerate() {
        if n.is_empty() {
            return Err(config_err(format!("{path}[{i}].name"), "name must not be empty"));
        }
        if !seen.insert(n) {
            return Err(config_err(format!("{path}[{i}].name"), format!("duplicate name `{n}`")));
        }
    }
    Ok(())
}

fn weight(value: f64, path: String) -> Result<f64> {
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(config_err(path, format!("must lie in (0, 1], got {value}")))
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let RawConfig {
        currency,
        budget,
        model,
        patterns,
        scenario,
        options,
    } = raw;

    if let Some(c) = budget {
        if !(c > 0.0 && c.is_finite()) {
            return Err(config_err("budget", format!("must be positive, got {c}")));
        }
    }

    if model.tests.is_empty() {
        return Err(config_err("model.tests", "at least one test is required"));
    }
    let mut tests = Vec::with_capacity(model.tests.len());
    for (i, t) in model.tests.into_iter().enumerate() {
        let path = format!("model.tests[{i}]");
        let spec = TestSpec::new(t.id, t.cost, t.sensitivity, t.specificity).map_err(at(path))?;
        tests.push(spec);
    }
    let j = tests.len();
    for (s, row) in model.nominal.iter().enumerate() {
        if row.len() != j {
            return Err(config_err(
                format!("model.nominal[{s}]"),
                format!("expected {j} entries (one per test), got {}", row.len()),
            ));
        }
    }
    let k = model.nominal.len().saturating_sub(1);
    let u = model.u.unwrap_or_else(|| vec![1.0; k]);
    if u.len() != k {
        return Err(config_err("model.u", format!("expected {k} entries, got {}", u.len())));
    }
    let model = DiseaseModel::new(tests, model.nominal, u).map_err(at("model"))?;

    let patterns = match patterns {
        None => all_patterns(j),
        Some(list) => {
            if list.is_empty() {
                return Err(config_err("patterns", "pattern list is empty"));
            }
            let mut out: Vec<TestPattern> = Vec::with_capacity(list.len());
            for (i, bits) in list.iter().enumerate() {
                let path = format!("patterns[{i}]");
                if bits.len() != j {
                    return Err(config_err(path, format!("expected {j} entries, got {}", bits.len())));
                }
                let t = TestPattern::from_bits(bits).map_err(at(path.clone()))?;
                if out.contains(&t) {
                    return Err(config_err(path, format!("duplicate pattern {t}")));
                }
                out.push(t);
            }
            out
        }
    };

    let scenario = match scenario {
        RawScenario::Point { p } => ScenarioConfig::Point(parameter(p, k, "scenario.point.p")?),
        RawScenario::Box { lower, upper } => ScenarioConfig::Box(parameter_box(lower, upper, k, "scenario.box")?),
        RawScenario::Strata(list) => {
            if list.is_empty() {
                return Err(config_err("scenario.strata", "at least one stratum is required"));
            }
            unique_names(list.iter().map(|s| s.name.as_str()), "scenario.strata")?;
            fractions_sum(list.iter().map(|s| s.population_fraction), "scenario.strata")?;
            let mut out = Vec::with_capacity(list.len());
            for (i, s) in list.into_iter().enumerate() {
                let base = format!("scenario.strata[{i}]");
                let fraction = weight(s.population_fraction, format!("{base}.population_fraction"))?;
                let scenario = match (s.p, s.region) {
                    (Some(p), None) => Scenario::Point(parameter(p, k, &format!("{base}.p"))?),
                    (None, Some(b)) => Scenario::Box(parameter_box(b.lower, b.upper, k, &format!("{base}.box"))?),
                    _ => return Err(config_err(base, "give exactly one of `p` and `box`")),
                };
                out.push(StratumSpec {
                    name: s.name,
                    population_fraction: fraction,
                    scenario,
                });
            }
            ScenarioConfig::Strata(out)
        }
        RawScenario::Groups(list) => {
            if list.is_empty() {
                return Err(config_err("scenario.groups", "at least one group is required"));
            }
            unique_names(list.iter().map(|g| g.name.as_str()), "scenario.groups")?;
            fractions_sum(list.iter().map(|g| g.fraction), "scenario.groups")?;
            let mut out = Vec::with_capacity(list.len());
            for (i, g) in list.into_iter().enumerate() {
                let base = format!("scenario.groups[{i}]");
                let fraction = weight(g.fraction, format!("{base}.fraction"))?;
                let parameter = parameter(g.p, k, &format!("{base}.p"))?;
                let mut overrides = Vec::with_capacity(g.overrides.len());
                for (o_i, o) in g.overrides.into_iter().enumerate() {
                    let path = format!("{base}.overrides[{o_i}]");
                    let o = TestOverride {
                        test: o.test,
                        sensitivity: o.sensitivity,
                        specificity: o.specificity,
                    };
                    model.with_overrides(std::slice::from_ref(&o)).map_err(at(path))?;
                    overrides.push(o);
                }
                out.push(GroupSpec {
                    name: g.name,
                    fraction,
                    parameter,
                    overrides,
                });
            }
            ScenarioConfig::Groups(out)
        }
    };

    if !(options.grid_step > 0.0 && options.grid_step <= 1.0) {
        return Err(config_err(
            "options.grid_step",
            format!("must lie in (0, 1], got {}", options.grid_step),
        ));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(config_err(
            "options.alpha",
            format!("must lie in (0, 1), got {}", options.alpha),
        ));
    }
    if let Some(m) = options.moe {
        if !(m > 0.0 && m.is_finite()) {
            return Err(config_err("options.moe", format!("must be positive, got {m}")));
        }
    }
    if options.replications < 100 {
        return Err(config_err(
            "options.replications",
            format!("at least 100 replications are needed, got {}", options.replications),
        ));
    }

    Ok(RunConfig {
        currency,
        budget,
        model,
        patterns,
        scenario,
        options,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINT: &str = r#"{
        "currency": "Rs",
        "budget": 1e7,
        "model": {
            "tests": [
                {"id": "RAT", "cost": 450, "sensitivity": 0.5, "specificity": 0.975},
                {"id": "RTPCR", "cost": 1600, "sensitivity": 0.95, "specificity": 0.97},
                {"id": "antibody", "cost": 300, "sensitivity": 0.921, "specificity": 0.977}
            ],
            "nominal": [[1,1,0],[0,0,1],[1,1,1],[0,0,0]]
        },
        "scenario": {"point": {"p": [0.10, 0.30, 0.01]}}
    }"#;

    fn path_of(text: &str) -> String {
        match parse_config(text).unwrap_err() {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(POINT).unwrap();
        assert_eq!(c.model, DiseaseModel::serosurvey([450.0, 1600.0, 300.0]));
        assert_eq!(c.patterns, all_patterns(3));
        assert_eq!(c.options, RunOptions::default());
        assert_eq!(c.budget, Some(1e7));
        assert_eq!(
            c.scenario,
            ScenarioConfig::Point(Parameter::new(vec![0.10, 0.30, 0.01]).unwrap())
        );
    }

    #[test]
    fn round_trip() {
        let c = parse_config(POINT).unwrap();
        assert_eq!(parse_config(&c.to_json()).unwrap(), c);
        let groups = POINT.replace(
            r#"{"point": {"p": [0.10, 0.30, 0.01]}}"#,
            r#"{"groups": [
                {"name": "s", "fraction": 0.1, "p": [0.1, 0.3, 0.01], "overrides": [{"test": "RAT", "sensitivity": 0.68}]},
                {"name": "a", "fraction": 0.9, "p": [0.1, 0.3, 0.01]}]}"#,
        );
        let g = parse_config(&groups).unwrap();
        assert_eq!(parse_config(&g.to_json()).unwrap(), g);
        let strata = POINT.replace(
            r#"{"point": {"p": [0.10, 0.30, 0.01]}}"#,
            r#"{"strata": [
                {"name": "n", "population_fraction": 0.4, "p": [0.1, 0.3, 0.01]},
                {"name": "s", "population_fraction": 0.6, "box": {"lower": [0.01, 0.1, 0], "upper": [0.15, 0.5, 0.02]}}]}"#,
        );
        let s = parse_config(&strata).unwrap();
        assert_eq!(parse_config(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn errors_name_paths() {
        assert_eq!(
            path_of(&POINT.replace(r#""tests": ["#, r#""tests": [], "x": ["#)),
            "model.x"
        );
        let empty = r#"{"model": {"tests": [], "nominal": [[0],[1]]}, "scenario": {"point": {"p": [0.1]}}}"#;
        assert_eq!(path_of(empty), "model.tests");
        assert_eq!(path_of(&POINT.replace("0.95", "1.0")), "model.tests[1]");
        let msg = parse_config(&POINT.replace("0.95", "1.0")).unwrap_err().to_string();
        assert!(msg.contains("strictly inside (0, 1)"), "{msg}");
        assert_eq!(
            path_of(&POINT.replace("[0.10, 0.30, 0.01]", "[0.5, 0.6, 0.01]")),
            "scenario.point.p"
        );
        assert_eq!(
            path_of(&POINT.replace("[0.10, 0.30, 0.01]", "[0.5, 0.1]")),
            "scenario.point.p"
        );
        assert_eq!(path_of(&POINT.replace("1e7", "-1")), "budget");
        assert_eq!(
            path_of(&POINT.replace("\"cost\": 1600", "\"cost\": \"a lot\"")),
            "model.tests[1].cost"
        );
        assert_eq!(
            path_of(&POINT.replace("[1,1,1],[0,0,0]", "[1,1],[0,0,0]")),
            "model.nominal[2]"
        );
    }

    #[test]
    fn scenario_needs_exactly_one_kind() {
        let two = POINT.replace(
            r#"{"point": {"p": [0.10, 0.30, 0.01]}}"#,
            r#"{"point": {"p": [0.10, 0.30, 0.01]}, "box": {"lower": [0,0,0], "upper": [0.1,0.1,0.1]}}"#,
        );
        assert!(parse_config(&two).is_err());
        let fractions = POINT.replace(
            r#"{"point": {"p": [0.10, 0.30, 0.01]}}"#,
            r#"{"strata": [{"name": "a", "population_fraction": 0.5, "p": [0.1,0.1,0.1]}]}"#,
        );
        assert_eq!(path_of(&fractions), "scenario.strata");
    }
}
