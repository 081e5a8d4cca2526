//! Noisy multi-test observation model.
//!
//! Every individual is in one of `k + 1` disease states; the last state is the reference
//! state whose probability is `1 - sum(p)`. Test `j` has a nominal response `M(s, j)` in each
//! state, observed through a binary asymmetric channel: the nominal response is reported
//! correctly with probability `sensitivity` when it is positive and `specificity` when it is
//! negative. Tests are conditionally independent given the state.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Eigenvalue floor for the positive-definiteness checks.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Slack allowed on `sum(p) <= 1` when validating parameters.
const SIMPLEX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub id: String,
    pub cost: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl TestSpec {
    pub fn new(id: impl Into<String>, cost: f64, sensitivity: f64, specificity: f64) -> Result<Self> {
        let spec = TestSpec {
            id: id.into(),
            cost,
            sensitivity,
            specificity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("test id must not be empty".into()));
        }
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "test `{}`: cost must be positive, got {}",
                self.id, self.cost
            )));
        }
        for (name, value) in [("sensitivity", self.sensitivity), ("specificity", self.specificity)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "test `{}`: {name} must lie strictly inside (0, 1) so every outcome has \
                     positive probability, got {value}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Probability the test reports the nominal response correctly.
    #[inline]
    pub fn reliability(&self, nominal_positive: bool) -> f64 {
        if nominal_positive {
            self.sensitivity
        } else {
            self.specificity
        }
    }
}

/// Replacement sensitivity and/or specificity for one test, used for observable groups
/// whose test reliabilities differ from the base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOverride {
    pub test: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseModel {
    pub tests: Vec<TestSpec>,
    /// Nominal responses, one row per state; the last row is the reference state.
    pub nominal: Vec<Vec<u8>>,
    /// Coefficients of the estimated functional `u^T p`.
    pub u: Vec<f64>,
}

impl DiseaseModel {
    pub fn new(tests: Vec<TestSpec>, nominal: Vec<Vec<u8>>, u: Vec<f64>) -> Result<Self> {
        let model = DiseaseModel { tests, nominal, u };
        model.validate()?;
        Ok(model)
    }

    /// The four-state serosurvey model: active infection only, antibodies only, both,
    /// neither (reference). Tests are RAT, RTPCR and antibody, in that order.
    pub fn serosurvey(costs: [f64; 3]) -> Self {
        let tests = vec![
            TestSpec::new("RAT", costs[0], 0.5, 0.975),
            TestSpec::new("RTPCR", costs[1], 0.95, 0.97),
            TestSpec::new("antibody", costs[2], 0.921, 0.977),
        ];
        DiseaseModel::new(
            tests.into_iter().collect::<Result<_>>().expect("valid default tests"),
            vec![vec![1, 1, 0], vec![0, 0, 1], vec![1, 1, 1], vec![0, 0, 0]],
            vec![1.0, 1.0, 1.0],
        )
        .expect("valid default model")
    }

    pub fn validate(&self) -> Result<()> {
        if self.tests.is_empty() {
            return Err(Error::InvalidInput("model needs at least one test".into()));
        }
        for t in &self.tests {
            t.validate()?;
        }
        for (i, a) in self.tests.iter().enumerate() {
            if self.tests[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidInput(format!("duplicate test id `{}`", a.id)));
            }
        }
        if self.nominal.len() < 2 {
            return Err(Error::InvalidInput(
                "nominal matrix needs at least two states (k >= 1)".into(),
            ));
        }
        let j = self.tests.len();
        for (s, row) in self.nominal.iter().enumerate() {
            if row.len() != j {
                return Err(Error::InvalidInput(format!(
                    "nominal row {s} has {} entries, expected {j}",
                    row.len()
                )));
            }
            if row.iter().any(|&m| m > 1) {
                return Err(Error::InvalidInput(format!(
                    "nominal row {s} has entries outside {{0,1}}"
                )));
            }
        }
        if self.u.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "u has length {}, expected k = {}",
                self.u.len(),
                self.dim()
            )));
        }
        if self.u.iter().all(|&x| x == 0.0) || self.u.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("u must be a finite nonzero vector".into()));
        }
        Ok(())
    }

    /// Parameter dimension `k` (number of non-reference states).
    #[inline]
    pub fn dim(&self) -> usize {
        self.nominal.len() - 1
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.nominal.len()
    }

    #[inline]
    pub fn num_tests(&self) -> usize {
        self.tests.len()
    }

    #[inline]
    pub fn nominal_positive(&self, state: usize, test: usize) -> bool {
        self.nominal[state][test] == 1
    }

    pub fn test_index(&self, id: &str) -> Option<usize> {
        self.tests.iter().position(|t| t.id == id)
    }

    pub fn pattern_cost(&self, pattern: &TestPattern) -> f64 {
        pattern.included().map(|j| self.tests[j].cost).sum()
    }

    /// Copy of the model with per-test sensitivity/specificity replaced. Unspecified
    /// entries keep their base values.
    pub fn with_overrides(&self, overrides: &[TestOverride]) -> Result<DiseaseModel> {
        let mut model = self.clone();
        for o in overrides {
            let j = model
                .test_index(&o.test)
                .ok_or_else(|| Error::InvalidInput(format!("override names unknown test `{}`", o.test)))?;
            if let Some(s) = o.sensitivity {
                model.tests[j].sensitivity = s;
            }
            if let Some(s) = o.specificity {
                model.tests[j].specificity = s;
            }
        }
        model.validate()?;
        Ok(model)
    }

    /// Same model with every test cost multiplied by `factor`.
    pub fn with_scaled_costs(&self, factor: f64) -> DiseaseModel {
        let mut model = self.clone();
        for t in &mut model.tests {
            t.cost *= factor;
        }
        model
    }
}

/// A nonempty subset of tests administered to one participant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct TestPattern {
    mask: Vec<bool>,
}

impl TestPattern {
    pub fn new(mask: Vec<bool>) -> Result<Self> {
        if !mask.iter().any(|&b| b) {
            return Err(Error::InvalidInput(
                "test pattern must include at least one test".into(),
            ));
        }
        Ok(TestPattern { mask })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput(format!(
                "pattern {bits:?} has entries outside {{0,1}}"
            )));
        }
        TestPattern::new(bits.iter().map(|&b| b == 1).collect())
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn includes(&self, test: usize) -> bool {
        self.mask[test]
    }

    /// Indices of included tests, ascending.
    pub fn included(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    pub fn num_included(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.mask.iter().map(|&b| b as u8).collect()
    }

    /// True when every test of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &TestPattern) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

impl TryFrom<Vec<u8>> for TestPattern {
    type Error = Error;
    fn try_from(bits: Vec<u8>) -> Result<Self> {
        TestPattern::from_bits(&bits)
    }
}

impl From<TestPattern> for Vec<u8> {
    fn from(p: TestPattern) -> Self {
        p.bits()
    }
}

impl fmt::Display for TestPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, &b) in self.mask.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", b as u8)?;
        }
        write!(f, ")")
    }
}

/// All `2^J - 1` nonempty patterns in lexicographic order, e.g. (0,0,1), (0,1,0), (0,1,1), ...
pub fn all_patterns(num_tests: usize) -> Vec<TestPattern> {
    (1u32..(1 << num_tests))
        .map(|n| TestPattern {
            mask: (0..num_tests).map(|j| (n >> (num_tests - 1 - j)) & 1 == 1).collect(),
        })
        .collect()
}

/// Observed results of one participant; `None` marks a test that was not conducted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Outcome(pub Vec<Option<bool>>);

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, y) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match y {
                None => write!(f, "NA")?,
                Some(b) => write!(f, "{}", *b as u8)?,
            }
        }
        write!(f, ")")
    }
}

/// Outcome vectors of `pattern`, lexicographic over the included tests.
pub fn outcome_space(pattern: &TestPattern) -> Vec<Outcome> {
    let idx: Vec<usize> = pattern.included().collect();
    let m = idx.len();
    (0u32..(1 << m))
        .map(|n| {
            let mut y = vec![None; pattern.len()];
            for (i, &j) in idx.iter().enumerate() {
                y[j] = Some((n >> (m - 1 - i)) & 1 == 1);
            }
            Outcome(y)
        })
        .collect()
}

/// `q(y | s, t)`: probability of outcome `y` for a participant in `state` (0-based; the
/// reference state is `k`) who receives pattern `t`.
pub fn conditional_prob(y: &Outcome, state: usize, t: &TestPattern, model: &DiseaseModel) -> Result<f64> {
    if y.0.len() != model.num_tests() || t.len() != model.num_tests() {
        return Err(Error::Structural(format!(
            "outcome {y} / pattern {t} do not match {} tests",
            model.num_tests()
        )));
    }
    if state >= model.num_states() {
        return Err(Error::InvalidInput(format!(
            "state index {state} out of range (model has {} states)",
            model.num_states()
        )));
    }
    let mut prob = 1.0;
    for (j, obs) in y.0.iter().enumerate() {
        match (t.includes(j), obs) {
            (true, Some(v)) => {
                let nominal = model.nominal_positive(state, j);
                let r = model.tests[j].reliability(nominal);
                prob *= if *v == nominal { r } else { 1.0 - r };
            }
            (false, None) => {}
            (true, None) => {
                return Err(Error::Structural(format!(
                    "outcome {y} is NA at conducted test {j} of {t}"
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Structural(format!(
                    "outcome {y} has a result at excluded test {j} of {t}"
                )))
            }
        }
    }
    Ok(prob)
}

/// `P(y | t; p) = sum_s p_s q(y|s,t) + (1 - sum p) q(y|ref,t)`.
pub fn mixture_prob(y: &Outcome, t: &TestPattern, p: &Parameter, model: &DiseaseModel) -> Result<f64> {
    check_dim(p, model)?;
    let k = model.dim();
    let mut total = p.reference_mass() * conditional_prob(y, k, t, model)?;
    for (s, &ps) in p.as_slice().iter().enumerate() {
        total += ps * conditional_prob(y, s, t, model)?;
    }
    Ok(total)
}

/// Information matrix `I_t(p)` of one participant receiving pattern `t`.
pub fn fisher_info(t: &TestPattern, p: &Parameter, model: &DiseaseModel) -> Result<FisherMatrix> {
    check_dim(p, model)?;
    if t.len() != model.num_tests() {
        return Err(Error::Structural(format!(
            "pattern {t} does not match {} tests",
            model.num_tests()
        )));
    }
    Ok(Channel::new(model, t.clone()).fisher(p.as_slice()))
}

fn check_dim(p: &Parameter, model: &DiseaseModel) -> Result<()> {
    if p.dim() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "parameter has dimension {}, model expects {}",
            p.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Precomputed outcome likelihoods of one pattern under one model.
///
/// `q` is row-major `[outcome][state]`; `diff[y]` holds `q(y|i) - q(y|ref)` for `i < k`.
#[derive(Debug, Clone)]
pub struct Channel {
    pattern: TestPattern,
    cost: f64,
    num_states: usize,
    q: Vec<f64>,
    diff: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(model: &DiseaseModel, pattern: TestPattern) -> Self {
        let outcomes = outcome_space(&pattern);
        let ns = model.num_states();
        let k = model.dim();
        let mut q = Vec::with_capacity(outcomes.len() * ns);
        for y in &outcomes {
            for s in 0..ns {
                q.push(conditional_prob(y, s, &pattern, model).expect("outcome from outcome_space"));
            }
        }
        let diff = (0..outcomes.len())
            .map(|o| (0..k).map(|i| q[o * ns + i] - q[o * ns + k]).collect())
            .collect();
        Channel {
            cost: model.pattern_cost(&pattern),
            pattern,
            num_states: ns,
            q,
            diff,
        }
    }

    pub fn pattern(&self) -> &TestPattern {
        &self.pattern
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn num_outcomes(&self) -> usize {
        self.diff.len()
    }

    /// `q(y_o | s, t)` by outcome index.
    #[inline]
    pub fn likelihood(&self, outcome: usize, state: usize) -> f64 {
        self.q[outcome * self.num_states + state]
    }

    /// Likelihood difference vector `q(y|.) - q(y|ref)` of outcome `o`.
    #[inline]
    pub fn difference(&self, outcome: usize) -> &[f64] {
        &self.diff[outcome]
    }

    /// Mixture probabilities of every outcome at `p`.
    pub fn mixture(&self, p: &[f64]) -> Vec<f64> {
        let k = self.num_states - 1;
        (0..self.num_outcomes())
            .map(|o| self.q[o * self.num_states + k] + crate::linalg::dot(p, &self.diff[o]))
            .collect()
    }

    pub fn fisher(&self, p: &[f64]) -> FisherMatrix {
        let k = self.num_states - 1;
        let mut info = SymMatrix::zeros(k);
        for (o, prob) in self.mixture(p).into_iter().enumerate() {
            let d = &self.diff[o];
            info.add_outer(d, d, 1.0 / prob);
        }
        FisherMatrix(info)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Parameter(Vec<f64>);

impl Parameter {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidInput(
                "parameter must have at least one coordinate".into(),
            ));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "parameter {p:?} has a negative or non-finite coordinate"
            )));
        }
        let sum: f64 = p.iter().sum();
        if sum > 1.0 + SIMPLEX_SLACK {
            return Err(Error::InvalidInput(format!("parameter {p:?} sums to {sum} > 1")));
        }
        Ok(Parameter(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Probability of the reference state.
    pub fn reference_mass(&self) -> f64 {
        1.0 - self.0.iter().sum::<f64>()
    }

    pub fn linear(&self, u: &[f64]) -> f64 {
        crate::linalg::dot(&self.0, u)
    }
}

impl TryFrom<Vec<f64>> for Parameter {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        Parameter::new(p)
    }
}

impl From<Parameter> for Vec<f64> {
    fn from(p: Parameter) -> Self {
        p.0
    }
}

/// Axis-aligned box intersected with `{p >= 0, sum(p) <= 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = ParameterBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn point(p: &Parameter) -> Self {
        ParameterBox {
            lower: p.as_slice().to_vec(),
            upper: p.as_slice().to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidInput(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "box coordinate {i}: need 0 <= lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        let min_sum: f64 = self.lower.iter().sum();
        if min_sum > 1.0 + SIMPLEX_SLACK {
            return Err(Error::InvalidInput(format!(
                "box does not meet the simplex: lower corner sums to {min_sum}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &Parameter) -> bool {
        p.dim() == self.dim()
            && p.as_slice()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo - 1e-12 && x <= hi + 1e-12)
    }

    /// Feasible grid points in lexicographic order: a regular lattice of spacing `step`
    /// anchored at `lower` (upper faces always included), restricted to `sum(p) <= 1`,
    /// plus the points where the last coordinate lands on the `sum(p) = 1` facet.
    pub fn grid(&self, step: f64) -> Result<Vec<Parameter>> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
        }
        self.validate()?;
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| axis_values(lo, hi, step))
            .collect();
        let k = axes.len();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut idx = vec![0usize; k];
        for n in 0..total {
            // mixed-radix digits, last coordinate fastest
            let mut rem = n;
            for d in (0..k).rev() {
                idx[d] = rem % axes[d].len();
                rem /= axes[d].len();
            }
            let head: Vec<f64> = (0..k - 1).map(|i| axes[i][idx[i]]).collect();
            let head_sum: f64 = head.iter().sum();
            let last = axes[k - 1][idx[k - 1]];
            if head_sum + last <= 1.0 + SIMPLEX_SLACK {
                let mut p = head.clone();
                p.push(last);
                points.push(p);
            }
            if idx[k - 1] == 0 {
                // the point of this head on the sum(p) = 1 facet, when it is off-lattice
                let on_facet = round12((1.0 - head_sum).max(0.0));
                let (lo, hi) = (self.lower[k - 1], self.upper[k - 1]);
                if on_facet >= lo && on_facet <= hi && !axes[k - 1].iter().any(|&v| (v - on_facet).abs() < 1e-12) {
                    let mut p = head;
                    p.push(on_facet);
                    points.push(p);
                }
            }
        }
        points.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        points.dedup();
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        points.into_iter().map(Parameter::new).collect()
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn axis_values(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut vals: Vec<f64> = (0..=n).map(|i| round12(lo + i as f64 * step).min(hi)).collect();
    if hi - vals[vals.len() - 1] > 1e-12 {
        vals.push(hi);
    }
    vals.dedup();
    vals
}

/// Symmetric positive semidefinite information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix(pub SymMatrix);

impl FisherMatrix {
    pub fn matrix(&self) -> &SymMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue()
    }

    pub fn is_positive_definite(&self, tol: f64) -> bool {
        self.min_eigenvalue() > tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Report {
    pub holds: bool,
    /// First pattern (in the given order) with a positive definite information matrix.
    pub witness: Option<TestPattern>,
    /// Smallest eigenvalue of the witness, or the largest one found when none qualifies.
    pub lambda_min: f64,
}

/// Pointwise identifiability: some pattern has `lambda_min(I_t(p)) > PD_TOLERANCE`.
pub fn check_a1(p: &Parameter, patterns: &[TestPattern], model: &DiseaseModel) -> Result<A1Report> {
    let mut best = f64::NEG_INFINITY;
    for t in patterns {
        let lam = fisher_info(t, p, model)?.min_eigenvalue();
        if lam > PD_TOLERANCE {
            return Ok(A1Report {
                holds: true,
                witness: Some(t.clone()),
                lambda_min: lam,
            });
        }
        best = best.max(lam);
    }
    Ok(A1Report {
        holds: false,
        witness: None,
        lambda_min: best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A2Report {
    pub holds: bool,
    pub witness: Option<TestPattern>,
    /// Minimum over the grid of `lambda_min` for the witness (or for the best candidate).
    pub worst_lambda_min: f64,
    /// Grid point attaining `worst_lambda_min`.
    pub argmin: Parameter,
    pub grid_points: usize,
}

/// Uniform identifiability over a box, checked on the feasible grid of spacing `grid_step`.
pub fn check_a2(
    region: &ParameterBox,
    patterns: &[TestPattern],
    model: &DiseaseModel,
    grid_step: f64,
) -> Result<A2Report> {
    if region.dim() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "box has dimension {}, model expects {}",
            region.dim(),
            model.dim()
        )));
    }
    let grid = region.grid(grid_step)?;
    let mut best: Option<(f64, usize, usize)> = None;
    for (ti, t) in patterns.iter().enumerate() {
        let channel = Channel::new(model, t.clone());
        let (worst, at) = grid
            .iter()
            .enumerate()
            .map(|(gi, p)| (channel.fisher(p.as_slice()).min_eigenvalue(), gi))
            .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc });
        if worst > PD_TOLERANCE {
            return Ok(A2Report {
                holds: true,
                witness: Some(t.clone()),
                worst_lambda_min: worst,
                argmin: grid[at].clone(),
                grid_points: grid.len(),
            });
        }
        if best.is_none_or(|b| worst > b.0) {
            best = Some((worst, ti, at));
        }
    }
    let (worst, _, at) = best.ok_or_else(|| Error::InvalidInput("no candidate patterns".into()))?;
    Ok(A2Report {
        holds: false,
        witness: None,
        worst_lambda_min: worst,
        argmin: grid[at].clone(),
        grid_points: grid.len(),
    })
}
