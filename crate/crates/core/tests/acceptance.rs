//! Acceptance suite: one `[PASS]` / `[FAIL]` line per criterion.
//!
//! Criteria 4 and 10 are known to fail (see the decisions ledger). By default the process
//! exits nonzero only when some other criterion fails; with `ACCEPTANCE_STRICT=1` any
//! failure is fatal.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{fisher_fd, fixture, interior, simplex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use survey_design::config::{load_config, RunConfig, ScenarioConfig};
use survey_design::copt::{objective, solve_c_optimal, SolveReport, SolverOptions};
use survey_design::minimax::{payoff, worst_case_design, worst_case_value, GridGame, MinimaxOptions};
use survey_design::model::{all_patterns, fisher_info, DiseaseModel, Parameter, ParameterBox};
use survey_design::simulate::variance_check;
use survey_design::strata::{allocate_districts, allocate_groups, StratumSpec};

const KNOWN_RED: [u32; 2] = [4, 10];

type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(name: &str) -> RunConfig {
    load_config(fixture(name)).expect("fixture")
}

fn point_solve(name: &str) -> SolveReport {
    let c = config(name);
    let ScenarioConfig::Point(p) = &c.scenario else {
        panic!("{name} is not a point scenario")
    };
    solve_c_optimal(p, &c.model, &c.patterns, c.budget.unwrap(), &SolverOptions::default()).unwrap()
}

fn near(got: u64, want: u64, tol: u64) -> bool {
    got.abs_diff(want) <= tol
}

fn c1() -> Outcome {
    let r = point_solve("rtpcr1600.json");
    let d = &r.design;
    let (a, b) = (d.integer_count_of(&[0, 0, 1]), d.integer_count_of(&[1, 0, 1]));
    let others: u64 = d.entries.iter().map(|e| e.integer_count).sum::<u64>() - a - b;
    check(
        near(a, 521, 2) && near(b, 13125, 2) && others == 0,
        format!("(0,0,1) {a}, (1,0,1) {b}, others {others}; want 521 / 13125 +-2"),
    )
}

fn c2() -> Outcome {
    let r2 = point_solve("rtpcr1000.json").design;
    let r3 = point_solve("rtpcr100.json").design;
    let (a, b) = (r2.integer_count_of(&[0, 0, 1]), r2.integer_count_of(&[0, 1, 1]));
    let c = r3.integer_count_of(&[0, 1, 1]);
    let support = r3.entries.iter().filter(|e| e.fraction > 0.0).count();
    check(
        near(a, 8000, 2) && near(b, 5846, 2) && near(c, 25000, 2) && support == 1,
        format!("RTPCR 1000: {a} / {b} (want 8000 / 5846); RTPCR 100: {c} on {support} pattern(s) (want 25000 on 1)"),
    )
}

fn wide_box() -> (DiseaseModel, ParameterBox, RunConfig) {
    let c = config("box_rtpcr100.json");
    let ScenarioConfig::Box(region) = c.scenario.clone() else {
        panic!("box scenario expected")
    };
    (c.model.clone(), region, c)
}

fn c3() -> Outcome {
    let (m, region, c) = wide_box();
    let r = worst_case_design(&region, &m, &c.patterns, c.budget.unwrap(), &MinimaxOptions::default()).unwrap();
    let d = &r.design;
    let (a, b) = (d.integer_count_of(&[0, 0, 1]), d.integer_count_of(&[0, 1, 1]));
    let ps = r.saddle.p_star.as_slice();
    let dist = ps
        .iter()
        .zip([0.06, 0.45, 0.0])
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let (sa, sb) = (100.0 * d.fraction_of(&[0, 0, 1]), 100.0 * d.fraction_of(&[0, 1, 1]));
    check(
        near(a, 838, 5) && near(b, 24371, 5) && dist <= 0.02 && (sa - 2.5).abs() <= 0.3 && (sb - 97.5).abs() <= 0.3,
        format!("counts {a} / {b} (want 838 / 24371 +-5), p* {ps:?} (dist {dist:.3}), split {sa:.2}% / {sb:.2}%"),
    )
}

fn c4() -> Outcome {
    let (m, region, c) = wide_box();
    let opts = MinimaxOptions::default();
    let r = worst_case_design(&region, &m, &c.patterns, 1.0, &opts).unwrap();
    let best = r
        .refinement
        .as_ref()
        .map_or(r.saddle.game_value, |x| x.worst_case_value);
    let only: Vec<f64> = c
        .patterns
        .iter()
        .map(|t| if t.bits() == [0, 1, 1] { 1.0 } else { 0.0 })
        .collect();
    let (forced, at) = worst_case_value(&only, &region, &m, &c.patterns, opts.grid_step).unwrap();
    let ratio = forced / best;
    check(
        (ratio - 1.0023).abs() <= 0.0005,
        format!(
            "ratio {ratio:.5} (all-(0,1,1) worst case {forced:.4} at {:?}, optimal {best:.4}); want 1.0023 +-0.0005",
            at.as_slice()
        ),
    )
}

fn c5() -> Outcome {
    let c = config("symptom_groups.json");
    let ScenarioConfig::Groups(groups) = &c.scenario else {
        panic!("groups scenario expected")
    };
    let r = allocate_groups(
        groups,
        &c.model,
        &c.patterns,
        c.budget.unwrap(),
        &MinimaxOptions::default(),
    )
    .unwrap();
    let (s, a) = (r.stratum("symptomatic").unwrap(), r.stratum("asymptomatic").unwrap());
    let s1 = s.solve.design.integer_count_of(&[0, 0, 1]);
    let s2 = s.solve.design.integer_count_of(&[1, 0, 1]);
    let a2 = a.solve.design.integer_count_of(&[1, 0, 1]);
    let (ps, pa) = (100.0 * s.share, 100.0 * a.share);
    check(
        (ps - 8.8).abs() <= 0.3
            && (pa - 91.2).abs() <= 0.3
            && near(s1, 300, 5)
            && near(s2, 1046, 5)
            && near(a2, 12167, 5),
        format!("split {ps:.2}% / {pa:.2}%, S {s1} / {s2}, A {a2} (want 8.8 / 91.2, 300 / 1046, 12167)"),
    )
}

fn c6() -> Outcome {
    let mut worst = 0.0f64;
    let mut identical = true;
    for name in ["rtpcr1600.json", "rtpcr1000.json", "rtpcr100.json"] {
        let c = config(name);
        let ScenarioConfig::Point(p) = &c.scenario else {
            unreachable!()
        };
        let opts = SolverOptions::default();
        let a = solve_c_optimal(p, &c.model, &c.patterns, 1e7, &opts).unwrap();
        let b = solve_c_optimal(p, &c.model, &c.patterns, 2e7, &opts).unwrap();
        identical &= a
            .design
            .fractions()
            .iter()
            .zip(b.design.fractions())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        worst = worst.max((a.min_variance / (2.0 * b.min_variance) - 1.0).abs());
    }
    check(
        identical && worst <= 1e-12,
        format!("v* bitwise identical: {identical}; variance halving error {worst:.1e}"),
    )
}

fn c7() -> Outcome {
    let mut rel: Vec<(String, f64)> = Vec::new();
    for (i, name) in ["rtpcr1600.json", "rtpcr1000.json", "rtpcr100.json"].iter().enumerate() {
        rel.push((format!("point {}", i + 1), point_solve(name).relative_kkt_residual()));
    }
    let (m, region, c) = wide_box();
    let opts = MinimaxOptions::default();
    let game = GridGame::new(&region, &m, &c.patterns, opts.grid_step).unwrap();
    let envelope = game.lower_envelope(&opts.solver).unwrap();
    let worst_env = envelope
        .iter()
        .map(|s| s.kkt_residual / s.objective)
        .fold(0.0, f64::max);
    rel.push((format!("box grid ({} solves)", envelope.len()), worst_env));
    let r4 = worst_case_design(&region, &m, &c.patterns, c.budget.unwrap(), &opts).unwrap();
    rel.push(("box p*".into(), r4.solve.relative_kkt_residual()));
    let c5 = config("symptom_groups.json");
    let ScenarioConfig::Groups(groups) = &c5.scenario else {
        unreachable!()
    };
    let r5 = allocate_groups(groups, &c5.model, &c5.patterns, c5.budget.unwrap(), &opts).unwrap();
    for s in &r5.strata {
        rel.push((format!("group {}", s.name), s.solve.relative_kkt_residual()));
    }
    let worst = rel.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    check(
        worst.1 <= 1e-6,
        format!("largest relative residual {:.1e} ({})", worst.1, worst.0),
    )
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2021);
    let m = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = Parameter::new(interior(&mut rng, 0.02)).unwrap();
        for t in all_patterns(3) {
            let b = t.bits();
            let fd = fisher_fd(&[b[0], b[1], b[2]], p.as_slice());
            let f = fisher_info(&t, &p, &m).unwrap();
            let scale = fd.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max((f.get(i, j) - fd[i][j]).abs() / scale);
                }
            }
        }
    }
    check(
        worst <= 1e-4,
        format!("max relative error {worst:.1e} over 20 points x 7 patterns"),
    )
}

fn c9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2021);
    let m = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let pats = all_patterns(3);
    let (mut convex, mut concave) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..500 {
        let p = Parameter::new(interior(&mut rng, 0.005)).unwrap();
        let (v1, v2) = (simplex(&mut rng, 7), simplex(&mut rng, 7));
        let lam: f64 = rng.random();
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let f = |v: &[f64]| objective(v, &p, &m, &pats).unwrap();
        convex = convex.min(lam * f(&v1) + (1.0 - lam) * f(&v2) - f(&mix));
    }
    for _ in 0..500 {
        let v = simplex(&mut rng, 7);
        let (p1, p2) = (interior(&mut rng, 0.005), interior(&mut rng, 0.005));
        let lam: f64 = rng.random();
        let mid: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let g = |p: &[f64]| payoff(&v, &Parameter::new(p.to_vec()).unwrap(), &m, &pats).unwrap();
        concave = concave.min(g(&mid) - lam * g(&p1) - (1.0 - lam) * g(&p2));
    }
    check(
        convex >= -1e-9 && concave >= -1e-9,
        format!("min slack: convexity in v {convex:.2e}, concavity in p {concave:.2e}"),
    )
}

fn c10() -> Outcome {
    let r = point_solve("rtpcr1600.json");
    let m = config("rtpcr1600.json").model;
    let v = variance_check(&r.p, &m, &r.design, 200, 2021).unwrap();
    check(
        (0.90..=1.10).contains(&v.ratio),
        format!(
            "seed 2021, 200 replications: ratio {:.4} (sampling sd of the ratio ~{:.3}); want [0.90, 1.10]",
            v.ratio,
            (2.0 / 199.0f64).sqrt()
        ),
    )
}

fn c11() -> Outcome {
    let m = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let region = ParameterBox::new(vec![0.01, 0.10, 0.0], vec![0.10, 0.30, 0.02]).unwrap();
    let n = [0.2, 0.3, 0.5];
    let strata: Vec<StratumSpec> = ["a", "b", "c"]
        .iter()
        .zip(n)
        .map(|(name, w)| StratumSpec::boxed(*name, w, region.clone()))
        .collect();
    let r = allocate_districts(&strata, &m, &all_patterns(3), 1e7, &MinimaxOptions::default()).unwrap();
    let err = r
        .strata
        .iter()
        .zip(n)
        .map(|(s, w)| (s.budget / 1e7 - w).abs())
        .fold(0.0, f64::max);
    check(err <= 1e-9, format!("max |C_d/C - n_d| = {err:.1e}"))
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 11] = [
        (1, "point design, RTPCR at 1600", c1, Some(Duration::from_secs(1))),
        (2, "point designs, RTPCR at 1000 and 100", c2, None),
        (
            3,
            "worst case over the box, RTPCR at 100",
            c3,
            Some(Duration::from_secs(60)),
        ),
        (4, "all-(0,1,1) worst-case ratio", c4, None),
        (5, "symptom groups", c5, None),
        (6, "budget scaling", c6, None),
        (7, "KKT residuals", c7, None),
        (8, "Fisher information oracle", c8, None),
        (9, "convexity / concavity", c9, None),
        (10, "Monte Carlo variance", c10, Some(Duration::from_secs(300))),
        (11, "equal boxes split by population", c11, None),
    ];
    let mut unexpected = 0;
    let mut failed = 0;
    for (id, name, f, limit) in criteria {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(l) = limit {
            if took > l {
                o.pass = false;
                o.detail.push_str(&format!("; over the {}s limit", l.as_secs()));
            }
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = if !o.pass && KNOWN_RED.contains(&id) {
            " [known]"
        } else {
            ""
        };
        println!(
            "[{tag}] {id:>2} {name}: {} ({:.2}s){known}",
            o.detail,
            took.as_secs_f64()
        );
        if !o.pass {
            failed += 1;
            if !KNOWN_RED.contains(&id) {
                unexpected += 1;
            }
        }
    }
    println!("{} passed, {failed} failed ({unexpected} unexpected)", 11 - failed);
    if unexpected > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
