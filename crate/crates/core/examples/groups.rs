// Symptomatic (10%) and asymptomatic (90%) groups; the RAT is more sensitive on the
// symptomatic, 0.68 against 0.47.
//
//   cargo run --example groups

use survey_design::minimax::MinimaxOptions;
use survey_design::model::{all_patterns, DiseaseModel, Parameter, TestOverride};
use survey_design::strata::{allocate_groups, GroupSpec};

fn rat(sensitivity: f64) -> Vec<TestOverride> {
    vec![TestOverride {
        test: "RAT".into(),
        sensitivity: Some(sensitivity),
        specificity: None,
    }]
}

fn main() -> survey_design::Result<()> {
    let model = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let p = Parameter::new(vec![0.10, 0.30, 0.01])?;
    let groups = vec![
        GroupSpec {
            name: "symptomatic".into(),
            fraction: 0.1,
            parameter: p.clone(),
            overrides: rat(0.68),
        },
        GroupSpec {
            name: "asymptomatic".into(),
            fraction: 0.9,
            parameter: p,
            overrides: rat(0.47),
        },
    ];
    let r = allocate_groups(&groups, &model, &all_patterns(3), 1e7, &MinimaxOptions::default())?;
    for g in &r.strata {
        println!("{}: {:.2}% of the budget", g.name, 100.0 * g.share);
        for e in g.solve.design.support() {
            println!("    {}  {}", e.pattern, e.integer_count);
        }
    }
    Ok(())
}
