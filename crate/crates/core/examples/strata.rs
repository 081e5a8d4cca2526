// Budget split across three districts, one of them planned for its worst case.
//
//   cargo run --release --example strata

use survey_design::minimax::MinimaxOptions;
use survey_design::model::{all_patterns, DiseaseModel, Parameter, ParameterBox};
use survey_design::strata::{allocate_districts, StratumSpec};

fn main() -> survey_design::Result<()> {
    let model = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let strata = vec![
        StratumSpec::point("urban", 0.35, Parameter::new(vec![0.15, 0.35, 0.02])?),
        StratumSpec::point("peri-urban", 0.25, Parameter::new(vec![0.10, 0.30, 0.01])?),
        StratumSpec::boxed(
            "rural",
            0.40,
            ParameterBox::new(vec![0.01, 0.10, 0.0], vec![0.10, 0.30, 0.02])?,
        ),
    ];
    let r = allocate_districts(&strata, &model, &all_patterns(3), 1e7, &MinimaxOptions::default())?;
    for s in &r.strata {
        println!(
            "{:<11} n = {:.2}  a = {:8.3}  C_d = {:>10.0} ({:.2}%)",
            s.name,
            s.weight,
            s.objective,
            s.budget,
            100.0 * s.share
        );
        for e in s.solve.design.support() {
            println!("    {}  {}", e.pattern, e.integer_count);
        }
    }
    println!("variance of the weighted estimate: {:.4e}", r.total_variance);
    Ok(())
}
