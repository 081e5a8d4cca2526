// How much must be spent for a +-1 point margin on total prevalence at 95% confidence?
//
//   cargo run --example budget_for_margin

use survey_design::copt::{budget_for_margin, margin_of_error, solve_c_optimal, SolverOptions};
use survey_design::model::{all_patterns, DiseaseModel, Parameter};

fn main() -> survey_design::Result<()> {
    let model = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let p = Parameter::new(vec![0.10, 0.30, 0.01])?;
    let patterns = all_patterns(3);
    let opts = SolverOptions::default();
    for moe in [0.02, 0.01, 0.005] {
        let b = budget_for_margin(&p, &model, &patterns, moe, 0.05, &opts)?;
        let r = solve_c_optimal(&p, &model, &patterns, b.budget, &opts)?;
        println!(
            "moe {moe}: budget {:.0} (z = {:.6}), check {:.6}",
            b.budget,
            b.z,
            margin_of_error(r.min_variance, 0.05)
        );
    }
    Ok(())
}
