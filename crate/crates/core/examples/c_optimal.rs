// Locally optimal design at p = (0.10, 0.30, 0.01) for three RTPCR prices.
//
//   cargo run --example c_optimal

use survey_design::copt::{solve_c_optimal, SolverOptions};
use survey_design::model::{all_patterns, DiseaseModel, Parameter};

fn main() -> survey_design::Result<()> {
    let p = Parameter::new(vec![0.10, 0.30, 0.01])?;
    let patterns = all_patterns(3);
    for rtpcr in [1600.0, 1000.0, 100.0] {
        let model = DiseaseModel::serosurvey([450.0, rtpcr, 300.0]);
        let r = solve_c_optimal(&p, &model, &patterns, 1e7, &SolverOptions::default())?;
        println!(
            "RTPCR at {rtpcr}: a(v*; p) = {:.4}, variance {:.3e}",
            r.objective, r.min_variance
        );
        for e in r.design.support() {
            println!(
                "  {}  v = {:.4}  w = {:.1} -> {}",
                e.pattern, e.fraction, e.count, e.integer_count
            );
        }
    }
    Ok(())
}
