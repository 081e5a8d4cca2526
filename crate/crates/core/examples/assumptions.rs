// Identifiability checks: pointwise, uniform over a box, and a pattern set that fails.
//
//   cargo run --example assumptions

use survey_design::model::{all_patterns, check_a1, check_a2, DiseaseModel, Parameter, ParameterBox, TestPattern};

fn main() -> survey_design::Result<()> {
    let model = DiseaseModel::serosurvey([450.0, 100.0, 300.0]);
    let patterns = all_patterns(3);
    let p = Parameter::new(vec![0.10, 0.30, 0.01])?;
    let a1 = check_a1(&p, &patterns, &model)?;
    println!(
        "pointwise: holds {}, witness {:?}, lambda_min {:.4}",
        a1.holds,
        a1.witness.map(|t| t.to_string()),
        a1.lambda_min
    );

    let region = ParameterBox::new(vec![0.01, 0.10, 0.0], vec![0.15, 0.50, 0.02])?;
    let a2 = check_a2(&region, &patterns, &model, 0.01)?;
    println!(
        "uniform over {} grid points: holds {}, worst lambda_min {:.4} at {:?}",
        a2.grid_points,
        a2.holds,
        a2.worst_lambda_min,
        a2.argmin.as_slice()
    );

    // two single tests cannot separate three prevalences
    let thin = vec![TestPattern::from_bits(&[1, 0, 0])?, TestPattern::from_bits(&[0, 0, 1])?];
    let bad = check_a1(&p, &thin, &model)?;
    println!(
        "RAT or antibody alone: holds {}, best lambda_min {:.2e}",
        bad.holds, bad.lambda_min
    );
    Ok(())
}
