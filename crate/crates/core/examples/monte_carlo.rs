// Simulate the optimal design 200 times and compare the spread of the MLE with a(v*; p)/C.
//
//   cargo run --release --example monte_carlo [replications] [seed]

use survey_design::copt::{solve_c_optimal, SolverOptions};
use survey_design::model::{all_patterns, DiseaseModel, Parameter};
use survey_design::simulate::{mle, sample_outcomes, variance_check};

fn main() -> survey_design::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2021);

    let model = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
    let p = Parameter::new(vec![0.10, 0.30, 0.01])?;
    let design = solve_c_optimal(&p, &model, &all_patterns(3), 1e7, &SolverOptions::default())?.design;

    let one = sample_outcomes(&design, &p, &model, seed)?;
    for pc in &one.patterns {
        println!("{}  outcome counts {:?}", pc.pattern, pc.counts);
    }
    let fit = mle(&one, &model)?;
    println!(
        "one survey: p_hat = {:?} ({} iterations)",
        fit.p_hat.as_slice(),
        fit.iterations
    );

    let v = variance_check(&p, &model, &design, reps, seed)?;
    println!(
        "{reps} replications: empirical {:.4e}, predicted {:.4e}, ratio {:.3}",
        v.empirical_var, v.predicted_var, v.ratio
    );
    println!(
        "bias {:.2e} +- {:.2e}, Jarque-Bera p = {:.3}",
        v.bias, v.bias_se, v.normality_p
    );
    Ok(())
}
