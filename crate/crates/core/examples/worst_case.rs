// Minimax design over p1 in [0.01, 0.15], p2 in [0.10, 0.50], p3 in [0, 0.02] with a cheap
// RTPCR, on a 0.01 grid.
//
//   cargo run --release --example worst_case

use survey_design::minimax::{saddle_check, worst_case_design, worst_case_value, MinimaxOptions};
use survey_design::model::{all_patterns, DiseaseModel, ParameterBox};

fn main() -> survey_design::Result<()> {
    let model = DiseaseModel::serosurvey([450.0, 100.0, 300.0]);
    let patterns = all_patterns(3);
    let region = ParameterBox::new(vec![0.01, 0.10, 0.0], vec![0.15, 0.50, 0.02])?;
    let opts = MinimaxOptions::default();
    let r = worst_case_design(&region, &model, &patterns, 1e7, &opts)?;

    let s = &r.saddle;
    println!(
        "p* = {:?}, value {:.5} over {} grid points",
        s.p_star.as_slice(),
        s.game_value,
        s.grid_points
    );
    for e in r.design.support() {
        println!(
            "  {}  {:.2}% of budget, {} participants",
            e.pattern,
            100.0 * e.fraction,
            e.integer_count
        );
    }
    println!(
        "certificate: gap {:.4} (relative {:.1e}), certified {}",
        s.saddle_gap,
        s.saddle_gap / s.game_value,
        s.certified
    );

    if let (Some(refined), Some(design)) = (&r.refinement, &r.refined_design) {
        println!(
            "refined after {} rounds, worst case {:.5}",
            refined.rounds, refined.worst_case_value
        );
        for e in design.support() {
            println!(
                "  {}  {:.2}% of budget, {} participants",
                e.pattern,
                100.0 * e.fraction,
                e.integer_count
            );
        }
        let (g1, g2) = saddle_check(
            &refined.fractions,
            &s.p_star,
            &region,
            &model,
            &patterns,
            opts.grid_step,
            &opts.solver,
        )?;
        println!("equilibrium gaps of the refined strategy: {g1:.2e}, {g2:.2e}");
    }

    // everything on (0,1,1)
    let mut only = vec![0.0; patterns.len()];
    only[2] = 1.0;
    let (worst, at) = worst_case_value(&only, &region, &model, &patterns, opts.grid_step)?;
    let best = r.refinement.as_ref().map_or(s.game_value, |x| x.worst_case_value);
    println!(
        "(0,1,1) only: worst case {worst:.4} at {:?}, ratio {:.4}",
        at.as_slice(),
        worst / best
    );
    Ok(())
}
