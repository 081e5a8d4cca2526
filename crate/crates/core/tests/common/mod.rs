//! Independent oracles shared by the integration tests. Nothing here calls into the
//! library's probability or information code.
#![allow(dead_code)]

use rand::Rng;

/// Sensitivity, specificity of RAT, RTPCR, antibody.
pub const RELIABILITY: [(f64, f64); 3] = [(0.5, 0.975), (0.95, 0.97), (0.921, 0.977)];
/// Nominal responses, rows = states (last is the reference state).
pub const NOMINAL: [[u8; 3]; 4] = [[1, 1, 0], [0, 0, 1], [1, 1, 1], [0, 0, 0]];

/// Outcomes of a pattern as (test, result) lists, every combination.
pub fn outcomes(bits: &[u8; 3]) -> Vec<Vec<(usize, u8)>> {
    let inc: Vec<usize> = (0..3).filter(|&j| bits[j] == 1).collect();
    (0..1u32 << inc.len())
        .map(|code| {
            inc.iter()
                .enumerate()
                .map(|(pos, &j)| (j, ((code >> (inc.len() - 1 - pos)) & 1) as u8))
                .collect()
        })
        .collect()
}

/// P(y | state s), product over conducted tests.
pub fn q(y: &[(usize, u8)], s: usize) -> f64 {
    y.iter()
        .map(|&(j, yj)| {
            let m = NOMINAL[s][j];
            let (sens, spec) = RELIABILITY[j];
            let correct = if m == 1 { sens } else { spec };
            if yj == m {
                correct
            } else {
                1.0 - correct
            }
        })
        .product()
}

/// P(y; p) with the reference state carrying 1 - sum p.
pub fn prob(y: &[(usize, u8)], p: &[f64]) -> f64 {
    let rest = 1.0 - p.iter().sum::<f64>();
    (0..3).map(|s| p[s] * q(y, s)).sum::<f64>() + rest * q(y, 3)
}

/// Expected negative Hessian of log P(y; p), by central second differences (step 1e-4).
pub fn fisher_fd(bits: &[u8; 3], p: &[f64]) -> [[f64; 3]; 3] {
    let h = 1e-4;
    let mut out = [[0.0; 3]; 3];
    for y in outcomes(bits) {
        let py = prob(&y, p);
        let lp = |d: &[f64; 3]| -> f64 {
            let x: Vec<f64> = (0..3).map(|i| p[i] + d[i]).collect();
            prob(&y, &x).ln()
        };
        for i in 0..3 {
            for j in 0..3 {
                let e = |a: f64, b: f64| {
                    let mut d = [0.0; 3];
                    d[i] += a * h;
                    d[j] += b * h;
                    lp(&d)
                };
                let second = if i == j {
                    (e(1.0, 0.0) - 2.0 * lp(&[0.0; 3]) + e(-1.0, 0.0)) / (h * h)
                } else {
                    (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h)
                };
                out[i][j] -= py * second;
            }
        }
    }
    out
}

/// Uniform point of the k-simplex {x >= 0, sum x = 1}.
pub fn simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Parameter strictly inside the feasible region: every p_i and 1 - sum p at least `margin`.
pub fn interior<R: Rng>(rng: &mut R, margin: f64) -> Vec<f64> {
    let x = simplex(rng, 4);
    x[..3].iter().map(|xi| margin + (1.0 - 4.0 * margin) * xi).collect()
}

pub fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}
