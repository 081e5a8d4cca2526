//! Budget-constrained designs for prevalence surveys that combine several imperfect tests.
//!
//! Each participant receives a subset (pattern) of the available tests. Given test costs,
//! sensitivities and specificities, the crate chooses how to split a budget across patterns
//! so that the variance of an estimated linear combination of state prevalences is minimal:
//!
//! * [`copt`]: the locally optimal design at a known parameter;
//! * [`minimax`]: the design that is best in the worst case over a parameter box;
//! * [`strata`]: budget allocation across districts or observable groups;
//! * [`simulate`]: synthetic surveys and maximum-likelihood fits to check predicted variances;
//! * [`config`] and [`cli`]: the JSON run configuration and the `survey-design` binary.
//!
//! ```
//! use survey_design::copt::{solve_c_optimal, SolverOptions};
//! use survey_design::model::{all_patterns, DiseaseModel, Parameter};
//!
//! let model = DiseaseModel::serosurvey([450.0, 1600.0, 300.0]);
//! let p = Parameter::new(vec![0.10, 0.30, 0.01]).unwrap();
//! let r = solve_c_optimal(&p, &model, &all_patterns(3), 1e7, &SolverOptions::default()).unwrap();
//! assert_eq!(r.design.integer_count_of(&[1, 0, 1]), 13125);
//! ```

// index loops mirror the matrix formulas; negated comparisons reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod copt;
pub mod error;
pub mod linalg;
pub mod minimax;
pub mod model;
pub mod normal;
pub mod simulate;
pub mod strata;

pub use error::{Error, Result};
