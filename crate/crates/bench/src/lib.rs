//! Fixtures shared by the benchmarks.

use upen::penalties::DEFAULT_EPS_PSI;
use upen::testproblems::{make_nmr2d, make_t1, make_t2, make_t3, Nmr2dShape};
use upen::{Constraint, GridShape, InverseProblem, PenaltyModel};

pub const SEED: u64 = 1;

/// Named desk-scale problem with its penalty model.
pub fn fixture(name: &str, delta: f64, constraint: Constraint) -> (InverseProblem, PenaltyModel) {
    let problem = match name {
        "t1" => make_t1(delta, SEED),
        "t2" => make_t2(delta, SEED),
        "t3" => make_t3(delta, SEED),
        "nmr2d" => make_nmr2d(Nmr2dShape::DESK, delta, SEED),
        other => panic!("unknown fixture {other}"),
    }
    .expect("fixture generation")
    .with_constraint(constraint);
    let l1 = matches!(problem.grid, GridShape::Grid { .. });
    let penalty = PenaltyModel::new(problem.grid, DEFAULT_EPS_PSI, l1).expect("penalty model");
    (problem, penalty)
}
