//! Convex subproblems solved by a log-barrier interior-point method.

pub mod barrier;
pub mod hermitian;
pub mod subproblem;

pub use barrier::{BarrierSettings, SolveStatus};
pub use subproblem::{
    feasible_init, solve_pk, solve_qk, FixedSplit, InitialPoint, Start, SubproblemPk, SubproblemQk,
    SubproblemSolution, LAMBDA_FLOOR,
};
