//! Multi-user discrete tile rate allocation.

pub mod baselines;
pub mod conditions;
pub mod descent;
pub mod exhaustive;
pub mod feasibility;
pub mod instances;
pub mod objective;
pub mod problem;
pub mod relaxation;
#[cfg(test)]
mod test_support;

pub use baselines::{baseline_alloc, greedy_alloc};
pub use conditions::{verify_descent_conditions, ConditionReport, HullCurve};
pub use descent::{
    steepest_descent, steepest_descent_from, steepest_descent_from_bottom, steepest_descent_traced,
    DescentTrace,
};
pub use exhaustive::{global_search, search_cardinality, SEARCH_LIMIT};
pub use feasibility::{check_feasible, CapacityCheck, FeasibilityReport};
pub use instances::random_small_instance;
pub use objective::{instability_index, objective, slope, Direction};
pub use problem::{
    Algorithm, AllocationProblem, AllocationResult, RateVector, UserOutcome, UserSession,
};
pub use relaxation::{
    floor_to_ladder, relaxed_objective, solve_relaxation, solve_relaxation_projected,
    RelaxedSolution,
};

/// Runs the named allocator.
pub fn allocate(
    problem: &AllocationProblem,
    algorithm: Algorithm,
) -> crate::Result<AllocationResult> {
    match algorithm {
        Algorithm::Proposed => steepest_descent(problem),
        Algorithm::ProposedNoInit => steepest_descent_from_bottom(problem),
        Algorithm::Baseline => baseline_alloc(problem),
        Algorithm::Greedy => greedy_alloc(problem),
        Algorithm::GlobalSearch => global_search(problem),
    }
}
