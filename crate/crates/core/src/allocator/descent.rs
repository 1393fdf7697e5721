//! Coordinate-wise steepest descent over ladder steps.

use super::objective::{objective_of, slope_of, summarize, Move};
use super::problem::{Algorithm, AllocationProblem, AllocationResult, RateVector, UserLevels};
use super::relaxation::{floor_to_ladder, solve_relaxation};
use crate::error::{Error, Result};

/// Objective and visible load after each accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescentTrace {
    pub objective: Vec<f64>,
    pub consumed_visible: Vec<f64>,
}

/// Seeded by the floored relaxation optimum.
pub fn steepest_descent(problem: &AllocationProblem) -> Result<AllocationResult> {
    steepest_descent_traced(problem).map(|(r, _)| r)
}

pub fn steepest_descent_traced(
    problem: &AllocationProblem,
) -> Result<(AllocationResult, DescentTrace)> {
    let relaxed = solve_relaxation(problem)?;
    let start = floor_to_ladder(problem, &relaxed.tile_rates(problem))?;
    let state = start.collapse(problem)?;
    run(problem, state, Algorithm::Proposed)
}

/// Steepest descent from every tile at the lowest rate.
pub fn steepest_descent_from_bottom(problem: &AllocationProblem) -> Result<AllocationResult> {
    ensure_base_feasible(problem)?;
    let state = problem.model.iter().map(UserLevels::bottom).collect();
    run(problem, state, Algorithm::ProposedNoInit).map(|(r, _)| r)
}

/// Steepest descent from a caller-supplied feasible vector.
pub fn steepest_descent_from(
    problem: &AllocationProblem,
    start: &RateVector,
) -> Result<AllocationResult> {
    let report = super::feasibility::check_feasible(problem, start);
    if !report.is_feasible() {
        return Err(Error::invalid("starting vector is not feasible"));
    }
    run(problem, start.collapse(problem)?, Algorithm::Proposed).map(|(r, _)| r)
}

pub(crate) fn ensure_base_feasible(problem: &AllocationProblem) -> Result<()> {
    let lo = problem.ladder().lowest();
    let mut total = 0.0;
    for (u, m) in problem.users().iter().zip(&problem.model) {
        let need = (m.viewport.len() + m.marginal.len()) as f64 * lo;
        if need > u.capacity {
            return Err(Error::InfeasibleProblem(format!(
                "user {} needs {need} kbps at the lowest rate but has capacity {}",
                u.id, u.capacity
            )));
        }
        total += need;
    }
    if total > problem.server_capacity() {
        return Err(Error::InfeasibleProblem(format!(
            "lowest-rate load {total} kbps exceeds server capacity {}",
            problem.server_capacity()
        )));
    }
    Ok(())
}

struct Search<'a> {
    problem: &'a AllocationProblem,
    state: Vec<UserLevels>,
    loads: Vec<f64>,
    /// Per user: the candidate moves in tie-break order.
    moves: Vec<Vec<Move>>,
    active: Vec<Vec<bool>>,
    slopes: Vec<Vec<f64>>,
}

impl<'a> Search<'a> {
    fn new(problem: &'a AllocationProblem, state: Vec<UserLevels>) -> Self {
        let loads = problem
            .model
            .iter()
            .zip(&state)
            .map(|(m, s)| m.visible_load(s, problem.ladder()))
            .collect();
        // order moves by their first tile, row-major
        let moves: Vec<Vec<Move>> = problem
            .model
            .iter()
            .map(|m| {
                let mut keyed: Vec<(crate::geometry::Tile, Move)> =
                    std::iter::once((m.viewport[0].tile, None))
                        .chain(
                            m.marginal
                                .iter()
                                .enumerate()
                                .map(|(j, t)| (t.tile, Some(j))),
                        )
                        .collect();
                keyed.sort_by_key(|(t, _)| *t);
                keyed.into_iter().map(|(_, mv)| mv).collect()
            })
            .collect();
        let mut s = Search {
            problem,
            state,
            loads,
            active: moves.iter().map(|m| vec![false; m.len()]).collect(),
            slopes: moves
                .iter()
                .map(|m| vec![f64::NEG_INFINITY; m.len()])
                .collect(),
            moves,
        };
        for k in 0..s.moves.len() {
            for i in 0..s.moves[k].len() {
                s.active[k][i] = s.feasible(k, s.moves[k][i]).is_some();
            }
            s.refresh(k);
        }
        s
    }

    fn total_load(&self) -> f64 {
        self.loads.iter().sum()
    }

    /// A marginal tile already level with its viewport waits for the
    /// viewport group instead of leaving the active set.
    fn blocked(&self, k: usize, mv: Move) -> bool {
        let s = &self.state[k];
        mv.is_some_and(|j| s.marginal[j] >= s.viewport)
    }

    /// Load of user `k` after the move, if it stays on the ladder and within
    /// both capacities.
    fn feasible(&self, k: usize, mv: Move) -> Option<f64> {
        let p = self.problem;
        let top = p.levels() - 1;
        let s = &self.state[k];
        let m = &p.model[k];
        let next = match mv {
            None => {
                if s.viewport >= top {
                    return None;
                }
                self.loads[k]
                    + m.viewport.len() as f64 * (p.rate(s.viewport + 1) - p.rate(s.viewport))
            }
            Some(j) => {
                let l = s.marginal[j];
                if l >= top {
                    return None;
                }
                self.loads[k] + p.rate(l + 1) - p.rate(l)
            }
        };
        let server = self.total_load() - self.loads[k] + next;
        (next <= m.capacity && server <= p.server_capacity()).then_some(next)
    }

    fn refresh(&mut self, k: usize) {
        for i in 0..self.moves[k].len() {
            if !self.active[k][i] {
                continue;
            }
            match slope_of(self.problem, k, &self.state[k], self.moves[k][i]) {
                Some(s) => self.slopes[k][i] = s,
                // at the top rate: no further step exists
                None => self.active[k][i] = false,
            }
        }
    }

    fn best(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (k, row) in self.active.iter().enumerate() {
            for (i, &on) in row.iter().enumerate() {
                if on
                    && !self.blocked(k, self.moves[k][i])
                    && best.is_none_or(|(_, _, s)| self.slopes[k][i] > s)
                {
                    best = Some((k, i, self.slopes[k][i]));
                }
            }
        }
        best.map(|(k, i, _)| (k, i))
    }

    fn apply(&mut self, k: usize, mv: Move, load: f64) {
        match mv {
            None => self.state[k].viewport += 1,
            Some(j) => self.state[k].marginal[j] += 1,
        }
        self.loads[k] = load;
    }
}

fn run(
    problem: &AllocationProblem,
    state: Vec<UserLevels>,
    algorithm: Algorithm,
) -> Result<(AllocationResult, DescentTrace)> {
    let mut search = Search::new(problem, state);
    let mut trace = DescentTrace {
        objective: vec![objective_of(problem, &search.state)],
        consumed_visible: vec![search.total_load()],
    };
    let mut accepted = 0;
    while let Some((k, i)) = search.best() {
        let mv = search.moves[k][i];
        match search.feasible(k, mv) {
            Some(load) => {
                search.apply(k, mv, load);
                search.refresh(k);
                accepted += 1;
                trace.objective.push(objective_of(problem, &search.state));
                trace.consumed_visible.push(search.total_load());
            }
            None => search.active[k][i] = false,
        }
    }
    let rates = RateVector::expand(problem, &search.state);
    Ok((summarize(problem, algorithm, rates, accepted)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::feasibility::check_feasible;
    use crate::allocator::objective::{slope, Direction};
    use crate::allocator::test_support::small_problem;
    use crate::geometry::Tile;

    #[test]
    fn ample_capacity_saturates() {
        for omega in [0.0, 1.0] {
            let p = small_problem(&[(3, 4), (2, 2)], 1e6, &[1e5, 1e5], omega);
            for r in [
                steepest_descent(&p).unwrap(),
                steepest_descent_from_bottom(&p).unwrap(),
            ] {
                for (k, u) in p.users().iter().enumerate() {
                    let c = &u.classification;
                    let tiles = c.viewport_tiles.iter().chain(c.marginal_tiles.iter());
                    for t in tiles {
                        assert_eq!(r.rates.index(k, t), 3, "{:?}", r.algorithm);
                    }
                }
            }
        }
    }

    #[test]
    fn trace_is_monotone_and_result_feasible() {
        for omega in [0.0, 1.0] {
            let p = small_problem(&[(3, 4), (2, 3)], 45.0, &[30.0, 25.0], omega);
            let (r, trace) = steepest_descent_traced(&p).unwrap();
            assert!(check_feasible(&p, &r.rates).is_feasible());
            for w in trace.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
            for w in trace.consumed_visible.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert_eq!(trace.objective.len(), r.iterations + 1);
        }
    }

    #[test]
    fn infeasible_base_is_an_error() {
        let p = small_problem(&[(3, 4)], 10.0, &[100.0], 0.0);
        assert!(steepest_descent(&p).unwrap_err().is_infeasible());
        assert!(steepest_descent_from_bottom(&p)
            .unwrap_err()
            .is_infeasible());
    }

    #[test]
    fn slope_properties() {
        let p = small_problem(&[(2, 2)], 1e6, &[1e6], 0.0);
        let r = RateVector::bottom(p.grid(), 1);
        let vs = slope(&p, &r, Direction::Viewport { user: 0 }).unwrap();
        let ms = slope(
            &p,
            &r,
            Direction::Marginal {
                user: 0,
                tile: Tile::new(3, 1),
            },
        )
        .unwrap();
        assert!(vs > 0.0 && ms > 0.0);
        // viewport tiles are three times as likely to be seen
        assert!(vs > ms);
        assert!(slope(
            &p,
            &r,
            Direction::Marginal {
                user: 0,
                tile: Tile::new(1, 1)
            }
        )
        .is_err());

        let mut top = RateVector::bottom(p.grid(), 1);
        for t in p.users()[0].classification.viewport_tiles.iter() {
            top.set_level(0, t, 2);
        }
        assert!(matches!(
            slope(&p, &top, Direction::Viewport { user: 0 }),
            Err(Error::DirectionExhausted)
        ));
    }
}
