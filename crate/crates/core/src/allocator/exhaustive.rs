//! Exact optimum by enumeration of structurally valid vectors.

use super::descent::ensure_base_feasible;
use super::objective::summarize;
use super::problem::{
    Algorithm, AllocationProblem, AllocationResult, RateVector, UserLevels, UserModel,
};
use crate::error::{Error, Result};

/// Largest search space [`global_search`] accepts.
pub const SEARCH_LIMIT: f64 = 1e7;

/// Number of structurally valid collapsed states of one user.
pub(crate) fn user_cardinality(m: &UserModel, levels: usize) -> f64 {
    (1..=levels)
        .map(|v| (v as f64).powi(m.marginal.len() as i32))
        .sum()
}

/// Number of structurally valid rate vectors of the instance.
pub fn search_cardinality(problem: &AllocationProblem) -> f64 {
    problem
        .model
        .iter()
        .map(|m| user_cardinality(m, problem.levels()))
        .product()
}

/// Calls `f` on every structurally valid state of one user.
pub(crate) fn for_each_state(m: &UserModel, levels: usize, mut f: impl FnMut(&UserLevels)) {
    let n = m.marginal.len();
    for v in 0..levels {
        let mut s = UserLevels {
            viewport: v,
            marginal: vec![0; n],
        };
        loop {
            f(&s);
            // odometer over [0, v]^n
            let mut i = 0;
            while i < n && s.marginal[i] == v {
                s.marginal[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
            s.marginal[i] += 1;
        }
    }
}

struct Option_ {
    load: f64,
    cost: f64,
    state: UserLevels,
}

pub fn global_search(problem: &AllocationProblem) -> Result<AllocationResult> {
    let cardinality = search_cardinality(problem);
    if cardinality > SEARCH_LIMIT {
        return Err(Error::RefusedInstance {
            cardinality,
            limit: SEARCH_LIMIT,
        });
    }
    ensure_base_feasible(problem)?;
    let levels = problem.levels();
    let omega = problem.omega();
    // per user: options within the user's own capacity, reduced to the
    // load/cost Pareto front
    let mut fronts: Vec<Vec<Option_>> = Vec::with_capacity(problem.model.len());
    for m in &problem.model {
        let mut opts = Vec::new();
        for_each_state(m, levels, |s| {
            let load = m.visible_load(s, problem.ladder());
            if load <= m.capacity {
                opts.push(Option_ {
                    load,
                    cost: m.cost(s, omega),
                    state: s.clone(),
                });
            }
        });
        opts.sort_by(|a, b| a.load.total_cmp(&b.load).then(a.cost.total_cmp(&b.cost)));
        let mut front: Vec<Option_> = Vec::new();
        for o in opts {
            if front.last().is_none_or(|f| o.cost < f.cost) {
                front.push(o);
            }
        }
        fronts.push(front);
    }
    let k = fronts.len();
    let mut min_load_after = vec![0.0; k + 1];
    let mut min_cost_after = vec![0.0; k + 1];
    for i in (0..k).rev() {
        min_load_after[i] = min_load_after[i + 1] + fronts[i].first().map_or(0.0, |o| o.load);
        min_cost_after[i] = min_cost_after[i + 1] + fronts[i].last().map_or(0.0, |o| o.cost);
    }
    let mut best = (f64::INFINITY, vec![0usize; k]);
    let mut pick = vec![0usize; k];
    dfs(
        &fronts,
        0,
        0.0,
        0.0,
        problem.server_capacity(),
        &min_load_after,
        &min_cost_after,
        &mut pick,
        &mut best,
    );
    if !best.0.is_finite() {
        return Err(Error::InfeasibleProblem("no feasible rate vector".into()));
    }
    let state: Vec<UserLevels> = best
        .1
        .iter()
        .zip(&fronts)
        .map(|(&i, f)| f[i].state.clone())
        .collect();
    let rates = RateVector::expand(problem, &state);
    summarize(
        problem,
        Algorithm::GlobalSearch,
        rates,
        cardinality as usize,
    )
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    fronts: &[Vec<Option_>],
    i: usize,
    load: f64,
    cost: f64,
    server: f64,
    min_load_after: &[f64],
    min_cost_after: &[f64],
    pick: &mut Vec<usize>,
    best: &mut (f64, Vec<usize>),
) {
    if i == fronts.len() {
        if cost < best.0 {
            *best = (cost, pick.clone());
        }
        return;
    }
    for (j, o) in fronts[i].iter().enumerate() {
        if load + o.load + min_load_after[i + 1] > server {
            // fronts are sorted by load
            break;
        }
        if cost + o.cost + min_cost_after[i + 1] >= best.0 {
            continue;
        }
        pick[i] = j;
        dfs(
            fronts,
            i + 1,
            load + o.load,
            cost + o.cost,
            server,
            min_load_after,
            min_cost_after,
            pick,
            best,
        );
    }
}
