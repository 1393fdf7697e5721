use serde::{Deserialize, Serialize};

use super::problem::{AllocationProblem, RateVector};

/// A capacity constraint evaluated at a point. Slack is capacity minus load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityCheck {
    pub load: f64,
    pub capacity: f64,
    pub slack: f64,
    pub ok: bool,
}

impl CapacityCheck {
    fn new(load: f64, capacity: f64) -> Self {
        CapacityCheck {
            load,
            capacity,
            slack: capacity - load,
            ok: load <= capacity,
        }
    }
}

/// Constraint-by-constraint verdict for a rate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Server capacity over visible tiles.
    pub server: CapacityCheck,
    /// Per-user capacity over visible tiles.
    pub users: Vec<CapacityCheck>,
    /// Every index names a ladder rung.
    pub ladder_membership: bool,
    /// Invisible tiles sit at the lowest rung.
    pub invisible_pinned: bool,
    /// Each user's viewport tiles share one rung.
    pub viewport_equal: bool,
    /// No marginal tile above its user's viewport rung.
    pub margin_below_viewport: bool,
    /// Vector shape matches the problem.
    pub shape_ok: bool,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.shape_ok
            && self.server.ok
            && self.users.iter().all(|u| u.ok)
            && self.ladder_membership
            && self.invisible_pinned
            && self.viewport_equal
            && self.margin_below_viewport
    }
}

pub fn check_feasible(problem: &AllocationProblem, rates: &RateVector) -> FeasibilityReport {
    let grid = problem.grid();
    let levels = problem.levels();
    let shape_ok = rates.grid() == grid && rates.users() == problem.users().len();
    let mut report = FeasibilityReport {
        server: CapacityCheck::new(f64::INFINITY, problem.server_capacity()),
        users: Vec::new(),
        ladder_membership: true,
        invisible_pinned: true,
        viewport_equal: true,
        margin_below_viewport: true,
        shape_ok,
    };
    if !shape_ok {
        report.ladder_membership = false;
        return report;
    }
    let rate = |l: usize| {
        if l < levels {
            problem.rate(l)
        } else {
            f64::INFINITY
        }
    };
    let mut server_load = 0.0;
    for (k, u) in problem.users().iter().enumerate() {
        let c = &u.classification;
        let raw = rates.raw(k);
        if raw.iter().any(|&l| l >= levels) {
            report.ladder_membership = false;
        }
        if c.invisible_tiles.iter().any(|t| rates.level(k, t) != 0) {
            report.invisible_pinned = false;
        }
        let vp: Vec<usize> = c.viewport_tiles.iter().map(|t| rates.level(k, t)).collect();
        if vp.windows(2).any(|w| w[0] != w[1]) {
            report.viewport_equal = false;
        }
        let vp_min = vp.iter().copied().min().unwrap_or(0);
        if c.marginal_tiles.iter().any(|t| rates.level(k, t) > vp_min) {
            report.margin_below_viewport = false;
        }
        let load: f64 = c
            .viewport_tiles
            .iter()
            .chain(c.marginal_tiles.iter())
            .map(|t| rate(rates.level(k, t)))
            .sum();
        server_load += load;
        report.users.push(CapacityCheck::new(load, u.capacity));
    }
    report.server = CapacityCheck::new(server_load, problem.server_capacity());
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::test_support::small_problem;
    use crate::geometry::Tile;

    #[test]
    fn bottom_is_feasible_with_room() {
        let p = small_problem(&[(2, 2), (1, 3)], 1000.0, &[500.0, 500.0], 0.0);
        let r = RateVector::bottom(p.grid(), 2);
        let v = check_feasible(&p, &r);
        assert!(v.is_feasible(), "{v:?}");
        assert_eq!(v.users[0].load, 4.0 * p.ladder().lowest());
    }

    #[test]
    fn margin_above_viewport_is_reported() {
        let p = small_problem(&[(2, 2)], 1000.0, &[500.0], 0.0);
        let mut r = RateVector::bottom(p.grid(), 1);
        let m = p.users()[0]
            .classification
            .marginal_tiles
            .iter()
            .next()
            .unwrap();
        r.set_level(0, m, 1);
        let v = check_feasible(&p, &r);
        assert!(!v.margin_below_viewport);
        assert!(v.viewport_equal && v.invisible_pinned && v.ladder_membership);
        assert!(!v.is_feasible());
    }

    #[test]
    fn other_violations() {
        let p = small_problem(&[(2, 2)], 1000.0, &[500.0], 0.0);
        let mut r = RateVector::bottom(p.grid(), 1);
        let inv = p.users()[0]
            .classification
            .invisible_tiles
            .iter()
            .next()
            .unwrap();
        r.set_level(0, inv, 1);
        assert!(!check_feasible(&p, &r).invisible_pinned);

        let mut r = RateVector::bottom(p.grid(), 1);
        let vp: Vec<Tile> = p.users()[0].classification.viewport_tiles.iter().collect();
        r.set_level(0, vp[0], 2);
        assert!(!check_feasible(&p, &r).viewport_equal);

        let mut r = RateVector::bottom(p.grid(), 1);
        r.set_level(0, vp[0], 7);
        assert!(!check_feasible(&p, &r).ladder_membership);

        let tight = small_problem(&[(2, 2)], 7.0, &[500.0], 0.0);
        let v = check_feasible(&tight, &RateVector::bottom(tight.grid(), 1));
        assert!(!v.server.ok);
        assert!(v.server.slack < 0.0);
    }
}
