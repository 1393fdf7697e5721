//! Empirical checks of the conditions under which steepest descent traces
//! the lower convex hull of achievable (consumed rate, distortion) pairs.
//!
//! The objective and the consumed rate are both sums over users, so the
//! joint achievable set is the Minkowski sum of the per-user sets, and its
//! lower hull is the Minkowski sum of the per-user lower hulls. Every
//! per-user state is still enumerated.

use serde::{Deserialize, Serialize};

use super::exhaustive::{for_each_state, search_cardinality};
use super::objective::{resolve, Direction};
use super::problem::{AllocationProblem, UserLevels};
use crate::error::{Error, Result};

/// The non-increasing lower hull of the distortion with one element fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullCurve {
    /// 1-based ladder index the element is fixed to.
    pub level: usize,
    /// `(consumed rate over all tiles, objective)` vertices, by rate.
    pub points: Vec<(f64, f64)>,
}

impl HullCurve {
    /// Hull value at consumed rate `b`; infinite below the first vertex.
    pub fn value(&self, b: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() || b < p[0].0 {
            return f64::INFINITY;
        }
        for w in p.windows(2) {
            if b <= w[1].0 {
                let t = (b - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        p[p.len() - 1].1
    }

    fn start(&self) -> f64 {
        self.points[0].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub direction: Direction,
    /// Number of structurally valid vectors covered.
    pub cardinality: f64,
    pub hulls: Vec<HullCurve>,
    /// Cross-over bandwidth between adjacent levels `u` and `u + 1`.
    pub crossovers: Vec<Option<f64>>,
    pub cross_over_holds: bool,
    pub ordering_holds: bool,
}

pub fn verify_descent_conditions(
    problem: &AllocationProblem,
    direction: Direction,
    budget: f64,
) -> Result<ConditionReport> {
    let cardinality = search_cardinality(problem);
    if cardinality > budget {
        return Err(Error::RefusedInstance {
            cardinality,
            limit: budget,
        });
    }
    let (target, mv) = resolve(problem, direction)?;
    let levels = problem.levels();
    let omega = problem.omega();
    let lo = problem.ladder().lowest();
    let points = |k: usize, keep: &dyn Fn(&UserLevels) -> bool| {
        let m = &problem.model[k];
        let mut pts = Vec::new();
        for_each_state(m, levels, |s| {
            if keep(s) {
                let b = m.visible_load(s, problem.ladder()) + m.invisible as f64 * lo;
                pts.push((b, m.cost(s, omega)));
            }
        });
        lower_hull(pts)
    };
    let others: Vec<Vec<(f64, f64)>> = (0..problem.model.len())
        .filter(|&k| k != target)
        .map(|k| points(k, &|_| true))
        .collect();
    let hulls: Vec<HullCurve> = (0..levels)
        .map(|u| {
            let fixed = move |s: &UserLevels| match mv {
                None => s.viewport == u,
                Some(j) => s.marginal[j] == u,
            };
            let mut parts = others.clone();
            parts.push(points(target, &fixed));
            HullCurve {
                level: u + 1,
                points: non_increasing(minkowski(&parts)),
            }
        })
        .collect();
    let (crossovers, cross_over_holds, ordering_holds) = analyze(&hulls);
    Ok(ConditionReport {
        direction,
        cardinality,
        hulls,
        crossovers,
        cross_over_holds,
        ordering_holds,
    })
}

/// Lower convex hull, left to right.
fn lower_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    let mut h: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h
}

/// Minkowski sum of lower hulls: the sum of the leftmost vertices followed
/// by every edge in slope order.
fn minkowski(parts: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut start = (0.0, 0.0);
    let mut edges = Vec::new();
    for h in parts {
        start.0 += h[0].0;
        start.1 += h[0].1;
        for w in h.windows(2) {
            edges.push((w[1].0 - w[0].0, w[1].1 - w[0].1));
        }
    }
    edges.sort_by(|a, b| (a.1 / a.0).total_cmp(&(b.1 / b.0)));
    let mut out = vec![start];
    let mut cur = start;
    for (db, dq) in edges {
        cur = (cur.0 + db, cur.1 + dq);
        out.push(cur);
    }
    out
}

/// Drops the rising tail: extra rate never has to be consumed.
fn non_increasing(h: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(h.len());
    for p in h {
        if out.last().is_some_and(|l| p.1 >= l.1) {
            break;
        }
        out.push(p);
    }
    out
}

/// Smallest rate at which `hi` is no worse than `lo`, if any.
fn crossover(lo: &HullCurve, hi: &HullCurve) -> Option<f64> {
    let from = hi.start();
    if from < lo.start() {
        return Some(from);
    }
    let mut xs: Vec<f64> = lo
        .points
        .iter()
        .chain(&hi.points)
        .map(|p| p.0)
        .filter(|&b| b >= from)
        .collect();
    xs.push(from);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let d = |b: f64| hi.value(b) - lo.value(b);
    let mut prev = (xs[0], d(xs[0]));
    if prev.1 <= 0.0 {
        return Some(prev.0);
    }
    for &b in &xs[1..] {
        let v = d(b);
        if v <= 0.0 {
            return Some(prev.0 + (b - prev.0) * prev.1 / (prev.1 - v));
        }
        prev = (b, v);
    }
    None
}

/// Whether `hi` stays strictly below `lo` beyond `b`.
fn stays_below(lo: &HullCurve, hi: &HullCurve, b: f64) -> bool {
    let xs = lo
        .points
        .iter()
        .chain(&hi.points)
        .map(|p| p.0)
        .filter(|&x| x > b);
    let far = lo
        .points
        .iter()
        .chain(&hi.points)
        .map(|p| p.0)
        .fold(b, f64::max)
        + 1.0;
    xs.chain([far]).all(|x| hi.value(x) < lo.value(x))
}

fn analyze(hulls: &[HullCurve]) -> (Vec<Option<f64>>, bool, bool) {
    let mut cross_over = true;
    for u in 0..hulls.len() {
        for v in u + 1..hulls.len() {
            match crossover(&hulls[u], &hulls[v]) {
                Some(b) if stays_below(&hulls[u], &hulls[v], b) => {}
                _ => cross_over = false,
            }
        }
    }
    let adjacent: Vec<Option<f64>> = hulls.windows(2).map(|w| crossover(&w[0], &w[1])).collect();
    let ordering = adjacent.iter().all(Option::is_some)
        && adjacent.windows(2).all(|w| w[0].unwrap() <= w[1].unwrap());
    (adjacent, cross_over, ordering)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::test_support::{small_problem, small_problem_with};
    use crate::geometry::Tile;
    use crate::ratedist::RateLadder;

    #[test]
    fn standard_ladder_instance_satisfies_both_conditions() {
        let p = small_problem_with(
            &[(2, 2), (1, 2)],
            1e6,
            &[1e6, 1e6],
            0.0,
            RateLadder::standard(),
        );
        for dir in [
            Direction::Viewport { user: 0 },
            Direction::Marginal {
                user: 1,
                tile: Tile::new(3, 1),
            },
        ] {
            let r = verify_descent_conditions(&p, dir, 1e7).unwrap();
            assert_eq!(r.hulls.len(), 6);
            assert!(r.cross_over_holds, "{dir:?}");
            assert!(r.ordering_holds, "{dir:?} {:?}", r.crossovers);
            // beyond the last cross-over the curves are strictly ordered
            let b = r.crossovers.iter().map(|c| c.unwrap()).fold(0.0, f64::max) + 1.0;
            for w in r.hulls.windows(2) {
                assert!(w[1].value(b) < w[0].value(b));
            }
        }
    }

    #[test]
    fn hull_is_below_every_state() {
        let p = small_problem(&[(1, 2)], 1e6, &[1e6], 1.0);
        let r = verify_descent_conditions(&p, Direction::Viewport { user: 0 }, 1e7).unwrap();
        let m = &p.model[0];
        let lo = p.ladder().lowest();
        for_each_state(m, p.levels(), |s| {
            let b = m.visible_load(s, p.ladder()) + m.invisible as f64 * lo;
            let q = m.cost(s, 1.0);
            assert!(r.hulls[s.viewport].value(b) <= q + 1e-15);
        });
    }

    #[test]
    fn single_level_is_trivial() {
        let h = HullCurve {
            level: 1,
            points: vec![(1.0, 2.0), (2.0, 1.0)],
        };
        let (c, a, b) = analyze(&[h]);
        assert!(c.is_empty() && a && b);
    }

    #[test]
    fn minkowski_matches_brute_force() {
        let a = lower_hull(vec![
            (0.0, 5.0),
            (1.0, 3.0),
            (2.0, 2.5),
            (3.0, 0.0),
            (1.5, 4.0),
        ]);
        let b = lower_hull(vec![(0.0, 2.0), (2.0, 1.0), (4.0, 0.5)]);
        let mut all = Vec::new();
        for p in &a {
            for q in &b {
                all.push((p.0 + q.0, p.1 + q.1));
            }
        }
        let sum = HullCurve {
            level: 1,
            points: minkowski(&[a, b]),
        };
        let brute = HullCurve {
            level: 1,
            points: lower_hull(all),
        };
        for i in 0..=70 {
            let x = i as f64 * 0.1;
            assert!((sum.value(x) - brute.value(x)).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn refuses_over_budget() {
        let p = small_problem(&[(1, 3), (1, 3)], 1e6, &[1e6, 1e6], 0.0);
        assert!(matches!(
            verify_descent_conditions(&p, Direction::Viewport { user: 0 }, 100.0),
            Err(Error::RefusedInstance { .. })
        ));
    }
}
