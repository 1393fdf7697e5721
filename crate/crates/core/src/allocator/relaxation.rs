//! Continuous relaxation of the allocation problem.
//!
//! Rates may take any value in `[R_1, R_L]`. Variables collapse to one
//! viewport rate `x` per user plus one rate `y_j` per marginal tile, with
//! `y_j <= x`. The margin term is evaluated at an epigraph variable
//! `t <= min_j y_j` through `h(t) = max_j c_j D_j(t)`, a convex upper bound on
//! the discrete term that agrees with it whenever the lowest-rate tile is
//! also the one with the largest weighted distortion.

use super::problem::{AllocationProblem, RateVector, TileTerm, UserLevels, UserModel};
use crate::error::{Error, Result};

/// Solution of the relaxed problem in collapsed form.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    /// Viewport rate per user, kbps.
    pub viewport: Vec<f64>,
    /// Marginal rates per user, row-major within each user.
    pub marginal: Vec<Vec<f64>>,
    pub objective: f64,
}

impl RelaxedSolution {
    /// Continuous rate of every tile, `[user][row-major tile]`; invisible
    /// tiles at the lowest rate.
    pub fn tile_rates(&self, problem: &AllocationProblem) -> Vec<Vec<f64>> {
        let grid = problem.grid();
        problem
            .model
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let mut out = vec![problem.ladder().lowest(); grid.len()];
                for t in &m.viewport {
                    out[grid.index_of(t.tile)] = self.viewport[k];
                }
                for (t, &y) in m.marginal.iter().zip(&self.marginal[k]) {
                    out[grid.index_of(t.tile)] = y;
                }
                out
            })
            .collect()
    }

    pub fn visible_load(&self, problem: &AllocationProblem, user: usize) -> f64 {
        problem.model[user].viewport.len() as f64 * self.viewport[user]
            + self.marginal[user].iter().sum::<f64>()
    }
}

/// Scaled continuous term `c * D(r)` of one tile.
#[derive(Debug, Clone, Copy)]
struct Term {
    c: f64,
    sigma: f64,
    r0: f64,
    d0: f64,
}

impl Term {
    fn of(t: &TileTerm, norm: f64) -> Self {
        Term {
            c: t.weight / norm,
            sigma: t.rd.sigma,
            r0: t.rd.r0,
            d0: t.rd.d0,
        }
    }

    fn value(&self, r: f64) -> f64 {
        self.c * (self.sigma / (r - self.r0) + self.d0)
    }

    fn slope(&self, r: f64) -> f64 {
        let g = r - self.r0;
        -self.c * self.sigma / (g * g)
    }

    /// Minimizer of `c D(r) + p r` without bounds.
    fn free_rate(&self, p: f64) -> f64 {
        if p <= 0.0 {
            f64::INFINITY
        } else {
            self.r0 + (self.c * self.sigma / p).sqrt()
        }
    }
}

struct UserRelax {
    vp: Vec<Term>,
    mg: Vec<Term>,
    lo: f64,
    hi: f64,
    omega: f64,
}

/// Optimal collapsed point of one user at a given rate price.
#[derive(Debug, Clone)]
struct UserPoint {
    x: f64,
    y: Vec<f64>,
}

const BISECTIONS: usize = 48;

impl UserRelax {
    fn new(m: &UserModel, problem: &AllocationProblem) -> Self {
        UserRelax {
            vp: m.viewport.iter().map(|t| Term::of(t, m.norm)).collect(),
            mg: m.marginal.iter().map(|t| Term::of(t, m.norm)).collect(),
            lo: problem.ladder().lowest(),
            hi: problem.ladder().rate(problem.levels() - 1),
            omega: problem.omega(),
        }
    }

    /// Right derivative of `h(t) = max_j c_j D_j(t)`.
    fn margin_slope(&self, t: f64) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for m in &self.mg {
            let v = m.value(t);
            let d = m.slope(t);
            if v > best.0 || (v == best.0 && d > best.1) {
                best = (v, d);
            }
        }
        best.1
    }

    fn margin_value(&self, t: f64) -> f64 {
        self.mg
            .iter()
            .map(|m| m.value(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn uses_epigraph(&self) -> bool {
        self.omega > 0.0 && !self.mg.is_empty()
    }

    /// Unconstrained best epigraph level on `[lo, hi]`. With the viewport
    /// at `x` the best level is this value capped at `x`, since the
    /// derivative below does not depend on `x`.
    fn free_floor(&self, p: f64, free: &[f64]) -> f64 {
        if !self.uses_epigraph() {
            return self.lo;
        }
        let deriv = |t: f64| {
            let mut g = self.omega * self.margin_slope(t);
            for (m, &f) in self.mg.iter().zip(free) {
                if f < t {
                    g += m.slope(t) + p;
                }
            }
            g
        };
        if deriv(self.hi) <= 0.0 {
            return self.hi;
        }
        if deriv(self.lo) >= 0.0 {
            return self.lo;
        }
        let (mut a, mut b) = (self.lo, self.hi);
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (a + b);
            if deriv(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    fn solve(&self, p: f64) -> UserPoint {
        let free: Vec<f64> = self.mg.iter().map(|m| m.free_rate(p)).collect();
        let t0 = self.free_floor(p, &free);
        let deriv = |x: f64| {
            let t = t0.min(x);
            let mut g: f64 = self.vp.iter().map(|v| v.slope(x) + p).sum();
            if t >= x {
                g += self.mg.iter().map(|m| m.slope(x) + p).sum::<f64>();
                if self.uses_epigraph() {
                    g += self.omega * self.margin_slope(x);
                }
            } else {
                for (m, &f) in self.mg.iter().zip(&free) {
                    if f >= x {
                        g += m.slope(x) + p;
                    }
                }
            }
            g
        };
        let x = if deriv(self.hi) <= 0.0 {
            self.hi
        } else if deriv(self.lo) >= 0.0 {
            self.lo
        } else {
            let (mut a, mut b) = (self.lo, self.hi);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (a + b);
                if deriv(mid) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        };
        let t = t0.min(x);
        let y = free.iter().map(|&f| f.clamp(t, x)).collect();
        UserPoint { x, y }
    }

    fn load(&self, pt: &UserPoint) -> f64 {
        self.vp.len() as f64 * pt.x + pt.y.iter().sum::<f64>()
    }

    fn min_load(&self) -> f64 {
        (self.vp.len() + self.mg.len()) as f64 * self.lo
    }

    fn cost(&self, x: f64, y: &[f64]) -> f64 {
        let mut q: f64 = self.vp.iter().map(|v| v.value(x)).sum();
        q += self.mg.iter().zip(y).map(|(m, &r)| m.value(r)).sum::<f64>();
        if self.uses_epigraph() {
            let t = y.iter().copied().fold(f64::INFINITY, f64::min);
            q += self.omega * self.margin_value(t);
        }
        q
    }

    /// Smallest price at which the user's load fits `cap`.
    fn capacity_price(&self, cap: f64) -> f64 {
        if self.load(&self.solve(0.0)) <= cap {
            return 0.0;
        }
        let mut hi = 1e-6;
        while self.load(&self.solve(hi)) > cap {
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.load(&self.solve(mid)) > cap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Objective of the relaxed problem at a collapsed point.
pub fn relaxed_objective(
    problem: &AllocationProblem,
    viewport: &[f64],
    marginal: &[Vec<f64>],
) -> f64 {
    problem
        .model
        .iter()
        .enumerate()
        .map(|(k, m)| UserRelax::new(m, problem).cost(viewport[k], &marginal[k]))
        .sum()
}

fn base_feasibility(problem: &AllocationProblem, users: &[UserRelax]) -> Result<()> {
    let mut total = 0.0;
    for (u, m) in users.iter().zip(&problem.model) {
        let min = u.min_load();
        if min > m.capacity {
            return Err(Error::InfeasibleProblem(format!(
                "a user needs {min} kbps at the lowest rate but has capacity {}",
                m.capacity
            )));
        }
        total += min;
    }
    if total > problem.server_capacity() {
        return Err(Error::InfeasibleProblem(format!(
            "lowest-rate load {total} kbps exceeds server capacity {}",
            problem.server_capacity()
        )));
    }
    Ok(())
}

/// Solves the relaxation exactly by pricing the capacity constraints.
///
/// Each user sees the rate price `max(mu, pi_k)`, where `pi_k` is the
/// smallest price that keeps that user within its own capacity and `mu` is
/// the server price. For a fixed price the user problem is convex in the
/// viewport rate and the epigraph level, and both are found by bisection on
/// monotone derivatives. Prices are bisected from the feasible side.
pub fn solve_relaxation(problem: &AllocationProblem) -> Result<RelaxedSolution> {
    let users: Vec<UserRelax> = problem
        .model
        .iter()
        .map(|m| UserRelax::new(m, problem))
        .collect();
    base_feasibility(problem, &users)?;
    let own: Vec<f64> = users
        .iter()
        .zip(&problem.model)
        .map(|(u, m)| u.capacity_price(m.capacity))
        .collect();
    let total_at = |mu: f64| -> f64 {
        users
            .iter()
            .zip(&own)
            .map(|(u, &pi)| u.load(&u.solve(mu.max(pi))))
            .sum()
    };
    let cs = problem.server_capacity();
    let mu = if total_at(0.0) <= cs {
        0.0
    } else {
        let mut hi = own.iter().copied().fold(1e-6, f64::max);
        while total_at(hi) > cs {
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if total_at(mid) > cs {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let points: Vec<UserPoint> = users
        .iter()
        .zip(&own)
        .map(|(u, &pi)| u.solve(mu.max(pi)))
        .collect();
    let viewport: Vec<f64> = points.iter().map(|p| p.x).collect();
    let marginal: Vec<Vec<f64>> = points.into_iter().map(|p| p.y).collect();
    let objective = relaxed_objective(problem, &viewport, &marginal);
    Ok(RelaxedSolution {
        viewport,
        marginal,
        objective,
    })
}

/// Reference solver: projected subgradient with diminishing normalized
/// steps. The projection onto the feasible set is computed by Dykstra's
/// alternating projections over the order-and-box set, the per-user
/// capacity half-spaces and the server half-space. Slow; used to check
/// [`solve_relaxation`].
pub fn solve_relaxation_projected(
    problem: &AllocationProblem,
    iterations: usize,
) -> Result<RelaxedSolution> {
    let users: Vec<UserRelax> = problem
        .model
        .iter()
        .map(|m| UserRelax::new(m, problem))
        .collect();
    base_feasibility(problem, &users)?;
    let lo = problem.ladder().lowest();
    let hi = problem.ladder().rate(problem.levels() - 1);
    let shape: Vec<usize> = users.iter().map(|u| u.mg.len()).collect();
    let caps: Vec<f64> = problem.model.iter().map(|m| m.capacity).collect();
    let weights: Vec<Vec<f64>> = users
        .iter()
        .map(|u| {
            std::iter::once(u.vp.len() as f64)
                .chain(std::iter::repeat_n(1.0, u.mg.len()))
                .collect()
        })
        .collect();
    let projector = Projector {
        lo,
        hi,
        weights,
        caps,
        server: problem.server_capacity(),
    };

    // start at the lowest rates, which is feasible
    let mut z: Vec<Vec<f64>> = shape.iter().map(|&n| vec![lo; n + 1]).collect();
    let cost = |z: &[Vec<f64>]| -> f64 {
        users
            .iter()
            .zip(z)
            .map(|(u, v)| u.cost(v[0], &v[1..]))
            .sum()
    };
    let mut best = (cost(&z), z.clone());
    let scale = hi - lo;
    for it in 0..iterations {
        let mut g: Vec<Vec<f64>> = Vec::with_capacity(z.len());
        let mut norm2 = 0.0;
        for (u, v) in users.iter().zip(&z) {
            let x = v[0];
            let y = &v[1..];
            let mut gu = vec![0.0; v.len()];
            gu[0] = u.vp.iter().map(|t| t.slope(x)).sum();
            for (j, m) in u.mg.iter().enumerate() {
                gu[j + 1] = m.slope(y[j]);
            }
            if u.uses_epigraph() {
                let (jmin, tmin) = y
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |acc, (j, &r)| if r < acc.1 { (j, r) } else { acc },
                    );
                gu[jmin + 1] += u.omega * u.margin_slope(tmin);
            }
            norm2 += gu.iter().map(|a| a * a).sum::<f64>();
            g.push(gu);
        }
        if norm2 == 0.0 {
            break;
        }
        let step = 0.5 * scale / ((it + 1) as f64).sqrt() / norm2.sqrt();
        for (v, gu) in z.iter_mut().zip(&g) {
            for (a, d) in v.iter_mut().zip(gu) {
                *a -= step * d;
            }
        }
        z = projector.project(&z);
        let c = cost(&z);
        if c < best.0 {
            best = (c, z.clone());
        }
    }
    let (_, z) = best;
    let viewport = z.iter().map(|v| v[0]).collect::<Vec<_>>();
    let marginal = z.iter().map(|v| v[1..].to_vec()).collect::<Vec<_>>();
    let objective = relaxed_objective(problem, &viewport, &marginal);
    Ok(RelaxedSolution {
        viewport,
        marginal,
        objective,
    })
}

struct Projector {
    lo: f64,
    hi: f64,
    weights: Vec<Vec<f64>>,
    caps: Vec<f64>,
    server: f64,
}

impl Projector {
    fn project(&self, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let zero = || -> Vec<Vec<f64>> { z.iter().map(|v| vec![0.0; v.len()]).collect() };
        let (mut p1, mut p2, mut p3) = (zero(), zero(), zero());
        let mut cur = z.to_vec();
        for _ in 0..200 {
            let prev = cur.clone();
            let a = add(&cur, &p1);
            let next = a.iter().map(|v| self.order_box(v)).collect::<Vec<_>>();
            p1 = sub(&a, &next);
            cur = next;

            let b = add(&cur, &p2);
            let next = b
                .iter()
                .zip(&self.weights)
                .zip(&self.caps)
                .map(|((v, w), &c)| halfspace(v, w, c))
                .collect::<Vec<_>>();
            p2 = sub(&b, &next);
            cur = next;

            let c = add(&cur, &p3);
            let next = self.server_halfspace(&c);
            p3 = sub(&c, &next);
            cur = next;

            let moved: f64 = cur
                .iter()
                .zip(&prev)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            if moved < 1e-10 {
                break;
            }
        }
        // tidy tiny residual violations so the iterate is strictly feasible
        cur = cur.iter().map(|v| self.order_box(v)).collect();
        cur = cur
            .iter()
            .zip(&self.weights)
            .zip(&self.caps)
            .map(|((v, w), &c)| shrink_to(v, w, c, self.lo))
            .collect();
        let total: f64 = cur.iter().zip(&self.weights).map(|(v, w)| dot(v, w)).sum();
        if total > self.server {
            let floor: f64 = self
                .weights
                .iter()
                .map(|w| w.iter().sum::<f64>() * self.lo)
                .sum();
            let f = (self.server - floor) / (total - floor);
            cur = cur
                .iter()
                .map(|v| v.iter().map(|a| self.lo + (a - self.lo) * f).collect())
                .collect();
        }
        cur
    }

    /// Projection onto `lo <= y_j <= x <= hi` for one user.
    fn order_box(&self, v: &[f64]) -> Vec<f64> {
        let a = v[0];
        let mut ys: Vec<f64> = v[1..].to_vec();
        ys.sort_by(|p, q| q.total_cmp(p));
        let mut sum = a;
        let mut x = a;
        for (m, &y) in ys.iter().enumerate() {
            if y > x {
                sum += y;
                x = sum / (m + 2) as f64;
            } else {
                break;
            }
        }
        let x = x.clamp(self.lo, self.hi);
        std::iter::once(x)
            .chain(v[1..].iter().map(|&y| y.min(x).clamp(self.lo, self.hi)))
            .collect()
    }

    fn server_halfspace(&self, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let total: f64 = z.iter().zip(&self.weights).map(|(v, w)| dot(v, w)).sum();
        if total <= self.server {
            return z.to_vec();
        }
        let wn: f64 = self.weights.iter().flatten().map(|w| w * w).sum();
        let f = (total - self.server) / wn;
        z.iter()
            .zip(&self.weights)
            .map(|(v, w)| v.iter().zip(w).map(|(a, b)| a - f * b).collect())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn halfspace(v: &[f64], w: &[f64], cap: f64) -> Vec<f64> {
    let excess = dot(v, w) - cap;
    if excess <= 0.0 {
        return v.to_vec();
    }
    let f = excess / dot(w, w);
    v.iter().zip(w).map(|(a, b)| a - f * b).collect()
}

/// Scales the part above `lo` so the weighted load fits `cap`.
fn shrink_to(v: &[f64], w: &[f64], cap: f64, lo: f64) -> Vec<f64> {
    let load = dot(v, w);
    if load <= cap {
        return v.to_vec();
    }
    let floor = w.iter().sum::<f64>() * lo;
    let f = (cap - floor) / (load - floor);
    v.iter().map(|a| lo + (a - lo) * f).collect()
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn sub(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

/// Rounds continuous tile rates down to the ladder.
///
/// The viewport group takes the floor of its lowest member and marginal
/// tiles are clamped to that level. Rates below the lowest rung are
/// rejected.
pub fn floor_to_ladder(problem: &AllocationProblem, tile_rates: &[Vec<f64>]) -> Result<RateVector> {
    let grid = problem.grid();
    if tile_rates.len() != problem.users().len() || tile_rates.iter().any(|u| u.len() != grid.len())
    {
        return Err(Error::invalid(
            "continuous rate vector shape does not match the problem",
        ));
    }
    let ladder = problem.ladder();
    // tolerate round-off just under a rung
    let floor = |r: f64| -> Result<usize> {
        ladder
            .floor_level(r + 1e-9 * r.abs().max(1.0))
            .ok_or_else(|| Error::invalid(format!("continuous rate {r} below the lowest rung")))
    };
    let mut state = Vec::with_capacity(tile_rates.len());
    for (m, rates) in problem.model.iter().zip(tile_rates) {
        let vmin = m
            .viewport
            .iter()
            .map(|t| rates[grid.index_of(t.tile)])
            .fold(f64::INFINITY, f64::min);
        let v = floor(vmin)?;
        let marginal = m
            .marginal
            .iter()
            .map(|t| floor(rates[grid.index_of(t.tile)]).map(|l| l.min(v)))
            .collect::<Result<Vec<_>>>()?;
        state.push(UserLevels {
            viewport: v,
            marginal,
        });
    }
    Ok(RateVector::expand(problem, &state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::feasibility::check_feasible;
    use crate::allocator::test_support::{small_problem, small_problem_with};
    use crate::ratedist::RateLadder;

    #[test]
    fn slack_capacity_goes_to_the_top() {
        for omega in [0.0, 1.0] {
            let p = small_problem(&[(2, 2), (1, 3)], 1e6, &[1e5, 1e5], omega);
            let s = solve_relaxation(&p).unwrap();
            for (k, x) in s.viewport.iter().enumerate() {
                assert_eq!(*x, 10.0);
                assert!(s.marginal[k].iter().all(|&y| y == 10.0));
            }
        }
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        use crate::geometry::{Tile, TileGrid, TileSet};
        let grid = TileGrid::new(4, 4).unwrap();
        let base = small_problem(&[(1, 1)], 1e6, &[13.0], 0.0);
        let mut users = base.users().to_vec();
        // two tiles of one row: equal areas, equal visibility
        let v2 = TileSet::from_tiles(grid, [Tile::new(2, 1)]).unwrap();
        let m2 = TileSet::from_tiles(grid, [Tile::new(2, 2)]).unwrap();
        let probs = grid
            .tiles()
            .map(|t| if t.row == 2 && t.col <= 2 { 0.5 } else { 0.0 })
            .collect();
        users[0].classification =
            crate::visibility::TileClassification::from_parts(grid, v2, m2, probs, 0.05).unwrap();
        let p = AllocationProblem::new(
            users,
            1e6,
            RateLadder::new(vec![2.0, 4.0, 10.0]).unwrap(),
            0.0,
        )
        .unwrap();
        let s = solve_relaxation(&p).unwrap();
        assert!((s.viewport[0] - 6.5).abs() < 1e-6, "{s:?}");
        assert!((s.marginal[0][0] - 6.5).abs() < 1e-6, "{s:?}");
    }

    #[test]
    fn respects_capacities() {
        for omega in [0.0, 0.5, 2.0] {
            let p = small_problem(&[(3, 4), (2, 2)], 40.0, &[30.0, 25.0], omega);
            let s = solve_relaxation(&p).unwrap();
            let total: f64 = (0..2).map(|k| s.visible_load(&p, k)).sum();
            assert!(total <= 40.0 + 1e-9);
            assert!(s.visible_load(&p, 0) <= 30.0 + 1e-9);
            assert!(s.visible_load(&p, 1) <= 25.0 + 1e-9);
            for (k, x) in s.viewport.iter().enumerate() {
                assert!(s.marginal[k].iter().all(|y| y <= x));
            }
        }
    }

    #[test]
    fn matches_projected_reference() {
        for (omega, server) in [(0.0, 40.0), (1.0, 40.0), (1.0, 200.0), (0.3, 32.0)] {
            let p = small_problem(&[(3, 4), (2, 2)], server, &[30.0, 25.0], omega);
            let exact = solve_relaxation(&p).unwrap();
            let reference = solve_relaxation_projected(&p, 20_000).unwrap();
            let rel = (reference.objective - exact.objective) / exact.objective;
            assert!(rel > -1e-6, "reference beat the exact solver: {rel}");
            assert!(rel < 1e-3, "omega {omega}: gap {rel}");
        }
    }

    #[test]
    fn matches_grid_search() {
        // 2 users, 1 viewport + 1 marginal tile each
        let p = small_problem_with(
            &[(1, 1), (1, 1)],
            30.0,
            &[18.0, 16.0],
            1.0,
            RateLadder::new(vec![2.0, 5.0, 20.0]).unwrap(),
        );
        let exact = solve_relaxation(&p).unwrap();
        let n = 60;
        let grid: Vec<f64> = (0..=n).map(|i| 2.0 + 18.0 * i as f64 / n as f64).collect();
        let mut best = f64::INFINITY;
        for &x0 in &grid {
            for &y0 in grid.iter().filter(|&&y| y <= x0) {
                if x0 + y0 > 18.0 {
                    continue;
                }
                for &x1 in &grid {
                    if x0 + y0 + x1 + 2.0 > 30.0 {
                        break;
                    }
                    for &y1 in grid.iter().filter(|&&y| y <= x1) {
                        if x1 + y1 > 16.0 || x0 + y0 + x1 + y1 > 30.0 {
                            continue;
                        }
                        best = best.min(relaxed_objective(&p, &[x0, x1], &[vec![y0], vec![y1]]));
                    }
                }
            }
        }
        assert!(exact.objective <= best + 1e-12);
        assert!((best - exact.objective) / exact.objective < 5e-3);
    }

    #[test]
    fn infeasible_base() {
        let p = small_problem(&[(3, 4)], 10.0, &[100.0], 0.0);
        assert!(matches!(
            solve_relaxation(&p),
            Err(Error::InfeasibleProblem(_))
        ));
        let p = small_problem(&[(3, 4)], 100.0, &[10.0], 0.0);
        assert!(matches!(
            solve_relaxation(&p),
            Err(Error::InfeasibleProblem(_))
        ));
    }

    #[test]
    fn floor_examples() {
        let p = small_problem_with(&[(1, 2)], 1e6, &[1e6], 0.0, RateLadder::standard());
        let g = p.grid();
        let vt = g.index_of(crate::geometry::Tile::new(2, 1));
        let m1 = g.index_of(crate::geometry::Tile::new(3, 1));
        let m2 = g.index_of(crate::geometry::Tile::new(3, 2));
        let mut r = vec![2.0; g.len()];
        r[vt] = 49.0;
        r[m1] = 48.9;
        r[m2] = 120.0;
        let f = floor_to_ladder(&p, &[r.clone()]).unwrap();
        assert_eq!(f.index(0, g.tile_at(vt)), 5);
        assert_eq!(f.index(0, g.tile_at(m1)), 4);
        // clamped to the viewport level
        assert_eq!(f.index(0, g.tile_at(m2)), 5);
        r[vt] = 1.0;
        assert!(floor_to_ladder(&p, &[r]).is_err());
    }

    #[test]
    fn floored_relaxation_is_feasible() {
        for omega in [0.0, 1.0] {
            let p = small_problem(&[(3, 4), (2, 2)], 40.0, &[30.0, 25.0], omega);
            let s = solve_relaxation(&p).unwrap();
            let r = floor_to_ladder(&p, &s.tile_rates(&p)).unwrap();
            assert!(check_feasible(&p, &r).is_feasible());
        }
    }
}
