//! Euclidean projection of a per-PEV target onto its feasible set, the box
//! `0 <= p(t) <= cap(t)` intersected with the energy hyperplane
//! `sum_t p(t) = U`.
//!
//! The minimizer of `sum_t (p(t) + b(t))^2` over that set is a clamped fill
//! `p(t) = clamp(level - b(t), 0, cap(t))` at a unique water level inside
//! `[min b, max (b + cap)]`. Two solvers find the level: a bisection with an
//! explicit step budget and an exact valley fill over slots sorted by `b`.
//!
//! Slots with a zero cap (including every slot outside the charging window)
//! take no part in the fill and always come back as zero.

use std::cell::RefCell;

use crate::error::{Error, Result};

/// Demand may exceed the total cap by this much (kWh) before the problem is
/// declared infeasible; the excess is clipped.
pub const DEMAND_TOLERANCE: f64 = 1e-9;

/// Offsets closer than this are filled as one group.
pub const TIE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_BISECTION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ProjectionMethod {
    #[default]
    Exact,
    BinarySearch { tolerance: f64 },
}


#[derive(Debug, Clone, Copy)]
pub struct ProjectionProblem<'a> {
    /// b(t) = alpha * q(t) - p_prev(t)
    pub offsets: &'a [f64],
    pub caps: &'a [f64],
    pub demand: f64,
}

impl<'a> ProjectionProblem<'a> {
    pub fn new(offsets: &'a [f64], caps: &'a [f64], demand: f64) -> Self {
        assert_eq!(offsets.len(), caps.len(), "offsets and caps differ in length");
        Self {
            offsets,
            caps,
            demand,
        }
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.caps.len()).filter(|&t| self.caps[t] > 0.0)
    }

    /// `[min b, max (b + cap)]` over slots with a positive cap.
    pub fn bracket(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in self.active() {
            lo = lo.min(self.offsets[t]);
            hi = hi.max(self.offsets[t] + self.caps[t]);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Checks the demand against the box and returns it clipped into range.
    fn checked_demand(&self) -> Result<f64> {
        let capacity: f64 = self.caps.iter().filter(|c| **c > 0.0).sum();
        let u = self.demand;
        if !u.is_finite() || u < -DEMAND_TOLERANCE || u > capacity + DEMAND_TOLERANCE {
            return Err(Error::NoSolution {
                demand: u,
                capacity,
            });
        }
        if self.offsets.iter().any(|b| !b.is_finite()) {
            return Err(Error::Internal("non-finite projection offset".into()));
        }
        Ok(u.clamp(0.0, capacity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterLevel {
    pub level: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOutcome {
    pub level: f64,
    pub bracket: (f64, f64),
    /// Bisection steps taken.
    pub steps: usize,
    /// ceil(log2(|bracket| / tolerance))
    pub step_budget: usize,
    /// The budget ran out before |y| dropped below the tolerance and the level
    /// was finished by solving the linear piece of y inside the last bracket.
    pub finished_exactly: bool,
}

/// `clamp(level - b(t), 0, cap(t))`, zero where the cap is zero.
pub fn fill_at_level(level: f64, offsets: &[f64], caps: &[f64], out: &mut [f64]) {
    for ((o, b), c) in out.iter_mut().zip(offsets).zip(caps) {
        *o = if *c > 0.0 { (level - b).max(0.0).min(*c) } else { 0.0 };
    }
}

fn fill_sum(level: f64, offsets: &[f64], caps: &[f64]) -> f64 {
    offsets
        .iter()
        .zip(caps)
        .filter(|(_, c)| **c > 0.0)
        .map(|(b, c)| (level - b).max(0.0).min(*c))
        .sum()
}

/// ceil(log2(width / tolerance)), zero when the bracket is already narrow.
pub fn bisection_step_budget(width: f64, tolerance: f64) -> usize {
    if width <= tolerance {
        0
    } else {
        (width / tolerance).log2().ceil() as usize
    }
}

thread_local! {
    static SCRATCH: RefCell<(Vec<usize>, Vec<usize>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Exact valley fill. Slots are visited in increasing order of `b`; the level
/// rises until it meets either the next offset or the lowest cap top in the
/// filling group, whichever comes first.
pub fn project_exact(problem: &ProjectionProblem<'_>, out: &mut [f64]) -> Result<WaterLevel> {
    let demand = problem.checked_demand()?;
    let Some(bracket) = problem.bracket() else {
        out.fill(0.0);
        return Ok(WaterLevel {
            level: 0.0,
            bracket: (0.0, 0.0),
        });
    };
    let b = problem.offsets;
    let cap = problem.caps;
    let level = SCRATCH.with(|s| {
        let (order, group) = &mut *s.borrow_mut();
        order.clear();
        order.extend(problem.active());
        order.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(i.cmp(&j)));
        group.clear();

        let mut remaining = demand;
        let mut level = b[order[0]];
        let mut next = 0;
        loop {
            while next < order.len() && b[order[next]] <= level + TIE_TOLERANCE {
                let t = order[next];
                if b[t] + cap[t] > level + TIE_TOLERANCE {
                    group.push(t);
                }
                next += 1;
            }
            let a_next = order.get(next).map_or(f64::INFINITY, |&t| b[t]);
            if group.is_empty() {
                if next == order.len() {
                    break level;
                }
                level = a_next;
                continue;
            }
            let top = group.iter().map(|&t| b[t] + cap[t]).fold(f64::INFINITY, f64::min);
            let target = top.min(a_next);
            let gamma = (target - level) * group.len() as f64;
            if remaining <= gamma {
                break level + remaining / group.len() as f64;
            }
            remaining -= gamma;
            level = target;
            group.retain(|&t| b[t] + cap[t] > level + TIE_TOLERANCE);
        }
    });
    let level = polish_level(level, demand, b, cap);
    fill_at_level(level, b, cap, out);
    Ok(WaterLevel { level, bracket })
}

/// One Newton correction on y(level) using the unsaturated slots. Removes the
/// rounding picked up while walking the breakpoints.
fn polish_level(level: f64, demand: f64, b: &[f64], cap: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut slope = 0usize;
    for (bt, ct) in b.iter().zip(cap) {
        if *ct > 0.0 {
            let x = level - bt;
            if x > 0.0 && x < *ct {
                slope += 1;
            }
            sum += x.max(0.0).min(*ct);
        }
    }
    if slope == 0 {
        return level;
    }
    let corrected = level + (demand - sum) / slope as f64;
    if (fill_sum(corrected, b, cap) - demand).abs() <= (sum - demand).abs() {
        corrected
    } else {
        level
    }
}

/// Bisection on the water level.
///
/// Stops as soon as `|y| < tolerance`. If the step budget
/// `ceil(log2(|bracket| / tolerance))` is spent first (several slots can share
/// a slope, so a narrow bracket does not imply a small residual), the level is
/// read off the linear piece of `y` that changes sign inside the final bracket.
pub fn project_binary_search(
    problem: &ProjectionProblem<'_>,
    tolerance: f64,
    out: &mut [f64],
) -> Result<BisectionOutcome> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::Config(format!("bisection tolerance must be positive, got {tolerance}")));
    }
    let demand = problem.checked_demand()?;
    let Some(bracket) = problem.bracket() else {
        out.fill(0.0);
        return Ok(BisectionOutcome {
            level: 0.0,
            bracket: (0.0, 0.0),
            steps: 0,
            step_budget: 0,
            finished_exactly: false,
        });
    };
    let b = problem.offsets;
    let cap = problem.caps;
    let (mut lo, mut hi) = bracket;
    let budget = bisection_step_budget(hi - lo, tolerance);
    let mut steps = 0;
    while steps < budget {
        let mid = 0.5 * (lo + hi);
        steps += 1;
        let y = fill_sum(mid, b, cap) - demand;
        if y.abs() < tolerance {
            fill_at_level(mid, b, cap, out);
            return Ok(BisectionOutcome {
                level: mid,
                bracket,
                steps,
                step_budget: budget,
                finished_exactly: false,
            });
        }
        if y > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let level = solve_linear_piece(lo, hi, demand, b, cap);
    fill_at_level(level, b, cap, out);
    Ok(BisectionOutcome {
        level,
        bracket,
        steps,
        step_budget: budget,
        finished_exactly: true,
    })
}

/// Root of y on `[lo, hi]`, where y(lo) <= 0 <= y(hi), found by walking the
/// breakpoints of y inside the interval.
fn solve_linear_piece(lo: f64, hi: f64, demand: f64, b: &[f64], cap: &[f64]) -> f64 {
    let mut knots: Vec<f64> = vec![lo, hi];
    for (bt, ct) in b.iter().zip(cap) {
        if *ct > 0.0 {
            for x in [*bt, bt + ct] {
                if x > lo && x < hi {
                    knots.push(x);
                }
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    let mut prev = (knots[0], fill_sum(knots[0], b, cap) - demand);
    if prev.1 >= 0.0 {
        return prev.0;
    }
    for &x in &knots[1..] {
        let y = fill_sum(x, b, cap) - demand;
        if y >= 0.0 {
            let (x0, y0) = prev;
            if y == y0 {
                return x;
            }
            return x0 + (x - x0) * (-y0) / (y - y0);
        }
        prev = (x, y);
    }
    hi
}

/// Projects `previous - alpha * gradient` onto the PEV's feasible set and
/// writes the result to `out`. Returns the water level.
pub fn project_onto_dk(
    previous: &[f64],
    gradient: &[f64],
    alpha: f64,
    caps: &[f64],
    demand: f64,
    method: ProjectionMethod,
    out: &mut [f64],
) -> Result<f64> {
    // `out` doubles as storage for the offsets.
    for ((o, p), q) in out.iter_mut().zip(previous).zip(gradient) {
        *o = alpha * q - p;
    }
    project_offsets_in_place(out, caps, demand, method)
}

/// Solves the projection whose offsets are stored in `buf`, overwriting them
/// with the profile.
pub fn project_offsets_in_place(
    buf: &mut [f64],
    caps: &[f64],
    demand: f64,
    method: ProjectionMethod,
) -> Result<f64> {
    OFFSETS.with(|cell| {
        let mut offsets = cell.borrow_mut();
        offsets.clear();
        offsets.extend_from_slice(buf);
        let problem = ProjectionProblem::new(&offsets, caps, demand);
        match method {
            ProjectionMethod::Exact => project_exact(&problem, buf).map(|w| w.level),
            ProjectionMethod::BinarySearch { tolerance } => {
                project_binary_search(&problem, tolerance, buf).map(|o| o.level)
            }
        }
    })
}

thread_local! {
    static OFFSETS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exact(b: &[f64], cap: &[f64], u: f64) -> (Vec<f64>, f64) {
        let mut out = vec![f64::NAN; b.len()];
        let w = project_exact(&ProjectionProblem::new(b, cap, u), &mut out).unwrap();
        (out, w.level)
    }

    fn bisect(b: &[f64], cap: &[f64], u: f64) -> (Vec<f64>, BisectionOutcome) {
        let mut out = vec![f64::NAN; b.len()];
        let o = project_binary_search(&ProjectionProblem::new(b, cap, u), 1e-8, &mut out).unwrap();
        (out, o)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn fill_examples() {
        let mut out = [0.0; 3];
        fill_at_level(0.5, &[1.0, 3.0, 2.0], &[2.0; 3], &mut out);
        assert_eq!(out, [0.0; 3]);
        fill_at_level(10.0, &[1.0, 3.0, 2.0], &[2.0; 3], &mut out);
        assert_eq!(out, [2.0; 3]);
        fill_at_level(3.0, &[1.0, 3.0, 2.0], &[2.0; 3], &mut out);
        assert_eq!(out, [2.0, 0.0, 1.0]);
    }

    #[test]
    fn single_slot() {
        assert_eq!(exact(&[0.0], &[8.0], 5.0).0, vec![5.0]);
        assert!((bisect(&[0.0], &[8.0], 5.0).0[0] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn symmetric_fill() {
        let (p, _) = exact(&[0.0; 3], &[4.0; 3], 6.0);
        assert_eq!(p, vec![2.0; 3]);
        let (p, _) = bisect(&[0.0; 3], &[4.0; 3], 6.0);
        assert!(close(&p, &[2.0; 3], 1e-8));
    }

    #[test]
    fn staggered_offsets() {
        let (p, level) = exact(&[1.0, 3.0, 2.0], &[2.0; 3], 3.0);
        assert!(close(&p, &[2.0, 0.0, 1.0], 1e-12));
        assert!((level - 3.0).abs() < 1e-12);
        let (p, _) = bisect(&[1.0, 3.0, 2.0], &[2.0; 3], 3.0);
        assert!(close(&p, &[2.0, 0.0, 1.0], 1e-8));
    }

    #[test]
    fn slot_saturates_mid_fill() {
        let (p, level) = exact(&[0.0, 0.0], &[1.0, 5.0], 4.0);
        assert_eq!(p, vec![1.0, 3.0]);
        assert_eq!(level, 3.0);
    }

    #[test]
    fn full_demand_returns_caps() {
        let caps = [1.0, 2.5, 0.5];
        assert_eq!(exact(&[3.0, -1.0, 0.2], &caps, 4.0).0, caps.to_vec());
        assert!(close(&bisect(&[3.0, -1.0, 0.2], &caps, 4.0).0, &caps, 1e-8));
    }

    #[test]
    fn zero_demand_and_zero_caps() {
        assert_eq!(exact(&[1.0, 2.0], &[1.0, 1.0], 0.0).0, vec![0.0, 0.0]);
        let (p, _) = exact(&[-5.0, 0.0, 1.0], &[0.0, 2.0, 2.0], 3.0);
        assert_eq!(p[0], 0.0);
        assert!((p.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_infeasible_demand() {
        let mut out = [0.0; 2];
        let problem = ProjectionProblem::new(&[0.0, 0.0], &[1.0, 1.0], 2.5);
        assert!(matches!(project_exact(&problem, &mut out), Err(Error::NoSolution { .. })));
        assert!(matches!(
            project_binary_search(&problem, 1e-8, &mut out),
            Err(Error::NoSolution { .. })
        ));
        let negative = ProjectionProblem::new(&[0.0], &[1.0], -1.0);
        assert!(project_exact(&negative, &mut out[..1]).is_err());
    }

    #[test]
    fn interior_point_is_fixed() {
        let prev = [1.0, 2.0, 0.5];
        let caps = [2.0; 3];
        let mut out = [0.0; 3];
        project_onto_dk(&prev, &[0.0; 3], 0.7, &caps, 3.5, ProjectionMethod::Exact, &mut out).unwrap();
        assert!(close(&out, &prev, 1e-12));
    }

    #[test]
    fn zero_start_fills_uniformly() {
        let mut out = [0.0; 4];
        project_onto_dk(&[0.0; 4], &[0.0; 4], 1.0, &[5.0; 4], 6.0, ProjectionMethod::Exact, &mut out)
            .unwrap();
        assert_eq!(out, [1.5; 4]);
    }

    #[test]
    fn bisection_respects_budget() {
        let b = [0.3, -2.0, 7.5, 1.1];
        let caps = [1.0, 3.0, 2.0, 0.5];
        let (_, o) = bisect(&b, &caps, 4.2);
        assert!(o.steps <= o.step_budget);
        assert_eq!(o.step_budget, bisection_step_budget(o.bracket.1 - o.bracket.0, 1e-8));
    }

    #[test]
    fn budget_exhaustion_still_fills_exactly() {
        // Many tied slots give y a steep slope; a loose tolerance and a single
        // step leave |y| above it.
        let b = [0.0; 64];
        let caps = [1.0; 64];
        let mut out = [0.0; 64];
        let o = project_binary_search(&ProjectionProblem::new(&b, &caps, 10.0), 0.6, &mut out).unwrap();
        assert!(o.steps <= o.step_budget);
        assert!((out.iter().sum::<f64>() - 10.0).abs() < 1e-9);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (1usize..40).prop_flat_map(|t| {
            (
                prop::collection::vec(-5.0f64..5.0, t),
                prop::collection::vec(prop_oneof![1 => Just(0.0), 9 => 0.01f64..3.0], t),
                0.0f64..=1.0,
            )
                .prop_map(|(b, c, frac)| {
                    let u = frac * c.iter().sum::<f64>();
                    (b, c, u)
                })
        })
    }

    proptest! {
        #[test]
        fn outputs_are_feasible((b, c, u) in instance()) {
            let (p, _) = exact(&b, &c, u);
            prop_assert!(p.iter().zip(&c).all(|(x, cap)| *x >= 0.0 && x <= cap));
            prop_assert!((p.iter().sum::<f64>() - u).abs() <= 1e-9);
            let (q, _) = bisect(&b, &c, u);
            prop_assert!(q.iter().zip(&c).all(|(x, cap)| *x >= 0.0 && x <= cap));
            prop_assert!((q.iter().sum::<f64>() - u).abs() < 1e-8);
            prop_assert!(close(&p, &q, 1e-8 * b.len() as f64));
        }

        #[test]
        fn idempotent((b, c, u) in instance(), alpha in 0.01f64..10.0) {
            let (p, _) = exact(&b, &c, u);
            let mut again = vec![0.0; p.len()];
            project_onto_dk(&p, &vec![0.0; p.len()], alpha, &c, u, ProjectionMethod::Exact, &mut again).unwrap();
            prop_assert!(close(&p, &again, 1e-9));
        }

        #[test]
        fn non_expansive((b, c, u) in instance(), shift in prop::collection::vec(-3.0f64..3.0, 40)) {
            let b2: Vec<f64> = b.iter().zip(&shift).map(|(x, s)| x + s).collect();
            let (p1, _) = exact(&b, &c, u);
            let (p2, _) = exact(&b2, &c, u);
            // targets are -b, -b2; only slots with positive cap count
            let dp: f64 = p1.iter().zip(&p2).map(|(x, y)| (x - y).powi(2)).sum();
            let dx: f64 = b.iter().zip(&b2).zip(&c)
                .filter(|(_, c)| **c > 0.0)
                .map(|((x, y), _)| (x - y).powi(2)).sum();
            prop_assert!(dp.sqrt() <= dx.sqrt() + 1e-9);
        }

        #[test]
        fn level_sum_is_monotone((b, c, _u) in instance(), x in -6.0f64..8.0, dx in 0.0f64..2.0) {
            prop_assert!(fill_sum(x, &b, &c) <= fill_sum(x + dx, &b, &c));
        }
    }
}
