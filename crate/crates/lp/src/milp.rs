//! Best-first branch-and-bound over the simplex.
//!
//! Nodes are ordered by LP bound, ties by creation order; by default the
//! branching variable is the most fractional integer column (lowest index on
//! ties) and the down child is created before the up child. Pseudocost
//! branching is available for models re-solved many times with small changes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::simplex::{Basis, Simplex};
use crate::{LpError, LpProblem, LpSolution, LpStatus, Sense, Tolerances};

#[derive(Clone, Debug)]
pub struct MilpOptions {
    /// Relative gap `(bound - incumbent) / |incumbent|` at which the search stops.
    pub gap_tol: f64,
    /// Absolute gap below which the search stops regardless of `gap_tol`.
    pub abs_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    /// A candidate point checked for feasibility and used as the first incumbent.
    pub initial_incumbent: Option<Vec<f64>>,
    pub branching: Branching,
    /// Pseudocosts carried over from an earlier solve of a similar model.
    pub pseudocosts: Option<Pseudocosts>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branching {
    #[default]
    MostFractional,
    /// Product score of estimated down/up bound degradations; columns without
    /// history use the average, so the first picks fall back to fractionality.
    Pseudocost,
}

/// Average bound degradation per unit change, per column and direction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pseudocosts {
    pub down_sum: Vec<f64>,
    pub down_count: Vec<u32>,
    pub up_sum: Vec<f64>,
    pub up_count: Vec<u32>,
}

impl Pseudocosts {
    fn new(n: usize) -> Self {
        Self { down_sum: vec![0.0; n], down_count: vec![0; n], up_sum: vec![0.0; n], up_count: vec![0; n] }
    }

    fn record(&mut self, j: usize, up: bool, per_unit: f64) {
        if up {
            self.up_sum[j] += per_unit;
            self.up_count[j] += 1;
        } else {
            self.down_sum[j] += per_unit;
            self.down_count[j] += 1;
        }
    }

    fn averages(&self) -> (f64, f64) {
        let avg = |sum: &[f64], count: &[u32]| {
            let n: u32 = count.iter().sum();
            if n == 0 { 1.0 } else { sum.iter().sum::<f64>() / n as f64 }
        };
        (avg(&self.down_sum, &self.down_count), avg(&self.up_sum, &self.up_count))
    }

    fn estimate(&self, j: usize, avg: (f64, f64)) -> (f64, f64) {
        let down = if self.down_count[j] > 0 { self.down_sum[j] / self.down_count[j] as f64 } else { avg.0 };
        let up = if self.up_count[j] > 0 { self.up_sum[j] / self.up_count[j] as f64 } else { avg.1 };
        (down, up)
    }
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            abs_tol: 1e-9,
            time_limit: None,
            node_limit: None,
            initial_incumbent: None,
            branching: Branching::MostFractional,
            pseudocosts: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncumbentEvent {
    pub node: usize,
    pub objective: f64,
    pub bound: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct MilpResult {
    /// `status` is `Optimal` when the gap closed, `IterationLimit` when a time
    /// or node limit stopped the search, `Infeasible`/`Unbounded` from the root.
    /// On a limit without any incumbent `primal` is empty.
    pub solution: LpSolution,
    /// Best proven bound on the optimum (an upper bound when maximizing).
    pub best_bound: f64,
    pub nodes: usize,
    /// Number of nodes that were split.
    pub branched: usize,
    pub trace: Vec<IncumbentEvent>,
    pub pseudocosts: Pseudocosts,
}

impl MilpResult {
    pub fn has_incumbent(&self) -> bool {
        !self.solution.primal.is_empty()
    }

    /// Relative gap between bound and incumbent, 0 when closed.
    pub fn gap(&self) -> f64 {
        if !self.has_incumbent() {
            return f64::INFINITY;
        }
        let diff = (self.best_bound - self.solution.objective).abs();
        if diff <= 1e-12 {
            0.0
        } else {
            diff / self.solution.objective.abs().max(1e-9)
        }
    }
}

struct Node {
    /// Bound in "larger is better" orientation.
    score: f64,
    id: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    warm: Option<Basis>,
    /// Column branched on to create this node, whether it is the up child, and
    /// the distance the branch moved it.
    origin: Option<(usize, bool, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Tightens integer bounds that cannot move without dropping the LP bound by
/// more than `slack` (the room left above the incumbent's closing threshold).
fn fix_by_reduced_cost(
    ints: &[usize],
    lp: &LpSolution,
    orient: f64,
    slack: f64,
    feas: f64,
    lo: &mut [f64],
    hi: &mut [f64],
) {
    if !(slack >= 0.0) {
        return;
    }
    for &j in ints {
        let d = orient * lp.reduced_costs[j];
        let x = lp.primal[j];
        if d < -1e-9 && (x - lo[j]).abs() <= feas {
            let room = (slack / -d + 1e-9).floor();
            hi[j] = hi[j].min(lo[j] + room);
        } else if d > 1e-9 && (x - hi[j]).abs() <= feas {
            let room = (slack / d + 1e-9).floor();
            lo[j] = lo[j].max(hi[j] - room);
        }
    }
}

/// Solves `problem` honoring integrality flags.
pub fn solve_milp(problem: &LpProblem, opts: &MilpOptions) -> Result<MilpResult, LpError> {
    let tol = Tolerances::default();
    let mut sx = Simplex::new(problem, tol)?;
    let start = Instant::now();
    sx.deadline = opts.time_limit.map(|t| start + t);
    // Orientation: larger `score` is better.
    let orient = match problem.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let ints: Vec<usize> = (0..problem.num_columns())
        .filter(|&j| problem.columns[j].integer)
        .collect();

    let mut lo: Vec<f64> = problem.columns.iter().map(|c| c.lower).collect();
    let mut hi: Vec<f64> = problem.columns.iter().map(|c| c.upper).collect();
    for &j in &ints {
        lo[j] = (lo[j] - tol.integrality).ceil();
        hi[j] = (hi[j] + tol.integrality).floor();
    }

    let mut incumbent: Option<LpSolution> = None;
    let mut trace = Vec::new();
    if let Some(cand) = &opts.initial_incumbent {
        if cand.len() == problem.num_columns()
            && problem.max_violation(cand) <= tol.feasibility
            && ints
                .iter()
                .all(|&j| (cand[j] - cand[j].round()).abs() <= tol.integrality)
        {
            let objective = problem.objective_value(cand);
            incumbent = Some(LpSolution {
                status: LpStatus::Optimal,
                objective,
                primal: cand.clone(),
                duals: Vec::new(),
                reduced_costs: Vec::new(),
                iterations: 0,
                basis: None,
            });
            trace.push(IncumbentEvent {
                node: 0,
                objective,
                bound: f64::INFINITY * orient,
                seconds: 0.0,
            });
        }
    }

    let closes = |bound_score: f64, inc: &Option<LpSolution>| -> bool {
        match inc {
            None => false,
            Some(s) => {
                let inc_score = orient * s.objective;
                bound_score - inc_score <= opts.abs_tol.max(opts.gap_tol * s.objective.abs())
            }
        }
    };

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Node {
        score: f64::INFINITY,
        id: next_id,
        lo,
        hi,
        warm: None,
        origin: None,
    });
    next_id += 1;
    let mut pc = match &opts.pseudocosts {
        Some(p) if p.down_sum.len() == problem.num_columns() => p.clone(),
        _ => Pseudocosts::new(problem.num_columns()),
    };
    let mut nodes = 0usize;
    let mut branched = 0usize;
    let mut root_status: Option<LpStatus> = None;
    let mut limit_hit = false;
    let mut numerical_frontier = f64::NEG_INFINITY;

    while let Some(node) = heap.peek() {
        if closes(node.score, &incumbent) {
            break;
        }
        let over_time = opts.time_limit.is_some_and(|t| start.elapsed() >= t);
        let over_nodes = opts.node_limit.is_some_and(|n| nodes >= n);
        if over_time || over_nodes {
            limit_hit = true;
            break;
        }
        let node = heap.pop().expect("peeked");
        nodes += 1;
        let lp = sx.solve_with_bounds(&node.lo, &node.hi, node.warm.as_ref());
        if root_status.is_none() {
            root_status = Some(lp.status);
        }
        if let (Some((j, up, dist)), LpStatus::Optimal) = (node.origin, lp.status) {
            pc.record(j, up, ((node.score - orient * lp.objective) / dist).max(0.0));
        }
        match lp.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    return Ok(MilpResult {
                        solution: lp,
                        best_bound: orient * f64::INFINITY,
                        nodes,
                        branched,
                        trace,
                        pseudocosts: pc,
                    });
                }
                continue;
            }
            LpStatus::IterationLimit | LpStatus::Numerical => {
                // The subtree is not resolved; keep its bound alive.
                numerical_frontier = numerical_frontier.max(node.score);
                continue;
            }
        }
        let score = orient * lp.objective;
        if closes(score, &incumbent) {
            continue;
        }
        let pick = match opts.branching {
            Branching::MostFractional => most_fractional(&ints, &lp.primal, tol.integrality),
            Branching::Pseudocost => pseudocost_pick(&ints, &lp.primal, tol.integrality, &pc),
        };
        match pick {
            None => {
                let mut sol = lp;
                for &j in &ints {
                    sol.primal[j] = sol.primal[j].round();
                }
                sol.objective = problem.objective_value(&sol.primal);
                let better = incumbent
                    .as_ref()
                    .is_none_or(|s| orient * sol.objective > orient * s.objective);
                if better {
                    let bound = heap
                        .peek()
                        .map(|n| n.score.min(score))
                        .unwrap_or(score);
                    trace.push(IncumbentEvent {
                        node: nodes,
                        objective: sol.objective,
                        bound: orient * bound.max(score),
                        seconds: start.elapsed().as_secs_f64(),
                    });
                    incumbent = Some(sol);
                }
            }
            Some((j, v)) => {
                branched += 1;
                let basis = lp.basis.clone();
                let (mut lo, mut hi) = (node.lo, node.hi);
                if let Some(inc) = &incumbent {
                    let slack = score - orient * inc.objective - opts.abs_tol.max(opts.gap_tol * inc.objective.abs());
                    fix_by_reduced_cost(&ints, &lp, orient, slack, tol.feasibility, &mut lo, &mut hi);
                }
                let mut down_hi = hi.clone();
                down_hi[j] = v.floor();
                let mut up_lo = lo.clone();
                up_lo[j] = v.ceil();
                heap.push(Node {
                    score,
                    id: next_id,
                    lo: lo.clone(),
                    hi: down_hi,
                    warm: basis.clone(),
                    origin: Some((j, false, v - v.floor())),
                });
                heap.push(Node {
                    score,
                    id: next_id + 1,
                    lo: up_lo,
                    hi,
                    warm: basis,
                    origin: Some((j, true, v.ceil() - v)),
                });
                next_id += 2;
            }
        }
    }

    let open_bound = heap
        .peek()
        .map(|n| n.score)
        .unwrap_or(f64::NEG_INFINITY)
        .max(numerical_frontier);
    let best_bound_score = match &incumbent {
        Some(s) => open_bound.max(orient * s.objective),
        None => open_bound,
    };
    let best_bound = orient * best_bound_score;

    let solution = match incumbent {
        Some(mut s) => {
            s.status = if limit_hit || numerical_frontier > orient * s.objective + opts.abs_tol {
                LpStatus::IterationLimit
            } else {
                LpStatus::Optimal
            };
            s
        }
        None => {
            let status = if limit_hit || numerical_frontier > f64::NEG_INFINITY {
                LpStatus::IterationLimit
            } else if root_status == Some(LpStatus::Unbounded) {
                LpStatus::Unbounded
            } else {
                LpStatus::Infeasible
            };
            LpSolution {
                status,
                objective: f64::NAN,
                primal: Vec::new(),
                duals: Vec::new(),
                reduced_costs: Vec::new(),
                iterations: 0,
                basis: None,
            }
        }
    };
    Ok(MilpResult {
        best_bound: if solution.primal.is_empty() && !limit_hit {
            f64::NAN
        } else {
            best_bound
        },
        solution,
        nodes,
        branched,
        trace,
        pseudocosts: pc,
    })
}

fn fractional(v: f64, tol: f64) -> Option<f64> {
    let frac = v - v.floor();
    (frac > tol && frac < 1.0 - tol).then_some(frac)
}

fn most_fractional(ints: &[usize], x: &[f64], tol: f64) -> Option<(usize, f64)> {
    let mut pick: Option<(usize, f64, f64)> = None;
    for &j in ints {
        let Some(frac) = fractional(x[j], tol) else { continue };
        let dist = frac.min(1.0 - frac);
        if pick.is_none_or(|(_, _, d)| dist > d + 1e-12) {
            pick = Some((j, x[j], dist));
        }
    }
    pick.map(|(j, v, _)| (j, v))
}

fn pseudocost_pick(ints: &[usize], x: &[f64], tol: f64, pc: &Pseudocosts) -> Option<(usize, f64)> {
    const FLOOR: f64 = 1e-6;
    let avg = pc.averages();
    let mut pick: Option<(usize, f64, f64)> = None;
    for &j in ints {
        let Some(frac) = fractional(x[j], tol) else { continue };
        let (down, up) = pc.estimate(j, avg);
        let score = (down * frac).max(FLOOR) * (up * (1.0 - frac)).max(FLOOR);
        if pick.is_none_or(|(_, _, s)| score > s * (1.0 + 1e-12)) {
            pick = Some((j, x[j], score));
        }
    }
    pick.map(|(j, v, _)| (j, v))
}
