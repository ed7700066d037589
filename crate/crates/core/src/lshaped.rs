//! Master/subproblem decomposition with single- or multi-cut optimality cuts.

use std::time::{Duration, Instant};

use evcs_lp::{solve_milp, Basis, Branching, LpProblem, LpStatus, MilpOptions, Pseudocosts, RowSense, Sense, Simplex, Tolerances};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Instance, NetworkDesign};
use crate::error::{Error, Result};
use crate::model::{first_stage_rows, Family, FirstStage, SecondStage};
use crate::stochastics::Scenario;

/// A scenario subproblem kept alive across iterations so it can warm-start.
pub struct Subproblem {
    pub stage: SecondStage,
    simplex: Simplex,
    basis: Option<Basis>,
}

#[derive(Clone, Debug)]
pub struct SubSolution {
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

impl SubSolution {
    /// Duals of one family, in row order.
    pub fn family_duals(&self, stage: &SecondStage, f: Family) -> Vec<f64> {
        stage
            .rows
            .iter()
            .zip(&self.duals)
            .filter(|(r, _)| r.family == f)
            .map(|(_, &d)| d)
            .collect()
    }
}

impl Subproblem {
    pub fn new(stage: SecondStage) -> Result<Self> {
        let lp = stage.lp_at(&vec![0.0; stage.first.len()]);
        let simplex = Simplex::new(&lp, Tolerances::default())?;
        Ok(Self { stage, simplex, basis: None })
    }

    pub fn solve(&mut self, v: &[f64]) -> Result<SubSolution> {
        for (i, r) in self.stage.rows.iter().enumerate() {
            self.simplex.set_rhs(i, r.rhs(v));
        }
        let mut s = self.simplex.solve(self.basis.as_ref());
        if s.status != LpStatus::Optimal && self.basis.is_some() {
            s = self.simplex.solve(None);
        }
        if s.status != LpStatus::Optimal {
            return Err(Error::Subproblem { scenario: self.stage.scenario, status: s.status });
        }
        self.basis = s.basis.take();
        Ok(SubSolution {
            objective: s.objective,
            primal: s.primal,
            duals: s.duals,
            reduced_costs: s.reduced_costs,
        })
    }
}

/// Recourse value of one scenario at a fixed first-stage vector.
pub fn solve_subproblem(stage: &SecondStage, v: &[f64]) -> Result<SubSolution> {
    Subproblem::new(stage.clone())?.solve(v)
}

/// `η ≤ constant + x · v_x + z · v_z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    /// `Some(id)` for a per-scenario cut, `None` for the aggregate.
    pub scenario: Option<usize>,
    pub constant: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// First-stage vector the cut was generated at.
    pub iterate: Vec<f64>,
}

impl Cut {
    pub fn zero(first: FirstStage, scenario: Option<usize>, iterate: Vec<f64>) -> Self {
        let h = first.len() / 2;
        Self { scenario, constant: 0.0, x: vec![0.0; h], z: vec![0.0; h], iterate }
    }

    pub fn bound(&self, v: &[f64]) -> f64 {
        let h = self.x.len();
        self.constant
            + self.x.iter().zip(&v[..h]).map(|(a, b)| a * b).sum::<f64>()
            + self.z.iter().zip(&v[h..]).map(|(a, b)| a * b).sum::<f64>()
    }

    fn add_scaled(&mut self, other: &Cut, w: f64) {
        self.constant += w * other.constant;
        self.x.iter_mut().zip(&other.x).for_each(|(a, b)| *a += w * b);
        self.z.iter_mut().zip(&other.z).for_each(|(a, b)| *a += w * b);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMode {
    Single,
    Multi,
}

/// Optimality cut from an optimal subproblem dual.
///
/// The constant collects duals times the constant right-hand sides plus the
/// positive reduced costs at the unit upper bounds of y and o; the slopes are
/// the duals of rows that carry first-stage terms. In `Single` mode the cut is
/// weighted by the scenario probability, ready to be summed.
pub fn make_cut(stage: &SecondStage, sol: &SubSolution, mode: CutMode, iterate: &[f64]) -> Cut {
    let first = stage.first;
    let h = first.len() / 2;
    let mut cut = Cut::zero(first, Some(stage.scenario), iterate.to_vec());
    for (r, &pi) in stage.rows.iter().zip(&sol.duals) {
        if pi == 0.0 {
            continue;
        }
        cut.constant += pi * r.constant;
        for &(k, a) in &r.links {
            if first.is_x(k) {
                cut.x[k] += pi * a;
            } else {
                cut.z[k - h] += pi * a;
            }
        }
    }
    for (rc, u) in sol.reduced_costs.iter().zip(&stage.upper) {
        if *rc > 0.0 {
            cut.constant += rc * u;
        }
    }
    if mode == CutMode::Single {
        let mut w = Cut::zero(first, None, iterate.to_vec());
        w.add_scaled(&cut, stage.probability);
        cut = w;
    }
    cut
}

#[derive(Clone, Debug)]
pub struct LShapedOptions {
    pub mode: CutMode,
    pub epsilon: f64,
    pub time_limit: Option<Duration>,
    pub max_iterations: usize,
    /// Rounds over the master's LP relaxation before the integer iterations;
    /// their cuts stay in the master. 0 disables the warm-up.
    pub relaxed_rounds: usize,
    /// A first-stage vector evaluated before anything else; it becomes the
    /// first incumbent and contributes the first cuts.
    pub start: Option<Vec<f64>>,
}

impl Default for LShapedOptions {
    fn default() -> Self {
        Self { mode: CutMode::Multi, epsilon: 1e-4, time_limit: None, max_iterations: 500, relaxed_rounds: 100, start: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
    /// Σ_ω p_ω f_ω at this iteration's master solution.
    pub value: f64,
    pub master_bound: f64,
    pub cuts: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    TimeLimit,
    IterationLimit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: CutMode,
    pub termination: Termination,
    pub objective: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: Vec<IterationLog>,
    /// LP-relaxation warm-up rounds that added cuts.
    pub relaxed_rounds: usize,
    /// Whether a start vector was evaluated (and contributed cuts).
    pub started: bool,
    pub cuts: Vec<Cut>,
    pub seconds: f64,
}

impl RunReport {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Master problem: first stage, one η (single) or one per scenario (multi),
/// each capped by the demand it could serve, plus all cuts so far.
fn build_master(
    inst: &Instance,
    stages: &[&SecondStage],
    cuts: &[Cut],
    mode: CutMode,
) -> (LpProblem, FirstStage, Vec<usize>) {
    let mut p = LpProblem::new(Sense::Maximize);
    let first = first_stage_rows(inst, &mut p);
    let eta: Vec<usize> = match mode {
        CutMode::Single => {
            let m: f64 = stages.iter().map(|s| s.probability * s.total_demand).sum();
            vec![p.add_column(f64::NEG_INFINITY, m, 1.0)]
        }
        CutMode::Multi => stages
            .iter()
            .map(|s| p.add_column(f64::NEG_INFINITY, s.total_demand, s.probability))
            .collect(),
    };
    let h = first.len() / 2;
    for c in cuts {
        let e = match c.scenario {
            Some(id) => eta[stages.iter().position(|s| s.scenario == id).expect("cut scenario")],
            None => eta[0],
        };
        let mut coeffs = vec![(e, 1.0)];
        coeffs.extend(c.x.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(k, a)| (k, -a)));
        coeffs.extend(c.z.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(k, a)| (h + k, -a)));
        p.add_row(coeffs, RowSense::Le, c.constant);
    }
    (p, first, eta)
}

fn new_cuts(subs: &[Subproblem], sols: &[SubSolution], mode: CutMode, first: FirstStage, v: &[f64]) -> Vec<Cut> {
    match mode {
        CutMode::Multi => subs
            .iter()
            .zip(sols)
            .map(|(s, f)| make_cut(&s.stage, f, CutMode::Multi, v))
            .collect(),
        CutMode::Single => {
            let mut agg = Cut::zero(first, None, v.to_vec());
            for (s, f) in subs.iter().zip(sols) {
                agg.add_scaled(&make_cut(&s.stage, f, CutMode::Single, v), 1.0);
            }
            vec![agg]
        }
    }
}

/// Runs the decomposition over prepared second stages.
pub fn run_lshaped_stages(
    inst: &Instance,
    stages: Vec<SecondStage>,
    opts: &LShapedOptions,
) -> Result<(NetworkDesign, RunReport)> {
    if !(opts.epsilon > 0.0) {
        return Err(crate::error::input("epsilon must be positive"));
    }
    if stages.is_empty() {
        return Err(crate::error::input("no scenarios"));
    }
    let start = Instant::now();
    let mut subs = stages.into_iter().map(Subproblem::new).collect::<Result<Vec<_>>>()?;
    let first = FirstStage::of(inst);
    let mut cuts: Vec<Cut> = Vec::new();
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut incumbent = vec![0.0; first.len()];
    let mut log = Vec::new();
    let mut termination = Termination::IterationLimit;
    // Masters differ only by added cuts, so branching history carries over.
    let mut pseudocosts: Option<Pseudocosts> = None;

    if let Some(v) = &opts.start {
        if v.len() != first.len() {
            return Err(crate::error::input("start vector does not match the first stage"));
        }
        let sols: Vec<SubSolution> = subs.par_iter_mut().map(|s| s.solve(v)).collect::<Result<Vec<_>>>()?;
        lower = subs.iter().zip(&sols).map(|(s, f)| s.stage.probability * f.objective).sum();
        incumbent = v.clone();
        cuts.extend(new_cuts(&subs, &sols, opts.mode, first, v));
    }

    // Cuts are valid for fractional first stages too, and relaxed masters are
    // cheap, so a few rounds here spare the integer masters most of the work.
    // Separation happens between a core point and the relaxed optimum; the core
    // point moves whenever that fails to cut the optimum off.
    let mut relaxed_rounds = 0;
    let mut core: Option<Vec<f64>> = None;
    let mut best_relaxed = f64::NEG_INFINITY;
    while relaxed_rounds < opts.relaxed_rounds && !opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
        let owned: Vec<&SecondStage> = subs.iter().map(|s| &s.stage).collect();
        let (master, _, eta) = build_master(inst, &owned, &cuts, opts.mode);
        let lp = evcs_lp::solve_lp(&master)?;
        if lp.status != LpStatus::Optimal {
            return Err(Error::Solver(lp.status));
        }
        upper = upper.min(lp.objective);
        if best_relaxed.is_finite() && lp.objective - best_relaxed <= opts.epsilon.max(1e-4 * best_relaxed.abs()) {
            break;
        }
        relaxed_rounds += 1;
        let out = &lp.primal[..first.len()];
        let v: Vec<f64> = match &core {
            Some(c) => c.iter().zip(out).map(|(a, b)| 0.5 * (a + b)).collect(),
            None => out.to_vec(),
        };
        let sols: Vec<SubSolution> = subs.par_iter_mut().map(|s| s.solve(&v)).collect::<Result<Vec<_>>>()?;
        let value: f64 = subs.iter().zip(&sols).map(|(s, f)| s.stage.probability * f.objective).sum();
        best_relaxed = best_relaxed.max(value);
        let new = new_cuts(&subs, &sols, opts.mode, first, &v);
        // Master value at the relaxed optimum once the new cuts are in.
        let capped: f64 = match opts.mode {
            CutMode::Single => lp.primal[eta[0]].min(new[0].bound(out)),
            CutMode::Multi => subs
                .iter()
                .zip(&new)
                .zip(&eta)
                .map(|((s, c), &e)| s.stage.probability * lp.primal[e].min(c.bound(out)))
                .sum(),
        };
        let eta_value: f64 = match opts.mode {
            CutMode::Single => lp.primal[eta[0]],
            CutMode::Multi => subs.iter().zip(&eta).map(|(s, &e)| s.stage.probability * lp.primal[e]).sum(),
        };
        let cuts_off = capped < eta_value - 1e-9 * (1.0 + eta_value.abs());
        if core.is_none() || !cuts_off {
            core = Some(v);
        }
        cuts.extend(new);
    }

    for iteration in 1..=opts.max_iterations {
        let owned: Vec<&SecondStage> = subs.iter().map(|s| &s.stage).collect();
        let (master, _, eta) = build_master(inst, &owned, &cuts, opts.mode);

        // Seed the master with the incumbent; η at the lowest cut is feasible.
        let mut seed = incumbent.clone();
        seed.extend(eta.iter().map(|_| 0.0));
        for (i, &e) in eta.iter().enumerate() {
            let cap = master.columns[e].upper;
            let lowest = cuts
                .iter()
                .filter(|c| match opts.mode {
                    CutMode::Single => true,
                    CutMode::Multi => c.scenario == Some(owned[i].scenario),
                })
                .map(|c| c.bound(&incumbent))
                .fold(cap, f64::min);
            seed[e] = lowest;
        }
        let remaining = opts.time_limit.map(|t| t.saturating_sub(start.elapsed()));
        let r = solve_milp(
            &master,
            &MilpOptions {
                time_limit: remaining,
                initial_incumbent: Some(seed),
                // Early masters only need to point somewhere useful; a repeated
                // iterate forces the bound within this tolerance of LB, so the
                // gap still shrinks geometrically.
                abs_tol: if (upper - lower).is_finite() {
                    (0.1 * (upper - lower)).max(0.1 * opts.epsilon)
                } else {
                    0.1 * opts.epsilon
                },
                branching: Branching::Pseudocost,
                pseudocosts: pseudocosts.take(),
                ..Default::default()
            },
        )?;
        pseudocosts = Some(r.pseudocosts.clone());
        if !r.has_incumbent() {
            return Err(Error::Solver(r.solution.status));
        }
        let limited = r.solution.status != LpStatus::Optimal;
        upper = upper.min(r.best_bound);
        let v: Vec<f64> = r.solution.primal[..first.len()].iter().map(|a| a.round()).collect();

        let sols: Vec<SubSolution> = subs
            .par_iter_mut()
            .map(|s| s.solve(&v))
            .collect::<Result<Vec<_>>>()?;
        let value: f64 = subs.iter().zip(&sols).map(|(s, f)| s.stage.probability * f.objective).sum();
        if value > lower {
            lower = value;
            incumbent = v.clone();
        }

        let new = new_cuts(&subs, &sols, opts.mode, first, &v);
        let added = new.len();
        cuts.extend(new);
        log.push(IterationLog {
            iteration,
            lower,
            upper,
            value,
            master_bound: r.best_bound,
            cuts: added,
            seconds: start.elapsed().as_secs_f64(),
        });
        if upper - lower <= opts.epsilon {
            termination = Termination::Converged;
            break;
        }
        if limited || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            termination = Termination::TimeLimit;
            break;
        }
    }
    let report = RunReport {
        mode: opts.mode,
        termination,
        objective: lower,
        lower,
        upper,
        iterations: log,
        relaxed_rounds,
        started: opts.start.is_some(),
        cuts,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((first.design(&incumbent), report))
}

pub fn run_lshaped(
    inst: &Instance,
    scenarios: &[Scenario],
    opts: &LShapedOptions,
) -> Result<(NetworkDesign, RunReport)> {
    let stages = scenarios
        .iter()
        .map(|s| SecondStage::from_scenario(inst, s))
        .collect::<Result<Vec<_>>>()?;
    run_lshaped_stages(inst, stages, opts)
}

/// Per-scenario recourse values of a fixed design.
pub fn evaluate_design(inst: &Instance, design: &NetworkDesign, scenarios: &[Scenario]) -> Result<Vec<f64>> {
    let v = FirstStage::of(inst).vector(design);
    scenarios
        .par_iter()
        .map(|s| {
            let st = SecondStage::from_scenario(inst, s)?;
            Ok(solve_subproblem(&st, &v)?.objective)
        })
        .collect()
}
