//! One entry point over the three solution methods.

use std::time::Duration;

use evcs_lp::LpStatus;
use serde::{Deserialize, Serialize};

use crate::domain::{Instance, NetworkDesign};
use crate::error::Result;
use crate::lshaped::{run_lshaped, CutMode, LShapedOptions, RunReport, Termination};
use crate::model::{build_dep, solve_dep, FirstStage, SolveOptions};
use crate::stochastics::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dep,
    SingleCut,
    MultiCut,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dep" => Ok(Method::Dep),
            "single-cut" | "single" => Ok(Method::SingleCut),
            "multi-cut" | "multi" => Ok(Method::MultiCut),
            _ => Err(format!("unknown method `{s}` (expected dep, single-cut or multi-cut)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Dep => "dep",
            Method::SingleCut => "single-cut",
            Method::MultiCut => "multi-cut",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSettings {
    pub method: Method,
    /// Absolute convergence tolerance of the decomposition.
    pub epsilon: f64,
    /// Relative gap tolerance of the deterministic equivalent.
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { method: Method::MultiCut, epsilon: 1e-4, gap_tol: 1e-9, time_limit: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solved {
    pub design: NetworkDesign,
    pub objective: f64,
    pub bound: f64,
    /// A time limit stopped the solve before its tolerance was met.
    pub limited: bool,
    pub seconds: f64,
    pub nodes: usize,
    pub report: Option<RunReport>,
}

impl Solved {
    pub fn gap(&self) -> f64 {
        self.bound - self.objective
    }
}

pub fn solve(inst: &Instance, scenarios: &[Scenario], s: &SolverSettings) -> Result<Solved> {
    solve_from(inst, scenarios, s, None)
}

/// As [`solve`], with a known design the decomposition starts from. The
/// deterministic equivalent solves to a tight relative gap and ignores it.
pub fn solve_from(
    inst: &Instance,
    scenarios: &[Scenario],
    s: &SolverSettings,
    start: Option<&NetworkDesign>,
) -> Result<Solved> {
    match s.method {
        Method::Dep => {
            let (p, cat) = build_dep(inst, scenarios)?;
            let r = solve_dep(
                &p,
                &cat,
                &SolveOptions { gap_tol: Some(s.gap_tol), time_limit: s.time_limit, node_limit: None, ..Default::default() },
            )?;
            Ok(Solved {
                design: r.design,
                objective: r.objective,
                bound: r.best_bound,
                limited: r.status != LpStatus::Optimal,
                seconds: r.seconds,
                nodes: r.nodes,
                report: None,
            })
        }
        Method::SingleCut | Method::MultiCut => {
            let mode = if s.method == Method::SingleCut { CutMode::Single } else { CutMode::Multi };
            let (design, r) = run_lshaped(
                inst,
                scenarios,
                &LShapedOptions {
                    mode,
                    epsilon: s.epsilon,
                    time_limit: s.time_limit,
                    start: start.filter(|d| d.check(inst).is_empty()).map(|d| FirstStage::of(inst).vector(d)),
                    ..Default::default()
                },
            )?;
            Ok(Solved {
                design,
                objective: r.objective,
                bound: r.upper,
                limited: r.termination != Termination::Converged,
                seconds: r.seconds,
                nodes: r.iterations.len(),
                report: Some(r),
            })
        }
    }
}
