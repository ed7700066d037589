//! Sample average approximation bounds, the expected-value problem and the
//! value of the stochastic solution.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{ChoiceConfig, UtilityTable};
use crate::domain::{DemandCell, FeasibleSetIndex, Instance, NetworkDesign};
use crate::error::{input, Result};
use crate::lshaped::evaluate_design;
use crate::solve::{solve, solve_from, SolverSettings};
use crate::stochastics::{derive_seed, generate_scenario_set, BehaviorConfig, Freeze, Scenario, Source};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaaConfig {
    /// Replications.
    pub k: usize,
    /// Scenarios per replication.
    pub l: usize,
    /// Scenarios used to estimate the candidate's value.
    pub l_prime: usize,
    /// Shared scenarios used to pick the candidate among replications.
    pub validation: usize,
    pub seed: u64,
    /// Draw every replication from the same stream (a degenerate check case).
    #[serde(default)]
    pub common_sample: bool,
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self { k: 5, l: 10, l_prime: 200, validation: 100, seed: 1, common_sample: false }
    }
}

impl SaaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(input("SAA needs K ≥ 2 replications"));
        }
        if self.l < 1 {
            return Err(input("SAA needs L ≥ 1"));
        }
        if self.l_prime < self.l || self.l_prime < 2 {
            return Err(input("SAA needs L' ≥ max(L, 2)"));
        }
        if self.validation < 1 {
            return Err(input("validation sample must be non-empty"));
        }
        Ok(())
    }
}

/// Bound estimates from replication optima and candidate evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaaStats {
    pub v_bar: f64,
    pub var_v_bar: f64,
    pub f: f64,
    pub var_f: f64,
    pub gap: f64,
    pub var_gap: f64,
}

impl SaaStats {
    pub fn sd_gap(&self) -> f64 {
        self.var_gap.sqrt()
    }
}

fn mean_and_var_of_mean(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n * (n - 1.0)))
}

/// `v` are the K replication optima, `phi` the L' recourse values of the candidate.
pub fn saa_from_samples(v: &[f64], phi: &[f64]) -> Result<SaaStats> {
    if v.len() < 2 || phi.len() < 2 {
        return Err(input("need at least two replications and two evaluation scenarios"));
    }
    let (v_bar, var_v_bar) = mean_and_var_of_mean(v);
    let (f, var_f) = mean_and_var_of_mean(phi);
    Ok(SaaStats { v_bar, var_v_bar, f, var_f, gap: v_bar - f, var_gap: var_v_bar + var_f })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Replication {
    pub objective: f64,
    pub bound: f64,
    pub limited: bool,
    pub design: NetworkDesign,
    /// Mean value on the shared validation sample.
    pub validation_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaaReport {
    pub config: SaaConfig,
    pub replications: Vec<Replication>,
    pub candidate: usize,
    pub design: NetworkDesign,
    pub stats: SaaStats,
    /// Some replication stopped on a limit, so the upper estimate is not a valid bound.
    pub heuristic: bool,
}

pub fn saa_run(
    inst: &Instance,
    cfg: &SaaConfig,
    behavior: &BehaviorConfig,
    choice: &ChoiceConfig,
    solver: &SolverSettings,
) -> Result<SaaReport> {
    cfg.validate()?;
    let validation = generate_scenario_set(inst, behavior, choice, cfg.validation, derive_seed(cfg.seed, 1 << 32))?;
    let replications = (0..cfg.k)
        .into_par_iter()
        .map(|r| {
            let stream = if cfg.common_sample { 1 } else { r as u64 + 1 };
            let sample = generate_scenario_set(inst, behavior, choice, cfg.l, derive_seed(cfg.seed, stream))?;
            let s = solve(inst, &sample, solver)?;
            let vals = evaluate_design(inst, &s.design, &validation)?;
            Ok(Replication {
                objective: s.objective,
                bound: s.bound,
                limited: s.limited,
                design: s.design,
                validation_value: vals.iter().sum::<f64>() / vals.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut candidate = 0;
    for (r, rep) in replications.iter().enumerate() {
        if rep.validation_value > replications[candidate].validation_value {
            candidate = r;
        }
    }
    let design = replications[candidate].design.clone();
    let eval = generate_scenario_set(inst, behavior, choice, cfg.l_prime, derive_seed(cfg.seed, 2 << 32))?;
    let phi = evaluate_design(inst, &design, &eval)?;
    let v: Vec<f64> = replications.iter().map(|r| r.objective).collect();
    let stats = saa_from_samples(&v, &phi)?;
    Ok(SaaReport {
        config: cfg.clone(),
        heuristic: replications.iter().any(|r| r.limited),
        replications,
        candidate,
        design,
        stats,
    })
}

/// One scenario whose demand is the probability-weighted mean of the inputs.
///
/// Demand is pooled per (slot pair, building, walkable lot set) over the union
/// of sets; utilities at each (type, lot) are averaged over the scenarios where
/// that entry exists, with weights renormalized over those scenarios.
pub fn mean_scenario(inst: &Instance, scenarios: &[Scenario]) -> Result<Scenario> {
    let first = scenarios.first().ok_or_else(|| input("no scenarios"))?;
    let (nt, nl) = (inst.num_types(), inst.num_lots());
    let mut pooled: BTreeMap<((usize, usize), usize), BTreeMap<Vec<usize>, f64>> = BTreeMap::new();
    let mut sets: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); inst.buildings.len()];
    for s in scenarios {
        for c in &s.cells {
            for &(m, cnt) in &c.groups {
                let lots = s.fsi.lots(c.building, m).to_vec();
                sets[c.building].insert(lots.clone());
                *pooled.entry((c.gamma, c.building)).or_default().entry(lots).or_default() += s.probability * cnt;
            }
        }
    }
    let fsi = FeasibleSetIndex { sets: sets.into_iter().map(|s| s.into_iter().collect()).collect() };
    let cells = pooled
        .into_iter()
        .map(|((gamma, building), groups)| {
            let groups: Vec<(usize, f64)> = groups
                .into_iter()
                .map(|(lots, d)| (fsi.id_of(building, &lots).expect("pooled set"), d))
                .collect();
            DemandCell { gamma, building, total: groups.iter().map(|g| g.1).sum(), groups }
        })
        .collect();

    let mut u = vec![vec![None; nl]; nt];
    let mut u_nc = vec![0.0; nl];
    let mut support = vec![0.0; nl];
    for j in 0..nl {
        let (mut w, mut nc) = (0.0, 0.0);
        for s in scenarios.iter().filter(|s| s.table.support[j] > 0.0) {
            w += s.probability;
            nc += s.probability * s.table.u_nc[j];
            support[j] += s.probability * s.table.support[j];
        }
        if w > 0.0 {
            u_nc[j] = nc / w;
        }
        for (n, row) in u.iter_mut().enumerate() {
            let (mut w, mut acc) = (0.0, 0.0);
            for s in scenarios {
                if let Some(val) = s.table.u[n][j].filter(|v| v.is_finite()) {
                    w += s.probability;
                    acc += s.probability * val;
                }
            }
            if w > 0.0 {
                row[j] = Some(acc / w);
            }
        }
    }
    let mean = |f: &dyn Fn(&Scenario) -> usize| -> usize {
        scenarios.iter().map(|s| s.probability * f(s) as f64).sum::<f64>().round() as usize
    };
    Ok(Scenario {
        id: 0,
        probability: 1.0,
        day_type: first.day_type,
        season: first.season,
        generated: mean(&|s| s.generated),
        lost_demand: mean(&|s| s.lost_demand),
        drivers: Vec::new(),
        cells,
        fsi,
        table: UtilityTable { u, u_nc, support },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvSolution {
    pub design: NetworkDesign,
    pub objective: f64,
}

pub fn expected_value_problem(inst: &Instance, scenarios: &[Scenario], solver: &SolverSettings) -> Result<EvSolution> {
    let mean = mean_scenario(inst, scenarios)?;
    let s = solve(inst, std::slice::from_ref(&mean), solver)?;
    Ok(EvSolution { design: s.design, objective: s.objective })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VssReport {
    pub rp: f64,
    pub ev: f64,
    pub eev: f64,
    pub vss: f64,
    /// `None` when EEV is zero.
    pub vss_percent: Option<f64>,
    pub rp_design: NetworkDesign,
    pub ev_design: NetworkDesign,
}

/// The recourse problem starts from the EV design, so RP ≥ EEV holds even
/// when the decomposition stops at its tolerance.
pub fn vss(inst: &Instance, scenarios: &[Scenario], solver: &SolverSettings) -> Result<VssReport> {
    let ev = expected_value_problem(inst, scenarios, solver)?;
    let phi = evaluate_design(inst, &ev.design, scenarios)?;
    let eev: f64 = scenarios.iter().zip(&phi).map(|(s, f)| s.probability * f).sum();
    let rp = solve_from(inst, scenarios, solver, Some(&ev.design))?;
    let vss = rp.objective - eev;
    Ok(VssReport {
        rp: rp.objective,
        ev: ev.objective,
        eev,
        vss,
        vss_percent: (eev != 0.0).then(|| 100.0 * vss / eev),
        rp_design: rp.design,
        ev_design: ev.design,
    })
}

pub fn source_name(s: Source) -> &'static str {
    match s {
        Source::Arrival => "arrival",
        Source::Dwell => "dwell",
        Source::Soc => "soc",
        Source::Walk => "walk",
        Source::Traffic => "traffic",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    /// `all`, or the one source left random.
    pub label: String,
    pub report: VssReport,
}

/// VSS with every source random, then with exactly one source random and the
/// rest frozen at their means. All runs share the seed, so draws are common.
pub fn ablation(
    inst: &Instance,
    behavior: &BehaviorConfig,
    choice: &ChoiceConfig,
    count: usize,
    seed: u64,
    solver: &SolverSettings,
) -> Result<Vec<AblationRow>> {
    let mut runs: Vec<(String, Freeze)> = vec![("all".into(), Freeze::default())];
    runs.extend(Source::ALL.iter().map(|&s| (source_name(s).to_string(), Freeze::all_but(s))));
    runs.into_iter()
        .map(|(label, freeze)| {
            let cfg = BehaviorConfig { freeze, ..behavior.clone() };
            let sc = generate_scenario_set(inst, &cfg, choice, count, seed)?;
            Ok(AblationRow { label, report: vss(inst, &sc, solver)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_arithmetic() {
        let s = saa_from_samples(&[230.78, 230.78], &[224.40, 224.40]).unwrap();
        assert!((s.gap - 6.38).abs() < 1e-9);
        assert_eq!(s.var_v_bar, 0.0);
    }

    #[test]
    fn rejects_tiny_samples() {
        assert!(saa_from_samples(&[1.0], &[1.0, 2.0]).is_err());
        assert!(SaaConfig { k: 1, ..Default::default() }.validate().is_err());
        assert!(SaaConfig { l_prime: 5, ..Default::default() }.validate().is_err());
    }
}
