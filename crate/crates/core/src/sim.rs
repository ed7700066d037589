//! Day-level replay of driver arrivals against a fixed design, and the two
//! rule-of-thumb baseline designs it is compared with.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::ChoiceConfig;
use crate::domain::{DriverRecord, Instance, Level, NetworkDesign};
use crate::error::{input, Result};
use crate::solve::{solve_from, SolverSettings};
use crate::stochastics::{derive_seed, generate_scenario, BehaviorConfig, RngStream, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    ChoiceAware,
    /// Level 2 only.
    Config1,
    /// Level 2 on 80% of each lot's installed units, level 1 on the rest.
    Config2,
}

impl std::str::FromStr for Baseline {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "choice-aware" => Ok(Baseline::ChoiceAware),
            "config1" => Ok(Baseline::Config1),
            "config2" => Ok(Baseline::Config2),
            _ => Err(format!("unknown baseline `{s}` (expected choice-aware, config1 or config2)")),
        }
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Baseline::ChoiceAware => "choice-aware",
            Baseline::Config1 => "config1",
            Baseline::Config2 => "config2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub replications: usize,
    pub baseline: Baseline,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { replications: 200, baseline: Baseline::ChoiceAware, seed: 1 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(input("replications must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Outcome {
    Served { charger_type: usize, lot: usize },
    /// Picked the outside option while a charger was free for them.
    Declined,
    /// Wanted to charge but nothing in reach was free, or nothing in reach exists.
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub driver: usize,
    pub building: usize,
    pub arrival: f64,
    pub departure: f64,
    /// Full alternatives drawn before the final outcome.
    pub refused: usize,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Drivers of the day, including those with no walkable lot.
    pub drivers: usize,
    pub served: usize,
    pub declined: usize,
    pub rejected: usize,
    /// Percent of drivers served.
    pub accessibility: f64,
    /// Percent of installed charger-hours occupied, per charger type; `None`
    /// when nothing of that type is installed.
    pub utilization: Vec<Option<f64>>,
    pub charger_hours_used: f64,
    pub charger_hours_available: f64,
    /// Lot-to-building miles summed over served drivers.
    pub walk_total: f64,
    pub walk_per_person: f64,
    /// Highest simultaneous occupancy, `[n][j]`.
    pub peak_occupancy: Vec<Vec<u32>>,
    /// Percent of installed charger-hours occupied within each time slot, `[n][t]`.
    pub slot_utilization: Vec<Vec<Option<f64>>>,
}

/// Replays one day. `lost` drivers had no walkable lot and count as rejected.
///
/// Each driver draws from the logit over installed (type, lot) options in
/// reach plus not charging; a full draw is struck and the draw repeated.
pub fn simulate_day(
    inst: &Instance,
    design: &NetworkDesign,
    drivers: &[DriverRecord],
    lost: usize,
    rng: &mut impl Rng,
    mut log: Option<&mut Vec<SimEvent>>,
) -> Result<SimMetrics> {
    let bad = design.check(inst);
    if !bad.is_empty() {
        let msg: Vec<String> = bad.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
        return Err(input(format!("design: {}", msg.join("; "))));
    }
    if drivers.windows(2).any(|w| w[1].arrival < w[0].arrival) {
        return Err(input("drivers must be sorted by arrival"));
    }
    let (nt, nl) = (inst.num_types(), inst.num_lots());
    let (open, close) = (inst.grid.open(), inst.grid.close());
    // Departure times of the units in use.
    let mut busy: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); nl]; nt];
    let mut peak = vec![vec![0u32; nl]; nt];
    let mut used = vec![0.0; nt];
    let mut slot_used = vec![vec![0.0; inst.grid.num_slots()]; nt];
    let (mut served, mut declined, mut rejected) = (0, 0, lost);
    let mut walk_total = 0.0;

    for (i, d) in drivers.iter().enumerate() {
        for row in busy.iter_mut() {
            for units in row.iter_mut() {
                units.retain(|&t| t > d.arrival);
            }
        }
        // Weights relative to the best alternative; the last entry is not charging.
        let mut alts: Vec<(usize, usize)> = Vec::new();
        for &j in &d.feasible_lots {
            for n in 0..nt {
                if design.count[n][j] > 0 {
                    alts.push((n, j));
                }
            }
        }
        let top = alts.iter().map(|&(n, _)| d.utilities[n]).fold(d.no_charge_utility, f64::max);
        let mut weight: Vec<f64> = alts.iter().map(|&(n, _)| (d.utilities[n] - top).exp()).collect();
        let nc_weight = (d.no_charge_utility - top).exp();

        let mut refused = 0;
        let outcome = if alts.is_empty() {
            Outcome::Rejected
        } else {
            loop {
                let total = nc_weight + weight.iter().sum::<f64>();
                let mut u = rng.random::<f64>() * total;
                let pick = weight.iter().position(|&w| {
                    if w > 0.0 && u < w {
                        true
                    } else {
                        u -= w;
                        false
                    }
                });
                match pick {
                    None if refused > 0 => break Outcome::Rejected,
                    None => break Outcome::Declined,
                    Some(a) => {
                        let (n, j) = alts[a];
                        if (busy[n][j].len() as u32) < design.count[n][j] {
                            break Outcome::Served { charger_type: n, lot: j };
                        }
                        weight[a] = 0.0;
                        refused += 1;
                    }
                }
            }
        };
        match outcome {
            Outcome::Served { charger_type: n, lot: j } => {
                let end = d.departure.min(close);
                busy[n][j].push(end);
                peak[n][j] = peak[n][j].max(busy[n][j].len() as u32);
                let start = d.arrival.max(open);
                used[n] += (end - start).max(0.0);
                for (t, slot) in inst.grid.slots.iter().enumerate() {
                    slot_used[n][t] += (end.min(slot[1]) - start.max(slot[0])).max(0.0);
                }
                walk_total += inst.distance(d.building, j);
                served += 1;
            }
            Outcome::Declined => declined += 1,
            Outcome::Rejected => rejected += 1,
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(SimEvent {
                driver: i,
                building: d.building,
                arrival: d.arrival,
                departure: d.departure,
                refused,
                outcome,
            });
        }
    }

    let hours = close - open;
    let available: Vec<f64> = (0..nt).map(|n| design.total_of_type(n) as f64 * hours).collect();
    let total = drivers.len() + lost;
    Ok(SimMetrics {
        drivers: total,
        served,
        declined,
        rejected,
        accessibility: if total == 0 { 0.0 } else { 100.0 * served as f64 / total as f64 },
        utilization: (0..nt).map(|n| (available[n] > 0.0).then(|| 100.0 * used[n] / available[n])).collect(),
        charger_hours_used: used.iter().sum(),
        charger_hours_available: available.iter().sum(),
        walk_total,
        walk_per_person: if served == 0 { 0.0 } else { walk_total / served as f64 },
        peak_occupancy: peak,
        slot_utilization: (0..nt)
            .map(|n| {
                let units = design.total_of_type(n) as f64;
                let grid = &inst.grid.slots;
                (0..grid.len())
                    .map(|t| (units > 0.0).then(|| 100.0 * slot_used[n][t] / (units * (grid[t][1] - grid[t][0]))))
                    .collect()
            })
            .collect(),
    })
}

/// Day `rep` of a simulation run, drivers in generation order. The drivers
/// come from stream `rep` of the seed and the choice draws from stream `rep`
/// of a derived seed, so every design sees identical days and uniforms.
pub fn replication_day(
    inst: &Instance,
    behavior: &BehaviorConfig,
    choice: &ChoiceConfig,
    seed: u64,
    rep: usize,
) -> Result<(Scenario, ChaCha8Rng)> {
    let day = generate_scenario(inst, behavior, choice, rep, &mut RngStream::new(seed, rep as u64))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    rng.set_stream(rep as u64);
    Ok((day, rng))
}

pub fn simulate(
    inst: &Instance,
    design: &NetworkDesign,
    behavior: &BehaviorConfig,
    choice: &ChoiceConfig,
    cfg: &SimConfig,
) -> Result<Vec<SimMetrics>> {
    cfg.validate()?;
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| simulate_replication(inst, design, behavior, choice, cfg.seed, rep, None))
        .collect()
}

/// One replication; event driver indices follow arrival order.
pub fn simulate_replication(
    inst: &Instance,
    design: &NetworkDesign,
    behavior: &BehaviorConfig,
    choice: &ChoiceConfig,
    seed: u64,
    rep: usize,
    log: Option<&mut Vec<SimEvent>>,
) -> Result<SimMetrics> {
    let (mut day, mut rng) = replication_day(inst, behavior, choice, seed, rep)?;
    day.drivers.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    simulate_day(inst, design, &day.drivers, day.lost_demand, &mut rng, log)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    /// Replications the value was defined in.
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        if n == 0 {
            return Stat { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, sd, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub replications: usize,
    pub accessibility: Stat,
    /// `None` for a type installed nowhere.
    pub utilization: Vec<Option<Stat>>,
    /// `[n][t]`, as `utilization`.
    pub slot_utilization: Vec<Vec<Option<Stat>>>,
    pub charger_hours_used: Stat,
    pub charger_hours_available: Stat,
    pub walk_total: Stat,
    pub walk_per_person: Stat,
    pub served: Stat,
    pub declined: Stat,
    pub rejected: Stat,
}

pub fn summarize(runs: &[SimMetrics]) -> SimSummary {
    let nt = runs.first().map_or(0, |r| r.utilization.len());
    let stat = |f: &dyn Fn(&SimMetrics) -> f64| Stat::of(runs.iter().map(f));
    let defined = |v: Vec<f64>| (!v.is_empty()).then(|| Stat::of(v));
    SimSummary {
        replications: runs.len(),
        accessibility: stat(&|r| r.accessibility),
        utilization: (0..nt)
            .map(|n| defined(runs.iter().filter_map(|r| r.utilization[n]).collect()))
            .collect(),
        slot_utilization: (0..nt)
            .map(|n| {
                let nslots = runs[0].slot_utilization[n].len();
                (0..nslots).map(|t| defined(runs.iter().filter_map(|r| r.slot_utilization[n][t]).collect())).collect()
            })
            .collect(),
        charger_hours_used: stat(&|r| r.charger_hours_used),
        charger_hours_available: stat(&|r| r.charger_hours_available),
        walk_total: stat(&|r| r.walk_total),
        walk_per_person: stat(&|r| r.walk_per_person),
        served: stat(&|r| r.served as f64),
        declined: stat(&|r| r.declined as f64),
        rejected: stat(&|r| r.rejected as f64),
    }
}

/// Expected drivers with each lot in walking reach.
pub fn lot_weights(inst: &Instance, scenarios: &[Scenario]) -> Vec<f64> {
    let mut w = vec![0.0; inst.num_lots()];
    for s in scenarios {
        for c in &s.cells {
            for &(m, cnt) in &c.groups {
                for &j in s.fsi.lots(c.building, m) {
                    w[j] += s.probability * cnt;
                }
            }
        }
    }
    w
}

/// Rule-of-thumb design filling lots in descending `weights` (lower index on
/// ties) until the budget runs out.
pub fn baseline_design(inst: &Instance, which: Baseline, budget: f64, weights: &[f64]) -> Result<NetworkDesign> {
    if weights.len() != inst.num_lots() {
        return Err(input("one weight per lot expected"));
    }
    let l2 = inst.type_of_level(Level::L2).ok_or_else(|| input("baseline needs a level-2 charger type"))?;
    let mut count = vec![vec![0u32; inst.num_lots()]; inst.num_types()];
    let mut order: Vec<usize> = (0..inst.num_lots()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut left = budget;
    let c2 = inst.chargers[l2].install_cost;
    match which {
        Baseline::ChoiceAware => return Err(input("the choice-aware design comes from the optimizer")),
        Baseline::Config1 => {
            for j in order {
                let cap = inst.lots[j].capacity.max(0) as u32;
                let t = cap.min((left / c2 + 1e-9).floor().max(0.0) as u32);
                count[l2][j] = t;
                left -= t as f64 * c2;
            }
        }
        Baseline::Config2 => {
            let l1 = inst.type_of_level(Level::L1).ok_or_else(|| input("config2 needs a level-1 charger type"))?;
            let c1 = inst.chargers[l1].install_cost;
            let split = |t: u32| {
                let n2 = (0.8 * t as f64 + 1e-9).floor() as u32;
                (n2, t - n2)
            };
            for j in order {
                let cap = inst.lots[j].capacity.max(0) as u32;
                let fits = |t: u32| {
                    let (n2, n1) = split(t);
                    n2 as f64 * c2 + n1 as f64 * c1 <= left + 1e-9
                };
                let t = (0..=cap).rev().find(|&t| fits(t)).unwrap_or(0);
                let (n2, n1) = split(t);
                count[l2][j] = n2;
                count[l1][j] = n1;
                left -= n2 as f64 * c2 + n1 as f64 * c1;
            }
        }
    }
    Ok(NetworkDesign::from_counts(count))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub budget: f64,
    pub baseline: Baseline,
    pub design: NetworkDesign,
    pub summary: SimSummary,
}

/// Choice-aware design and both baselines per budget, all simulated on the same days.
pub fn compare(
    inst: &Instance,
    planning: &[Scenario],
    behavior: &BehaviorConfig,
    choice: &ChoiceConfig,
    budgets: &[f64],
    cfg: &SimConfig,
    solver: &SolverSettings,
) -> Result<Vec<ComparisonRow>> {
    let weights = lot_weights(inst, planning);
    let mut rows = Vec::new();
    let mut previous: Option<NetworkDesign> = None;
    for &budget in budgets {
        let at = inst.with_budget(budget);
        // The last design stays feasible when budgets ascend; it seeds the next solve.
        let optimized = solve_from(&at, planning, solver, previous.as_ref())?.design;
        previous = Some(optimized.clone());
        for which in [Baseline::ChoiceAware, Baseline::Config1, Baseline::Config2] {
            let design = match which {
                Baseline::ChoiceAware => optimized.clone(),
                _ => baseline_design(&at, which, budget, &weights)?,
            };
            let runs = simulate(&at, &design, behavior, choice, cfg)?;
            rows.push(ComparisonRow { budget, baseline: which, design, summary: summarize(&runs) });
        }
    }
    Ok(rows)
}
