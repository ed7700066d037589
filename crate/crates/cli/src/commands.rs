use std::path::Path;

use anyhow::{bail, Context as _, Result};
use evcs_core::desk::BUDGET_SWEEP;
use evcs_core::domain::{DriverRecord, Instance, Level, NetworkDesign};
use evcs_core::lshaped::evaluate_design;
use evcs_core::model::build_dep;
use evcs_core::saa::{ablation, saa_run, vss, VssReport};
use evcs_core::sim::{
    baseline_design, compare, lot_weights, simulate_replication, summarize, Baseline, SimEvent, SimMetrics, Stat,
};
use evcs_core::solve::{solve, solve_from, Solved};
use evcs_core::stochastics::{generate_scenario_set, Scenario};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Context;
use crate::output::{num, opt, write_json, Csv, Lines};
use crate::{Analyze, Status};

fn level_name(inst: &Instance, n: usize) -> String {
    format!("{:?}", inst.chargers[n].level)
}

fn planning(ctx: &Context, inst: &Instance) -> Result<Vec<Scenario>> {
    Ok(generate_scenario_set(inst, &ctx.behavior, &ctx.choice, ctx.cfg.run.scenarios, ctx.cfg.run.seed)?)
}

fn expected(scenarios: &[Scenario], values: &[f64]) -> f64 {
    scenarios.iter().zip(values).map(|(s, v)| s.probability * v).sum()
}

fn done(path: &Path) {
    eprintln!("wrote {}", path.display());
}

// --- generate -------------------------------------------------------------

#[derive(Serialize)]
struct DriverLine<'a> {
    scenario: usize,
    driver: &'a DriverRecord,
}

#[derive(Serialize)]
struct SummaryLine {
    scenario: usize,
    summary: ScenarioSummary,
}

#[derive(Serialize)]
struct ScenarioSummary {
    probability: f64,
    day_type: evcs_core::stochastics::DayType,
    season: evcs_core::stochastics::Season,
    generated: usize,
    lost_demand: usize,
    drivers: usize,
    total_demand: f64,
}

pub fn generate(ctx: &Context) -> Result<Status> {
    let sc = planning(ctx, &ctx.inst)?;
    let path = ctx.out("scenarios.jsonl")?;
    let mut w = Lines::create(ctx, "generate", &path)?;
    for s in &sc {
        for d in &s.drivers {
            w.line(&DriverLine { scenario: s.id, driver: d })?;
        }
        w.line(&SummaryLine {
            scenario: s.id,
            summary: ScenarioSummary {
                probability: s.probability,
                day_type: s.day_type,
                season: s.season,
                generated: s.generated,
                lost_demand: s.lost_demand,
                drivers: s.drivers.len(),
                total_demand: s.total_demand(),
            },
        })?;
    }
    w.finish()?;
    done(&path);
    let drivers: usize = sc.iter().map(|s| s.drivers.len()).sum();
    println!("{} scenarios, {drivers} drivers with a walkable lot", sc.len());
    Ok(Status::Done)
}

// --- solve ----------------------------------------------------------------

#[derive(Serialize)]
struct SolutionFile<'a> {
    method: String,
    status: &'static str,
    x: &'a [Vec<bool>],
    z: &'a [Vec<u32>],
    objective: f64,
    bound: f64,
    gap: f64,
    gap_percent: Option<f64>,
    seconds: f64,
    nodes: usize,
    cuts: Option<usize>,
    cost: f64,
    budget: f64,
    scenarios: usize,
}

fn status_of(s: &Solved) -> Status {
    if s.limited {
        Status::Limit
    } else {
        Status::Done
    }
}

fn solve_outputs(ctx: &Context, s: &Solved, scenarios: usize) -> Result<()> {
    let gap = s.gap().max(0.0);
    let path = ctx.out("solution.json")?;
    write_json(
        ctx,
        "solve",
        &path,
        &SolutionFile {
            method: ctx.cfg.run.method.to_string(),
            status: if s.limited { "limit" } else { "optimal" },
            x: &s.design.open,
            z: &s.design.count,
            objective: s.objective,
            bound: s.bound,
            gap,
            gap_percent: (s.objective.abs() > 0.0).then(|| 100.0 * gap / s.objective.abs()),
            seconds: ctx.seconds(s.seconds),
            nodes: s.nodes,
            cuts: s.report.as_ref().map(|r| r.cuts.len()),
            cost: s.design.cost(&ctx.inst),
            budget: ctx.inst.budget,
            scenarios,
        },
    )?;
    done(&path);
    if let Some(r) = &s.report {
        let path = ctx.out("iterations.csv")?;
        let mut w = Csv::create(ctx, "solve", &path, &["iteration", "LB", "UB", "cuts", "seconds"])?;
        for it in &r.iterations {
            w.row([
                it.iteration.to_string(),
                num(it.lower),
                num(it.upper),
                it.cuts.to_string(),
                num(ctx.seconds(it.seconds)),
            ])?;
        }
        w.finish()?;
        done(&path);
    }
    Ok(())
}

pub fn solve_cmd(ctx: &Context, mps: Option<&Path>) -> Result<Status> {
    let sc = planning(ctx, &ctx.inst)?;
    if let Some(p) = mps {
        let (lp, _) = build_dep(&ctx.inst, &sc)?;
        std::fs::write(p, evcs_lp::mps::to_mps(&lp, "EVCSDEP")).with_context(|| format!("cannot write {}", p.display()))?;
        done(p);
    }
    let s = solve(&ctx.inst, &sc, &ctx.solver())?;
    solve_outputs(ctx, &s, sc.len())?;
    println!(
        "{}: objective {:.6}, bound {:.6}, {} units, cost {}{}",
        ctx.cfg.run.method,
        s.objective,
        s.bound,
        s.design.total_units(),
        s.design.cost(&ctx.inst),
        if s.limited { " (stopped on a limit)" } else { "" }
    );
    Ok(status_of(&s))
}

// --- analyze --------------------------------------------------------------

fn vss_fields(r: &VssReport) -> Vec<String> {
    vec![num(r.rp), num(r.ev), num(r.eev), num(r.vss), opt(r.vss_percent)]
}

pub fn analyze(ctx: &Context, a: &Analyze) -> Result<Status> {
    let solver = ctx.solver();
    match a {
        Analyze::Saa { .. } => {
            let cfg = ctx.saa();
            let r = saa_run(&ctx.inst, &cfg, &ctx.behavior, &ctx.choice, &solver)?;
            let path = ctx.out("saa.csv")?;
            let mut w = Csv::create(ctx, "analyze saa", &path, &["S", "P", "UB", "LB", "Gap", "SD"])?;
            let s = &r.stats;
            w.row([cfg.l.to_string(), cfg.k.to_string(), num(s.v_bar), num(s.f), num(s.gap), num(s.sd_gap())])?;
            w.finish()?;
            done(&path);
            let path = ctx.out("saa_replications.csv")?;
            let mut w = Csv::create(
                ctx,
                "analyze saa",
                &path,
                &["replication", "objective", "bound", "validation_value", "limited", "candidate"],
            )?;
            for (k, rep) in r.replications.iter().enumerate() {
                w.row([
                    k.to_string(),
                    num(rep.objective),
                    num(rep.bound),
                    num(rep.validation_value),
                    rep.limited.to_string(),
                    (k == r.candidate).to_string(),
                ])?;
            }
            w.finish()?;
            done(&path);
            let path = ctx.out("saa.json")?;
            write_json(ctx, "analyze saa", &path, &r)?;
            done(&path);
            println!(
                "UB {:.6} (var {:.3e}), LB {:.6} (var {:.3e}), gap {:.6} ± {:.6}{}",
                s.v_bar,
                s.var_v_bar,
                s.f,
                s.var_f,
                s.gap,
                s.sd_gap(),
                if r.heuristic { "; a replication hit a limit, bounds are heuristic" } else { "" }
            );
            Ok(if r.heuristic { Status::Limit } else { Status::Done })
        }
        Analyze::Vss { identical } => {
            let mut sc = planning(ctx, &ctx.inst)?;
            if *identical {
                let first = sc[0].clone();
                for (i, s) in sc.iter_mut().enumerate() {
                    *s = Scenario { id: i, ..first.clone() };
                    s.probability = 1.0 / ctx.cfg.run.scenarios as f64;
                }
            }
            let r = vss(&ctx.inst, &sc, &solver)?;
            let path = ctx.out("vss.csv")?;
            let mut w = Csv::create(ctx, "analyze vss", &path, &["RP", "EV", "EEV", "VSS", "VSS_percent"])?;
            w.row(vss_fields(&r))?;
            w.finish()?;
            done(&path);
            let path = ctx.out("vss.json")?;
            write_json(ctx, "analyze vss", &path, &r)?;
            done(&path);
            println!("RP {:.6}, EEV {:.6}, VSS {:.6} ({})", r.rp, r.eev, r.vss, percent(r.vss_percent));
            Ok(Status::Done)
        }
        Analyze::Ablation => {
            let rows =
                ablation(&ctx.inst, &ctx.behavior, &ctx.choice, ctx.cfg.run.scenarios, ctx.cfg.run.seed, &solver)?;
            let path = ctx.out("ablation.csv")?;
            let mut w =
                Csv::create(ctx, "analyze ablation", &path, &["series", "RP", "EV", "EEV", "VSS", "VSS_percent"])?;
            for row in &rows {
                let mut f = vec![row.label.clone()];
                f.extend(vss_fields(&row.report));
                w.row(f)?;
                println!("{:<8} VSS {:.6} ({})", row.label, row.report.vss, percent(row.report.vss_percent));
            }
            w.finish()?;
            done(&path);
            Ok(Status::Done)
        }
    }
}

fn percent(p: Option<f64>) -> String {
    p.map_or("undefined %".into(), |v| format!("{v:.2}%"))
}

// --- simulate -------------------------------------------------------------

#[derive(Serialize)]
struct EventLine<'a> {
    replication: usize,
    #[serde(flatten)]
    event: &'a SimEvent,
}

fn read_design(inst: &Instance, path: &Path) -> Result<NetworkDesign> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read design {}", path.display()))?;
    let d: NetworkDesign =
        serde_json::from_str(&text).with_context(|| format!("design {} needs `x` and `z` arrays", path.display()))?;
    let lens: Vec<usize> = d.open.iter().map(Vec::len).chain(d.count.iter().map(Vec::len)).collect();
    if d.open.len() != inst.num_types() || d.count.len() != inst.num_types() || lens.iter().any(|&l| l != inst.num_lots()) {
        bail!("design {} is not {} types × {} lots", path.display(), inst.num_types(), inst.num_lots());
    }
    let bad = d.check(inst);
    if !bad.is_empty() {
        let msg: Vec<String> = bad.iter().map(|v| v.to_string()).collect();
        bail!("design {}: {}", path.display(), msg.join("; "));
    }
    Ok(d)
}

fn metrics_columns(inst: &Instance) -> Vec<String> {
    let mut c: Vec<String> =
        ["replication", "drivers", "served", "declined", "rejected", "accessibility"].map(String::from).to_vec();
    c.extend((0..inst.num_types()).map(|n| format!("utilization_{}", level_name(inst, n))));
    c.extend(["charger_hours_used", "charger_hours_available", "walk_total", "walk_per_person"].map(String::from));
    c
}

fn metrics_row(rep: usize, m: &SimMetrics) -> Vec<String> {
    let mut f = vec![
        rep.to_string(),
        m.drivers.to_string(),
        m.served.to_string(),
        m.declined.to_string(),
        m.rejected.to_string(),
        num(m.accessibility),
    ];
    f.extend(m.utilization.iter().map(|u| opt(*u)));
    f.extend([m.charger_hours_used, m.charger_hours_available, m.walk_total, m.walk_per_person].map(num));
    f
}

pub fn simulate(ctx: &Context, design: Option<&Path>, events: bool) -> Result<Status> {
    let cfg = ctx.sim();
    let inst = &ctx.inst;
    let design = match (design, cfg.baseline) {
        (Some(p), _) => read_design(inst, p)?,
        (None, Baseline::ChoiceAware) => {
            eprintln!("no --design given; optimizing one first");
            solve(inst, &planning(ctx, inst)?, &ctx.solver())?.design
        }
        (None, which) => baseline_design(inst, which, inst.budget, &lot_weights(inst, &planning(ctx, inst)?))?,
    };
    let runs: Vec<(SimMetrics, Vec<SimEvent>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut log = Vec::new();
            let m = simulate_replication(
                inst,
                &design,
                &ctx.behavior,
                &ctx.choice,
                cfg.seed,
                rep,
                events.then_some(&mut log),
            )?;
            Ok((m, log))
        })
        .collect::<evcs_core::Result<_>>()?;

    let path = ctx.out("sim_metrics.csv")?;
    let cols = metrics_columns(inst);
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut w = Csv::create(ctx, "simulate", &path, &cols)?;
    for (rep, (m, _)) in runs.iter().enumerate() {
        w.row(metrics_row(rep, m))?;
    }
    w.finish()?;
    done(&path);
    if events {
        let path = ctx.out("events.jsonl")?;
        let mut w = Lines::create(ctx, "simulate", &path)?;
        for (rep, (_, log)) in runs.iter().enumerate() {
            for e in log {
                w.line(&EventLine { replication: rep, event: e })?;
            }
        }
        w.finish()?;
        done(&path);
    }
    let metrics: Vec<SimMetrics> = runs.into_iter().map(|(m, _)| m).collect();
    let summary = summarize(&metrics);
    let path = ctx.out("sim_summary.json")?;
    #[derive(Serialize)]
    struct Doc<'a> {
        design: &'a NetworkDesign,
        sim_seed: u64,
        summary: &'a evcs_core::sim::SimSummary,
    }
    write_json(ctx, "simulate", &path, &Doc { design: &design, sim_seed: cfg.seed, summary: &summary })?;
    done(&path);
    println!(
        "{} replications: accessibility {:.2}% ± {:.2}, walk per person {:.4} mi",
        summary.replications, summary.accessibility.mean, summary.accessibility.sd, summary.walk_per_person.mean
    );
    Ok(Status::Done)
}

// --- report ---------------------------------------------------------------

fn stat_pair(s: Option<&Stat>) -> [String; 2] {
    match s {
        Some(s) => [num(s.mean), num(s.sd)],
        None => [String::new(), String::new()],
    }
}

pub fn report(ctx: &Context, with_ablation: bool) -> Result<Status> {
    let inst = &ctx.inst;
    let budgets: Vec<f64> =
        if ctx.cfg.report.budgets.is_empty() { BUDGET_SWEEP.to_vec() } else { ctx.cfg.report.budgets.clone() };
    let l3 = inst.type_of_level(Level::L3);
    if !ctx.cfg.report.level3_prices.is_empty() && l3.is_none() {
        bail!("report.level3_prices: the instance has no level-3 charger type");
    }
    let solver = ctx.solver();
    let sc = planning(ctx, inst)?;
    eprintln!("budget sweep over {budgets:?} with {} planning scenarios", sc.len());
    let rows = compare(inst, &sc, &ctx.behavior, &ctx.choice, &budgets, &ctx.sim(), &solver)?;
    let nt = inst.num_types();
    let levels: Vec<String> = (0..nt).map(|n| level_name(inst, n)).collect();

    // Baseline comparison curves.
    let path = ctx.out("comparison.csv")?;
    let mut cols = vec!["budget".to_string(), "design".into(), "accessibility_mean".into(), "accessibility_sd".into()];
    for l in &levels {
        cols.push(format!("utilization_{l}_mean"));
        cols.push(format!("utilization_{l}_sd"));
    }
    cols.extend(["walk_total_mean", "walk_per_person_mean", "served_mean", "declined_mean", "rejected_mean"].map(String::from));
    let cols_ref: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut w = Csv::create(ctx, "report", &path, &cols_ref)?;
    for r in &rows {
        let s = &r.summary;
        let mut f = vec![num(r.budget), r.baseline.to_string(), num(s.accessibility.mean), num(s.accessibility.sd)];
        for n in 0..nt {
            f.extend(stat_pair(s.utilization[n].as_ref()));
        }
        f.extend([s.walk_total.mean, s.walk_per_person.mean, s.served.mean, s.declined.mean, s.rejected.mean].map(num));
        w.row(f)?;
    }
    w.finish()?;
    done(&path);

    // Accessibility and objective of the optimized design per budget.
    let path = ctx.out("accessibility_by_budget.csv")?;
    let mut cols = vec!["budget".to_string(), "objective".into(), "accessibility_mean".into(), "accessibility_sd".into()];
    cols.extend(levels.iter().map(|l| format!("utilization_{l}_mean")));
    let cols_ref: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut w = Csv::create(ctx, "report", &path, &cols_ref)?;
    for r in rows.iter().filter(|r| r.baseline == Baseline::ChoiceAware) {
        let obj = expected(&sc, &evaluate_design(inst, &r.design, &sc)?);
        let s = &r.summary;
        let mut f = vec![num(r.budget), num(obj), num(s.accessibility.mean), num(s.accessibility.sd)];
        f.extend((0..nt).map(|n| opt(s.utilization[n].map(|u| u.mean))));
        w.row(f)?;
        println!("budget {:>10}: objective {obj:.4}, accessibility {:.2}%", r.budget, s.accessibility.mean);
    }
    w.finish()?;
    done(&path);

    // Installed units per level.
    let path = ctx.out("chargers_by_budget.csv")?;
    let mut cols = vec!["budget".to_string(), "design".into()];
    cols.extend(levels.iter().map(|l| format!("units_{l}")));
    cols.extend(["cost".to_string(), "accessibility_mean".into()]);
    let cols_ref: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut w = Csv::create(ctx, "report", &path, &cols_ref)?;
    for r in &rows {
        let mut f = vec![num(r.budget), r.baseline.to_string()];
        f.extend((0..nt).map(|n| r.design.total_of_type(n).to_string()));
        f.extend([num(r.design.cost(inst)), num(r.summary.accessibility.mean)]);
        w.row(f)?;
    }
    w.finish()?;
    done(&path);

    // Utilization per time slot and level.
    let path = ctx.out("utilization_by_slot.csv")?;
    let mut w = Csv::create(
        ctx,
        "report",
        &path,
        &["budget", "design", "level", "slot", "slot_start", "slot_end", "utilization_mean", "utilization_sd"],
    )?;
    for r in &rows {
        for n in 0..nt {
            for (t, slot) in inst.grid.slots.iter().enumerate() {
                let [m, sd] = stat_pair(r.summary.slot_utilization[n][t].as_ref());
                w.row([num(r.budget), r.baseline.to_string(), levels[n].clone(), t.to_string(), num(slot[0]), num(slot[1]), m, sd])?;
            }
        }
    }
    w.finish()?;
    done(&path);

    if !ctx.cfg.report.level3_prices.is_empty() {
        let l3 = l3.expect("checked above");
        let path = ctx.out("level3_by_price.csv")?;
        let mut w = Csv::create(ctx, "report", &path, &["price_per_hour", "budget", "units_L3", "objective"])?;
        for &price in &ctx.cfg.report.level3_prices {
            let mut priced = inst.clone();
            priced.chargers[l3].price_per_hour = price;
            let mut previous: Option<NetworkDesign> = None;
            for &b in &budgets {
                let at = priced.with_budget(b);
                let psc = planning(ctx, &at)?;
                let s = solve_from(&at, &psc, &solver, previous.as_ref())?;
                let units = s.design.total_of_type(l3);
                w.row([num(price), num(b), units.to_string(), num(s.objective)])?;
                println!("level 3 at {price}/h, budget {b}: {units} units");
                previous = Some(s.design);
            }
        }
        w.finish()?;
        done(&path);
    }

    if with_ablation {
        let path = ctx.out("vss_by_budget.csv")?;
        let mut w =
            Csv::create(ctx, "report", &path, &["budget", "series", "RP", "EV", "EEV", "VSS", "VSS_percent"])?;
        for &b in &budgets {
            let at = inst.with_budget(b);
            for row in ablation(&at, &ctx.behavior, &ctx.choice, ctx.cfg.run.scenarios, ctx.cfg.run.seed, &solver)? {
                let mut f = vec![num(b), row.label.clone()];
                f.extend(vss_fields(&row.report));
                w.row(f)?;
            }
        }
        w.finish()?;
        done(&path);
    }
    Ok(Status::Done)
}

// --- utilities ------------------------------------------------------------

pub fn utilities_dump(ctx: &Context) -> Result<Status> {
    let inst = &ctx.inst;
    let sc = planning(ctx, inst)?;
    let path = ctx.out("utilities.csv")?;
    let mut cols = vec!["scenario".to_string(), "lot".into()];
    cols.extend((0..inst.num_types()).map(|n| level_name(inst, n)));
    cols.extend(["no_charge".to_string(), "support".into()]);
    let cols_ref: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut w = Csv::create(ctx, "utilities dump", &path, &cols_ref)?;
    for s in &sc {
        let t = &s.table;
        for j in 0..t.num_lots() {
            let mut f = vec![s.id.to_string(), j.to_string()];
            f.extend((0..t.num_types()).map(|n| opt(t.u[n][j])));
            f.extend([num(t.u_nc[j]), num(t.support[j])]);
            w.row(f)?;
        }
    }
    w.finish()?;
    done(&path);
    Ok(Status::Done)
}
