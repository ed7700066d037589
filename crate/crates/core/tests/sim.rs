use evcs_core::desk::{reference_behavior, reference_choice, reference_instance};
use evcs_core::domain::{Instance, NetworkDesign};
use evcs_core::sim::{baseline_design, lot_weights, simulate, simulate_replication, summarize, Baseline, Outcome, SimConfig, SimEvent};
use evcs_core::stochastics::generate_scenario_set;

fn designs(inst: &Instance) -> Vec<NetworkDesign> {
    let sc = generate_scenario_set(inst, &reference_behavior(), &reference_choice(), 10, 3).unwrap();
    let w = lot_weights(inst, &sc);
    let mut out = vec![NetworkDesign::empty(inst.num_types(), inst.num_lots())];
    for budget in [3_450.0, 8_000.0, 27_600.0] {
        for b in [Baseline::Config1, Baseline::Config2] {
            out.push(baseline_design(&inst.with_budget(budget), b, budget, &w).unwrap());
        }
    }
    out
}

/// Highest number of overlapping served stays per (type, lot), by sweeping
/// start/end events; an end at t frees the unit before a start at t.
fn max_overlap(inst: &Instance, events: &[SimEvent]) -> Vec<Vec<u32>> {
    let mut peak = vec![vec![0u32; inst.num_lots()]; inst.num_types()];
    for n in 0..inst.num_types() {
        for j in 0..inst.num_lots() {
            let mut marks: Vec<(f64, i32)> = Vec::new();
            for e in events {
                if e.outcome == (Outcome::Served { charger_type: n, lot: j }) {
                    marks.push((e.arrival, 1));
                    marks.push((e.departure.min(inst.grid.close()), -1));
                }
            }
            marks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut cur = 0i32;
            for (_, d) in marks {
                cur += d;
                peak[n][j] = peak[n][j].max(cur as u32);
            }
        }
    }
    peak
}

#[test]
fn every_driver_has_exactly_one_outcome_and_capacity_holds() {
    let inst = reference_instance().with_budget(1e9);
    for design in designs(&inst) {
        for rep in 0..40 {
            let mut log = Vec::new();
            let m = simulate_replication(&inst, &design, &reference_behavior(), &reference_choice(), 17, rep, Some(&mut log)).unwrap();
            assert_eq!(m.served + m.declined + m.rejected, m.drivers);
            let served = log.iter().filter(|e| matches!(e.outcome, Outcome::Served { .. })).count();
            assert_eq!(served, m.served);
            let peak = max_overlap(&inst, &log);
            for n in 0..inst.num_types() {
                for j in 0..inst.num_lots() {
                    assert!(peak[n][j] <= design.count[n][j]);
                    assert_eq!(peak[n][j], m.peak_occupancy[n][j]);
                }
            }
            assert!((0.0..=100.0).contains(&m.accessibility));
            for u in m.utilization.iter().flatten() {
                assert!((0.0..=100.0).contains(u));
            }
            // Slots tile the day, so slot utilizations weighted by length give the daily one.
            for n in 0..inst.num_types() {
                let Some(day) = m.utilization[n] else { continue };
                let mut weighted = 0.0;
                for (t, s) in inst.grid.slots.iter().enumerate() {
                    let u = m.slot_utilization[n][t].unwrap();
                    assert!((0.0..=100.0 + 1e-9).contains(&u));
                    weighted += u * (s[1] - s[0]);
                }
                assert!((weighted / inst.grid.hours() - day).abs() < 1e-9);
            }
            assert!(m.charger_hours_used <= m.charger_hours_available + 1e-9);
        }
    }
}

#[test]
fn repeated_seeds_reproduce_metrics_bit_for_bit() {
    let inst = reference_instance().with_budget(1e9);
    let cfg = SimConfig { replications: 30, seed: 4, ..Default::default() };
    for design in designs(&inst) {
        let a = simulate(&inst, &design, &reference_behavior(), &reference_choice(), &cfg).unwrap();
        let b = simulate(&inst, &design, &reference_behavior(), &reference_choice(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(summarize(&a), summarize(&b));
    }
}

#[test]
fn identical_designs_see_identical_days() {
    let inst = reference_instance().with_budget(1e9);
    let d = designs(&inst).pop().unwrap();
    let cfg = SimConfig { replications: 20, seed: 9, ..Default::default() };
    let a = simulate(&inst, &d, &reference_behavior(), &reference_choice(), &cfg).unwrap();
    let b = simulate(&inst, &d.clone(), &reference_behavior(), &reference_choice(), &cfg).unwrap();
    assert_eq!(summarize(&a), summarize(&b));
    // Day sizes do not depend on the design.
    let empty = NetworkDesign::empty(inst.num_types(), inst.num_lots());
    let c = simulate(&inst, &empty, &reference_behavior(), &reference_choice(), &cfg).unwrap();
    assert!(a.iter().zip(&c).all(|(x, y)| x.drivers == y.drivers));
    assert!(c.iter().all(|m| m.served == 0 && m.utilization.iter().all(Option::is_none)));
}

#[test]
fn zero_replications_is_an_error() {
    let inst = reference_instance();
    let d = NetworkDesign::empty(inst.num_types(), inst.num_lots());
    let cfg = SimConfig { replications: 0, ..Default::default() };
    assert!(simulate(&inst, &d, &reference_behavior(), &reference_choice(), &cfg).is_err());
}
