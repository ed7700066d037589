mod common;

use evcs_core::choice::UtilityTable;
use evcs_core::desk::{reference_choice, small_behavior, small_instance};
use evcs_core::domain::{Activity, Building, ChargerType, DemandCell, FeasibleSetIndex, Instance, Level, ParkingLot, Point, TimeGrid};
use evcs_core::lshaped::{make_cut, run_lshaped, solve_subproblem, CutMode, LShapedOptions, SubSolution, Termination};
use evcs_core::model::{build_dep, solve_dep, FirstStage, SecondStage, SolveOptions};
use evcs_core::stochastics::{generate_scenario_set, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample(seed: u64, count: usize) -> (Instance, Vec<Scenario>) {
    let inst = small_instance(seed);
    let sc = generate_scenario_set(&inst, &small_behavior(&inst), &reference_choice(), count, seed).unwrap();
    (inst, sc)
}

/// One lot, one type, one cell of two drivers present in both slots of its stay.
fn toy_stage(share: f64) -> SecondStage {
    let inst = Instance {
        chargers: vec![ChargerType { level: Level::L2, install_cost: 1.0, power_kw: 6.6, price_per_hour: 1.5 }],
        lots: vec![ParkingLot { capacity: 2, location: Point::new(0.0, 0.0) }],
        buildings: vec![Building { activity: Activity::Work, location: Point::new(0.0, 0.0) }],
        grid: TimeGrid::default(),
        budget: 2.0,
    };
    let fsi = FeasibleSetIndex { sets: vec![vec![vec![0]]] };
    let cells = vec![DemandCell { gamma: (1, 2), building: 0, total: 2.0, groups: vec![(0, 2.0)] }];
    let u = (share / (1.0 - share)).ln();
    let table = UtilityTable { u: vec![vec![Some(u)]], u_nc: vec![0.0], support: vec![2.0] };
    SecondStage::build(&inst, 0, 1.0, &cells, &fsi, &table).unwrap()
}

#[test]
fn toy_subproblem_is_capacity_bound() {
    let st = toy_stage(0.6);
    // x = 1, z = 1: at most one unit in each slot, so half of the two drivers.
    let sol = solve_subproblem(&st, &[1.0, 1.0]).unwrap();
    assert!((sol.objective - 1.0).abs() < 1e-9);
    // Two units: the share bound 0.6 binds instead.
    let sol = solve_subproblem(&st, &[1.0, 2.0]).unwrap();
    assert!((sol.objective - 1.2).abs() < 1e-9);
    let sol = solve_subproblem(&st, &[0.0, 0.0]).unwrap();
    assert_eq!(sol.objective, 0.0);
}

#[test]
fn zero_duals_give_a_zero_cut() {
    let st = toy_stage(0.6);
    let sol = SubSolution {
        objective: 0.0,
        primal: vec![0.0; st.vars.len()],
        duals: vec![0.0; st.rows.len()],
        reduced_costs: vec![0.0; st.vars.len()],
    };
    for mode in [CutMode::Single, CutMode::Multi] {
        let cut = make_cut(&st, &sol, mode, &[0.0, 0.0]);
        assert_eq!(cut.constant, 0.0);
        assert!(cut.x.iter().chain(&cut.z).all(|&a| a == 0.0));
    }
}

#[test]
fn cuts_are_tight_where_generated_and_valid_elsewhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..10 {
        let (inst, sc) = sample(seed, 3);
        let fs = FirstStage::of(&inst);
        let st: Vec<SecondStage> = sc.iter().map(|s| SecondStage::from_scenario(&inst, s).unwrap()).collect();
        let probe: Vec<Vec<f64>> = (0..100).map(|_| fs.vector(&common::random_design(&inst, &mut rng))).collect();
        for _ in 0..3 {
            let v = fs.vector(&common::random_design(&inst, &mut rng));
            let sols: Vec<SubSolution> = st.iter().map(|s| solve_subproblem(s, &v).unwrap()).collect();
            let mut agg_bound = 0.0;
            let mut expected = 0.0;
            for (s, f) in st.iter().zip(&sols) {
                let cut = make_cut(s, f, CutMode::Multi, &v);
                assert!((cut.bound(&v) - f.objective).abs() <= 1e-6, "seed {seed}: tightness");
                agg_bound += make_cut(s, f, CutMode::Single, &v).bound(&v);
                expected += s.probability * f.objective;
                for w in &probe {
                    let phi = solve_subproblem(s, w).unwrap().objective;
                    assert!(phi <= cut.bound(w) + 1e-6, "seed {seed}: invalid cut");
                }
            }
            assert!((agg_bound - expected).abs() <= 1e-6);
        }
    }
}

#[test]
fn zero_budget_converges_immediately() {
    let (inst, sc) = sample(3, 3);
    let inst = inst.with_budget(0.0);
    for mode in [CutMode::Single, CutMode::Multi] {
        let (d, r) = run_lshaped(&inst, &sc, &LShapedOptions { mode, ..Default::default() }).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(d.total_units(), 0);
        assert!(r.iterations.len() <= 2, "{}", r.iterations.len());
        assert_eq!(r.termination, Termination::Converged);
    }
}

#[test]
fn first_master_bound_is_total_demand() {
    let (inst, sc) = sample(5, 4);
    let m: f64 = sc.iter().map(|s| s.probability * s.total_demand()).sum();
    for mode in [CutMode::Single, CutMode::Multi] {
        let opts = LShapedOptions { mode, relaxed_rounds: 0, max_iterations: 1, ..Default::default() };
        let (_, r) = run_lshaped(&inst, &sc, &opts).unwrap();
        assert!((r.iterations[0].master_bound - m).abs() < 1e-9);
    }
}

#[test]
fn bounds_are_monotone_and_cut_counts_add_up() {
    for seed in 0..10 {
        let (inst, sc) = sample(seed, 1 + seed as usize % 5);
        for mode in [CutMode::Single, CutMode::Multi] {
            let (_, r) = run_lshaped(&inst, &sc, &LShapedOptions { mode, ..Default::default() }).unwrap();
            assert_eq!(r.termination, Termination::Converged);
            assert!(r.upper - r.lower <= 1e-4);
            for w in r.iterations.windows(2) {
                assert!(w[1].lower >= w[0].lower);
                assert!(w[1].upper <= w[0].upper);
            }
            let per = if mode == CutMode::Multi { sc.len() } else { 1 };
            assert!(r.iterations.iter().all(|it| it.cuts == per));
            let rounds = r.iterations.len() + r.relaxed_rounds + r.started as usize;
            assert_eq!(r.cuts.len(), per * rounds);
        }
    }
}

#[test]
fn both_cut_modes_match_the_deterministic_equivalent() {
    for seed in 30..40 {
        let (inst, sc) = sample(seed, 3);
        let (p, cat) = build_dep(&inst, &sc).unwrap();
        let dep = solve_dep(&p, &cat, &SolveOptions::default()).unwrap().objective;
        let single = run_lshaped(&inst, &sc, &LShapedOptions { mode: CutMode::Single, ..Default::default() }).unwrap().1;
        let multi = run_lshaped(&inst, &sc, &LShapedOptions { mode: CutMode::Multi, ..Default::default() }).unwrap().1;
        assert!((single.objective - multi.objective).abs() <= 2e-4);
        assert!(common::rel_close(single.objective, dep, 1e-6), "seed {seed}: {} vs {dep}", single.objective);
        assert!(common::rel_close(multi.objective, dep, 1e-6), "seed {seed}: {} vs {dep}", multi.objective);
    }
}

#[test]
fn start_vector_seeds_the_incumbent() {
    let (inst, sc) = sample(8, 3);
    let (best, _) = run_lshaped(&inst, &sc, &LShapedOptions::default()).unwrap();
    let opts = LShapedOptions { start: Some(FirstStage::of(&inst).vector(&best)), ..Default::default() };
    let (_, r) = run_lshaped(&inst, &sc, &opts).unwrap();
    assert!(r.started);
    assert!(r.iterations[0].lower >= common::expected_value(&inst, &sc, &best) - 1e-7);
}
