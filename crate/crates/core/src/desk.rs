//! Small built-in instances: the reference desk instance and a seeded family
//! of tiny instances for cross-checking solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::choice::{ChoiceConfig, VehicleSpec};
use crate::domain::{Activity, Building, ChargerType, Instance, Level, ParkingLot, Point, TimeGrid};
use crate::stochastics::BehaviorConfig;

pub fn level1() -> ChargerType {
    ChargerType { level: Level::L1, install_cost: 900.0, power_kw: 1.4, price_per_hour: 1.0 }
}

pub fn level2() -> ChargerType {
    ChargerType { level: Level::L2, install_cost: 3450.0, power_kw: 6.6, price_per_hour: 1.5 }
}

pub fn level3() -> ChargerType {
    ChargerType { level: Level::L3, install_cost: 25_000.0, power_kw: 50.0, price_per_hour: 21.0 }
}

/// Level-3 hourly prices swept when probing price sensitivity.
pub const LEVEL3_PRICE_SWEEP: [f64; 4] = [9.0, 6.0, 4.0, 3.0];

/// Budgets of the reference budget sweep.
pub const BUDGET_SWEEP: [f64; 5] = [3_450.0, 6_900.0, 13_800.0, 27_600.0, 55_200.0];

/// Six lots on a 3×2 block grid (0.5 mi apart), two buildings per activity,
/// each 0.05–0.12 mi from its nearest lot.
pub fn reference_instance() -> Instance {
    let lot_at = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 0.5), (0.5, 0.5), (1.0, 0.5)];
    let capacity = [4, 4, 4, 4, 2, 2];
    let lots = lot_at
        .iter()
        .zip(capacity)
        .map(|(&(x, y), capacity)| ParkingLot { capacity, location: Point::new(x, y) })
        .collect();
    // (nearest lot, distance, bearing in degrees)
    let offsets = [
        (0, 0.05, 0.0),
        (1, 0.08, 90.0),
        (2, 0.06, 180.0),
        (3, 0.10, 270.0),
        (4, 0.07, 45.0),
        (5, 0.12, 135.0),
        (0, 0.09, 225.0),
        (1, 0.11, 315.0),
        (2, 0.05, 60.0),
        (3, 0.08, 120.0),
        (4, 0.12, 240.0),
        (5, 0.06, 300.0),
    ];
    let buildings = offsets
        .iter()
        .enumerate()
        .map(|(i, &(j, d, deg)): (usize, &(usize, f64, f64))| {
            let (x, y) = lot_at[j];
            let a = deg.to_radians();
            let round = |v: f64| (v * 1e6).round() / 1e6;
            Building {
                activity: Activity::ALL[i / 2],
                location: Point::new(round(x + d * a.cos()), round(y + d * a.sin())),
            }
        })
        .collect();
    Instance {
        chargers: vec![level1(), level2(), level3()],
        lots,
        buildings,
        grid: TimeGrid::default(),
        budget: 27_600.0,
    }
}

/// Roughly 24 drivers per day.
pub fn reference_behavior() -> BehaviorConfig {
    BehaviorConfig { daily_traffic: [1_000, 1_400], ..Default::default() }
}

/// A 24 kWh pack keeps typical arrivals below the next-opportunity range,
/// so charging is attractive and capacity, not indifference, limits access.
pub fn reference_choice() -> ChoiceConfig {
    ChoiceConfig {
        vehicle: VehicleSpec { battery_kwh: 24.0, ..Default::default() },
        ..Default::default()
    }
}

/// A tiny seeded instance: 2–4 lots with capacity 1–2, two charger types,
/// 1–3 buildings and a budget of a few units.
pub fn small_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_lots = if rng.random_bool(0.2) { 4 } else { rng.random_range(2..=3) };
    let lots = (0..num_lots)
        .map(|_| ParkingLot {
            capacity: if num_lots == 4 { 1 } else { rng.random_range(1..=2) },
            location: Point::new(rng.random_range(0.0..0.6), rng.random_range(0.0..0.6)),
        })
        .collect();
    let num_buildings = rng.random_range(1..=3);
    let buildings = (0..num_buildings)
        .map(|_| Building {
            activity: Activity::ALL[rng.random_range(0..6)],
            location: Point::new(rng.random_range(0.0..0.6), rng.random_range(0.0..0.6)),
        })
        .collect();
    let chargers = vec![
        ChargerType { install_cost: 1.0, ..level1() },
        ChargerType { install_cost: 2.0, ..level2() },
    ];
    Instance {
        chargers,
        lots,
        buildings,
        grid: TimeGrid::default(),
        budget: rng.random_range(2..=5) as f64,
    }
}

/// Three to eight drivers per day, activities restricted to those present.
pub fn small_behavior(inst: &Instance) -> BehaviorConfig {
    let mut present = [false; 6];
    inst.buildings.iter().for_each(|b| present[b.activity.index()] = true);
    let base = BehaviorConfig::default();
    BehaviorConfig {
        daily_traffic: [150, 400],
        activity_mix: base.activity_mix.restricted_to(&present),
        ..base
    }
}
