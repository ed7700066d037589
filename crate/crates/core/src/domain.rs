//! Static network data, driver records, and demand aggregation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargerType {
    pub level: Level,
    pub install_cost: f64,
    pub power_kw: f64,
    pub price_per_hour: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParkingLot {
    /// Number of chargers the lot can host.
    pub capacity: i64,
    pub location: Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Work,
    School,
    Social,
    Family,
    Meal,
    Shopping,
}

impl Activity {
    pub const ALL: [Activity; 6] = [
        Activity::Work,
        Activity::School,
        Activity::Social,
        Activity::Family,
        Activity::Meal,
        Activity::Shopping,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activity::Work => "work",
            Activity::School => "school",
            Activity::Social => "social",
            Activity::Family => "family",
            Activity::Meal => "meal",
            Activity::Shopping => "shopping",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub activity: Activity,
    pub location: Point,
}

/// Clock-time slots in hours, e.g. `[6, 9)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub slots: Vec<[f64; 2]>,
    pub day_span: [f64; 2],
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            slots: vec![[6.0, 9.0], [9.0, 12.0], [12.0, 14.0], [14.0, 18.0]],
            day_span: [6.0, 18.0],
        }
    }
}

impl TimeGrid {
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn open(&self) -> f64 {
        self.day_span[0]
    }

    pub fn close(&self) -> f64 {
        self.day_span[1]
    }

    pub fn hours(&self) -> f64 {
        self.close() - self.open()
    }

    /// Slot containing clock time `t`; times at or past closing map to the last slot.
    pub fn slot_of(&self, t: f64) -> usize {
        self.slots
            .iter()
            .position(|s| t < s[1])
            .unwrap_or(self.slots.len() - 1)
    }

    /// All (arrival, departure) slot pairs with arrival ≤ departure.
    pub fn gammas(&self) -> Vec<(usize, usize)> {
        let t = self.num_slots();
        (0..t).flat_map(|a| (a..t).map(move |d| (a, d))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub chargers: Vec<ChargerType>,
    pub lots: Vec<ParkingLot>,
    pub buildings: Vec<Building>,
    #[serde(default)]
    pub grid: TimeGrid,
    pub budget: f64,
}

impl Instance {
    pub fn num_types(&self) -> usize {
        self.chargers.len()
    }

    pub fn num_lots(&self) -> usize {
        self.lots.len()
    }

    pub fn distance(&self, building: usize, lot: usize) -> f64 {
        self.buildings[building]
            .location
            .distance(&self.lots[lot].location)
    }

    pub fn type_of_level(&self, level: Level) -> Option<usize> {
        self.chargers.iter().position(|c| c.level == level)
    }

    pub fn with_budget(&self, budget: f64) -> Instance {
        Instance {
            budget,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn violation(field: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        message: message.into(),
    }
}

pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    if inst.chargers.is_empty() {
        out.push(violation("chargers", "at least one charger type is required"));
    }
    if inst.lots.is_empty() {
        out.push(violation("lots", "at least one parking lot is required"));
    }
    if inst.buildings.is_empty() {
        out.push(violation("buildings", "at least one building is required"));
    }
    for (n, c) in inst.chargers.iter().enumerate() {
        if !(c.install_cost > 0.0 && c.install_cost.is_finite()) {
            out.push(violation(format!("chargers[{n}].install_cost"), "must be > 0"));
        }
        if !(c.power_kw > 0.0 && c.power_kw.is_finite()) {
            out.push(violation(format!("chargers[{n}].power_kw"), "must be > 0"));
        }
        if !(c.price_per_hour >= 0.0 && c.price_per_hour.is_finite()) {
            out.push(violation(format!("chargers[{n}].price_per_hour"), "must be >= 0"));
        }
    }
    for (j, l) in inst.lots.iter().enumerate() {
        if l.capacity < 0 {
            out.push(violation(format!("lots[{j}].capacity"), "must be >= 0"));
        }
        if !(l.location.x.is_finite() && l.location.y.is_finite()) {
            out.push(violation(format!("lots[{j}].location"), "must be finite"));
        }
    }
    for (b, bl) in inst.buildings.iter().enumerate() {
        if !(bl.location.x.is_finite() && bl.location.y.is_finite()) {
            out.push(violation(format!("buildings[{b}].location"), "must be finite"));
        }
    }
    if !(inst.budget >= 0.0 && inst.budget.is_finite()) {
        out.push(violation("budget", "must be >= 0"));
    }
    let g = &inst.grid;
    if g.slots.is_empty() {
        out.push(violation("grid.slots", "at least one slot is required"));
    } else {
        if g.slots[0][0] != g.day_span[0] || g.slots[g.slots.len() - 1][1] != g.day_span[1] {
            out.push(violation("grid", "slots must start at opening and end at closing"));
        }
        for (t, s) in g.slots.iter().enumerate() {
            if !(s[0] < s[1]) {
                out.push(violation(format!("grid.slots[{t}]"), "start must precede end"));
            }
            if t > 0 && g.slots[t - 1][1] != s[0] {
                out.push(violation(
                    format!("grid.slots[{t}]"),
                    "slots must be contiguous and non-overlapping",
                ));
            }
        }
    }
    out
}

/// Lots within `radius` miles of `building`, ascending.
pub fn feasible_set(building: usize, radius: f64, inst: &Instance) -> Result<Vec<usize>> {
    if building >= inst.buildings.len() {
        return Err(input(format!("unknown building id {building}")));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(input(format!("walking radius must be >= 0, got {radius}")));
    }
    Ok((0..inst.lots.len())
        .filter(|&j| inst.distance(building, j) <= radius)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverRecord {
    pub building: usize,
    pub activity: Activity,
    /// Clock times in hours.
    pub arrival: f64,
    pub departure: f64,
    pub arrival_slot: usize,
    pub departure_slot: usize,
    pub soc: f64,
    pub walk_radius: f64,
    pub feasible_lots: Vec<usize>,
    /// Deterministic utility per charger type.
    pub utilities: Vec<f64>,
    pub no_charge_utility: f64,
}

impl DriverRecord {
    pub fn dwell(&self) -> f64 {
        self.departure - self.arrival
    }

    pub fn gamma(&self) -> (usize, usize) {
        (self.arrival_slot, self.departure_slot)
    }
}

/// Demand of one (arrival slot, departure slot, building) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandCell {
    pub gamma: (usize, usize),
    pub building: usize,
    pub total: f64,
    /// `(feasible-set id within the building, count)`.
    pub groups: Vec<(usize, f64)>,
}

/// Distinct walkable lot sets per building.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSetIndex {
    pub sets: Vec<Vec<Vec<usize>>>,
}

impl FeasibleSetIndex {
    pub fn lots(&self, building: usize, m: usize) -> &[usize] {
        &self.sets[building][m]
    }

    pub fn id_of(&self, building: usize, lots: &[usize]) -> Option<usize> {
        self.sets.get(building)?.iter().position(|s| s == lots)
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Groups drivers by (γ, building) and, within a cell, by identical feasible set.
///
/// Sets per building are numbered in lexicographic order; cells are ordered by
/// (γ, building). Every driver must have a non-empty feasible set.
pub fn aggregate_demand(
    drivers: &[DriverRecord],
    num_buildings: usize,
) -> Result<(FeasibleSetIndex, Vec<DemandCell>)> {
    let mut sets: Vec<BTreeMap<Vec<usize>, ()>> = vec![BTreeMap::new(); num_buildings];
    for (i, d) in drivers.iter().enumerate() {
        if d.building >= num_buildings {
            return Err(input(format!("driver {i} references unknown building {}", d.building)));
        }
        if d.feasible_lots.is_empty() {
            return Err(input(format!("driver {i} has no walkable lot")));
        }
        sets[d.building].insert(d.feasible_lots.clone(), ());
    }
    let fsi = FeasibleSetIndex {
        sets: sets
            .into_iter()
            .map(|m| m.into_keys().collect())
            .collect(),
    };
    let mut cells: BTreeMap<((usize, usize), usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for d in drivers {
        let m = fsi.id_of(d.building, &d.feasible_lots).expect("indexed above");
        *cells
            .entry((d.gamma(), d.building))
            .or_default()
            .entry(m)
            .or_default() += 1.0;
    }
    let cells = cells
        .into_iter()
        .map(|((gamma, building), groups)| DemandCell {
            gamma,
            building,
            total: groups.values().sum(),
            groups: groups.into_iter().collect(),
        })
        .collect();
    Ok((fsi, cells))
}

/// First-stage decision: which types are opened at which lots, and how many units.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkDesign {
    /// `open[n][j]`
    #[serde(rename = "x")]
    pub open: Vec<Vec<bool>>,
    /// `count[n][j]`
    #[serde(rename = "z")]
    pub count: Vec<Vec<u32>>,
}

impl NetworkDesign {
    pub fn empty(num_types: usize, num_lots: usize) -> Self {
        Self {
            open: vec![vec![false; num_lots]; num_types],
            count: vec![vec![0; num_lots]; num_types],
        }
    }

    /// Opens exactly the (type, lot) pairs with a positive count.
    pub fn from_counts(count: Vec<Vec<u32>>) -> Self {
        let open = count
            .iter()
            .map(|r| r.iter().map(|&c| c > 0).collect())
            .collect();
        Self { open, count }
    }

    pub fn num_types(&self) -> usize {
        self.count.len()
    }

    pub fn num_lots(&self) -> usize {
        self.count.first().map_or(0, Vec::len)
    }

    pub fn cost(&self, inst: &Instance) -> f64 {
        self.count
            .iter()
            .zip(&inst.chargers)
            .map(|(row, c)| c.install_cost * row.iter().map(|&v| v as f64).sum::<f64>())
            .sum()
    }

    pub fn total_of_type(&self, n: usize) -> u32 {
        self.count[n].iter().sum()
    }

    pub fn total_of_level(&self, inst: &Instance, level: Level) -> u32 {
        (0..self.num_types())
            .filter(|&n| inst.chargers[n].level == level)
            .map(|n| self.total_of_type(n))
            .sum()
    }

    pub fn total_units(&self) -> u32 {
        (0..self.num_types()).map(|n| self.total_of_type(n)).sum()
    }

    /// Flattened `x` then `z`, each in type-major order.
    pub fn to_vector(&self) -> (Vec<f64>, Vec<f64>) {
        let x = self
            .open
            .iter()
            .flatten()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        let z = self.count.iter().flatten().map(|&c| c as f64).collect();
        (x, z)
    }

    /// Checks the first-stage constraints against `inst`.
    pub fn check(&self, inst: &Instance) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_types() != inst.num_types()
            || self.open.len() != inst.num_types()
            || self.count.iter().any(|r| r.len() != inst.num_lots())
            || self.open.iter().any(|r| r.len() != inst.num_lots())
        {
            out.push(violation("design", "shape does not match the instance"));
            return out;
        }
        for j in 0..inst.num_lots() {
            let k = inst.lots[j].capacity.max(0) as u32;
            let total: u32 = (0..self.num_types()).map(|n| self.count[n][j]).sum();
            if total > k {
                out.push(violation(format!("lot {j}"), format!("{total} units exceed capacity {k}")));
            }
            for n in 0..self.num_types() {
                if self.count[n][j] > 0 && !self.open[n][j] {
                    out.push(violation(format!("type {n}, lot {j}"), "units installed but type not opened"));
                }
            }
        }
        let cost = self.cost(inst);
        if cost > inst.budget * (1.0 + 1e-12) + 1e-9 {
            out.push(violation("budget", format!("cost {cost} exceeds budget {}", inst.budget)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> Instance {
        Instance {
            chargers: vec![ChargerType {
                level: Level::L2,
                install_cost: 3450.0,
                power_kw: 6.6,
                price_per_hour: 1.5,
            }],
            lots: vec![
                ParkingLot { capacity: 2, location: Point::new(0.1, 0.0) },
                ParkingLot { capacity: 2, location: Point::new(0.3, 0.0) },
            ],
            buildings: vec![Building { activity: Activity::Work, location: Point::new(0.0, 0.0) }],
            grid: TimeGrid::default(),
            budget: 10_000.0,
        }
    }

    fn driver(building: usize, gamma: (usize, usize), lots: Vec<usize>) -> DriverRecord {
        DriverRecord {
            building,
            activity: Activity::Work,
            arrival: 7.0,
            departure: 8.0,
            arrival_slot: gamma.0,
            departure_slot: gamma.1,
            soc: 0.3,
            walk_radius: 1.0,
            feasible_lots: lots,
            utilities: vec![],
            no_charge_utility: 0.0,
        }
    }

    #[test]
    fn well_formed_instance_has_no_violations() {
        assert!(validate_instance(&toy()).is_empty());
    }

    #[test]
    fn negative_capacity_is_reported() {
        let mut inst = toy();
        inst.lots[0].capacity = -1;
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "lots[0].capacity");
    }

    #[test]
    fn zero_budget_is_valid() {
        let mut inst = toy();
        inst.budget = 0.0;
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn overlapping_slots_are_reported() {
        let mut inst = toy();
        inst.grid.slots[1] = [8.0, 12.0];
        assert!(!validate_instance(&inst).is_empty());
    }

    #[test]
    fn feasible_set_by_distance() {
        let inst = toy();
        assert_eq!(feasible_set(0, 0.2, &inst).unwrap(), vec![0]);
        assert!(feasible_set(0, 0.0, &inst).unwrap().is_empty());
        assert_eq!(feasible_set(0, 10.0, &inst).unwrap(), vec![0, 1]);
        assert!(feasible_set(3, 1.0, &inst).is_err());
        assert!(feasible_set(0, -1.0, &inst).is_err());
    }

    #[test]
    fn slot_lookup_is_half_open() {
        let g = TimeGrid::default();
        assert_eq!(g.slot_of(6.0), 0);
        assert_eq!(g.slot_of(8.999), 0);
        assert_eq!(g.slot_of(9.0), 1);
        assert_eq!(g.slot_of(18.0), 3);
        assert_eq!(g.gammas().len(), 10);
    }

    #[test]
    fn one_group_when_sets_match() {
        let drivers = vec![driver(0, (0, 1), vec![0, 1]); 3];
        let (fsi, cells) = aggregate_demand(&drivers, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].total, 3.0);
        assert_eq!(cells[0].groups, vec![(0, 3.0)]);
        assert_eq!(fsi.sets[0], vec![vec![0, 1]]);
    }

    #[test]
    fn groups_split_by_set() {
        let drivers = vec![driver(0, (0, 1), vec![0]), driver(0, (0, 1), vec![0, 1])];
        let (fsi, cells) = aggregate_demand(&drivers, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].total, 2.0);
        assert_eq!(cells[0].groups, vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(fsi.lots(0, 0), &[0]);
        assert_eq!(fsi.lots(0, 1), &[0, 1]);
    }

    #[test]
    fn empty_feasible_set_is_rejected() {
        assert!(aggregate_demand(&[driver(0, (0, 0), vec![])], 1).is_err());
    }

    #[test]
    fn design_checks() {
        let inst = toy();
        let mut d = NetworkDesign::empty(1, 2);
        assert!(d.check(&inst).is_empty());
        d.count[0][0] = 3;
        d.open[0][0] = true;
        let v = d.check(&inst);
        assert!(v.iter().any(|v| v.field == "lot 0"));
        assert!(v.iter().any(|v| v.field == "budget"));
        let d = NetworkDesign::from_counts(vec![vec![1, 1]]);
        assert!(d.check(&inst).is_empty());
        assert_eq!(d.cost(&inst), 6900.0);
    }
}
