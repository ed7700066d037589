//! Mixed-logit utilities per driver, their aggregation per lot, and logit shares.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{ChargerType, DriverRecord, Level};

/// Number of predictors.
pub const K: usize = 10;

pub const PREDICTOR_NAMES: [&str; K] = [
    "intercept",
    "price",
    "charging_cost",
    "cost_at_home",
    "dwell_30min",
    "level2",
    "level3",
    "range_charged",
    "remaining_range",
    "enough_to_next",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub mean: f64,
    pub sd: f64,
}

const fn coef(mean: f64, sd: f64) -> Coefficient {
    Coefficient { mean, sd }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoefficientSpec {
    pub intercept: Coefficient,
    pub price: Coefficient,
    pub charging_cost: Coefficient,
    pub cost_at_home: Coefficient,
    pub dwell_30min: Coefficient,
    pub level2: Coefficient,
    pub level3: Coefficient,
    pub range_charged: Coefficient,
    pub remaining_range: Coefficient,
    pub enough_to_next: Coefficient,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            intercept: coef(4.756, 0.022),
            price: coef(-0.607, 0.089),
            charging_cost: coef(-0.062, 0.004),
            cost_at_home: coef(0.009, 0.489),
            dwell_30min: coef(0.335, 0.188),
            level2: coef(1.229, 0.253),
            level3: coef(1.609, 0.264),
            range_charged: coef(0.014, 0.003),
            remaining_range: coef(-0.130, 0.006),
            enough_to_next: coef(-4.401, 0.078),
        }
    }
}

impl CoefficientSpec {
    pub fn as_array(&self) -> [Coefficient; K] {
        [
            self.intercept,
            self.price,
            self.charging_cost,
            self.cost_at_home,
            self.dwell_30min,
            self.level2,
            self.level3,
            self.range_charged,
            self.remaining_range,
            self.enough_to_next,
        ]
    }

    pub fn means(&self) -> [f64; K] {
        self.as_array().map(|c| c.mean)
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|c| c.sd >= 0.0 && c.mean.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleSpec {
    pub battery_kwh: f64,
    pub miles_per_kwh: f64,
    pub home_price_per_kwh: f64,
    pub next_opportunity_miles: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            battery_kwh: 60.0,
            miles_per_kwh: 3.5,
            home_price_per_kwh: 0.13,
            next_opportunity_miles: 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Arithmetic mean over supporting drivers.
    Mean,
    /// Sum over supporting drivers.
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChoiceConfig {
    pub coefficients: CoefficientSpec,
    pub vehicle: VehicleSpec,
    /// Draw per-driver random coefficients; off uses the means.
    pub mixing: bool,
    pub aggregation: Aggregation,
}

impl Default for ChoiceConfig {
    fn default() -> Self {
        Self {
            coefficients: CoefficientSpec::default(),
            vehicle: VehicleSpec::default(),
            mixing: true,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Hours actually spent charging: bounded by the stay and by the energy headroom.
pub fn charge_duration(dwell: f64, soc: f64, charger: &ChargerType, veh: &VehicleSpec) -> f64 {
    let headroom = (1.0 - soc).max(0.0) * veh.battery_kwh;
    dwell.min(headroom / charger.power_kw).max(0.0)
}

pub fn predictor_vector(driver: &DriverRecord, charger: &ChargerType, veh: &VehicleSpec) -> [f64; K] {
    predictors(driver.dwell(), driver.soc, charger, veh)
}

pub fn predictors(dwell: f64, soc: f64, charger: &ChargerType, veh: &VehicleSpec) -> [f64; K] {
    let duration = charge_duration(dwell, soc, charger, veh);
    let headroom = (1.0 - soc).max(0.0) * veh.battery_kwh;
    let range_charged = (charger.power_kw * dwell).min(headroom).max(0.0) * veh.miles_per_kwh;
    let remaining = soc * veh.battery_kwh * veh.miles_per_kwh;
    let dummy = |b: bool| if b { 1.0 } else { 0.0 };
    [
        1.0,
        charger.price_per_hour,
        charger.price_per_hour * duration,
        veh.home_price_per_kwh,
        dummy(dwell >= 0.5),
        dummy(charger.level == Level::L2),
        dummy(charger.level == Level::L3),
        range_charged,
        remaining,
        dummy(remaining >= veh.next_opportunity_miles),
    ]
}

/// One driver's coefficient vector: independent normal draws when mixing, else the means.
pub fn draw_coefficients(spec: &CoefficientSpec, mixing: bool, rng: &mut impl Rng) -> [f64; K] {
    let arr = spec.as_array();
    let mut out = [0.0; K];
    for (k, c) in arr.iter().enumerate() {
        out[k] = if mixing && c.sd > 0.0 {
            Normal::new(c.mean, c.sd).expect("finite sd").sample(rng)
        } else {
            c.mean
        };
    }
    out
}

pub fn utility(beta: &[f64; K], x: &[f64; K]) -> f64 {
    beta.iter().zip(x).map(|(b, v)| b * v).sum()
}

pub fn driver_utility(driver: &DriverRecord, charger: &ChargerType, beta: &[f64; K], veh: &VehicleSpec) -> f64 {
    utility(beta, &predictor_vector(driver, charger, veh))
}

/// The outside option's deterministic utility is the normalization point.
pub fn no_charge_utility() -> f64 {
    0.0
}

/// Aggregated utilities of one scenario.
///
/// `u[n][j] == None` marks a lot no driver can walk to; its share bound is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub u: Vec<Vec<Option<f64>>>,
    pub u_nc: Vec<f64>,
    pub support: Vec<f64>,
}

impl UtilityTable {
    pub fn num_types(&self) -> usize {
        self.u.len()
    }

    pub fn num_lots(&self) -> usize {
        self.u_nc.len()
    }

    /// Largest finite utility at lot `j`, including the outside option.
    pub fn max_at(&self, j: usize) -> f64 {
        self.u
            .iter()
            .filter_map(|r| r[j])
            .fold(self.u_nc[j], f64::max)
    }
}

pub fn aggregate_utilities(
    drivers: &[DriverRecord],
    num_types: usize,
    num_lots: usize,
    how: Aggregation,
) -> UtilityTable {
    let mut sum = vec![vec![0.0; num_lots]; num_types];
    let mut sum_nc = vec![0.0; num_lots];
    let mut support = vec![0.0; num_lots];
    for d in drivers {
        for &j in &d.feasible_lots {
            support[j] += 1.0;
            sum_nc[j] += d.no_charge_utility;
            for n in 0..num_types {
                sum[n][j] += d.utilities[n];
            }
        }
    }
    let scale = |j: usize| match how {
        Aggregation::Mean => 1.0 / support[j],
        Aggregation::Sum => 1.0,
    };
    let u = sum
        .iter()
        .map(|row| {
            (0..num_lots)
                .map(|j| (support[j] > 0.0).then(|| row[j] * scale(j)))
                .collect()
        })
        .collect();
    let u_nc = (0..num_lots)
        .map(|j| if support[j] > 0.0 { sum_nc[j] * scale(j) } else { 0.0 })
        .collect();
    UtilityTable { u, u_nc, support }
}

/// Logit share bound for type `n` at lot `j` given which types are open there.
pub fn logit_share(n: usize, j: usize, table: &UtilityTable, open_row: &[bool]) -> f64 {
    let col: Vec<Option<f64>> = table.u.iter().map(|r| r[j]).collect();
    shares(&col, table.u_nc[j], open_row)[n]
}

/// Shares of every alternative; closed or unsupported alternatives get 0.
///
/// Computed relative to the largest active utility so large magnitudes do not overflow.
pub fn shares(u: &[Option<f64>], u_nc: f64, open: &[bool]) -> Vec<f64> {
    let active = |n: usize| open[n] && u[n].is_some();
    let top = (0..u.len())
        .filter(|&n| active(n))
        .map(|n| u[n].unwrap())
        .fold(u_nc, f64::max);
    let w: Vec<f64> = (0..u.len())
        .map(|n| if active(n) { (u[n].unwrap() - top).exp() } else { 0.0 })
        .collect();
    let denom = (u_nc - top).exp() + w.iter().sum::<f64>();
    w.iter().map(|v| v / denom).collect()
}

/// Share of the outside option.
pub fn no_charge_share(u: &[Option<f64>], u_nc: f64, open: &[bool]) -> f64 {
    let top = (0..u.len())
        .filter(|&n| open[n] && u[n].is_some())
        .map(|n| u[n].unwrap())
        .fold(u_nc, f64::max);
    let denom = (u_nc - top).exp()
        + (0..u.len())
            .filter(|&n| open[n] && u[n].is_some())
            .map(|n| (u[n].unwrap() - top).exp())
            .sum::<f64>();
    (u_nc - top).exp() / denom
}
