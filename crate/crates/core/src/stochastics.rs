//! Seeded sampling of the demand uncertainty and scenario generation.
//!
//! Every driver gets a private seed drawn from the scenario stream, and each
//! uncertainty source inside a driver reads from its own sub-stream. Freezing
//! one source at its mean therefore leaves every other draw untouched, which
//! keeps ablation runs on common random numbers.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};
use statrs::function::gamma::gamma;

use crate::choice::{self, ChoiceConfig, UtilityTable};
use crate::domain::{
    aggregate_demand, feasible_set, Activity, DemandCell, DriverRecord, FeasibleSetIndex, Instance,
};
use crate::error::{input, Error, Result};

/// A reproducible random stream identified by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer; used to derive independent seeds from one master seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// --- samplers -------------------------------------------------------------

pub fn weibull_quantile(scale: f64, shape: f64, u: f64) -> f64 {
    scale * (-(1.0 - u).ln()).powf(1.0 / shape)
}

pub fn weibull_mean(scale: f64, shape: f64) -> f64 {
    scale * gamma(1.0 + 1.0 / shape)
}

pub fn weibull_sample(scale: f64, shape: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(scale > 0.0 && shape > 0.0) {
        return Err(input(format!("Weibull parameters must be positive, got ({scale}, {shape})")));
    }
    let u: f64 = rng.random();
    Ok(weibull_quantile(scale, shape, u))
}

/// Normal(mean, sd) conditioned on `[lo, hi]`, by rejection.
///
/// After 10 000 rejected draws (an interval far in a tail) the mean clamped
/// into the interval is returned.
pub fn truncated_normal_sample(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(sd > 0.0) || !(lo < hi) {
        return Err(input(format!(
            "truncated normal needs sd > 0 and lo < hi, got sd={sd}, [{lo}, {hi}]"
        )));
    }
    let dist = Normal::new(mean, sd).map_err(|e| input(e.to_string()))?;
    for _ in 0..10_000 {
        let v = dist.sample(rng);
        if (lo..=hi).contains(&v) {
            return Ok(v);
        }
    }
    Ok(mean.clamp(lo, hi))
}

pub fn truncated_normal_mean(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let std = StatNormal::new(0.0, 1.0).expect("standard normal");
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    let z = std.cdf(b) - std.cdf(a);
    if z <= 0.0 {
        return mean.clamp(lo, hi);
    }
    mean + sd * (std.pdf(a) - std.pdf(b)) / z
}

pub fn walk_radius_quantile(beta: f64, u: f64) -> f64 {
    -u.ln() / beta
}

/// Radius with survival function `P(R ≥ d) = e^(−β·d)`.
pub fn walk_radius_sample(beta: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(input(format!("decay parameter must be positive, got {beta}")));
    }
    let u = 1.0 - rng.random::<f64>(); // (0, 1]
    Ok(walk_radius_quantile(beta, u))
}

// --- configuration --------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub scale: f64,
    pub shape: f64,
}

impl Weibull {
    pub const fn new(scale: f64, shape: f64) -> Self {
        Self { scale, shape }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Northeast,
    Midwest,
    South,
    West,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Community {
    TownAndCountry,
    Suburban,
    Urban,
}

/// Distance-decay parameters by factor level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayBetas {
    pub winter: f64,
    pub spring: f64,
    pub summer: f64,
    pub autumn: f64,
    pub northeast: f64,
    pub midwest: f64,
    pub south: f64,
    pub west: f64,
    pub town_and_country: f64,
    pub suburban: f64,
    pub urban: f64,
    /// Multiplier per destination activity (work, school, social, family, meal, shopping).
    pub activity_scale: [f64; 6],
}

impl Default for DecayBetas {
    fn default() -> Self {
        Self {
            winter: 1.88,
            spring: 1.68,
            summer: 1.64,
            autumn: 1.70,
            northeast: 1.85,
            midwest: 1.65,
            south: 1.76,
            west: 1.65,
            town_and_country: 1.68,
            suburban: 1.63,
            urban: 1.78,
            activity_scale: [1.0; 6],
        }
    }
}

impl DecayBetas {
    pub fn season(&self, s: Season) -> f64 {
        match s {
            Season::Winter => self.winter,
            Season::Spring => self.spring,
            Season::Summer => self.summer,
            Season::Autumn => self.autumn,
        }
    }

    pub fn region(&self, r: Region) -> f64 {
        match r {
            Region::Northeast => self.northeast,
            Region::Midwest => self.midwest,
            Region::South => self.south,
            Region::West => self.west,
        }
    }

    pub fn community(&self, c: Community) -> f64 {
        match c {
            Community::TownAndCountry => self.town_and_country,
            Community::Suburban => self.suburban,
            Community::Urban => self.urban,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaStrategy {
    /// Arithmetic mean of the season, region, and community entries.
    Mean,
    SeasonOnly,
    RegionOnly,
    CommunityOnly,
    /// Ignore the table and use `fixed_beta`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellTable {
    /// Indexed like [`Activity::ALL`].
    pub weekday: [Weibull; 6],
    pub weekend: [Weibull; 6],
}

impl Default for DwellTable {
    fn default() -> Self {
        // Order: work, school, social, family, meal, shopping.
        Self {
            weekday: [
                Weibull::new(5.89, 10.0),
                Weibull::new(3.61, 2.0),
                Weibull::new(1.89, 10.0),
                Weibull::new(1.05, 10.0),
                Weibull::new(0.79, 2.0),
                Weibull::new(0.56, 2.0),
            ],
            weekend: [
                Weibull::new(6.04, 6.0),
                Weibull::new(3.36, 10.0),
                Weibull::new(2.03, 2.0),
                Weibull::new(1.13, 2.0),
                Weibull::new(0.79, 2.0),
                Weibull::new(0.25, 0.5),
            ],
        }
    }
}

impl DwellTable {
    pub fn get(&self, day: DayType, a: Activity) -> Weibull {
        match day {
            DayType::Weekday => self.weekday[a.index()],
            DayType::Weekend => self.weekend[a.index()],
        }
    }
}

/// Per-slot activity probabilities (work, school, social, family, meal, shopping).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityMix {
    pub weekday: Vec<[f64; 6]>,
    pub weekend: Vec<[f64; 6]>,
}

impl Default for ActivityMix {
    fn default() -> Self {
        Self {
            weekday: vec![
                [0.55, 0.25, 0.05, 0.05, 0.05, 0.05],
                [0.35, 0.25, 0.10, 0.10, 0.10, 0.10],
                [0.15, 0.10, 0.15, 0.15, 0.30, 0.15],
                [0.15, 0.10, 0.20, 0.20, 0.15, 0.20],
            ],
            weekend: vec![
                [0.20, 0.05, 0.20, 0.20, 0.15, 0.20],
                [0.10, 0.05, 0.30, 0.20, 0.10, 0.25],
                [0.05, 0.00, 0.30, 0.15, 0.20, 0.30],
                [0.05, 0.00, 0.30, 0.20, 0.15, 0.30],
            ],
        }
    }
}

impl ActivityMix {
    pub fn row(&self, day: DayType, slot: usize) -> &[f64; 6] {
        match day {
            DayType::Weekday => &self.weekday[slot],
            DayType::Weekend => &self.weekend[slot],
        }
    }

    /// Drops activities without buildings and renormalizes each row; a row
    /// left empty becomes uniform over the present activities.
    pub fn restricted_to(&self, present: &[bool; 6]) -> ActivityMix {
        let fix = |rows: &Vec<[f64; 6]>| -> Vec<[f64; 6]> {
            rows.iter()
                .map(|r| {
                    let mut out = [0.0; 6];
                    for k in 0..6 {
                        if present[k] {
                            out[k] = r[k];
                        }
                    }
                    let s: f64 = out.iter().sum();
                    if s > 0.0 {
                        out.iter_mut().for_each(|v| *v /= s);
                    } else {
                        let c = present.iter().filter(|&&p| p).count() as f64;
                        for k in 0..6 {
                            out[k] = if present[k] { 1.0 / c } else { 0.0 };
                        }
                    }
                    out
                })
                .collect()
        };
        ActivityMix {
            weekday: fix(&self.weekday),
            weekend: fix(&self.weekend),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Uncertainty sources that can be frozen at their mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Arrival,
    Dwell,
    Soc,
    Walk,
    Traffic,
}

impl Source {
    pub const ALL: [Source; 5] = [Source::Arrival, Source::Dwell, Source::Soc, Source::Walk, Source::Traffic];
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Freeze {
    pub arrival: bool,
    pub dwell: bool,
    pub soc: bool,
    pub walk: bool,
    pub traffic: bool,
}

impl Freeze {
    /// Every source frozen except `keep`.
    pub fn all_but(keep: Source) -> Self {
        Self {
            arrival: keep != Source::Arrival,
            dwell: keep != Source::Dwell,
            soc: keep != Source::Soc,
            walk: keep != Source::Walk,
            traffic: keep != Source::Traffic,
        }
    }

    pub fn all() -> Self {
        Self { arrival: true, dwell: true, soc: true, walk: true, traffic: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    /// Arrival time in hours after opening.
    pub arrival_weekday: Weibull,
    pub arrival_weekend: Weibull,
    pub dwell: DwellTable,
    /// Read every Weibull pair as (shape, scale) instead of (scale, shape).
    pub swap_weibull_order: bool,
    pub max_arrival_tries: u32,
    pub soc: TruncNormal,
    pub decay: DecayBetas,
    pub beta_strategy: BetaStrategy,
    pub fixed_beta: f64,
    pub region: Region,
    pub community: Community,
    /// Inclusive range of daily vehicles.
    pub daily_traffic: [u32; 2],
    pub ev_share: f64,
    /// When set, the EV share is drawn uniformly from this range per scenario.
    pub ev_share_range: Option<[f64; 2]>,
    pub activity_mix: ActivityMix,
    pub weekday_probability: f64,
    pub freeze: Freeze,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            arrival_weekday: Weibull::new(13.0, 4.0),
            arrival_weekend: Weibull::new(8.0, 3.0),
            dwell: DwellTable::default(),
            swap_weibull_order: false,
            max_arrival_tries: 100,
            soc: TruncNormal { mean: 0.3, sd: 0.1, lo: 0.0, hi: 1.0 },
            decay: DecayBetas::default(),
            beta_strategy: BetaStrategy::Mean,
            fixed_beta: 1.7,
            region: Region::Midwest,
            community: Community::Urban,
            daily_traffic: [10_000, 14_000],
            ev_share: 0.02,
            ev_share_range: None,
            activity_mix: ActivityMix::default(),
            weekday_probability: 5.0 / 7.0,
            freeze: Freeze::default(),
        }
    }
}

impl BehaviorConfig {
    fn oriented(&self, w: Weibull) -> Weibull {
        if self.swap_weibull_order {
            Weibull::new(w.shape, w.scale)
        } else {
            w
        }
    }

    pub fn arrival(&self, day: DayType) -> Weibull {
        self.oriented(match day {
            DayType::Weekday => self.arrival_weekday,
            DayType::Weekend => self.arrival_weekend,
        })
    }

    pub fn dwell_of(&self, day: DayType, a: Activity) -> Weibull {
        self.oriented(self.dwell.get(day, a))
    }

    pub fn validate(&self, num_slots: usize) -> Result<()> {
        let mut ws = vec![self.arrival_weekday, self.arrival_weekend];
        ws.extend(self.dwell.weekday);
        ws.extend(self.dwell.weekend);
        if ws.iter().any(|w| !(w.scale > 0.0 && w.shape > 0.0)) {
            return Err(input("all Weibull scale/shape parameters must be > 0"));
        }
        if !(self.soc.sd > 0.0 && self.soc.lo < self.soc.hi) {
            return Err(input("soc needs sd > 0 and lo < hi"));
        }
        if !(0.0..=1.0).contains(&self.ev_share) {
            return Err(input("ev_share must lie in [0, 1]"));
        }
        if let Some([a, b]) = self.ev_share_range {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(input("ev_share_range must satisfy 0 <= lo <= hi <= 1"));
            }
        }
        if self.daily_traffic[0] > self.daily_traffic[1] {
            return Err(input("daily_traffic range is reversed"));
        }
        if !(0.0..=1.0).contains(&self.weekday_probability) {
            return Err(input("weekday_probability must lie in [0, 1]"));
        }
        if self.beta_strategy == BetaStrategy::Fixed && !(self.fixed_beta > 0.0) {
            return Err(input("fixed_beta must be > 0"));
        }
        for (label, rows) in [("weekday", &self.activity_mix.weekday), ("weekend", &self.activity_mix.weekend)] {
            if rows.len() != num_slots {
                return Err(input(format!(
                    "activity_mix.{label} has {} rows but the grid has {num_slots} slots",
                    rows.len()
                )));
            }
            for (t, r) in rows.iter().enumerate() {
                if r.iter().any(|&p| p < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(input(format!(
                        "activity_mix.{label}[{t}] must be non-negative and sum to 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Decay parameter for a driver under the configured combination strategy.
pub fn combine_beta(
    season: Season,
    region: Region,
    community: Community,
    activity: Activity,
    cfg: &BehaviorConfig,
) -> f64 {
    let t = &cfg.decay;
    let base = match cfg.beta_strategy {
        BetaStrategy::Mean => (t.season(season) + t.region(region) + t.community(community)) / 3.0,
        BetaStrategy::SeasonOnly => t.season(season),
        BetaStrategy::RegionOnly => t.region(region),
        BetaStrategy::CommunityOnly => t.community(community),
        BetaStrategy::Fixed => cfg.fixed_beta,
    };
    base * t.activity_scale[activity.index()]
}

// --- scenarios ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub probability: f64,
    pub day_type: DayType,
    pub season: Season,
    /// Drivers drawn for the day, including those later counted as lost.
    pub generated: usize,
    /// Drivers with no walkable lot.
    pub lost_demand: usize,
    pub drivers: Vec<DriverRecord>,
    pub cells: Vec<DemandCell>,
    pub fsi: FeasibleSetIndex,
    pub table: UtilityTable,
}

impl Scenario {
    pub fn total_demand(&self) -> f64 {
        self.cells.iter().map(|c| c.total).sum()
    }
}

fn sub_rng(driver_seed: u64, source: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(driver_seed);
    r.set_stream(source);
    r
}

/// Draws one day of drivers and aggregates it into demand cells and utilities.
pub fn generate_scenario(
    inst: &Instance,
    cfg: &BehaviorConfig,
    choice_cfg: &ChoiceConfig,
    id: usize,
    rng: &mut RngStream,
) -> Result<Scenario> {
    let grid = &inst.grid;
    cfg.validate(grid.num_slots())?;
    let by_activity: Vec<Vec<usize>> = Activity::ALL
        .iter()
        .map(|&a| {
            (0..inst.buildings.len())
                .filter(|&b| inst.buildings[b].activity == a)
                .collect()
        })
        .collect();

    let season = Season::ALL[rng.random_range(0..4)];
    let day_type = if rng.random_bool(cfg.weekday_probability) {
        DayType::Weekday
    } else {
        DayType::Weekend
    };
    let traffic_draw = rng.random_range(cfg.daily_traffic[0]..=cfg.daily_traffic[1]) as f64;
    let share_draw = match cfg.ev_share_range {
        Some([a, b]) if a < b => rng.random_range(a..=b),
        Some([a, _]) => a,
        None => cfg.ev_share,
    };
    let traffic = if cfg.freeze.traffic {
        (cfg.daily_traffic[0] as f64 + cfg.daily_traffic[1] as f64) / 2.0
    } else {
        traffic_draw
    };
    let count = (traffic * share_draw).round() as usize;

    let arrival_w = cfg.arrival(day_type);
    let (open, close) = (grid.open(), grid.close());
    let mut drivers = Vec::with_capacity(count);
    let mut lost = 0;
    for _ in 0..count {
        let seed = rng.next_u64();

        let mut r = sub_rng(seed, 0);
        let mut arrival = open + weibull_sample(arrival_w.scale, arrival_w.shape, &mut r)?;
        let mut tries = 1;
        while arrival >= close && tries < cfg.max_arrival_tries {
            arrival = open + weibull_sample(arrival_w.scale, arrival_w.shape, &mut r)?;
            tries += 1;
        }
        if cfg.freeze.arrival {
            arrival = open + weibull_mean(arrival_w.scale, arrival_w.shape);
        }
        // Keep a strictly positive stay for drivers that arrive at closing.
        let arrival = arrival.min(close - 1e-6);
        let slot = grid.slot_of(arrival);

        let mix = cfg.activity_mix.row(day_type, slot);
        let pick = WeightedIndex::new(mix).map_err(|e| input(format!("activity mix: {e}")))?;
        let activity = Activity::ALL[pick.sample(&mut sub_rng(seed, 1))];
        let candidates = &by_activity[activity.index()];
        if candidates.is_empty() {
            return Err(Error::NoBuildings(activity));
        }
        let building = candidates[sub_rng(seed, 2).random_range(0..candidates.len())];

        let dw = cfg.dwell_of(day_type, activity);
        let mut dwell = weibull_sample(dw.scale, dw.shape, &mut sub_rng(seed, 3))?;
        if cfg.freeze.dwell {
            dwell = weibull_mean(dw.scale, dw.shape);
        }
        let departure = (arrival + dwell).min(close);

        let s = cfg.soc;
        let mut soc = truncated_normal_sample(s.mean, s.sd, s.lo, s.hi, &mut sub_rng(seed, 4))?;
        if cfg.freeze.soc {
            soc = truncated_normal_mean(s.mean, s.sd, s.lo, s.hi);
        }

        let beta = combine_beta(season, cfg.region, cfg.community, activity, cfg);
        let mut walk_radius = walk_radius_sample(beta, &mut sub_rng(seed, 5))?;
        if cfg.freeze.walk {
            walk_radius = 1.0 / beta;
        }
        let feasible_lots = feasible_set(building, walk_radius, inst)?;

        let mut driver = DriverRecord {
            building,
            activity,
            arrival,
            departure,
            arrival_slot: slot,
            departure_slot: grid.slot_of(departure),
            soc,
            walk_radius,
            feasible_lots,
            utilities: Vec::new(),
            no_charge_utility: choice::no_charge_utility(),
        };
        let beta_draw = choice::draw_coefficients(
            &choice_cfg.coefficients,
            choice_cfg.mixing,
            &mut sub_rng(seed, 6),
        );
        driver.utilities = inst
            .chargers
            .iter()
            .map(|c| choice::driver_utility(&driver, c, &beta_draw, &choice_cfg.vehicle))
            .collect();

        if driver.feasible_lots.is_empty() {
            lost += 1;
        } else {
            drivers.push(driver);
        }
    }
    let (fsi, cells) = aggregate_demand(&drivers, inst.buildings.len())?;
    let table = choice::aggregate_utilities(&drivers, inst.num_types(), inst.num_lots(), choice_cfg.aggregation);
    Ok(Scenario {
        id,
        probability: 1.0,
        day_type,
        season,
        generated: count,
        lost_demand: lost,
        drivers,
        cells,
        fsi,
        table,
    })
}

/// `count` scenarios, scenario `i` drawn from stream `i` of `seed`, each with weight `1/count`.
pub fn generate_scenario_set(
    inst: &Instance,
    cfg: &BehaviorConfig,
    choice_cfg: &ChoiceConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(input("scenario count must be at least 1"));
    }
    let p = 1.0 / count as f64;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let mut s = generate_scenario(inst, cfg, choice_cfg, i, &mut rng)?;
            s.probability = p;
            Ok(s)
        })
        .collect()
}
