//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use evcs_core::choice::logit_share;
use evcs_core::domain::{Instance, NetworkDesign};
use evcs_core::stochastics::Scenario;
use evcs_lp::{solve_lp, LpProblem, LpStatus, RowSense, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every design satisfying the first-stage constraints, including opened
/// types with no units.
pub fn all_designs(inst: &Instance) -> Vec<NetworkDesign> {
    let (nt, nl) = (inst.num_types(), inst.num_lots());
    // Options per (type, lot): None = closed, Some(k) = open with k units.
    let mut out = Vec::new();
    let mut d = NetworkDesign::empty(nt, nl);
    fn rec(inst: &Instance, k: usize, d: &mut NetworkDesign, out: &mut Vec<NetworkDesign>) {
        let (nt, nl) = (inst.num_types(), inst.num_lots());
        if k == nt * nl {
            if d.check(inst).is_empty() {
                out.push(d.clone());
            }
            return;
        }
        let (n, j) = (k / nl, k % nl);
        let cap = inst.lots[j].capacity.max(0) as u32;
        d.open[n][j] = false;
        d.count[n][j] = 0;
        rec(inst, k + 1, d, out);
        d.open[n][j] = true;
        for c in 0..=cap {
            d.count[n][j] = c;
            let used: u32 = (0..=n).map(|l| d.count[l][j]).sum();
            if used > cap || d.cost(inst) > inst.budget + 1e-9 {
                break;
            }
            rec(inst, k + 1, d, out);
        }
        d.open[n][j] = false;
        d.count[n][j] = 0;
    }
    rec(inst, 0, &mut d, &mut out);
    out
}

/// Served demand of one scenario under a fixed design, from an LP over the
/// service proportions alone: with the design fixed, the logit share of each
/// (type, lot) is a constant bound.
pub fn recourse_value(inst: &Instance, s: &Scenario, d: &NetworkDesign) -> f64 {
    let (nt, nl) = (inst.num_types(), inst.num_lots());
    let mut p = LpProblem::new(Sense::Maximize);
    // (cell, set, lot, type) -> column
    let mut cols: Vec<(usize, usize, usize, usize, usize)> = Vec::new();
    for (ci, c) in s.cells.iter().enumerate() {
        for &(m, _) in &c.groups {
            for &j in s.fsi.lots(c.building, m) {
                for n in 0..nt {
                    if s.table.u[n][j].is_some() {
                        cols.push((ci, m, j, n, p.add_column(0.0, 1.0, c.total)));
                    }
                }
            }
        }
    }
    for n in 0..nt {
        for j in 0..nl {
            for t in 0..inst.grid.num_slots() {
                let row: Vec<(usize, f64)> = cols
                    .iter()
                    .filter(|&&(ci, _, jj, nn, _)| {
                        let g = s.cells[ci].gamma;
                        jj == j && nn == n && g.0 <= t && t <= g.1
                    })
                    .map(|&(ci, .., k)| (k, s.cells[ci].total))
                    .collect();
                if !row.is_empty() {
                    p.add_row(row, RowSense::Le, d.count[n][j] as f64);
                }
            }
        }
    }
    for ci in 0..s.cells.len() {
        for j in 0..nl {
            let open: Vec<bool> = (0..nt).map(|l| d.open[l][j]).collect();
            for n in 0..nt {
                let row: Vec<(usize, f64)> = cols
                    .iter()
                    .filter(|&&(c, _, jj, nn, _)| c == ci && jj == j && nn == n)
                    .map(|&(.., k)| (k, 1.0))
                    .collect();
                if !row.is_empty() {
                    p.add_row(row, RowSense::Le, logit_share(n, j, &s.table, &open));
                }
            }
        }
        let all: Vec<(usize, f64)> = cols.iter().filter(|c| c.0 == ci).map(|c| (c.4, 1.0)).collect();
        if !all.is_empty() {
            p.add_row(all, RowSense::Le, 1.0);
        }
        for &(m, dm) in &s.cells[ci].groups {
            let row: Vec<(usize, f64)> = cols
                .iter()
                .filter(|c| c.0 == ci && c.1 == m)
                .map(|c| (c.4, s.cells[ci].total))
                .collect();
            if !row.is_empty() {
                p.add_row(row, RowSense::Le, dm);
            }
        }
    }
    let sol = solve_lp(&p).expect("oracle LP");
    assert_eq!(sol.status, LpStatus::Optimal, "oracle LP not optimal");
    sol.objective
}

pub fn expected_value(inst: &Instance, scenarios: &[Scenario], d: &NetworkDesign) -> f64 {
    scenarios.iter().map(|s| s.probability * recourse_value(inst, s, d)).sum()
}

/// Best expected value over every feasible design.
pub fn enumerate_optimum(inst: &Instance, scenarios: &[Scenario]) -> (f64, NetworkDesign) {
    let mut best = (f64::NEG_INFINITY, NetworkDesign::empty(inst.num_types(), inst.num_lots()));
    for d in all_designs(inst) {
        let v = expected_value(inst, scenarios, &d);
        if v > best.0 {
            best = (v, d);
        }
    }
    best
}

/// Random feasible design: units added one at a time while room remains.
pub fn random_design(inst: &Instance, rng: &mut impl Rng) -> NetworkDesign {
    let (nt, nl) = (inst.num_types(), inst.num_lots());
    let mut d = NetworkDesign::empty(nt, nl);
    for _ in 0..rng.random_range(0..=3 * nt * nl) {
        let (n, j) = (rng.random_range(0..nt), rng.random_range(0..nl));
        d.open[n][j] = true;
        d.count[n][j] += 1;
        if !d.check(inst).is_empty() {
            d.count[n][j] -= 1;
        }
    }
    // Some opened types keep zero units; that is feasible too.
    d
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

// --- LP corpus ------------------------------------------------------------

/// A bounded, feasible LP: a random point fixes the right-hand sides and free
/// columns are boxed by explicit rows.
pub fn random_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut p = LpProblem::new(sense);
    let n = rng.random_range(2..=12);
    let mut x0 = Vec::with_capacity(n);
    for _ in 0..n {
        let cost = rng.random_range(-5.0..5.0f64).round();
        let (lo, hi) = match rng.random_range(0..4) {
            0 => (0.0, rng.random_range(1.0..10.0f64).round()),
            1 => (rng.random_range(-5.0..0.0f64).round(), rng.random_range(0.0..5.0f64).round() + 1.0),
            2 => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        };
        let j = p.add_column(lo, hi, cost);
        x0.push(if lo.is_finite() && hi.is_finite() {
            rng.random_range(lo..=hi)
        } else if lo.is_finite() {
            lo + rng.random_range(0.0..3.0)
        } else {
            rng.random_range(-3.0..3.0)
        });
        if !hi.is_finite() {
            p.add_row(vec![(j, 1.0)], RowSense::Le, 20.0);
        }
        if !lo.is_finite() {
            p.add_row(vec![(j, 1.0)], RowSense::Ge, -20.0);
        }
    }
    for _ in 0..rng.random_range(1..=10) {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.5) {
                coeffs.push((j, rng.random_range(-4.0..4.0f64).round()));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.random_range(0..n), 1.0));
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let slack = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..4.0) };
        match rng.random_range(0..5) {
            0 => p.add_row(coeffs, RowSense::Eq, act),
            1 | 2 => p.add_row(coeffs, RowSense::Ge, act - slack),
            _ => p.add_row(coeffs, RowSense::Le, act + slack),
        };
    }
    p
}

/// Pure integer program with 2–12 variables and at most 2^12 lattice points.
pub fn random_ip(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut p = LpProblem::new(sense);
    let n = rng.random_range(2..=12);
    let mut space = 1u64;
    for _ in 0..n {
        let hi = if space * 3 <= 4096 && rng.random_bool(0.3) { 2.0 } else { 1.0 };
        space *= hi as u64 + 1;
        p.add_integer_column(0.0, hi, rng.random_range(-6..=9) as f64);
    }
    for _ in 0..rng.random_range(1..=4) {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.6) {
                coeffs.push((j, rng.random_range(-3..=7) as f64));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let sum: f64 = coeffs.iter().map(|c| c.1.max(0.0)).sum();
        let rhs = (sum * rng.random_range(0.2..0.8)).round();
        if rng.random_bool(0.8) {
            p.add_row(coeffs, RowSense::Le, rhs);
        } else {
            p.add_row(coeffs, RowSense::Ge, rhs * 0.3);
        }
    }
    p
}

/// Best objective over the integer box by brute force, `None` if infeasible.
pub fn enumerate_ip(p: &LpProblem) -> Option<f64> {
    let ranges: Vec<(i64, i64)> = p.columns.iter().map(|c| (c.lower as i64, c.upper as i64)).collect();
    let mut x: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut best: Option<f64> = None;
    loop {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        if p.max_violation(&xf) <= 1e-9 {
            let v = p.objective_value(&xf);
            best = Some(match best {
                None => v,
                Some(b) if p.sense == Sense::Maximize => b.max(v),
                Some(b) => b.min(v),
            });
        }
        let mut k = 0;
        loop {
            if k == x.len() {
                return best;
            }
            if x[k] < ranges[k].1 {
                x[k] += 1;
                break;
            }
            x[k] = ranges[k].0;
            k += 1;
        }
    }
}

// --- moments ----------------------------------------------------------------

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Mean and variance of Normal(mu, sd) restricted to [lo, hi], by quadrature.
pub fn truncated_normal_moments(mu: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    let pdf = |x: f64| (-0.5 * ((x - mu) / sd).powi(2)).exp();
    let z = simpson(pdf, lo, hi, 20_000);
    let m = simpson(|x| x * pdf(x), lo, hi, 20_000) / z;
    let v = simpson(|x| (x - m).powi(2) * pdf(x), lo, hi, 20_000) / z;
    (m, v)
}

/// Weibull mean and variance by quadrature of the survival function:
/// E[X] = ∫ S, E[X²] = ∫ 2x S.
pub fn weibull_moments(scale: f64, shape: f64) -> (f64, f64) {
    let s = |x: f64| (-(x / scale).powf(shape)).exp();
    // S is below e^-60 past the top.
    let top = scale * 60.0f64.powf(1.0 / shape);
    let n = 400_000;
    let m1 = simpson(s, 0.0, top, n);
    let m2 = simpson(|x| 2.0 * x * s(x), 0.0, top, n);
    (m1, m2 - m1 * m1)
}
