//! Bounded-variable revised primal simplex.
//!
//! Every row `i` gets a logical variable `r_i` so the constraint system is
//! `A x - r = 0` with bounds on both `x` and `r`. Phase 1 minimizes the sum of
//! bound violations of the basic variables starting from any basis (the slack
//! basis or a warm start); phase 2 minimizes the internal objective, which is
//! the negated objective for maximization problems.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::lu::Factor;
use crate::problem::{LpProblem, RowSense, Sense};
use crate::{LpError, LpSolution, LpStatus, Tolerances};

const REFACTOR_EVERY: usize = 100;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Basis statuses for the structural columns followed by the row logicals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub columns: Vec<VarStatus>,
    pub rows: Vec<VarStatus>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

/// A problem prepared for repeated solves with varying column bounds.
pub struct Simplex {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    /// Internal (minimization) costs of the structural columns.
    cost: Vec<f64>,
    orig_cost: Vec<f64>,
    row_scale: Vec<f64>,
    /// Scaled bounds of the logicals.
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    col_lo: Vec<f64>,
    col_hi: Vec<f64>,
    sign: f64,
    tol: Tolerances,
    pub max_iterations: usize,
    /// Solves stop with `IterationLimit` once this passes.
    pub deadline: Option<Instant>,
    // Original rows, kept for unscaled duals and reduced costs.
    orig_rows: Vec<Vec<(usize, f64)>>,
    row_sense: Vec<RowSense>,
}

impl Simplex {
    pub fn new(problem: &LpProblem, tol: Tolerances) -> Result<Self, LpError> {
        problem.validate()?;
        let n = problem.num_columns();
        let m = problem.num_rows();

        let mut orig_rows = Vec::with_capacity(m);
        let mut row_scale = Vec::with_capacity(m);
        let mut row_lo = Vec::with_capacity(m);
        let mut row_hi = Vec::with_capacity(m);
        let mut counts = vec![0usize; n];
        for row in &problem.rows {
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.coeffs.len());
            let mut sorted = row.coeffs.clone();
            sorted.sort_by_key(|e| e.0);
            for (j, a) in sorted {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += a,
                    _ => merged.push((j, a)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            let max_abs = merged.iter().fold(0.0f64, |acc, e| acc.max(e.1.abs()));
            let s = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
            let (lo, hi) = match row.sense {
                RowSense::Le => (f64::NEG_INFINITY, row.rhs),
                RowSense::Ge => (row.rhs, f64::INFINITY),
                RowSense::Eq => (row.rhs, row.rhs),
            };
            row_scale.push(s);
            row_lo.push(lo * s);
            row_hi.push(hi * s);
            for &(j, _) in &merged {
                counts[j] += 1;
            }
            orig_rows.push(merged);
        }

        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = col_start[n];
        let mut col_rows = vec![0usize; nnz];
        let mut col_vals = vec![0.0; nnz];
        let mut fill = col_start.clone();
        for (i, row) in orig_rows.iter().enumerate() {
            for &(j, a) in row {
                col_rows[fill[j]] = i;
                col_vals[fill[j]] = a * row_scale[i];
                fill[j] += 1;
            }
        }

        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let orig_cost: Vec<f64> = problem.columns.iter().map(|c| c.cost).collect();
        Ok(Self {
            n,
            m,
            col_start,
            col_rows,
            col_vals,
            cost: orig_cost.iter().map(|c| sign * c).collect(),
            orig_cost,
            row_scale,
            row_lo,
            row_hi,
            col_lo: problem.columns.iter().map(|c| c.lower).collect(),
            col_hi: problem.columns.iter().map(|c| c.upper).collect(),
            sign,
            tol,
            max_iterations: 20_000 + 50 * (n + m),
            deadline: None,
            orig_rows,
            row_sense: problem.rows.iter().map(|r| r.sense).collect(),
        })
    }

    pub fn num_columns(&self) -> usize {
        self.n
    }

    pub fn column_bounds(&self) -> (&[f64], &[f64]) {
        (&self.col_lo, &self.col_hi)
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    /// Replaces the right-hand side of row `i`.
    pub fn set_rhs(&mut self, i: usize, rhs: f64) {
        let s = self.row_scale[i];
        let (lo, hi) = match self.row_sense[i] {
            RowSense::Le => (f64::NEG_INFINITY, rhs),
            RowSense::Ge => (rhs, f64::INFINITY),
            RowSense::Eq => (rhs, rhs),
        };
        self.row_lo[i] = lo * s;
        self.row_hi[i] = hi * s;
    }

    pub fn solve(&self, warm: Option<&Basis>) -> LpSolution {
        self.solve_with_bounds(&self.col_lo, &self.col_hi, warm)
    }

    /// Solves with the given structural column bounds in place of the problem's.
    ///
    /// A warm basis that is still dual feasible (the usual case after bound or
    /// right-hand-side changes) is repaired with dual simplex pivots first.
    pub fn solve_with_bounds(&self, lo: &[f64], hi: &[f64], warm: Option<&Basis>) -> LpSolution {
        let mut run = Run::new(self, lo, hi, warm);
        if warm.is_some() && run.dual_phase() == Some(LpStatus::Infeasible) {
            return run.finish(LpStatus::Infeasible);
        }
        let status = run.iterate();
        run.finish(status)
    }

    fn column(&self, k: usize) -> ColumnRef<'_> {
        if k < self.n {
            let r = self.col_start[k]..self.col_start[k + 1];
            ColumnRef::Structural(&self.col_rows[r.clone()], &self.col_vals[r])
        } else {
            ColumnRef::Logical(k - self.n)
        }
    }
}

enum ColumnRef<'a> {
    Structural(&'a [usize], &'a [f64]),
    Logical(usize),
}

struct Run<'a> {
    sx: &'a Simplex,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Internal costs including zero costs for logicals.
    status: Vec<VarStatus>,
    x: Vec<f64>,
    basis: Vec<usize>,
    factor: Factor,
    iterations: usize,
    pricing: Pricing,
    degenerate_run: usize,
    // Scratch buffers.
    work: Vec<f64>,
    alpha: Vec<f64>,
    y: Vec<f64>,
    cb: Vec<f64>,
}

impl<'a> Run<'a> {
    fn new(sx: &'a Simplex, col_lo: &[f64], col_hi: &[f64], warm: Option<&Basis>) -> Self {
        let (n, m) = (sx.n, sx.m);
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        lo.extend_from_slice(col_lo);
        hi.extend_from_slice(col_hi);
        lo.extend_from_slice(&sx.row_lo);
        hi.extend_from_slice(&sx.row_hi);

        let mut status = Vec::with_capacity(n + m);
        let usable_warm = warm.filter(|b| {
            b.columns.len() == n
                && b.rows.len() == m
                && b.columns
                    .iter()
                    .chain(b.rows.iter())
                    .filter(|s| **s == VarStatus::Basic)
                    .count()
                    == m
        });
        match usable_warm {
            Some(b) => {
                status.extend_from_slice(&b.columns);
                status.extend_from_slice(&b.rows);
            }
            None => {
                status.extend(std::iter::repeat_n(VarStatus::AtLower, n));
                status.extend(std::iter::repeat_n(VarStatus::Basic, m));
            }
        }
        // Make nonbasic statuses consistent with the (possibly new) bounds.
        for k in 0..n + m {
            if status[k] != VarStatus::Basic {
                status[k] = nonbasic_status(status[k], lo[k], hi[k]);
            }
        }
        let basis: Vec<usize> = (0..n + m).filter(|&k| status[k] == VarStatus::Basic).collect();
        let mut run = Run {
            sx,
            lo,
            hi,
            status,
            x: vec![0.0; n + m],
            basis,
            factor: Factor::default(),
            iterations: 0,
            pricing: Pricing::Dantzig,
            degenerate_run: 0,
            work: vec![0.0; m],
            alpha: vec![0.0; m],
            y: vec![0.0; m],
            cb: vec![0.0; m],
        };
        run.refactor();
        run
    }

    fn n(&self) -> usize {
        self.sx.n
    }

    fn out_of_time(&self) -> bool {
        self.iterations % 32 == 31 && self.sx.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn m(&self) -> usize {
        self.sx.m
    }

    fn basis_columns(&self) -> Vec<Vec<(usize, f64)>> {
        self.basis
            .iter()
            .map(|&k| match self.sx.column(k) {
                ColumnRef::Structural(rows, vals) => {
                    rows.iter().copied().zip(vals.iter().copied()).collect()
                }
                ColumnRef::Logical(i) => vec![(i, -1.0)],
            })
            .collect()
    }

    /// Refactorizes the basis, patching singular positions with logicals, and
    /// recomputes the basic values.
    fn refactor(&mut self) {
        let m = self.m();
        loop {
            match Factor::factorize(m, &self.basis_columns()) {
                Ok(f) => {
                    self.factor = f;
                    break;
                }
                Err(sing) => {
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.basis[p];
                        self.status[out] = nonbasic_status(VarStatus::AtLower, self.lo[out], self.hi[out]);
                        let logical = self.n() + r;
                        self.status[logical] = VarStatus::Basic;
                        self.basis[p] = logical;
                    }
                }
            }
        }
        self.compute_primal();
    }

    fn nonbasic_value(&self, k: usize) -> f64 {
        match self.status[k] {
            VarStatus::AtLower => self.lo[k],
            VarStatus::AtUpper => self.hi[k],
            VarStatus::Free => 0.0,
            VarStatus::Basic => unreachable!(),
        }
    }

    fn compute_primal(&mut self) {
        let (n, m) = (self.n(), self.m());
        self.work.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n + m {
            if self.status[k] == VarStatus::Basic {
                continue;
            }
            let v = self.nonbasic_value(k);
            self.x[k] = v;
            if v == 0.0 {
                continue;
            }
            match self.sx.column(k) {
                ColumnRef::Structural(rows, vals) => {
                    for (&i, &a) in rows.iter().zip(vals) {
                        self.work[i] -= a * v;
                    }
                }
                ColumnRef::Logical(i) => self.work[i] += v,
            }
        }
        let mut out = vec![0.0; m];
        self.factor.ftran(&mut self.work, &mut out);
        for (p, &k) in self.basis.iter().enumerate() {
            self.x[k] = out[p];
        }
    }

    fn cost_of(&self, k: usize) -> f64 {
        if k < self.n() {
            self.sx.cost[k]
        } else {
            0.0
        }
    }

    /// Fills `cb` with the phase-appropriate basic costs; returns whether the
    /// current basic solution is primal infeasible (phase 1).
    fn set_basic_costs(&mut self) -> bool {
        let tol = self.sx.tol.feasibility;
        let mut phase1 = false;
        for p in 0..self.m() {
            let k = self.basis[p];
            let v = self.x[k];
            if v < self.lo[k] - tol {
                self.cb[p] = -1.0;
                phase1 = true;
            } else if v > self.hi[k] + tol {
                self.cb[p] = 1.0;
                phase1 = true;
            } else {
                self.cb[p] = 0.0;
            }
        }
        if !phase1 {
            for p in 0..self.m() {
                self.cb[p] = self.cost_of(self.basis[p]);
            }
        }
        phase1
    }

    fn compute_duals(&mut self) {
        self.work.copy_from_slice(&self.cb);
        self.factor.btran(&mut self.work, &mut self.y);
    }

    fn reduced_cost(&self, k: usize, phase1: bool) -> f64 {
        let c = if phase1 { 0.0 } else { self.cost_of(k) };
        match self.sx.column(k) {
            ColumnRef::Structural(rows, vals) => {
                let mut d = c;
                for (&i, &a) in rows.iter().zip(vals) {
                    d -= self.y[i] * a;
                }
                d
            }
            ColumnRef::Logical(i) => c + self.y[i],
        }
    }

    /// Returns `(entering, direction)` where direction is +1 to increase.
    fn price(&self, phase1: bool) -> Option<(usize, f64)> {
        let tol = self.sx.tol.optimality;
        let mut best: Option<(usize, f64, f64)> = None;
        for k in 0..self.n() + self.m() {
            let dir = match self.status[k] {
                VarStatus::Basic => continue,
                VarStatus::AtLower => {
                    if self.lo[k] == self.hi[k] {
                        continue;
                    }
                    1.0
                }
                VarStatus::AtUpper => {
                    if self.lo[k] == self.hi[k] {
                        continue;
                    }
                    -1.0
                }
                VarStatus::Free => 0.0,
            };
            let d = self.reduced_cost(k, phase1);
            let dir = if dir == 0.0 {
                if d.abs() <= tol {
                    continue;
                }
                -d.signum()
            } else if d * dir < -tol {
                dir
            } else {
                continue;
            };
            match self.pricing {
                Pricing::Bland => return Some((k, dir)),
                Pricing::Dantzig => {
                    if best.is_none_or(|(_, _, bd)| d.abs() > bd) {
                        best = Some((k, dir, d.abs()));
                    }
                }
            }
        }
        best.map(|(k, dir, _)| (k, dir))
    }

    fn load_column(&mut self, k: usize) {
        self.work.iter_mut().for_each(|v| *v = 0.0);
        match self.sx.column(k) {
            ColumnRef::Structural(rows, vals) => {
                for (&i, &a) in rows.iter().zip(vals) {
                    self.work[i] = a;
                }
            }
            ColumnRef::Logical(i) => self.work[i] = -1.0,
        }
        self.factor.ftran(&mut self.work, &mut self.alpha);
    }

    /// Harris two-pass ratio test. Returns `(step, leaving position, leaves at upper)`;
    /// a `None` position means the entering variable flips bounds.
    fn ratio_test(&self, q: usize, dir: f64) -> Option<(f64, Option<(usize, bool)>)> {
        let ftol = self.sx.tol.feasibility;
        let ptol = self.sx.tol.pivot;
        let own = self.hi[q] - self.lo[q];

        // Per basic position: (limit with tolerance, exact limit, target upper?)
        let limit = |p: usize, relax: f64| -> Option<(f64, bool)> {
            let a = self.alpha[p];
            let delta = -dir * a;
            if delta.abs() <= ptol {
                return None;
            }
            let k = self.basis[p];
            let v = self.x[k];
            let (lo, hi) = (self.lo[k], self.hi[k]);
            if delta > 0.0 {
                if v < lo - ftol {
                    Some(((lo - v + relax) / delta, false))
                } else if v <= hi + ftol && hi.is_finite() {
                    Some((((hi - v) + relax).max(0.0) / delta, true))
                } else {
                    None
                }
            } else if v > hi + ftol {
                Some(((v - hi + relax) / -delta, true))
            } else if v >= lo - ftol && lo.is_finite() {
                Some((((v - lo) + relax).max(0.0) / -delta, false))
            } else {
                None
            }
        };

        if self.pricing == Pricing::Bland {
            let mut best: Option<(f64, usize, bool)> = None;
            for p in 0..self.m() {
                if let Some((t, up)) = limit(p, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bt, bp, _)) => {
                            t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[p] < self.basis[bp])
                        }
                    };
                    if better {
                        best = Some((t, p, up));
                    }
                }
            }
            return match best {
                Some((t, p, up)) if t < own => Some((t.max(0.0), Some((p, up)))),
                _ if own.is_finite() => Some((own, None)),
                _ => None,
            };
        }

        // Half the tolerance keeps drift inside the band phase 1 treats as feasible.
        let mut bound = f64::INFINITY;
        for p in 0..self.m() {
            if let Some((t, _)) = limit(p, 0.5 * ftol) {
                bound = bound.min(t);
            }
        }
        if own.is_finite() && own <= bound {
            return Some((own, None));
        }
        if !bound.is_finite() {
            return if own.is_finite() { Some((own, None)) } else { None };
        }
        let mut best: Option<(usize, f64, bool, f64)> = None;
        for p in 0..self.m() {
            if let Some((t, up)) = limit(p, 0.0) {
                if t <= bound {
                    let mag = self.alpha[p].abs();
                    if best.is_none_or(|(_, _, _, bm)| mag > bm) {
                        best = Some((p, t, up, mag));
                    }
                }
            }
        }
        let (p, t, up, _) = best?;
        Some((t.max(0.0), Some((p, up))))
    }

    fn dual_feasible(&self) -> bool {
        let tol = self.sx.tol.optimality;
        (0..self.n() + self.m()).all(|k| {
            if self.lo[k] == self.hi[k] {
                return true;
            }
            let d = || self.reduced_cost(k, false);
            match self.status[k] {
                VarStatus::Basic => true,
                VarStatus::AtLower => d() >= -tol,
                VarStatus::AtUpper => d() <= tol,
                VarStatus::Free => d().abs() <= tol,
            }
        })
    }

    /// Dual simplex from a dual feasible basis. `Some(Optimal)` once primal
    /// feasible, `Some(Infeasible)` on a proof of infeasibility, `None` when
    /// the basis is not dual feasible or progress stalls; the primal method
    /// then takes over from wherever this stopped.
    fn dual_phase(&mut self) -> Option<LpStatus> {
        let (n, m) = (self.n(), self.m());
        let ftol = self.sx.tol.feasibility;
        let ptol = self.sx.tol.pivot;
        let dtol = self.sx.tol.optimality;
        for p in 0..m {
            self.cb[p] = self.cost_of(self.basis[p]);
        }
        self.compute_duals();
        if !self.dual_feasible() {
            return None;
        }
        let mut rho = vec![0.0; m];
        let mut row = vec![0.0; n + m];
        let mut verify_rounds = 0;
        let limit = self.sx.max_iterations / 2;
        loop {
            if self.iterations >= limit || self.out_of_time() {
                return None;
            }
            if self.factor.num_etas() >= REFACTOR_EVERY || self.factor.fill_ratio() > 3.0 {
                self.refactor();
            }
            // Leaving: the most infeasible basic variable.
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..m {
                let k = self.basis[p];
                let v = self.x[k];
                let inf = if v < self.lo[k] - ftol {
                    self.lo[k] - v
                } else if v > self.hi[k] + ftol {
                    v - self.hi[k]
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, b)| inf > b) {
                    leave = Some((p, inf));
                }
            }
            let Some((p, _)) = leave else {
                return Some(LpStatus::Optimal);
            };
            let r = self.basis[p];
            let sigma = if self.x[r] < self.lo[r] { 1.0 } else { -1.0 };

            for q in 0..m {
                self.cb[q] = self.cost_of(self.basis[q]);
            }
            self.compute_duals();
            self.work.iter_mut().for_each(|v| *v = 0.0);
            self.work[p] = 1.0;
            self.factor.btran(&mut self.work, &mut rho);
            for k in 0..n + m {
                if self.status[k] == VarStatus::Basic || self.lo[k] == self.hi[k] {
                    row[k] = 0.0;
                    continue;
                }
                row[k] = sigma
                    * match self.sx.column(k) {
                        ColumnRef::Structural(rows, vals) => {
                            rows.iter().zip(vals).map(|(&i, &a)| rho[i] * a).sum::<f64>()
                        }
                        ColumnRef::Logical(i) => -rho[i],
                    };
            }
            // Harris ratio test on the reduced costs.
            let ratio = |k: usize, relax: f64| -> Option<f64> {
                let a = row[k];
                if a.abs() <= ptol {
                    return None;
                }
                let d = self.reduced_cost(k, false);
                match self.status[k] {
                    VarStatus::AtLower if a < 0.0 => Some((d.max(0.0) + relax) / -a),
                    VarStatus::AtUpper if a > 0.0 => Some(((-d).max(0.0) + relax) / a),
                    VarStatus::Free => Some((d.abs() + relax) / a.abs()),
                    _ => None,
                }
            };
            let mut bound = f64::INFINITY;
            for k in 0..n + m {
                if let Some(t) = ratio(k, dtol) {
                    bound = bound.min(t);
                }
            }
            if !bound.is_finite() {
                if self.factor.num_etas() > 0 && verify_rounds < 2 {
                    verify_rounds += 1;
                    self.refactor();
                    continue;
                }
                return Some(LpStatus::Infeasible);
            }
            let mut enter: Option<(usize, f64)> = None;
            for k in 0..n + m {
                if let Some(t) = ratio(k, 0.0) {
                    if t <= bound && enter.is_none_or(|(_, b)| row[k].abs() > b) {
                        enter = Some((k, row[k].abs()));
                    }
                }
            }
            let (q, _) = enter?;
            self.load_column(q);
            let a = self.alpha[p];
            if a.abs() <= ptol || (a * sigma - row[q]).abs() > 1e-6 * (1.0 + a.abs()) {
                if verify_rounds < 2 {
                    verify_rounds += 1;
                    self.refactor();
                    continue;
                }
                return None;
            }
            self.iterations += 1;
            let target = if sigma > 0.0 { self.lo[r] } else { self.hi[r] };
            let delta = (self.x[r] - target) / a;
            for i in 0..m {
                let ai = self.alpha[i];
                if ai != 0.0 {
                    let k = self.basis[i];
                    self.x[k] -= ai * delta;
                }
            }
            self.x[q] += delta;
            self.status[r] = if sigma > 0.0 { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.x[r] = target;
            self.status[q] = VarStatus::Basic;
            self.basis[p] = q;
            let alpha = std::mem::take(&mut self.alpha);
            self.factor.push_eta(p, &alpha);
            self.alpha = alpha;
        }
    }

    fn iterate(&mut self) -> LpStatus {
        let mut verify_rounds = 0;
        loop {
            if self.iterations >= self.sx.max_iterations || self.out_of_time() {
                return LpStatus::IterationLimit;
            }
            if self.factor.num_etas() >= REFACTOR_EVERY || self.factor.fill_ratio() > 3.0 {
                self.refactor();
            }
            let phase1 = self.set_basic_costs();
            self.compute_duals();
            let Some((q, dir)) = self.price(phase1) else {
                // Confirm with fresh factors before declaring a terminal status.
                if self.factor.num_etas() > 0 && verify_rounds < 3 {
                    verify_rounds += 1;
                    self.refactor();
                    continue;
                }
                return if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            };
            self.iterations += 1;
            self.load_column(q);
            let Some((step, leave)) = self.ratio_test(q, dir) else {
                if phase1 {
                    return LpStatus::Numerical;
                }
                return LpStatus::Unbounded;
            };

            if step <= DEGENERATE_STEP {
                self.degenerate_run += 1;
                if self.degenerate_run > 10 * self.m().max(1) {
                    self.pricing = Pricing::Bland;
                }
            } else {
                self.degenerate_run = 0;
                self.pricing = Pricing::Dantzig;
            }

            // Move along the edge.
            let theta = dir * step;
            if theta != 0.0 {
                for p in 0..self.m() {
                    let a = self.alpha[p];
                    if a != 0.0 {
                        let k = self.basis[p];
                        self.x[k] -= a * theta;
                    }
                }
                self.x[q] += theta;
            }

            match leave {
                None => {
                    self.status[q] = if dir > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[q] = self.nonbasic_value(q);
                }
                Some((p, up)) => {
                    if self.alpha[p].abs() <= self.sx.tol.pivot {
                        self.refactor();
                        continue;
                    }
                    let out = self.basis[p];
                    self.status[out] = if self.lo[out] == f64::NEG_INFINITY && self.hi[out] == f64::INFINITY {
                        VarStatus::Free
                    } else if up {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[out] = self.nonbasic_value(out);
                    self.status[q] = VarStatus::Basic;
                    self.basis[p] = q;
                    let alpha = std::mem::take(&mut self.alpha);
                    self.factor.push_eta(p, &alpha);
                    self.alpha = alpha;
                }
            }
        }
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        let (n, m) = (self.n(), self.m());
        let sx = self.sx;
        if status == LpStatus::Optimal && self.factor.num_etas() > 0 {
            self.refactor();
        }
        let primal: Vec<f64> = self.x[..n].to_vec();
        let objective: f64 = primal.iter().zip(&sx.orig_cost).map(|(x, c)| x * c).sum();

        let mut duals = vec![0.0; m];
        let mut reduced_costs = vec![0.0; n];
        if status == LpStatus::Optimal {
            for p in 0..m {
                self.cb[p] = self.cost_of(self.basis[p]);
            }
            self.compute_duals();
            for i in 0..m {
                duals[i] = sx.sign * sx.row_scale[i] * self.y[i];
            }
            for (j, rc) in reduced_costs.iter_mut().enumerate() {
                *rc = sx.orig_cost[j];
            }
            for (i, row) in sx.orig_rows.iter().enumerate() {
                let d = duals[i];
                if d != 0.0 {
                    for &(j, a) in row {
                        reduced_costs[j] -= d * a;
                    }
                }
            }
        }
        let basis = Basis {
            columns: self.status[..n].to_vec(),
            rows: self.status[n..].to_vec(),
        };
        LpSolution {
            status,
            objective,
            primal,
            duals,
            reduced_costs,
            iterations: self.iterations,
            basis: Some(basis),
        }
    }
}

fn nonbasic_status(prev: VarStatus, lo: f64, hi: f64) -> VarStatus {
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => VarStatus::Free,
        (true, false) => VarStatus::AtLower,
        (false, true) => VarStatus::AtUpper,
        (true, true) => {
            if prev == VarStatus::AtUpper {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            }
        }
    }
}
