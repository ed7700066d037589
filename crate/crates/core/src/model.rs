//! Second-stage construction shared by the deterministic equivalent and the
//! decomposition, plus the deterministic-equivalent build and solve.
//!
//! Every second-stage row is stored as `coeffs · w ≤ constant + links · v`,
//! where `w` are the scenario's own variables and `v` is the first-stage
//! vector `[x; z]`. The deterministic equivalent moves the links to the
//! left-hand side; a subproblem plugs a fixed `v` into the right-hand side.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use evcs_lp::{solve_milp, Branching, LpProblem, LpStatus, MilpOptions, RowSense, Sense};
use serde::{Deserialize, Serialize};

use crate::choice::UtilityTable;
use crate::domain::{DemandCell, FeasibleSetIndex, Instance, NetworkDesign};
use crate::error::{Error, Result};
use crate::stochastics::Scenario;

/// Layout of the first-stage vector `v = [x; z]`, both type-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FirstStage {
    pub num_types: usize,
    pub num_lots: usize,
}

impl FirstStage {
    pub fn of(inst: &Instance) -> Self {
        Self { num_types: inst.num_types(), num_lots: inst.num_lots() }
    }

    pub fn x(&self, n: usize, j: usize) -> usize {
        n * self.num_lots + j
    }

    pub fn z(&self, n: usize, j: usize) -> usize {
        self.num_types * self.num_lots + n * self.num_lots + j
    }

    pub fn len(&self) -> usize {
        2 * self.num_types * self.num_lots
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_x(&self, k: usize) -> bool {
        k < self.num_types * self.num_lots
    }

    pub fn vector(&self, d: &NetworkDesign) -> Vec<f64> {
        let (mut x, z) = d.to_vector();
        x.extend(z);
        x
    }

    /// Rounds a (near-)integral first-stage vector into a design.
    pub fn design(&self, v: &[f64]) -> NetworkDesign {
        let (nt, nl) = (self.num_types, self.num_lots);
        let mut d = NetworkDesign::empty(nt, nl);
        for n in 0..nt {
            for j in 0..nl {
                d.open[n][j] = v[self.x(n, j)] > 0.5;
                d.count[n][j] = v[self.z(n, j)].round().max(0.0) as u32;
            }
        }
        d
    }
}

/// Constraint families of the second stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Per (slot, lot, type): served demand present in the slot ≤ z.
    Capacity,
    /// Per (cell, lot, type): linearized logit share bound.
    Share,
    /// Per cell: proportions sum to at most one.
    Cell,
    /// Per (cell, feasible set): demand of that set.
    Group,
    /// o ≤ x_l
    EnvelopeX,
    /// o ≤ y
    EnvelopeY,
    /// y − o ≤ 1 − x_l
    EnvelopeLink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SecondVar {
    /// Proportion of cell demand from feasible set `m` served by type `n` at lot `j`.
    Y { cell: usize, m: usize, j: usize, n: usize },
    /// Linearization of `x_{l,j} · y`.
    O { cell: usize, m: usize, j: usize, n: usize, l: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkedRow {
    pub family: Family,
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
    /// `(first-stage index, coefficient)` terms of the right-hand side.
    pub links: Vec<(usize, f64)>,
}

impl LinkedRow {
    pub fn rhs(&self, v: &[f64]) -> f64 {
        self.constant + self.links.iter().map(|&(k, a)| a * v[k]).sum::<f64>()
    }
}

/// One scenario's recourse problem with its links to the first stage.
#[derive(Clone, Debug)]
pub struct SecondStage {
    pub scenario: usize,
    pub probability: f64,
    pub first: FirstStage,
    pub vars: Vec<SecondVar>,
    /// Objective coefficient (cell demand) per variable.
    pub cost: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LinkedRow>,
    pub total_demand: f64,
}

impl SecondStage {
    pub fn from_scenario(inst: &Instance, s: &Scenario) -> Result<Self> {
        Self::build(inst, s.id, s.probability, &s.cells, &s.fsi, &s.table)
    }

    pub fn build(
        inst: &Instance,
        scenario: usize,
        probability: f64,
        cells: &[DemandCell],
        fsi: &FeasibleSetIndex,
        table: &UtilityTable,
    ) -> Result<Self> {
        let first = FirstStage::of(inst);
        let (nt, nl) = (first.num_types, first.num_lots);
        if table.num_types() != nt || table.num_lots() != nl {
            return Err(Error::Build(format!(
                "utility table is {}x{}, instance has {nt} types and {nl} lots",
                table.num_types(),
                table.num_lots()
            )));
        }
        let finite = |n: usize, j: usize| table.u[n][j].is_some_and(f64::is_finite);

        let mut vars = Vec::new();
        let mut cost = Vec::new();
        for (ci, cell) in cells.iter().enumerate() {
            if cell.total <= 0.0 {
                continue;
            }
            for &(m, _) in &cell.groups {
                let lots = fsi.sets.get(cell.building).and_then(|s| s.get(m)).ok_or_else(|| {
                    Error::Build(format!("cell {ci} references missing feasible set {m}"))
                })?;
                for &j in lots {
                    if j >= nl {
                        return Err(Error::Build(format!("feasible set lists unknown lot {j}")));
                    }
                    for n in (0..nt).filter(|&n| finite(n, j)) {
                        vars.push(SecondVar::Y { cell: ci, m, j, n });
                        cost.push(cell.total);
                    }
                }
            }
        }
        let num_y = vars.len();
        for k in 0..num_y {
            let SecondVar::Y { cell, m, j, n } = vars[k] else { unreachable!() };
            for l in (0..nt).filter(|&l| finite(l, j)) {
                vars.push(SecondVar::O { cell, m, j, n, l });
                cost.push(0.0);
            }
        }
        let upper = vec![1.0; vars.len()];

        let mut rows = Vec::new();
        let num_slots = inst.grid.num_slots();

        // Capacity, keyed (slot, lot, type) so rows come out in a fixed order.
        let mut capacity: BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for (k, v) in vars[..num_y].iter().enumerate() {
            let SecondVar::Y { cell, j, n, .. } = *v else { unreachable!() };
            let c = &cells[cell];
            let (a, d) = c.gamma;
            if d >= num_slots || a > d {
                return Err(Error::Build(format!("cell {cell} has invalid slot pair {:?}", c.gamma)));
            }
            for t in a..=d {
                capacity.entry((t, j, n)).or_default().push((k, c.total));
            }
        }
        for ((_, j, n), coeffs) in capacity {
            rows.push(LinkedRow {
                family: Family::Capacity,
                coeffs,
                constant: 0.0,
                links: vec![(first.z(n, j), 1.0)],
            });
        }

        // Share rows, scaled by e^{-max utility at the lot}.
        let mut o_of: Vec<Vec<usize>> = vec![Vec::new(); num_y];
        let mut yk = 0;
        for (k, v) in vars.iter().enumerate().skip(num_y) {
            let SecondVar::O { cell, m, j, n, .. } = *v else { unreachable!() };
            while vars[yk] != (SecondVar::Y { cell, m, j, n }) {
                yk += 1;
            }
            o_of[yk].push(k);
        }
        let mut share: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (k, v) in vars[..num_y].iter().enumerate() {
            let SecondVar::Y { cell, j, n, .. } = *v else { unreachable!() };
            share.entry((cell, j, n)).or_default().push(k);
        }
        for ((_, j, n), ys) in &share {
            let (j, n) = (*j, *n);
            let top = table.max_at(j);
            let mut coeffs = Vec::new();
            for &k in ys {
                coeffs.push((k, (table.u_nc[j] - top).exp()));
                for &o in &o_of[k] {
                    let SecondVar::O { l, .. } = vars[o] else { unreachable!() };
                    coeffs.push((o, (table.u[l][j].unwrap() - top).exp()));
                }
            }
            rows.push(LinkedRow {
                family: Family::Share,
                coeffs,
                constant: 0.0,
                links: vec![(first.x(n, j), (table.u[n][j].unwrap() - top).exp())],
            });
        }

        let mut per_cell: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        let mut per_group: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for (k, v) in vars[..num_y].iter().enumerate() {
            let SecondVar::Y { cell, m, .. } = *v else { unreachable!() };
            per_cell.entry(cell).or_default().push((k, 1.0));
            per_group.entry((cell, m)).or_default().push((k, cells[cell].total));
        }
        for (_, coeffs) in per_cell {
            rows.push(LinkedRow { family: Family::Cell, coeffs, constant: 1.0, links: vec![] });
        }
        for ((cell, m), coeffs) in per_group {
            let dm = cells[cell]
                .groups
                .iter()
                .find(|g| g.0 == m)
                .map(|g| g.1)
                .unwrap_or(0.0);
            rows.push(LinkedRow { family: Family::Group, coeffs, constant: dm, links: vec![] });
        }

        for (yk, os) in o_of.iter().enumerate() {
            for &o in os {
                let SecondVar::O { j, l, .. } = vars[o] else { unreachable!() };
                let xl = first.x(l, j);
                rows.push(LinkedRow {
                    family: Family::EnvelopeX,
                    coeffs: vec![(o, 1.0)],
                    constant: 0.0,
                    links: vec![(xl, 1.0)],
                });
                rows.push(LinkedRow {
                    family: Family::EnvelopeY,
                    coeffs: vec![(o, 1.0), (yk, -1.0)],
                    constant: 0.0,
                    links: vec![],
                });
                rows.push(LinkedRow {
                    family: Family::EnvelopeLink,
                    coeffs: vec![(yk, 1.0), (o, -1.0)],
                    constant: 1.0,
                    links: vec![(xl, -1.0)],
                });
            }
        }

        Ok(Self {
            scenario,
            probability,
            first,
            vars,
            cost,
            upper,
            rows,
            total_demand: cells.iter().map(|c| c.total).sum(),
        })
    }

    pub fn num_y(&self) -> usize {
        self.vars.iter().filter(|v| matches!(v, SecondVar::Y { .. })).count()
    }

    pub fn count(&self, family: Family) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    /// Drops every row of one family (used to study relaxations).
    pub fn without(mut self, family: Family) -> Self {
        self.rows.retain(|r| r.family != family);
        self
    }

    /// Multiplies every cell demand (objective, capacity and group rows) by `k`.
    pub fn scale_demand(mut self, k: f64) -> Self {
        for c in &mut self.cost {
            *c *= k;
        }
        for r in &mut self.rows {
            match r.family {
                Family::Capacity => r.coeffs.iter_mut().for_each(|c| c.1 *= k),
                Family::Group => {
                    r.coeffs.iter_mut().for_each(|c| c.1 *= k);
                    r.constant *= k;
                }
                _ => {}
            }
        }
        self.total_demand *= k;
        self
    }

    /// The recourse LP at a fixed first-stage vector.
    pub fn lp_at(&self, v: &[f64]) -> LpProblem {
        let mut p = LpProblem::new(Sense::Maximize);
        for (k, &c) in self.cost.iter().enumerate() {
            p.add_column(0.0, self.upper[k], c);
        }
        for r in &self.rows {
            p.add_row(r.coeffs.clone(), RowSense::Le, r.rhs(v));
        }
        p
    }
}

/// Closed-form variable and row counts, derived from the demand data alone.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub x: usize,
    pub z: usize,
    pub y: usize,
    pub o: usize,
    pub first_stage_rows: usize,
    pub capacity: usize,
    pub share: usize,
    pub cell: usize,
    pub group: usize,
    /// Each of the three envelope families has this many rows.
    pub envelope: usize,
}

impl Census {
    pub fn columns(&self) -> usize {
        self.x + self.z + self.y + self.o
    }

    pub fn rows(&self) -> usize {
        self.first_stage_rows + self.capacity + self.share + self.cell + self.group + 3 * self.envelope
    }
}

/// Counts for the deterministic equivalent over `scenarios`.
///
/// With `T_j` the types with a finite utility at lot `j` and, for a cell `c`,
/// `L_c` the union of its feasible sets:
/// - y = Σ_c Σ_{m ∈ c} Σ_{j ∈ m} |T_j|, o = Σ_c Σ_{m ∈ c} Σ_{j ∈ m} |T_j|²
/// - share rows = Σ_c Σ_{j ∈ L_c} |T_j|, cell rows = #cells with a y,
///   group rows = #(cell, set) pairs with a y, envelope rows = o each
/// - capacity rows = #{(t, j, n) : some cell with a y at (j, n) spans t}
/// - first stage: x = z = N·J, rows = J + N·J + 1
pub fn census(inst: &Instance, scenarios: &[Scenario]) -> Census {
    let (nt, nl) = (inst.num_types(), inst.num_lots());
    let mut c = Census {
        x: nt * nl,
        z: nt * nl,
        first_stage_rows: nl + nt * nl + 1,
        ..Default::default()
    };
    for s in scenarios {
        let t: Vec<usize> = (0..nl)
            .map(|j| (0..nt).filter(|&n| s.table.u[n][j].is_some_and(f64::is_finite)).count())
            .collect();
        let mut spans: Vec<Vec<bool>> = vec![vec![false; inst.grid.num_slots()]; nl];
        for cell in s.cells.iter().filter(|c| c.total > 0.0) {
            let mut union = vec![false; nl];
            let mut any = false;
            for &(m, _) in &cell.groups {
                let lots = s.fsi.lots(cell.building, m);
                let ys: usize = lots.iter().map(|&j| t[j]).sum();
                c.y += ys;
                c.o += lots.iter().map(|&j| t[j] * t[j]).sum::<usize>();
                if ys > 0 {
                    c.group += 1;
                    any = true;
                }
                lots.iter().for_each(|&j| union[j] = true);
            }
            if any {
                c.cell += 1;
            }
            for j in (0..nl).filter(|&j| union[j] && t[j] > 0) {
                c.share += t[j];
                for slot in cell.gamma.0..=cell.gamma.1 {
                    spans[j][slot] = true;
                }
            }
        }
        c.capacity += (0..nl)
            .map(|j| t[j] * spans[j].iter().filter(|&&b| b).count())
            .sum::<usize>();
    }
    c.envelope = c.o;
    c
}

/// Where each scenario block lives inside the deterministic equivalent.
#[derive(Clone, Debug)]
pub struct Block {
    pub scenario: usize,
    pub column_offset: usize,
    pub row_offset: usize,
    pub vars: Vec<SecondVar>,
    pub families: Vec<Family>,
}

#[derive(Clone, Debug)]
pub struct VariableCatalog {
    pub first: FirstStage,
    pub blocks: Vec<Block>,
    index: HashMap<(usize, SecondVar), usize>,
}

impl VariableCatalog {
    pub fn num_columns(&self) -> usize {
        self.first.len() + self.blocks.iter().map(|b| b.vars.len()).sum::<usize>()
    }

    /// Column of a second-stage variable of block `b`.
    pub fn column(&self, b: usize, v: SecondVar) -> Option<usize> {
        self.index.get(&(b, v)).copied()
    }

    /// Rows of family `f` in block `b`, as absolute row indices.
    pub fn rows_of(&self, b: usize, f: Family) -> Vec<usize> {
        let blk = &self.blocks[b];
        (0..blk.families.len())
            .filter(|&i| blk.families[i] == f)
            .map(|i| blk.row_offset + i)
            .collect()
    }

    pub fn count_of(&self, f: Family) -> usize {
        self.blocks
            .iter()
            .map(|b| b.families.iter().filter(|&&g| g == f).count())
            .sum()
    }
}

/// First-stage rows: units per lot, units only where opened, budget.
pub(crate) fn first_stage_rows(inst: &Instance, p: &mut LpProblem) -> FirstStage {
    let fs = FirstStage::of(inst);
    let (nt, nl) = (fs.num_types, fs.num_lots);
    for n in 0..nt {
        for j in 0..nl {
            let c = p.add_integer_column(0.0, 1.0, 0.0);
            p.set_column_name(c, format!("x_{n}_{j}"));
        }
    }
    for n in 0..nt {
        for j in 0..nl {
            let c = p.add_integer_column(0.0, inst.lots[j].capacity.max(0) as f64, 0.0);
            p.set_column_name(c, format!("z_{n}_{j}"));
        }
    }
    for j in 0..nl {
        let k = inst.lots[j].capacity as f64;
        p.add_row((0..nt).map(|n| (fs.z(n, j), 1.0)).collect(), RowSense::Le, k);
    }
    for n in 0..nt {
        for j in 0..nl {
            let k = inst.lots[j].capacity as f64;
            p.add_row(vec![(fs.z(n, j), 1.0), (fs.x(n, j), -k)], RowSense::Le, 0.0);
        }
    }
    p.add_row(
        (0..nt)
            .flat_map(|n| (0..nl).map(move |j| (n, j)))
            .map(|(n, j)| (fs.z(n, j), inst.chargers[n].install_cost))
            .collect(),
        RowSense::Le,
        inst.budget,
    );
    fs
}

/// Deterministic equivalent from prepared second stages.
pub fn build_dep_from(inst: &Instance, stages: &[SecondStage]) -> Result<(LpProblem, VariableCatalog)> {
    if stages.is_empty() {
        return Err(Error::Build("no scenarios".into()));
    }
    let mut p = LpProblem::new(Sense::Maximize);
    let first = first_stage_rows(inst, &mut p);
    let mut blocks = Vec::with_capacity(stages.len());
    let mut index = HashMap::new();
    for (b, st) in stages.iter().enumerate() {
        if st.first != first {
            return Err(Error::Build(format!("scenario {} was built for another instance", st.scenario)));
        }
        let column_offset = p.num_columns();
        for (k, v) in st.vars.iter().enumerate() {
            let c = p.add_column(0.0, st.upper[k], st.probability * st.cost[k]);
            if index.insert((b, *v), c).is_some() {
                return Err(Error::Build(format!("duplicate variable {v:?} in scenario {}", st.scenario)));
            }
        }
        let row_offset = p.num_rows();
        for r in &st.rows {
            let mut coeffs: Vec<(usize, f64)> =
                r.coeffs.iter().map(|&(k, a)| (column_offset + k, a)).collect();
            coeffs.extend(r.links.iter().map(|&(k, a)| (k, -a)));
            p.add_row(coeffs, RowSense::Le, r.constant);
        }
        blocks.push(Block {
            scenario: st.scenario,
            column_offset,
            row_offset,
            vars: st.vars.clone(),
            families: st.rows.iter().map(|r| r.family).collect(),
        });
    }
    let catalog = VariableCatalog { first, blocks, index };
    if catalog.num_columns() != p.num_columns() || catalog.index.len() + first.len() != p.num_columns() {
        return Err(Error::Build("catalog does not cover every column".into()));
    }
    Ok((p, catalog))
}

pub fn build_dep(inst: &Instance, scenarios: &[Scenario]) -> Result<(LpProblem, VariableCatalog)> {
    let stages = scenarios
        .iter()
        .map(|s| SecondStage::from_scenario(inst, s))
        .collect::<Result<Vec<_>>>()?;
    build_dep_from(inst, &stages)
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub gap_tol: Option<f64>,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub branching: Branching,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DepSolution {
    pub design: NetworkDesign,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub status: LpStatus,
    pub nodes: usize,
    pub seconds: f64,
    #[serde(skip)]
    pub primal: Vec<f64>,
}

/// Solves a deterministic equivalent; the empty design seeds the search so an
/// incumbent always exists, even when a limit stops it early.
pub fn solve_dep(p: &LpProblem, catalog: &VariableCatalog, opts: &SolveOptions) -> Result<DepSolution> {
    let start = Instant::now();
    let mut milp = MilpOptions {
        time_limit: opts.time_limit,
        node_limit: opts.node_limit,
        initial_incumbent: Some(vec![0.0; p.num_columns()]),
        branching: opts.branching,
        ..Default::default()
    };
    if let Some(g) = opts.gap_tol {
        milp.gap_tol = g;
    }
    let r = solve_milp(p, &milp)?;
    if !r.has_incumbent() {
        return Err(Error::Solver(r.solution.status));
    }
    let v = &r.solution.primal[..catalog.first.len()];
    Ok(DepSolution {
        design: catalog.first.design(v),
        objective: r.solution.objective,
        best_bound: r.best_bound,
        gap: r.gap(),
        status: r.solution.status,
        nodes: r.nodes,
        seconds: start.elapsed().as_secs_f64(),
        primal: r.solution.primal,
    })
}
