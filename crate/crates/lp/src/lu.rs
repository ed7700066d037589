//! Sparse LU factorization of a simplex basis, with product-form eta updates
//! applied on top of the last factorization.
//!
//! Columns of the basis are addressed by *position* (0..m) and rows by their
//! constraint index. `ftran` maps a row-indexed right-hand side to a
//! position-indexed solution; `btran` maps position-indexed costs to
//! row-indexed multipliers.

const DROP_TOL: f64 = 1e-14;
const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const MARKOWITZ_CANDIDATES: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct Singular {
    /// Basis positions that could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot, paired one-to-one with `positions`.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Factor {
    pivot_row: Vec<usize>,
    pivot_pos: Vec<usize>,
    pivot_val: Vec<f64>,
    l_cols: Vec<Vec<(usize, f64)>>,
    u_rows: Vec<Vec<(usize, f64)>>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    lu_nnz: usize,
}

impl Factor {
    /// Factorizes the `m × m` matrix whose column at position `p` is `cols[p]`
    /// given as `(row, value)` pairs.
    pub(crate) fn factorize(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        // Active submatrix: column storage with values, row storage with positions.
        let mut col_entries: Vec<Vec<(usize, f64)>> = cols
            .iter()
            .map(|c| {
                let mut v: Vec<(usize, f64)> = Vec::with_capacity(c.len());
                for &(r, a) in c {
                    if a.abs() <= DROP_TOL {
                        continue;
                    }
                    if let Some(e) = v.iter_mut().find(|e| e.0 == r) {
                        e.1 += a;
                    } else {
                        v.push((r, a));
                    }
                }
                v
            })
            .collect();
        let mut row_positions: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, c) in col_entries.iter().enumerate() {
            for &(r, _) in c {
                row_positions[r].push(p);
            }
        }
        let mut col_active = vec![true; m];
        let mut row_active = vec![true; m];

        let mut f = Factor {
            ..Default::default()
        };
        let mut singular_positions = Vec::new();

        // Columns bucketed by active count; entries go stale when a column
        // changes length or is retired and are dropped lazily.
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); m + 1];
        for (p, c) in col_entries.iter().enumerate() {
            buckets[c.len()].push(p);
        }
        let mut min_count = 0;

        for _step in 0..m {
            // Pick the pivot by a restricted Markowitz search over the sparsest columns.
            let mut cands: Vec<(usize, usize)> = Vec::new(); // (count, position)
            let mut c = min_count;
            while c <= m && cands.len() < MARKOWITZ_CANDIDATES {
                let bucket = &mut buckets[c];
                let mut i = 0;
                while i < bucket.len() && cands.len() < MARKOWITZ_CANDIDATES {
                    let p = bucket[i];
                    if !col_active[p] || col_entries[p].len() != c || cands.iter().any(|e| e.1 == p) {
                        bucket.swap_remove(i);
                    } else {
                        cands.push((c, p));
                        i += 1;
                    }
                }
                if cands.is_empty() {
                    min_count = c + 1;
                }
                c += 1;
            }
            if cands.is_empty() {
                break;
            }
            cands.sort_unstable();

            let mut best: Option<(usize, usize, usize, f64)> = None; // (cost, pos, row, val)
            for &(count, p) in &cands {
                let col = &col_entries[p];
                let max_abs = col.iter().fold(0.0f64, |acc, e| acc.max(e.1.abs()));
                if max_abs <= SINGULAR_TOL {
                    continue;
                }
                for &(r, a) in col {
                    if a.abs() < PIVOT_THRESHOLD * max_abs {
                        continue;
                    }
                    let cost = (row_positions[r].len() - 1) * (count - 1);
                    let better = match best {
                        None => true,
                        Some((bc, bp, br, bv)) => {
                            cost < bc
                                || (cost == bc && a.abs() > bv.abs() * (1.0 + 1e-12))
                                || (cost == bc && a.abs() == bv.abs() && (p, r) < (bp, br))
                        }
                    };
                    if better {
                        best = Some((cost, p, r, a));
                    }
                }
                if matches!(best, Some((0, ..))) {
                    break;
                }
            }

            let (pp, pr, pv) = match best {
                Some((_, p, r, v)) => (p, r, v),
                None => {
                    // Every candidate column is numerically empty; retire them all.
                    for &(_, p) in &cands {
                        if col_entries[p].iter().all(|e| e.1.abs() <= SINGULAR_TOL) {
                            singular_positions.push(p);
                            col_active[p] = false;
                            for &(r, _) in &col_entries[p] {
                                row_positions[r].retain(|&q| q != p);
                            }
                            col_entries[p].clear();
                        }
                    }
                    continue;
                }
            };

            // L column: multipliers for the other rows in the pivot column.
            let mut l_col = Vec::new();
            for &(r, a) in &col_entries[pp] {
                if r != pr {
                    l_col.push((r, a / pv));
                }
            }
            // U row: the pivot row restricted to the other active columns.
            let mut u_row = Vec::new();
            let pivot_row_positions = std::mem::take(&mut row_positions[pr]);
            for &q in &pivot_row_positions {
                if q == pp {
                    continue;
                }
                let idx = col_entries[q]
                    .iter()
                    .position(|e| e.0 == pr)
                    .expect("row/column storage out of sync");
                let (_, a_rq) = col_entries[q].swap_remove(idx);
                u_row.push((q, a_rq));
                let before = col_entries[q].len();
                // Eliminate the pivot row from column q.
                for &(r, l) in &l_col {
                    let delta = -l * a_rq;
                    if let Some(e) = col_entries[q].iter_mut().find(|e| e.0 == r) {
                        e.1 += delta;
                    } else {
                        col_entries[q].push((r, delta));
                        row_positions[r].push(q);
                    }
                }
                let len = col_entries[q].len();
                if len != before + 1 {
                    buckets[len].push(q);
                    min_count = min_count.min(len);
                }
            }
            // Retire the pivot column from the row lists.
            for &(r, _) in &col_entries[pp] {
                if r != pr {
                    row_positions[r].retain(|&q| q != pp);
                }
            }
            col_entries[pp].clear();
            col_active[pp] = false;
            row_active[pr] = false;

            f.lu_nnz += l_col.len() + u_row.len() + 1;
            f.pivot_row.push(pr);
            f.pivot_pos.push(pp);
            f.pivot_val.push(pv);
            f.l_cols.push(l_col);
            f.u_rows.push(u_row);
        }

        if f.pivot_row.len() < m {
            for p in 0..m {
                if col_active[p] && !singular_positions.contains(&p) {
                    singular_positions.push(p);
                }
            }
            let rows: Vec<usize> = (0..m).filter(|&r| row_active[r]).collect();
            singular_positions.sort_unstable();
            return Err(Singular {
                positions: singular_positions,
                rows,
            });
        }
        Ok(f)
    }

    pub(crate) fn num_etas(&self) -> usize {
        self.etas.len()
    }

    pub(crate) fn fill_ratio(&self) -> f64 {
        (self.eta_nnz as f64) / (self.lu_nnz.max(1) as f64)
    }

    /// Solves `B x = b`. `work` holds `b` (row-indexed) on entry and is
    /// clobbered; the solution (position-indexed) is written to `out`.
    pub(crate) fn ftran(&self, work: &mut [f64], out: &mut [f64]) {
        for s in 0..self.pivot_row.len() {
            let br = work[self.pivot_row[s]];
            if br != 0.0 {
                for &(r, l) in &self.l_cols[s] {
                    work[r] -= l * br;
                }
            }
        }
        for s in (0..self.pivot_row.len()).rev() {
            let mut v = work[self.pivot_row[s]];
            for &(q, u) in &self.u_rows[s] {
                v -= u * out[q];
            }
            out[self.pivot_pos[s]] = v / self.pivot_val[s];
        }
        for eta in &self.etas {
            let xp = out[eta.pos];
            if xp != 0.0 {
                let t = xp / eta.pivot;
                out[eta.pos] = t;
                for &(i, a) in &eta.others {
                    out[i] -= a * t;
                }
            }
        }
    }

    /// Solves `Bᵀ y = c`. `work` holds `c` (position-indexed) on entry and is
    /// clobbered; the solution (row-indexed) is written to `out`.
    pub(crate) fn btran(&self, work: &mut [f64], out: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut v = work[eta.pos];
            for &(i, a) in &eta.others {
                v -= a * work[i];
            }
            work[eta.pos] = v / eta.pivot;
        }
        // Uᵀ w = c, scattered forward.
        for s in 0..self.pivot_row.len() {
            let w = work[self.pivot_pos[s]] / self.pivot_val[s];
            out[self.pivot_row[s]] = w;
            if w != 0.0 {
                for &(q, u) in &self.u_rows[s] {
                    work[q] -= u * w;
                }
            }
        }
        // Lᵀ y = w, gathered backward.
        for s in (0..self.pivot_row.len()).rev() {
            let mut v = out[self.pivot_row[s]];
            for &(r, l) in &self.l_cols[s] {
                v -= l * out[r];
            }
            out[self.pivot_row[s]] = v;
        }
    }

    /// Records that basis position `pos` is replaced by a column whose
    /// `ftran` image is `alpha`.
    pub(crate) fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let mut others = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > DROP_TOL {
                others.push((i, a));
            }
        }
        self.eta_nnz += others.len() + 1;
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            others,
        });
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|p| {
                (0..m)
                    .filter(|&r| a[r][p] != 0.0)
                    .map(|r| (r, a[r][p]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum())
            .collect()
    }

    fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = a.len();
        (0..m).map(|i| (0..m).map(|j| a[j][i]).collect()).collect()
    }

    #[test]
    fn solves_small_system_both_ways() {
        let a = vec![
            vec![4.0, 0.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 2.0, 5.0, 1.0],
            vec![0.0, 0.0, 1.0, 2.0],
        ];
        let f = Factor::factorize(4, &dense_to_cols(&a)).unwrap();
        let x_true = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = matvec(&a, &x_true);
        let mut x = vec![0.0; 4];
        f.ftran(&mut b, &mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
        let mut c = matvec(&transpose(&a), &x_true);
        let mut y = vec![0.0; 4];
        f.btran(&mut c, &mut y);
        for (u, v) in y.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_update_matches_refactorization() {
        let a = vec![
            vec![2.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 3.0],
        ];
        let mut f = Factor::factorize(3, &dense_to_cols(&a)).unwrap();
        let new_col = vec![1.0, 1.0, 1.0];
        let mut w = new_col.clone();
        let mut alpha = vec![0.0; 3];
        f.ftran(&mut w, &mut alpha);
        f.push_eta(1, &alpha);
        let mut b2 = a.clone();
        for r in 0..3 {
            b2[r][1] = new_col[r];
        }
        let x_true = vec![0.3, -1.0, 2.0];
        let mut rhs = matvec(&b2, &x_true);
        let mut x = vec![0.0; 3];
        f.ftran(&mut rhs, &mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
        let mut c = matvec(&transpose(&b2), &x_true);
        let mut y = vec![0.0; 3];
        f.btran(&mut c, &mut y);
        for (u, v) in y.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_positions() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let err = Factor::factorize(3, &dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
