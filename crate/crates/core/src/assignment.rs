//! Minimum-cost rectangular assignment.
//!
//! [`solve_assignment`] matches every column (embedding) of a `K × L` cost
//! matrix to a distinct row (codebook entry), `K ≥ L`, minimising the summed
//! cost. It is the shortest-augmenting-path form of the Hungarian method with
//! row/column potentials, `O(L² K)`, which is `O(n³)` for `n = max(K, L)`.
//!
//! Rows left unmatched behave exactly like rows matched to zero-cost padding
//! columns of a `K × K` problem: their potential stays zero.
//!
//! Among equal-cost optima the lexicographically smallest mapping vector is
//! returned. After the solve, optimal potentials identify the tight edges (zero
//! reduced cost); every optimal matching lives on them, so the mapping is
//! lowered column by column along alternating paths of tight edges.
//! [`brute_force_assignment`] applies the same rule by enumeration and is the
//! test oracle for small instances.

use std::collections::VecDeque;

use crate::error::{PivqError, Result};
use crate::types::Assignment;

/// Reduced costs within `TIE_RTOL · max|c| · (L + 1)` of zero count as ties.
const TIE_RTOL: f64 = 1e-10;

/// Largest column count accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_MAX_COLS: usize = 8;

/// A `rows × cols` matrix of finite costs with `rows ≥ cols`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(PivqError::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if rows < cols {
            return Err(PivqError::TooFewRows { rows, cols });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PivqError::NonFinite(pos));
        }
        Ok(CostMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(PivqError::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        CostMatrix::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sum of the selected entries, accumulated in column order.
    pub fn cost_of(&self, mapping: &[usize]) -> f64 {
        mapping
            .iter()
            .enumerate()
            .fold(0.0, |acc, (col, &row)| acc + self.get(row, col))
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn tie_tolerance(&self) -> f64 {
        TIE_RTOL * self.max_abs() * (self.cols as f64 + 1.0)
    }
}

/// Exact minimum-cost injective column→row assignment.
pub fn solve_assignment(cost: &CostMatrix) -> Assignment {
    let n = cost.cols;
    let m = cost.rows;
    if n == 0 {
        return Assignment {
            mapping: Vec::new(),
            total_cost: 0.0,
        };
    }

    // Transposed copy so the inner loop walks contiguous memory.
    let mut t = vec![0.0; n * m];
    for r in 0..m {
        for c in 0..n {
            t[c * m + r] = cost.values[r * n + c];
        }
    }

    // 1-based; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![f64::INFINITY; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row_costs = &t[(i0 - 1) * m..i0 * m];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row_costs[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_of_col = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            row_of_col[owner[j] - 1] = j - 1;
        }
    }

    let duals = Duals {
        col: u[1..].to_vec(),
        row: v[1..].to_vec(),
        eps: cost.tie_tolerance(),
    };
    lexicographic_refine(cost, &duals, &mut row_of_col);

    Assignment {
        total_cost: cost.cost_of(&row_of_col),
        mapping: row_of_col,
    }
}

struct Duals {
    col: Vec<f64>,
    row: Vec<f64>,
    eps: f64,
}

impl Duals {
    fn tight(&self, cost: &CostMatrix, row: usize, col: usize) -> bool {
        cost.get(row, col) - self.col[col] - self.row[row] <= self.eps
    }

    /// Whether `row` may be left unmatched (i.e. given to a zero-cost padding
    /// column) without losing optimality.
    fn releasable(&self, row: usize) -> bool {
        self.row[row] >= -self.eps
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Owner {
    Col(usize),
    Free,
}

/// Rewrites an optimal matching into the lexicographically smallest optimal
/// matching, moving only along tight edges.
fn lexicographic_refine(cost: &CostMatrix, duals: &Duals, row_of_col: &mut [usize]) {
    let n = cost.cols;
    let m = cost.rows;
    let mut owner = vec![Owner::Free; m];
    for (c, &r) in row_of_col.iter().enumerate() {
        owner[r] = Owner::Col(c);
    }
    let mut locked = vec![false; n];
    // Scratch for the BFS: node ids are columns, plus `n` for the free pool.
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n + 1];
    let mut seen_node = vec![false; n + 1];
    let mut seen_row = vec![false; m];

    for j in 0..n {
        let current = row_of_col[j];
        for r in 0..current {
            if !duals.tight(cost, r, j) {
                continue;
            }
            if let Owner::Col(c) = owner[r] {
                if locked[c] {
                    continue;
                }
            }
            let mut search = Reroute {
                cost,
                duals,
                owner: &mut owner,
                row_of_col,
                locked: &locked,
                prev: &mut prev,
                seen_node: &mut seen_node,
                seen_row: &mut seen_row,
            };
            if search.run(j, r) {
                break;
            }
        }
        locked[j] = true;
    }
}

struct Reroute<'a> {
    cost: &'a CostMatrix,
    duals: &'a Duals,
    owner: &'a mut [Owner],
    row_of_col: &'a mut [usize],
    locked: &'a [bool],
    prev: &'a mut [Option<(usize, usize)>],
    seen_node: &'a mut [bool],
    seen_row: &'a mut [bool],
}

impl Reroute<'_> {
    /// Tries to give row `r` to column `j`. The displaced owner of `r` must
    /// find a new row along tight edges, ending at the row `j` gives up.
    fn run(&mut self, j: usize, r: usize) -> bool {
        let n = self.cost.cols;
        let free_node = n;
        let released = self.row_of_col[j];
        self.prev.fill(None);
        self.seen_node.fill(false);
        self.seen_row.fill(false);
        self.seen_row[r] = true;

        let node_of = |o: Owner| match o {
            Owner::Col(c) => c,
            Owner::Free => free_node,
        };
        let start = node_of(self.owner[r]);
        self.seen_node[start] = true;
        let mut queue = VecDeque::from([start]);

        let mut end = None;
        'bfs: while let Some(x) = queue.pop_front() {
            for row in 0..self.cost.rows {
                if self.seen_row[row] {
                    continue;
                }
                let allowed = if x == free_node {
                    self.duals.releasable(row)
                } else {
                    self.duals.tight(self.cost, row, x)
                };
                if !allowed {
                    continue;
                }
                if row == released {
                    end = Some(x);
                    break 'bfs;
                }
                let y = node_of(self.owner[row]);
                if y == x || self.seen_node[y] || (y != free_node && (self.locked[y] || y == j)) {
                    continue;
                }
                self.seen_row[row] = true;
                self.seen_node[y] = true;
                self.prev[y] = Some((x, row));
                queue.push_back(y);
            }
        }

        let Some(last) = end else {
            return false;
        };
        self.take(last, released);
        let mut x = last;
        while x != start {
            let (px, row) = self.prev[x].expect("bfs parent");
            self.take(px, row);
            x = px;
        }
        self.take(j, r);
        true
    }

    fn take(&mut self, node: usize, row: usize) {
        if node == self.cost.cols {
            self.owner[row] = Owner::Free;
        } else {
            self.owner[row] = Owner::Col(node);
            self.row_of_col[node] = row;
        }
    }
}

/// Exhaustive minimum over all injective mappings, for `cols ≤ 8`.
///
/// Mappings are enumerated in lexicographic order; the first one whose cost is
/// within the tie tolerance of the minimum is returned.
pub fn brute_force_assignment(cost: &CostMatrix) -> Result<Assignment> {
    let n = cost.cols;
    if n > BRUTE_FORCE_MAX_COLS {
        return Err(PivqError::TooLarge(format!(
            "{n} columns (limit {BRUTE_FORCE_MAX_COLS})"
        )));
    }
    let mut best = f64::INFINITY;
    enumerate_injective(cost.rows, n, &mut |mapping| {
        best = best.min(cost.cost_of(mapping));
        true
    });
    let threshold = best + cost.tie_tolerance() * n as f64;
    let mut chosen = Vec::new();
    enumerate_injective(cost.rows, n, &mut |mapping| {
        if cost.cost_of(mapping) <= threshold {
            chosen = mapping.to_vec();
            false
        } else {
            true
        }
    });
    Ok(Assignment {
        total_cost: cost.cost_of(&chosen),
        mapping: chosen,
    })
}

/// Calls `visit` on every injective map `[0, cols) → [0, rows)` in
/// lexicographic order until it returns `false`.
fn enumerate_injective(rows: usize, cols: usize, visit: &mut dyn FnMut(&[usize]) -> bool) {
    fn rec(
        rows: usize,
        cols: usize,
        prefix: &mut Vec<usize>,
        used: &mut [bool],
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if prefix.len() == cols {
            return visit(prefix);
        }
        for r in 0..rows {
            if used[r] {
                continue;
            }
            used[r] = true;
            prefix.push(r);
            let go_on = rec(rows, cols, prefix, used, visit);
            prefix.pop();
            used[r] = false;
            if !go_on {
                return false;
            }
        }
        true
    }
    let mut used = vec![false; rows];
    rec(rows, cols, &mut Vec::with_capacity(cols), &mut used, visit);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn matrix(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> CostMatrix {
        let values = (0..rows * cols).map(|_| rng.uniform()).collect();
        CostMatrix::new(rows, cols, values).unwrap()
    }

    #[test]
    fn diagonal_optimum() {
        let c = matrix(&[&[0., 1., 1.], &[1., 0., 1.], &[1., 1., 0.]]);
        let a = solve_assignment(&c);
        assert_eq!(a.mapping, vec![0, 1, 2]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn three_by_three_example() {
        // Brute force over the 6 permutations: the unique minimum is 5, with
        // columns (0,1,2) taking rows (1,0,2).
        let c = matrix(&[&[4., 1., 3.], &[2., 0., 5.], &[3., 2., 2.]]);
        let a = solve_assignment(&c);
        assert_eq!(a.total_cost, 5.0);
        assert_eq!(a.mapping, vec![1, 0, 2]);
        assert_eq!(brute_force_assignment(&c).unwrap(), a);
    }

    #[test]
    fn rectangular_example() {
        let c = matrix(&[&[1., 9.], &[9., 1.], &[5., 5.]]);
        let a = solve_assignment(&c);
        assert_eq!(a.mapping, vec![0, 1]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn brute_force_small_cases() {
        let a = brute_force_assignment(&matrix(&[&[7.]])).unwrap();
        assert_eq!((a.mapping, a.total_cost), (vec![0], 7.0));
        let a = brute_force_assignment(&matrix(&[&[0., 1.], &[1., 0.]])).unwrap();
        assert_eq!((a.mapping, a.total_cost), (vec![0, 1], 0.0));
        let big = CostMatrix::new(9, 9, vec![0.0; 81]).unwrap();
        assert!(matches!(brute_force_assignment(&big), Err(PivqError::TooLarge(_))));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            CostMatrix::new(2, 3, vec![0.0; 6]),
            Err(PivqError::TooFewRows { rows: 2, cols: 3 })
        ));
        assert!(matches!(
            CostMatrix::new(1, 1, vec![f64::NAN]),
            Err(PivqError::NonFinite(0))
        ));
    }

    #[test]
    fn empty_columns() {
        let c = CostMatrix::new(3, 0, vec![]).unwrap();
        let a = solve_assignment(&c);
        assert!(a.mapping.is_empty());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn ties_take_lexicographically_smallest_mapping() {
        // Every mapping costs the same.
        let c = CostMatrix::new(4, 3, vec![1.0; 12]).unwrap();
        assert_eq!(solve_assignment(&c).mapping, vec![0, 1, 2]);
        // Two optima: (1,0) and (0,1) both cost 2; (0,1) is smaller.
        let c = matrix(&[&[1., 1.], &[1., 1.], &[5., 5.]]);
        assert_eq!(solve_assignment(&c).mapping, vec![0, 1]);
    }

    #[test]
    fn tie_break_matches_oracle_on_integer_matrices() {
        let mut rng = Rng::new(11);
        for _ in 0..500 {
            let cols = 1 + rng.below(5);
            let rows = cols + rng.below(3);
            let values = (0..rows * cols).map(|_| rng.below(3) as f64).collect();
            let c = CostMatrix::new(rows, cols, values).unwrap();
            assert_eq!(solve_assignment(&c), brute_force_assignment(&c).unwrap(), "{c:?}");
        }
    }

    #[test]
    fn zero_padding_gives_same_cost() {
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let rows = 2 + rng.below(6);
            let cols = 1 + rng.below(rows);
            let c = random_matrix(&mut rng, rows, cols);
            let mut padded = Vec::with_capacity(rows * rows);
            for r in 0..rows {
                padded.extend((0..rows).map(|k| if k < cols { c.get(r, k) } else { 0.0 }));
            }
            let square = CostMatrix::new(rows, rows, padded).unwrap();
            let a = solve_assignment(&c);
            let b = solve_assignment(&square);
            assert!((a.total_cost - b.total_cost).abs() < 1e-12);
            assert_eq!(a.mapping, b.mapping[..cols]);
        }
    }

    #[test]
    fn solver_matches_oracle_on_random_5x4() {
        let mut rng = Rng::new(99);
        for _ in 0..100 {
            let c = random_matrix(&mut rng, 5, 4);
            assert_eq!(solve_assignment(&c), brute_force_assignment(&c).unwrap());
        }
    }
}
