//! Minimum-cost bipartite assignment and bbox overlap.

use crate::model::BBox;

/// Cost at or above which a pairing is treated as forbidden.
pub const FORBIDDEN_COST: f64 = 1e5;

/// Result of a rectangular assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// Matched `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    /// Sum of the kept pairs' costs.
    pub total_cost: f64,
}

/// Solves the rectangular assignment problem by shortest augmenting paths
/// (O(n^2 m)). Entries must be finite; `FORBIDDEN_COST` encodes "forbidden".
/// Pairs whose cost reaches `FORBIDDEN_COST` are stripped from the matching
/// and reported unmatched.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = if rows == 0 { 0 } else { cost[0].len() };
    if rows == 0 || cols == 0 {
        return Assignment {
            pairs: vec![],
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
            total_cost: 0.0,
        };
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    debug_assert!(
        cost.iter().flatten().all(|v| v.is_finite()),
        "cost entries must be finite"
    );

    // The core solver wants rows <= cols; transpose when necessary.
    let transposed = rows > cols;
    let at = |r: usize, c: usize| -> f64 {
        if transposed {
            cost[c][r]
        } else {
            cost[r][c]
        }
    };
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };

    // Potentials formulation with 1-based bookkeeping; col_match[j] holds the
    // row assigned to column j, 0 meaning unassigned.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; m + 1];
    let mut col_match = vec![0_usize; m + 1];
    let mut way = vec![0_usize; m + 1];

    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0_usize;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut total_cost = 0.0;
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for j in 1..=m {
        if col_match[j] == 0 {
            continue;
        }
        let (mut r, mut c) = (col_match[j] - 1, j - 1);
        if transposed {
            std::mem::swap(&mut r, &mut c);
        }
        if cost[r][c] >= FORBIDDEN_COST {
            continue;
        }
        pairs.push((r, c));
        total_cost += cost[r][c];
        row_used[r] = true;
        col_used[c] = true;
    }
    pairs.sort_unstable();

    Assignment {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        total_cost,
    }
}

/// Intersection-over-union of two bboxes, in [0,1].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive-permutation minimum over full matchings, mirroring the
    /// strip-forbidden-pairs reporting of `hungarian_assign`.
    pub(crate) fn brute_force_min_cost(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        let (n, m, flip) = if rows <= cols {
            (rows, cols, false)
        } else {
            (cols, rows, true)
        };
        let mut best = f64::INFINITY;
        let mut cols_perm: Vec<usize> = (0..m).collect();
        permute(&mut cols_perm, 0, n, &mut |perm| {
            let total: f64 = (0..n)
                .map(|r| {
                    let (rr, cc) = if flip { (perm[r], r) } else { (r, perm[r]) };
                    cost[rr][cc]
                })
                .sum();
            if total < best {
                best = total;
            }
        });
        best
    }

    /// Visits every ordered pick of `take` elements from `items`.
    fn permute(items: &mut Vec<usize>, start: usize, take: usize, visit: &mut impl FnMut(&[usize])) {
        if start == take {
            visit(&items[..take]);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, take, visit);
            items.swap(start, i);
        }
    }

    fn kept_total(cost: &[Vec<f64>]) -> f64 {
        hungarian_assign(cost).total_cost
    }

    #[test]
    fn diagonal_dominance() {
        let cost = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let result = hungarian_assign(&cost);
        assert_eq!(result.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(result.total_cost, 2.0);
        assert!(result.unmatched_rows.is_empty());
        assert!(result.unmatched_cols.is_empty());
    }

    #[test]
    fn single_cell_below_forbidden_matches() {
        let result = hungarian_assign(&[vec![5.0]]);
        assert_eq!(result.pairs, vec![(0, 0)]);
    }

    #[test]
    fn empty_matrix_is_empty_result() {
        let result = hungarian_assign(&[]);
        assert!(result.pairs.is_empty());
        assert!(result.unmatched_rows.is_empty());
        assert!(result.unmatched_cols.is_empty());
    }

    #[test]
    fn forbidden_pairs_are_stripped() {
        let cost = vec![vec![FORBIDDEN_COST, 1.0], vec![FORBIDDEN_COST, FORBIDDEN_COST]];
        let result = hungarian_assign(&cost);
        assert_eq!(result.pairs, vec![(0, 1)]);
        assert_eq!(result.unmatched_rows, vec![1]);
        assert_eq!(result.unmatched_cols, vec![0]);
    }

    #[test]
    fn random_matrices_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(0..100) as f64).collect())
                .collect();
            let fast = kept_total(&cost);
            let slow = brute_force_min_cost(&cost);
            assert!(
                (fast - slow).abs() < 1e-9,
                "mismatch: fast={fast} slow={slow} cost={cost:?}"
            );
        }
    }

    #[test]
    fn rectangular_reports_unmatched() {
        let cost = vec![vec![3.0, 1.0, 2.0]];
        let result = hungarian_assign(&cost);
        assert_eq!(result.pairs, vec![(0, 1)]);
        assert_eq!(result.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn iou_identical_boxes() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&b, &b), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(20.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }
}
