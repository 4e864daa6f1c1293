//! Rectangular minimum-cost assignment (Hungarian method with potentials).

/// Solves `min sum cost[i][assign[i]]` over injective row-to-column maps
/// (or column-to-row when there are fewer columns). Returns, per row, the
/// assigned column if any. `cost` must be rectangular and finite.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve(rows, cols, |i, j| cost[i][j])
    } else {
        let by_col = solve(cols, rows, |i, j| cost[j][i]);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    }
}

/// `n <= m`; every row gets a column.
fn solve(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    // 1-based arrays as in the classic formulation; index 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Maximum-weight matching where only pairs with `weight >= threshold` may
/// be matched. Returns `(row, col, weight)` triples sorted by row.
pub fn max_weight_matching(weight: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize, f64)> {
    let cost: Vec<Vec<f64>> = weight
        .iter()
        .map(|row| row.iter().map(|&w| if w >= threshold { -w } else { 0.0 }).collect())
        .collect();
    min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let j = j?;
            let w = weight[i][j];
            (w >= threshold).then_some((i, j, w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i][j] + rec(cost, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost[0].len()])
    }

    #[test]
    fn matches_brute_force_on_small_square() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, j)| cost[i][j.unwrap()]).sum();
        assert_eq!(total, brute_force(&cost));
        assert_eq!(total, 5.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let cost = vec![vec![1.0, 9.0, 0.5, 7.0], vec![3.0, 0.1, 4.0, 2.0]];
        let a = min_cost_assignment(&cost);
        assert_eq!(a, vec![Some(2), Some(1)]);
        let t: Vec<Vec<f64>> = (0..4).map(|j| cost.iter().map(|r| r[j]).collect()).collect();
        let b = min_cost_assignment(&t);
        assert_eq!(b, vec![None, Some(1), Some(0), None]);
    }

    #[test]
    fn threshold_discards_weak_pairs() {
        // One column, two rows: 0.9 beats 0.6.
        let w = vec![vec![0.9], vec![0.6]];
        assert_eq!(max_weight_matching(&w, 0.5), vec![(0, 0, 0.9)]);
        let w = vec![vec![0.4]];
        assert!(max_weight_matching(&w, 0.5).is_empty());
    }

    #[test]
    fn random_against_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..5);
            let m = rng.random_range(n..6);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let a = min_cost_assignment(&cost);
            let total: f64 = a.iter().enumerate().map(|(i, j)| cost[i][j.unwrap()]).sum();
            assert!((total - brute_force(&cost)).abs() < 1e-9);
        }
    }
}
