//! Maximum-weight one-to-one assignment (Kuhn–Munkres).

/// Solves the rectangular min-cost assignment problem with the
/// shortest-augmenting-path form of the Hungarian method.
///
/// `cost` is `rows × cols` with `rows <= cols`. Returns, for each row, the
/// assigned column.
fn min_cost_assignment(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    let m = cols;
    debug_assert!(n <= m);
    // 1-based potentials and matching; column 0 is a virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum-weight bipartite matching on a sparse weight matrix.
///
/// `weights[r][c]` is `Some(w)` for an admissible pair and `None` otherwise.
/// Pairs with non-positive weight never improve the objective and are
/// treated as inadmissible. Returns `(row, col)` pairs sorted by row.
pub fn max_weight_matching(weights: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.iter().map(|r| r.len()).max().unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let admissible = |r: usize, c: usize| -> Option<f64> {
        weights[r]
            .get(c)
            .copied()
            .flatten()
            .filter(|w| *w > 0.0 && w.is_finite())
    };
    // Inadmissible pairs cost 0, which equals leaving both sides unmatched
    // since every admissible weight is positive.
    let transpose = rows > cols;
    let (n, m) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let (r, c) = if transpose { (j, i) } else { (i, j) };
                    admissible(r, c).map_or(0.0, |w| -w)
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost, m);
    let mut out: Vec<(usize, usize)> = assignment
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let (r, c) = if transpose { (j, i) } else { (i, j) };
            admissible(r, c).map(|_| (r, c))
        })
        .collect();
    out.sort_unstable();
    out
}

/// Sum of the matched weights, accumulated in row order.
pub fn matching_weight(weights: &[Vec<Option<f64>>], pairs: &[(usize, usize)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted
        .iter()
        .map(|&(r, c)| weights[r][c].unwrap_or(0.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs() {
        assert!(max_weight_matching(&[]).is_empty());
        assert!(max_weight_matching(&[vec![], vec![]]).is_empty());
        assert!(max_weight_matching(&[vec![None, None]]).is_empty());
    }

    #[test]
    fn single_pair() {
        let w = vec![vec![None, Some(0.7)], vec![None, None]];
        assert_eq!(max_weight_matching(&w), vec![(0, 1)]);
    }

    #[test]
    fn prefers_total_over_greedy() {
        // Greedy picks (0,0)=0.9 then (1,1)=0.1 → 1.0; optimum is 0.8+0.8.
        let w = vec![vec![Some(0.9), Some(0.8)], vec![Some(0.8), Some(0.1)]];
        let m = max_weight_matching(&w);
        assert_eq!(m, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let tall = vec![vec![Some(0.5)], vec![Some(0.9)], vec![Some(0.2)]];
        assert_eq!(max_weight_matching(&tall), vec![(1, 0)]);
        let wide = vec![vec![Some(0.5), Some(0.9), None]];
        assert_eq!(max_weight_matching(&wide), vec![(0, 1)]);
    }
}
