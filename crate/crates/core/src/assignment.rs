//! Linear assignment (Hungarian algorithm, O(n³) with dual potentials).

use crate::error::{Error, Result};

/// Minimum-cost perfect assignment for a square cost matrix.
///
/// Returns `assign` with `assign[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension("assignment cost matrix must be square".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based potentials over rows (u) and columns (v); col_match[j] = row owning column j
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
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
            for j in 0..=n {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[col_match[j] - 1] = j - 1;
    }
    Ok(assign)
}

pub fn assignment_cost(cost: &[Vec<f64>], assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Optimal assignment with ties broken toward the lexicographically smallest
/// `assign` vector. Costs within `rel_tol · max(1, |optimum|)` count as ties.
pub fn hungarian_lexicographic(cost: &[Vec<f64>], rel_tol: f64) -> Result<Vec<usize>> {
    let n = cost.len();
    let best = hungarian(cost)?;
    let optimum = assignment_cost(cost, &best);
    let tol = rel_tol * optimum.abs().max(1.0);
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let mut chosen = None;
        for col in (0..n).filter(|&c| !used[c]) {
            let rest_rows: Vec<usize> = ((row + 1)..n).collect();
            let rest_cols: Vec<usize> = (0..n).filter(|&c| !used[c] && c != col).collect();
            let sub: Vec<Vec<f64>> = rest_rows
                .iter()
                .map(|&r| rest_cols.iter().map(|&c| cost[r][c]).collect())
                .collect();
            let sub_assign = hungarian(&sub)?;
            let total = fixed_cost + cost[row][col] + assignment_cost(&sub, &sub_assign);
            if total <= optimum + tol {
                chosen = Some(col);
                break;
            }
        }
        // the optimal column always qualifies, so a choice exists
        let col = chosen.unwrap_or(best[row]);
        used[col] = true;
        fixed_cost += cost[row][col];
        fixed.push(col);
    }
    Ok(fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Permutation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        Permutation::all(cost.len())
            .iter()
            .map(|p| assignment_cost(cost, p.as_slice()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect();
                let a = hungarian(&cost).unwrap();
                assert!((assignment_cost(&cost, &a) - brute_force(&cost)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lexicographic_tie_break() {
        let cost = vec![vec![0.0; 3]; 3];
        assert_eq!(hungarian_lexicographic(&cost, 1e-12).unwrap(), vec![0, 1, 2]);
        let cost = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(hungarian_lexicographic(&cost, 1e-12).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn rejects_non_square() {
        assert!(hungarian(&[vec![1.0, 2.0]]).is_err());
    }
}
