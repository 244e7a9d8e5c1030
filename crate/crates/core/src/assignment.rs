//! One-to-one assignment on rectangular affinity matrices.

/// Hungarian method (shortest augmenting paths with potentials), maximizing
/// the total affinity. `rows[i]` is the column assigned to row `i`; every row
/// is assigned when there are at least as many columns as rows, otherwise
/// every column is.
pub fn hungarian_max(affinity: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = affinity.len();
    let m = affinity.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| affinity[i][j]).collect()).collect();
        let cols = hungarian_max(&transposed);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return rows;
    }

    // minimize the negated affinity; 1-based with a virtual column 0
    let cost = |i: usize, j: usize| -affinity[i - 1][j - 1];
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
                let cur = cost(i0, j) - u[i0] - v[j];
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
    let mut rows = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            rows[p[j] - 1] = Some(j - 1);
        }
    }
    rows
}

/// Repeatedly takes the largest remaining entry. Ties go to the lowest
/// row-major index.
pub fn greedy_max(affinity: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = affinity.len();
    let m = affinity.first().map_or(0, Vec::len);
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    cells.sort_by(|a, b| affinity[b.0][b.1].total_cmp(&affinity[a.0][a.1]));
    let mut rows = vec![None; n];
    let mut col_used = vec![false; m];
    for (i, j) in cells {
        if rows[i].is_none() && !col_used[j] {
            rows[i] = Some(j);
            col_used[j] = true;
        }
    }
    rows
}

pub fn total_affinity(affinity: &[Vec<f64>], rows: &[Option<usize>]) -> f64 {
    rows.iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| affinity[i][j]))
        .sum()
}
