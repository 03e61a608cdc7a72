use serde::{Deserialize, Serialize};

/// Injective cluster -> class assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    /// Class index per cluster; `None` for clusters left unassigned.
    pub cluster_to_class: Vec<Option<usize>>,
    /// Total count on the matched cells.
    pub agreement: u64,
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`)
/// by the shortest augmenting path method with potentials, `O(rows^2 cols)`.
fn assign_rows(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    debug_assert!(n <= m);
    // 1-based with a virtual column 0
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
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
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Maximise matched counts in a `clusters x classes` contingency table.
/// With more clusters than classes the surplus clusters stay unassigned;
/// with fewer, some classes receive no cluster.
pub fn hungarian_map(contingency: &[Vec<u64>]) -> Mapping {
    let k = contingency.len();
    let c = contingency.first().map_or(0, Vec::len);
    if k == 0 || c == 0 {
        return Mapping {
            cluster_to_class: vec![None; k],
            agreement: 0,
        };
    }
    let neg = |x: u64| -(x as i64);
    let mut cluster_to_class = vec![None; k];
    if k <= c {
        let cost: Vec<Vec<i64>> = contingency.iter().map(|r| r.iter().map(|&x| neg(x)).collect()).collect();
        for (i, j) in assign_rows(&cost).into_iter().enumerate() {
            cluster_to_class[i] = Some(j);
        }
    } else {
        let cost: Vec<Vec<i64>> = (0..c).map(|j| (0..k).map(|i| neg(contingency[i][j])).collect()).collect();
        for (j, i) in assign_rows(&cost).into_iter().enumerate() {
            cluster_to_class[i] = Some(j);
        }
    }
    let agreement = cluster_to_class
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| contingency[i][j]))
        .sum();
    Mapping {
        cluster_to_class,
        agreement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_swapped() {
        let m = hungarian_map(&[vec![5, 0], vec![0, 7]]);
        assert_eq!(m.cluster_to_class, vec![Some(0), Some(1)]);
        assert_eq!(m.agreement, 12);
        let m = hungarian_map(&[vec![0, 5], vec![7, 0]]);
        assert_eq!(m.cluster_to_class, vec![Some(1), Some(0)]);
        assert_eq!(m.agreement, 12);
    }

    #[test]
    fn rectangular_tables() {
        let m = hungarian_map(&[vec![1, 9], vec![8, 2], vec![5, 5]]);
        assert_eq!(m.agreement, 17);
        assert_eq!(m.cluster_to_class.iter().filter(|c| c.is_none()).count(), 1);
        let m = hungarian_map(&[vec![1, 9, 4]]);
        assert_eq!(m.cluster_to_class, vec![Some(1)]);
    }
}
