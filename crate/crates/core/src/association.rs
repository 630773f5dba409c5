//! Bipartite matching of trajectories (rows) to detections (columns).
//!
//! The default objective maximizes `‖A ⊙ X‖₂`. Because `A ≥ 0` this is the
//! same as maximizing `Σ A(u,v)²` over the selected cells, which is a
//! linear assignment on squared affinities and is solved exactly with the
//! Hungarian method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{AffinityMatrix, MatchingMatrix};

/// Largest dimension accepted by [`brute_force_matching`].
pub const BRUTE_FORCE_LIMIT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MatchObjective {
    /// Maximize `‖A ⊙ X‖₂` (squared-affinity assignment).
    #[default]
    L2,
    /// Maximize `Σ A ⊙ X`.
    LinearSum,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_trajs: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
}

/// Optimal matching under the L2 objective.
pub fn solve_matching(a: &AffinityMatrix) -> Result<MatchingMatrix> {
    solve_matching_with(a, MatchObjective::L2)
}

pub fn solve_matching_with(a: &AffinityMatrix, objective: MatchObjective) -> Result<MatchingMatrix> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 {
        return Ok(MatchingMatrix::empty(rows, cols));
    }
    let weight = |v: f64| match objective {
        MatchObjective::L2 => v * v,
        MatchObjective::LinearSum => v,
    };
    let n = rows.max(cols);
    let max_w = a.values().iter().map(|v| weight(*v)).fold(0.0, f64::max);
    if !max_w.is_finite() {
        return Err(Error::InvalidMatrix("affinity overflows the objective".into()));
    }
    // padded cells carry weight 0, i.e. cost max_w
    let mut cost = vec![max_w; n * n];
    for r in 0..rows {
        for c in 0..cols {
            cost[r * n + c] = max_w - weight(a.get(r, c));
        }
    }
    let assignment = hungarian_min(&cost, n);
    let pairs = assignment
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| r < rows && c < cols && a.get(r, c) > 0.0)
        .collect();
    MatchingMatrix::from_pairs(rows, cols, pairs)
}

/// Minimum-cost perfect assignment on a square `n × n` row-major matrix
/// using shortest augmenting paths with vertex potentials, O(n³).
/// Returns the column assigned to each row.
fn hungarian_min(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based bookkeeping; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Exhaustive search over every partial injective assignment.
///
/// Returns the optimal `‖A ⊙ X‖₂` and the first optimal matching found in
/// lexicographic enumeration order, without zero-affinity cells.
pub fn brute_force_matching(a: &AffinityMatrix) -> Result<(f64, MatchingMatrix)> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows.max(cols) > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            rows,
            cols,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    struct Search<'a> {
        a: &'a AffinityMatrix,
        col_used: Vec<bool>,
        current: Vec<Option<usize>>,
        best: f64,
        best_assignment: Vec<Option<usize>>,
    }
    impl Search<'_> {
        fn visit(&mut self, row: usize, acc: f64) {
            if row == self.a.rows() {
                if acc > self.best {
                    self.best = acc;
                    self.best_assignment = self.current.clone();
                }
                return;
            }
            for c in 0..self.a.cols() {
                if !self.col_used[c] {
                    self.col_used[c] = true;
                    self.current[row] = Some(c);
                    let v = self.a.get(row, c);
                    self.visit(row + 1, acc + v * v);
                    self.col_used[c] = false;
                }
            }
            self.current[row] = None;
            self.visit(row + 1, acc);
        }
    }
    let mut search = Search {
        a,
        col_used: vec![false; cols],
        current: vec![None; rows],
        best: -1.0,
        best_assignment: vec![None; rows],
    };
    search.visit(0, 0.0);
    let pairs = search
        .best_assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c)))
        .filter(|&(r, c)| a.get(r, c) > 0.0)
        .collect();
    Ok((search.best.max(0.0).sqrt(), MatchingMatrix::from_pairs(rows, cols, pairs)?))
}

/// Split a matching into accepted pairs and unmatched rows/columns,
/// dissolving pairs whose affinity is below `threshold`.
pub fn gate(x: &MatchingMatrix, a: &AffinityMatrix, threshold: f64) -> Result<MatchResult> {
    if (x.rows(), x.cols()) != (a.rows(), a.cols()) {
        return Err(Error::InvalidMatrix(format!(
            "matching {}x{} vs affinity {}x{}",
            x.rows(),
            x.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let mut row_done = vec![false; x.rows()];
    let mut col_done = vec![false; x.cols()];
    let mut pairs = Vec::new();
    for &(r, c) in x.pairs() {
        if a.get(r, c) >= threshold {
            row_done[r] = true;
            col_done[c] = true;
            pairs.push((r, c));
        }
    }
    let unmatched = |done: &[bool]| done.iter().enumerate().filter(|(_, d)| !**d).map(|(i, _)| i).collect();
    Ok(MatchResult {
        pairs,
        unmatched_trajs: unmatched(&row_done),
        unmatched_dets: unmatched(&col_done),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[Vec<f64>]) -> AffinityMatrix {
        AffinityMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_cell() {
        let a = m(&[vec![5.0]]);
        let x = solve_matching(&a).unwrap();
        assert_eq!(x.pairs(), &[(0, 0)]);
        let (obj, bx) = brute_force_matching(&a).unwrap();
        assert_eq!(obj, 5.0);
        assert_eq!(bx.to_dense(), vec![vec![1]]);
    }

    #[test]
    fn diagonal_beats_anti_diagonal() {
        let a = m(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let x = solve_matching(&a).unwrap();
        assert_eq!(x.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(x.objective(&a), 8.0f64.sqrt());
    }

    #[test]
    fn tied_rectangular_optimum() {
        let a = m(&[vec![3.0, 3.0, 0.0], vec![0.0, 3.0, 3.0]]);
        let x = solve_matching(&a).unwrap();
        let (obj, _) = brute_force_matching(&a).unwrap();
        assert_eq!(obj, 18.0f64.sqrt());
        assert_eq!(x.objective(&a), obj);
        assert!(x.pairs() == [(0, 0), (1, 1)] || x.pairs() == [(0, 1), (1, 2)]);
    }

    #[test]
    fn squared_objective_prefers_one_strong_match() {
        // linear sum: 3 + 3 = 6 > 5; squared: 25 > 18
        let a = m(&[vec![5.0, 3.0], vec![3.0, 0.0]]);
        let l2 = solve_matching(&a).unwrap();
        assert_eq!(l2.pairs(), &[(0, 0)]);
        let lin = solve_matching_with(&a, MatchObjective::LinearSum).unwrap();
        assert_eq!(lin.pairs(), &[(0, 1), (1, 0)]);
    }

    #[test]
    fn zero_matrix_has_no_pairs() {
        let a = AffinityMatrix::zeros(3, 2);
        assert!(solve_matching(&a).unwrap().pairs().is_empty());
        let (obj, x) = brute_force_matching(&a).unwrap();
        assert_eq!(obj, 0.0);
        assert!(x.pairs().is_empty());
    }

    #[test]
    fn empty_shapes() {
        let a = AffinityMatrix::zeros(0, 4);
        let x = solve_matching(&a).unwrap();
        assert_eq!((x.rows(), x.cols()), (0, 4));
    }

    #[test]
    fn brute_force_dimension_limit() {
        let a = AffinityMatrix::zeros(10, 2);
        assert!(matches!(brute_force_matching(&a), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn gate_examples() {
        let a = m(&[vec![2.0, 0.0], vec![0.0, 0.3]]);
        let x = MatchingMatrix::from_pairs(2, 2, vec![(0, 0), (1, 1)]).unwrap();
        let r = gate(&x, &a, 0.0).unwrap();
        assert_eq!(r.pairs, vec![(0, 0), (1, 1)]);

        let r = gate(&x, &a, 2.5).unwrap();
        assert!(r.pairs.is_empty());
        assert_eq!(r.unmatched_trajs, vec![0, 1]);
        assert_eq!(r.unmatched_dets, vec![0, 1]);

        let r = gate(&x, &a, 0.5).unwrap();
        assert_eq!(r.pairs, vec![(0, 0)]);
        assert_eq!(r.unmatched_trajs, vec![1]);
        assert_eq!(r.unmatched_dets, vec![1]);
    }

    #[test]
    fn gate_shape_mismatch() {
        let a = AffinityMatrix::zeros(2, 2);
        let x = MatchingMatrix::empty(2, 3);
        assert!(gate(&x, &a, 0.1).is_err());
    }

    fn arb_matrix(max: usize) -> impl Strategy<Value = AffinityMatrix> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec(0.0f64..3.0, r * c)
                .prop_map(move |v| AffinityMatrix::new(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in arb_matrix(5)) {
            let x = solve_matching(&a).unwrap();
            prop_assert!(x.satisfies_constraints());
            let (obj, bx) = brute_force_matching(&a).unwrap();
            prop_assert!(bx.satisfies_constraints());
            prop_assert!((x.objective(&a) - obj).abs() <= 1e-9);
        }

        #[test]
        fn scaling_preserves_optimum(a in arb_matrix(5), c in 0.1f64..10.0) {
            let scaled = a.scaled(c).unwrap();
            let x = solve_matching(&a).unwrap();
            let xs = solve_matching(&scaled).unwrap();
            let (obj, _) = brute_force_matching(&a).unwrap();
            // the scaled problem's optimum is an optimum of the original
            prop_assert!((xs.objective(&a) - obj).abs() <= 1e-9 * (1.0 + obj));
            prop_assert!((xs.objective(&scaled) - c * x.objective(&a)).abs() <= 1e-9 * (1.0 + c * obj));
        }

        #[test]
        fn gate_never_emits_below_threshold(a in arb_matrix(6), theta in 0.0f64..3.0) {
            let x = solve_matching(&a).unwrap();
            let r = gate(&x, &a, theta).unwrap();
            prop_assert!(r.pairs.iter().all(|&(u, v)| a.get(u, v) >= theta));
            prop_assert_eq!(r.pairs.len() + r.unmatched_trajs.len(), a.rows());
            prop_assert_eq!(r.pairs.len() + r.unmatched_dets.len(), a.cols());
        }

        #[test]
        fn linear_sum_mode_matches_enumeration(a in arb_matrix(4)) {
            let x = solve_matching_with(&a, MatchObjective::LinearSum).unwrap();
            // enumerate with linear weights via sqrt trick: A' = sqrt(A)
            let root = AffinityMatrix::new(a.rows(), a.cols(), a.values().iter().map(|v| v.sqrt()).collect()).unwrap();
            let (obj, _) = brute_force_matching(&root).unwrap();
            prop_assert!((x.linear_objective(&a) - obj * obj).abs() <= 1e-9);
        }
    }
}
