//! Min-cost bipartite matching between target joints and unordered joint
//! pairs, solved by successive shortest augmenting paths (Dijkstra with
//! Johnson potentials on the residual graph).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{BoneError, BoneMatrix, CandidateScores};

#[derive(Clone)]
struct Edge {
    to: usize,
    cap: u8,
    cost: f64,
    rev: usize,
}

struct FlowGraph {
    adj: Vec<Vec<Edge>>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cost: f64) -> usize {
        let fwd = self.adj[from].len();
        let back = self.adj[to].len();
        self.adj[from].push(Edge {
            to,
            cap: 1,
            cost,
            rev: back,
        });
        self.adj[to].push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
            rev: fwd,
        });
        fwd
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    // Min-heap on distance, ties by node index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Solution {
    /// Right node chosen for each left node.
    right_of: Vec<usize>,
    /// Node potentials after the last augmentation (an optimal dual).
    potential: Vec<f64>,
    /// Offset of left node `a` in the potential vector is `1 + a`,
    /// of right node `r` is `1 + n_left + r`.
    n_left: usize,
}

/// Min-cost perfect matching of the left side. `edges[a]` lists
/// `(right, cost)` with non-negative costs. `None` if no perfect matching.
fn min_cost_matching(
    n_left: usize,
    n_right: usize,
    edges: &[Vec<(usize, f64)>],
) -> Option<Solution> {
    let src = 0;
    let sink = 1 + n_left + n_right;
    let n = sink + 1;
    let mut g = FlowGraph::new(n);
    for a in 0..n_left {
        g.add_edge(src, 1 + a, 0.0);
    }
    let mut left_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_left];
    for (a, list) in edges.iter().enumerate() {
        for &(r, c) in list {
            let idx = g.add_edge(1 + a, 1 + n_left + r, c);
            left_edges[a].push((r, idx));
        }
    }
    for r in 0..n_right {
        g.add_edge(1 + n_left + r, sink, 0.0);
    }

    let mut h = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    for _ in 0..n_left {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = None);
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, src));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (ei, e) in g.adj[u].iter().enumerate() {
                if e.cap == 0 {
                    continue;
                }
                // Reduced costs are non-negative up to rounding.
                let rc = (e.cost + h[u] - h[e.to]).max(0.0);
                let nd = d + rc;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = Some((u, ei));
                    heap.push(Item(nd, e.to));
                }
            }
        }
        if !dist[sink].is_finite() {
            return None;
        }
        for (hv, dv) in h.iter_mut().zip(&dist) {
            if dv.is_finite() {
                *hv += dv;
            }
        }
        let mut v = sink;
        while let Some((u, ei)) = prev[v] {
            let rev = g.adj[u][ei].rev;
            g.adj[u][ei].cap -= 1;
            g.adj[v][rev].cap += 1;
            v = u;
        }
    }

    let right_of = left_edges
        .iter()
        .enumerate()
        .map(|(a, list)| {
            list.iter()
                .find(|&&(_, idx)| g.adj[1 + a][idx].cap == 0)
                .map(|&(r, _)| r)
                .expect("every left node is matched")
        })
        .collect();
    Some(Solution {
        right_of,
        potential: h,
        n_left,
    })
}

impl Solution {
    fn reduced_cost(&self, left: usize, right: usize, cost: f64) -> f64 {
        cost + self.potential[1 + left] - self.potential[1 + self.n_left + right]
    }
}

/// Index of the unordered pair `{i, j}` among all `V(V−1)/2` pairs.
fn pair_index(v: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * v - a * (a + 1) / 2 + (b - a - 1)
}

struct Problem<F: Fn(usize, usize) -> f64> {
    v: usize,
    targets: Vec<usize>,
    cost: F,
}

impl<F: Fn(usize, usize) -> f64> Problem<F> {
    /// Solves for `targets[from..]` with `banned` pairs excluded. Returns the
    /// chosen source per target and the total cost (summed in target order).
    fn solve_suffix(&self, from: usize, banned: &[bool]) -> Option<(Vec<usize>, f64, Solution)> {
        let targets = &self.targets[from..];
        let n_pairs = self.v * (self.v - 1) / 2;
        let edges: Vec<Vec<(usize, f64)>> = targets
            .iter()
            .map(|&t| {
                (0..self.v)
                    .filter(|&s| s != t && !banned[pair_index(self.v, s, t)])
                    .map(|s| (pair_index(self.v, s, t), (self.cost)(s, t)))
                    .collect()
            })
            .collect();
        let sol = min_cost_matching(targets.len(), n_pairs, &edges)?;
        let sources: Vec<usize> = targets
            .iter()
            .zip(&sol.right_of)
            .map(|(&t, &r)| {
                (0..self.v)
                    .find(|&s| s != t && pair_index(self.v, s, t) == r)
                    .expect("pair contains target")
            })
            .collect();
        let total = targets
            .iter()
            .zip(&sources)
            .map(|(&t, &s)| (self.cost)(s, t))
            .sum();
        Some((sources, total, sol))
    }
}

/// Minimum-total-cost complete assignment; among optima (within a relative
/// tolerance of 1e-9) the one whose source sequence, read in ascending
/// target order, is lexicographically smallest.
fn assign_lexmin(v: usize, base: usize, cost: impl Fn(usize, usize) -> f64) -> BoneMatrix {
    let targets: Vec<usize> = (0..v).filter(|&t| t != base).collect();
    let problem = Problem {
        v,
        targets: targets.clone(),
        cost,
    };
    let n_pairs = v * (v - 1) / 2;
    let mut banned = vec![false; n_pairs];
    let (mut current, best, dual) = problem
        .solve_suffix(0, &banned)
        .expect("a complete assignment exists for V >= 2");
    let tol = super::brute::tie_tolerance(best);

    let mut fixed_cost = 0.0;
    for (k, &t) in targets.iter().enumerate() {
        for s in (0..v).filter(|&s| s != t) {
            let p = pair_index(v, s, t);
            if banned[p] {
                continue;
            }
            let c = (problem.cost)(s, t);
            if s == current[k] {
                fixed_cost += c;
                banned[p] = true;
                break;
            }
            // No optimal assignment uses an edge with positive reduced cost.
            if dual.reduced_cost(k, p, c) > tol {
                continue;
            }
            banned[p] = true;
            if let Some((rest, rest_cost, _)) = problem.solve_suffix(k + 1, &banned) {
                if fixed_cost + c + rest_cost <= best + tol {
                    fixed_cost += c;
                    current[k] = s;
                    current[k + 1..].copy_from_slice(&rest);
                    break;
                }
            }
            banned[p] = false;
        }
    }

    let mut sources = vec![None; v];
    for (&t, &s) in targets.iter().zip(&current) {
        sources[t] = Some(s);
    }
    BoneMatrix::from_sources(base, sources).expect("matching yields a valid bone matrix")
}

fn check_base(scores: &CandidateScores, base: usize) -> Result<(), BoneError> {
    if base >= scores.joints() {
        return Err(BoneError::InvalidBoneMatrix(format!(
            "base {base} out of range for {} joints",
            scores.joints()
        )));
    }
    Ok(())
}

/// The bone set minimizing the summed pair scores, one incoming bone per
/// non-base joint and no pair reused. Ties resolve to the lexicographically
/// smallest `(target, source)` sequence.
pub fn select_min_assignment(
    scores: &CandidateScores,
    base: usize,
) -> Result<BoneMatrix, BoneError> {
    check_base(scores, base)?;
    Ok(assign_lexmin(scores.joints(), base, |s, t| {
        scores.get(s, t)
    }))
}

/// Like [`select_min_assignment`] but maximizing the summed scores.
pub fn select_max_assignment(
    scores: &CandidateScores,
    base: usize,
) -> Result<BoneMatrix, BoneError> {
    check_base(scores, base)?;
    let v = scores.joints();
    let mut top: f64 = 0.0;
    for i in 0..v {
        for j in (i + 1)..v {
            top = top.max(scores.get(i, j));
        }
    }
    Ok(assign_lexmin(v, base, |s, t| top - scores.get(s, t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn three_joint() -> CandidateScores {
        let m = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 0.5], [2.0, 0.5, 0.0]]).unwrap();
        CandidateScores::new(m, 1).unwrap()
    }

    #[test]
    fn pair_indices_are_dense() {
        let v = 6;
        let mut seen = vec![false; v * (v - 1) / 2];
        for i in 0..v {
            for j in (i + 1)..v {
                let p = pair_index(v, i, j);
                assert!(!seen[p]);
                assert_eq!(p, pair_index(v, j, i));
                seen[p] = true;
            }
        }
        assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn three_joint_example() {
        let s = three_joint();
        let b = select_min_assignment(&s, 0).unwrap();
        assert_eq!(b.source_of(1), Some(0));
        assert_eq!(b.source_of(2), Some(1));
        assert_eq!(s.assignment_cost(&b), 1.5);
    }

    #[test]
    fn two_joints_forced() {
        let s = CandidateScores::from_upper(2, |_, _| 0.7).unwrap();
        let b = select_min_assignment(&s, 0).unwrap();
        assert_eq!(b.pairs(), vec![(0, 1)]);
    }

    #[test]
    fn all_equal_scores_pick_lexicographic_first() {
        let s = CandidateScores::from_upper(5, |_, _| 1.0).unwrap();
        let b = select_min_assignment(&s, 0).unwrap();
        // Target 1 takes source 0, then each later target the smallest free source.
        assert_eq!(b.pairs(), vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert!(b.is_complete());
    }

    #[test]
    fn nonzero_base() {
        let s = three_joint();
        let b = select_min_assignment(&s, 2).unwrap();
        assert_eq!(b.base(), 2);
        assert!(b.is_complete());
        // {0,1}=1.0 and {1,2}=0.5 cover targets 0 and 1.
        assert_eq!(s.assignment_cost(&b), 1.5);
    }

    #[test]
    fn max_assignment() {
        let s = three_joint();
        let b = select_max_assignment(&s, 0).unwrap();
        // {0,2}=2.0 must be used; target 1 then takes {0,1} or {1,2}.
        assert_eq!(s.assignment_cost(&b), 3.0);
    }

    #[test]
    fn base_out_of_range() {
        assert!(select_min_assignment(&three_joint(), 3).is_err());
    }
}
