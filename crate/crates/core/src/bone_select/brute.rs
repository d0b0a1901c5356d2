use super::{BoneError, BoneMatrix, CandidateScores};

/// Largest joint count the exhaustive search accepts.
pub const BRUTE_FORCE_MAX_JOINTS: usize = 7;

/// Costs within this distance of the optimum count as ties.
pub(crate) fn tie_tolerance(best: f64) -> f64 {
    1e-9 * (1.0 + best.abs())
}

struct Search<'a> {
    scores: &'a CandidateScores,
    targets: Vec<usize>,
    used: Vec<bool>,
    chosen: Vec<usize>,
}

impl Search<'_> {
    /// Visits complete assignments in lexicographic order of
    /// (source of targets[0], source of targets[1], ...).
    fn walk(&mut self, depth: usize, visit: &mut dyn FnMut(&[usize], f64) -> bool) -> bool {
        let v = self.scores.joints();
        if depth == self.targets.len() {
            let total = self
                .targets
                .iter()
                .zip(&self.chosen)
                .map(|(&t, &s)| self.scores.get(s, t))
                .sum();
            return visit(&self.chosen, total);
        }
        let t = self.targets[depth];
        for s in (0..v).filter(|&s| s != t) {
            let key = s.min(t) * v + s.max(t);
            if self.used[key] {
                continue;
            }
            self.used[key] = true;
            self.chosen.push(s);
            let stop = self.walk(depth + 1, visit);
            self.chosen.pop();
            self.used[key] = false;
            if stop {
                return true;
            }
        }
        false
    }
}

/// Exhaustive reference for [`super::select_min_assignment`], with the same
/// tie rule. Limited to `V ≤ 7`.
pub fn brute_force_select(scores: &CandidateScores, base: usize) -> Result<BoneMatrix, BoneError> {
    let v = scores.joints();
    if v > BRUTE_FORCE_MAX_JOINTS {
        return Err(BoneError::TooLarge {
            joints: v,
            max: BRUTE_FORCE_MAX_JOINTS,
        });
    }
    if base >= v {
        return Err(BoneError::InvalidBoneMatrix(format!(
            "base {base} out of range for {v} joints"
        )));
    }
    let targets: Vec<usize> = (0..v).filter(|&t| t != base).collect();
    let mut search = Search {
        scores,
        targets: targets.clone(),
        used: vec![false; v * v],
        chosen: Vec::with_capacity(v),
    };

    let mut best = f64::INFINITY;
    search.walk(0, &mut |_, total| {
        best = best.min(total);
        false
    });
    let tol = tie_tolerance(best);

    let mut pick = None;
    search.walk(0, &mut |chosen, total| {
        if total <= best + tol {
            pick = Some(chosen.to_vec());
            true
        } else {
            false
        }
    });

    let chosen = pick.expect("V >= 2 always admits an assignment");
    let mut sources = vec![None; v];
    for (&t, &s) in targets.iter().zip(&chosen) {
        sources[t] = Some(s);
    }
    BoneMatrix::from_sources(base, sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn three_joint_enumeration() {
        let m = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 0.5], [2.0, 0.5, 0.0]]).unwrap();
        let s = CandidateScores::new(m, 1).unwrap();
        let b = brute_force_select(&s, 0).unwrap();
        assert_eq!(s.assignment_cost(&b), 1.5);
        assert_eq!(b.pairs(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn counts_feasible_assignments_for_three_joints() {
        let s = CandidateScores::from_upper(3, |_, _| 1.0).unwrap();
        let mut search = Search {
            scores: &s,
            targets: vec![1, 2],
            used: vec![false; 9],
            chosen: Vec::new(),
        };
        let mut n = 0;
        search.walk(0, &mut |_, _| {
            n += 1;
            false
        });
        // (1<-0,2<-0), (1<-0,2<-1), (1<-2,2<-0); (1<-2,2<-1) reuses {1,2}.
        assert_eq!(n, 3);
    }

    #[test]
    fn too_large() {
        let s = CandidateScores::from_upper(8, |_, _| 1.0).unwrap();
        assert_eq!(
            brute_force_select(&s, 0),
            Err(BoneError::TooLarge { joints: 8, max: 7 })
        );
    }
}
