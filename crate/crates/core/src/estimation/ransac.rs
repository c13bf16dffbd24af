use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cal_tf, AnchorPair, CorrectionResult};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Transform2D};
use crate::keypoints::{KeypointSet, LabeledPoint, PointClass};
use crate::matching::{build_candidates, ConsensusIndex, MatchCandidate, MatchParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Upper bound on hypotheses per call.
    pub n_ransac: usize,
    pub matching: MatchParams,
    pub seed: u64,
    /// Evaluate every pair of candidates and every neighbor choice instead of
    /// sampling. `n_ransac` is ignored in this mode.
    #[serde(default)]
    pub exhaustive: bool,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            n_ransac: 30,
            matching: MatchParams::default(),
            seed: 0,
            exhaustive: false,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_ransac == 0 {
            return Err(Error::invalid("n_ransac", "must be >= 1"));
        }
        self.matching.validate()
    }
}

/// Number of unordered pairs, `C(n, 2)`.
fn pairs_of(n: usize) -> usize {
    n.saturating_sub(1).saturating_mul(n) / 2
}

struct Search<'a> {
    coop_points: &'a [LabeledPoint],
    coop_anchor_idx: Vec<usize>,
    ego_anchor_idx: Vec<usize>,
    coop_anchors: Vec<LabeledPoint>,
    ego_anchors: Vec<LabeledPoint>,
    all_index: ConsensusIndex,
    anchor_index: ConsensusIndex,
    best: CorrectionResult,
    iterations: usize,
    scratch: Vec<(Point2, PointClass)>,
}

impl Search<'_> {
    /// Scores the hypothesis built from two candidate matches. Returns false
    /// when the hypothesis is degenerate and does not count as an iteration.
    fn evaluate(&mut self, m1: (&MatchCandidate, usize), m2: (&MatchCandidate, usize)) -> bool {
        let a1 = m1.0.neighbors[m1.1].index;
        let a2 = m2.0.neighbors[m2.1].index;
        if a1 == a2 {
            return false;
        }
        let pairs = [
            (self.coop_anchors[m1.0.coop].position(), self.ego_anchors[a1].position()),
            (self.coop_anchors[m2.0.coop].position(), self.ego_anchors[a2].position()),
        ];
        let Ok(t) = cal_tf(&pairs) else {
            return false;
        };
        self.iterations += 1;

        self.scratch.clear();
        self.scratch
            .extend(self.coop_points.iter().map(|p| (t.apply(p.position()), p.class)));
        let n_cons = self.all_index.count(self.scratch.iter().copied());
        if n_cons > self.best.n_cons {
            self.refine(&t, n_cons);
        }
        true
    }

    /// Re-matches anchors under `t` and refits from every correspondence.
    fn refine(&mut self, t: &Transform2D, n_cons: usize) {
        let mut correspondences = Vec::new();
        let mut pairs = Vec::new();
        for (bi, b) in self.coop_anchors.iter().enumerate() {
            if let Some(ai) = self.anchor_index.nearest(t.apply(b.position()), b.class) {
                correspondences.push(AnchorPair {
                    coop: self.coop_anchor_idx[bi],
                    ego: self.ego_anchor_idx[ai],
                });
                pairs.push((b.position(), self.ego_anchors[ai].position()));
            }
        }
        let transform = if pairs.len() >= 2 {
            cal_tf(&pairs).unwrap_or_else(|_| Transform2D::identity())
        } else {
            Transform2D::identity()
        };
        let previous = self.best.n_cons;
        self.best = CorrectionResult {
            transform,
            n_cons,
            correspondences,
            iterations_run: 0,
        };
        debug_assert!(self.best.n_cons > previous);
    }
}

/// Estimates the correction that aligns `coop_in_ego` (cooperative keypoints
/// already mapped into the ego frame with the erroneous relative transform)
/// to `ego`.
///
/// Each cooperative anchor is matched to its nearest same-class ego anchors
/// within `epsilon1`. Every hypothesis draws two distinct matched cooperative
/// anchors, picks one of the ego neighbors for each, fits a rigid transform
/// to the two pairs and counts how many cooperative points (anchors and
/// planar) land within `epsilon2` of a same-class ego point. Whenever the
/// count improves, anchors are re-matched under the hypothesis and the output
/// transform is refit from all anchor correspondences (identity when fewer
/// than two exist).
///
/// At most `min(n_ransac, C(m, 2))` hypotheses are evaluated, where `m` is
/// the total number of candidate neighbor pairs. Hypotheses whose two ego
/// anchors coincide are discarded and not counted. With fewer than two
/// matched cooperative anchors the identity is returned with `n_cons == 0`.
pub fn ransac_correct(ego: &KeypointSet, coop_in_ego: &KeypointSet, params: &RansacParams) -> CorrectionResult {
    let (ego_anchor_idx, ego_anchors) = anchors_of(ego);
    let (coop_anchor_idx, coop_anchors) = anchors_of(coop_in_ego);
    let candidates = build_candidates(&ego_anchors, &coop_anchors, &params.matching);
    if candidates.len() < 2 {
        return CorrectionResult::identity();
    }

    let eps2 = params.matching.epsilon2;
    let mut search = Search {
        coop_points: &coop_in_ego.points,
        all_index: ConsensusIndex::new(&ego.points, eps2),
        anchor_index: ConsensusIndex::new(&ego_anchors, eps2),
        coop_anchor_idx,
        ego_anchor_idx,
        coop_anchors,
        ego_anchors,
        best: CorrectionResult::identity(),
        iterations: 0,
        scratch: Vec::with_capacity(coop_in_ego.len()),
    };

    if params.exhaustive {
        for i in 0..candidates.len() {
            for j in i + 1..candidates.len() {
                for k in 0..candidates[i].neighbors.len() {
                    for l in 0..candidates[j].neighbors.len() {
                        search.evaluate((&candidates[i], k), (&candidates[j], l));
                    }
                }
            }
        }
    } else {
        let flattened: usize = candidates.iter().map(|c| c.neighbors.len()).sum();
        let budget = params.n_ransac.min(pairs_of(flattened));
        // Discarded draws do not count; bound the retries so a scene whose
        // candidates all share one ego anchor still terminates.
        let max_draws = budget.saturating_mul(10).max(100);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut draws = 0;
        while search.iterations < budget && draws < max_draws {
            draws += 1;
            let picked = index::sample(&mut rng, candidates.len(), 2);
            let (c1, c2) = (&candidates[picked.index(0)], &candidates[picked.index(1)]);
            let k = rng.random_range(0..c1.neighbors.len());
            let l = rng.random_range(0..c2.neighbors.len());
            search.evaluate((c1, k), (c2, l));
        }
    }

    let mut result = search.best;
    result.iterations_run = search.iterations;
    result
}

fn anchors_of(set: &KeypointSet) -> (Vec<usize>, Vec<LabeledPoint>) {
    set.points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class.is_anchor())
        .map(|(i, p)| (i, p.clone()))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::Frame;

    fn set(points: &[(f64, f64, PointClass)]) -> KeypointSet {
        KeypointSet::new("t", "v", Frame::Ego)
            .with_points(points.iter().map(|&(x, y, c)| LabeledPoint::new(x, y, c)).collect())
    }

    fn scene() -> Vec<(f64, f64, PointClass)> {
        vec![
            (3.0, 4.0, PointClass::Pole),
            (-12.0, 7.5, PointClass::Pole),
            (20.0, -6.0, PointClass::VehicleCenter),
            (8.0, 15.0, PointClass::VehicleCenter),
            (-5.0, -18.0, PointClass::Pole),
            (14.0, 2.0, PointClass::Planar),
            (14.0, 6.0, PointClass::Planar),
        ]
    }

    #[test]
    fn identical_sets_give_identity() {
        let s = set(&scene());
        let r = ransac_correct(&s, &s, &RansacParams::default());
        assert!(r.transform.max_abs_diff(&Transform2D::identity()) < 1e-6);
        assert_eq!(r.n_cons, s.len());
    }

    #[test]
    fn two_anchor_refinement_and_single_anchor_identity() {
        let ego = set(&[(0.0, 0.0, PointClass::Pole), (10.0, 0.0, PointClass::Pole)]);
        let coop = ego.transformed(&Transform2D::new(0.0, 0.3, 0.0), Frame::Ego);
        let r = ransac_correct(&ego, &coop, &RansacParams::default());
        assert_eq!(r.correspondences.len(), 2);
        assert!(r.transform.max_abs_diff(&Transform2D::new(0.0, -0.3, 0.0)) < 1e-9);

        let ego = set(&[(0.0, 0.0, PointClass::Pole)]);
        let coop = set(&[(0.2, 0.0, PointClass::Pole)]);
        let r = ransac_correct(&ego, &coop, &RansacParams::default());
        assert_eq!(r, CorrectionResult::identity());
    }

    #[test]
    fn no_overlap_gives_identity_without_iterations() {
        let ego = set(&scene());
        let far = ego.transformed(&Transform2D::new(0.0, 500.0, 0.0), Frame::Ego);
        let r = ransac_correct(&ego, &far, &RansacParams::default());
        assert_eq!(r.iterations_run, 0);
        assert_eq!(r.n_cons, 0);
        assert_eq!(r.transform, Transform2D::identity());
    }

    #[test]
    fn deterministic_for_seed() {
        let ego = set(&scene());
        let coop = ego.transformed(&Transform2D::from_degrees(3.0, 0.8, -0.4), Frame::Ego);
        let p = RansacParams {
            seed: 42,
            ..Default::default()
        };
        assert_eq!(ransac_correct(&ego, &coop, &p), ransac_correct(&ego, &coop, &p));
    }

    #[test]
    fn iteration_cap_follows_candidate_pairs() {
        // Three anchors each with a single neighbor: C(3, 2) = 3 hypotheses max.
        let ego = set(&[
            (0.0, 0.0, PointClass::Pole),
            (30.0, 0.0, PointClass::Pole),
            (0.0, 30.0, PointClass::Pole),
        ]);
        let r = ransac_correct(&ego, &ego, &RansacParams::default());
        assert!(r.iterations_run <= 3, "{}", r.iterations_run);
        assert_eq!(r.n_cons, 3);
    }

    #[test]
    fn all_candidates_on_one_ego_anchor_terminates() {
        let ego = set(&[(0.0, 0.0, PointClass::Pole)]);
        let coop = set(&[(0.5, 0.0, PointClass::Pole), (-0.5, 0.0, PointClass::Pole)]);
        let r = ransac_correct(&ego, &coop, &RansacParams::default());
        assert_eq!(r.iterations_run, 0);
        assert_eq!(r.transform, Transform2D::identity());
    }

    #[test]
    fn exhaustive_mode_recovers_offset() {
        let ego = set(&scene());
        let err = Transform2D::from_degrees(2.0, 0.7, -0.5);
        let coop = ego.transformed(&err, Frame::Ego);
        let p = RansacParams {
            exhaustive: true,
            ..Default::default()
        };
        let r = ransac_correct(&ego, &coop, &p);
        assert!(r.transform.max_abs_diff(&err.inverse()) < 1e-9);
        assert_eq!(r.n_cons, ego.len());
    }
}
