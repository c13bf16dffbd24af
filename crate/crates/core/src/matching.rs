//! Class-constrained nearest-neighbor search.
//!
//! Candidate construction uses a plain scan (anchor sets are small).
//! Consensus counting runs once per RANSAC hypothesis over all points, so it
//! goes through [`ConsensusIndex`], a uniform hash grid with cell size equal
//! to the search radius. Results are exact: among the points within the
//! radius the closest one wins and equal distances go to the lower index.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::keypoints::{LabeledPoint, PointClass};

/// Neighbor search radius for candidate matching, from the expected relative
/// position error at the edge of the communication range:
/// `eta * r_c * sigma_r * pi / 180`.
pub fn epsilon1_from_noise(eta: f64, r_c: f64, sigma_r_deg: f64) -> f64 {
    eta * r_c * sigma_r_deg * PI / 180.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Candidate search radius (meters).
    pub epsilon1: f64,
    /// Consensus radius (meters).
    pub epsilon2: f64,
    /// Neighbors kept per cooperative anchor.
    pub k_neighbors: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            epsilon1: epsilon1_from_noise(2.58, 40.0, 4.0),
            epsilon2: 1.0,
            k_neighbors: 2,
        }
    }
}

impl MatchParams {
    pub fn new(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        let p = Self {
            epsilon1,
            epsilon2,
            k_neighbors: 2,
        };
        p.validate()?;
        Ok(p)
    }

    /// `epsilon1` from the pose-noise rule, `epsilon2` as given.
    pub fn from_noise(eta: f64, r_c: f64, sigma_r_deg: f64, epsilon2: f64) -> Result<Self> {
        if !(eta > 0.0 && r_c > 0.0 && sigma_r_deg > 0.0) {
            return Err(Error::invalid(
                "epsilon1",
                format!("eta, r_c and sigma_r must be positive (got {eta}, {r_c}, {sigma_r_deg})"),
            ));
        }
        Self::new(epsilon1_from_noise(eta, r_c, sigma_r_deg), epsilon2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon1.is_finite() && self.epsilon1 > 0.0) {
            return Err(Error::invalid(
                "epsilon1",
                format!("must be > 0, got {}", self.epsilon1),
            ));
        }
        if !(self.epsilon2.is_finite() && self.epsilon2 > 0.0) {
            return Err(Error::invalid(
                "epsilon2",
                format!("must be > 0, got {}", self.epsilon2),
            ));
        }
        if self.k_neighbors == 0 {
            return Err(Error::invalid("k_neighbors", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the ego anchor slice.
    pub index: usize,
    pub distance: f64,
}

/// A cooperative anchor and its nearest same-class ego anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    /// Index into the cooperative anchor slice.
    pub coop: usize,
    /// Ascending by distance, at least one entry.
    pub neighbors: Vec<Neighbor>,
}

/// For every cooperative anchor, up to `k_neighbors` ego anchors of the same
/// class strictly closer than `epsilon1`. Anchors without any qualifying
/// neighbor are dropped; an empty result means the views do not overlap.
pub fn build_candidates(
    ego_anchors: &[LabeledPoint],
    coop_anchors: &[LabeledPoint],
    params: &MatchParams,
) -> Vec<MatchCandidate> {
    let r2 = params.epsilon1 * params.epsilon1;
    let mut out = Vec::new();
    let mut found: Vec<(f64, usize)> = Vec::new();
    for (bi, b) in coop_anchors.iter().enumerate() {
        let bp = b.position();
        found.clear();
        found.extend(
            ego_anchors
                .iter()
                .enumerate()
                .filter(|(_, a)| a.class == b.class)
                .map(|(ai, a)| (a.position().distance_squared(&bp), ai))
                .filter(|&(d2, _)| d2 < r2),
        );
        if found.is_empty() {
            continue;
        }
        found.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        out.push(MatchCandidate {
            coop: bi,
            neighbors: found
                .iter()
                .take(params.k_neighbors)
                .map(|&(d2, index)| Neighbor {
                    index,
                    distance: d2.sqrt(),
                })
                .collect(),
        });
    }
    out
}

/// Outcome of a consensus count: the number of cooperative points with a
/// same-class ego point within the radius, and the `(coop, ego)` index pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Consensus {
    pub count: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// Exact fixed-radius nearest-neighbor index over a reference point set.
#[derive(Debug, Clone)]
pub struct ConsensusIndex {
    points: Vec<(Point2, PointClass)>,
    radius: f64,
    radius2: f64,
    cells: HashMap<(PointClass, i64, i64), Vec<usize>>,
}

impl ConsensusIndex {
    pub fn new<'a, I>(reference: I, radius: f64) -> Self
    where
        I: IntoIterator<Item = &'a LabeledPoint>,
    {
        assert!(radius > 0.0 && radius.is_finite(), "radius must be positive");
        let points: Vec<_> = reference.into_iter().map(|p| (p.position(), p.class)).collect();
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, (p, c)) in points.iter().enumerate() {
            let (cx, cy) = Self::cell_of(*p, radius);
            cells.entry((*c, cx, cy)).or_default().push(i);
        }
        Self {
            points,
            radius,
            radius2: radius * radius,
            cells,
        }
    }

    fn cell_of(p: Point2, size: f64) -> (i64, i64) {
        ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Closest reference point of class `class` strictly within the radius.
    pub fn nearest(&self, q: Point2, class: PointClass) -> Option<usize> {
        let (cx, cy) = Self::cell_of(q, self.radius);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.cells.get(&(class, cx + dx, cy + dy)) else {
                    continue;
                };
                for &i in bucket {
                    let d2 = self.points[i].0.distance_squared(&q);
                    if d2 < self.radius2 && best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && i < bi)) {
                        best = Some((d2, i));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Counts query points with a same-class neighbor within the radius.
    pub fn count<I>(&self, query: I) -> usize
    where
        I: IntoIterator<Item = (Point2, PointClass)>,
    {
        query.into_iter().filter(|&(q, c)| self.nearest(q, c).is_some()).count()
    }

    pub fn consensus(&self, query: &[LabeledPoint]) -> Consensus {
        let pairs: Vec<_> = query
            .iter()
            .enumerate()
            .filter_map(|(bi, b)| self.nearest(b.position(), b.class).map(|ai| (bi, ai)))
            .collect();
        Consensus {
            count: pairs.len(),
            pairs,
        }
    }
}

/// Number of cooperative points (already in the ego frame) whose nearest
/// same-class ego point lies strictly within `epsilon2`, plus the pairs.
pub fn count_consensus(ego_all: &[LabeledPoint], coop_all: &[LabeledPoint], epsilon2: f64) -> Consensus {
    ConsensusIndex::new(ego_all, epsilon2).consensus(coop_all)
}
