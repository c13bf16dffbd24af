use serde::{Deserialize, Serialize};

use super::{AnchorPair, CorrectionResult};
use crate::error::{Error, Result};
use crate::geometry::{axis_cells, Transform2D};
use crate::keypoints::KeypointSet;
use crate::matching::ConsensusIndex;

/// Search grid centered on the identity. Each axis covers
/// `-half_span ..= +half_span` in steps of its resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSearchParams {
    pub x_half_span: f64,
    pub y_half_span: f64,
    pub theta_half_span_deg: f64,
    pub xy_res: f64,
    pub theta_res_deg: f64,
    pub epsilon2: f64,
    pub max_cells: u64,
}

impl Default for GridSearchParams {
    fn default() -> Self {
        Self {
            x_half_span: 1.0,
            y_half_span: 1.0,
            theta_half_span_deg: 2.0,
            xy_res: 0.1,
            theta_res_deg: 0.5,
            epsilon2: 1.0,
            max_cells: 1_000_000,
        }
    }
}

impl GridSearchParams {
    fn steps(&self) -> Result<(i64, i64, i64)> {
        for (name, v) in [
            ("x_half_span", self.x_half_span),
            ("y_half_span", self.y_half_span),
            ("theta_half_span", self.theta_half_span_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("xy_res", self.xy_res),
            ("theta_res", self.theta_res_deg),
            ("epsilon2", self.epsilon2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        Ok((
            axis_cells(self.x_half_span, self.xy_res) as i64,
            axis_cells(self.y_half_span, self.xy_res) as i64,
            axis_cells(self.theta_half_span_deg, self.theta_res_deg) as i64,
        ))
    }

    pub fn cell_count(&self) -> Result<u64> {
        let (kx, ky, kt) = self.steps()?;
        Ok((2 * kx as u64 + 1) * (2 * ky as u64 + 1) * (2 * kt as u64 + 1))
    }
}

/// Exhaustive maximum-consensus search over `(dtheta, dx, dy)` applied to
/// `coop_in_ego`. Ties go to the smallest translation, then the smallest
/// rotation magnitude, then lexicographic `(dtheta, dx, dy)` grid order.
/// The winning cell is returned unrefined.
pub fn grid_search_correct(
    ego: &KeypointSet,
    coop_in_ego: &KeypointSet,
    params: &GridSearchParams,
) -> Result<CorrectionResult> {
    let (kx, ky, kt) = params.steps()?;
    let cells = params.cell_count()?;
    if cells > params.max_cells {
        return Err(Error::GridTooLarge {
            cells,
            budget: params.max_cells,
        });
    }

    let index = ConsensusIndex::new(&ego.points, params.epsilon2);
    let mut moved = Vec::with_capacity(coop_in_ego.len());
    // (count, translation steps^2, |theta steps|, it, ix, iy)
    let mut best: Option<(usize, i64, i64, i64, i64, i64)> = None;
    for it in -kt..=kt {
        for ix in -kx..=kx {
            for iy in -ky..=ky {
                let t = cell_transform(params, it, ix, iy);
                moved.clear();
                moved.extend(coop_in_ego.points.iter().map(|p| (t.apply(p.position()), p.class)));
                let n = index.count(moved.iter().copied());
                let key = (n, ix * ix + iy * iy, it.abs(), it, ix, iy);
                let better = match best {
                    None => true,
                    Some(b) => {
                        key.0 > b.0 || (key.0 == b.0 && (key.1, key.2, key.3, key.4, key.5) < (b.1, b.2, b.3, b.4, b.5))
                    }
                };
                if better {
                    best = Some(key);
                }
            }
        }
    }

    let (n_cons, _, _, it, ix, iy) = best.expect("grid has at least one cell");
    let transform = cell_transform(params, it, ix, iy);
    let anchor_index = ConsensusIndex::new(ego.anchors(), params.epsilon2);
    let ego_anchor_idx: Vec<usize> = ego
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class.is_anchor())
        .map(|(i, _)| i)
        .collect();
    let correspondences = coop_in_ego
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class.is_anchor())
        .filter_map(|(bi, b)| {
            anchor_index
                .nearest(transform.apply(b.position()), b.class)
                .map(|ai| AnchorPair {
                    coop: bi,
                    ego: ego_anchor_idx[ai],
                })
        })
        .collect();
    Ok(CorrectionResult {
        transform,
        n_cons,
        correspondences,
        iterations_run: cells as usize,
    })
}

fn cell_transform(p: &GridSearchParams, it: i64, ix: i64, iy: i64) -> Transform2D {
    Transform2D::from_degrees(it as f64 * p.theta_res_deg, ix as f64 * p.xy_res, iy as f64 * p.xy_res)
}
