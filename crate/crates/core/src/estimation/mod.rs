//! Rigid 2D transform estimation.
//!
//! - [`cal_tf`]: closed-form least-squares rigid fit from point pairs.
//! - [`ransac_correct`]: sample two anchor matches, fit, score by consensus,
//!   refine on every improvement.
//! - [`grid_search_correct`]: exhaustive maximum-consensus search over a
//!   discrete `(dtheta, dx, dy)` grid, used as a baseline.

mod caltf;
mod grid;
mod ransac;

pub use caltf::cal_tf;
pub use grid::{grid_search_correct, GridSearchParams};
pub use ransac::{ransac_correct, RansacParams};

use serde::{Deserialize, Serialize};

use crate::geometry::Transform2D;

/// Anchor correspondence, as indices into the `points` of the two sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnchorPair {
    pub coop: usize,
    pub ego: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    /// Correction to apply to cooperative points already in the ego frame.
    pub transform: Transform2D,
    /// Best consensus count found.
    pub n_cons: usize,
    /// Anchor correspondences the transform was refined from.
    pub correspondences: Vec<AnchorPair>,
    /// Hypotheses actually evaluated.
    pub iterations_run: usize,
}

impl CorrectionResult {
    pub fn identity() -> Self {
        Self {
            transform: Transform2D::identity(),
            n_cons: 0,
            correspondences: Vec::new(),
            iterations_run: 0,
        }
    }

    pub fn valid_for(&self, thr_cons: usize) -> bool {
        self.n_cons > thr_cons
    }
}
