//! Relative localization correction between two connected vehicles.
//!
//! Each vehicle reports labeled 2D keypoints (centers of detected vehicles,
//! poles, and points sampled from planar structures such as facades). Given
//! the erroneous global poses of an ego vehicle and a cooperative vehicle,
//! the cooperative keypoints are first mapped into the ego frame with the
//! erroneous relative transform and then aligned to the ego keypoints with a
//! class-constrained RANSAC search. The result is a rigid correction that
//! removes the relative localization error between the two vehicles.
//!
//! Modules:
//! - [`geometry`]: poses, rigid transforms, and propagation of global pose
//!   errors into the ego frame.
//! - [`keypoints`]: labeled points, keypoint sets, furthest point sampling and
//!   the line-delimited keypoint file format.
//! - [`matching`]: candidate construction and nearest-neighbor consensus.
//! - [`estimation`]: closed-form 2D rigid fit, RANSAC correction, and an
//!   exhaustive grid-search baseline.
//! - [`simulation`]: synthetic junction scenes, observations, pose errors.
//! - [`experiments`]: residuals, RMSE, valid rate, sweeps and result tables.

pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod keypoints;
pub mod matching;
pub mod seed;
pub mod simulation;

pub use error::{Error, Result};
pub use estimation::{
    cal_tf, grid_search_correct, ransac_correct, AnchorPair, CorrectionResult, GridSearchParams, RansacParams,
};
pub use experiments::{run_sweep, ExperimentReport, ResidualRecord, Rmse, SweepGrid, SweepOutput, SweepSpec};
pub use geometry::{Point2, Pose2D, PoseError, PoseNoise, Transform2D};
pub use keypoints::{Frame, KeypointSet, LabeledPoint, PointClass};
pub use matching::{MatchCandidate, MatchParams};
pub use simulation::{SamplePair, ScenarioConfig, WorldScene};
