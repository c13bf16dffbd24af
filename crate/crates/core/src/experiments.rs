//! Evaluation metrics and parameter sweeps.
//!
//! Residuals compare an estimated correction with the exact one and express
//! the translation part in global axes. A sample pair counts as valid when
//! its consensus is strictly greater than `thr_cons`; RMSEs are taken over
//! valid pairs only (`thr_cons = 0` keeps every pair with any consensus).
//!
//! # Results table
//!
//! Comma separated, one row per grid cell and consensus threshold:
//!
//! ```text
//! sigma_xy_m,sigma_r_deg,n_ransac,thr_cons,n_samples,valid_rate,rmse_x_m,rmse_y_m,rmse_norm_m,rmse_r_deg,fps
//! ```
//!
//! RMSE columns hold `NA` when no sample is valid. `fps` is the number of
//! corrected pairs per second of correction time, summed over the threads
//! that ran them; it is the only column that varies between identical runs.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ransac_correct, RansacParams};
use crate::geometry::{normalize_degrees, PoseNoise, Transform2D};
use crate::keypoints::KeypointSet;
use crate::matching::MatchParams;
use crate::seed::derive_seed;
use crate::simulation::{generate_world, ObservedScene, SamplePair, ScenarioConfig};

/// Residual of an estimated correction against the exact one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// Meters, global x axis.
    pub e_x: f64,
    /// Meters, global y axis.
    pub e_y: f64,
    /// Degrees in `(-180, 180]`.
    pub e_r: f64,
}

/// `E = estimated^-1 * truth`; the rotation of `E` is the heading residual
/// and its translation, rotated by the ego's erroneous heading, is the
/// position residual in global axes.
pub fn residual(estimated: &Transform2D, truth: &Transform2D, ego_erroneous_heading: f64) -> Residual {
    let e = estimated.inverse().compose(truth);
    let global = Transform2D::new(ego_erroneous_heading, 0.0, 0.0).rotate(e.translation());
    Residual {
        e_x: global.x,
        e_y: global.y,
        e_r: normalize_degrees(e.dtheta_degrees()),
    }
}

/// Outcome of correcting one sample pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub pair_id: String,
    pub sigma_xy: f64,
    pub sigma_r_deg: f64,
    pub n_ransac: usize,
    pub e_x: f64,
    pub e_y: f64,
    pub e_r: f64,
    pub n_cons: usize,
    pub shared_anchors: usize,
    pub runtime_s: f64,
}

impl ResidualRecord {
    pub fn is_valid(&self, thr_cons: usize) -> bool {
        self.n_cons > thr_cons
    }

    pub fn translation_error(&self) -> f64 {
        self.e_x.hypot(self.e_y)
    }
}

/// Fraction of records with `n_cons > thr_cons`.
pub fn valid_rate(records: &[ResidualRecord], thr_cons: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("valid rate needs at least one record"));
    }
    let valid = records.iter().filter(|r| r.is_valid(thr_cons)).count();
    Ok(valid as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub x: f64,
    pub y: f64,
    pub norm: f64,
    pub r_deg: f64,
}

/// Root mean squared residuals over records with `n_cons > thr_cons`;
/// `None` when there is none.
pub fn rmse(records: &[ResidualRecord], thr_cons: usize) -> Option<Rmse> {
    let (mut n, mut sx, mut sy, mut sr) = (0usize, 0.0, 0.0, 0.0);
    for r in records.iter().filter(|r| r.is_valid(thr_cons)) {
        n += 1;
        sx += r.e_x * r.e_x;
        sy += r.e_y * r.e_y;
        sr += r.e_r * r.e_r;
    }
    if n == 0 {
        return None;
    }
    let n = n as f64;
    Some(Rmse {
        x: (sx / n).sqrt(),
        y: (sy / n).sqrt(),
        norm: ((sx + sy) / n).sqrt(),
        r_deg: (sr / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Wall time of each correction call on the thread that ran it.
    #[default]
    ThreadWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub sigma_xy: f64,
    pub sigma_r_deg: f64,
    pub n_ransac: usize,
    pub thr_cons: usize,
    pub n_samples: usize,
    pub valid_rate: f64,
    pub rmse_x: Option<f64>,
    pub rmse_y: Option<f64>,
    pub rmse_norm: Option<f64>,
    pub rmse_r_deg: Option<f64>,
    pub fps: f64,
    #[serde(default)]
    pub timing_mode: TimingMode,
}

impl ExperimentReport {
    pub fn from_records(
        sigma_xy: f64,
        sigma_r_deg: f64,
        n_ransac: usize,
        thr_cons: usize,
        records: &[ResidualRecord],
    ) -> Result<Self> {
        let rate = valid_rate(records, thr_cons)?;
        let r = rmse(records, thr_cons);
        let total: f64 = records.iter().map(|r| r.runtime_s).sum();
        Ok(Self {
            sigma_xy,
            sigma_r_deg,
            n_ransac,
            thr_cons,
            n_samples: records.len(),
            valid_rate: rate,
            rmse_x: r.map(|r| r.x),
            rmse_y: r.map(|r| r.y),
            rmse_norm: r.map(|r| r.norm),
            rmse_r_deg: r.map(|r| r.r_deg),
            fps: records.len() as f64 / total.max(1e-12),
            timing_mode: TimingMode::ThreadWall,
        })
    }

    pub fn has_valid_samples(&self) -> bool {
        self.rmse_x.is_some()
    }

    /// Copy with timing fields cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            fps: 0.0,
            ..self.clone()
        }
    }
}

pub const RESULTS_HEADER: [&str; 11] = [
    "sigma_xy_m",
    "sigma_r_deg",
    "n_ransac",
    "thr_cons",
    "n_samples",
    "valid_rate",
    "rmse_x_m",
    "rmse_y_m",
    "rmse_norm_m",
    "rmse_r_deg",
    "fps",
];

fn opt_field(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn results_to_csv(reports: &[ExperimentReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record([
            r.sigma_xy.to_string(),
            r.sigma_r_deg.to_string(),
            r.n_ransac.to_string(),
            r.thr_cons.to_string(),
            r.n_samples.to_string(),
            r.valid_rate.to_string(),
            opt_field(r.rmse_x),
            opt_field(r.rmse_y),
            opt_field(r.rmse_norm),
            opt_field(r.rmse_r_deg),
            r.fps.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

pub fn parse_results_csv(text: &str, origin: &Path) -> Result<Vec<ExperimentReport>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(err(1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| err(line, e.to_string()))?;
        if row.len() != RESULTS_HEADER.len() {
            return Err(err(line, format!("expected {} columns", RESULTS_HEADER.len())));
        }
        let f = |k: usize| -> Result<f64> {
            row[k]
                .parse::<f64>()
                .map_err(|e| err(line, format!("{}: {e}", RESULTS_HEADER[k])))
        };
        let u = |k: usize| -> Result<usize> {
            row[k]
                .parse::<usize>()
                .map_err(|e| err(line, format!("{}: {e}", RESULTS_HEADER[k])))
        };
        let o = |k: usize| -> Result<Option<f64>> {
            if &row[k] == "NA" {
                Ok(None)
            } else {
                f(k).map(Some)
            }
        };
        out.push(ExperimentReport {
            sigma_xy: f(0)?,
            sigma_r_deg: f(1)?,
            n_ransac: u(2)?,
            thr_cons: u(3)?,
            n_samples: u(4)?,
            valid_rate: f(5)?,
            rmse_x: o(6)?,
            rmse_y: o(7)?,
            rmse_norm: o(8)?,
            rmse_r_deg: o(9)?,
            fps: f(10)?,
            timing_mode: TimingMode::ThreadWall,
        });
    }
    Ok(out)
}

pub fn write_results_csv(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    fs::write(path, results_to_csv(reports)).map_err(|e| Error::io(path, e))
}

pub fn records_to_jsonl(records: &[ResidualRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Values swept by [`run_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub sigma_xy: Vec<f64>,
    pub sigma_r_deg: Vec<f64>,
    pub n_ransac: Vec<usize>,
    pub thr_cons: Vec<usize>,
}

impl SweepGrid {
    /// sigma_xy 0.2..=1.0 m and sigma_r 2..=10 deg in five steps each,
    /// N_ransac 10..=50 in steps of 10, thr_cons 2..=10.
    pub fn reference() -> Self {
        Self {
            sigma_xy: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            sigma_r_deg: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            n_ransac: vec![10, 20, 30, 40, 50],
            thr_cons: (2..=10).collect(),
        }
    }

    pub fn single(sigma_xy: f64, sigma_r_deg: f64, n_ransac: usize, thr_cons: usize) -> Self {
        Self {
            sigma_xy: vec![sigma_xy],
            sigma_r_deg: vec![sigma_r_deg],
            n_ransac: vec![n_ransac],
            thr_cons: vec![thr_cons],
        }
    }

    pub fn cell_count(&self) -> usize {
        self.sigma_xy.len() * self.sigma_r_deg.len() * self.n_ransac.len()
    }

    fn validate(&self) -> Result<()> {
        if self.sigma_xy.is_empty()
            || self.sigma_r_deg.is_empty()
            || self.n_ransac.is_empty()
            || self.thr_cons.is_empty()
        {
            return Err(Error::invalid("grid", "every axis needs at least one value"));
        }
        if let Some(s) = self.sigma_xy.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::invalid("sigma_xy", format!("{s} must be >= 0")));
        }
        if let Some(s) = self.sigma_r_deg.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid("sigma_r", format!("{s} must be > 0")));
        }
        if self.n_ransac.contains(&0) {
            return Err(Error::invalid("n_ransac", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub grid: SweepGrid,
    /// Sample pairs evaluated in every cell (the same pairs in every cell).
    pub pairs_per_cell: usize,
    pub master_seed: u64,
    pub scenario: ScenarioConfig,
    /// z-score of the candidate search radius rule.
    pub eta: f64,
    pub epsilon2: f64,
    /// Pairs sharing fewer anchors (by simulator ground truth) are skipped.
    pub min_shared_anchors: usize,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: SweepGrid::reference(),
            pairs_per_cell: 100,
            master_seed: 0,
            scenario: ScenarioConfig::default(),
            eta: 2.58,
            epsilon2: 1.0,
            min_shared_anchors: 0,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub reports: Vec<ExperimentReport>,
    pub records: Vec<ResidualRecord>,
}

// Stream identifiers for seed derivation.
const STREAM_WORLD: u64 = 0;
const STREAM_OBSERVE: u64 = 1;
const STREAM_POSE: u64 = 2;
const STREAM_RANSAC: u64 = 3;

/// The observed scenes behind a sweep and which partners of each are used.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepScenes {
    pub scenes: Vec<(u64, ObservedScene, Vec<usize>)>,
}

impl SweepScenes {
    pub fn pair_count(&self) -> usize {
        self.scenes.iter().map(|(_, _, k)| k.len()).sum()
    }
}

/// Generates scenes until `pairs_per_cell` partners with at least
/// `min_shared_anchors` shared anchors have been collected.
pub fn collect_scenes(spec: &SweepSpec) -> Result<SweepScenes> {
    const CHUNK: u64 = 16;
    let max_scenes = (spec.pairs_per_cell as u64).saturating_mul(50).max(200);
    let mut scenes = Vec::new();
    let mut have = 0;
    let mut next = 0u64;
    while have < spec.pairs_per_cell {
        if next >= max_scenes {
            return Err(Error::invalid(
                "pairs_per_cell",
                format!(
                    "only {have} qualifying pairs found in {max_scenes} scenes (min_shared_anchors = {})",
                    spec.min_shared_anchors
                ),
            ));
        }
        let chunk: Vec<_> = (next..next + CHUNK)
            .into_par_iter()
            .filter_map(|s| {
                let world = generate_world(&spec.scenario.world, derive_seed(spec.master_seed, &[STREAM_WORLD, s]));
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, &[STREAM_OBSERVE, s]));
                ObservedScene::sample(&world, &spec.scenario, &format!("s{s}"), &mut rng).map(|scene| (s, scene))
            })
            .collect();
        next += CHUNK;
        for (s, scene) in chunk {
            if have >= spec.pairs_per_cell {
                break;
            }
            let keep: Vec<usize> = scene
                .partners
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    crate::simulation::shared_anchor_count(&scene.ego_observation, &p.observation)
                        >= spec.min_shared_anchors
                })
                .map(|(k, _)| k)
                .take(spec.pairs_per_cell - have)
                .collect();
            if keep.is_empty() {
                continue;
            }
            have += keep.len();
            scenes.push((s, scene, keep));
        }
    }
    Ok(SweepScenes { scenes })
}

struct PreparedPair {
    id: String,
    pair: SamplePair,
    coop_in_ego: KeypointSet,
    shared: usize,
    seed: u64,
}

fn prepare_pairs(spec: &SweepSpec, scenes: &SweepScenes, noise: &PoseNoise) -> Vec<PreparedPair> {
    scenes
        .scenes
        .par_iter()
        .flat_map_iter(|(s, scene, keep)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, &[STREAM_POSE, *s]));
            let pairs = scene.with_pose_errors(noise, &mut rng);
            keep.iter()
                .map(|&k| {
                    let pair = pairs[k].clone();
                    PreparedPair {
                        id: format!("s{s}-v{}-v{}", pair.ego_id, pair.coop_id),
                        coop_in_ego: pair.coop_in_ego(),
                        shared: pair.shared_anchors(),
                        seed: derive_seed(spec.master_seed, &[STREAM_RANSAC, *s, k as u64]),
                        pair,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Runs one correction and scores it against the exact correction.
pub fn evaluate_pair(
    pair: &SamplePair,
    coop_in_ego: &KeypointSet,
    params: &RansacParams,
) -> (crate::estimation::CorrectionResult, Residual, f64) {
    let start = Instant::now();
    let result = ransac_correct(&pair.ego_observation, coop_in_ego, params);
    let elapsed = start.elapsed().as_secs_f64();
    let res = residual(&result.transform, &pair.correction, pair.ego_erroneous.theta);
    (result, res, elapsed)
}

/// Runs every grid cell over the same set of sample pairs. Per-pair pose
/// errors and RANSAC seeds are derived from the master seed and the pair's
/// position, so any cell can be reproduced on its own and results do not
/// depend on the thread count.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.grid.validate()?;
    spec.scenario.validate()?;
    if spec.pairs_per_cell == 0 {
        return Err(Error::invalid("pairs_per_cell", "must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| run_sweep_inner(spec))
}

fn run_sweep_inner(spec: &SweepSpec) -> Result<SweepOutput> {
    let scenes = collect_scenes(spec)?;
    let mut reports = Vec::new();
    let mut all_records = Vec::new();
    for &sigma_xy in &spec.grid.sigma_xy {
        for &sigma_r in &spec.grid.sigma_r_deg {
            let noise = PoseNoise::new(sigma_xy, sigma_r)?;
            let prepared = prepare_pairs(spec, &scenes, &noise);
            let matching = MatchParams::from_noise(spec.eta, spec.scenario.r_c, sigma_r, spec.epsilon2)?;
            for &n_ransac in &spec.grid.n_ransac {
                let records: Vec<ResidualRecord> = prepared
                    .par_iter()
                    .map(|p| {
                        let params = RansacParams {
                            n_ransac,
                            matching,
                            seed: p.seed,
                            exhaustive: false,
                        };
                        let (result, res, elapsed) = evaluate_pair(&p.pair, &p.coop_in_ego, &params);
                        ResidualRecord {
                            pair_id: p.id.clone(),
                            sigma_xy,
                            sigma_r_deg: sigma_r,
                            n_ransac,
                            e_x: res.e_x,
                            e_y: res.e_y,
                            e_r: res.e_r,
                            n_cons: result.n_cons,
                            shared_anchors: p.shared,
                            runtime_s: elapsed,
                        }
                    })
                    .collect();
                for &thr in &spec.grid.thr_cons {
                    reports.push(ExperimentReport::from_records(
                        sigma_xy, sigma_r, n_ransac, thr, &records,
                    )?);
                }
                all_records.extend(records);
            }
        }
    }
    Ok(SweepOutput {
        reports,
        records: all_records,
    })
}
