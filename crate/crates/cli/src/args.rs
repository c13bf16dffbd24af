use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Relative pose correction between two connected vehicles from shared
/// keypoint observations. Angles are given in degrees and lengths in meters.
#[derive(Debug, Parser)]
#[command(name = "relcorr", version, about, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic junction scene and, optionally, keypoint files
    /// for sampled ego/cooperative pairs.
    Generate(GenerateArgs),
    /// Estimate the relative correction between two keypoint files.
    Correct(CorrectArgs),
    /// Run a parameter sweep over simulated pairs and write a results table.
    Sweep(SweepArgs),
    /// Tabulate the relative-error envelope against inter-vehicle distance.
    Envelope(EnvelopeArgs),
}

/// Simulator settings shared by `generate` and `sweep`.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Vehicles placed in the scene.
    #[arg(long, default_value_t = 20)]
    pub vehicles: usize,
    /// Side length of the square scene (m).
    #[arg(long, default_value_t = 200.0, value_parser = positive)]
    pub extent: f64,
    /// Communication and perception range R_c (m).
    #[arg(long, default_value_t = 40.0, value_parser = positive)]
    pub rc: f64,
    /// Planar points kept per observation by furthest point sampling (N_f).
    #[arg(long, default_value_t = 50)]
    pub nf: usize,
    /// Cooperative partners per ego, at most.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_partners: u64,
    /// Probability that an in-range object is detected.
    #[arg(long, default_value_t = 0.9, value_parser = probability)]
    pub detection_prob: f64,
    /// Detection noise std of vehicle centers (m).
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    pub vehicle_noise: f64,
    /// Detection noise std of poles and planar points (m).
    #[arg(long, default_value_t = 0.05, value_parser = non_negative)]
    pub static_noise: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Master seed; equal seeds give identical files.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scene description output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-observer keypoint files and the pairs manifest.
    #[arg(long)]
    pub keypoints_dir: Option<PathBuf>,
    /// Ego samples (frames) drawn when writing keypoints.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
    /// Global position error std applied to every vehicle (m).
    #[arg(long, default_value_t = 0.4, value_parser = non_negative)]
    pub sigma_xy: f64,
    /// Global heading error std applied to every vehicle (deg).
    #[arg(long, default_value_t = 4.0, value_parser = non_negative)]
    pub sigma_r: f64,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Ego keypoints in the ego frame (JSONL).
    #[arg(long)]
    pub ego: PathBuf,
    /// Cooperative keypoints in the cooperative vehicle's frame, or already
    /// in the ego frame (JSONL; the file's `frame` field decides).
    #[arg(long)]
    pub coop: PathBuf,
    /// Erroneous global ego pose `x,y,heading_deg`.
    #[arg(long, default_value = "0,0,0", value_parser = triple, allow_hyphen_values = true)]
    pub ego_pose: [f64; 3],
    /// Erroneous global cooperative pose `x,y,heading_deg`.
    #[arg(long, default_value = "0,0,0", value_parser = triple, allow_hyphen_values = true)]
    pub coop_pose: [f64; 3],
    /// z-score of the candidate search radius (99% two-sided).
    #[arg(long, default_value_t = 2.58, value_parser = positive)]
    pub eta: f64,
    /// Range used by the candidate search radius rule (m).
    #[arg(long, default_value_t = 40.0, value_parser = positive)]
    pub rc: f64,
    /// Expected heading error std used by the candidate search radius rule (deg).
    #[arg(long, default_value_t = 4.0, value_parser = positive)]
    pub sigma_r: f64,
    /// Candidate search radius (m); overrides the eta * rc * sigma_r rule.
    #[arg(long, value_parser = positive)]
    pub epsilon1: Option<f64>,
    /// Consensus radius (m).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub epsilon2: f64,
    /// Maximum RANSAC hypotheses.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_ransac: u64,
    /// Evaluate every candidate pair instead of sampling.
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// A result is valid when the consensus exceeds this count.
    #[arg(long, default_value_t = 10)]
    pub thr_cons: usize,
    /// Write corrected cooperative keypoints (ego frame) to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Position error std values (m).
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8,1.0", value_parser = non_negative)]
    pub sigma_xy: Vec<f64>,
    /// Heading error std values (deg).
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10", value_parser = positive)]
    pub sigma_r: Vec<f64>,
    /// RANSAC hypothesis budgets.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50", value_parser = clap::value_parser!(u64).range(1..))]
    pub n_ransac: Vec<u64>,
    /// Consensus thresholds reported per cell.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10")]
    pub thr_cons: Vec<usize>,
    /// Sample pairs per cell.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs: u64,
    /// Skip pairs sharing fewer anchors than this.
    #[arg(long, default_value_t = 0)]
    pub min_shared_anchors: usize,
    /// z-score of the candidate search radius.
    #[arg(long, default_value_t = 2.58, value_parser = positive)]
    pub eta: f64,
    /// Consensus radius (m).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub epsilon2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Results table output (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-pair residual records output (JSONL).
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    /// Global ego error `dx,dy,dtheta_deg`.
    #[arg(long, default_value = "-0.5,-0.5,-5", value_parser = triple, allow_hyphen_values = true)]
    pub ego_error: [f64; 3],
    /// Global cooperative error `dx,dy,dtheta_deg`.
    #[arg(long, default_value = "0.5,0.5,5", value_parser = triple, allow_hyphen_values = true)]
    pub coop_error: [f64; 3],
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub min_distance: f64,
    #[arg(long, default_value_t = 50.0, value_parser = non_negative)]
    pub max_distance: f64,
    #[arg(long, default_value_t = 5.0, value_parser = positive)]
    pub step: f64,
    /// Ego headings evaluated per distance.
    #[arg(long, default_value_t = 360, value_parser = clap::value_parser!(u64).range(4..))]
    pub orientations: u64,
    /// Write the table here instead of standard output (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(format!("{v} must be > 0"))
        }
    })
}

fn non_negative(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| {
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(format!("{v} must be >= 0"))
        }
    })
}

fn probability(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("{v} is not in [0, 1]"))
        }
    })
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<_> = s.split(',').map(number).collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| format!("expected three comma separated numbers, got {}", p.len()))
}
