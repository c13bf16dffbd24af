use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relcorr_core::experiments::{records_to_jsonl, run_sweep, write_results_csv, SweepGrid, SweepSpec};
use relcorr_core::geometry::{relative_error_envelope, relative_transform, PoseNoise};
use relcorr_core::seed::derive_seed;
use relcorr_core::simulation::{generate_world, vehicle_name, ObservedScene, PerClass, WorldConfig};
use relcorr_core::{
    ransac_correct, Frame, KeypointSet, MatchParams, Pose2D, PoseError, RansacParams, ScenarioConfig, Transform2D,
};
use serde::Serialize;

use crate::args::{CorrectArgs, EnvelopeArgs, GenerateArgs, ScenarioArgs, SweepArgs};

pub const EXIT_INSUFFICIENT_OVERLAP: u8 = 3;

fn scenario_config(a: &ScenarioArgs, noise: PoseNoise) -> Result<ScenarioConfig> {
    let config = ScenarioConfig {
        world: WorldConfig {
            extent: a.extent,
            n_vehicles: a.vehicles,
            ..WorldConfig::default()
        },
        r_c: a.rc,
        n_f: a.nf,
        detection_noise: PerClass {
            vehicle_center: a.vehicle_noise,
            pole: a.static_noise,
            planar: a.static_noise,
        },
        detection_prob: PerClass::uniform(a.detection_prob),
        pose_noise: noise,
        n_cooperative_max: a.max_partners as usize,
        rng_seed: 0,
    };
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct PoseDeg {
    x: f64,
    y: f64,
    heading_deg: f64,
}

impl From<&Pose2D> for PoseDeg {
    fn from(p: &Pose2D) -> Self {
        Self {
            x: p.x,
            y: p.y,
            heading_deg: p.theta_degrees(),
        }
    }
}

#[derive(Serialize)]
struct TransformDeg {
    dtheta_deg: f64,
    dx: f64,
    dy: f64,
}

impl From<&Transform2D> for TransformDeg {
    fn from(t: &Transform2D) -> Self {
        Self {
            dtheta_deg: t.dtheta_degrees(),
            dx: t.dx,
            dy: t.dy,
        }
    }
}

#[derive(Serialize)]
struct ManifestPair {
    frame_id: String,
    ego_file: String,
    coop_file: String,
    ego_true: PoseDeg,
    ego_erroneous: PoseDeg,
    coop_true: PoseDeg,
    coop_erroneous: PoseDeg,
    /// Exact correction for the erroneous relative transform.
    correction: TransformDeg,
    shared_anchors: usize,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn generate(a: &GenerateArgs) -> Result<ExitCode> {
    let noise = PoseNoise::new(a.sigma_xy, a.sigma_r)?;
    let config = scenario_config(&a.scenario, noise)?;
    let world = generate_world(&config.world, derive_seed(a.seed, &[0]));
    world.write_json(&a.out)?;
    println!(
        "scene: {} vehicles, {} poles, {} facade segments, {} placement failures",
        world.vehicles.len(),
        world.poles.len(),
        world.facades.len(),
        world.placement_failures
    );

    let Some(dir) = &a.keypoints_dir else {
        return Ok(ExitCode::SUCCESS);
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut manifest = Vec::new();
    let mut files = 0;
    for f in 0..a.frames {
        let frame_id = format!("f{f}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(a.seed, &[1, f]));
        let Some(scene) = ObservedScene::sample(&world, &config, &frame_id, &mut rng) else {
            eprintln!("{frame_id}: no ego with a partner in range, skipped");
            continue;
        };
        let file_of = |id: u32| format!("{frame_id}_{}.jsonl", vehicle_name(id));
        scene.ego_observation.write_jsonl(&dir.join(file_of(scene.ego_id)))?;
        files += 1;
        for p in &scene.partners {
            p.observation.write_jsonl(&dir.join(file_of(p.vehicle_id)))?;
            files += 1;
        }
        for pair in scene.with_pose_errors(&config.pose_noise, &mut rng) {
            manifest.push(ManifestPair {
                frame_id: frame_id.clone(),
                ego_file: file_of(pair.ego_id),
                coop_file: file_of(pair.coop_id),
                ego_true: (&pair.ego_true).into(),
                ego_erroneous: (&pair.ego_erroneous).into(),
                coop_true: (&pair.coop_true).into(),
                coop_erroneous: (&pair.coop_erroneous).into(),
                correction: (&pair.correction).into(),
                shared_anchors: pair.shared_anchors(),
            });
        }
    }
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    write_text(&dir.join("pairs.json"), &text)?;
    println!("keypoints: {files} files, {} pairs", manifest.len());
    Ok(ExitCode::SUCCESS)
}

fn pose_of(v: [f64; 3]) -> Pose2D {
    Pose2D::from_degrees(v[0], v[1], v[2])
}

/// Maps a keypoint set into the ego frame given the erroneous poses.
fn into_ego_frame(set: KeypointSet, ego_pose: &Pose2D, own_pose: &Pose2D) -> KeypointSet {
    match set.frame {
        Frame::Ego => set,
        Frame::ObserverLocal => set.transformed(&relative_transform(ego_pose, own_pose), Frame::Ego),
        Frame::Global => set.transformed(&ego_pose.local_to_global().inverse(), Frame::Ego),
    }
}

#[derive(Serialize)]
struct CorrectOutput {
    dtheta_deg: f64,
    dx: f64,
    dy: f64,
    n_cons: usize,
    iterations: usize,
    correspondences: usize,
    valid: bool,
}

pub fn correct(a: &CorrectArgs) -> Result<ExitCode> {
    let ego_pose = pose_of(a.ego_pose);
    let coop_pose = pose_of(a.coop_pose);
    let ego = KeypointSet::read_jsonl(&a.ego)?;
    let ego = into_ego_frame(ego, &ego_pose, &ego_pose);
    let coop = into_ego_frame(KeypointSet::read_jsonl(&a.coop)?, &ego_pose, &coop_pose);

    let matching = match a.epsilon1 {
        Some(e1) => MatchParams::new(e1, a.epsilon2)?,
        None => MatchParams::from_noise(a.eta, a.rc, a.sigma_r, a.epsilon2)?,
    };
    let params = RansacParams {
        n_ransac: a.n_ransac as usize,
        matching,
        seed: a.seed,
        exhaustive: a.exhaustive,
    };
    params.validate()?;
    let result = ransac_correct(&ego, &coop, &params);
    let valid = result.valid_for(a.thr_cons);

    let out = CorrectOutput {
        dtheta_deg: result.transform.dtheta_degrees(),
        dx: result.transform.dx,
        dy: result.transform.dy,
        n_cons: result.n_cons,
        iterations: result.iterations_run,
        correspondences: result.correspondences.len(),
        valid,
    };
    if a.json {
        println!("{}", serde_json::to_string(&out)?);
    } else {
        println!("dtheta_deg  {:.6}", out.dtheta_deg);
        println!("dx_m        {:.6}", out.dx);
        println!("dy_m        {:.6}", out.dy);
        println!("n_cons      {}", out.n_cons);
        println!("iterations  {}", out.iterations);
    }
    if let Some(path) = &a.out {
        coop.transformed(&result.transform, Frame::Ego).write_jsonl(path)?;
    }
    if valid {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "insufficient overlap: consensus {} does not exceed thr_cons {}",
            result.n_cons, a.thr_cons
        );
        Ok(ExitCode::from(EXIT_INSUFFICIENT_OVERLAP))
    }
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

pub fn sweep(a: &SweepArgs) -> Result<ExitCode> {
    let scenario = scenario_config(&a.scenario, PoseNoise::zero())?;
    let spec = SweepSpec {
        grid: SweepGrid {
            sigma_xy: a.sigma_xy.clone(),
            sigma_r_deg: a.sigma_r.clone(),
            n_ransac: a.n_ransac.iter().map(|&n| n as usize).collect(),
            thr_cons: a.thr_cons.clone(),
        },
        pairs_per_cell: a.pairs as usize,
        master_seed: a.seed,
        scenario,
        eta: a.eta,
        epsilon2: a.epsilon2,
        min_shared_anchors: a.min_shared_anchors,
        threads: a.threads,
    };
    let output = run_sweep(&spec)?;
    write_results_csv(&output.reports, &a.out)?;
    if let Some(path) = &a.records {
        write_text(path, &records_to_jsonl(&output.records))?;
    }
    println!(
        "{:>8} {:>8} {:>5} {:>4} {:>6} {:>7} {:>8} {:>8} {:>8} {:>10}",
        "sigma_xy", "sigma_r", "N", "thr", "valid", "rmse_x", "rmse_y", "rmse_r", "fps", "samples"
    );
    for r in &output.reports {
        println!(
            "{:>8} {:>8} {:>5} {:>4} {:>6.3} {:>7} {:>8} {:>8} {:>8.0} {:>10}",
            r.sigma_xy,
            r.sigma_r_deg,
            r.n_ransac,
            r.thr_cons,
            r.valid_rate,
            na(r.rmse_x),
            na(r.rmse_y),
            na(r.rmse_r_deg),
            r.fps,
            r.n_samples
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub const ENVELOPE_HEADER: &str =
    "distance_m,dx_min_m,dx_max_m,dy_min_m,dy_max_m,dtheta_min_deg,dtheta_max_deg,norm_max_m";

pub fn envelope(a: &EnvelopeArgs) -> Result<ExitCode> {
    if a.max_distance < a.min_distance {
        anyhow::bail!(relcorr_core::Error::InvalidParameter {
            name: "max_distance",
            reason: "must not be below min_distance".into(),
        });
    }
    let [ex, ey, et] = a.ego_error;
    let [cx, cy, ct] = a.coop_error;
    let (ego_err, coop_err) = (PoseError::from_degrees(ex, ey, et), PoseError::from_degrees(cx, cy, ct));
    let steps = ((a.max_distance - a.min_distance) / a.step + 1e-9).floor() as u64;
    let mut table = String::from(ENVELOPE_HEADER);
    table.push('\n');
    for k in 0..=steps {
        let d = a.min_distance + k as f64 * a.step;
        let e = relative_error_envelope(&ego_err, &coop_err, d, a.orientations as usize)?;
        writeln!(
            table,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            d,
            e.dx_min,
            e.dx_max,
            e.dy_min,
            e.dy_max,
            e.dtheta_min.to_degrees(),
            e.dtheta_max.to_degrees(),
            e.norm_max
        )?;
    }
    match &a.out {
        Some(path) => write_text(path, &table)?,
        None => print!("{table}"),
    }
    Ok(ExitCode::SUCCESS)
}
