//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relcorr_core::experiments::{residual, run_sweep, SweepGrid, SweepSpec};
use relcorr_core::geometry::{ground_truth_correction, normalize_angle, relative_error_envelope};
use relcorr_core::matching::{count_consensus, epsilon1_from_noise};
use relcorr_core::{
    cal_tf, grid_search_correct, ransac_correct, Error, Frame, GridSearchParams, KeypointSet, LabeledPoint,
    MatchParams, Point2, PointClass, Pose2D, PoseError, RansacParams, Transform2D,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 headline accuracy at sigma 0.4 m / 4 deg", headline_accuracy),
        ("2 rotation residual concentration", rotation_concentration),
        ("3 trends in N_ransac and thr_cons", trends),
        ("4 error propagation exactness", error_propagation),
        ("5 relative error envelope", envelope),
        ("6 candidate radius rule", epsilon1_rule),
        ("7 rigid fit exactness", cal_tf_exactness),
        ("8 consensus oracle", consensus_oracle),
        ("9 exhaustive RANSAC vs grid search", grid_cross_check),
        ("10 determinism across runs and threads", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "ACCEPTANCE {} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("ACCEPTANCE SUMMARY {}/10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn headline_spec(threads: usize) -> SweepSpec {
    SweepSpec {
        grid: SweepGrid::single(0.4, 4.0, 30, 10),
        pairs_per_cell: 200,
        master_seed: 11,
        min_shared_anchors: 15,
        threads,
        ..Default::default()
    }
}

fn headline_accuracy() -> Outcome {
    let start = Instant::now();
    let out = match run_sweep(&headline_spec(1)) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let r = &out.reports[0];
    let (Some(x), Some(y), Some(rot)) = (r.rmse_x, r.rmse_y, r.rmse_r_deg) else {
        return outcome(false, "no valid samples");
    };
    let shared_ok = out.records.iter().all(|r| r.shared_anchors >= 15);
    let pass = r.n_samples >= 200 && shared_ok && x < 0.2 && y < 0.2 && rot < 1.0 && elapsed < 60.0;
    outcome(
        pass,
        format!(
            "pairs={} valid_rate={:.3} rmse_x={x:.4} m rmse_y={y:.4} m rmse_r={rot:.4} deg runtime={elapsed:.2} s (single thread)",
            r.n_samples, r.valid_rate
        ),
    )
}

fn rotation_concentration() -> Outcome {
    let out = match run_sweep(&headline_spec(0)) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let valid: Vec<_> = out.records.iter().filter(|r| r.n_cons > 10).collect();
    let within = valid.iter().filter(|r| r.e_r.abs() < 1.0).count();
    let frac = within as f64 / valid.len().max(1) as f64;
    outcome(
        !valid.is_empty() && frac >= 0.9,
        format!(
            "{within}/{} valid records with |e_r| < 1 deg ({:.1}%)",
            valid.len(),
            100.0 * frac
        ),
    )
}

fn trends() -> Outcome {
    let n_values = vec![10, 20, 30, 40, 50];
    let spec = SweepSpec {
        grid: SweepGrid {
            sigma_xy: vec![0.4, 1.0],
            sigma_r_deg: vec![4.0, 10.0],
            n_ransac: n_values.clone(),
            thr_cons: (0..=60).collect(),
        },
        pairs_per_cell: 150,
        master_seed: 5,
        threads: 1,
        ..Default::default()
    };
    let out = match run_sweep(&spec) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let at = |sxy: f64, sr: f64, n: usize, thr: usize| {
        out.reports
            .iter()
            .find(|r| r.sigma_xy == sxy && r.sigma_r_deg == sr && r.n_ransac == n && r.thr_cons == thr)
            .expect("report present")
    };
    let fmt = |v: &[f64], prec: usize| v.iter().map(|x| format!("{x:.prec$}")).collect::<Vec<_>>().join(" ");
    let mut detail = Vec::new();
    let mut pass = out.reports.iter().all(|r| r.n_samples >= 100);
    for (sxy, sr) in [(0.4, 4.0), (1.0, 10.0)] {
        let rates: Vec<f64> = n_values.iter().map(|&n| at(sxy, sr, n, 10).valid_rate).collect();
        let violations = rates.windows(2).filter(|w| w[1] < w[0]).count();
        pass &= violations <= 1;
        detail.push(format!(
            "(a) {sxy} m/{sr} deg valid_rate@thr10 [{}] violations={violations}",
            fmt(&rates, 3)
        ));
    }
    let fps: Vec<f64> = n_values.iter().map(|&n| at(0.4, 4.0, n, 10).fps).collect();
    let fps_ok = fps.windows(2).all(|w| w[1] < w[0]);
    let thr_ok = out
        .reports
        .chunks(61)
        .all(|cell| cell.windows(2).all(|w| w[1].valid_rate <= w[0].valid_rate));
    pass &= fps_ok && thr_ok;
    detail.push(format!("(b) fps [{}]", fmt(&fps, 0)));
    detail.push(format!("(c) thr monotone={thr_ok}"));
    outcome(pass, detail.join("; "))
}

type M3 = [[f64; 3]; 3];

fn m_rot(t: f64) -> M3 {
    [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]]
}

fn m_trans(x: f64, y: f64) -> M3 {
    [[1.0, 0.0, x], [0.0, 1.0, y], [0.0, 0.0, 1.0]]
}

fn m_mul(a: &M3, b: &M3) -> M3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Relative transform of `coop` seen from `ego`, assembled from elementary
/// homogeneous matrices.
fn oracle_relative(ego: &Pose2D, coop: &Pose2D) -> M3 {
    let m = m_mul(&m_rot(-ego.theta), &m_trans(-ego.x, -ego.y));
    let m = m_mul(&m, &m_trans(coop.x, coop.y));
    m_mul(&m, &m_rot(coop.theta))
}

fn error_propagation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_map, mut worst_rot) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let pose = |r: &mut ChaCha8Rng| {
            Pose2D::new(
                r.random_range(-150.0..150.0),
                r.random_range(-150.0..150.0),
                r.random_range(-PI..PI),
            )
        };
        let (ego, coop) = (pose(&mut rng), pose(&mut rng));
        let err = |r: &mut ChaCha8Rng| {
            PoseError::new(
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
                r.random_range(-0.3..0.3),
            )
        };
        let (e0, ei) = (err(&mut rng), err(&mut rng));
        let (ego_err, coop_err) = (ego.perturbed(&e0), coop.perturbed(&ei));
        let dt = ground_truth_correction(&ego, &coop, &ego_err, &coop_err);
        let lhs = m_mul(&dt.matrix(), &oracle_relative(&ego_err, &coop_err));
        let rhs = oracle_relative(&ego, &coop);
        for i in 0..3 {
            for j in 0..3 {
                worst_map = worst_map.max((lhs[i][j] - rhs[i][j]).abs());
            }
        }
        worst_rot = worst_rot.max(normalize_angle(dt.dtheta - (e0.dtheta - ei.dtheta)).abs());
    }
    outcome(
        worst_map < 1e-10 && worst_rot < 1e-12,
        format!("10000 draws: max |dT*T_err - T_true| = {worst_map:.2e}, max rotation deviation = {worst_rot:.2e} rad"),
    )
}

fn envelope() -> Outcome {
    let e0 = PoseError::from_degrees(-0.5, -0.5, -5.0);
    let ei = PoseError::from_degrees(0.5, 0.5, 5.0);
    // Closed form: the correction translation is D*w - R(.)*delta with
    // w = e - R(-dtheta_i) e and delta = dp_i - dp_0, so its largest norm
    // over all headings is D*|w| + |delta|.
    let (c, s) = ((-ei.dtheta).cos(), (-ei.dtheta).sin());
    let w = (1.0 - c, -s);
    let w_norm = w.0.hypot(w.1);
    let delta = (ei.dx - e0.dx).hypot(ei.dy - e0.dy);

    let distances: Vec<f64> = (0..=20).map(|k| 5.0 * k as f64).collect();
    let mut norms = Vec::new();
    let (mut rot_dev, mut oracle_dev) = (0.0f64, 0.0f64);
    for &d in &distances {
        let env = match relative_error_envelope(&e0, &ei, d, 720) {
            Ok(e) => e,
            Err(e) => return outcome(false, e.to_string()),
        };
        rot_dev = rot_dev
            .max((env.dtheta_min.to_degrees().abs() - 10.0).abs())
            .max((env.dtheta_max.to_degrees().abs() - 10.0).abs());
        // The sampled sweep can only undershoot the continuous maximum.
        oracle_dev = oracle_dev.max(d * w_norm + delta - env.norm_max);
        norms.push(env.norm_max);
    }
    let r2 = r_squared(&distances, &norms);
    let far = relative_error_envelope(&e0, &ei, 50.0, 720).expect("valid");
    outcome(
        rot_dev < 1e-9 && r2 > 0.999 && oracle_dev < 1e-3,
        format!(
            "|dtheta| = 10 deg within {rot_dev:.1e}; R^2 of max translation vs distance = {r2:.6}; \
             max gap to closed form {oracle_dev:.1e} m; at 50 m dx in [{:.2}, {:.2}], dy in [{:.2}, {:.2}]",
            far.dx_min, far.dx_max, far.dy_min, far.dy_max
        ),
    )
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (my + slope * (a - mx))).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn epsilon1_rule() -> Outcome {
    let e = epsilon1_from_noise(2.58, 40.0, 4.0);
    let oracle = 2.58 * 40.0 * 4.0 * PI / 180.0;
    outcome(
        (e - 7.205).abs() <= 0.001 && (e - oracle).abs() < 1e-12,
        format!("epsilon1(2.58, 40 m, 4 deg) = {e:.6} m"),
    )
}

fn cal_tf_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let truth = Transform2D::new(
            rng.random_range(-PI..PI),
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
        );
        let n = rng.random_range(2..=30);
        let pairs: Vec<(Point2, Point2)> = (0..n)
            .map(|_| {
                let a = Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
                (a, truth.apply(a))
            })
            .collect();
        match cal_tf(&pairs) {
            Ok(t) => {
                worst = worst
                    .max(normalize_angle(t.dtheta - truth.dtheta).abs())
                    .max((t.dx - truth.dx).abs())
                    .max((t.dy - truth.dy).abs());
            }
            Err(e) => return outcome(false, format!("unexpected error {e}")),
        }
    }
    let p = Point2::new(1.0, 2.0);
    let single = cal_tf(&[(p, p)]);
    let coincident = cal_tf(&[(p, Point2::new(0.0, 0.0)), (p, Point2::new(3.0, 0.0))]);
    let degenerate_ok =
        matches!(single, Err(Error::DegenerateGeometry(_))) && matches!(coincident, Err(Error::DegenerateGeometry(_)));
    outcome(
        worst < 1e-9 && degenerate_ok,
        format!("1000 trials max parameter error {worst:.2e}; degenerate inputs rejected: {degenerate_ok}"),
    )
}

fn consensus_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    let mut max_points = 0;
    for trial in 0..100 {
        let n = rng.random_range(1..=1000);
        let m = rng.random_range(1..=1000);
        max_points = max_points.max(n.max(m));
        let extent = [10.0, 30.0, 80.0][trial % 3];
        let pts = |k: usize, r: &mut ChaCha8Rng| -> Vec<LabeledPoint> {
            (0..k)
                .map(|_| {
                    let class = PointClass::ALL[r.random_range(0..3)];
                    if trial % 2 == 0 {
                        let q = |r: &mut ChaCha8Rng| (r.random_range(-40..=40) as f64) * 0.5;
                        LabeledPoint::new(q(r), q(r), class)
                    } else {
                        LabeledPoint::new(r.random_range(-extent..extent), r.random_range(-extent..extent), class)
                    }
                })
                .collect()
        };
        let (ego, coop) = (pts(n, &mut rng), pts(m, &mut rng));
        let eps = [0.5, 1.0, 1.5][trial % 3];
        let got = count_consensus(&ego, &coop, eps).count;
        let want = coop
            .iter()
            .filter(|b| {
                ego.iter()
                    .any(|a| a.class == b.class && (a.x - b.x).powi(2) + (a.y - b.y).powi(2) < eps * eps)
            })
            .count();
        if got != want {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 100 instances (up to {max_points} points)"),
    )
}

fn grid_cross_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = 0;
    let trials = 100;
    for t in 0..trials {
        let n_shared = rng.random_range(3..=8);
        let mut ego_pts = Vec::new();
        for _ in 0..n_shared {
            let class = if rng.random_bool(0.5) {
                PointClass::Pole
            } else {
                PointClass::VehicleCenter
            };
            ego_pts.push(LabeledPoint::new(
                rng.random_range(-35.0..35.0),
                rng.random_range(-35.0..35.0),
                class,
            ));
        }
        for _ in 0..rng.random_range(0..=12) {
            ego_pts.push(LabeledPoint::new(
                rng.random_range(-35.0..35.0),
                rng.random_range(-35.0..35.0),
                PointClass::Planar,
            ));
        }
        let truth = Transform2D::from_degrees(
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let undo = truth.inverse();
        let mut coop_pts: Vec<LabeledPoint> = ego_pts
            .iter()
            .map(|p| {
                let q = undo.apply(p.position());
                LabeledPoint::new(
                    q.x + rng.random_range(-0.05..0.05),
                    q.y + rng.random_range(-0.05..0.05),
                    p.class,
                )
            })
            .collect();
        // Unshared clutter seen only by the cooperative vehicle.
        for _ in 0..rng.random_range(0..=2) {
            coop_pts.push(LabeledPoint::new(
                rng.random_range(-35.0..35.0),
                rng.random_range(-35.0..35.0),
                PointClass::Pole,
            ));
        }
        let ego = KeypointSet::new(format!("g{t}"), "ego", Frame::Ego).with_points(ego_pts);
        let coop = KeypointSet::new(format!("g{t}"), "coop", Frame::Ego).with_points(coop_pts);

        let params = RansacParams {
            exhaustive: true,
            matching: MatchParams::default(),
            ..Default::default()
        };
        let r = ransac_correct(&ego, &coop, &params);
        let g = match grid_search_correct(&ego, &coop, &GridSearchParams::default()) {
            Ok(g) => g,
            Err(e) => return outcome(false, format!("grid search failed: {e}")),
        };
        let err = |est: &Transform2D| {
            let e = residual(est, &truth, 0.0);
            e.e_x.hypot(e.e_y)
        };
        if err(&r.transform) <= err(&g.transform) + 0.05 {
            ok += 1;
        }
    }
    outcome(
        ok * 100 >= trials * 95,
        format!("{ok}/{trials} scenes with RANSAC residual <= grid residual + 0.05 m"),
    )
}

fn relcorr(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_relcorr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run relcorr")
}

/// Drops the `fps` column of a results table.
fn without_fps(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n")
        .collect()
}

/// Drops `runtime_s` from raw records.
fn without_runtime(jsonl: &str) -> String {
    jsonl
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).expect("record json");
            v.as_object_mut().expect("object").remove("runtime_s");
            v.to_string() + "\n"
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let mut problems = Vec::new();

    for run in ["a", "b"] {
        let out = relcorr(
            &[
                "generate",
                "--seed",
                "21",
                "--out",
                &format!("scene_{run}.json"),
                "--keypoints-dir",
                &format!("kp_{run}"),
                "--frames",
                "3",
            ],
            d,
        );
        if !out.status.success() {
            problems.push(format!("generate failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let read = |p: &str| std::fs::read_to_string(d.join(p)).unwrap_or_default();
    if read("scene_a.json") != read("scene_b.json") || read("kp_a/pairs.json") != read("kp_b/pairs.json") {
        problems.push("generate outputs differ".into());
    }
    let mut files: Vec<_> = std::fs::read_dir(d.join("kp_a"))
        .map(|r| {
            r.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    for f in &files {
        if read(&format!("kp_a/{f}")) != read(&format!("kp_b/{f}")) {
            problems.push(format!("keypoint file {f} differs"));
        }
    }

    let mut tables = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = relcorr(
            &[
                "sweep",
                "--sigma-xy",
                "0.2,0.6",
                "--sigma-r",
                "2,6",
                "--n-ransac",
                "10,30",
                "--thr-cons",
                "5,10",
                "--pairs",
                "40",
                "--seed",
                "3",
                "--threads",
                threads,
                "--out",
                &format!("r{threads}.csv"),
                "--records",
                &format!("r{threads}.jsonl"),
            ],
            d,
        );
        if !out.status.success() {
            problems.push(format!("sweep failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        tables.push((
            without_fps(&read(&format!("r{threads}.csv"))),
            without_runtime(&read(&format!("r{threads}.jsonl"))),
        ));
    }
    if tables.windows(2).any(|w| w[0] != w[1]) || tables[0].0.lines().count() != 17 {
        problems.push("sweep outputs differ across thread counts".into());
    }

    if let Some(pair) = files.iter().find(|f| f.ends_with(".jsonl")) {
        let args = [
            "correct",
            "--ego",
            pair.as_str(),
            "--coop",
            pair.as_str(),
            "--json",
            "--seed",
            "5",
        ];
        let kp = d.join("kp_a");
        let (o1, o2) = (relcorr(&args, &kp), relcorr(&args, &kp));
        if o1.stdout != o2.stdout || o1.status.code() != o2.status.code() {
            problems.push("correct outputs differ".into());
        }
    }
    let env = ["envelope", "--max-distance", "30"];
    if relcorr(&env, d).stdout != relcorr(&env, d).stdout {
        problems.push("envelope outputs differ".into());
    }

    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "generate x2 ({} keypoint files), sweep at 1/4/8 threads, correct x2, envelope x2 identical",
                files.len()
            )
        } else {
            problems.join("; ")
        },
    )
}
