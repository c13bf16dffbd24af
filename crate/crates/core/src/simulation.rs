//! Synthetic junction scenes and per-vehicle observations.
//!
//! A world is two perpendicular road corridors crossing at the origin, poles
//! along the road edges, building facades set back from the roads, and
//! lane-aligned vehicles. Observers report vehicle centers, poles and
//! facade points within the communication range, expressed in their own
//! (true) local frame, with Gaussian detection noise and random dropout.
//!
//! Randomness comes from `ChaCha8Rng` streams; Gaussian draws use the
//! `rand_distr` ziggurat sampler. Both are platform independent, so a seed
//! reproduces the same scene everywhere.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ground_truth_correction, relative_transform, Point2, Pose2D, PoseError, PoseNoise, Transform2D};
use crate::keypoints::{fps_downsample, Frame, KeypointSet, LabeledPoint, PointClass};

pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// One value per point class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub vehicle_center: T,
    pub pole: T,
    pub planar: T,
}

impl<T: Copy> PerClass<T> {
    pub fn uniform(v: T) -> Self {
        Self {
            vehicle_center: v,
            pole: v,
            planar: v,
        }
    }

    pub fn get(&self, class: PointClass) -> T {
        match class {
            PointClass::VehicleCenter => self.vehicle_center,
            PointClass::Pole => self.pole,
            PointClass::Planar => self.planar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Side length of the square scene centered on the origin (meters).
    pub extent: f64,
    pub n_vehicles: usize,
    pub road_width: f64,
    /// Vehicles are placed within this distance of the junction center.
    pub vehicle_spread: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// Nominal distance between consecutive poles along a road edge.
    pub pole_spacing: f64,
    /// Distance from the road edge to the facade line.
    pub facade_setback: f64,
    /// Discretization step of facade segments before downsampling.
    pub facade_spacing: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            extent: 200.0,
            n_vehicles: 20,
            road_width: 14.0,
            vehicle_spread: 60.0,
            vehicle_length: 4.6,
            vehicle_width: 1.9,
            pole_spacing: 10.0,
            facade_setback: 6.0,
            facade_spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub world: WorldConfig,
    /// Communication and perception range (meters).
    pub r_c: f64,
    /// Planar points kept per observation after furthest point sampling.
    pub n_f: usize,
    /// Detection noise standard deviation per class (meters).
    pub detection_noise: PerClass<f64>,
    /// Probability that an in-range object is reported.
    pub detection_prob: PerClass<f64>,
    pub pose_noise: PoseNoise,
    pub n_cooperative_max: usize,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            r_c: 40.0,
            n_f: 50,
            detection_noise: PerClass {
                vehicle_center: 0.1,
                pole: 0.05,
                planar: 0.05,
            },
            detection_prob: PerClass::uniform(0.9),
            pose_noise: PoseNoise {
                sigma_xy: 0.4,
                sigma_r_deg: 4.0,
            },
            n_cooperative_max: 5,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_c.is_finite() && self.r_c > 0.0) {
            return Err(Error::invalid("r_c", format!("must be > 0, got {}", self.r_c)));
        }
        for c in PointClass::ALL {
            let p = self.detection_prob.get(c);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("detection_prob", format!("{p} is not in [0, 1]")));
            }
            let s = self.detection_noise.get(c);
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid("detection_noise", format!("{s} must be >= 0")));
            }
        }
        PoseNoise::new(self.pose_noise.sigma_xy, self.pose_noise.sigma_r_deg)?;
        let w = &self.world;
        for (name, v) in [
            ("extent", w.extent),
            ("road_width", w.road_width),
            ("vehicle_length", w.vehicle_length),
            ("vehicle_width", w.vehicle_width),
            ("pole_spacing", w.pole_spacing),
            ("facade_spacing", w.facade_spacing),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(w.vehicle_spread.is_finite() && w.vehicle_spread >= 0.0) {
            return Err(Error::invalid("vehicle_spread", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
    pub length: f64,
    pub width: f64,
}

impl Vehicle {
    pub fn pose(&self) -> Pose2D {
        Pose2D::from_degrees(self.x, self.y, self.heading_deg)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners(&self) -> [Point2; 4] {
        let t = self.pose().local_to_global();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(x, y)| t.apply(Point2::new(x, y)))
    }

    /// Separating-axis test between the two footprints grown by `margin`.
    pub fn overlaps(&self, other: &Vehicle, margin: f64) -> bool {
        let reach = (self.length.hypot(self.width) + other.length.hypot(other.width)) / 2.0 + margin;
        if self.center().distance(&other.center()) > reach {
            return false;
        }
        let axes = |v: &Vehicle| {
            let h = v.heading_deg.to_radians();
            [Point2::new(h.cos(), h.sin()), Point2::new(-h.sin(), h.cos())]
        };
        let project = |v: &Vehicle, axis: Point2| {
            let c = v.corners().map(|p| p.x * axis.x + p.y * axis.y);
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        for axis in axes(self).into_iter().chain(axes(other)) {
            let (a0, a1) = project(self, axis);
            let (b0, b1) = project(other, axis);
            if a1 + margin < b0 || b1 + margin < a0 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacadeSegment {
    pub id: u32,
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Distance between consecutive discretized points (meters).
    pub spacing: f64,
}

impl FacadeSegment {
    pub fn points(&self) -> Vec<Point2> {
        let (a, b) = (Point2::from(self.start), Point2::from(self.end));
        let len = a.distance(&b);
        let n = (len / self.spacing).floor() as usize;
        (0..=n)
            .map(|k| {
                let t = if len > 0.0 { k as f64 * self.spacing / len } else { 0.0 };
                Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldScene {
    pub schema_version: u32,
    /// Side length of the square scene centered on the origin (meters).
    pub extent: f64,
    pub vehicles: Vec<Vehicle>,
    pub poles: Vec<Pole>,
    pub facades: Vec<FacadeSegment>,
    /// Vehicles that could not be placed without overlapping.
    #[serde(default)]
    pub placement_failures: usize,
}

impl WorldScene {
    pub fn vehicle(&self, id: u32) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let scene: WorldScene = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if scene.schema_version != SCENE_SCHEMA_VERSION {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                message: format!("unsupported schema_version {}", scene.schema_version),
            });
        }
        Ok(scene)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Generates a junction scene. Deterministic for a given config and seed.
pub fn generate_world(config: &WorldConfig, rng_seed: u64) -> WorldScene {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let half = config.extent / 2.0;
    let road_half = config.road_width / 2.0;
    let margin = 1.0_f64.min(half / 4.0);
    let inside = |v: f64| v.clamp(-half + margin, half - margin);

    // Poles: both edges of both roads, skipping the crossing itself.
    let mut poles = Vec::new();
    let edge_offset = road_half + 1.5;
    let jitter = 0.3 * config.pole_spacing;
    for vertical in [false, true] {
        for side in [-1.0, 1.0] {
            let mut along = -half + config.pole_spacing / 2.0;
            while along < half {
                let a = inside(along + rng.random_range(-jitter..=jitter));
                let c = inside(side * edge_offset + rng.random_range(-0.3..=0.3));
                along += config.pole_spacing;
                if a.abs() < edge_offset + 1.0 {
                    continue;
                }
                let (x, y) = if vertical { (c, a) } else { (a, c) };
                poles.push(Pole {
                    id: poles.len() as u32,
                    x,
                    y,
                });
            }
        }
    }

    // Facades: buildings in each quadrant, fronting both roads.
    let mut facades = Vec::new();
    let front = road_half + config.facade_setback;
    if front < half - margin {
        for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            for vertical in [false, true] {
                let mut along = front;
                while along < half - margin {
                    let len = rng.random_range(15.0..=35.0);
                    let end = (along + len).min(half - margin);
                    let (start, stop) = if vertical {
                        ([sx * front, sy * along], [sx * front, sy * end])
                    } else {
                        ([sx * along, sy * front], [sx * end, sy * front])
                    };
                    facades.push(FacadeSegment {
                        id: facades.len() as u32,
                        start,
                        end: stop,
                        spacing: config.facade_spacing,
                    });
                    along = end + rng.random_range(4.0..=10.0);
                }
            }
        }
    }

    // Vehicles: lane aligned, right-hand traffic, rejection sampled.
    let lanes = [-0.75, -0.25, 0.25, 0.75].map(|f| f * config.road_width);
    let spread = config.vehicle_spread.min(half - margin - config.vehicle_length);
    let mut vehicles: Vec<Vehicle> = Vec::new();
    let mut placement_failures = 0;
    for _ in 0..config.n_vehicles {
        let mut placed = false;
        for _attempt in 0..50 {
            let vertical = rng.random_bool(0.5);
            let lane = lanes[rng.random_range(0..lanes.len())];
            let along = if spread > 0.0 {
                rng.random_range(-spread..=spread)
            } else {
                0.0
            };
            let lateral = lane + rng.random_range(-0.3..=0.3);
            let heading_jitter = rng.random_range(-2.0..=2.0);
            let (x, y, heading) = if vertical {
                (lateral, along, if lane > 0.0 { 90.0 } else { -90.0 })
            } else {
                (along, lateral, if lane < 0.0 { 0.0 } else { 180.0 })
            };
            let candidate = Vehicle {
                id: vehicles.len() as u32,
                x: inside(x),
                y: inside(y),
                heading_deg: crate::geometry::normalize_degrees(heading + heading_jitter),
                length: config.vehicle_length,
                width: config.vehicle_width,
            };
            if vehicles.iter().all(|v| !v.overlaps(&candidate, 0.5)) {
                vehicles.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            placement_failures += 1;
        }
    }

    WorldScene {
        schema_version: SCENE_SCHEMA_VERSION,
        extent: config.extent,
        vehicles,
        poles,
        facades,
        placement_failures,
    }
}

/// Who is observing: a pose, the vehicle to exclude from its own detections,
/// and the labels written into the keypoint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    pub name: String,
    pub frame_id: String,
    pub vehicle_id: Option<u32>,
    pub pose: Pose2D,
}

impl Observer {
    pub fn vehicle(v: &Vehicle, frame_id: impl Into<String>) -> Self {
        Self {
            name: vehicle_name(v.id),
            frame_id: frame_id.into(),
            vehicle_id: Some(v.id),
            pose: v.pose(),
        }
    }
}

pub fn vehicle_name(id: u32) -> String {
    format!("v{id}")
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated non-negative sigma")
}

/// Simulated detection and segmentation output of one observer, in its true
/// local frame. Objects farther than `r_c` from the observer are never
/// reported; the rest are reported with their class's detection probability.
/// Planar points are discretized facades, perturbed, then reduced to `n_f`
/// points by furthest point sampling.
pub fn observe<R: Rng + ?Sized>(
    world: &WorldScene,
    observer: &Observer,
    config: &ScenarioConfig,
    rng: &mut R,
) -> KeypointSet {
    let to_local = observer.pose.local_to_global().inverse();
    let origin = observer.pose.position();
    let r2 = config.r_c * config.r_c;
    let mut points = Vec::new();
    let mut planar = Vec::new();

    let detect = |rng: &mut R, p: Point2, class: PointClass, id: String, out: &mut Vec<LabeledPoint>| {
        if p.distance_squared(&origin) > r2 {
            return;
        }
        if !rng.random_bool(config.detection_prob.get(class)) {
            return;
        }
        let noise = normal(config.detection_noise.get(class));
        let q = to_local.apply(p);
        let (nx, ny) = (noise.sample(rng), noise.sample(rng));
        out.push(LabeledPoint::new(q.x + nx, q.y + ny, class).with_source(id));
    };

    for v in &world.vehicles {
        if Some(v.id) == observer.vehicle_id {
            continue;
        }
        detect(
            rng,
            v.center(),
            PointClass::VehicleCenter,
            vehicle_name(v.id),
            &mut points,
        );
    }
    for pole in &world.poles {
        detect(
            rng,
            Point2::new(pole.x, pole.y),
            PointClass::Pole,
            format!("p{}", pole.id),
            &mut points,
        );
    }
    for f in &world.facades {
        for (k, p) in f.points().into_iter().enumerate() {
            detect(rng, p, PointClass::Planar, format!("f{}:{k}", f.id), &mut planar);
        }
    }
    points.extend(fps_downsample(&planar, config.n_f));

    KeypointSet::new(&observer.frame_id, &observer.name, Frame::ObserverLocal).with_points(points)
}

/// Draws an independent zero-mean Gaussian error for x, y (`sigma_xy`) and
/// heading (`sigma_r_deg`).
pub fn draw_pose_error<R: Rng + ?Sized>(noise: &PoseNoise, rng: &mut R) -> PoseError {
    let xy = normal(noise.sigma_xy);
    let r = normal(noise.sigma_r_deg);
    let dx = xy.sample(rng);
    let dy = xy.sample(rng);
    PoseError::from_degrees(dx, dy, r.sample(rng))
}

pub fn inject_pose_error<R: Rng + ?Sized>(pose: &Pose2D, noise: &PoseNoise, rng: &mut R) -> Pose2D {
    pose.perturbed(&draw_pose_error(noise, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedPartner {
    pub vehicle_id: u32,
    pub pose: Pose2D,
    pub observation: KeypointSet,
}

/// An ego vehicle, its in-range cooperative partners and everybody's
/// observations, before any localization error is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedScene {
    pub frame_id: String,
    pub ego_id: u32,
    pub ego_pose: Pose2D,
    pub ego_observation: KeypointSet,
    pub partners: Vec<ObservedPartner>,
}

impl ObservedScene {
    /// Picks a random ego and up to `n_cooperative_max` partners within
    /// `r_c`, and observes the world from each. `None` when the world has
    /// fewer than two vehicles or the ego has no partner in range.
    pub fn sample<R: Rng + ?Sized>(
        world: &WorldScene,
        config: &ScenarioConfig,
        frame_id: &str,
        rng: &mut R,
    ) -> Option<Self> {
        if world.vehicles.len() < 2 {
            return None;
        }
        let ego = &world.vehicles[rng.random_range(0..world.vehicles.len())];
        let mut partners: Vec<&Vehicle> = world
            .vehicles
            .iter()
            .filter(|v| v.id != ego.id && v.center().distance(&ego.center()) <= config.r_c)
            .collect();
        if partners.is_empty() {
            return None;
        }
        partners.shuffle(rng);
        partners.truncate(config.n_cooperative_max);
        partners.sort_by_key(|v| v.id);

        let ego_observation = observe(world, &Observer::vehicle(ego, frame_id), config, rng);
        let partners = partners
            .into_iter()
            .map(|v| ObservedPartner {
                vehicle_id: v.id,
                pose: v.pose(),
                observation: observe(world, &Observer::vehicle(v, frame_id), config, rng),
            })
            .collect();
        Some(Self {
            frame_id: frame_id.to_string(),
            ego_id: ego.id,
            ego_pose: ego.pose(),
            ego_observation,
            partners,
        })
    }

    /// Applies localization errors: one draw for the ego, then one per
    /// partner in order.
    pub fn with_pose_errors<R: Rng + ?Sized>(&self, noise: &PoseNoise, rng: &mut R) -> Vec<SamplePair> {
        let ego_erroneous = inject_pose_error(&self.ego_pose, noise, rng);
        self.partners
            .iter()
            .map(|p| {
                let coop_erroneous = inject_pose_error(&p.pose, noise, rng);
                SamplePair {
                    frame_id: self.frame_id.clone(),
                    ego_id: self.ego_id,
                    coop_id: p.vehicle_id,
                    ego_true: self.ego_pose,
                    ego_erroneous,
                    coop_true: p.pose,
                    coop_erroneous,
                    ego_observation: self.ego_observation.clone(),
                    coop_observation: p.observation.clone(),
                    correction: ground_truth_correction(&self.ego_pose, &p.pose, &ego_erroneous, &coop_erroneous),
                }
            })
            .collect()
    }
}

/// One ego/cooperative evaluation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub frame_id: String,
    pub ego_id: u32,
    pub coop_id: u32,
    pub ego_true: Pose2D,
    pub ego_erroneous: Pose2D,
    pub coop_true: Pose2D,
    pub coop_erroneous: Pose2D,
    /// Ego keypoints in the ego's local frame.
    pub ego_observation: KeypointSet,
    /// Cooperative keypoints in the cooperative vehicle's local frame.
    pub coop_observation: KeypointSet,
    /// Exact correction for the erroneous relative transform.
    pub correction: Transform2D,
}

impl SamplePair {
    /// Relative transform built from the erroneous poses.
    pub fn erroneous_relative(&self) -> Transform2D {
        relative_transform(&self.ego_erroneous, &self.coop_erroneous)
    }

    pub fn true_relative(&self) -> Transform2D {
        relative_transform(&self.ego_true, &self.coop_true)
    }

    /// Cooperative keypoints mapped into the ego frame with the erroneous
    /// relative transform, i.e. the estimator's input.
    pub fn coop_in_ego(&self) -> KeypointSet {
        self.coop_observation
            .transformed(&self.erroneous_relative(), Frame::Ego)
    }

    pub fn shared_anchors(&self) -> usize {
        shared_anchor_count(&self.ego_observation, &self.coop_observation)
    }
}

/// Anchors present in both sets, by simulator source id.
pub fn shared_anchor_count(a: &KeypointSet, b: &KeypointSet) -> usize {
    let ids: HashSet<&str> = a.anchors().filter_map(|p| p.source_id.as_deref()).collect();
    b.anchors()
        .filter_map(|p| p.source_id.as_deref())
        .filter(|id| ids.contains(id))
        .count()
}

/// Samples an ego with its partners and applies pose errors from
/// `config.pose_noise`. Empty when no partner is in range.
pub fn make_sample_pairs<R: Rng + ?Sized>(
    world: &WorldScene,
    config: &ScenarioConfig,
    frame_id: &str,
    rng: &mut R,
) -> Vec<SamplePair> {
    match ObservedScene::sample(world, config, frame_id, rng) {
        Some(scene) => scene.with_pose_errors(&config.pose_noise, rng),
        None => Vec::new(),
    }
}
