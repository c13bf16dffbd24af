//! Labeled 2D localization points and keypoint sets.
//!
//! # File format
//!
//! A keypoint set is stored as JSON lines, one point per line:
//!
//! ```text
//! {"frame_id":"s0","observer":"v3","frame":"observer_local","class":"pole","x":12.500000000,"y":-3.250000000,"source_id":"p17"}
//! ```
//!
//! | field       | type   | notes                                                   |
//! |-------------|--------|---------------------------------------------------------|
//! | `frame_id`  | string | same on every line                                      |
//! | `observer`  | string | same on every line                                      |
//! | `frame`     | string | `observer_local`, `ego` or `global`; optional, default `observer_local` |
//! | `class`     | string | `vehicle_center`, `pole` or `planar`                    |
//! | `x`, `y`    | number | meters, written with 9 decimal digits                   |
//! | `source_id` | string | optional simulator ground truth, ignored by estimation   |
//!
//! Blank lines are skipped. Unknown fields are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Transform2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    VehicleCenter,
    Pole,
    Planar,
}

impl PointClass {
    pub const ALL: [PointClass; 3] = [PointClass::VehicleCenter, PointClass::Pole, PointClass::Planar];

    /// Vehicle centers and poles are anchors; planar points only vote.
    pub fn is_anchor(self) -> bool {
        !matches!(self, PointClass::Planar)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::VehicleCenter => "vehicle_center",
            PointClass::Pole => "pole",
            PointClass::Planar => "planar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    ObserverLocal,
    Ego,
    Global,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::ObserverLocal => "observer_local",
            Frame::Ego => "ego",
            Frame::Global => "global",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub class: PointClass,
    /// Simulation ground truth. The estimator never reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl LabeledPoint {
    pub fn new(x: f64, y: f64, class: PointClass) -> Self {
        Self {
            x,
            y,
            class,
            source_id: None,
        }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn transformed(&self, t: &Transform2D) -> Self {
        let p = t.apply(self.position());
        Self {
            x: p.x,
            y: p.y,
            class: self.class,
            source_id: self.source_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub frame_id: String,
    pub observer: String,
    pub frame: Frame,
    pub points: Vec<LabeledPoint>,
}

impl KeypointSet {
    pub fn new(frame_id: impl Into<String>, observer: impl Into<String>, frame: Frame) -> Self {
        Self {
            frame_id: frame_id.into(),
            observer: observer.into(),
            frame,
            points: Vec::new(),
        }
    }

    pub fn with_points(mut self, points: Vec<LabeledPoint>) -> Self {
        self.points = points;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Vehicle centers and poles.
    pub fn anchors(&self) -> impl Iterator<Item = &LabeledPoint> {
        self.points.iter().filter(|p| p.class.is_anchor())
    }

    pub fn planar(&self) -> impl Iterator<Item = &LabeledPoint> {
        self.points.iter().filter(|p| p.class == PointClass::Planar)
    }

    pub fn count_of(&self, class: PointClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }

    /// Applies `t` to every point; classes and source ids are kept.
    pub fn transformed(&self, t: &Transform2D, new_frame: Frame) -> KeypointSet {
        KeypointSet {
            frame_id: self.frame_id.clone(),
            observer: self.observer.clone(),
            frame: new_frame,
            points: self.points.iter().map(|p| p.transformed(t)).collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let frame_id = serde_json::to_string(&self.frame_id).expect("string serializes");
        let observer = serde_json::to_string(&self.observer).expect("string serializes");
        let mut out = String::new();
        for p in &self.points {
            write!(
                out,
                "{{\"frame_id\":{frame_id},\"observer\":{observer},\"frame\":\"{}\",\"class\":\"{}\",\"x\":{:.9},\"y\":{:.9}",
                self.frame.as_str(),
                p.class.as_str(),
                p.x,
                p.y
            )
            .unwrap();
            if let Some(id) = &p.source_id {
                write!(out, ",\"source_id\":{}", serde_json::to_string(id).unwrap()).unwrap();
            }
            out.push_str("}\n");
        }
        out
    }

    /// Parses the line-delimited format. `origin` is used in error messages.
    pub fn from_jsonl(text: &str, origin: &Path) -> Result<KeypointSet> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Record {
            frame_id: String,
            observer: String,
            #[serde(default)]
            frame: Frame,
            class: PointClass,
            x: f64,
            y: f64,
            #[serde(default)]
            source_id: Option<String>,
        }

        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };

        let mut set: Option<KeypointSet> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
            if !(rec.x.is_finite() && rec.y.is_finite()) {
                return Err(parse_err(line, "coordinates must be finite".into()));
            }
            let set = set.get_or_insert_with(|| KeypointSet::new(&rec.frame_id, &rec.observer, rec.frame));
            if set.frame_id != rec.frame_id || set.observer != rec.observer || set.frame != rec.frame {
                return Err(parse_err(
                    line,
                    "frame_id, observer and frame must be identical on every line".into(),
                ));
            }
            set.points.push(LabeledPoint {
                x: rec.x,
                y: rec.y,
                class: rec.class,
                source_id: rec.source_id,
            });
        }
        Ok(set.unwrap_or_else(|| KeypointSet::new("", "", Frame::ObserverLocal)))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<KeypointSet> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, path)
    }
}

/// Furthest point sampling.
///
/// Returns all points when there are at most `n_f`. Otherwise the first
/// input point seeds the selection and every further pick is the point with
/// the largest distance to its nearest already-selected point (ties go to
/// the lower input index). Output is in selection order.
pub fn fps_downsample(points: &[LabeledPoint], n_f: usize) -> Vec<LabeledPoint> {
    if points.len() <= n_f {
        return points.to_vec();
    }
    if n_f == 0 {
        return Vec::new();
    }
    let mut selected = Vec::with_capacity(n_f);
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut taken = vec![false; points.len()];
    let mut current = 0;
    loop {
        selected.push(points[current].clone());
        taken[current] = true;
        if selected.len() == n_f {
            break;
        }
        let c = points[current].position();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d2 = p.position().distance_squared(&c);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if best.is_none_or(|(_, bd)| min_d2[i] > bd) {
                best = Some((i, min_d2[i]));
            }
        }
        current = best.expect("more points than selections").0;
    }
    selected
}
