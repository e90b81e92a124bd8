//! Shared domain types: detections, track state, world points, and the
//! frame clock used to convert frame counts into seconds.

mod formats;

pub use formats::{
    parse_detection_file, read_appearance_sidecar, write_appearance_sidecar, write_detection_file,
    DetectionFormat, ParseOptions, ParseWarning, ParsedDetections,
};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Length of the appearance descriptors consumed from the sidecar file.
pub const APPEARANCE_DIM: usize = 128;

/// Axis-aligned bounding box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        BBox {
            left,
            top,
            width,
            height,
        }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Pixel presumed to touch the ground when no contour is available.
    pub fn bottom_center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height)
    }

    /// Measurement vector (x_c, y_c, aspect, height) used by the tracker.
    pub fn to_xyah(&self) -> SVector<f64, 4> {
        SVector::<f64, 4>::new(
            self.left + self.width / 2.0,
            self.top + self.height / 2.0,
            self.width / self.height,
            self.height,
        )
    }

    pub fn from_xyah(x_c: f64, y_c: f64, aspect: f64, height: f64) -> Self {
        let width = aspect * height;
        BBox {
            left: x_c - width / 2.0,
            top: y_c - height / 2.0,
            width,
            height,
        }
    }
}

/// Object classes emitted by the upstream detector.
///
/// The first six are person classes; `NonPerson` covers everything else
/// (cars, strollers, dogs, ...) and is dropped by the person-centric stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Pedestrian,
    Cyclist,
    Scooter,
    Skater,
    Sitter,
    PeopleOther,
    NonPerson,
}

impl ClassLabel {
    /// True exactly for the six person classes.
    pub fn is_person(self) -> bool {
        !matches!(self, ClassLabel::NonPerson)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Cyclist => "cyclist",
            ClassLabel::Scooter => "scooter",
            ClassLabel::Skater => "skater",
            ClassLabel::Sitter => "sitter",
            ClassLabel::PeopleOther => "people_other",
            ClassLabel::NonPerson => "non_person",
        }
    }

    /// Parses a class string. Unknown strings map to `PeopleOther` so that
    /// ingestion stays fail-soft; the caller is told via the `bool`.
    pub fn parse_lossy(s: &str) -> (ClassLabel, bool) {
        match s {
            "pedestrian" => (ClassLabel::Pedestrian, true),
            "cyclist" => (ClassLabel::Cyclist, true),
            "scooter" => (ClassLabel::Scooter, true),
            "skater" => (ClassLabel::Skater, true),
            "sitter" => (ClassLabel::Sitter, true),
            "people_other" => (ClassLabel::PeopleOther, true),
            "non_person" => (ClassLabel::NonPerson, true),
            _ => (ClassLabel::PeopleOther, false),
        }
    }

    pub fn all() -> [ClassLabel; 7] {
        [
            ClassLabel::Pedestrian,
            ClassLabel::Cyclist,
            ClassLabel::Scooter,
            ClassLabel::Skater,
            ClassLabel::Sitter,
            ClassLabel::PeopleOther,
            ClassLabel::NonPerson,
        ]
    }
}

/// True exactly for the six person classes.
pub fn class_is_person(label: ClassLabel) -> bool {
    label.is_person()
}

/// One per-frame observation from the detection source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// 1-based frame index.
    pub frame_index: u64,
    pub bbox: BBox,
    pub class_label: ClassLabel,
    /// Detector confidence in [0,1] (clamped at parse time).
    pub confidence: f64,
    /// Optional segmentation contour in pixel coordinates.
    pub contour: Option<Vec<(f64, f64)>>,
    /// Optional unit-norm appearance descriptor of length 128.
    pub appearance: Option<Vec<f64>>,
}

impl Detection {
    pub fn new(frame_index: u64, bbox: BBox, class_label: ClassLabel, confidence: f64) -> Self {
        Detection {
            frame_index,
            bbox,
            class_label,
            confidence,
            contour: None,
            appearance: None,
        }
    }

    /// Attaches an appearance vector, normalizing it to unit Euclidean norm.
    /// Returns an error for zero or non-finite vectors.
    pub fn with_appearance(mut self, raw: &[f64]) -> Result<Self> {
        if raw.len() != APPEARANCE_DIM {
            return Err(Error::AppearanceLength {
                got: raw.len(),
                expected: APPEARANCE_DIM,
            });
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput(
                "appearance vector has zero or non-finite norm".into(),
            ));
        }
        self.appearance = Some(raw.iter().map(|v| v / norm).collect());
        Ok(self)
    }
}

/// A point in the world coordinate system, meters. Ground-plane points
/// carry `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        WorldPoint { x, y, z }
    }

    pub fn ground(x: f64, y: f64) -> Self {
        WorldPoint { x, y, z: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn ground_distance(&self, other: &WorldPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Frame/time bookkeeping: the source runs at `fps` and the pipeline
/// processes every `n_skip`-th frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameClock {
    pub fps: f64,
    pub n_skip: u32,
}

impl FrameClock {
    pub fn new(fps: f64, n_skip: u32) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::Config(format!("fps must be > 0, got {fps}")));
        }
        if n_skip < 1 {
            return Err(Error::Config("n_skip must be >= 1".into()));
        }
        Ok(FrameClock { fps, n_skip })
    }

    /// Elapsed seconds between two consecutive processed frames.
    pub fn step_seconds(&self) -> f64 {
        self.n_skip as f64 / self.fps
    }

    /// Wall time of a 1-based frame index, in seconds from the start.
    pub fn time_of_frame(&self, frame_index: u64) -> f64 {
        (frame_index.saturating_sub(1)) as f64 / self.fps
    }
}

/// Kinematic state of a track: bbox center, aspect ratio, height, and
/// their per-frame rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub x_c: f64,
    pub y_c: f64,
    pub aspect: f64,
    pub height: f64,
    pub dx_c: f64,
    pub dy_c: f64,
    pub daspect: f64,
    pub dheight: f64,
}

impl TrackState {
    pub fn to_vector(&self) -> SVector<f64, 8> {
        SVector::<f64, 8>::from_column_slice(&[
            self.x_c,
            self.y_c,
            self.aspect,
            self.height,
            self.dx_c,
            self.dy_c,
            self.daspect,
            self.dheight,
        ])
    }

    pub fn from_vector(v: &SVector<f64, 8>) -> Self {
        TrackState {
            x_c: v[0],
            y_c: v[1],
            aspect: v[2],
            height: v[3],
            dx_c: v[4],
            dy_c: v[5],
            daspect: v[6],
            dheight: v[7],
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_xyah(self.x_c, self.y_c, self.aspect, self.height)
    }
}

/// Track lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

/// A live identity owned by one tracker instance.
#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub state: TrackState,
    pub covariance: SMatrix<f64, 8, 8>,
    /// Ring buffer of unit-norm appearance vectors, newest last.
    pub gallery: VecDeque<Vec<f64>>,
    pub status: TrackStatus,
    /// Frames since the track was initiated.
    pub age: u64,
    /// Number of measurement updates received.
    pub hits: u64,
    /// Processed frames since the last measurement update.
    pub time_since_update: u64,
    /// Majority class observed so far.
    pub class_label: ClassLabel,
}

impl Track {
    pub fn is_confirmed(&self) -> bool {
        self.status == TrackStatus::Confirmed
    }

    pub fn is_deleted(&self) -> bool {
        self.status == TrackStatus::Deleted
    }

    /// Appends an appearance vector, evicting the oldest past `capacity`.
    pub fn push_appearance(&mut self, feature: Vec<f64>, capacity: usize) {
        if capacity == 0 {
            return;
        }
        while self.gallery.len() >= capacity {
            self.gallery.pop_front();
        }
        self.gallery.push_back(feature);
    }
}
