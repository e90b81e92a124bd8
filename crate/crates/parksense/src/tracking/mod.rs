//! Tracking by detection: Kalman prediction/update, motion and appearance
//! distances, gated cascade matching with minimum-cost assignment, an IoU
//! fallback stage, and track lifecycle management.

mod assignment;
mod kalman;

pub use assignment::{hungarian_assign, iou, Assignment, FORBIDDEN_COST};
pub use kalman::{
    kalman_predict, kalman_update, mahalanobis_squared, KalmanFilter, KalmanNoise,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    BBox, ClassLabel, Detection, FrameClock, Track, TrackState, TrackStatus,
};

/// Per-pair association cost with its gate outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationCost {
    /// Squared Mahalanobis distance in measurement space.
    pub d_mot: f64,
    /// Smallest cosine distance against the track's gallery, in [0,2].
    pub d_app: f64,
    /// Gated combination; exactly `FORBIDDEN_COST` when a gate fails.
    pub d_comb: f64,
    pub motion_ok: bool,
    pub appearance_ok: bool,
}

/// Tracker knobs. The defaults follow the height-scaled noise model and the
/// 95th-percentile chi-square gate for a 4-dim measurement space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Motion gate on the squared Mahalanobis distance.
    pub chi2_gate: f64,
    /// Appearance gate on the cosine distance.
    pub app_gate: f64,
    /// Weight of motion in the combined cost; 0 means appearance drives the
    /// cost and motion only gates.
    pub lambda_mix: f64,
    /// Consecutive hits required to confirm a tentative track.
    pub n_init: u64,
    /// Processed frames a track may go unmatched before deletion.
    pub max_age: u64,
    /// Appearance gallery capacity per track.
    pub gallery_capacity: usize,
    /// Minimum IoU admitted by the fallback matching stage.
    pub iou_min: f64,
    pub kalman: KalmanNoise,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            chi2_gate: 9.4877,
            app_gate: 0.2,
            lambda_mix: 0.0,
            n_init: 3,
            max_age: 30,
            gallery_capacity: 100,
            iou_min: 0.3,
            kalman: KalmanNoise::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi2_gate > 0.0) {
            return Err(Error::Config("tracking.chi2_gate must be > 0".into()));
        }
        if !(self.app_gate > 0.0) {
            return Err(Error::Config("tracking.app_gate must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_mix) {
            return Err(Error::Config("tracking.lambda_mix must be in [0,1]".into()));
        }
        if self.n_init < 1 {
            return Err(Error::Config("tracking.n_init must be >= 1".into()));
        }
        if self.max_age < 1 {
            return Err(Error::Config("tracking.max_age must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.iou_min) {
            return Err(Error::Config("tracking.iou_min must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// One confirmed-track observation, ready for MOT-style output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub frame_index: u64,
    pub track_id: u64,
    pub bbox: BBox,
    pub confidence: f64,
    pub class_label: ClassLabel,
    /// Detection matched on this frame, if the caller needs the raw box.
    pub detection_bbox: BBox,
}

/// Squared Mahalanobis distance between a track's projected observation
/// distribution and a detection's measurement.
pub fn motion_distance(track: &Track, det: &Detection, kf: &KalmanFilter) -> Result<f64> {
    let (projected, s) = kf.project(&track.state.to_vector(), &track.covariance);
    let residual = det.bbox.to_xyah() - projected;
    mahalanobis_squared(&residual, &s)
}

/// Smallest cosine distance between the detection's descriptor and the
/// track's gallery. `None` signals the caller to fall back to motion only.
pub fn appearance_distance(track: &Track, det: &Detection) -> Option<f64> {
    let descriptor = det.appearance.as_ref()?;
    if track.gallery.is_empty() {
        return None;
    }
    track
        .gallery
        .iter()
        .map(|r| 1.0 - dot(r, descriptor))
        .min_by(f64::total_cmp)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Combines motion and appearance distances under their gates. A failed gate
/// forces the cost to exactly `FORBIDDEN_COST`; both requirements must hold
/// for admissibility.
pub fn combined_cost(
    d_mot: f64,
    d_app: f64,
    lambda_mix: f64,
    chi2_gate: f64,
    app_gate: f64,
) -> AssociationCost {
    let motion_ok = d_mot <= chi2_gate;
    let appearance_ok = d_app <= app_gate;
    let d_comb = if motion_ok && appearance_ok {
        lambda_mix * d_mot + (1.0 - lambda_mix) * d_app
    } else {
        FORBIDDEN_COST
    };
    AssociationCost {
        d_mot,
        d_app,
        d_comb,
        motion_ok,
        appearance_ok,
    }
}

/// Online multi-target tracker. One instance per camera stream; step is a
/// pure function of (state, detections, config), so replaying a detection
/// file reproduces identical output.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    clock: FrameClock,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
    /// Buffered pre-confirmation snapshots, emitted when a track confirms.
    pending: BTreeMap<u64, Vec<TrackSnapshot>>,
    class_votes: BTreeMap<u64, BTreeMap<ClassLabel, u64>>,
}

impl Tracker {
    pub fn new(config: TrackerConfig, clock: FrameClock) -> Self {
        Tracker {
            kf: KalmanFilter::new(config.kalman),
            config,
            clock,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            pending: BTreeMap::new(),
            class_votes: BTreeMap::new(),
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Advances the tracker by one processed frame. All detections must share
    /// `frame_index`, which must exceed the last processed frame.
    ///
    /// Returns the confirmed-track snapshots this step produced. When a
    /// tentative track reaches confirmation its buffered earlier snapshots are
    /// included, so downstream per-frame output has no confirmation lag.
    pub fn step(&mut self, frame_index: u64, detections: &[Detection]) -> Result<Vec<TrackSnapshot>> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::FrameRegression {
                    last,
                    got: frame_index,
                });
            }
        }
        if let Some(bad) = detections.iter().find(|d| d.frame_index != frame_index) {
            return Err(Error::InvalidInput(format!(
                "detection carries frame {} inside step for frame {}",
                bad.frame_index, frame_index
            )));
        }
        self.last_frame = Some(frame_index);

        for track in &mut self.tracks {
            kalman_predict(track, &self.kf, &self.clock);
        }

        let (matches, unmatched_tracks, unmatched_dets) = self.associate(detections);

        let mut snapshots = Vec::new();
        for (track_idx, det_idx) in matches {
            let det = &detections[det_idx];
            let track = &mut self.tracks[track_idx];
            kalman_update(track, &self.kf, det)?;
            if let Some(desc) = det.appearance.clone() {
                track.push_appearance(desc, self.config.gallery_capacity);
            }
            let votes = self.class_votes.entry(track.track_id).or_default();
            *votes.entry(det.class_label).or_insert(0) += 1;
            track.class_label = votes
                .iter()
                .max_by_key(|(_, n)| **n)
                .map(|(c, _)| *c)
                .unwrap_or(det.class_label);

            let snapshot = TrackSnapshot {
                frame_index,
                track_id: track.track_id,
                bbox: track.state.bbox(),
                confidence: det.confidence,
                class_label: track.class_label,
                detection_bbox: det.bbox,
            };
            match track.status {
                TrackStatus::Confirmed => snapshots.push(snapshot),
                TrackStatus::Tentative => {
                    let buffer = self.pending.entry(track.track_id).or_default();
                    buffer.push(snapshot);
                    if track.hits >= self.config.n_init {
                        track.status = TrackStatus::Confirmed;
                        snapshots.append(buffer);
                        self.pending.remove(&track.track_id);
                    }
                }
                TrackStatus::Deleted => unreachable!("deleted tracks are never matched"),
            }
        }

        for track_idx in unmatched_tracks {
            let track = &mut self.tracks[track_idx];
            match track.status {
                // a miss breaks the consecutive-hit requirement
                TrackStatus::Tentative => track.status = TrackStatus::Deleted,
                TrackStatus::Confirmed if track.time_since_update > self.config.max_age => {
                    track.status = TrackStatus::Deleted;
                }
                _ => {}
            }
        }

        for det_idx in unmatched_dets {
            self.initiate(&detections[det_idx], frame_index, &mut snapshots);
        }

        for track in self.tracks.iter().filter(|t| t.is_deleted()) {
            self.pending.remove(&track.track_id);
            self.class_votes.remove(&track.track_id);
        }
        self.tracks.retain(|t| !t.is_deleted());

        snapshots.sort_by_key(|s| (s.frame_index, s.track_id));
        Ok(snapshots)
    }

    /// Cascade over confirmed tracks by staleness, then IoU fallback over
    /// everything still unmatched.
    fn associate(&self, detections: &[Detection]) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
        let mut matches: Vec<(usize, usize)> = Vec::new();
        let mut unmatched_dets: Vec<usize> = (0..detections.len()).collect();

        let mut levels: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (idx, track) in self.tracks.iter().enumerate() {
            if track.is_confirmed() {
                levels.entry(track.time_since_update).or_default().push(idx);
            }
        }

        for (_, track_idxs) in levels {
            if unmatched_dets.is_empty() {
                break;
            }
            let cost: Vec<Vec<f64>> = track_idxs
                .iter()
                .map(|&t| {
                    unmatched_dets
                        .iter()
                        .map(|&d| self.pair_cost(&self.tracks[t], &detections[d]))
                        .collect()
                })
                .collect();
            let result = hungarian_assign(&cost);
            for &(r, c) in &result.pairs {
                matches.push((track_idxs[r], unmatched_dets[c]));
            }
            unmatched_dets = result
                .unmatched_cols
                .iter()
                .map(|&c| unmatched_dets[c])
                .collect();
        }

        // IoU fallback: tentative tracks plus confirmed tracks the cascade
        // left unmatched.
        let matched_tracks: Vec<usize> = matches.iter().map(|&(t, _)| t).collect();
        let iou_candidates: Vec<usize> = (0..self.tracks.len())
            .filter(|idx| !matched_tracks.contains(idx))
            .collect();
        if !iou_candidates.is_empty() && !unmatched_dets.is_empty() {
            let cost: Vec<Vec<f64>> = iou_candidates
                .iter()
                .map(|&t| {
                    let predicted = self.tracks[t].state.bbox();
                    unmatched_dets
                        .iter()
                        .map(|&d| {
                            let overlap = iou(&predicted, &detections[d].bbox);
                            if overlap >= self.config.iou_min {
                                1.0 - overlap
                            } else {
                                FORBIDDEN_COST
                            }
                        })
                        .collect()
                })
                .collect();
            let result = hungarian_assign(&cost);
            for &(r, c) in &result.pairs {
                matches.push((iou_candidates[r], unmatched_dets[c]));
            }
            unmatched_dets = result
                .unmatched_cols
                .iter()
                .map(|&c| unmatched_dets[c])
                .collect();
        }

        let matched_tracks: Vec<usize> = matches.iter().map(|&(t, _)| t).collect();
        let unmatched_tracks: Vec<usize> = (0..self.tracks.len())
            .filter(|idx| !matched_tracks.contains(idx))
            .collect();
        (matches, unmatched_tracks, unmatched_dets)
    }

    fn pair_cost(&self, track: &Track, det: &Detection) -> f64 {
        let d_mot = match motion_distance(track, det, &self.kf) {
            Ok(d) => d,
            Err(_) => {
                log::warn!(
                    "track {} has a degenerate projected covariance, pair forbidden",
                    track.track_id
                );
                return FORBIDDEN_COST;
            }
        };
        match appearance_distance(track, det) {
            Some(d_app) => {
                combined_cost(
                    d_mot,
                    d_app,
                    self.config.lambda_mix,
                    self.config.chi2_gate,
                    self.config.app_gate,
                )
                .d_comb
            }
            // motion-only mode
            None => {
                if d_mot <= self.config.chi2_gate {
                    d_mot
                } else {
                    FORBIDDEN_COST
                }
            }
        }
    }

    fn initiate(&mut self, det: &Detection, frame_index: u64, snapshots: &mut Vec<TrackSnapshot>) {
        let (mean, cov) = self.kf.initiate(&det.bbox.to_xyah());
        let track_id = self.next_id;
        self.next_id += 1;
        let mut track = Track {
            track_id,
            state: TrackState::from_vector(&mean),
            covariance: cov,
            gallery: VecDeque::new(),
            status: TrackStatus::Tentative,
            age: 0,
            hits: 1,
            time_since_update: 0,
            class_label: det.class_label,
        };
        if let Some(desc) = det.appearance.clone() {
            track.push_appearance(desc, self.config.gallery_capacity);
        }
        self.class_votes
            .entry(track_id)
            .or_default()
            .insert(det.class_label, 1);
        let snapshot = TrackSnapshot {
            frame_index,
            track_id,
            bbox: track.state.bbox(),
            confidence: det.confidence,
            class_label: det.class_label,
            detection_bbox: det.bbox,
        };
        if self.config.n_init <= 1 {
            track.status = TrackStatus::Confirmed;
            snapshots.push(snapshot);
        } else {
            self.pending.insert(track_id, vec![snapshot]);
        }
        self.tracks.push(track);
    }
}

/// Drops identities observed on fewer than `min_len` distinct frames.
pub fn filter_short_tracklets(snapshots: &[TrackSnapshot], min_len: usize) -> Vec<TrackSnapshot> {
    let mut frames_per_id: BTreeMap<u64, u64> = BTreeMap::new();
    for s in snapshots {
        *frames_per_id.entry(s.track_id).or_insert(0) += 1;
    }
    snapshots
        .iter()
        .filter(|s| frames_per_id[&s.track_id] >= min_len as u64)
        .cloned()
        .collect()
}

/// Renders snapshots in the MOT-16 result format,
/// `frame,id,left,top,width,height,conf,-1,-1,-1`.
pub fn format_mot_results(snapshots: &[TrackSnapshot]) -> String {
    let mut sorted: Vec<&TrackSnapshot> = snapshots.iter().collect();
    sorted.sort_by_key(|s| (s.frame_index, s.track_id));
    let mut out = String::new();
    for s in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},-1,-1,-1",
            s.frame_index, s.track_id, s.bbox.left, s.bbox.top, s.bbox.width, s.bbox.height,
            s.confidence
        );
    }
    out
}

/// Writes snapshots as a MOT-16 result file.
pub fn write_mot_results(path: &Path, snapshots: &[TrackSnapshot]) -> Result<()> {
    std::fs::write(path, format_mot_results(snapshots)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::APPEARANCE_DIM;

    fn clock() -> FrameClock {
        FrameClock::new(7.0, 1).unwrap()
    }

    fn unit_vec(axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; APPEARANCE_DIM];
        v[axis] = 1.0;
        v
    }

    fn det(frame: u64, left: f64, top: f64) -> Detection {
        Detection::new(
            frame,
            BBox::new(left, top, 40.0, 80.0),
            ClassLabel::Pedestrian,
            0.9,
        )
    }

    #[test]
    fn appearance_distance_over_gallery() {
        let mut track = Track {
            track_id: 1,
            state: TrackState::from_vector(&nalgebra::SVector::<f64, 8>::from_column_slice(&[
                0.0, 0.0, 0.5, 80.0, 0.0, 0.0, 0.0, 0.0,
            ])),
            covariance: nalgebra::SMatrix::<f64, 8, 8>::identity(),
            gallery: VecDeque::new(),
            status: TrackStatus::Confirmed,
            age: 0,
            hits: 0,
            time_since_update: 0,
            class_label: ClassLabel::Pedestrian,
        };
        let e1 = unit_vec(0);
        let e2 = unit_vec(1);

        track.push_appearance(e1.clone(), 10);
        let d = det(1, 0.0, 0.0).with_appearance(&e1).unwrap();
        assert!(appearance_distance(&track, &d).unwrap().abs() < 1e-12);

        let d = det(1, 0.0, 0.0).with_appearance(&e2).unwrap();
        assert!((appearance_distance(&track, &d).unwrap() - 1.0).abs() < 1e-12);

        // gallery {e1, (e1+e2)/sqrt(2)}, probe e2 -> 1 - 1/sqrt(2)
        let mut mix = vec![0.0; APPEARANCE_DIM];
        mix[0] = std::f64::consts::FRAC_1_SQRT_2;
        mix[1] = std::f64::consts::FRAC_1_SQRT_2;
        track.push_appearance(mix, 10);
        let d = det(1, 0.0, 0.0).with_appearance(&e2).unwrap();
        let expected = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        assert!((appearance_distance(&track, &d).unwrap() - expected).abs() < 1e-9);

        // missing appearance signals motion-only mode
        let d = det(1, 0.0, 0.0);
        assert!(appearance_distance(&track, &d).is_none());
    }

    #[test]
    fn combined_cost_gating() {
        // motion gate fails -> forbidden regardless of appearance
        let c = combined_cost(20.0, 0.0, 0.5, 9.4877, 0.2);
        assert_eq!(c.d_comb, FORBIDDEN_COST);
        assert!(!c.motion_ok);

        let c = combined_cost(0.0, 0.0, 0.5, 9.4877, 0.2);
        assert_eq!(c.d_comb, 0.0);
        assert!(c.motion_ok && c.appearance_ok);

        let c = combined_cost(1.0, 0.15, 0.0, 9.4877, 0.2);
        assert!((c.d_comb - 0.15).abs() < 1e-12);
    }

    #[test]
    fn track_persists_on_predicted_location() {
        let mut tracker = Tracker::new(TrackerConfig::default(), clock());
        let mut ids = std::collections::BTreeSet::new();
        for frame in 1..=10 {
            let d = det(frame, 100.0 + frame as f64 * 2.0, 50.0);
            let snaps = tracker.step(frame, &[d]).unwrap();
            for s in snaps {
                ids.insert(s.track_id);
            }
        }
        assert_eq!(ids.len(), 1, "a single moving target keeps one id");
    }

    #[test]
    fn confirmation_backfills_early_frames() {
        let mut tracker = Tracker::new(TrackerConfig::default(), clock());
        assert!(tracker.step(1, &[det(1, 100.0, 50.0)]).unwrap().is_empty());
        assert!(tracker.step(2, &[det(2, 102.0, 50.0)]).unwrap().is_empty());
        let snaps = tracker.step(3, &[det(3, 104.0, 50.0)]).unwrap();
        let frames: Vec<u64> = snaps.iter().map(|s| s.frame_index).collect();
        assert_eq!(frames, vec![1, 2, 3]);
    }

    #[test]
    fn track_deleted_after_max_age_misses() {
        let config = TrackerConfig {
            max_age: 3,
            ..TrackerConfig::default()
        };
        let mut tracker = Tracker::new(config, clock());
        for frame in 1..=3 {
            tracker
                .step(frame, &[det(frame, 100.0, 50.0)])
                .unwrap();
        }
        assert_eq!(tracker.tracks().len(), 1);
        let mut frame = 3;
        for _ in 0..=3 {
            frame += 1;
            tracker.step(frame, &[]).unwrap();
        }
        assert!(
            tracker.tracks().is_empty(),
            "track must be deleted once time_since_update exceeds max_age"
        );
    }

    #[test]
    fn frame_regression_is_hard_error() {
        let mut tracker = Tracker::new(TrackerConfig::default(), clock());
        tracker.step(5, &[]).unwrap();
        let err = tracker.step(5, &[]).unwrap_err();
        assert!(matches!(err, Error::FrameRegression { last: 5, got: 5 }));
    }

    #[test]
    fn ids_never_reused() {
        let mut tracker = Tracker::new(
            TrackerConfig {
                n_init: 1,
                max_age: 1,
                ..TrackerConfig::default()
            },
            clock(),
        );
        let mut seen = Vec::new();
        // alternate presence so tracks die and new ones spawn
        for frame in 1..=20_u64 {
            let dets = if frame % 4 < 2 {
                vec![det(frame, 100.0, 50.0)]
            } else {
                vec![]
            };
            for s in tracker.step(frame, &dets).unwrap() {
                seen.push(s.track_id);
            }
        }
        let mut confirmed: Vec<u64> = seen.clone();
        confirmed.dedup();
        let mut sorted = confirmed.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert!(sorted.len() > 1, "scenario should spawn several tracks");
    }

    #[test]
    fn crossing_targets_with_distinct_appearance_keep_ids() {
        let mut tracker = Tracker::new(TrackerConfig::default(), clock());
        let a_app = unit_vec(0);
        let b_app = unit_vec(1);
        // two targets crossing around frame 10
        let mut id_for_a = None;
        let mut id_for_b = None;
        let mut switches = 0;
        for frame in 1..=20_u64 {
            let t = frame as f64;
            // slight vertical offset keeps the two boxes distinguishable at
            // the crossing frame so the assertion can attribute snapshots
            let a = det(frame, 100.0 + 10.0 * t, 50.0)
                .with_appearance(&a_app)
                .unwrap();
            let b = det(frame, 300.0 - 10.0 * t, 57.0)
                .with_appearance(&b_app)
                .unwrap();
            let snaps = tracker.step(frame, &[a.clone(), b.clone()]).unwrap();
            for s in &snaps {
                let is_a = (s.detection_bbox.top - a.bbox.top).abs() < 1e-9;
                let slot = if is_a { &mut id_for_a } else { &mut id_for_b };
                match slot {
                    None => *slot = Some(s.track_id),
                    Some(prev) if *prev != s.track_id => switches += 1,
                    _ => {}
                }
            }
        }
        assert_eq!(switches, 0, "appearance must carry identity through the cross");
        assert_ne!(id_for_a, id_for_b);
    }

    #[test]
    fn short_tracklets_filtered() {
        let snap = |frame: u64, id: u64| TrackSnapshot {
            frame_index: frame,
            track_id: id,
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            confidence: 1.0,
            class_label: ClassLabel::Pedestrian,
            detection_bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
        };
        let mut snaps = Vec::new();
        for f in 1..=3 {
            snaps.push(snap(f, 1));
        }
        for f in 1..=4 {
            snaps.push(snap(f, 2));
        }
        let kept = filter_short_tracklets(&snaps, 4);
        assert!(kept.iter().all(|s| s.track_id == 2));
        assert_eq!(kept.len(), 4);
        // min_len = 1 is the identity
        assert_eq!(filter_short_tracklets(&snaps, 1).len(), snaps.len());
    }

    #[test]
    fn step_is_deterministic() {
        let run = || {
            let mut tracker = Tracker::new(TrackerConfig::default(), clock());
            let mut all = Vec::new();
            for frame in 1..=15_u64 {
                let t = frame as f64;
                let dets = vec![
                    det(frame, 100.0 + 3.0 * t, 50.0)
                        .with_appearance(&unit_vec(0))
                        .unwrap(),
                    det(frame, 400.0 - 2.0 * t, 80.0)
                        .with_appearance(&unit_vec(1))
                        .unwrap(),
                ];
                all.extend(tracker.step(frame, &dets).unwrap());
            }
            format_mot_results(&all)
        };
        assert_eq!(run(), run());
    }
}
