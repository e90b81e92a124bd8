//! Windowed social-group detection: slice world-coordinate tracks into time
//! windows, compute the four pairwise trajectory features, assemble the
//! affinity matrix, and solve correlation clustering.

mod cluster;
mod features;

pub use cluster::{is_locally_optimal, partition_objective, EXACT_LIMIT};
pub use features::{
    dtw_distance, frame_feature, granger_f_stat, granger_score, heatmap_correlation,
    mean_proxemics, proxemics_gmm, GridExtent, NormBounds, HALL_SIGMAS,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One world-coordinate track observation feeding the grouping stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldTrackPoint {
    pub frame_index: u64,
    pub time: f64,
    pub track_id: u64,
    /// Ground-plane position, meters.
    pub position: (f64, f64),
}

/// A member's sample inside a window: position plus differenced velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSample {
    pub frame_index: u64,
    pub time: f64,
    pub position: (f64, f64),
    pub velocity: (f64, f64),
}

/// Per-identity world paths inside one clustering window.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryWindow {
    pub window_id: usize,
    /// Half-open span [start, end) in seconds.
    pub span: (f64, f64),
    /// Members with at least two in-window samples, keyed by track id.
    pub samples: BTreeMap<u64, Vec<WindowSample>>,
}

impl TrajectoryWindow {
    pub fn members(&self) -> Vec<u64> {
        self.samples.keys().copied().collect()
    }
}

/// Grouping knobs. Distance/velocity thresholds default to the 7 ft and
/// 0.5 ft/s group-membership criteria; affinity weights are config-loadable
/// so externally trained values can be dropped in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingConfig {
    pub window_seconds: f64,
    pub stride_seconds: f64,
    /// Pairwise distance threshold, meters (7 ft).
    pub tau_s: f64,
    /// Velocity-difference threshold, m/s (0.5 ft/s).
    pub tau_v: f64,
    /// Location weight inside the per-frame filter feature.
    pub lambda_loc: f64,
    /// Granger lag order.
    pub granger_order: usize,
    /// Heat-map cell size, meters.
    pub grid_res_m: f64,
    /// Padding around the window bounding box for heat maps, meters.
    pub grid_pad_m: f64,
    /// Attraction weights per feature.
    pub alpha: Vec<f64>,
    /// Repulsion weights per feature.
    pub beta: Vec<f64>,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            window_seconds: 10.0,
            stride_seconds: 10.0,
            tau_s: 2.134,
            tau_v: 0.152,
            lambda_loc: 0.5,
            granger_order: 2,
            grid_res_m: 0.5,
            grid_pad_m: 5.0,
            alpha: vec![0.6, 0.4, 0.2, 0.3],
            beta: vec![0.4, 0.6, 0.2, 0.3],
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds > 0.0) {
            return Err(Error::Config("grouping.window_seconds must be > 0".into()));
        }
        if !(self.stride_seconds > 0.0 && self.stride_seconds <= self.window_seconds) {
            return Err(Error::Config(
                "grouping.stride_seconds must be in (0, window_seconds]".into(),
            ));
        }
        if !(self.tau_s > 0.0) || !(self.tau_v > 0.0) {
            return Err(Error::Config("grouping thresholds must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_loc) {
            return Err(Error::Config("grouping.lambda_loc must be in [0,1]".into()));
        }
        if self.granger_order < 1 {
            return Err(Error::Config("grouping.granger_order must be >= 1".into()));
        }
        if !(self.grid_res_m > 0.0) || self.grid_pad_m < 0.0 {
            return Err(Error::Config("grouping grid parameters out of range".into()));
        }
        if self.alpha.len() != 4 || self.beta.len() != 4 {
            return Err(Error::Config(
                "grouping.alpha and grouping.beta must have 4 entries".into(),
            ));
        }
        if self.alpha.iter().chain(&self.beta).any(|&w| w < 0.0) {
            return Err(Error::Config("grouping weights must be nonnegative".into()));
        }
        Ok(())
    }

    /// Fixed repulsion assigned to pairs with no usable co-occurrence.
    pub fn epsilon_neg(&self) -> f64 {
        0.1 * self.beta.iter().sum::<f64>()
    }
}

/// Raw pairwise features for one qualified pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    /// Mean Hall-boundary GMM likelihood over co-occurring frames.
    pub f1_proxemics: f64,
    /// Normalized DTW shape distance.
    pub f2_shape: f64,
    /// Symmetrized Granger causality score.
    pub f3_causality: f64,
    /// Heat-map path convergence in [0,1].
    pub f4_convergence: f64,
    /// Per co-occurring frame filter feature; `None` entries failed a
    /// threshold at that instant.
    pub f_fram: Vec<Option<f64>>,
}

/// Diagnostics emitted for every unordered member pair of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDiagnostic {
    pub track_i: u64,
    pub track_j: u64,
    /// Present when the pair had at least one co-occurring frame.
    pub features: Option<PairFeatures>,
    /// True when at least one co-occurring frame passed both thresholds.
    pub qualified: bool,
    pub affinity: f64,
}

/// Symmetric affinity matrix over the window's members.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub members: Vec<u64>,
    /// Dense symmetric weights, zero diagonal.
    pub weights: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// A partition of the window's members with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub window_id: usize,
    pub span: (f64, f64),
    /// Disjoint groups covering the member set; singletons included.
    pub groups: Vec<Vec<u64>>,
    pub objective: f64,
}

impl GroupPartition {
    pub fn members(&self) -> Vec<u64> {
        let mut all: Vec<u64> = self.groups.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }
}

/// Slices world tracks into sliding windows. Members need at least two
/// in-window samples; velocities come from central differences with one-sided
/// differences at the ends.
pub fn build_windows(
    points: &[WorldTrackPoint],
    window_seconds: f64,
    stride_seconds: f64,
) -> Result<Vec<TrajectoryWindow>> {
    if !(window_seconds > 0.0) || !(stride_seconds > 0.0) || stride_seconds > window_seconds {
        return Err(Error::Config(
            "window must be positive and stride in (0, window]".into(),
        ));
    }
    if points.is_empty() {
        return Ok(vec![]);
    }
    let mut per_track: BTreeMap<u64, Vec<&WorldTrackPoint>> = BTreeMap::new();
    for p in points {
        per_track.entry(p.track_id).or_default().push(p);
    }
    for samples in per_track.values_mut() {
        samples.sort_by(|a, b| a.time.total_cmp(&b.time));
        if samples.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::InvalidInput(format!(
                "track {} has non-increasing sample timestamps",
                samples[0].track_id
            )));
        }
    }
    let t_min = points.iter().map(|p| p.time).fold(f64::INFINITY, f64::min);
    let t_max = points.iter().map(|p| p.time).fold(f64::NEG_INFINITY, f64::max);

    let mut windows = Vec::new();
    let mut start = t_min;
    let mut window_id = 0;
    while start < t_max || (start == t_min && t_max == t_min) {
        let end = start + window_seconds;
        let mut window = TrajectoryWindow {
            window_id,
            span: (start, end),
            samples: BTreeMap::new(),
        };
        for (&track_id, samples) in &per_track {
            let inside: Vec<&&WorldTrackPoint> = samples
                .iter()
                .filter(|p| p.time >= start && p.time < end)
                .collect();
            if inside.len() < 2 {
                continue; // velocity needs differencing
            }
            let n = inside.len();
            let velocity_at = |i: usize| -> (f64, f64) {
                let (lo, hi) = if i == 0 {
                    (0, 1)
                } else if i == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (i - 1, i + 1)
                };
                let dt = inside[hi].time - inside[lo].time;
                (
                    (inside[hi].position.0 - inside[lo].position.0) / dt,
                    (inside[hi].position.1 - inside[lo].position.1) / dt,
                )
            };
            let ws: Vec<WindowSample> = inside
                .iter()
                .enumerate()
                .map(|(i, p)| WindowSample {
                    frame_index: p.frame_index,
                    time: p.time,
                    position: p.position,
                    velocity: velocity_at(i),
                })
                .collect();
            window.samples.insert(track_id, ws);
        }
        if !window.samples.is_empty() {
            windows.push(window);
            window_id += 1;
        }
        start += stride_seconds;
        if t_max == t_min {
            break;
        }
    }
    Ok(windows)
}

/// Evaluates the affinity rule `W_ij = alpha^T (1 - f) - beta^T f` for one
/// normalized, dissimilarity-oriented feature vector.
pub fn affinity_from_features(normalized: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
    normalized
        .iter()
        .zip(alpha.iter().zip(beta))
        .map(|(&f, (&a, &b))| a * (1.0 - f) - b * f)
        .sum()
}

/// Assembles the affinity matrix from per-pair feature vectors already
/// rescaled to [0,1] and oriented so larger means more dissimilar. Pairs
/// without a feature vector receive the fixed repulsion `-epsilon_neg`.
pub fn affinity_matrix(
    members: &[u64],
    normalized: &BTreeMap<(u64, u64), Vec<f64>>,
    alpha: &[f64],
    beta: &[f64],
    epsilon_neg: f64,
) -> AffinityMatrix {
    let n = members.len();
    let index: BTreeMap<u64, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut weights = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let key = (members[a], members[b]);
            let w = match normalized.get(&key) {
                Some(f) => affinity_from_features(f, alpha, beta),
                None => -epsilon_neg,
            };
            let (ia, ib) = (index[&key.0], index[&key.1]);
            weights[ia][ib] = w;
            weights[ib][ia] = w;
        }
    }
    AffinityMatrix {
        members: members.to_vec(),
        weights,
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
    }
}

/// Maximizes the correlation-clustering objective over the members.
pub fn correlation_clustering(matrix: &AffinityMatrix, window: &TrajectoryWindow) -> GroupPartition {
    let (groups_idx, objective) = cluster::solve(&matrix.weights);
    let groups = groups_idx
        .into_iter()
        .map(|g| g.into_iter().map(|i| matrix.members[i]).collect())
        .collect();
    GroupPartition {
        window_id: window.window_id,
        span: window.span,
        groups,
        objective,
    }
}

/// Full group detection for one window: features, normalization, affinity,
/// clustering. Returns the partition plus per-pair diagnostics for audit.
pub fn detect_groups(
    window: &TrajectoryWindow,
    config: &GroupingConfig,
) -> Result<(GroupPartition, Vec<PairDiagnostic>)> {
    config.validate()?;
    let members = window.members();
    let n = members.len();
    if n == 0 {
        return Ok((
            GroupPartition {
                window_id: window.window_id,
                span: window.span,
                groups: vec![],
                objective: 0.0,
            },
            vec![],
        ));
    }

    // pass 1: align pairs on co-occurring frames and collect threshold-passing
    // instances for the min-max bounds of the frame feature
    struct PairData {
        key: (u64, u64),
        aligned: Vec<(WindowSample, WindowSample)>,
        qualified: bool,
    }
    let mut pairs: Vec<PairData> = Vec::new();
    let mut dist_sq_bounds = (f64::INFINITY, f64::NEG_INFINITY);
    let mut vel_sq_bounds = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..n {
        for b in (a + 1)..n {
            let (ta, tb) = (members[a], members[b]);
            let aligned = align_by_frame(&window.samples[&ta], &window.samples[&tb]);
            let mut qualified = false;
            for (sa, sb) in &aligned {
                let d2 = sq(sa.position, sb.position);
                let v2 = sq(sa.velocity, sb.velocity);
                if d2 <= config.tau_s * config.tau_s && v2 <= config.tau_v * config.tau_v {
                    qualified = true;
                    dist_sq_bounds = (dist_sq_bounds.0.min(d2), dist_sq_bounds.1.max(d2));
                    vel_sq_bounds = (vel_sq_bounds.0.min(v2), vel_sq_bounds.1.max(v2));
                }
            }
            pairs.push(PairData {
                key: (ta, tb),
                aligned,
                qualified,
            });
        }
    }
    let bounds = NormBounds {
        dist_sq: if dist_sq_bounds.0.is_finite() {
            dist_sq_bounds
        } else {
            (0.0, 0.0)
        },
        vel_sq: if vel_sq_bounds.0.is_finite() {
            vel_sq_bounds
        } else {
            (0.0, 0.0)
        },
    };

    // pass 2: raw features for every co-occurring pair (the scale for
    // normalization comes from the whole window, qualified or not)
    let extent = GridExtent::of_points(
        window
            .samples
            .values()
            .flat_map(|s| s.iter().map(|w| &w.position)),
        config.grid_pad_m,
    );
    let frame_step = window
        .samples
        .values()
        .flat_map(|s| s.windows(2).map(|w| w[1].time - w[0].time))
        .fold(f64::INFINITY, f64::min);

    let mut raw: BTreeMap<(u64, u64), PairFeatures> = BTreeMap::new();
    for pair in &pairs {
        if pair.aligned.is_empty() {
            continue;
        }
        let displacements: Vec<((f64, f64), (f64, f64))> = pair
            .aligned
            .iter()
            .map(|(sa, sb)| (sa.position, sb.position))
            .collect();
        let f1 = mean_proxemics(&displacements).expect("non-empty co-occurrence");

        let path_a: Vec<(f64, f64)> = window.samples[&pair.key.0]
            .iter()
            .map(|s| s.position)
            .collect();
        let path_b: Vec<(f64, f64)> = window.samples[&pair.key.1]
            .iter()
            .map(|s| s.position)
            .collect();
        let (_, f2) = dtw_distance(&path_a, &path_b)?;

        let aligned_a: Vec<(f64, f64)> = pair.aligned.iter().map(|(sa, _)| sa.position).collect();
        let aligned_b: Vec<(f64, f64)> = pair.aligned.iter().map(|(_, sb)| sb.position).collect();
        let f3 = granger_score(&aligned_a, &aligned_b, config.granger_order);

        let f4 = match &extent {
            Some(extent) => {
                let pts_a = extrapolate(&window.samples[&pair.key.0], window.span.1, frame_step);
                let pts_b = extrapolate(&window.samples[&pair.key.1], window.span.1, frame_step);
                heatmap_correlation(&pts_a, &pts_b, extent, config.grid_res_m)
            }
            None => 0.0,
        };

        let f_fram: Vec<Option<f64>> = pair
            .aligned
            .iter()
            .map(|(sa, sb)| {
                frame_feature(
                    sa.position,
                    sb.position,
                    sa.velocity,
                    sb.velocity,
                    &bounds,
                    config.lambda_loc,
                    config.tau_s,
                    config.tau_v,
                )
            })
            .collect();

        raw.insert(
            pair.key,
            PairFeatures {
                f1_proxemics: f1,
                f2_shape: f2,
                f3_causality: f3,
                f4_convergence: f4,
                f_fram,
            },
        );
    }

    // pass 3: orient to "larger = more dissimilar", then min-max across the
    // window. Larger proxemics/causality/convergence mean more affine, so
    // those three enter negated; DTW distance is already a dissimilarity.
    let keys: Vec<(u64, u64)> = raw.keys().copied().collect();
    let oriented: Vec<[f64; 4]> = keys
        .iter()
        .map(|k| {
            let f = &raw[k];
            [
                -f.f1_proxemics,
                f.f2_shape,
                -f.f3_causality,
                -f.f4_convergence,
            ]
        })
        .collect();
    let mut normalized: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for (idx, key) in keys.iter().enumerate() {
        let pair_qualified = pairs
            .iter()
            .find(|p| p.key == *key)
            .map(|p| p.qualified)
            .unwrap_or(false);
        if !pair_qualified {
            continue; // stays on the fixed-repulsion path
        }
        let mut f = Vec::with_capacity(4);
        for feat in 0..4 {
            let lo = oriented.iter().map(|o| o[feat]).fold(f64::INFINITY, f64::min);
            let hi = oriented
                .iter()
                .map(|o| o[feat])
                .fold(f64::NEG_INFINITY, f64::max);
            let v = oriented[idx][feat];
            f.push(if hi <= lo { 0.0 } else { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) });
        }
        normalized.insert(*key, f);
    }

    let matrix = affinity_matrix(
        &members,
        &normalized,
        &config.alpha,
        &config.beta,
        config.epsilon_neg(),
    );
    let partition = correlation_clustering(&matrix, window);

    let index: BTreeMap<u64, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let diagnostics = pairs
        .into_iter()
        .map(|p| PairDiagnostic {
            track_i: p.key.0,
            track_j: p.key.1,
            features: raw.get(&p.key).cloned(),
            qualified: p.qualified,
            affinity: matrix.weights[index[&p.key.0]][index[&p.key.1]],
        })
        .collect();
    Ok((partition, diagnostics))
}

fn align_by_frame(a: &[WindowSample], b: &[WindowSample]) -> Vec<(WindowSample, WindowSample)> {
    let by_frame: BTreeMap<u64, &WindowSample> = b.iter().map(|s| (s.frame_index, s)).collect();
    a.iter()
        .filter_map(|sa| by_frame.get(&sa.frame_index).map(|sb| (*sa, **sb)))
        .collect()
}

fn sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Observed in-window positions plus a linear forecast from the last sample
/// to the window end, at the frame cadence.
fn extrapolate(samples: &[WindowSample], window_end: f64, step: f64) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = samples.iter().map(|s| s.position).collect();
    let Some(last) = samples.last() else {
        return points;
    };
    if !step.is_finite() || step <= 0.0 {
        return points;
    }
    let mut t = last.time + step;
    while t < window_end {
        points.push((
            last.position.0 + last.velocity.0 * (t - last.time),
            last.position.1 + last.velocity.1 * (t - last.time),
        ));
        t += step;
    }
    points
}

/// One grouping record: a window id plus its groups. Used for both ground
/// truth and predicted partitions (predictions add the objective).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupingRecord {
    pub window: usize,
    pub groups: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

/// Reads a JSON-lines grouping file ({"window":k,"groups":[[ids]...]}).
pub fn read_grouping_file(path: &Path) -> Result<Vec<GroupingRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: GroupingRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        records.push(rec);
    }
    Ok(records)
}

/// Writes partitions as a JSON-lines grouping file.
pub fn write_grouping_file(path: &Path, records: &[GroupingRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("serializable"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Renders per-pair diagnostics as CSV (`window,i,j,f1,f2,f3,f4,w`).
pub fn format_pair_csv(rows: &[(usize, PairDiagnostic)]) -> String {
    let mut out = String::from("window,track_i,track_j,f1,f2,f3,f4,affinity\n");
    for (window, d) in rows {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6}",
            window,
            d.track_i,
            d.track_j,
            fmt(d.features.as_ref().map(|f| f.f1_proxemics)),
            fmt(d.features.as_ref().map(|f| f.f2_shape)),
            fmt(d.features.as_ref().map(|f| f.f3_causality)),
            fmt(d.features.as_ref().map(|f| f.f4_convergence)),
            d.affinity
        );
    }
    out
}
