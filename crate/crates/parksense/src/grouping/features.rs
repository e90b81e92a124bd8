//! Pairwise trajectory features: the per-frame proximity/velocity filter
//! feature, Hall-boundary proxemics, DTW shape distance, Granger motion
//! causality, and heat-map path convergence.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Min/max bounds for the two normalized terms of the frame feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBounds {
    /// Bounds of the squared pairwise distance, meters^2.
    pub dist_sq: (f64, f64),
    /// Bounds of the squared velocity difference, (m/s)^2.
    pub vel_sq: (f64, f64),
}

fn minmax(value: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        // degenerate bounds: the term contributes 0
        0.0
    } else {
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Per-frame aggregated proximity/velocity feature. Returns `None` when the
/// pair fails the distance or velocity-difference threshold at this instant;
/// otherwise a value in [0,1], lower meaning more group-like.
pub fn frame_feature(
    pos_a: (f64, f64),
    pos_b: (f64, f64),
    vel_a: (f64, f64),
    vel_b: (f64, f64),
    bounds: &NormBounds,
    lambda_loc: f64,
    tau_s: f64,
    tau_v: f64,
) -> Option<f64> {
    let dist_sq = sq_dist(pos_a, pos_b);
    let vel_sq = sq_dist(vel_a, vel_b);
    if dist_sq > tau_s * tau_s || vel_sq > tau_v * tau_v {
        return None;
    }
    Some(lambda_loc * minmax(dist_sq, bounds.dist_sq) + (1.0 - lambda_loc) * minmax(vel_sq, bounds.vel_sq))
}

fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Hall's proxemic boundaries used as mixture scales, meters.
pub const HALL_SIGMAS: [f64; 3] = [0.5, 1.2, 3.7];

/// Equal-weight Gaussian mixture over Hall's intimate/personal/social
/// boundaries, evaluated on the pairwise displacement.
pub fn proxemics_gmm(pos_a: (f64, f64), pos_b: (f64, f64)) -> f64 {
    let dx = pos_a.0 - pos_b.0;
    let dy = pos_a.1 - pos_b.1;
    let mut sum = 0.0;
    for sigma in HALL_SIGMAS {
        sum += normal_pdf(dx, sigma) * normal_pdf(dy, sigma);
    }
    sum / HALL_SIGMAS.len() as f64
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Average proxemics over the frames where both members exist.
pub fn mean_proxemics(displacements: &[((f64, f64), (f64, f64))]) -> Option<f64> {
    if displacements.is_empty() {
        return None;
    }
    let sum: f64 = displacements
        .iter()
        .map(|&(a, b)| proxemics_gmm(a, b))
        .sum();
    Some(sum / displacements.len() as f64)
}

/// Dynamic time warping with squared-Euclidean cell costs and the
/// three-neighbor recursion. Returns the cumulative cost at the far corner
/// and its normalization by the longer sequence length.
pub fn dtw_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(Error::EmptyTrajectory);
    }
    let mut prev = vec![0.0_f64; n];
    let mut cur = vec![0.0_f64; n];
    for i in 0..m {
        for j in 0..n {
            let cost = sq_dist(a[i], b[j]);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[j],
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]),
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let gamma = prev[n - 1];
    Ok((gamma, gamma / m.max(n) as f64))
}

/// Pooled-axes Granger F statistic for "source explains target". Fits each
/// axis of the target's increments on its own lags, with and without the
/// source's lagged increments, and pools the residual sums across axes so
/// the statistic is F(2p, 2*(rows - 2p - 1)) under the null.
///
/// Returns `None` when the regression is rank deficient or lacks degrees of
/// freedom (motionless or too-short trajectories).
pub fn granger_f_stat(target: &[(f64, f64)], source: &[(f64, f64)], order: usize) -> Option<f64> {
    if order == 0 || target.len() != source.len() {
        return None;
    }
    let n_frames = target.len();
    if n_frames < 2 * order + 3 {
        return None;
    }
    let increments = |series: &[(f64, f64)], axis: usize| -> Vec<f64> {
        series
            .windows(2)
            .map(|w| {
                if axis == 0 {
                    w[1].0 - w[0].0
                } else {
                    w[1].1 - w[0].1
                }
            })
            .collect()
    };

    let p = order;
    let mut rss_restricted = 0.0;
    let mut rss_unrestricted = 0.0;
    let n_inc = n_frames - 1;
    let rows = n_inc - p;
    let unrestricted_cols = 1 + 2 * p;
    if rows <= unrestricted_cols {
        return None;
    }

    for axis in 0..2 {
        let dy = increments(target, axis);
        let dx = increments(source, axis);
        let y = DMatrix::from_fn(rows, 1, |r, _| dy[r + p]);

        let restricted = DMatrix::from_fn(rows, 1 + p, |r, c| {
            if c == 0 {
                1.0
            } else {
                dy[r + p - c]
            }
        });
        let unrestricted = DMatrix::from_fn(rows, unrestricted_cols, |r, c| {
            if c == 0 {
                1.0
            } else if c <= p {
                dy[r + p - c]
            } else {
                dx[r + p - (c - p)]
            }
        });

        rss_restricted += least_squares_rss(&restricted, &y)?;
        rss_unrestricted += least_squares_rss(&unrestricted, &y)?;
    }

    let df_num = (2 * p) as f64;
    let df_den = (2 * (rows - unrestricted_cols)) as f64;
    let delta = (rss_restricted - rss_unrestricted).max(0.0);
    let denom = (rss_unrestricted / df_den).max(1e-300);
    Some((delta / df_num) / denom)
}

/// Solves min ||X b - y||^2 and returns the residual sum of squares, or
/// `None` when X is rank deficient.
fn least_squares_rss(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Option<f64> {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_sv * 1e-10 * x.nrows().max(x.ncols()) as f64;
    if max_sv == 0.0 || svd.singular_values.iter().any(|&s| s <= tol) {
        return None;
    }
    let beta = svd.solve(y, tol).ok()?;
    let residual = y - x * beta;
    Some(residual.norm_squared())
}

/// Symmetrized motion-causality score: `ln(1 + max(F_ab, F_ba))`, 0 when
/// both regressions are degenerate.
pub fn granger_score(a: &[(f64, f64)], b: &[(f64, f64)], order: usize) -> f64 {
    let f_ab = granger_f_stat(b, a, order);
    let f_ba = granger_f_stat(a, b, order);
    let best = match (f_ab, f_ba) {
        (Some(x), Some(y)) => x.max(y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => {
            log::debug!("granger regression degenerate for both directions, score 0");
            return 0.0;
        }
    };
    (1.0 + best).ln()
}

/// Rectangular raster extent for path-convergence heat maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridExtent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl GridExtent {
    pub fn of_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>, pad: f64) -> Option<Self> {
        let mut extent: Option<GridExtent> = None;
        for &(x, y) in points {
            let e = extent.get_or_insert(GridExtent {
                min_x: x,
                min_y: y,
                max_x: x,
                max_y: y,
            });
            e.min_x = e.min_x.min(x);
            e.min_y = e.min_y.min(y);
            e.max_x = e.max_x.max(x);
            e.max_y = e.max_y.max(y);
        }
        extent.map(|e| GridExtent {
            min_x: e.min_x - pad,
            min_y: e.min_y - pad,
            max_x: e.max_x + pad,
            max_y: e.max_y + pad,
        })
    }
}

/// Normalized correlation of Gaussian-blurred occupancy grids rasterized
/// from two point sets, in [0,1]. The blur sigma equals the cell size.
pub fn heatmap_correlation(
    points_a: &[(f64, f64)],
    points_b: &[(f64, f64)],
    extent: &GridExtent,
    grid_res: f64,
) -> f64 {
    let cols = (((extent.max_x - extent.min_x) / grid_res).ceil() as usize).max(1) + 1;
    let rows = (((extent.max_y - extent.min_y) / grid_res).ceil() as usize).max(1) + 1;
    let splat = |points: &[(f64, f64)]| -> Vec<f64> {
        let mut grid = vec![0.0_f64; rows * cols];
        // truncate the kernel at 3 sigma = 3 cells
        let reach = 3_i64;
        for &(x, y) in points {
            let cx = (x - extent.min_x) / grid_res;
            let cy = (y - extent.min_y) / grid_res;
            let (ci, cj) = (cx.round() as i64, cy.round() as i64);
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let (i, j) = (ci + di, cj + dj);
                    if i < 0 || j < 0 || i >= cols as i64 || j >= rows as i64 {
                        continue;
                    }
                    // distance from the sample to the cell center, in cells
                    let dx = cx - i as f64;
                    let dy = cy - j as f64;
                    grid[j as usize * cols + i as usize] +=
                        (-0.5 * (dx * dx + dy * dy)).exp();
                }
            }
        }
        grid
    };
    let ga = splat(points_a);
    let gb = splat(points_b);
    let dot: f64 = ga.iter().zip(&gb).map(|(a, b)| a * b).sum();
    let na: f64 = ga.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = gb.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BOUNDS: NormBounds = NormBounds {
        dist_sq: (0.0, 4.0),
        vel_sq: (0.0, 0.02),
    };

    #[test]
    fn frame_feature_zero_at_minimum() {
        let f = frame_feature(
            (1.0, 1.0),
            (1.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.0),
            &BOUNDS,
            0.5,
            2.134,
            0.152,
        );
        assert_eq!(f, Some(0.0));
    }

    #[test]
    fn frame_feature_filters_beyond_seven_feet() {
        let f = frame_feature(
            (0.0, 0.0),
            (2.5, 0.0),
            (1.0, 0.0),
            (1.0, 0.0),
            &BOUNDS,
            0.5,
            2.134,
            0.152,
        );
        assert_eq!(f, None);
    }

    #[test]
    fn frame_feature_hits_one_at_bounds_max() {
        let f = frame_feature(
            (0.0, 0.0),
            (2.0, 0.0), // squared distance 4.0 == bounds max
            (0.0, 0.0),
            (0.0, 0.0),
            &BOUNDS,
            1.0,
            2.134,
            0.152,
        );
        assert_eq!(f, Some(1.0));
    }

    #[test]
    fn frame_feature_degenerate_bounds_contribute_zero() {
        let degenerate = NormBounds {
            dist_sq: (1.0, 1.0),
            vel_sq: (0.0, 0.02),
        };
        let f = frame_feature(
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 0.0),
            (0.0, 0.0),
            &degenerate,
            1.0,
            2.134,
            0.152,
        );
        assert_eq!(f, Some(0.0));
    }

    #[test]
    fn proxemics_zero_displacement_value() {
        // analytic: mean of 1/(2 pi sigma^2) over the three Hall sigmas
        let v = proxemics_gmm((3.0, -2.0), (3.0, -2.0));
        assert_relative_eq!(v, 0.252924, epsilon = 1e-6);
    }

    #[test]
    fn proxemics_far_tail_vanishes() {
        assert!(proxemics_gmm((0.0, 0.0), (100.0, 0.0)) < 1e-100);
    }

    #[test]
    fn proxemics_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let b = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            assert_relative_eq!(proxemics_gmm(a, b), proxemics_gmm(b, a), epsilon = 1e-15);
        }
    }

    #[test]
    fn mean_proxemics_constant_sequence() {
        let disp = vec![((0.0, 0.0), (1.2, 0.0)); 7];
        let single = proxemics_gmm((0.0, 0.0), (1.2, 0.0));
        assert_relative_eq!(mean_proxemics(&disp).unwrap(), single, epsilon = 1e-12);
        // single frame equals that frame's value
        assert_relative_eq!(
            mean_proxemics(&disp[..1]).unwrap(),
            single,
            epsilon = 1e-15
        );
        assert!(mean_proxemics(&[]).is_none());
    }

    #[test]
    fn dtw_identical_sequences_zero() {
        let a = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)];
        let (gamma, f2) = dtw_distance(&a, &a).unwrap();
        assert_eq!(gamma, 0.0);
        assert_eq!(f2, 0.0);
    }

    #[test]
    fn dtw_single_cell() {
        let (gamma, f2) = dtw_distance(&[(0.0, 0.0)], &[(3.0, 4.0)]).unwrap();
        assert_eq!(gamma, 25.0);
        assert_eq!(f2, 25.0);
    }

    #[test]
    fn dtw_two_by_three_matches_path_enumeration() {
        let a = vec![(0.0, 0.0), (1.0, 0.0)];
        let b = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        let (gamma, f2) = dtw_distance(&a, &b).unwrap();
        assert_eq!(gamma, 1.0);
        assert_relative_eq!(f2, 1.0 / 3.0, epsilon = 1e-15);
        // oracle: exhaustive enumeration of monotone warping paths
        assert_eq!(enumerate_dtw(&a, &b), gamma);
    }

    #[test]
    fn dtw_empty_is_error() {
        assert!(dtw_distance(&[], &[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn dtw_matches_enumeration_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let len_a = rng.gen_range(1..=5);
            let len_b = rng.gen_range(1..=5);
            let mk = |n: usize, rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
                (0..n)
                    .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                    .collect()
            };
            let a = mk(len_a, &mut rng);
            let b = mk(len_b, &mut rng);
            let (gamma, _) = dtw_distance(&a, &b).unwrap();
            assert_relative_eq!(gamma, enumerate_dtw(&a, &b), epsilon = 1e-9);
        }
    }

    /// Brute-force minimum over all monotone warping paths.
    fn enumerate_dtw(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        fn walk(a: &[(f64, f64)], b: &[(f64, f64)], i: usize, j: usize, acc: f64, best: &mut f64) {
            let cost = acc + sq_dist(a[i], b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(cost);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, cost, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, cost, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, cost, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn granger_detects_delayed_copy() {
        // median over seeds: a delayed copy must score far above
        // independent random walks
        let mut coupled_scores = Vec::new();
        let mut independent_scores = Vec::new();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = 60;
            let mut leader = vec![(0.0, 0.0)];
            for _ in 1..n {
                let last = *leader.last().unwrap();
                leader.push((
                    last.0 + rng.gen_range(-0.3..0.3),
                    last.1 + rng.gen_range(-0.3..0.3),
                ));
            }
            let mut follower = vec![(0.0, 0.0)];
            for k in 1..n {
                let src = leader[k - 1];
                follower.push((src.0 + rng.gen_range(-1e-6..1e-6), src.1 + rng.gen_range(-1e-6..1e-6)));
            }
            coupled_scores.push(granger_score(&leader, &follower, 2));

            let mut other = vec![(0.0, 0.0)];
            for _ in 1..n {
                let last = *other.last().unwrap();
                other.push((
                    last.0 + rng.gen_range(-0.3..0.3),
                    last.1 + rng.gen_range(-0.3..0.3),
                ));
            }
            independent_scores.push(granger_score(&leader, &other, 2));
        }
        let median = |mut v: Vec<f64>| -> f64 {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let coupled = median(coupled_scores);
        let independent = median(independent_scores);
        assert!(
            coupled > 10.0 * independent.max(0.1),
            "coupled {coupled} must dominate independent {independent}"
        );
    }

    #[test]
    fn granger_motionless_trajectories_score_zero() {
        let frozen = vec![(1.0, 2.0); 30];
        assert_eq!(granger_score(&frozen, &frozen, 2), 0.0);
    }

    #[test]
    fn heatmap_identical_paths_correlate_fully() {
        let path: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.3, 1.0)).collect();
        let extent = GridExtent::of_points(path.iter(), 5.0).unwrap();
        let c = heatmap_correlation(&path, &path, &extent, 0.5);
        assert_relative_eq!(c, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn heatmap_far_antiparallel_paths_disjoint() {
        let a: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.5, 0.0)).collect();
        let b: Vec<(f64, f64)> = (0..20).map(|i| (10.0 - i as f64 * 0.5, 50.0)).collect();
        let extent = GridExtent::of_points(a.iter().chain(b.iter()), 5.0).unwrap();
        let c = heatmap_correlation(&a, &b, &extent, 0.5);
        assert!(c < 0.01, "correlation {c} should vanish at 50 m separation");
    }

    #[test]
    fn heatmap_symmetric_in_pair_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let mk = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
                (0..10)
                    .map(|_| (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                    .collect()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let extent = GridExtent::of_points(a.iter().chain(b.iter()), 5.0).unwrap();
            assert_relative_eq!(
                heatmap_correlation(&a, &b, &extent, 0.5),
                heatmap_correlation(&b, &a, &extent, 0.5),
                epsilon = 1e-12
            );
        }
    }
}
