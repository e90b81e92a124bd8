//! Pinhole camera model with radial/tangential distortion: world-to-pixel
//! projection, ground-plane back-projection, ground-anchor extraction, and
//! planar extrinsic calibration from point correspondences.
//!
//! Conventions: world Z is up and the ground is the plane Z = 0. The camera
//! maps a world point M through `p_c = R * M + t`, perspective divide,
//! the 5-coefficient distortion polynomial (k1, k2, p1, p2, k3), and the
//! intrinsics. Pixel v grows downward.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Detection, WorldPoint};

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_TOL: f64 = 1e-10;
/// |d_w.z| below this counts as a ray parallel to the ground plane.
const HORIZON_EPS: f64 = 1e-12;

/// Calibrated monocular camera: intrinsics, distortion, and pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// (k1, k2, p1, p2, k3).
    pub dist: [f64; 5],
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation, meters.
    pub translation: Vector3<f64>,
    pub image_size: (u32, u32),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraModelFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    dist: [f64; 5],
    #[serde(rename = "R")]
    rotation: RotationSpec,
    t: [f64; 3],
    image_size: [u32; 2],
}

/// Rotation as a 3x3 matrix or an axis-angle 3-vector.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RotationSpec {
    Matrix([[f64; 3]; 3]),
    AxisAngle([f64; 3]),
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        dist: [f64; 5],
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            dist,
            rotation,
            translation,
            image_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Checks the model invariants: positive focal lengths, principal point
    /// inside the image, and a proper rotation (orthonormal, det +1, to 1e-9).
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let (w, h) = (self.image_size.0 as f64, self.image_size.1 as f64);
        if !(0.0..=w).contains(&self.cx) || !(0.0..=h).contains(&self.cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({},{}) outside image extent {}x{}",
                self.cx, self.cy, w, h
            )));
        }
        let should_be_identity = self.rotation * self.rotation.transpose();
        let ortho_err = (should_be_identity - Matrix3::identity()).abs().max();
        if ortho_err > 1e-9 {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (|RR^T - I| = {ortho_err:.3e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCamera(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(())
    }

    /// Loads the JSON calibration file. `R` may be a 3x3 matrix or an
    /// axis-angle 3-vector.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CameraModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        let rotation = match file.rotation {
            RotationSpec::Matrix(rows) => Matrix3::from_fn(|r, c| rows[r][c]),
            RotationSpec::AxisAngle(v) => axis_angle_to_matrix(&Vector3::from_column_slice(&v)),
        };
        CameraModel::new(
            file.fx,
            file.fy,
            file.cx,
            file.cy,
            file.dist,
            rotation,
            Vector3::from_column_slice(&file.t),
            (file.image_size[0], file.image_size[1]),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CameraModelFile {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            dist: self.dist,
            rotation: RotationSpec::Matrix([
                [self.rotation[(0, 0)], self.rotation[(0, 1)], self.rotation[(0, 2)]],
                [self.rotation[(1, 0)], self.rotation[(1, 1)], self.rotation[(1, 2)]],
                [self.rotation[(2, 0)], self.rotation[(2, 1)], self.rotation[(2, 2)]],
            ]),
            t: [self.translation.x, self.translation.y, self.translation.z],
            image_size: [self.image_size.0, self.image_size.1],
        };
        let text = serde_json::to_string_pretty(&file).expect("serializable");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Builds a camera posed at `position`, aimed at `target`, with the image
    /// x axis horizontal in the world.
    pub fn look_at(
        position: WorldPoint,
        target: WorldPoint,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        dist: [f64; 5],
        image_size: (u32, u32),
    ) -> Result<Self> {
        let pos = Vector3::new(position.x, position.y, position.z);
        let forward = (Vector3::new(target.x, target.y, target.z) - pos)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("look_at target equals position".into()))?;
        let up = Vector3::new(0.0, 0.0, 1.0);
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("camera cannot look straight up or down".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -rotation * pos;
        CameraModel::new(fx, fy, cx, cy, dist, rotation, translation, image_size)
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let [k1, k2, p1, p2, k3] = self.dist;
        let r2 = x * x + y * y;
        let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
        let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        (xd, yd)
    }

    /// Inverts the distortion polynomial by fixed-point iteration.
    fn undistort(&self, xd: f64, yd: f64) -> (f64, f64) {
        if self.dist.iter().all(|&c| c == 0.0) {
            return (xd, yd);
        }
        let [k1, k2, p1, p2, k3] = self.dist;
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_MAX_ITERS {
            let r2 = x * x + y * y;
            let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
            let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
            let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
            let (fx, fy) = self.distort(x, y);
            if (fx - xd).abs().max((fy - yd).abs()) < UNDISTORT_TOL {
                break;
            }
        }
        (x, y)
    }

    /// Projects a world point onto the image plane. Errors when the point is
    /// at or behind the camera (Z_c <= 0).
    pub fn project_world_to_pixel(&self, point: &WorldPoint) -> Result<(f64, f64)> {
        let m = Vector3::new(point.x, point.y, point.z);
        let p_c = self.rotation * m + self.translation;
        if p_c.z <= 0.0 {
            return Err(Error::BehindCamera { z_c: p_c.z });
        }
        let x = p_c.x / p_c.z;
        let y = p_c.y / p_c.z;
        let (xd, yd) = self.distort(x, y);
        Ok((self.fx * xd + self.cx, self.fy * yd + self.cy))
    }

    /// Casts the viewing ray of a pixel and intersects it with the ground
    /// plane Z = 0. Errors when the ray runs parallel to the plane or meets
    /// it behind the camera.
    pub fn backproject_pixel_to_ground(&self, u: f64, v: f64) -> Result<WorldPoint> {
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        let (x, y) = self.undistort(xd, yd);
        let dir_world = self.rotation.transpose() * Vector3::new(x, y, 1.0);
        let origin = self.position();
        if dir_world.z.abs() < HORIZON_EPS {
            return Err(Error::Horizon);
        }
        let s = -origin.z / dir_world.z;
        if s <= 0.0 {
            return Err(Error::Horizon);
        }
        Ok(WorldPoint::new(
            origin.x + s * dir_world.x,
            origin.y + s * dir_world.y,
            0.0,
        ))
    }
}

/// Pixel presumed to touch the ground: the lowest contour vertex when a
/// contour is present (ties take the median u), else the bbox bottom-center.
pub fn ground_anchor_pixel(det: &Detection) -> (f64, f64) {
    match &det.contour {
        Some(contour) if !contour.is_empty() => {
            let v_max = contour
                .iter()
                .map(|&(_, v)| v)
                .max_by(f64::total_cmp)
                .expect("non-empty contour");
            let mut us: Vec<f64> = contour
                .iter()
                .filter(|&&(_, v)| v == v_max)
                .map(|&(u, _)| u)
                .collect();
            us.sort_by(f64::total_cmp);
            let n = us.len();
            let u = if n % 2 == 1 {
                us[n / 2]
            } else {
                (us[n / 2 - 1] + us[n / 2]) / 2.0
            };
            (u, v_max)
        }
        _ => det.bbox.bottom_center(),
    }
}

/// Rodrigues formula: axis-angle vector to rotation matrix.
pub fn axis_angle_to_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta = v.norm();
    if theta < 1e-12 {
        return Matrix3::identity();
    }
    let axis = v / theta;
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, //
        axis.z, 0.0, -axis.x, //
        -axis.y, axis.x, 0.0,
    );
    Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

/// Solved extrinsics with the residual of the fit.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Root-mean-square pixel reprojection error over the correspondences.
    pub rms_reprojection_px: f64,
}

/// Recovers camera pose from ground-plane correspondences: a normalized DLT
/// homography, decomposition into an initial pose, then damped Gauss-Newton
/// on the full (distorted) pixel reprojection error.
///
/// `intrinsics`'s rotation/translation are ignored; at least 4 non-collinear
/// ground-plane points are required.
pub fn calibrate_extrinsics(
    intrinsics: &CameraModel,
    correspondences: &[(WorldPoint, (f64, f64))],
) -> Result<CalibrationResult> {
    let n = correspondences.len();
    if n < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 correspondences, got {n}"
        )));
    }
    if let Some((m, _)) = correspondences.iter().find(|(m, _)| m.z.abs() > 1e-9) {
        return Err(Error::Calibration(format!(
            "correspondence ({}, {}, {}) is not on the ground plane",
            m.x, m.y, m.z
        )));
    }
    check_not_collinear(correspondences)?;

    // Work in undistorted normalized image coordinates for the DLT.
    let world: Vec<(f64, f64)> = correspondences.iter().map(|(m, _)| (m.x, m.y)).collect();
    let normalized: Vec<(f64, f64)> = correspondences
        .iter()
        .map(|(_, (u, v))| {
            intrinsics.undistort((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy)
        })
        .collect();

    let h = homography_dlt(&world, &normalized)?;
    let (rotation, translation) = decompose_planar_homography(&h, &world)?;

    let (rotation, translation) =
        refine_pose(intrinsics, correspondences, rotation, translation);

    let mut sum_sq = 0.0;
    let cam = CameraModel {
        rotation,
        translation,
        ..intrinsics.clone()
    };
    for (m, (u, v)) in correspondences {
        let (pu, pv) = cam
            .project_world_to_pixel(m)
            .map_err(|e| Error::Calibration(format!("refined pose rejects a point: {e}")))?;
        sum_sq += (pu - u).powi(2) + (pv - v).powi(2);
    }
    Ok(CalibrationResult {
        rotation,
        translation,
        rms_reprojection_px: (sum_sq / n as f64).sqrt(),
    })
}

fn check_not_collinear(correspondences: &[(WorldPoint, (f64, f64))]) -> Result<()> {
    let n = correspondences.len() as f64;
    let (mx, my) = correspondences
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (m, _)| (sx + m.x, sy + m.y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (m, _) in correspondences {
        let (dx, dy) = (m.x - mx, m.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // smallest eigenvalue of the 2x2 scatter matrix
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let lambda_min = trace / 2.0 - ((trace / 2.0).powi(2) - det).max(0.0).sqrt();
    if lambda_min <= 1e-9 * trace.max(1e-12) {
        return Err(Error::Calibration(
            "world points are collinear or coincident".into(),
        ));
    }
    Ok(())
}

/// Normalized DLT for a plane-to-plane homography.
fn homography_dlt(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Matrix3<f64>> {
    let t_src = normalizing_transform(src);
    let t_dst = normalizing_transform(dst);
    let norm = |t: &Matrix3<f64>, p: &(f64, f64)| -> (f64, f64) {
        (
            t[(0, 0)] * p.0 + t[(0, 2)],
            t[(1, 1)] * p.1 + t[(1, 2)],
        )
    };

    let n = src.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(2 * n, 9);
    for i in 0..n {
        let (x, y) = norm(&t_src, &src[i]);
        let (u, v) = norm(&t_dst, &dst[i]);
        a.row_mut(2 * i).copy_from_slice(&[
            -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u,
        ]);
        a.row_mut(2 * i + 1).copy_from_slice(&[
            0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v,
        ]);
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Calibration("homography SVD failed".into()))?;
    // guard against rank deficiency the collinearity pre-check missed
    let sv = &svd.singular_values;
    if sv.len() >= 8 && sv[7] <= 1e-10 * sv[0] {
        return Err(Error::Calibration(
            "degenerate correspondence configuration".into(),
        ));
    }
    let h_vec = v_t.row(v_t.nrows() - 1);
    let h_norm = Matrix3::from_row_slice(h_vec.transpose().as_slice());
    // denormalize: H = T_dst^-1 * H_norm * T_src
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Calibration("singular normalization".into()))?;
    Ok(t_dst_inv * h_norm * t_src)
}

fn normalizing_transform(points: &[(f64, f64)]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (cx, cy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean_dist = points
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn decompose_planar_homography(
    h: &Matrix3<f64>,
    world: &[(f64, f64)],
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let h1 = h.column(0).into_owned();
    let h2 = h.column(1).into_owned();
    let h3 = h.column(2).into_owned();
    let scale = 2.0 / (h1.norm() + h2.norm());
    let build = |lambda: f64| -> (Matrix3<f64>, Vector3<f64>) {
        let r1 = h1 * lambda;
        let r2 = h2 * lambda;
        let r3 = r1.cross(&r2);
        let rough = Matrix3::from_columns(&[r1, r2, r3]);
        (nearest_rotation(&rough), h3 * lambda)
    };
    let (r, t) = build(scale);
    // choose the sign that puts the points in front of the camera
    let in_front = |r: &Matrix3<f64>, t: &Vector3<f64>| -> usize {
        world
            .iter()
            .filter(|(x, y)| (r * Vector3::new(*x, *y, 0.0) + t).z > 0.0)
            .count()
    };
    if in_front(&r, &t) * 2 >= world.len() {
        Ok((r, t))
    } else {
        Ok(build(-scale))
    }
}

/// Nearest proper rotation in the Frobenius sense.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("3x3 svd");
    let v_t = svd.v_t.expect("3x3 svd");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = u;
        u_fixed.column_mut(2).neg_mut();
        r = u_fixed * v_t;
    }
    r
}

/// Damped Gauss-Newton on the pixel reprojection error, parameterized by a
/// left-multiplied rotation increment and the translation.
fn refine_pose(
    intrinsics: &CameraModel,
    correspondences: &[(WorldPoint, (f64, f64))],
    mut rotation: Matrix3<f64>,
    mut translation: Vector3<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let residuals = |r: &Matrix3<f64>, t: &Vector3<f64>| -> Option<nalgebra::DVector<f64>> {
        let cam = CameraModel {
            rotation: *r,
            translation: *t,
            ..intrinsics.clone()
        };
        let mut out = nalgebra::DVector::zeros(2 * correspondences.len());
        for (i, (m, (u, v))) in correspondences.iter().enumerate() {
            let (pu, pv) = cam.project_world_to_pixel(m).ok()?;
            out[2 * i] = pu - u;
            out[2 * i + 1] = pv - v;
        }
        Some(out)
    };

    let Some(mut best) = residuals(&rotation, &translation) else {
        return (rotation, translation);
    };
    let mut damping = 1e-6;

    for _ in 0..100 {
        // numeric Jacobian over (omega, t)
        let mut jac = nalgebra::DMatrix::<f64>::zeros(2 * correspondences.len(), 6);
        let step = 1e-7;
        let mut ok = true;
        for p in 0..6 {
            let mut delta = [0.0; 6];
            delta[p] = step;
            let (rp, tp) = apply_increment(&rotation, &translation, &delta);
            delta[p] = -step;
            let (rm, tm) = apply_increment(&rotation, &translation, &delta);
            match (residuals(&rp, &tp), residuals(&rm, &tm)) {
                (Some(fp), Some(fm)) => {
                    jac.set_column(p, &((fp - fm) / (2.0 * step)));
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &best;
        let lhs = &jtj + nalgebra::DMatrix::identity(6, 6) * damping;
        let Some(delta) = lhs.lu().solve(&(-&jtr)) else {
            break;
        };
        let inc = [delta[0], delta[1], delta[2], delta[3], delta[4], delta[5]];
        let (r_new, t_new) = apply_increment(&rotation, &translation, &inc);
        match residuals(&r_new, &t_new) {
            Some(f_new) if f_new.norm_squared() < best.norm_squared() => {
                rotation = r_new;
                translation = t_new;
                let improvement = best.norm_squared() - f_new.norm_squared();
                best = f_new;
                damping = (damping * 0.3).max(1e-12);
                if delta.norm() < 1e-14 || improvement < 1e-24 {
                    break;
                }
            }
            _ => {
                damping *= 10.0;
                if damping > 1e8 {
                    break;
                }
            }
        }
    }
    (rotation, translation)
}

fn apply_increment(
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    delta: &[f64; 6],
) -> (Matrix3<f64>, Vector3<f64>) {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let r = axis_angle_to_matrix(&omega) * rotation;
    let t = translation + Vector3::new(delta[3], delta[4], delta[5]);
    (nearest_rotation(&r), t)
}
