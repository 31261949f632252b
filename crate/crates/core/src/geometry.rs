//! Monocular ranging, dynamic pitch compensation and image to bird's-eye-view conversion.
//!
//! Conventions: the road is a plane, the camera sits `mount_height` meters above it and is
//! pitched down by `pitch` radians. Image rows grow downwards, so ground points below the
//! horizon have `vp > vo`. In the vehicle frame `x` is lateral (positive right) and `y` is
//! forward; azimuth is measured from `+y` towards `+x`.

use serde::{Deserialize, Serialize};

use crate::detection::VisionDetection;
use crate::error::{Error, Result};

/// Pitch estimates at or beyond this magnitude are treated as sensor faults.
pub const MAX_PITCH: f64 = std::f64::consts::FRAC_PI_4;

/// Pinhole camera with mounting height and a dynamically aligned pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    focal_length: f64,
    principal_row: f64,
    principal_col: f64,
    mount_height: f64,
    pitch: f64,
    pitch_smoothing: f64,
}

impl CameraModel {
    pub fn new(
        focal_length: f64,
        principal_row: f64,
        principal_col: f64,
        mount_height: f64,
    ) -> Result<Self> {
        if !(focal_length.is_finite() && focal_length > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal length must be positive, got {focal_length}"
            )));
        }
        if !(mount_height.is_finite() && mount_height > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "mount height must be positive, got {mount_height}"
            )));
        }
        if !(principal_row.is_finite() && principal_col.is_finite()) {
            return Err(Error::InvalidCamera("principal point must be finite".into()));
        }
        Ok(Self {
            focal_length,
            principal_row,
            principal_col,
            mount_height,
            pitch: 0.0,
            pitch_smoothing: 0.3,
        })
    }

    pub fn with_pitch(mut self, pitch: f64) -> Result<Self> {
        if !self.set_pitch(pitch) {
            return Err(Error::InvalidCamera(format!("implausible pitch {pitch}")));
        }
        Ok(self)
    }

    /// Smoothing factor `λ` in `θ_t = (1 − λ)·θ_{t−1} + λ·θ_measured`; `1.0` updates immediately.
    pub fn with_smoothing(mut self, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidCamera(format!(
                "pitch smoothing must be in [0, 1], got {lambda}"
            )));
        }
        self.pitch_smoothing = lambda;
        Ok(self)
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn principal_row(&self) -> f64 {
        self.principal_row
    }

    pub fn principal_col(&self) -> f64 {
        self.principal_col
    }

    pub fn mount_height(&self) -> f64 {
        self.mount_height
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn pitch_smoothing(&self) -> f64 {
        self.pitch_smoothing
    }

    /// Sets the pitch, returning `false` (and leaving it unchanged) if it is implausible.
    pub fn set_pitch(&mut self, pitch: f64) -> bool {
        if pitch.is_finite() && pitch.abs() < MAX_PITCH {
            self.pitch = pitch;
            true
        } else {
            false
        }
    }

    /// Angle between the optical axis and the ray through image row `vp`.
    fn ray_angle(&self, vp: f64) -> f64 {
        ((vp - self.principal_row) / self.focal_length).atan()
    }

    /// Trigonometric ranging: forward ground distance `Z = h / tan(α + θ)` to the point imaged
    /// at row `vp`.
    pub fn trig_range(&self, vp: f64) -> Result<f64> {
        let beta = self.ray_angle(vp) + self.pitch;
        if !(beta > 0.0 && beta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::HorizonDegenerate(beta));
        }
        Ok(self.mount_height / beta.tan())
    }

    /// Size ranging from the pinhole proportion `Z = f·S / s`.
    pub fn size_range(&self, image_extent: f64, physical_extent: f64) -> Result<f64> {
        if !(image_extent > 0.0 && physical_extent > 0.0)
            || !image_extent.is_finite()
            || !physical_extent.is_finite()
        {
            return Err(Error::InvalidExtent {
                image: image_extent,
                physical: physical_extent,
            });
        }
        Ok(self.focal_length * physical_extent / image_extent)
    }

    /// Pitch implied by one reference pair: `θ = arctan(h / Z′) − arctan((vp − vo) / f)`.
    pub fn pitch_from_pair(&self, reference_range: f64, vp: f64) -> f64 {
        (self.mount_height / reference_range).atan() - self.ray_angle(vp)
    }

    /// Dynamic coordinate alignment.
    ///
    /// Each `(Z′, vp)` pair gives a pitch estimate; their median is blended into the current
    /// pitch with the configured smoothing. `Z′` is the reference forward distance (e.g. a
    /// radar range projected onto the optical axis). Pairs with non-positive `Z′` are ignored;
    /// an empty input, or a median outside `±π/4`, leaves the pitch unchanged.
    pub fn estimate_pitch(&mut self, pairs: &[(f64, f64)]) -> f64 {
        let mut estimates: Vec<f64> = pairs
            .iter()
            .filter(|(z, vp)| *z > 0.0 && z.is_finite() && vp.is_finite())
            .map(|&(z, vp)| self.pitch_from_pair(z, vp))
            .collect();
        let Some(measured) = median(&mut estimates) else {
            return self.pitch;
        };
        if measured.abs() >= MAX_PITCH {
            log::warn!("discarding implausible pitch estimate {measured:.4} rad");
            return self.pitch;
        }
        let lambda = self.pitch_smoothing;
        let blended = (1.0 - lambda) * self.pitch + lambda * measured;
        self.set_pitch(blended);
        self.pitch
    }

    /// Image row at which a ground point `forward` meters ahead is imaged.
    pub fn project_ground_row(&self, forward: f64) -> f64 {
        self.project_point_row(forward, 0.0)
    }

    /// Image row of a point `forward` meters ahead and `height` meters above the road.
    pub fn project_point_row(&self, forward: f64, height: f64) -> f64 {
        let (y_cam, z_cam) = self.camera_yz(forward, height);
        self.principal_row + self.focal_length * y_cam / z_cam
    }

    /// Image column of a point at lateral offset `lateral`, `forward` meters ahead, `height`
    /// meters above the road.
    pub fn project_point_col(&self, lateral: f64, forward: f64, height: f64) -> f64 {
        let (_, z_cam) = self.camera_yz(forward, height);
        self.principal_col + self.focal_length * lateral / z_cam
    }

    /// Depth along the optical axis and downward image-plane offset of a road-frame point.
    fn camera_yz(&self, forward: f64, height: f64) -> (f64, f64) {
        let (s, c) = self.pitch.sin_cos();
        let drop = self.mount_height - height;
        (drop * c - forward * s, forward * c + drop * s)
    }

    /// Converts a vision detection's bottom-center pixel to a ground-plane point.
    pub fn vision_to_bev(&self, det: &VisionDetection) -> Result<BevPoint> {
        self.pixel_to_bev(det.u, det.v)
    }

    pub fn pixel_to_bev(&self, u: f64, vp: f64) -> Result<BevPoint> {
        let forward = self.trig_range(vp)?;
        let (_, z_cam) = self.camera_yz(forward, 0.0);
        let lateral = (u - self.principal_col) * z_cam / self.focal_length;
        Ok(BevPoint::from_xy(lateral, forward))
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// A ground-plane point in the polar convention radar uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevPoint {
    pub range: f64,
    pub azimuth: f64,
}

impl BevPoint {
    pub fn new(range: f64, azimuth: f64) -> Self {
        Self { range, azimuth }
    }

    pub fn from_xy(x: f64, y: f64) -> Self {
        Self {
            range: x.hypot(y),
            azimuth: x.atan2(y),
        }
    }

    /// Lateral offset, positive right.
    pub fn x(&self) -> f64 {
        self.range * self.azimuth.sin()
    }

    /// Forward offset.
    pub fn y(&self) -> f64 {
        self.range * self.azimuth.cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::new(1500.0, 500.0, 800.0, 1.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn trig_range_flat_road() {
        let z = cam().trig_range(575.0).unwrap();
        assert!(close(z, 30.0, 1e-9), "{z}");
    }

    #[test]
    fn trig_range_at_horizon_is_degenerate() {
        assert!(matches!(
            cam().trig_range(500.0),
            Err(Error::HorizonDegenerate(_))
        ));
        assert!(cam().trig_range(400.0).is_err());
    }

    #[test]
    fn trig_range_with_pitch() {
        let c = cam().with_pitch(0.024901).unwrap();
        // tan(atan(0.05) + 0.024901) = 0.075 to ~1e-6
        let z = c.trig_range(575.0).unwrap();
        assert!(close(z, 20.0, 1e-3), "{z}");
        let exact = cam()
            .with_pitch(0.075f64.atan() - 0.05f64.atan())
            .unwrap();
        assert!(close(exact.trig_range(575.0).unwrap(), 20.0, 1e-9));
    }

    #[test]
    fn size_range_examples() {
        let c = CameraModel::new(1000.0, 500.0, 800.0, 1.5).unwrap();
        assert!(close(c.size_range(100.0, 2.0).unwrap(), 20.0, 1e-12));
        assert!(close(c.size_range(2000.0, 2.0).unwrap(), 1.0, 1e-12));
        assert!(matches!(
            c.size_range(0.0, 2.0),
            Err(Error::InvalidExtent { .. })
        ));
        assert!(c.size_range(10.0, -1.0).is_err());
    }

    #[test]
    fn estimate_pitch_examples() {
        let mut c = cam().with_smoothing(1.0).unwrap();
        assert!(close(c.estimate_pitch(&[(30.0, 575.0)]), 0.0, 1e-12));
        let p = c.estimate_pitch(&[(20.0, 575.0)]);
        assert!(close(p, 0.075f64.atan() - 0.05f64.atan(), 1e-12));
        assert!(close(p, 0.024901, 1e-6));

        let mut c = cam().with_pitch(0.01).unwrap();
        assert_eq!(c.estimate_pitch(&[]), 0.01);
    }

    #[test]
    fn estimate_pitch_smooths() {
        let mut c = cam().with_smoothing(0.3).unwrap();
        let target = c.pitch_from_pair(20.0, 575.0);
        let p = c.estimate_pitch(&[(20.0, 575.0)]);
        assert!(close(p, 0.3 * target, 1e-12));
    }

    #[test]
    fn implausible_pitch_is_discarded() {
        let mut c = cam().with_smoothing(1.0).unwrap();
        // Ray pointing straight down while radar says 1.5 km: estimate far beyond 45°.
        let p = c.estimate_pitch(&[(1500.0, 500.0 + 1500.0 * 10.0)]);
        assert_eq!(p, 0.0);
        assert!(cam().with_pitch(1.0).is_err());
    }

    #[test]
    fn vision_to_bev_examples() {
        let c = cam();
        let det = VisionDetection::bottom_center(0, 800.0, 575.0, 0.9);
        let p = c.vision_to_bev(&det).unwrap();
        assert!(close(p.range, 30.0, 1e-9));
        assert!(close(p.azimuth, 0.0, 1e-12));

        let det = VisionDetection::bottom_center(1, 950.0, 575.0, 0.9);
        let p = c.vision_to_bev(&det).unwrap();
        assert!(close(p.azimuth, 0.1f64.atan(), 1e-12));
        assert!(close(p.azimuth, 0.0997, 1e-4));
        assert!(close(p.y(), 30.0, 1e-9));

        let det = VisionDetection::bottom_center(2, 800.0, 500.0, 0.9);
        assert!(c.vision_to_bev(&det).is_err());
    }

    #[test]
    fn bev_point_xy_roundtrip() {
        let p = BevPoint::from_xy(-3.0, 40.0);
        assert!(close(p.x(), -3.0, 1e-12));
        assert!(close(p.y(), 40.0, 1e-12));
    }

    proptest! {
        #[test]
        fn ground_projection_roundtrip(pitch in -0.1f64..0.1, z in 3.0f64..120.0, x in -10.0f64..10.0) {
            let c = cam().with_pitch(pitch).unwrap();
            let vp = c.project_ground_row(z);
            prop_assume!(vp > c.principal_row() + 1e-6);
            let z_back = c.trig_range(vp).unwrap();
            prop_assert!(((z_back - z) / z).abs() < 1e-9);
            let u = c.project_point_col(x, z, 0.0);
            let p = c.pixel_to_bev(u, vp).unwrap();
            prop_assert!((p.x() - x).abs() < 1e-7 && (p.y() - z).abs() < 1e-7);
        }

        #[test]
        fn pitch_recovered_from_exact_pairs(pitch in -0.08f64..0.08, zs in proptest::collection::vec(5.0f64..90.0, 1..12)) {
            let truth = cam().with_pitch(pitch).unwrap();
            let pairs: Vec<(f64, f64)> = zs.iter().map(|&z| (z, truth.project_ground_row(z))).collect();
            let mut c = cam().with_smoothing(1.0).unwrap();
            let est = c.estimate_pitch(&pairs);
            prop_assert!((est - pitch).abs() < 1e-9);
        }

        #[test]
        fn trig_range_decreasing(a in 1.0f64..400.0, b in 1.0f64..400.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let c = cam();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(c.trig_range(500.0 + lo).unwrap() > c.trig_range(500.0 + hi).unwrap());
        }

        #[test]
        fn median_tolerates_minority_corruption(
            pitch in -0.05f64..0.05,
            k in 1usize..5,
            junk in proptest::collection::vec((1.0f64..200.0, 501.0f64..900.0), 5),
        ) {
            let truth = cam().with_pitch(pitch).unwrap();
            let mut pairs: Vec<(f64, f64)> = (0..=k)
                .map(|i| { let z = 8.0 + 9.0 * i as f64; (z, truth.project_ground_row(z)) })
                .collect();
            pairs.extend(junk.iter().take(k).copied());
            let mut c = cam().with_smoothing(1.0).unwrap();
            let est = c.estimate_pitch(&pairs);
            prop_assert!((est - pitch).abs() < 1e-9);
        }
    }
}
