//! Gaussian kernels, scene segments and the assembled 4D scene.

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geom::{CameraRig, EgoPose};

/// One center-moving Gaussian kernel.
///
/// The center lives in the ego frame of the owning segment's start time and
/// moves linearly with `velocity`. Static kernels have zero velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian4D {
    pub center: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Per-axis standard deviation in meters.
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub sh: Vec<f64>,
    pub velocity: Vector3<f64>,
    pub dynamic: bool,
    pub t_start: f64,
    pub t_end: f64,
}

impl Gaussian4D {
    /// A static, isotropic, identity-rotation kernel. Handy for tests and tools.
    pub fn isotropic(center: Vector3<f64>, sigma: f64, opacity: f64, sh: Vec<f64>) -> Self {
        Self {
            center,
            rotation: UnitQuaternion::identity(),
            scale: Vector3::repeat(sigma),
            opacity,
            sh,
            velocity: Vector3::zeros(),
            dynamic: false,
            t_start: 0.0,
            t_end: 1.0,
        }
    }

    pub fn with_span(mut self, t_start: f64, t_end: f64) -> Self {
        self.t_start = t_start;
        self.t_end = t_end;
        self
    }

    pub fn with_velocity(mut self, velocity: Vector3<f64>) -> Self {
        self.velocity = velocity;
        self.dynamic = true;
        self
    }

    /// Center at time `t` following `center + velocity·(t − t_start)`.
    pub fn center_at(&self, t: f64) -> Result<Vector3<f64>> {
        if !(t >= self.t_start && t <= self.t_end) {
            return Err(Error::OutOfSegment {
                t,
                start: self.t_start,
                end: self.t_end,
            });
        }
        if !self.dynamic {
            return Ok(self.center);
        }
        Ok(self.center + self.velocity * (t - self.t_start))
    }

    /// Checks the kernel invariants; used by loaders.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity {} outside [0, 1]", self.opacity));
        }
        if !self.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(format!("non-positive scale {:?}", self.scale.as_slice()));
        }
        if (self.rotation.quaternion().norm() - 1.0).abs() > 1e-9 {
            return Err("rotation quaternion is not unit".into());
        }
        if !self.dynamic && self.velocity != Vector3::zeros() {
            return Err("static kernel with nonzero velocity".into());
        }
        if !(self.t_start < self.t_end) {
            return Err(format!("empty span [{}, {}]", self.t_start, self.t_end));
        }
        let finite = self.center.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.sh.iter().all(|v| v.is_finite());
        if !finite {
            return Err("non-finite kernel parameters".into());
        }
        Ok(())
    }
}

/// Fused kernels for one interval `[t_start, t_end]`, anchored at the ego pose of `t_start`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub anchor_pose: EgoPose,
    pub gaussians: Vec<Gaussian4D>,
}

impl SceneSegment {
    pub fn new(
        t_start: f64,
        t_end: f64,
        anchor_pose: EgoPose,
        gaussians: Vec<Gaussian4D>,
    ) -> Result<Self> {
        if !(t_start < t_end) {
            return Err(Error::TimeMismatch(format!(
                "segment span [{t_start}, {t_end}] is empty"
            )));
        }
        if let Some((i, g)) = gaussians
            .iter()
            .enumerate()
            .find(|(_, g)| g.t_start != t_start || g.t_end != t_end)
        {
            return Err(Error::TimeMismatch(format!(
                "kernel {i} spans [{}, {}], segment spans [{t_start}, {t_end}]",
                g.t_start, g.t_end
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            anchor_pose,
            gaussians,
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Contiguous segments over the scene timeline, plus the rig and ego poses.
#[derive(Clone, Debug)]
pub struct Scene4D {
    segments: Vec<SceneSegment>,
    pub rig: CameraRig,
    pub poses: Vec<EgoPose>,
}

impl Scene4D {
    pub fn new(segments: Vec<SceneSegment>, rig: CameraRig, poses: Vec<EgoPose>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::TooFewFrames(0));
        }
        for pair in segments.windows(2) {
            if pair[0].t_end != pair[1].t_start {
                return Err(Error::TimeMismatch(format!(
                    "segment ending at {} followed by segment starting at {}",
                    pair[0].t_end, pair[1].t_start
                )));
            }
        }
        if poses.windows(2).any(|p| !(p[0].t < p[1].t)) {
            return Err(Error::NonMonotoneTime("ego poses".into()));
        }
        Ok(Self {
            segments,
            rig,
            poses,
        })
    }

    pub fn segments(&self) -> &[SceneSegment] {
        &self.segments
    }

    pub fn timeline(&self) -> (f64, f64) {
        (
            self.segments[0].t_start,
            self.segments[self.segments.len() - 1].t_end,
        )
    }

    /// Segment owning `t`: half-open `[t_start, t_end)`, the last one closed.
    pub fn segment_at(&self, t: f64) -> Result<&SceneSegment> {
        let (start, end) = self.timeline();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfSegment { t, start, end });
        }
        let idx = self
            .segments
            .partition_point(|s| s.t_end <= t)
            .min(self.segments.len() - 1);
        Ok(&self.segments[idx])
    }

    pub fn kernel_count(&self) -> usize {
        self.segments.iter().map(SceneSegment::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SE3;
    use proptest::prelude::*;

    fn moving(center: Vector3<f64>, v: Vector3<f64>) -> Gaussian4D {
        Gaussian4D::isotropic(center, 0.1, 0.5, vec![0.0; 3])
            .with_span(2.0, 3.0)
            .with_velocity(v)
    }

    #[test]
    fn center_at_examples() {
        let g = moving(Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0));
        assert_eq!(g.center_at(2.0).unwrap(), g.center);
        assert!((g.center_at(2.25).unwrap() - Vector3::new(1.0, 0.0, 0.0)).amax() < 1e-12);
        let s = Gaussian4D::isotropic(Vector3::new(1.0, 2.0, 3.0), 0.1, 0.5, vec![0.0; 3]);
        assert_eq!(s.center_at(0.7).unwrap(), s.center);
        assert!(matches!(g.center_at(3.5), Err(Error::OutOfSegment { .. })));
    }

    proptest! {
        #[test]
        fn center_at_is_affine(
            c in prop::array::uniform3(-50.0f64..50.0),
            v in prop::array::uniform3(-20.0f64..20.0),
            a in 2.0f64..3.0,
            b in 2.0f64..3.0,
        ) {
            let g = moving(Vector3::from(c), Vector3::from(v));
            let mid = g.center_at((a + b) / 2.0).unwrap();
            let avg = (g.center_at(a).unwrap() + g.center_at(b).unwrap()) / 2.0;
            prop_assert!((mid - avg).amax() < 1e-9);
        }
    }

    fn segment(t0: f64, t1: f64) -> SceneSegment {
        SceneSegment::new(
            t0,
            t1,
            EgoPose {
                t: t0,
                pose: SE3::identity(),
            },
            vec![Gaussian4D::isotropic(Vector3::zeros(), 1.0, 0.5, vec![0.0; 3]).with_span(t0, t1)],
        )
        .unwrap()
    }

    #[test]
    fn segment_rejects_span_mismatch() {
        let g = Gaussian4D::isotropic(Vector3::zeros(), 1.0, 0.5, vec![0.0; 3]);
        let pose = EgoPose {
            t: 0.0,
            pose: SE3::identity(),
        };
        assert!(SceneSegment::new(0.0, 0.5, pose, vec![g]).is_err());
    }

    #[test]
    fn segment_ownership_is_half_open() {
        let scene = Scene4D::new(
            vec![segment(0.0, 0.5), segment(0.5, 1.0)],
            CameraRig::default(),
            vec![],
        )
        .unwrap();
        assert_eq!(scene.segment_at(0.0).unwrap().t_start, 0.0);
        assert_eq!(scene.segment_at(0.5).unwrap().t_start, 0.5);
        assert_eq!(scene.segment_at(0.49).unwrap().t_start, 0.0);
        assert_eq!(scene.segment_at(1.0).unwrap().t_start, 0.5);
        assert!(scene.segment_at(1.01).is_err());
        assert!(Scene4D::new(
            vec![segment(0.0, 0.5), segment(0.6, 1.0)],
            CameraRig::default(),
            vec![]
        )
        .is_err());
    }
}
