//! Synthetic localization error for robustness experiments.
//!
//! The translation is shifted by `ε·r` with `ε ~ N(0, σ_t²)` and `r` uniform on
//! the unit sphere; the heading is rotated by `δ ~ N(0, σ_r²)` about the global
//! up (+z) axis, leaving pitch and roll alone. Draws come from a ChaCha8
//! stream seeded with [`NoiseSpec::seed`], three draws per pose (ε, r, δ).

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::error::{Error, Result};
use crate::geometry::RigidPose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Translation std, meters.
    pub sigma_t: f64,
    /// Yaw std, degrees.
    pub sigma_r: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_t: f64, sigma_r: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            sigma_t,
            sigma_r,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t >= 0.0 && self.sigma_t.is_finite())
            || !(self.sigma_r >= 0.0 && self.sigma_r.is_finite())
        {
            return Err(Error::InvalidArgument(
                "noise standard deviations must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_t == 0.0 && self.sigma_r == 0.0
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// One sampled localization error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseNoise {
    pub epsilon: f64,
    pub direction: Vector3<f64>,
    /// Radians.
    pub yaw: f64,
}

impl PoseNoise {
    pub fn sample<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> Self {
        let standard = Normal::new(0.0, 1.0).expect("unit normal");
        let epsilon = spec.sigma_t * standard.sample(rng);
        let dir: [f64; 3] = UnitSphere.sample(rng);
        let yaw = spec.sigma_r.to_radians() * standard.sample(rng);
        Self {
            epsilon,
            direction: Vector3::from(dir),
            yaw,
        }
    }

    pub fn apply(&self, p: &RigidPose) -> RigidPose {
        let mut translation = *p.translation();
        if self.epsilon != 0.0 {
            translation += self.direction * self.epsilon;
        }
        let rotation = if self.yaw != 0.0 {
            let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw);
            UnitQuaternion::new_normalize((yaw * p.rotation()).into_inner())
        } else {
            *p.rotation()
        };
        RigidPose::new(rotation, translation)
    }
}

pub fn perturb_pose<R: Rng + ?Sized>(p: &RigidPose, spec: &NoiseSpec, rng: &mut R) -> RigidPose {
    PoseNoise::sample(spec, rng).apply(p)
}
