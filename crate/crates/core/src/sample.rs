//! Seeded random sampling of rotations, vectors and test observables.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lie::So3;

/// Deterministic sampler; identical seeds give identical streams on every platform.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// Vector with independent entries uniform in `[-scale, scale)`.
    pub fn vector(&mut self, scale: f64) -> Vector3<f64> {
        Vector3::new(self.uniform(-scale, scale), self.uniform(-scale, scale), self.uniform(-scale, scale))
    }

    pub fn unit_vector(&mut self) -> Vector3<f64> {
        loop {
            let v = self.vector(1.0);
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    /// Rotation with angle uniform in `[0, 3)`, away from the logarithm cut.
    pub fn rotation(&mut self) -> So3 {
        self.rotation_with_max_angle(3.0)
    }

    pub fn rotation_with_max_angle(&mut self, max_angle: f64) -> So3 {
        let axis = self.unit_vector();
        let angle = self.uniform(0.0, max_angle);
        So3::exp(&(axis * angle))
    }

    pub fn matrix(&mut self, scale: f64) -> Matrix3<f64> {
        Matrix3::from_fn(|_, _| self.uniform(-scale, scale))
    }

    pub fn symmetric_matrix(&mut self, scale: f64) -> Matrix3<f64> {
        let m = self.matrix(scale);
        (m + m.transpose()) * 0.5
    }
}
