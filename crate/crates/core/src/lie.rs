//! Lie group substrate.
//!
//! The algebra so(3) is identified with R^3 through the hat map, and so(3)* with
//! R^3 through the coordinate dot product, so a covector and a vector pair as
//! `xi.dot(eta)` (equivalently `0.5 * tr(hat(xi)^T hat(eta))`). With these
//! identifications
//!
//! | operation      | formula        |
//! |----------------|----------------|
//! | `Ad(g) eta`    | `g eta`        |
//! | `Ad*(g) xi`    | `g^T xi`       |
//! | `ad(eta) zeta` | `eta x zeta`   |
//! | `ad*(eta) xi`  | `xi x eta`     |
//!
//! Left and right Lie derivatives of `f: G -> R` follow the convention
//! `<df(g), eta> = d/de f(exp(e eta) g)` and `<d'f(g), eta> = d/de f(g exp(e eta))`,
//! related by `d'f(g) = Ad*(g) df(g)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Element of so(3) in hat/vee coordinates.
pub type AlgebraVector = Vector3<f64>;

/// Element of so(3)* in dot-product coordinates.
pub type CoAlgebraVector = Vector3<f64>;

/// Rotation angles at or above `PI - LOG_BRANCH_MARGIN` are rejected by [`So3::log`].
pub const LOG_BRANCH_MARGIN: f64 = 1e-6;

/// Number of compositions after which long products are projected back onto SO(3).
pub const REORTHONORMALIZE_EVERY: usize = 64;

/// Group-generic interface. Only [`So3`] implements it.
pub trait LieGroup: Sized + Clone {
    type Algebra: Copy;
    type CoAlgebra: Copy;

    fn identity() -> Self;
    fn compose(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn exp(xi: &Self::Algebra) -> Self;
    fn log(&self) -> Result<Self::Algebra>;
    fn adjoint(&self, eta: &Self::Algebra) -> Self::Algebra;
    fn coadjoint(&self, xi: &Self::CoAlgebra) -> Self::CoAlgebra;
    fn bracket(eta: &Self::Algebra, zeta: &Self::Algebra) -> Self::Algebra;
    fn coadjoint_algebra(eta: &Self::Algebra, xi: &Self::CoAlgebra) -> Self::CoAlgebra;
    fn pairing(xi: &Self::CoAlgebra, eta: &Self::Algebra) -> f64;
}

/// A rotation stored as a 3x3 orthogonal matrix with unit determinant.
#[derive(Clone, Copy, PartialEq)]
pub struct So3 {
    matrix: Matrix3<f64>,
}

impl fmt::Debug for So3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "So3({:?})", self.matrix.as_slice())
    }
}

impl Default for So3 {
    fn default() -> Self {
        Self::identity()
    }
}

/// Skew-symmetric matrix of `v`, so that `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] applied to the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(0.5 * (m[(2, 1)] - m[(1, 2)]), 0.5 * (m[(0, 2)] - m[(2, 0)]), 0.5 * (m[(1, 0)] - m[(0, 1)]))
}

impl So3 {
    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity() }
    }

    /// Wraps a matrix without checking orthogonality.
    pub fn from_matrix_unchecked(matrix: Matrix3<f64>) -> Self {
        Self { matrix }
    }

    /// Projects an arbitrary invertible matrix onto the nearest rotation (polar factor).
    pub fn from_matrix_projected(matrix: Matrix3<f64>) -> Self {
        let svd = matrix.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self { matrix: r }
    }

    /// Rotation by `angle` about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self::exp(&(axis.normalize() * angle))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, angle, 0.0))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn compose(&self, other: &So3) -> So3 {
        So3 {
            matrix: self.matrix * other.matrix,
        }
    }

    pub fn inverse(&self) -> So3 {
        So3 {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn act(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    /// Rodrigues formula. `exp(0)` is the identity exactly.
    pub fn exp(xi: &AlgebraVector) -> So3 {
        let theta_sq = xi.norm_squared();
        if theta_sq == 0.0 {
            return So3::identity();
        }
        let theta = theta_sq.sqrt();
        let (a, b) = if theta < 1e-4 {
            (
                1.0 - theta_sq / 6.0 + theta_sq * theta_sq / 120.0,
                0.5 - theta_sq / 24.0 + theta_sq * theta_sq / 720.0,
            )
        } else {
            let half_sin = (0.5 * theta).sin();
            (theta.sin() / theta, 2.0 * half_sin * half_sin / theta_sq)
        };
        let k = hat(xi);
        So3 {
            matrix: Matrix3::identity() + k * a + k * k * b,
        }
    }

    /// Rotation angle in `[0, PI]`.
    pub fn angle(&self) -> f64 {
        let s = 2.0 * vee(&self.matrix).norm();
        let c = self.matrix.trace() - 1.0;
        s.atan2(c)
    }

    /// Principal logarithm; rejects angles within [`LOG_BRANCH_MARGIN`] of pi.
    pub fn log(&self) -> Result<AlgebraVector> {
        let axis_scaled = vee(&self.matrix); // sin(theta) * axis
        let s = axis_scaled.norm();
        let c = 0.5 * (self.matrix.trace() - 1.0);
        if !s.is_finite() || !c.is_finite() {
            return Err(Error::NonFinite { context: "log" });
        }
        let theta = s.atan2(c);
        if theta >= PI - LOG_BRANCH_MARGIN {
            return Err(Error::NearBranchCut { angle: theta });
        }
        let factor = if theta < 1e-4 {
            let t2 = theta * theta;
            1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
        } else {
            theta / s
        };
        Ok(axis_scaled * factor)
    }

    /// `Ad(g) eta = (g hat(eta) g^-1)^vee`.
    pub fn adjoint(&self, eta: &AlgebraVector) -> AlgebraVector {
        self.matrix * eta
    }

    /// `Ad*(g) xi`, the pairing-adjoint of `Ad(g)`.
    pub fn coadjoint(&self, xi: &CoAlgebraVector) -> CoAlgebraVector {
        self.matrix.transpose() * xi
    }

    /// Largest entry of `g^T g - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.matrix.transpose() * self.matrix - Matrix3::identity()).amax()
    }

    pub fn orthonormalized(&self) -> So3 {
        So3::from_matrix_projected(self.matrix)
    }

    /// Geodesic distance `|log(self^-1 other)|`, falling back to the Frobenius norm
    /// near the cut locus.
    pub fn distance(&self, other: &So3) -> f64 {
        match self.inverse().compose(other).log() {
            Ok(v) => v.norm(),
            Err(_) => (self.matrix - other.matrix).norm(),
        }
    }
}

impl LieGroup for So3 {
    type Algebra = AlgebraVector;
    type CoAlgebra = CoAlgebraVector;

    fn identity() -> Self {
        So3::identity()
    }
    fn compose(&self, other: &Self) -> Self {
        So3::compose(self, other)
    }
    fn inverse(&self) -> Self {
        So3::inverse(self)
    }
    fn exp(xi: &AlgebraVector) -> Self {
        So3::exp(xi)
    }
    fn log(&self) -> Result<AlgebraVector> {
        So3::log(self)
    }
    fn adjoint(&self, eta: &AlgebraVector) -> AlgebraVector {
        So3::adjoint(self, eta)
    }
    fn coadjoint(&self, xi: &CoAlgebraVector) -> CoAlgebraVector {
        So3::coadjoint(self, xi)
    }
    fn bracket(eta: &AlgebraVector, zeta: &AlgebraVector) -> AlgebraVector {
        ad(eta, zeta)
    }
    fn coadjoint_algebra(eta: &AlgebraVector, xi: &CoAlgebraVector) -> CoAlgebraVector {
        ad_star(eta, xi)
    }
    fn pairing(xi: &CoAlgebraVector, eta: &AlgebraVector) -> f64 {
        pairing(xi, eta)
    }
}

/// `ad(eta) zeta = [eta, zeta]`.
pub fn ad(eta: &AlgebraVector, zeta: &AlgebraVector) -> AlgebraVector {
    eta.cross(zeta)
}

/// `ad*(eta) xi`, defined by `<ad*(eta) xi, zeta> = <xi, [eta, zeta]>`.
pub fn ad_star(eta: &AlgebraVector, xi: &CoAlgebraVector) -> CoAlgebraVector {
    xi.cross(eta)
}

pub fn pairing(xi: &CoAlgebraVector, eta: &AlgebraVector) -> f64 {
    xi.dot(eta)
}

/// Right Jacobian: `exp(phi + d) ~ exp(phi) exp(Jr(phi) d)`.
pub fn right_jacobian(phi: &AlgebraVector) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let (a, b) = if t2 < 1e-4 {
        (0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0)
    } else {
        let t = t2.sqrt();
        let half_sin = (0.5 * t).sin();
        (2.0 * half_sin * half_sin / t2, (t - t.sin()) / (t2 * t))
    };
    let k = hat(phi);
    Matrix3::identity() - k * a + k * k * b
}

/// Inverse right Jacobian: `log(exp(phi) exp(d)) ~ phi + Jr^-1(phi) d`.
pub fn right_jacobian_inv(phi: &AlgebraVector) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let c = if t2 < 1e-4 {
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let t = t2.sqrt();
        1.0 / t2 - (1.0 + t.cos()) / (2.0 * t * t.sin())
    };
    let k = hat(phi);
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Left Jacobian, `Jl(phi) = Jr(-phi) = Jr(phi)^T`.
pub fn left_jacobian(phi: &AlgebraVector) -> Matrix3<f64> {
    right_jacobian(phi).transpose()
}

/// Inverse left Jacobian: `log(exp(d) exp(phi)) ~ phi + Jl^-1(phi) d`.
pub fn left_jacobian_inv(phi: &AlgebraVector) -> Matrix3<f64> {
    right_jacobian_inv(phi).transpose()
}

/// Product of a sequence of rotations with periodic projection back onto SO(3).
#[derive(Debug, Clone)]
pub struct DriftControlledProduct {
    current: So3,
    since_projection: usize,
}

impl DriftControlledProduct {
    pub fn new(start: So3) -> Self {
        Self {
            current: start,
            since_projection: 0,
        }
    }

    pub fn current(&self) -> &So3 {
        &self.current
    }

    pub fn push_right(&mut self, w: &So3) -> So3 {
        self.current = self.current.compose(w);
        self.tick();
        self.current
    }

    pub fn push_left(&mut self, w: &So3) -> So3 {
        self.current = w.compose(&self.current);
        self.tick();
        self.current
    }

    fn tick(&mut self) {
        self.since_projection += 1;
        if self.since_projection >= REORTHONORMALIZE_EVERY {
            self.current = self.current.orthonormalized();
            self.since_projection = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Sampler;
    use std::f64::consts::FRAC_PI_2;

    fn mat_err(a: &So3, b: &So3) -> f64 {
        (a.matrix() - b.matrix()).amax()
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut s = Sampler::new(1);
        let g = s.rotation();
        assert_eq!(So3::identity().compose(&g), g);
        assert!(mat_err(&g.compose(&g.inverse()), &So3::identity()) < 1e-12);
    }

    #[test]
    fn compose_about_common_axis() {
        let lhs = So3::rot_z(0.3).compose(&So3::rot_z(0.4));
        // closed form of a z rotation by 0.7
        let (s, c) = 0.7f64.sin_cos();
        let expected = So3::from_matrix_unchecked(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0));
        assert!(mat_err(&lhs, &expected) < 1e-12);
    }

    fn exp_series(xi: &Vector3<f64>) -> Matrix3<f64> {
        let k = hat(xi);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for n in 1..60 {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn exp_matches_series() {
        assert_eq!(So3::exp(&Vector3::zeros()), So3::identity());
        let xi = Vector3::new(FRAC_PI_2, 0.0, 0.0);
        let series = exp_series(&xi);
        assert!((So3::exp(&xi).matrix() - series).amax() < 1e-12);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((So3::exp(&xi).matrix() - expected).amax() < 1e-12);

        let mut s = Sampler::new(2);
        for _ in 0..50 {
            let xi = s.vector(2.5);
            assert!((So3::exp(&xi).matrix() - exp_series(&xi)).amax() < 1e-12);
        }
    }

    #[test]
    fn exp_first_order() {
        let mut s = Sampler::new(3);
        for _ in 0..20 {
            let xi = s.unit_vector() * 1e-4;
            let v = s.unit_vector();
            let err = (So3::exp(&xi).act(&v) - (v + xi.cross(&v))).norm();
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn log_identity_and_roundtrip() {
        assert_eq!(So3::identity().log().unwrap(), Vector3::zeros());
        let mut s = Sampler::new(4);
        for _ in 0..1000 {
            let xi = s.unit_vector() * s.uniform(0.0, 3.0);
            let back = So3::exp(&xi).log().unwrap();
            assert!((back - xi).norm() < 1e-10);
            let g = s.rotation_with_max_angle(3.0);
            let again = So3::exp(&g.log().unwrap());
            assert!(mat_err(&again, &g) < 1e-10);
        }
    }

    #[test]
    fn log_near_pi() {
        let angle = PI - 1e-3;
        let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
        let g = So3::from_axis_angle(&axis, angle);
        let v = g.log().unwrap();
        assert!((v.norm() - angle).abs() < 1e-8);
        assert!((v.normalize() - axis).norm() < 1e-8);
    }

    #[test]
    fn log_rejects_branch_cut() {
        let g = So3::rot_y(PI - 1e-7);
        assert!(matches!(g.log(), Err(Error::NearBranchCut { .. })));
        assert!(matches!(So3::rot_x(PI).log(), Err(Error::NearBranchCut { .. })));
    }

    #[test]
    fn adjoint_cases() {
        let mut s = Sampler::new(5);
        let eta = s.vector(1.0);
        assert_eq!(So3::identity().adjoint(&eta), eta);
        let rotated = So3::rot_z(FRAC_PI_2).adjoint(&Vector3::x());
        assert!((rotated - Vector3::y()).norm() < 1e-12);
        // conjugation oracle
        for _ in 0..100 {
            let g = s.rotation();
            let eta = s.vector(1.0);
            let conj = g.matrix() * hat(&eta) * g.matrix().transpose();
            assert!((vee(&conj) - g.adjoint(&eta)).norm() < 1e-12);
        }
    }

    #[test]
    fn coadjoint_is_pairing_adjoint() {
        let mut s = Sampler::new(6);
        for _ in 0..1000 {
            let (g, xi, eta) = (s.rotation(), s.vector(1.0), s.vector(1.0));
            let r = pairing(&g.coadjoint(&xi), &eta) - pairing(&xi, &g.adjoint(&eta));
            assert!(r.abs() < 1e-12);
            let gi = g.inverse();
            let r = pairing(&gi.coadjoint(&xi), &eta) - pairing(&xi, &gi.adjoint(&eta));
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn ad_and_ad_star() {
        let mut s = Sampler::new(7);
        let eta = s.vector(1.0);
        assert_eq!(ad(&eta, &eta), Vector3::zeros());
        assert_eq!(ad(&Vector3::x(), &Vector3::y()), Vector3::z());
        for _ in 0..1000 {
            let (eta, xi, zeta) = (s.vector(1.0), s.vector(1.0), s.vector(1.0));
            let r = pairing(&ad_star(&eta, &xi), &zeta) - pairing(&xi, &ad(&eta, &zeta));
            assert!(r.abs() < 1e-13);
        }
    }

    #[test]
    fn pairing_cases() {
        let mut s = Sampler::new(8);
        let eta = s.vector(1.0);
        assert_eq!(pairing(&Vector3::zeros(), &eta), 0.0);
        assert_eq!(pairing(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(4.0, 5.0, 6.0)), 32.0);
        for _ in 0..100 {
            let (xi, eta) = (s.vector(2.0), s.vector(2.0));
            let trace_form = 0.5 * (hat(&xi).transpose() * hat(&eta)).trace();
            assert!((pairing(&xi, &eta) - trace_form).abs() < 1e-13);
        }
    }

    #[test]
    fn adjoint_is_group_action() {
        let mut s = Sampler::new(9);
        for _ in 0..1000 {
            let (g, h, eta) = (s.rotation(), s.rotation(), s.vector(1.0));
            let lhs = g.compose(&h).adjoint(&eta);
            let rhs = g.adjoint(&h.adjoint(&eta));
            assert!((lhs - rhs).norm() < 1e-11);
        }
    }

    #[test]
    fn ad_is_derivative_of_adjoint() {
        let mut s = Sampler::new(10);
        let h = 1e-5;
        for _ in 0..100 {
            let (eta, zeta) = (s.vector(1.0), s.vector(1.0));
            let fd = (So3::exp(&(eta * h)).adjoint(&zeta) - So3::exp(&(eta * -h)).adjoint(&zeta)) / (2.0 * h);
            let exact = ad(&eta, &zeta);
            assert!((fd - exact).norm() / exact.norm() < 1e-6);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut s = Sampler::new(11);
        let h = 1e-6;
        for scale in [1e-3, 0.5, 2.0] {
            let phi = s.unit_vector() * scale;
            let jr = right_jacobian(&phi);
            let jr_inv = right_jacobian_inv(&phi);
            assert!((jr * jr_inv - Matrix3::identity()).amax() < 1e-12);
            for j in 0..3 {
                let d = Vector3::ith(j, h);
                let g = So3::exp(&phi);
                let fd_log = (g.compose(&So3::exp(&d)).log().unwrap() - g.compose(&So3::exp(&-d)).log().unwrap()) / (2.0 * h);
                assert!((fd_log - jr_inv.column(j)).norm() < 1e-8);
                let fd_log_left = (So3::exp(&d).compose(&g).log().unwrap() - So3::exp(&-d).compose(&g).log().unwrap()) / (2.0 * h);
                assert!((fd_log_left - left_jacobian_inv(&phi).column(j)).norm() < 1e-8);
                // exp(phi + d) = exp(phi) exp(Jr d)
                let lhs = So3::exp(&(phi + d));
                let rhs = g.compose(&So3::exp(&(jr * d)));
                assert!(mat_err(&lhs, &rhs) < 1e-11);
            }
        }
    }

    #[test]
    fn drift_controlled_chain_stays_orthonormal() {
        let mut s = Sampler::new(12);
        let mut chain = DriftControlledProduct::new(So3::identity());
        for _ in 0..10_000 {
            chain.push_right(&s.rotation());
        }
        assert!(chain.current().orthonormality_error() < 1e-10);
        assert!((chain.current().matrix().determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn projection_recovers_rotation() {
        let mut s = Sampler::new(13);
        let g = s.rotation();
        let noisy = g.matrix() + Matrix3::from_element(1e-9);
        let p = So3::from_matrix_projected(noisy);
        assert!(p.orthonormality_error() < 1e-14);
        assert!(mat_err(&p, &g) < 1e-8);
    }
}
