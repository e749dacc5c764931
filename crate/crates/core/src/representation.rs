//! Representations of SO(3) on V = R^3 and the derived operations on V and V*.
//!
//! V* is identified with V through the dot product, so a [`RepDual`] is also a
//! 3-vector and `<y, v> = y.dot(v)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::lie::{ad, ad_star, AlgebraVector, CoAlgebraVector, So3};

pub type RepVector = Vector3<f64>;
pub type RepDual = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepKind {
    /// Matrix action `g v`.
    Standard,
    /// `Ad(g) v` with V = so(3).
    Adjoint,
}

/// A representation together with its anchor `a`, whose isotropy subgroup is the
/// symmetry group of the reduced Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Representation {
    pub kind: RepKind,
    pub anchor: RepVector,
}

impl Representation {
    pub fn new(kind: RepKind, anchor: RepVector) -> Self {
        Self { kind, anchor }
    }

    pub fn standard(anchor: RepVector) -> Self {
        Self::new(RepKind::Standard, anchor)
    }

    pub fn adjoint(anchor: RepVector) -> Self {
        Self::new(RepKind::Adjoint, anchor)
    }

    /// Group action `Phi(g) v`.
    pub fn act(&self, g: &So3, v: &RepVector) -> RepVector {
        match self.kind {
            RepKind::Standard => g.matrix() * v,
            RepKind::Adjoint => g.adjoint(v),
        }
    }

    /// Algebra action `phi(xi) v`.
    pub fn act_algebra(&self, xi: &AlgebraVector, v: &RepVector) -> RepVector {
        match self.kind {
            RepKind::Standard => xi.cross(v),
            RepKind::Adjoint => ad(xi, v),
        }
    }

    /// Dual anti-representation `phi*(xi) y`, with `<phi*(xi) y, v> = <y, phi(xi) v>`.
    pub fn act_dual(&self, xi: &AlgebraVector, y: &RepDual) -> RepDual {
        // phi(xi) = hat(xi) in both cases, so phi*(xi) = hat(xi)^T.
        y.cross(xi)
    }

    /// Diamond `y <> v`, with `<y <> v, xi> = -<y, phi(xi) v>`.
    pub fn diamond(&self, y: &RepDual, v: &RepVector) -> CoAlgebraVector {
        match self.kind {
            RepKind::Standard => y.cross(v),
            RepKind::Adjoint => ad_star(v, y),
        }
    }

    /// `|Phi(h) a - a| <= tol`.
    pub fn in_isotropy(&self, h: &So3, tol: f64) -> bool {
        (self.act(h, &self.anchor) - self.anchor).norm() <= tol
    }

    /// Orbits of both shipped actions are spheres about the origin.
    pub fn orbit_check(&self, p: &RepVector, tol: f64) -> bool {
        (p.norm() - self.anchor.norm()).abs() <= tol
    }

    /// Generator of the isotropy subgroup (rotations about the anchor direction).
    pub fn isotropy_axis(&self) -> Vector3<f64> {
        self.anchor.normalize()
    }

    /// Deterministic rotation `r` with `r a_hat = p_hat`.
    ///
    /// Identity when the directions coincide; a half turn about a fixed axis
    /// perpendicular to `a` when they are opposite.
    pub fn aligning_rotation(&self, p: &RepVector) -> So3 {
        rotation_between(&self.anchor, p)
    }

    /// A group element `g` with `Phi(g^-1) a = p` (left reduction lift).
    pub fn lift_left(&self, p: &RepVector) -> So3 {
        self.aligning_rotation(p).inverse()
    }

    /// A group element `g` with `Phi(g) a = p` (right reduction lift).
    pub fn lift_right(&self, p: &RepVector) -> So3 {
        self.aligning_rotation(p)
    }
}

/// Rotation taking the direction of `from` to the direction of `to`.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> So3 {
    let a = from.normalize();
    let b = to.normalize();
    let axis = a.cross(&b);
    let s = axis.norm();
    let c = a.dot(&b);
    if s < 1e-15 {
        if c > 0.0 {
            return So3::identity();
        }
        let trial = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let perp = a.cross(&trial).normalize();
        return So3::exp(&(perp * std::f64::consts::PI));
    }
    So3::exp(&(axis * (s.atan2(c) / s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Sampler;

    fn reps(s: &mut Sampler) -> [Representation; 2] {
        let a = s.unit_vector();
        [Representation::standard(a), Representation::adjoint(a)]
    }

    #[test]
    fn action_basics() {
        let mut s = Sampler::new(20);
        for rep in reps(&mut s) {
            let v = s.vector(1.0);
            assert_eq!(rep.act(&So3::identity(), &v), v);
            let g = s.rotation();
            assert!((rep.act(&g, &rep.anchor).norm() - rep.anchor.norm()).abs() < 1e-13);
        }
        let g = s.rotation();
        let v = s.vector(1.0);
        assert_eq!(Representation::adjoint(v).act(&g, &v), g.adjoint(&v));
    }

    #[test]
    fn action_is_homomorphism() {
        let mut s = Sampler::new(21);
        for rep in reps(&mut s) {
            for _ in 0..1000 {
                let (g, h, v) = (s.rotation(), s.rotation(), s.vector(1.0));
                let lhs = rep.act(&g.compose(&h), &v);
                let rhs = rep.act(&g, &rep.act(&h, &v));
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn algebra_action_is_derivative() {
        let mut s = Sampler::new(22);
        let h = 1e-5;
        for rep in reps(&mut s) {
            assert_eq!(rep.act_algebra(&Vector3::zeros(), &s.vector(1.0)), Vector3::zeros());
            for _ in 0..100 {
                let (xi, v) = (s.vector(1.0), s.vector(1.0));
                let fd = (rep.act(&So3::exp(&(xi * h)), &v) - rep.act(&So3::exp(&(xi * -h)), &v)) / (2.0 * h);
                let exact = rep.act_algebra(&xi, &v);
                assert!((fd - exact).norm() / exact.norm() < 1e-6);
            }
        }
        let (xi, v) = (s.vector(1.0), s.vector(1.0));
        assert_eq!(Representation::adjoint(v).act_algebra(&xi, &v), ad(&xi, &v));
    }

    #[test]
    fn dual_action() {
        let mut s = Sampler::new(23);
        for rep in reps(&mut s) {
            assert_eq!(rep.act_dual(&Vector3::zeros(), &s.vector(1.0)), Vector3::zeros());
            for _ in 0..1000 {
                let (xi, zeta, y, v) = (s.vector(1.0), s.vector(1.0), s.vector(1.0), s.vector(1.0));
                let r = rep.act_dual(&xi, &y).dot(&v) - y.dot(&rep.act_algebra(&xi, &v));
                assert!(r.abs() < 1e-13);
                // anti-representation: phi*([xi, zeta]) = -[phi*(xi), phi*(zeta)]
                let commutator = rep.act_dual(&xi, &rep.act_dual(&zeta, &y)) - rep.act_dual(&zeta, &rep.act_dual(&xi, &y));
                let r = rep.act_dual(&xi.cross(&zeta), &y) + commutator;
                assert!(r.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diamond_defining_identity() {
        let mut s = Sampler::new(24);
        for rep in reps(&mut s) {
            assert_eq!(rep.diamond(&s.vector(1.0), &Vector3::zeros()), Vector3::zeros());
            for _ in 0..1000 {
                let (y, v, xi) = (s.vector(1.0), s.vector(1.0), s.vector(1.0));
                let r = rep.diamond(&y, &v).dot(&xi) + y.dot(&rep.act_algebra(&xi, &v));
                assert!(r.abs() < 1e-13);
            }
        }
        let (y, v) = (s.vector(1.0), s.vector(1.0));
        assert_eq!(Representation::adjoint(v).diamond(&y, &v), ad_star(&v, &y));
    }

    #[test]
    fn diamond_pairs_to_zero_against_p() {
        // <y <> P, P> = 0 is what makes <M, P> conserved by the heavy-top map.
        let mut s = Sampler::new(25);
        let rep = Representation::standard(Vector3::z());
        for _ in 0..1000 {
            let (y, p) = (s.vector(1.0), s.vector(1.0));
            assert!(rep.diamond(&y, &p).dot(&p).abs() < 1e-13);
        }
    }

    #[test]
    fn isotropy_membership() {
        let rep = Representation::standard(Vector3::z());
        for theta in [0.0, 0.3, -2.0, 3.1] {
            assert!(rep.in_isotropy(&So3::rot_z(theta), 1e-12));
        }
        assert!(!rep.in_isotropy(&So3::rot_x(0.1), 1e-9));
        let d = (So3::rot_x(0.1).act(&Vector3::z()) - Vector3::z()).norm();
        assert!((d - 0.0999).abs() < 1e-3);
        assert!(rep.in_isotropy(&So3::identity(), 1e-15));
    }

    #[test]
    fn orbit_membership() {
        let mut s = Sampler::new(26);
        let rep = Representation::standard(s.unit_vector());
        assert!(rep.orbit_check(&rep.anchor, 1e-15));
        for _ in 0..100 {
            assert!(rep.orbit_check(&rep.act(&s.rotation(), &rep.anchor), 1e-12));
        }
        assert!(!rep.orbit_check(&(rep.anchor * 2.0), 1e-6));

        let mut p = rep.anchor;
        for _ in 0..10_000 {
            p = rep.act(&s.rotation(), &p);
        }
        assert!(rep.orbit_check(&p, 1e-10));
    }

    #[test]
    fn lifts_reach_target() {
        let mut s = Sampler::new(27);
        let rep = Representation::standard(Vector3::new(0.0, 0.0, 2.0));
        let mut targets: Vec<Vector3<f64>> = (0..50).map(|_| s.unit_vector() * 2.0).collect();
        targets.push(rep.anchor);
        targets.push(-rep.anchor);
        for p in targets {
            let g = rep.lift_left(&p);
            assert!((rep.act(&g.inverse(), &rep.anchor) - p).norm() < 1e-12);
            let g = rep.lift_right(&p);
            assert!((rep.act(&g, &rep.anchor) - p).norm() < 1e-12);
        }
    }
}
