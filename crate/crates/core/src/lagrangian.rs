//! Discrete Lagrangians on `G x G`, their left/right trivializations and their
//! reductions by the isotropy subgroup of a representation anchor.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, CoAlgebraVector, So3};
use crate::representation::{RepDual, RepVector, Representation};
use crate::sample::Sampler;

/// Probe step for central-difference Lie derivatives and gradients.
pub const FD_STEP: f64 = 1e-5;

/// Number of isotropy samples used by the invariance audit in [`reduce`].
pub const INVARIANCE_SAMPLES: usize = 20;
/// Largest tolerated deviation in the invariance audit.
pub const INVARIANCE_TOL: f64 = 1e-9;
const INVARIANCE_SEED: u64 = 0x1507_7009;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

fn finite(v: f64, context: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context })
    }
}

/// Central-difference gradient of a function on R^3.
pub fn gradient_fd(f: impl Fn(&Vector3<f64>) -> f64, x: &Vector3<f64>) -> Result<Vector3<f64>> {
    let mut out = Vector3::zeros();
    for j in 0..3 {
        let d = Vector3::ith(j, FD_STEP);
        let plus = finite(f(&(x + d)), "gradient probe")?;
        let minus = finite(f(&(x - d)), "gradient probe")?;
        out[j] = (plus - minus) / (2.0 * FD_STEP);
    }
    Ok(out)
}

/// Left Lie derivative `df(g)`: `<df(g), eta> = d/de f(exp(e eta) g)`.
pub fn lie_deriv_left(f: impl Fn(&So3) -> f64, g: &So3) -> Result<CoAlgebraVector> {
    let mut out = Vector3::zeros();
    for j in 0..3 {
        let d = Vector3::ith(j, FD_STEP);
        let plus = finite(f(&So3::exp(&d).compose(g)), "Lie derivative probe")?;
        let minus = finite(f(&So3::exp(&-d).compose(g)), "Lie derivative probe")?;
        out[j] = (plus - minus) / (2.0 * FD_STEP);
    }
    Ok(out)
}

/// Right Lie derivative `d'f(g)`: `<d'f(g), eta> = d/de f(g exp(e eta))`.
pub fn lie_deriv_right(f: impl Fn(&So3) -> f64, g: &So3) -> Result<CoAlgebraVector> {
    let mut out = Vector3::zeros();
    for j in 0..3 {
        let d = Vector3::ith(j, FD_STEP);
        let plus = finite(f(&g.compose(&So3::exp(&d))), "Lie derivative probe")?;
        let minus = finite(f(&g.compose(&So3::exp(&-d))), "Lie derivative probe")?;
        out[j] = (plus - minus) / (2.0 * FD_STEP);
    }
    Ok(out)
}

/// Discrete Lagrangian `L(g, g_hat)`.
///
/// Only `eval` is required. The right Lie derivatives in each argument default to
/// central differences; analytic overrides keep the implicit solves at roundoff
/// accuracy. Left derivatives follow from `d = Ad*(g^-1) d'`.
pub trait FullLagrangian: Send + Sync {
    fn eval(&self, g: &So3, g_hat: &So3) -> f64;

    fn d_prime_1(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        lie_deriv_right(|x| self.eval(x, g_hat), g)
    }

    fn d_prime_2(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        lie_deriv_right(|x| self.eval(g, x), g_hat)
    }

    fn d_1(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        Ok(g.inverse().coadjoint(&self.d_prime_1(g, g_hat)?))
    }

    fn d_2(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        Ok(g_hat.inverse().coadjoint(&self.d_prime_2(g, g_hat)?))
    }
}

impl<T: FullLagrangian + ?Sized> FullLagrangian for Arc<T> {
    fn eval(&self, g: &So3, g_hat: &So3) -> f64 {
        (**self).eval(g, g_hat)
    }
    fn d_prime_1(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        (**self).d_prime_1(g, g_hat)
    }
    fn d_prime_2(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        (**self).d_prime_2(g, g_hat)
    }
    fn d_1(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        (**self).d_1(g, g_hat)
    }
    fn d_2(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        (**self).d_2(g, g_hat)
    }
}

/// A full Lagrangian given by a closure; all derivatives by finite differences.
pub struct FnLagrangian<F>(pub F);

impl<F> FullLagrangian for FnLagrangian<F>
where
    F: Fn(&So3, &So3) -> f64 + Send + Sync,
{
    fn eval(&self, g: &So3, g_hat: &So3) -> f64 {
        (self.0)(g, g_hat)
    }
}

/// Pull-back of a full Lagrangian to `(g, W)` with `g_hat = g W` (left) or to
/// `(g, w)` with `g_hat = w g` (right).
#[derive(Debug, Clone)]
pub struct Trivialized<L> {
    full: L,
    side: Side,
}

pub fn trivialize<L: FullLagrangian>(full: L, side: Side) -> Trivialized<L> {
    Trivialized { full, side }
}

impl<L: FullLagrangian> Trivialized<L> {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn full(&self) -> &L {
        &self.full
    }

    fn next(&self, g: &So3, x: &So3) -> So3 {
        match self.side {
            Side::Left => g.compose(x),
            Side::Right => x.compose(g),
        }
    }

    pub fn eval(&self, g: &So3, x: &So3) -> f64 {
        self.full.eval(g, &self.next(g, x))
    }

    /// Right Lie derivative in the increment argument.
    pub fn d_prime_x(&self, g: &So3, x: &So3) -> Result<CoAlgebraVector> {
        let g_hat = self.next(g, x);
        match self.side {
            Side::Left => self.full.d_prime_2(g, &g_hat),
            Side::Right => Ok(x.coadjoint(&self.full.d_2(g, &g_hat)?)),
        }
    }

    /// Left Lie derivative in the increment argument.
    pub fn d_x(&self, g: &So3, x: &So3) -> Result<CoAlgebraVector> {
        let g_hat = self.next(g, x);
        match self.side {
            Side::Left => Ok(x.inverse().coadjoint(&self.full.d_prime_2(g, &g_hat)?)),
            Side::Right => self.full.d_2(g, &g_hat),
        }
    }

    /// Right Lie derivative in the configuration argument, increment held fixed.
    pub fn d_prime_g(&self, g: &So3, x: &So3) -> Result<CoAlgebraVector> {
        match self.side {
            Side::Left => {
                let g_hat = self.next(g, x);
                let d1 = self.full.d_prime_1(g, &g_hat)?;
                let d2 = self.full.d_prime_2(g, &g_hat)?;
                Ok(d1 + x.inverse().coadjoint(&d2))
            }
            Side::Right => Ok(g.coadjoint(&self.d_g(g, x)?)),
        }
    }

    /// Left Lie derivative in the configuration argument, increment held fixed.
    pub fn d_g(&self, g: &So3, x: &So3) -> Result<CoAlgebraVector> {
        match self.side {
            Side::Left => Ok(g.inverse().coadjoint(&self.d_prime_g(g, x)?)),
            Side::Right => {
                let g_hat = self.next(g, x);
                let d1 = self.full.d_1(g, &g_hat)?;
                let d2 = self.full.d_2(g, &g_hat)?;
                Ok(d1 + x.coadjoint(&d2))
            }
        }
    }
}

/// Reduced Lagrangian `Lambda(W, P)` on `G x O_a`.
///
/// For [`Side::Left`] the momentum is the right Lie derivative `d'_W Lambda`, for
/// [`Side::Right`] the left Lie derivative `d_w Lambda`.
pub trait ReducedLagrangian: Send + Sync {
    fn side(&self) -> Side;
    fn representation(&self) -> &Representation;
    fn eval(&self, w: &So3, p: &RepVector) -> f64;

    fn d_prime_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        lie_deriv_right(|x| self.eval(x, p), w)
    }

    fn d_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        Ok(w.inverse().coadjoint(&self.d_prime_w(w, p)?))
    }

    fn grad_p(&self, w: &So3, p: &RepVector) -> Result<RepDual> {
        gradient_fd(|x| self.eval(w, x), p)
    }
}

impl<T: ReducedLagrangian + ?Sized> ReducedLagrangian for Arc<T> {
    fn side(&self) -> Side {
        (**self).side()
    }
    fn representation(&self) -> &Representation {
        (**self).representation()
    }
    fn eval(&self, w: &So3, p: &RepVector) -> f64 {
        (**self).eval(w, p)
    }
    fn d_prime_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        (**self).d_prime_w(w, p)
    }
    fn d_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        (**self).d_w(w, p)
    }
    fn grad_p(&self, w: &So3, p: &RepVector) -> Result<RepDual> {
        (**self).grad_p(w, p)
    }
}

impl<T: ReducedLagrangian + ?Sized> ReducedLagrangian for &T {
    fn side(&self) -> Side {
        (**self).side()
    }
    fn representation(&self) -> &Representation {
        (**self).representation()
    }
    fn eval(&self, w: &So3, p: &RepVector) -> f64 {
        (**self).eval(w, p)
    }
    fn d_prime_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        (**self).d_prime_w(w, p)
    }
    fn d_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        (**self).d_w(w, p)
    }
    fn grad_p(&self, w: &So3, p: &RepVector) -> Result<RepDual> {
        (**self).grad_p(w, p)
    }
}

/// Discrete Legendre transform: `M = d'_W Lambda` (left) or `m = d_w Lambda` (right).
pub fn legendre_reduced<R: ReducedLagrangian + ?Sized>(lag: &R, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
    let m = match lag.side() {
        Side::Left => lag.d_prime_w(w, p)?,
        Side::Right => lag.d_w(w, p)?,
    };
    if m.iter().all(|v| v.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NonFinite { context: "Legendre transform" })
    }
}

/// Reduced Lagrangian obtained from an isotropy-invariant trivialized Lagrangian by
/// evaluating at a lift of `P`.
#[derive(Debug, Clone)]
pub struct Reduced<L> {
    trivialized: Trivialized<L>,
    rep: Representation,
    audit_deviation: f64,
}

/// Reduces `lt` by the isotropy subgroup of `rep.anchor`, after a randomized audit
/// of the invariance hypothesis (left translations for `Left`, right for `Right`).
pub fn reduce<L: FullLagrangian>(lt: Trivialized<L>, rep: Representation) -> Result<Reduced<L>> {
    let deviation = invariance_deviation(&lt, &rep);
    if !(deviation <= INVARIANCE_TOL) {
        return Err(Error::NotInvariant { deviation });
    }
    Ok(Reduced {
        trivialized: lt,
        rep,
        audit_deviation: deviation,
    })
}

fn invariance_deviation<L: FullLagrangian>(lt: &Trivialized<L>, rep: &Representation) -> f64 {
    let mut sampler = Sampler::new(INVARIANCE_SEED);
    let axis = rep.isotropy_axis();
    let mut worst = 0.0f64;
    for _ in 0..INVARIANCE_SAMPLES {
        let h = So3::exp(&(axis * sampler.uniform(-std::f64::consts::PI, std::f64::consts::PI)));
        let g = sampler.rotation();
        let x = sampler.rotation_with_max_angle(0.5);
        let moved = match lt.side() {
            Side::Left => h.compose(&g),
            Side::Right => g.compose(&h),
        };
        let d = (lt.eval(&moved, &x) - lt.eval(&g, &x)).abs();
        worst = if d.is_nan() { f64::NAN } else { worst.max(d) };
    }
    worst
}

impl<L: FullLagrangian> Reduced<L> {
    /// Largest deviation observed by the invariance audit.
    pub fn audit_deviation(&self) -> f64 {
        self.audit_deviation
    }

    pub fn trivialized(&self) -> &Trivialized<L> {
        &self.trivialized
    }

    pub fn lift(&self, p: &RepVector) -> So3 {
        match self.trivialized.side() {
            Side::Left => self.rep.lift_left(p),
            Side::Right => self.rep.lift_right(p),
        }
    }
}

impl<L: FullLagrangian> ReducedLagrangian for Reduced<L> {
    fn side(&self) -> Side {
        self.trivialized.side()
    }

    fn representation(&self) -> &Representation {
        &self.rep
    }

    fn eval(&self, w: &So3, p: &RepVector) -> f64 {
        self.trivialized.eval(&self.lift(p), w)
    }

    fn d_prime_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        self.trivialized.d_prime_x(&self.lift(p), w)
    }

    fn d_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        self.trivialized.d_x(&self.lift(p), w)
    }

    /// Only the component tangent to the orbit is determined by the trivialized
    /// Lagrangian; the minimal-norm representative is returned.
    fn grad_p(&self, w: &So3, p: &RepVector) -> Result<RepDual> {
        let g = self.lift(p);
        let n2 = p.norm_squared();
        match self.side() {
            // d'_g L = y <> P = y x P
            Side::Left => Ok(p.cross(&self.trivialized.d_prime_g(&g, w)?) / n2),
            // d_g L = -y <> p
            Side::Right => Ok(-p.cross(&self.trivialized.d_g(&g, w)?) / n2),
        }
    }
}

/// Full Lagrangian induced by a reduced one: `L(g, g_hat) = Lambda(g^-1 g_hat, Phi(g^-1) a)`
/// on the left, `Lambda(g_hat g^-1, Phi(g) a)` on the right. Derivatives are analytic
/// in terms of those of `Lambda`.
#[derive(Debug, Clone)]
pub struct ReducedAsFull<R> {
    reduced: R,
}

impl<R: ReducedLagrangian> ReducedAsFull<R> {
    pub fn new(reduced: R) -> Self {
        Self { reduced }
    }

    pub fn reduced(&self) -> &R {
        &self.reduced
    }

    fn split(&self, g: &So3, g_hat: &So3) -> (So3, RepVector) {
        let rep = self.reduced.representation();
        match self.reduced.side() {
            Side::Left => (g.inverse().compose(g_hat), rep.act(&g.inverse(), &rep.anchor)),
            Side::Right => (g_hat.compose(&g.inverse()), rep.act(g, &rep.anchor)),
        }
    }
}

impl<R: ReducedLagrangian> FullLagrangian for ReducedAsFull<R> {
    fn eval(&self, g: &So3, g_hat: &So3) -> f64 {
        let (w, p) = self.split(g, g_hat);
        self.reduced.eval(&w, &p)
    }

    fn d_prime_1(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        match self.reduced.side() {
            Side::Left => {
                let (w, p) = self.split(g, g_hat);
                let rep = self.reduced.representation();
                let y = self.reduced.grad_p(&w, &p)?;
                Ok(rep.diamond(&y, &p) - self.reduced.d_w(&w, &p)?)
            }
            Side::Right => Ok(g.coadjoint(&self.d_1(g, g_hat)?)),
        }
    }

    fn d_prime_2(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        match self.reduced.side() {
            Side::Left => {
                let (w, p) = self.split(g, g_hat);
                self.reduced.d_prime_w(&w, &p)
            }
            Side::Right => Ok(g_hat.coadjoint(&self.d_2(g, g_hat)?)),
        }
    }

    fn d_1(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        match self.reduced.side() {
            Side::Left => Ok(g.inverse().coadjoint(&self.d_prime_1(g, g_hat)?)),
            Side::Right => {
                let (w, p) = self.split(g, g_hat);
                let rep = self.reduced.representation();
                let y = self.reduced.grad_p(&w, &p)?;
                Ok(-rep.diamond(&y, &p) - self.reduced.d_prime_w(&w, &p)?)
            }
        }
    }

    fn d_2(&self, g: &So3, g_hat: &So3) -> Result<CoAlgebraVector> {
        match self.reduced.side() {
            Side::Left => Ok(g_hat.inverse().coadjoint(&self.d_prime_2(g, g_hat)?)),
            Side::Right => {
                let (w, p) = self.split(g, g_hat);
                self.reduced.d_w(&w, &p)
            }
        }
    }
}

/// Reduced Lagrangian of the opposite side obtained through `g -> g^-1`:
/// `Lambda_mirror(x, p) = Lambda(x^-1, p)`.
#[derive(Debug, Clone)]
pub struct Mirrored<R> {
    inner: R,
    side: Side,
}

impl<R: ReducedLagrangian> Mirrored<R> {
    pub fn new(inner: R) -> Self {
        let side = match inner.side() {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        };
        Self { inner, side }
    }
}

impl<R: ReducedLagrangian> ReducedLagrangian for Mirrored<R> {
    fn side(&self) -> Side {
        self.side
    }
    fn representation(&self) -> &Representation {
        self.inner.representation()
    }
    fn eval(&self, w: &So3, p: &RepVector) -> f64 {
        self.inner.eval(&w.inverse(), p)
    }
    // (w e^{s eta})^-1 = e^{-s eta} w^-1
    fn d_prime_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        Ok(-self.inner.d_w(&w.inverse(), p)?)
    }
    fn d_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        Ok(-self.inner.d_prime_w(&w.inverse(), p)?)
    }
    fn grad_p(&self, w: &So3, p: &RepVector) -> Result<RepDual> {
        self.inner.grad_p(&w.inverse(), p)
    }
}

/// `sum_k L(g_k, g_{k+1})` over a configuration sequence of length >= 2.
pub fn action_full<L: FullLagrangian + ?Sized>(lag: &L, trajectory: &[So3]) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::InvalidArgument("action needs at least two configurations".into()));
    }
    Ok(trajectory.windows(2).map(|w| lag.eval(&w[0], &w[1])).sum())
}

/// `sum_k Lambda(W_k, P_k)` over at least one reduced pair.
pub fn action_reduced<R: ReducedLagrangian + ?Sized>(lag: &R, pairs: &[(So3, RepVector)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("action needs at least one reduced pair".into()));
    }
    Ok(pairs.iter().map(|(w, p)| lag.eval(w, p)).sum())
}

/// Variations `eta_{k0..=k1}` of a configuration sequence with fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSequence {
    etas: Vec<AlgebraVector>,
}

impl VariationSequence {
    pub fn new(etas: Vec<AlgebraVector>) -> Result<Self> {
        match (etas.first(), etas.last()) {
            (Some(first), Some(last)) if etas.len() >= 2 && *first == Vector3::zeros() && *last == Vector3::zeros() => Ok(Self { etas }),
            _ => Err(Error::InvalidArgument(
                "variation must have at least two entries and vanish at both ends".into(),
            )),
        }
    }

    /// Interior variations `eta_1..eta_{n-1}` padded with zero endpoints.
    pub fn from_interior(interior: &[AlgebraVector]) -> Self {
        let mut etas = Vec::with_capacity(interior.len() + 2);
        etas.push(Vector3::zeros());
        etas.extend_from_slice(interior);
        etas.push(Vector3::zeros());
        Self { etas }
    }

    pub fn etas(&self) -> &[AlgebraVector] {
        &self.etas
    }

    /// Varies a left-reduced sequence `(W_k, P_k)`, `k = 0..n`, by `g_k -> g_k exp(eta_k)`:
    /// `W_k -> exp(-eta_k) W_k exp(eta_{k+1})`, `P_k -> Phi(exp(-eta_k)) P_k`.
    /// To first order this is `W_k exp(eta_{k+1} - Ad(W_k^-1) eta_k)`, `P_k - phi(eta_k) P_k`.
    pub fn apply_left(&self, rep: &Representation, pairs: &[(So3, RepVector)]) -> Result<Vec<(So3, RepVector)>> {
        if pairs.len() + 1 != self.etas.len() {
            return Err(Error::InvalidArgument(format!(
                "variation length {} does not match {} reduced pairs",
                self.etas.len(),
                pairs.len()
            )));
        }
        Ok(pairs
            .iter()
            .enumerate()
            .map(|(k, (w, p))| {
                let back = So3::exp(&-self.etas[k]);
                let w_new = back.compose(w).compose(&So3::exp(&self.etas[k + 1]));
                (w_new, rep.act(&back, p))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::RepKind;

    /// A left-invariant test Lagrangian built from explicit formulas.
    fn toy_full(rep: Representation) -> impl FullLagrangian {
        FnLagrangian(move |g: &So3, gh: &So3| {
            let w = g.inverse().compose(gh);
            let xi = w.log().unwrap();
            let p = rep.act(&g.inverse(), &rep.anchor);
            0.5 * xi.dot(&Vector3::new(1.0, 2.0, 3.0).component_mul(&xi)) + 0.3 * p.dot(&Vector3::new(0.2, -0.5, 1.0)) + 0.1 * xi.dot(&p)
        })
    }

    fn rel(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1.0)
    }

    #[test]
    fn lie_derivatives_of_constant_vanish() {
        let g = Sampler::new(30).rotation();
        assert_eq!(lie_deriv_left(|_| 4.2, &g).unwrap(), Vector3::zeros());
        assert_eq!(lie_deriv_right(|_| 4.2, &g).unwrap(), Vector3::zeros());
    }

    #[test]
    fn lie_derivatives_of_log_pairing_at_identity() {
        let c = Vector3::new(0.4, -1.3, 2.0);
        let f = |g: &So3| c.dot(&g.log().unwrap());
        let id = So3::identity();
        assert!((lie_deriv_left(f, &id).unwrap() - c).norm() < 1e-6);
        assert!((lie_deriv_right(f, &id).unwrap() - c).norm() < 1e-6);
    }

    #[test]
    fn right_derivative_is_coadjoint_of_left() {
        let mut s = Sampler::new(31);
        let c = s.vector(1.0);
        let a = s.unit_vector();
        let f = |g: &So3| c.dot(&g.act(&a)) + (g.matrix()[(0, 1)]).powi(2);
        for _ in 0..50 {
            let g = s.rotation();
            let left = lie_deriv_left(f, &g).unwrap();
            let right = lie_deriv_right(f, &g).unwrap();
            assert!((right - g.coadjoint(&left)).norm() < 1e-8);
        }
    }

    #[test]
    fn non_finite_probe_is_reported() {
        let g = So3::identity();
        let err = lie_deriv_right(|_| f64::NAN, &g).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn trivialization_identities() {
        let mut s = Sampler::new(32);
        let rep = Representation::standard(Vector3::z());
        let left = trivialize(toy_full(rep), Side::Left);
        let right = trivialize(toy_full(rep), Side::Right);
        for _ in 0..50 {
            let g = s.rotation();
            let w = s.rotation_with_max_angle(1.0);
            assert_eq!(left.eval(&g, &So3::identity()), left.full().eval(&g, &g));
            let conj = g.compose(&w).compose(&g.inverse());
            assert!((left.eval(&g, &w) - right.eval(&g, &conj)).abs() < 1e-13);
            let g_hat = g.compose(&s.rotation_with_max_angle(1.0));
            assert!((left.eval(&g, &g.inverse().compose(&g_hat)) - left.full().eval(&g, &g_hat)).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_splitting_identities() {
        let mut s = Sampler::new(33);
        let rep = Representation::standard(Vector3::z());
        let full = toy_full(rep);
        let left = trivialize(toy_full(rep), Side::Left);
        let right = trivialize(toy_full(rep), Side::Right);
        for _ in 0..30 {
            let g = s.rotation();
            let w = s.rotation_with_max_angle(1.0);
            let g_hat = g.compose(&w);
            // d'_1 L = d'_g L^(l) - d_W L^(l), with both sides by independent probes
            let d1 = lie_deriv_right(|x| full.eval(x, &g_hat), &g).unwrap();
            let dg = lie_deriv_right(|x| left.eval(x, &w), &g).unwrap();
            let dw = lie_deriv_left(|x| left.eval(&g, x), &w).unwrap();
            assert!(rel(&(dg - dw), &d1) < 1e-6);
            assert!(rel(&left.d_prime_g(&g, &w).unwrap(), &dg) < 1e-6);
            assert!(rel(&left.d_x(&g, &w).unwrap(), &dw) < 1e-6);

            // d_1 L = d_g L^(r) - Ad*(w) d_w L^(r)
            let wr = g_hat.compose(&g.inverse());
            let d1l = lie_deriv_left(|x| full.eval(x, &g_hat), &g).unwrap();
            let dg = lie_deriv_left(|x| right.eval(x, &wr), &g).unwrap();
            let dw = lie_deriv_left(|x| right.eval(&g, x), &wr).unwrap();
            assert!(rel(&(dg - wr.coadjoint(&dw)), &d1l) < 1e-6);
            assert!(rel(&right.d_g(&g, &wr).unwrap(), &dg) < 1e-6);
            assert!(rel(&right.d_x(&g, &wr).unwrap(), &dw) < 1e-6);
            let dpw = lie_deriv_right(|x| right.eval(&g, x), &wr).unwrap();
            assert!(rel(&right.d_prime_x(&g, &wr).unwrap(), &dpw) < 1e-6);
        }
    }

    #[test]
    fn pullback_gradient_is_diamond() {
        let mut s = Sampler::new(34);
        for kind in [RepKind::Standard, RepKind::Adjoint] {
            let rep = Representation::new(kind, s.unit_vector());
            let c = s.vector(1.0);
            let big_f = |p: &Vector3<f64>| c.dot(p) + 0.5 * p.x * p.y * p.z;
            for _ in 0..30 {
                let g = s.rotation();
                let p = rep.act(&g.inverse(), &rep.anchor);
                let grad = gradient_fd(big_f, &p).unwrap();
                // f(g) = F(Phi(g^-1) a): d'f = grad F <> P
                let lhs = lie_deriv_right(|x| big_f(&rep.act(&x.inverse(), &rep.anchor)), &g).unwrap();
                assert!(rel(&lhs, &rep.diamond(&grad, &p)) < 1e-6);
                // f(g) = F(Phi(g) a): df = -grad F <> p
                let p = rep.act(&g, &rep.anchor);
                let grad = gradient_fd(big_f, &p).unwrap();
                let lhs = lie_deriv_left(|x| big_f(&rep.act(x, &rep.anchor)), &g).unwrap();
                assert!(rel(&lhs, &-rep.diamond(&grad, &p)) < 1e-6);
            }
        }
    }

    #[test]
    fn reduce_accepts_invariant_and_rejects_others() {
        let rep = Representation::standard(Vector3::z());
        let reduced = reduce(trivialize(toy_full(rep), Side::Left), rep).unwrap();
        assert!(reduced.audit_deviation() < 1e-12);

        let biased = FnLagrangian(|g: &So3, gh: &So3| {
            let w = g.inverse().compose(gh);
            w.log().unwrap().norm_squared() + g.matrix()[(0, 0)]
        });
        let err = reduce(trivialize(biased, Side::Left), rep).err();
        assert!(matches!(err, Some(Error::NotInvariant { .. })));
    }

    #[test]
    fn reduced_reproduces_trivialized_value() {
        let mut s = Sampler::new(35);
        let rep = Representation::standard(Vector3::z());
        let reduced = reduce(trivialize(toy_full(rep), Side::Left), rep).unwrap();
        for _ in 0..20 {
            let g = s.rotation();
            let w = s.rotation_with_max_angle(1.0);
            let p = rep.act(&g.inverse(), &rep.anchor);
            let direct = reduced.trivialized().eval(&reduced.lift(&p), &w);
            assert!((reduced.eval(&w, &p) - direct).abs() < 1e-13);
            // a second lift h g with h in the isotropy subgroup
            let h = So3::rot_z(s.uniform(-3.0, 3.0));
            let other = reduced.trivialized().eval(&h.compose(&reduced.lift(&p)), &w);
            assert!((reduced.eval(&w, &p) - other).abs() < 1e-12);
            assert!((reduced.trivialized().eval(&g, &w) - reduced.eval(&w, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_of_log_pairing() {
        struct LogPairing(Representation, Vector3<f64>);
        impl ReducedLagrangian for LogPairing {
            fn side(&self) -> Side {
                Side::Left
            }
            fn representation(&self) -> &Representation {
                &self.0
            }
            fn eval(&self, w: &So3, _p: &RepVector) -> f64 {
                self.1.dot(&w.log().unwrap())
            }
        }
        struct Flat(Representation);
        impl ReducedLagrangian for Flat {
            fn side(&self) -> Side {
                Side::Left
            }
            fn representation(&self) -> &Representation {
                &self.0
            }
            fn eval(&self, _w: &So3, p: &RepVector) -> f64 {
                p.x
            }
        }
        let rep = Representation::standard(Vector3::z());
        let c = Vector3::new(1.0, -2.0, 0.5);
        let m = legendre_reduced(&LogPairing(rep, c), &So3::identity(), &rep.anchor).unwrap();
        assert!((m - c).norm() < 1e-6);
        let m = legendre_reduced(&Flat(rep), &So3::rot_x(0.2), &rep.anchor).unwrap();
        assert_eq!(m, Vector3::zeros());
    }

    #[test]
    fn action_sums() {
        let rep = Representation::standard(Vector3::z());
        let full = toy_full(rep);
        let mut s = Sampler::new(36);
        let traj: Vec<So3> = (0..6).map(|_| s.rotation_with_max_angle(1.0)).collect();
        assert!(action_full(&full, &traj[..1]).is_err());
        assert_eq!(action_full(&full, &traj[..2]).unwrap(), full.eval(&traj[0], &traj[1]));
        let whole = action_full(&full, &traj).unwrap();
        let split = action_full(&full, &traj[..3]).unwrap() + action_full(&full, &traj[2..]).unwrap();
        assert!((whole - split).abs() < 1e-13);
    }

    #[test]
    fn variation_sequence_endpoints() {
        assert!(VariationSequence::new(vec![Vector3::zeros(), Vector3::x(), Vector3::zeros()]).is_ok());
        assert!(VariationSequence::new(vec![Vector3::x(), Vector3::zeros()]).is_err());
        assert!(VariationSequence::new(vec![Vector3::zeros()]).is_err());
    }

    #[test]
    fn variation_preserves_constraints() {
        let mut s = Sampler::new(37);
        let rep = Representation::standard(Vector3::z());
        let mut p = rep.anchor;
        let mut pairs = Vec::new();
        for _ in 0..4 {
            let w = s.rotation_with_max_angle(0.3);
            pairs.push((w, p));
            p = rep.act(&w.inverse(), &p);
        }
        let var = VariationSequence::from_interior(&[s.vector(0.1), s.vector(0.1), s.vector(0.1)]);
        let varied = var.apply_left(&rep, &pairs).unwrap();
        let product = |ps: &[(So3, RepVector)]| ps.iter().fold(So3::identity(), |acc, (w, _)| acc.compose(w));
        assert!((product(&pairs).matrix() - product(&varied).matrix()).amax() < 1e-13);
        assert_eq!(varied[0].1, pairs[0].1);
        for k in 0..3 {
            let next = rep.act(&varied[k].0.inverse(), &varied[k].1);
            assert!((next - varied[k + 1].1).norm() < 1e-13);
        }
    }
}
