//! Poisson brackets on `G x g*` and on the semidirect dual `g* x V`, Casimirs, and
//! numerical checks of the Poisson-map property and the Jacobi identity.
//!
//! Every phase point has a six-dimensional chart: `(M, P)` itself for reduced
//! points and `(M, xi)` with `g exp(xi)` for group points. Gradients are
//! expressed in these charts, so the group part of a gradient is `d'_g`.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{vee, CoAlgebraVector, So3};
use crate::representation::{RepVector, Representation};
use crate::sample::Sampler;
use crate::stepper::ReducedState;

pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Central-difference step for observable gradients and map Jacobians.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold of [`verify_poisson_map`].
pub const POISSON_MAP_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhasePoint {
    Reduced(ReducedState),
    Group { g: So3, m: CoAlgebraVector },
}

impl PhasePoint {
    pub fn reduced(m: CoAlgebraVector, p: RepVector) -> Self {
        PhasePoint::Reduced(ReducedState::new(m, p))
    }

    pub fn momentum(&self) -> &CoAlgebraVector {
        match self {
            PhasePoint::Reduced(s) => &s.m,
            PhasePoint::Group { m, .. } => m,
        }
    }

    /// Moves along chart coordinate `delta` (momentum first).
    pub fn displaced(&self, delta: &Vector6<f64>) -> PhasePoint {
        let dm = Vector3::new(delta[0], delta[1], delta[2]);
        let dx = Vector3::new(delta[3], delta[4], delta[5]);
        match self {
            PhasePoint::Reduced(s) => PhasePoint::reduced(s.m + dm, s.p + dx),
            PhasePoint::Group { g, m } => PhasePoint::Group {
                g: g.compose(&So3::exp(&dx)),
                m: m + dm,
            },
        }
    }

    /// Chart coordinates of `other` around `self`.
    pub fn chart_of(&self, other: &PhasePoint) -> Result<Vector6<f64>> {
        let (dm, dx) = match (self, other) {
            (PhasePoint::Reduced(a), PhasePoint::Reduced(b)) => (b.m - a.m, b.p - a.p),
            (PhasePoint::Group { g: ga, m: ma }, PhasePoint::Group { g: gb, m: mb }) => (mb - ma, ga.inverse().compose(gb).log()?),
            _ => return Err(Error::PhaseMismatch("chart of a point of a different kind")),
        };
        Ok(Vector6::new(dm.x, dm.y, dm.z, dx.x, dx.y, dx.z))
    }
}

/// Gradient in chart coordinates: `m` is `grad_M`, `x` is `grad_P` (reduced) or
/// `d'_g` (group).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub m: Vector3<f64>,
    pub x: Vector3<f64>,
}

impl Gradient {
    fn from_vec(v: &Vector6<f64>) -> Self {
        Self {
            m: Vector3::new(v[0], v[1], v[2]),
            x: Vector3::new(v[3], v[4], v[5]),
        }
    }

    fn to_vec(self) -> Vector6<f64> {
        Vector6::new(self.m.x, self.m.y, self.m.z, self.x.x, self.x.y, self.x.z)
    }
}

pub trait Observable: Send + Sync {
    fn eval(&self, x: &PhasePoint) -> f64;

    fn gradient(&self, x: &PhasePoint) -> Result<Gradient> {
        fd_gradient(self, x)
    }
}

impl<T: Observable + ?Sized> Observable for &T {
    fn eval(&self, x: &PhasePoint) -> f64 {
        (**self).eval(x)
    }

    fn gradient(&self, x: &PhasePoint) -> Result<Gradient> {
        (**self).gradient(x)
    }
}

/// Central differences in chart coordinates.
pub fn fd_gradient<O: Observable + ?Sized>(f: &O, x: &PhasePoint) -> Result<Gradient> {
    let mut out = Vector6::zeros();
    for j in 0..6 {
        let d = Vector6::ith(j, FD_STEP);
        out[j] = (f.eval(&x.displaced(&d)) - f.eval(&x.displaced(&-d))) / (2.0 * FD_STEP);
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(Gradient::from_vec(&out))
    } else {
        Err(Error::NonFinite {
            context: "observable gradient",
        })
    }
}

/// Observable given by a closure, differentiated numerically.
pub struct FnObservable<F>(pub F);

impl<F: Fn(&PhasePoint) -> f64 + Send + Sync> Observable for FnObservable<F> {
    fn eval(&self, x: &PhasePoint) -> f64 {
        (self.0)(x)
    }
}

/// `1/2 y^T A y + b^T y` with `y = (M, P)`, on reduced points.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub a: Matrix6,
    pub b: Vector6<f64>,
}

impl Quadratic {
    pub fn linear(c_m: Vector3<f64>, c_p: Vector3<f64>) -> Self {
        Self {
            a: Matrix6::zeros(),
            b: Vector6::new(c_m.x, c_m.y, c_m.z, c_p.x, c_p.y, c_p.z),
        }
    }

    pub fn random(s: &mut Sampler) -> Self {
        let mut a = Matrix6::from_fn(|_, _| s.uniform(-1.0, 1.0));
        a = (a + a.transpose()) * 0.5;
        Self {
            a,
            b: Vector6::from_fn(|_, _| s.uniform(-1.0, 1.0)),
        }
    }

    pub fn random_linear(s: &mut Sampler) -> Self {
        Self {
            a: Matrix6::zeros(),
            b: Vector6::from_fn(|_, _| s.uniform(-1.0, 1.0)),
        }
    }

    fn coords(x: &PhasePoint) -> Vector6<f64> {
        match x {
            PhasePoint::Reduced(s) => Vector6::new(s.m.x, s.m.y, s.m.z, s.p.x, s.p.y, s.p.z),
            PhasePoint::Group { .. } => Vector6::from_element(f64::NAN),
        }
    }
}

impl Observable for Quadratic {
    fn eval(&self, x: &PhasePoint) -> f64 {
        let y = Self::coords(x);
        0.5 * y.dot(&(self.a * y)) + self.b.dot(&y)
    }

    fn gradient(&self, x: &PhasePoint) -> Result<Gradient> {
        if let PhasePoint::Group { .. } = x {
            return Err(Error::PhaseMismatch("quadratic observable lives on reduced points"));
        }
        let y = Self::coords(x);
        Ok(Gradient::from_vec(&(self.a * y + self.b)))
    }
}

/// `1/2 M^T A M + b.M + <C, g>_F + M^T D g u` on group points.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupQuadratic {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub c: Matrix3<f64>,
    pub d: Matrix3<f64>,
    pub u: Vector3<f64>,
}

impl GroupQuadratic {
    pub fn random(s: &mut Sampler) -> Self {
        Self {
            a: s.symmetric_matrix(1.0),
            b: s.vector(1.0),
            c: s.matrix(1.0),
            d: s.matrix(1.0),
            u: s.vector(1.0),
        }
    }

    /// Only the momentum-linear part `b.M`.
    pub fn random_linear(s: &mut Sampler) -> Self {
        Self {
            a: Matrix3::zeros(),
            b: s.vector(1.0),
            c: Matrix3::zeros(),
            d: Matrix3::zeros(),
            u: Vector3::zeros(),
        }
    }
}

impl Observable for GroupQuadratic {
    fn eval(&self, x: &PhasePoint) -> f64 {
        match x {
            PhasePoint::Group { g, m } => {
                0.5 * m.dot(&(self.a * m)) + self.b.dot(m) + self.c.component_mul(g.matrix()).sum() + m.dot(&(self.d * g.act(&self.u)))
            }
            PhasePoint::Reduced(_) => f64::NAN,
        }
    }

    fn gradient(&self, x: &PhasePoint) -> Result<Gradient> {
        let PhasePoint::Group { g, m } = x else {
            return Err(Error::PhaseMismatch("group observable lives on group points"));
        };
        let grad_m = self.a * m + self.b + self.d * g.act(&self.u);
        // tr(C^T g hat(eta)) = -2 <vee(C^T g), eta>; M^T D g (eta x u) = <u x g^T D^T M, eta>
        let dg = vee(&(self.c.transpose() * g.matrix())) * -2.0 + self.u.cross(&g.inverse().act(&(self.d.transpose() * m)));
        Ok(Gradient { m: grad_m, x: dg })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketKind {
    /// On `G x g*` in left-trivialized coordinates `(g, M)`.
    LeftTrivialized,
    /// On `G x g*` in right-trivialized coordinates `(g, m)`.
    RightTrivialized,
    /// Lie-Poisson bracket on `g* x V` for left reduction.
    SemidirectLeft,
    /// Its right-reduction counterpart, which differs by a sign.
    SemidirectRight,
}

impl BracketKind {
    pub const ALL: [BracketKind; 4] = [
        BracketKind::LeftTrivialized,
        BracketKind::RightTrivialized,
        BracketKind::SemidirectLeft,
        BracketKind::SemidirectRight,
    ];

    pub fn is_semidirect(&self) -> bool {
        matches!(self, BracketKind::SemidirectLeft | BracketKind::SemidirectRight)
    }

    fn check_point(&self, x: &PhasePoint) -> Result<()> {
        match (self.is_semidirect(), x) {
            (true, PhasePoint::Reduced(_)) | (false, PhasePoint::Group { .. }) => Ok(()),
            (true, _) => Err(Error::PhaseMismatch("semidirect bracket needs a reduced point")),
            (false, _) => Err(Error::PhaseMismatch("trivialized bracket needs a group point")),
        }
    }
}

/// Bracket of two gradients at `x`.
pub fn bracket_of_gradients(kind: BracketKind, rep: &Representation, g1: &Gradient, g2: &Gradient, x: &PhasePoint) -> Result<f64> {
    kind.check_point(x)?;
    let m = x.momentum();
    let lie = m.dot(&g1.m.cross(&g2.m));
    let value = match (kind, x) {
        (BracketKind::SemidirectLeft | BracketKind::SemidirectRight, PhasePoint::Reduced(s)) => {
            let v = lie + g1.x.dot(&rep.act_algebra(&g2.m, &s.p)) - g2.x.dot(&rep.act_algebra(&g1.m, &s.p));
            if kind == BracketKind::SemidirectLeft {
                v
            } else {
                -v
            }
        }
        (BracketKind::LeftTrivialized, PhasePoint::Group { .. }) => -g1.x.dot(&g2.m) + g2.x.dot(&g1.m) + lie,
        (BracketKind::RightTrivialized, PhasePoint::Group { g, .. }) => {
            // d_g f = Ad*(g^-1) d'_g f
            let (d1, d2) = (g.act(&g1.x), g.act(&g2.x));
            -d1.dot(&g2.m) + d2.dot(&g1.m) - lie
        }
        _ => unreachable!("checked above"),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { context: "bracket" })
    }
}

pub fn bracket<A: Observable + ?Sized, B: Observable + ?Sized>(kind: BracketKind, rep: &Representation, f1: &A, f2: &B, x: &PhasePoint) -> Result<f64> {
    bracket_of_gradients(kind, rep, &f1.gradient(x)?, &f2.gradient(x)?, x)
}

/// `{F1, F2}` as an observable, differentiated numerically.
pub struct BracketObservable<'a> {
    pub kind: BracketKind,
    pub rep: Representation,
    pub f1: &'a dyn Observable,
    pub f2: &'a dyn Observable,
}

impl Observable for BracketObservable<'_> {
    fn eval(&self, x: &PhasePoint) -> f64 {
        bracket(self.kind, &self.rep, self.f1, self.f2, x).unwrap_or(f64::NAN)
    }
}

/// `|P|^2`.
pub struct OrbitRadius;

impl Observable for OrbitRadius {
    fn eval(&self, x: &PhasePoint) -> f64 {
        match x {
            PhasePoint::Reduced(s) => s.p.norm_squared(),
            PhasePoint::Group { .. } => f64::NAN,
        }
    }
}

/// `<M, P>`.
pub struct MomentumPairing;

impl Observable for MomentumPairing {
    fn eval(&self, x: &PhasePoint) -> f64 {
        match x {
            PhasePoint::Reduced(s) => s.m.dot(&s.p),
            PhasePoint::Group { .. } => f64::NAN,
        }
    }
}

/// `[|P|^2, <M, P>]`, the Casimirs of the semidirect brackets for the shipped actions.
pub fn casimir(kind: BracketKind, x: &PhasePoint) -> Result<Vec<f64>> {
    match (kind.is_semidirect(), x) {
        (true, PhasePoint::Reduced(s)) => Ok(vec![s.p.norm_squared(), s.m.dot(&s.p)]),
        (false, _) => Err(Error::PhaseMismatch("Casimirs are provided for the semidirect brackets")),
        (true, _) => Err(Error::PhaseMismatch("semidirect bracket needs a reduced point")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonReport {
    pub kind: BracketKind,
    pub seed: u64,
    pub n_pairs: usize,
    pub n_points: usize,
    pub max_residual: f64,
    pub pass: bool,
}

/// Central-difference Jacobian of a phase map in chart coordinates at `x`.
pub fn map_jacobian(map: &dyn Fn(&PhasePoint) -> Result<PhasePoint>, x: &PhasePoint) -> Result<(PhasePoint, Matrix6)> {
    let y = map(x)?;
    let mut jac = Matrix6::zeros();
    for j in 0..6 {
        let d = Vector6::ith(j, FD_STEP);
        let plus = y.chart_of(&map(&x.displaced(&d))?)?;
        let minus = y.chart_of(&map(&x.displaced(&-d))?)?;
        jac.set_column(j, &((plus - minus) / (2.0 * FD_STEP)));
    }
    if jac.iter().all(|v| v.is_finite()) {
        Ok((y, jac))
    } else {
        Err(Error::NonFinite { context: "map Jacobian" })
    }
}

/// Checks `{F1 o Psi, F2 o Psi}(x) = {F1, F2}(Psi(x))` for `n_pairs` random
/// quadratic observables at each point, with relative residual
/// `|lhs - rhs| / max(1, |rhs|)`.
pub fn verify_poisson_map(
    map: &dyn Fn(&PhasePoint) -> Result<PhasePoint>,
    kind: BracketKind,
    rep: &Representation,
    points: &[PhasePoint],
    n_pairs: usize,
    seed: u64,
) -> Result<PoissonReport> {
    let mut sampler = Sampler::new(seed);
    let mut max_residual: f64 = 0.0;
    for x in points {
        kind.check_point(x)?;
        let (y, jac) = map_jacobian(map, x)?;
        for _ in 0..n_pairs {
            let (f1, f2): (Box<dyn Observable>, Box<dyn Observable>) = if kind.is_semidirect() {
                (Box::new(Quadratic::random(&mut sampler)), Box::new(Quadratic::random(&mut sampler)))
            } else {
                (Box::new(GroupQuadratic::random(&mut sampler)), Box::new(GroupQuadratic::random(&mut sampler)))
            };
            let (a, b) = (f1.gradient(&y)?, f2.gradient(&y)?);
            let rhs = bracket_of_gradients(kind, rep, &a, &b, &y)?;
            let pulled_a = Gradient::from_vec(&(jac.transpose() * a.to_vec()));
            let pulled_b = Gradient::from_vec(&(jac.transpose() * b.to_vec()));
            let lhs = bracket_of_gradients(kind, rep, &pulled_a, &pulled_b, x)?;
            max_residual = max_residual.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    Ok(PoissonReport {
        kind,
        seed,
        n_pairs,
        n_points: points.len(),
        max_residual,
        pass: max_residual < POISSON_MAP_TOL,
    })
}

/// `|{{F1,F2},F3} + {{F2,F3},F1} + {{F3,F1},F2}| / max(1, largest term)`, with
/// the outer brackets differentiated numerically.
pub fn verify_jacobi(kind: BracketKind, rep: &Representation, f1: &dyn Observable, f2: &dyn Observable, f3: &dyn Observable, x: &PhasePoint) -> Result<f64> {
    let inner = |a: &'_ dyn Observable, b: &'_ dyn Observable, c: &dyn Observable| -> Result<f64> {
        let ab = BracketObservable { kind, rep: *rep, f1: a, f2: b };
        bracket(kind, rep, &ab, c, x)
    };
    let terms = [inner(f1, f2, f3)?, inner(f2, f3, f1)?, inner(f3, f1, f2)?];
    let scale = terms.iter().fold(1.0_f64, |acc, t| acc.max(t.abs()));
    Ok(terms.iter().sum::<f64>().abs() / scale)
}
