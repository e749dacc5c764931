//! Continuous-time Euler-Poincare dynamics, the discretizations that approximate
//! them, and the consistency/convergence machinery.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{gradient_fd, ReducedLagrangian, Side};
use crate::lie::{ad_star, right_jacobian, right_jacobian_inv, vee, AlgebraVector, CoAlgebraVector, So3};
use crate::representation::{RepDual, RepVector, Representation};
use crate::stepper::{integrate_ep, NewtonConfig, ReducedState};

/// Reduced continuous Lagrangian `L(Omega, P)` (or `L(omega, p)` on the right).
pub trait ContinuousLagrangian: Send + Sync {
    fn representation(&self) -> &Representation;

    fn eval(&self, omega: &AlgebraVector, p: &RepVector) -> f64;

    fn grad_omega(&self, omega: &AlgebraVector, p: &RepVector) -> Result<CoAlgebraVector> {
        gradient_fd(|o| self.eval(o, p), omega)
    }

    fn grad_p(&self, omega: &AlgebraVector, p: &RepVector) -> Result<RepDual> {
        gradient_fd(|q| self.eval(omega, q), p)
    }

    /// Inverse of the continuous Legendre relation `M = grad_Omega L(Omega, P)`.
    fn velocity(&self, m: &CoAlgebraVector, p: &RepVector) -> Result<AlgebraVector>;

    /// The inertia of a Lagrangian of the form `1/2 <J Omega, Omega> + U(P)`, if it is one.
    fn inertia(&self) -> Option<Matrix3<f64>> {
        None
    }
}

/// `L(Omega, P) = 1/2 <J Omega, Omega> - <c, P>`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLagrangian {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    potential: Vector3<f64>,
    rep: Representation,
}

impl QuadraticLagrangian {
    /// Fails with `LegendreNotInvertible` unless `inertia` is symmetric positive definite.
    pub fn new(inertia: Matrix3<f64>, potential: Vector3<f64>, rep: Representation) -> Result<Self> {
        check_spd(&inertia)?;
        let inertia_inv = inertia.try_inverse().ok_or(Error::LegendreNotInvertible)?;
        Ok(Self {
            inertia,
            inertia_inv,
            potential,
            rep,
        })
    }

    pub fn potential(&self) -> &Vector3<f64> {
        &self.potential
    }
}

pub(crate) fn check_spd(j: &Matrix3<f64>) -> Result<()> {
    if !j.iter().all(|v| v.is_finite()) || (j - j.transpose()).amax() > 1e-12 * j.amax().max(1.0) {
        return Err(Error::LegendreNotInvertible);
    }
    let eig = j.symmetric_eigenvalues();
    if eig.iter().all(|l| *l > 1e-12 * j.amax()) {
        Ok(())
    } else {
        Err(Error::LegendreNotInvertible)
    }
}

impl ContinuousLagrangian for QuadraticLagrangian {
    fn representation(&self) -> &Representation {
        &self.rep
    }

    fn eval(&self, omega: &AlgebraVector, p: &RepVector) -> f64 {
        0.5 * omega.dot(&(self.inertia * omega)) - self.potential.dot(p)
    }

    fn grad_omega(&self, omega: &AlgebraVector, _p: &RepVector) -> Result<CoAlgebraVector> {
        Ok(self.inertia * omega)
    }

    fn grad_p(&self, _omega: &AlgebraVector, _p: &RepVector) -> Result<RepDual> {
        Ok(-self.potential)
    }

    fn velocity(&self, m: &CoAlgebraVector, _p: &RepVector) -> Result<AlgebraVector> {
        Ok(self.inertia_inv * m)
    }

    fn inertia(&self) -> Option<Matrix3<f64>> {
        Some(self.inertia)
    }
}

/// Continuous Euler-Poincare vector field.
///
/// Left: `M' = ad*(Omega) M + grad_P L <> P`, `P' = -phi(Omega) P`.
/// Right: `m' = -ad*(omega) m - grad_p L <> p`, `p' = phi(omega) p`.
pub fn ep_vector_field<C: ContinuousLagrangian + ?Sized>(side: Side, lc: &C, state: &ReducedState) -> Result<ReducedState> {
    let rep = lc.representation();
    let omega = lc.velocity(&state.m, &state.p)?;
    let force = rep.diamond(&lc.grad_p(&omega, &state.p)?, &state.p);
    let coadj = ad_star(&omega, &state.m);
    let out = match side {
        Side::Left => ReducedState::new(coadj + force, -rep.act_algebra(&omega, &state.p)),
        Side::Right => ReducedState::new(-coadj - force, rep.act_algebra(&omega, &state.p)),
    };
    if out.m.iter().chain(out.p.iter()).all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite { context: "vector field" })
    }
}

/// Continuous energy `<M, Omega> - L(Omega, P)`.
pub fn continuous_energy<C: ContinuousLagrangian + ?Sized>(lc: &C, state: &ReducedState) -> Result<f64> {
    let omega = lc.velocity(&state.m, &state.p)?;
    Ok(state.m.dot(&omega) - lc.eval(&omega, &state.p))
}

fn pack(s: &ReducedState) -> Vector6<f64> {
    Vector6::new(s.m.x, s.m.y, s.m.z, s.p.x, s.p.y, s.p.z)
}

fn unpack(v: &Vector6<f64>) -> ReducedState {
    ReducedState::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
}

/// Uniformly sampled continuous trajectory.
#[derive(Debug, Clone)]
pub struct ContinuousTrajectory {
    pub dt: f64,
    pub states: Vec<ReducedState>,
}

impl ContinuousTrajectory {
    pub fn t_end(&self) -> f64 {
        self.dt * (self.states.len() - 1) as f64
    }

    /// State at time `t`, which must lie on the sampling grid.
    pub fn at(&self, t: f64) -> Result<&ReducedState> {
        let x = t / self.dt;
        let k = x.round();
        if (x - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.states.len() {
            return Err(Error::InvalidArgument(format!("time {t} is not on the reference grid")));
        }
        Ok(&self.states[k as usize])
    }
}

/// Classical fourth-order Runge-Kutta from `0` to `t_end`. The step is adjusted
/// to `t_end / round(t_end / dt)` so that `t_end` is hit exactly.
pub fn rk4_integrate(field: impl Fn(&ReducedState) -> Result<ReducedState>, start: ReducedState, t_end: f64, dt: f64) -> Result<ContinuousTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rk4 needs dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let n = ((t_end / dt).round() as usize).max(if t_end > 0.0 { 1 } else { 0 });
    let h = if n == 0 { dt } else { t_end / n as f64 };
    let f = |y: &Vector6<f64>| -> Result<Vector6<f64>> { Ok(pack(&field(&unpack(y))?)) };
    let mut states = Vec::with_capacity(n + 1);
    states.push(start);
    let mut y = pack(&start);
    for _ in 0..n {
        let k1 = f(&y)?;
        let k2 = f(&(y + k1 * (0.5 * h)))?;
        let k3 = f(&(y + k2 * (0.5 * h)))?;
        let k4 = f(&(y + k3 * h))?;
        y += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "rk4 state" });
        }
        states.push(unpack(&y));
    }
    Ok(ContinuousTrajectory { dt: h, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `Lambda(W, P) = eps L(log W / eps, P)`.
    Log,
    /// As `Log`, with `P` replaced by its half-step transport `Phi(exp(-log W / 2)) P`
    /// (left) or `Phi(exp(log w / 2)) p` (right).
    Midpoint,
    /// `tr((I - W) J_d) / eps + eps U(P)` with `J_d = tr(J)/2 I - J`; needs a
    /// quadratic kinetic term. Experimental, carries no accuracy claims.
    Trace,
}

/// A discrete reduced Lagrangian obtained from a continuous one.
#[derive(Debug, Clone)]
pub struct Discretized<C> {
    cont: C,
    eps: f64,
    scheme: Scheme,
    side: Side,
    rep: Representation,
    trace_inertia: Option<Matrix3<f64>>,
}

pub fn discretize<C: ContinuousLagrangian>(cont: C, eps: f64, scheme: Scheme, side: Side) -> Result<Discretized<C>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eps}")));
    }
    let trace_inertia = match scheme {
        Scheme::Trace => {
            let j = cont
                .inertia()
                .ok_or_else(|| Error::InvalidArgument("trace scheme needs a quadratic kinetic energy".into()))?;
            Some(Matrix3::identity() * (0.5 * j.trace()) - j)
        }
        _ => None,
    };
    let rep = *cont.representation();
    Ok(Discretized {
        cont,
        eps,
        scheme,
        side,
        rep,
        trace_inertia,
    })
}

impl<C: ContinuousLagrangian> Discretized<C> {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn continuous(&self) -> &C {
        &self.cont
    }

    fn half_sign(&self) -> f64 {
        match self.side {
            Side::Left => -0.5,
            Side::Right => 0.5,
        }
    }

    /// Gradient of `Lambda` with respect to exponential coordinates `xi = log W`,
    /// together with `grad_P Lambda`.
    fn chart_gradients(&self, xi: &AlgebraVector, p: &RepVector) -> Result<(Vector3<f64>, RepDual)> {
        let omega = xi / self.eps;
        match self.scheme {
            Scheme::Log => Ok((self.cont.grad_omega(&omega, p)?, self.cont.grad_p(&omega, p)? * self.eps)),
            Scheme::Midpoint => {
                let s = self.half_sign();
                let r = So3::exp(&(xi * s));
                let q = self.rep.act(&r, p);
                let gp = self.cont.grad_p(&omega, &q)?;
                // d(Phi(exp(s xi)) P)/d xi = -s Phi(R) hat(P) Jr(s xi) for both shipped actions
                let back = r.inverse().act(&gp);
                let g_xi = self.cont.grad_omega(&omega, &q)? + right_jacobian(&(xi * s)).transpose() * p.cross(&back) * (self.eps * s);
                Ok((g_xi, back * self.eps))
            }
            Scheme::Trace => unreachable!("trace scheme has closed-form derivatives"),
        }
    }
}

impl<C: ContinuousLagrangian> ReducedLagrangian for Discretized<C> {
    fn side(&self) -> Side {
        self.side
    }

    fn representation(&self) -> &Representation {
        &self.rep
    }

    fn eval(&self, w: &So3, p: &RepVector) -> f64 {
        if let Some(jd) = &self.trace_inertia {
            let kinetic = ((Matrix3::identity() - w.matrix()) * jd).trace() / self.eps;
            return kinetic + self.eps * self.cont.eval(&Vector3::zeros(), p);
        }
        let Ok(xi) = w.log() else { return f64::NAN };
        let q = match self.scheme {
            Scheme::Midpoint => self.rep.act(&So3::exp(&(xi * self.half_sign())), p),
            _ => *p,
        };
        self.eps * self.cont.eval(&(xi / self.eps), &q)
    }

    fn d_prime_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        if let Some(jd) = &self.trace_inertia {
            return Ok(vee(&(jd * w.matrix())) * (2.0 / self.eps));
        }
        let xi = w.log()?;
        let (g_xi, _) = self.chart_gradients(&xi, p)?;
        Ok(right_jacobian_inv(&xi).transpose() * g_xi)
    }

    fn d_w(&self, w: &So3, p: &RepVector) -> Result<CoAlgebraVector> {
        if let Some(jd) = &self.trace_inertia {
            return Ok(vee(&(w.matrix() * jd)) * (2.0 / self.eps));
        }
        let xi = w.log()?;
        let (g_xi, _) = self.chart_gradients(&xi, p)?;
        Ok(right_jacobian_inv(&xi) * g_xi)
    }

    fn grad_p(&self, w: &So3, p: &RepVector) -> Result<RepDual> {
        if self.trace_inertia.is_some() {
            return Ok(self.cont.grad_p(&Vector3::zeros(), p)? * self.eps);
        }
        let xi = w.log()?;
        Ok(self.chart_gradients(&xi, p)?.1)
    }
}

/// Initial increment guess `exp(eps Omega_0)` from the continuous Legendre relation.
pub fn initial_guess<C: ContinuousLagrangian + ?Sized>(lc: &C, state: &ReducedState, eps: f64) -> Result<So3> {
    Ok(So3::exp(&(lc.velocity(&state.m, &state.p)? * eps)))
}

/// Distance between the discrete state after one step of size `eps` and the
/// continuous flow over time `eps`, for each `eps`.
pub fn one_step_errors<C, R, F>(lc: &C, side: Side, make: F, start: &ReducedState, epsilons: &[f64], cfg: &NewtonConfig) -> Result<Vec<f64>>
where
    C: ContinuousLagrangian + ?Sized,
    R: ReducedLagrangian,
    F: Fn(f64) -> Result<R>,
{
    epsilons
        .iter()
        .map(|&eps| {
            let lag = make(eps)?;
            let guess = initial_guess(lc, start, eps)?;
            let traj = integrate_ep(&lag, "one-step", eps, *start, 1, &guess, cfg).map_err(|e| e.error)?;
            let exact = rk4_integrate(|s| ep_vector_field(side, lc, s), *start, eps, eps / 200.0)?;
            Ok(traj.states[1].distance(exact.states.last().unwrap()))
        })
        .collect()
}

/// Least-squares slope of `log e` against `log eps`.
pub fn fit_slope(epsilons: &[f64], errors: &[f64]) -> Option<f64> {
    if epsilons.len() != errors.len() || epsilons.len() < 2 || errors.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let n = epsilons.len() as f64;
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Errors at or below this level count as exact agreement.
pub const EXACT_THRESHOLD: f64 = 1e-10;
pub const MIN_SLOPE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub error: f64,
    /// `error(previous eps) / error(eps)`; absent on the first row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub slope: Option<f64>,
    /// All errors at or below [`EXACT_THRESHOLD`]; the slope test is skipped.
    pub exact: bool,
    /// Errors decrease strictly under refinement.
    pub monotone: bool,
    pub reference_dt: f64,
    /// Difference between the reference and a run at twice its step.
    pub reference_self_error: f64,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,error,ratio\n");
        for row in &self.rows {
            let ratio = row.ratio.map(|r| format!("{r:.16e}")).unwrap_or_default();
            out.push_str(&format!("{:.16e},{:.16e},{}\n", row.eps, row.error, ratio));
        }
        out
    }
}

/// Full-trajectory convergence of the discrete flow towards the continuous one.
///
/// `epsilons` must be strictly decreasing with at least three entries. Errors are
/// the maximum state distance over the output times `j * epsilons[0]` up to `t_end`.
pub fn convergence_study<C, R, F>(
    lc: &C,
    side: Side,
    make: F,
    start: &ReducedState,
    t_end: f64,
    epsilons: &[f64],
    cfg: &NewtonConfig,
) -> Result<ConvergenceReport>
where
    C: ContinuousLagrangian + ?Sized,
    R: ReducedLagrangian,
    F: Fn(f64) -> Result<R> + Sync,
{
    validate_epsilons(epsilons)?;
    let eps_max = epsilons[0];
    let eps_min = *epsilons.last().unwrap();
    let n_out = (t_end / eps_max).round() as usize;
    if n_out == 0 || ((t_end / eps_max) - n_out as f64).abs() > 1e-9 {
        return Err(Error::InvalidArgument("t_end must be a positive multiple of the largest step".into()));
    }
    for &eps in epsilons {
        let r = eps_max / eps;
        if (r - r.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("step {eps} does not divide {eps_max}")));
        }
    }
    let reference_dt = eps_min / 100.0;
    let field = |s: &ReducedState| ep_vector_field(side, lc, s);
    let reference = rk4_integrate(field, *start, t_end, reference_dt)?;
    let coarse = rk4_integrate(field, *start, t_end, 2.0 * reference_dt)?;
    let reference_self_error = reference.states.last().unwrap().distance(coarse.states.last().unwrap());

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let lag = make(eps)?;
        let stride = (eps_max / eps).round() as usize;
        let guess = initial_guess(lc, start, eps)?;
        let traj = integrate_ep(&lag, "convergence", eps, *start, n_out * stride, &guess, cfg).map_err(|e| e.error)?;
        let mut error: f64 = 0.0;
        for j in 0..=n_out {
            let exact = reference.at(j as f64 * eps_max)?;
            error = error.max(traj.states[j * stride].distance(exact));
        }
        let ratio = rows.last().map(|prev| prev.error / error);
        rows.push(ConvergenceRow { eps, error, ratio });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let exact = errs.iter().all(|e| *e <= EXACT_THRESHOLD);
    let slope = if exact { None } else { fit_slope(&eps, &errs) };
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = exact || slope.is_some_and(|s| s >= MIN_SLOPE);
    Ok(ConvergenceReport {
        rows,
        slope,
        exact,
        monotone,
        reference_dt,
        reference_self_error,
        pass,
    })
}

pub fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 step sizes, got {}", epsilons.len())));
    }
    if epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument("step sizes must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("step sizes must be strictly decreasing".into()));
    }
    Ok(())
}
