//! Discrete evolution maps.
//!
//! Every implicit equation is solved by Newton iteration in exponential
//! coordinates `W = exp(xi)` started from a predictor (normally the previous
//! increment), so the branch of the multivalued correspondence that is followed
//! is the one continuously connected to the predictor.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::{legendre_reduced, FullLagrangian, ReducedLagrangian, Side, Trivialized, VariationSequence};
use crate::lie::{AlgebraVector, CoAlgebraVector, DriftControlledProduct, So3};
use crate::representation::RepVector;

/// Largest tolerated change of `|P|` across a single reduced step.
pub const ORBIT_DRIFT_TOL: f64 = 1e-9;

const POLISH_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonConfig {
    /// Residual norm at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Forward-difference step for the Jacobian.
    pub fd_h: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            fd_h: 1e-6,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter < 1 || !(self.fd_h > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid Newton configuration {self:?}")));
        }
        Ok(())
    }
}

/// Reduced phase point `(M, P)` (or `(m, p)` on the right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedState {
    pub m: CoAlgebraVector,
    pub p: RepVector,
}

impl ReducedState {
    pub fn new(m: CoAlgebraVector, p: RepVector) -> Self {
        Self { m, p }
    }

    /// Euclidean distance on the concatenation `(M, P)`.
    pub fn distance(&self, other: &ReducedState) -> f64 {
        ((self.m - other.m).norm_squared() + (self.p - other.p).norm_squared()).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
struct NewtonOutcome {
    solution: So3,
    residual: f64,
    iterations: usize,
}

/// Solves `residual(exp(xi)) = 0` starting from `xi = log(guess)`.
fn newton_on_group(residual: impl Fn(&So3) -> Result<Vector3<f64>>, guess: &So3, cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    cfg.validate()?;
    let eval = |xi: &AlgebraVector| -> Result<Vector3<f64>> {
        let r = residual(&So3::exp(xi))?;
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(Error::NonFinite { context: "Newton residual" })
        }
    };
    let newton_step = |xi: &AlgebraVector, r: &Vector3<f64>| -> Result<Option<AlgebraVector>> {
        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let probe = eval(&(xi + Vector3::ith(j, cfg.fd_h)))?;
            jac.set_column(j, &((probe - r) / cfg.fd_h));
        }
        Ok(jac.lu().solve(&-r))
    };

    let mut xi = guess.log()?;
    let mut r = eval(&xi)?;
    let mut norm = r.norm();
    let mut iterations = 0;
    while norm > cfg.tol {
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence { iterations, residual: norm });
        }
        iterations += 1;
        let Some(delta) = newton_step(&xi, &r)? else {
            return Err(Error::NoConvergence { iterations, residual: norm });
        };
        let mut t = 1.0;
        loop {
            let candidate = xi + delta * t;
            let rc = eval(&candidate)?;
            if rc.norm() < norm || t < 1.0 / 64.0 {
                xi = candidate;
                r = rc;
                norm = rc.norm();
                break;
            }
            t *= 0.5;
        }
    }
    // A couple of extra iterations drive the solution to roundoff, which keeps
    // finite differences of the resulting map clean.
    for _ in 0..POLISH_STEPS {
        if norm == 0.0 {
            break;
        }
        let Some(delta) = newton_step(&xi, &r)? else { break };
        let candidate = xi + delta;
        let rc = eval(&candidate)?;
        if rc.norm() < norm {
            xi = candidate;
            r = rc;
            norm = rc.norm();
        } else {
            break;
        }
    }
    Ok(NewtonOutcome {
        solution: So3::exp(&xi),
        residual: norm,
        iterations,
    })
}

/// Result of one full discrete Euler-Lagrange step.
#[derive(Debug, Clone, Copy)]
pub struct FullStep {
    pub g_next: So3,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual `d'_1 L(g_cur, g_next) + d'_2 L(g_prev, g_cur)` of the discrete
/// Euler-Lagrange equations (right-trivialized form of `grad_1 + grad_2 = 0`).
pub fn full_residual<L: FullLagrangian + ?Sized>(lag: &L, g_prev: &So3, g_cur: &So3, g_next: &So3) -> Result<Vector3<f64>> {
    Ok(lag.d_prime_1(g_cur, g_next)? + lag.d_prime_2(g_prev, g_cur)?)
}

/// Left-trivialized momentum `M_k = L*_{g_k} Pi_k = d'_2 L(g_{k-1}, g_k)`.
pub fn momentum_full<L: FullLagrangian + ?Sized>(lag: &L, g_prev: &So3, g_cur: &So3) -> Result<CoAlgebraVector> {
    lag.d_prime_2(g_prev, g_cur)
}

/// Solves the discrete Euler-Lagrange equations for `g_next`, predicting
/// `g_next = g_cur (g_prev^-1 g_cur)`.
pub fn step_full<L: FullLagrangian + ?Sized>(lag: &L, g_prev: &So3, g_cur: &So3, cfg: &NewtonConfig) -> Result<FullStep> {
    let back = lag.d_prime_2(g_prev, g_cur)?;
    let guess = g_prev.inverse().compose(g_cur);
    let out = newton_on_group(|w| Ok(lag.d_prime_1(g_cur, &g_cur.compose(w))? + back), &guess, cfg)?;
    Ok(FullStep {
        g_next: g_cur.compose(&out.solution),
        residual: out.residual,
        iterations: out.iterations,
    })
}

/// Result of one trivialized step on `G x g*`.
#[derive(Debug, Clone, Copy)]
pub struct TrivializedStep {
    pub g_next: So3,
    pub momentum: CoAlgebraVector,
    /// `W = g^-1 g_next` (left) or `w = g_next g^-1` (right).
    pub increment: So3,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual of the left- or right-trivialized momentum balance at increment `x`.
pub fn trivialized_residual<L: FullLagrangian>(lt: &Trivialized<L>, g: &So3, momentum: &CoAlgebraVector, x: &So3) -> Result<Vector3<f64>> {
    match lt.side() {
        // Ad*(W^-1) d'_W L - M - d'_g L
        Side::Left => Ok(x.inverse().coadjoint(&lt.d_prime_x(g, x)?) - momentum - lt.d_prime_g(g, x)?),
        // Ad*(w) d_w L - m - d_g L
        Side::Right => Ok(x.coadjoint(&lt.d_x(g, x)?) - momentum - lt.d_g(g, x)?),
    }
}

fn step_trivialized<L: FullLagrangian>(lt: &Trivialized<L>, g: &So3, momentum: &CoAlgebraVector, guess: &So3, cfg: &NewtonConfig) -> Result<TrivializedStep> {
    let out = newton_on_group(|x| trivialized_residual(lt, g, momentum, x), guess, cfg)?;
    let x = out.solution;
    let (g_next, momentum) = match lt.side() {
        Side::Left => (g.compose(&x), lt.d_prime_x(g, &x)?),
        Side::Right => (x.compose(g), lt.d_x(g, &x)?),
    };
    Ok(TrivializedStep {
        g_next,
        momentum,
        increment: x,
        residual: out.residual,
        iterations: out.iterations,
    })
}

/// `(g_k, M_k) -> (g_k W_k, d'_W L^(l)(g_k, W_k))` with `W_k` solving
/// `Ad*(W^-1) d'_W L^(l) = M_k + d'_g L^(l)`.
pub fn step_left_trivialized<L: FullLagrangian>(lt: &Trivialized<L>, g: &So3, m: &CoAlgebraVector, guess: &So3, cfg: &NewtonConfig) -> Result<TrivializedStep> {
    if lt.side() != Side::Left {
        return Err(Error::InvalidArgument("left step needs a left-trivialized Lagrangian".into()));
    }
    step_trivialized(lt, g, m, guess, cfg)
}

/// `(g_k, m_k) -> (w_k g_k, d_w L^(r)(g_k, w_k))` with `w_k` solving
/// `Ad*(w) d_w L^(r) = m_k + d_g L^(r)`.
pub fn step_right_trivialized<L: FullLagrangian>(
    lt: &Trivialized<L>,
    g: &So3,
    m: &CoAlgebraVector,
    guess: &So3,
    cfg: &NewtonConfig,
) -> Result<TrivializedStep> {
    if lt.side() != Side::Right {
        return Err(Error::InvalidArgument("right step needs a right-trivialized Lagrangian".into()));
    }
    step_trivialized(lt, g, m, guess, cfg)
}

/// Result of one discrete Euler-Poincare step.
#[derive(Debug, Clone, Copy)]
pub struct EpStep {
    pub state: ReducedState,
    /// `W_k` (left) or `w_k` (right), needed for reconstruction.
    pub increment: So3,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual of the discrete Euler-Poincare momentum balance at increment `x`:
/// left `Ad*(W^-1) d'_W Lambda - M - grad_P Lambda <> P`,
/// right `Ad*(w) d_w Lambda - m + grad_p Lambda <> p`.
pub fn ep_residual<R: ReducedLagrangian + ?Sized>(lag: &R, state: &ReducedState, x: &So3) -> Result<Vector3<f64>> {
    let rep = lag.representation();
    let force = rep.diamond(&lag.grad_p(x, &state.p)?, &state.p);
    match lag.side() {
        Side::Left => Ok(x.inverse().coadjoint(&lag.d_prime_w(x, &state.p)?) - state.m - force),
        Side::Right => Ok(x.coadjoint(&lag.d_w(x, &state.p)?) - state.m + force),
    }
}

fn step_ep<R: ReducedLagrangian + ?Sized>(lag: &R, state: &ReducedState, guess: &So3, cfg: &NewtonConfig) -> Result<EpStep> {
    let out = newton_on_group(|x| ep_residual(lag, state, x), guess, cfg)?;
    let x = out.solution;
    let rep = lag.representation();
    let p_next = match lag.side() {
        Side::Left => rep.act(&x.inverse(), &state.p),
        Side::Right => rep.act(&x, &state.p),
    };
    let drift = (p_next.norm() - state.p.norm()).abs();
    if drift > ORBIT_DRIFT_TOL {
        return Err(Error::OrbitDrift { drift });
    }
    Ok(EpStep {
        state: ReducedState::new(legendre_reduced(lag, &x, &state.p)?, p_next),
        increment: x,
        residual: out.residual,
        iterations: out.iterations,
    })
}

/// Left discrete Euler-Poincare map `(M_k, P_k) -> (M_{k+1}, P_{k+1})`:
/// `Ad*(W^-1) M_{k+1} = M_k + grad_P Lambda(W, P_k) <> P_k`, `M_{k+1} = d'_W Lambda(W, P_k)`,
/// `P_{k+1} = Phi(W^-1) P_k`.
pub fn step_ep_left<R: ReducedLagrangian + ?Sized>(lag: &R, state: &ReducedState, guess: &So3, cfg: &NewtonConfig) -> Result<EpStep> {
    if lag.side() != Side::Left {
        return Err(Error::InvalidArgument("left Euler-Poincare step needs a left-reduced Lagrangian".into()));
    }
    step_ep(lag, state, guess, cfg)
}

/// Right discrete Euler-Poincare map:
/// `Ad*(w) m_{k+1} = m_k - grad_p Lambda(w, p_k) <> p_k`, `m_{k+1} = d_w Lambda(w, p_k)`,
/// `p_{k+1} = Phi(w) p_k`.
pub fn step_ep_right<R: ReducedLagrangian + ?Sized>(lag: &R, state: &ReducedState, guess: &So3, cfg: &NewtonConfig) -> Result<EpStep> {
    if lag.side() != Side::Right {
        return Err(Error::InvalidArgument("right Euler-Poincare step needs a right-reduced Lagrangian".into()));
    }
    step_ep(lag, state, guess, cfg)
}

/// Dispatches to the left or right map according to the Lagrangian's side.
pub fn step_ep_any<R: ReducedLagrangian + ?Sized>(lag: &R, state: &ReducedState, guess: &So3, cfg: &NewtonConfig) -> Result<EpStep> {
    step_ep(lag, state, guess, cfg)
}

/// A reduced trajectory. `increments[k]` and `residuals[k]` belong to the step
/// from `states[k]` to `states[k + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub system: String,
    pub eps: f64,
    pub side: Side,
    pub states: Vec<ReducedState>,
    #[serde(skip)]
    pub increments: Vec<So3>,
    pub residuals: Vec<f64>,
}

impl Trajectory {
    pub fn step_count(&self) -> usize {
        self.increments.len()
    }
}

/// Integration stopped by a solver failure; `trajectory` holds every completed step.
#[derive(Debug, Clone)]
pub struct Interrupted {
    pub trajectory: Trajectory,
    pub error: Error,
}

/// Chains reduced steps, each predicted from the previous increment.
pub fn integrate_ep<R: ReducedLagrangian + ?Sized>(
    lag: &R,
    system: &str,
    eps: f64,
    start: ReducedState,
    n_steps: usize,
    first_guess: &So3,
    cfg: &NewtonConfig,
) -> std::result::Result<Trajectory, Box<Interrupted>> {
    let mut traj = Trajectory {
        system: system.to_string(),
        eps,
        side: lag.side(),
        states: vec![start],
        increments: Vec::with_capacity(n_steps),
        residuals: Vec::with_capacity(n_steps),
    };
    let mut guess = *first_guess;
    let mut state = start;
    for _ in 0..n_steps {
        match step_ep(lag, &state, &guess, cfg) {
            Ok(step) => {
                state = step.state;
                guess = step.increment;
                traj.states.push(step.state);
                traj.increments.push(step.increment);
                traj.residuals.push(step.residual);
            }
            Err(error) => return Err(Box::new(Interrupted { trajectory: traj, error })),
        }
    }
    Ok(traj)
}

/// Rebuilds configurations from increments: `g_{k+1} = g_k W_k` (left) or
/// `g_{k+1} = w_k g_k` (right), with periodic re-orthonormalization.
pub fn reconstruct(g0: &So3, increments: &[So3], side: Side) -> Vec<So3> {
    let mut chain = DriftControlledProduct::new(*g0);
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(*g0);
    for w in increments {
        out.push(match side {
            Side::Left => chain.push_right(w),
            Side::Right => chain.push_left(w),
        });
    }
    out
}

/// Inverse of [`reconstruct`]: `W_k = g_k^-1 g_{k+1}` or `w_k = g_{k+1} g_k^-1`.
pub fn extract_increments(configs: &[So3], side: Side) -> Vec<So3> {
    configs
        .windows(2)
        .map(|c| match side {
            Side::Left => c[0].inverse().compose(&c[1]),
            Side::Right => c[1].compose(&c[0].inverse()),
        })
        .collect()
}

/// Boundary data of the constrained variational problem: the initial reduced
/// state (its `P` is held fixed) and the total displacement `W_0 W_1 ... W_{n-1}`.
#[derive(Debug, Clone, Copy)]
pub struct VariationalBoundary {
    pub start: ReducedState,
    pub displacement: So3,
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub trajectory: Trajectory,
    /// Max-norm of the action gradient with respect to the interior variations.
    pub stationarity: f64,
}

/// Required stationarity of [`extremize_action_bruteforce`].
pub const BRUTE_FORCE_STATIONARITY: f64 = 1e-8;

/// Extremizes the reduced action `sum_k Lambda(W_k, P_k)` directly over interior
/// variations `g_k -> g_k exp(eta_k)` with fixed endpoints, using only
/// evaluations of `Lambda`. Gradients and the Hessian come from finite
/// differences of the action; the iteration is a damped Newton method on the
/// stacked stationarity system.
///
/// The initial guess is a uniform split of the displacement, so the result does
/// not depend on any stepper.
pub fn extremize_action_bruteforce<R: ReducedLagrangian + ?Sized>(
    lag: &R,
    boundary: &VariationalBoundary,
    n_steps: usize,
    cfg: &NewtonConfig,
) -> Result<BruteForceResult> {
    if lag.side() != Side::Left {
        return Err(Error::InvalidArgument("brute-force oracle is implemented for left reduction".into()));
    }
    if !(2..=8).contains(&n_steps) {
        return Err(Error::InvalidArgument(format!("n_steps must be in [2, 8], got {n_steps}")));
    }
    let rep = *lag.representation();
    let uniform = So3::exp(&(boundary.displacement.log()? / n_steps as f64));
    let mut pairs = Vec::with_capacity(n_steps);
    let mut p = boundary.start.p;
    for _ in 0..n_steps {
        pairs.push((uniform, p));
        p = rep.act(&uniform.inverse(), &p);
    }
    let dim = 3 * (n_steps - 1);
    let action = |pairs: &[(So3, RepVector)]| -> f64 { pairs.iter().map(|(w, p)| lag.eval(w, p)).sum() };
    let vary = |pairs: &[(So3, RepVector)], delta: &DVector<f64>| -> Result<Vec<(So3, RepVector)>> {
        let interior: Vec<AlgebraVector> = (0..n_steps - 1)
            .map(|k| Vector3::new(delta[3 * k], delta[3 * k + 1], delta[3 * k + 2]))
            .collect();
        VariationSequence::from_interior(&interior).apply_left(&rep, pairs)
    };
    let unit = |j: usize, h: f64| {
        let mut d = DVector::zeros(dim);
        d[j] = h;
        d
    };
    // fourth-order central differences of the action
    const H_GRAD: f64 = 1e-3;
    let gradient = |pairs: &[(So3, RepVector)]| -> Result<DVector<f64>> {
        let mut g = DVector::zeros(dim);
        for j in 0..dim {
            let f = |s: f64| -> Result<f64> { Ok(action(&vary(pairs, &unit(j, s * H_GRAD))?)) };
            g[j] = (8.0 * (f(1.0)? - f(-1.0)?) - (f(2.0)? - f(-2.0)?)) / (12.0 * H_GRAD);
        }
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::NonFinite { context: "action gradient" })
        }
    };
    const H_HESS: f64 = 1e-4;
    let hessian = |pairs: &[(So3, RepVector)]| -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let col = (gradient(&vary(pairs, &unit(j, H_HESS))?)? - gradient(&vary(pairs, &unit(j, -H_HESS))?)?) / (2.0 * H_HESS);
            h.set_column(j, &col);
        }
        Ok((&h + h.transpose()) * 0.5)
    };

    let target = (cfg.tol * 10.0).min(BRUTE_FORCE_STATIONARITY * 1e-3);
    let mut grad = gradient(&pairs)?;
    let mut norm = grad.amax();
    let mut iterations = 0;
    while norm > target && iterations < cfg.max_iter {
        iterations += 1;
        let Some(delta) = hessian(&pairs)?.lu().solve(&-&grad) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        while t >= 1.0 / 64.0 {
            let candidate = vary(&pairs, &(&delta * t))?;
            let g = gradient(&candidate)?;
            if g.amax() < norm {
                pairs = candidate;
                grad = g;
                norm = grad.amax();
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(norm <= BRUTE_FORCE_STATIONARITY) {
        return Err(Error::NoConvergence { iterations, residual: norm });
    }

    let mut states = vec![boundary.start];
    for (w, p) in &pairs {
        states.push(ReducedState::new(legendre_reduced(lag, w, p)?, rep.act(&w.inverse(), p)));
    }
    Ok(BruteForceResult {
        trajectory: Trajectory {
            system: "brute-force".into(),
            eps: f64::NAN,
            side: Side::Left,
            states,
            increments: pairs.iter().map(|(w, _)| *w).collect(),
            residuals: vec![norm; n_steps],
        },
        stationarity: norm,
    })
}
