//! The free rigid body and the heavy top.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::continuum::{check_spd, discretize, Discretized, QuadraticLagrangian};
use crate::error::{Error, Result};
use crate::lagrangian::{reduce, trivialize, ReducedAsFull, ReducedLagrangian, Side};
use crate::representation::Representation;
use crate::stepper::Trajectory;

pub use crate::continuum::Scheme;

/// Tolerance on unit-length parameters.
const UNIT_TOL: f64 = 1e-12;

fn check_unit(v: &Vector3<f64>, name: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!("{name} must have unit length, got |{name}| = {}", v.norm())));
    }
    Ok(())
}

/// Free rigid body. The advected variable lives in the adjoint representation and
/// does not enter the Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyParams {
    pub inertia: Matrix3<f64>,
    pub anchor: Vector3<f64>,
}

impl RigidBodyParams {
    pub fn new(inertia: Matrix3<f64>) -> Result<Self> {
        Self::with_anchor(inertia, Vector3::z())
    }

    pub fn with_anchor(inertia: Matrix3<f64>, anchor: Vector3<f64>) -> Result<Self> {
        check_spd(&inertia).map_err(|_| Error::InvalidArgument("inertia must be symmetric positive definite".into()))?;
        check_unit(&anchor, "anchor")?;
        Ok(Self { inertia, anchor })
    }

    pub fn representation(&self) -> Representation {
        Representation::adjoint(self.anchor)
    }

    /// `L(Omega) = 1/2 <J Omega, Omega>`.
    pub fn continuous(&self) -> QuadraticLagrangian {
        QuadraticLagrangian::new(self.inertia, Vector3::zeros(), self.representation()).expect("validated inertia")
    }

    pub fn discrete(&self, eps: f64, scheme: Scheme, side: Side) -> Result<Discretized<QuadraticLagrangian>> {
        discretize(self.continuous(), eps, scheme, side)
    }
}

/// Heavy top: `L(Omega, P) = 1/2 <J Omega, Omega> - mgl <chi, P>` with `P` the
/// gravity direction seen from the body, in the standard representation anchored at `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyTopParams {
    pub inertia: Matrix3<f64>,
    pub mgl: f64,
    pub chi: Vector3<f64>,
    pub anchor: Vector3<f64>,
}

impl Default for HeavyTopParams {
    fn default() -> Self {
        Self {
            inertia: Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0)),
            mgl: 1.0,
            chi: Vector3::z(),
            anchor: Vector3::z(),
        }
    }
}

impl HeavyTopParams {
    pub fn validate(&self) -> Result<()> {
        check_spd(&self.inertia).map_err(|_| Error::InvalidArgument("inertia must be symmetric positive definite".into()))?;
        if !self.mgl.is_finite() {
            return Err(Error::InvalidArgument("mgl must be finite".into()));
        }
        check_unit(&self.chi, "chi")?;
        check_unit(&self.anchor, "anchor")
    }

    pub fn representation(&self) -> Representation {
        Representation::standard(self.anchor)
    }

    pub fn continuous(&self) -> Result<QuadraticLagrangian> {
        self.validate()?;
        QuadraticLagrangian::new(self.inertia, self.chi * self.mgl, self.representation())
    }

    pub fn discrete(&self, eps: f64, scheme: Scheme, side: Side) -> Result<Discretized<QuadraticLagrangian>> {
        discretize(self.continuous()?, eps, scheme, side)
    }
}

/// Continuous and discrete free-body Lagrangians.
pub fn make_rigid_body(params: &RigidBodyParams, eps: f64, scheme: Scheme, side: Side) -> Result<(QuadraticLagrangian, Discretized<QuadraticLagrangian>)> {
    Ok((params.continuous(), params.discrete(eps, scheme, side)?))
}

/// Continuous and discrete heavy-top Lagrangians. The induced full Lagrangian is
/// audited for invariance under the isotropy subgroup of the anchor.
pub fn make_heavy_top(params: &HeavyTopParams, eps: f64, scheme: Scheme, side: Side) -> Result<(QuadraticLagrangian, Discretized<QuadraticLagrangian>)> {
    let discrete = params.discrete(eps, scheme, side)?;
    audit_invariance(&discrete)?;
    Ok((params.continuous()?, discrete))
}

/// Runs the reduction audit on the full Lagrangian induced by `lag` and returns
/// the largest deviation found.
pub fn audit_invariance<R: ReducedLagrangian + Clone>(lag: &R) -> Result<f64> {
    let rep = *lag.representation();
    let reduced = reduce(trivialize(ReducedAsFull::new(lag.clone()), lag.side()), rep)?;
    Ok(reduced.audit_deviation())
}

/// Either shipped system, as selected by configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    RigidBody(RigidBodyParams),
    HeavyTop(HeavyTopParams),
}

impl System {
    pub fn name(&self) -> &'static str {
        match self {
            System::RigidBody(_) => "rigid_body",
            System::HeavyTop(_) => "heavy_top",
        }
    }

    pub fn representation(&self) -> Representation {
        match self {
            System::RigidBody(p) => p.representation(),
            System::HeavyTop(p) => p.representation(),
        }
    }

    pub fn continuous(&self) -> Result<QuadraticLagrangian> {
        match self {
            System::RigidBody(p) => Ok(p.continuous()),
            System::HeavyTop(p) => p.continuous(),
        }
    }

    pub fn discrete(&self, eps: f64, scheme: Scheme, side: Side) -> Result<Discretized<QuadraticLagrangian>> {
        match self {
            System::RigidBody(p) => p.discrete(eps, scheme, side),
            System::HeavyTop(p) => make_heavy_top(p, eps, scheme, side).map(|(_, d)| d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub values: Vec<f64>,
    /// `max_k |v_k - v_0|`.
    pub max_drift: f64,
}

impl Series {
    fn new(values: Vec<f64>) -> Self {
        let first = values.first().copied().unwrap_or(0.0);
        let max_drift = values.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
        Self { values, max_drift }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub system: String,
    pub eps: f64,
    pub steps: usize,
    pub p_norm: Series,
    /// `<M, P>`, heavy top only.
    pub pairing: Option<Series>,
    /// `|M|`, free body only.
    pub m_norm: Option<Series>,
    /// `<M_k, log(W_k) / eps> - Lambda(W_k, P_k) / eps`, one value per step. Reported only.
    pub energy_proxy: Series,
}

/// Per-step invariant series of a trajectory produced with `lag`.
pub fn invariant_report<R: ReducedLagrangian + ?Sized>(system: &System, lag: &R, traj: &Trajectory) -> Result<InvariantReport> {
    let p_norm = Series::new(traj.states.iter().map(|s| s.p.norm()).collect());
    let pairing = matches!(system, System::HeavyTop(_)).then(|| Series::new(traj.states.iter().map(|s| s.m.dot(&s.p)).collect()));
    let m_norm = matches!(system, System::RigidBody(_)).then(|| Series::new(traj.states.iter().map(|s| s.m.norm()).collect()));
    let eps = traj.eps;
    let energy = traj
        .increments
        .iter()
        .zip(&traj.states)
        .map(|(w, s)| Ok(s.m.dot(&(w.log()? / eps)) - lag.eval(w, &s.p) / eps))
        .collect::<Result<Vec<f64>>>()?;
    Ok(InvariantReport {
        system: system.name().to_string(),
        eps,
        steps: traj.step_count(),
        p_norm,
        pairing,
        m_norm,
        energy_proxy: Series::new(energy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::ContinuousLagrangian;
    use crate::lie::So3;
    use crate::sample::Sampler;
    use crate::stepper::{integrate_ep, NewtonConfig, ReducedState};

    #[test]
    fn parameter_validation() {
        assert!(HeavyTopParams::default().validate().is_ok());
        let bad = HeavyTopParams {
            chi: Vector3::new(0.0, 0.0, 2.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = HeavyTopParams {
            inertia: Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 2.0)),
            ..Default::default()
        };
        assert!(bad.continuous().is_err());
        assert!(RigidBodyParams::new(Matrix3::zeros()).is_err());
    }

    #[test]
    fn rigid_body_momentum_is_j_omega() {
        let j = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let (lc, _) = make_rigid_body(&RigidBodyParams::new(j).unwrap(), 0.01, Scheme::Log, Side::Left).unwrap();
        let o = Vector3::new(0.3, -0.1, 0.5);
        assert_eq!(lc.grad_omega(&o, &Vector3::z()).unwrap(), j * o);
    }

    #[test]
    fn heavy_top_audit_passes() {
        let params = HeavyTopParams::default();
        for side in [Side::Left, Side::Right] {
            let d = params.discrete(0.01, Scheme::Log, side).unwrap();
            assert!(audit_invariance(&d).unwrap() < 1e-12);
        }
        assert!(make_heavy_top(&params, 0.01, Scheme::Midpoint, Side::Left).is_ok());
    }

    #[test]
    fn isotropic_body_spins_uniformly() {
        let params = RigidBodyParams::new(Matrix3::identity() * 1.5).unwrap();
        let lag = params.discrete(0.01, Scheme::Log, Side::Left).unwrap();
        let start = ReducedState::new(Vector3::new(0.4, -1.0, 2.0), Vector3::z());
        let traj = integrate_ep(&lag, "rigid_body", 0.01, start, 200, &So3::identity(), &NewtonConfig::default()).unwrap();
        let w0 = traj.increments[0];
        for w in &traj.increments {
            assert!((w.matrix() - w0.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn free_body_matches_heavy_top_without_gravity() {
        let j = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let body = RigidBodyParams::new(j).unwrap().discrete(0.02, Scheme::Log, Side::Left).unwrap();
        let top = HeavyTopParams {
            inertia: j,
            mgl: 0.0,
            ..Default::default()
        }
        .discrete(0.02, Scheme::Log, Side::Left)
        .unwrap();
        let start = ReducedState::new(Vector3::new(0.7, 1.1, -0.4), Vector3::z());
        let cfg = NewtonConfig::default();
        let a = integrate_ep(&body, "rigid_body", 0.02, start, 300, &So3::identity(), &cfg).unwrap();
        let b = integrate_ep(&top, "heavy_top", 0.02, start, 300, &So3::identity(), &cfg).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x.m - y.m).norm() < 1e-10);
        }
    }

    #[test]
    fn report_fields_follow_system() {
        let params = HeavyTopParams::default();
        let lag = params.discrete(0.01, Scheme::Log, Side::Left).unwrap();
        let mut s = Sampler::new(70);
        let start = ReducedState::new(s.vector(2.0), s.unit_vector());
        let traj = integrate_ep(&lag, "heavy_top", 0.01, start, 100, &So3::identity(), &NewtonConfig::default()).unwrap();
        let report = invariant_report(&System::HeavyTop(params), &lag, &traj).unwrap();
        assert!(report.pairing.is_some() && report.m_norm.is_none());
        assert_eq!(report.p_norm.values.len(), 101);
        assert_eq!(report.energy_proxy.values.len(), 100);
        assert!(report.p_norm.max_drift < 1e-12);
        assert!(report.pairing.unwrap().max_drift < 1e-11);
    }
}
