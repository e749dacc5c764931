//! Property checks run by `depi verify`.
//!
//! Every check is a pure function of the configuration and the seed; checks run
//! concurrently but are reported in a fixed order.

use depi_core::continuum::ContinuousLagrangian;
use depi_core::lagrangian::{gradient_fd, lie_deriv_right, reduce, trivialize, FnLagrangian, FullLagrangian, Mirrored, ReducedAsFull, ReducedLagrangian, Side};
use depi_core::lie::{ad, ad_star, pairing, So3};
use depi_core::poisson::{
    bracket, verify_jacobi, verify_poisson_map, BracketKind, GroupQuadratic, MomentumPairing, Observable, OrbitRadius, PhasePoint, Quadratic,
};
use depi_core::representation::{RepKind, Representation};
use depi_core::sample::Sampler;
use depi_core::stepper::{
    extremize_action_bruteforce, integrate_ep, step_ep_any, step_left_trivialized, step_right_trivialized, NewtonConfig, ReducedState, VariationalBoundary,
};
use depi_core::systems::invariant_report;
use depi_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

pub const IDENTITY_SAMPLES: usize = 1000;
pub const ANALYTIC_TOL: f64 = 1e-12;
pub const FD_TOL: f64 = 1e-6;
pub const POISSON_PAIRS: usize = 20;
pub const POISSON_POINTS: usize = 5;
pub const POISSON_TOL: f64 = 1e-5;
pub const JACOBI_TRIPLES: usize = 50;
pub const JACOBI_QUADRATIC_TOL: f64 = 1e-5;
pub const JACOBI_LINEAR_TOL: f64 = 1e-8;
pub const CASIMIR_TOL: f64 = 1e-6;
pub const VARIATIONAL_STEPS: usize = 5;
pub const VARIATIONAL_TOL: f64 = 1e-8;
pub const CONSISTENCY_STEPS: usize = 100;
pub const CONSISTENCY_TOL: f64 = 1e-9;
pub const WELL_DEFINED_TOL: f64 = 1e-12;
pub const ORBIT_TOL: f64 = 1e-12;
pub const PAIRING_TOL: f64 = 1e-10;
pub const M_NORM_TOL: f64 = 1e-9;
/// Scale applied to `M` by the negative-control map.
pub const CORRUPTION: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Worst observed residual.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: value < threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    fn errored(name: &str, threshold: f64, err: &Error) -> Self {
        Self {
            name: name.into(),
            pass: false,
            value: f64::NAN,
            threshold,
            detail: format!("error: {err}"),
        }
    }

    fn from_result(name: &str, threshold: f64, r: Result<(f64, String)>) -> Self {
        match r {
            Ok((value, detail)) => Self::measured(name, value, threshold, detail),
            Err(e) => Self::errored(name, threshold, &e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Replace the maps under test by versions that scale `M` by [`CORRUPTION`].
    pub corrupt_map: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub system: String,
    pub seed: u64,
    pub corrupt_map: bool,
    pub pass: bool,
    pub failed: Vec<String>,
    pub checks: Vec<CheckResult>,
}

/// Each entry derives its own sampler seed from the suite seed so checks are
/// independent of execution order.
fn sampler(seed: u64, salt: u64) -> Sampler {
    Sampler::new(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1.0)
}

/// Group and algebra dualities: Ad is a homomorphism, Ad* and ad* are the
/// pairing adjoints of Ad and ad, and ad / ad* are derivatives of Ad / Ad*.
pub fn lie_identities(seed: u64) -> (CheckResult, CheckResult) {
    let mut s = sampler(seed, 1);
    let (mut analytic, mut fd): (f64, f64) = (0.0, 0.0);
    let h = 1e-5;
    for _ in 0..IDENTITY_SAMPLES {
        let (g, k) = (s.rotation(), s.rotation());
        let (xi, eta, zeta) = (s.vector(1.0), s.vector(1.0), s.vector(1.0));
        analytic = analytic
            .max((g.compose(&k).adjoint(&eta) - g.adjoint(&k.adjoint(&eta))).norm())
            .max((pairing(&g.coadjoint(&xi), &eta) - pairing(&xi, &g.adjoint(&eta))).abs())
            .max((pairing(&ad_star(&eta, &xi), &zeta) - pairing(&xi, &ad(&eta, &zeta))).abs())
            .max((g.adjoint(&ad(&eta, &zeta)) - ad(&g.adjoint(&eta), &g.adjoint(&zeta))).norm());
        let (ep, em) = (So3::exp(&(eta * h)), So3::exp(&(eta * -h)));
        let d_ad = (ep.adjoint(&zeta) - em.adjoint(&zeta)) / (2.0 * h);
        let d_coad = (ep.coadjoint(&xi) - em.coadjoint(&xi)) / (2.0 * h);
        fd = fd
            .max(rel((d_ad - ad(&eta, &zeta)).norm(), ad(&eta, &zeta).norm()))
            .max(rel((d_coad - ad_star(&eta, &xi)).norm(), ad_star(&eta, &xi).norm()));
    }
    let detail = format!("{IDENTITY_SAMPLES} samples");
    (
        CheckResult::measured("lie_identities_analytic", analytic, ANALYTIC_TOL, detail.clone()),
        CheckResult::measured("lie_identities_fd", fd, FD_TOL, detail),
    )
}

/// Diamond and dual-action identities for both shipped representations.
pub fn representation_identities(seed: u64) -> (CheckResult, CheckResult) {
    let mut s = sampler(seed, 2);
    let (mut analytic, mut fd): (f64, f64) = (0.0, 0.0);
    let h = 1e-5;
    for kind in [RepKind::Standard, RepKind::Adjoint] {
        let rep = Representation::new(kind, s.unit_vector());
        for _ in 0..IDENTITY_SAMPLES {
            let (xi, y, v) = (s.vector(1.0), s.vector(1.0), s.vector(1.0));
            analytic = analytic
                .max((rep.diamond(&y, &v).dot(&xi) + y.dot(&rep.act_algebra(&xi, &v))).abs())
                .max((rep.act_dual(&xi, &y).dot(&v) - y.dot(&rep.act_algebra(&xi, &v))).abs());
            let flow = |t: f64| rep.act(&So3::exp(&(xi * t)), &v);
            let d_phi = (flow(h) - flow(-h)) / (2.0 * h);
            let exact = rep.act_algebra(&xi, &v);
            fd = fd.max(rel((d_phi - exact).norm(), exact.norm()));
            let diamond_fd = gradient_fd(|e| -y.dot(&rep.act(&So3::exp(e), &v)), &nalgebra::Vector3::zeros());
            match diamond_fd {
                Ok(d) => fd = fd.max(rel((d - rep.diamond(&y, &v)).norm(), d.norm())),
                Err(_) => fd = f64::INFINITY,
            }
        }
    }
    let detail = format!("{IDENTITY_SAMPLES} samples per representation");
    (
        CheckResult::measured("representation_identities_analytic", analytic, ANALYTIC_TOL, detail.clone()),
        CheckResult::measured("representation_identities_fd", fd, FD_TOL, detail),
    )
}

/// Analytic derivatives of the discrete and continuous Lagrangians against
/// central differences, on both sides.
pub fn gradient_checks(cfg: &RunConfig) -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let mut s = sampler(cfg.seed, 3);
        let mut worst: f64 = 0.0;
        let lc = cfg.system.continuous()?;
        for side in [Side::Left, Side::Right] {
            let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, side)?;
            for _ in 0..20 {
                let w = So3::exp(&(s.vector(1.0) * (cfg.epsilon * 3.0)));
                let p = s.unit_vector();
                let an = lag.d_prime_w(&w, &p)?;
                let fd = lie_deriv_right(|x| lag.eval(x, &p), &w)?;
                worst = worst.max(rel((an - fd).norm(), an.norm()));
                let an_left = lag.d_w(&w, &p)?;
                worst = worst.max(rel((an_left - w.inverse().coadjoint(&an)).norm(), an_left.norm()));
                let gp = lag.grad_p(&w, &p)?;
                let fd = gradient_fd(|q| lag.eval(&w, q), &p)?;
                worst = worst.max(rel((gp - fd).norm(), gp.norm()));
            }
        }
        for _ in 0..20 {
            let (o, p) = (s.vector(2.0), s.unit_vector());
            let an = lc.grad_omega(&o, &p)?;
            let fd = gradient_fd(|x| lc.eval(x, &p), &o)?;
            worst = worst.max(rel((an - fd).norm(), an.norm()));
        }
        Ok((worst, format!("{:?} scheme, both sides", cfg.scheme)))
    };
    CheckResult::from_result("gradient_checks", FD_TOL, run())
}

/// Values of the reduced Lagrangian computed through two different lifts of the
/// same `P` agree, and a Lagrangian without the symmetry is rejected.
pub fn reduction_well_defined(cfg: &RunConfig) -> (CheckResult, CheckResult) {
    let run = || -> Result<(f64, String)> {
        let mut s = sampler(cfg.seed, 4);
        let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, Side::Left)?;
        let rep = *lag.representation();
        let full = ReducedAsFull::new(lag);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let p = s.unit_vector() * rep.anchor.norm();
            let w = So3::exp(&(s.vector(1.0) * (cfg.epsilon * 3.0)));
            let first = rep.lift_left(&p);
            let h = So3::exp(&(rep.isotropy_axis() * s.uniform(-3.0, 3.0)));
            let second = h.compose(&first);
            let a = full.eval(&first, &first.compose(&w));
            let b = full.eval(&second, &second.compose(&w));
            worst = worst.max((a - b).abs());
        }
        Ok((worst, "20 random P, lifts differing by isotropy".into()))
    };
    let well_defined = CheckResult::from_result("reduction_well_defined", WELL_DEFINED_TOL, run());

    let rep = cfg.system.representation();
    let biased = FnLagrangian(move |g: &So3, gh: &So3| {
        let xi = g.inverse().compose(gh).log().map(|v| v.norm_squared()).unwrap_or(f64::NAN);
        xi + g.matrix()[(0, 0)] + g.matrix()[(1, 2)]
    });
    let rejected = match reduce(trivialize(biased, Side::Left), rep) {
        Err(Error::NotInvariant { deviation }) => CheckResult::measured("non_invariant_rejected", 0.0, 1.0, format!("audit deviation {deviation:e}")),
        Err(e) => CheckResult::errored("non_invariant_rejected", 1.0, &e),
        Ok(_) => CheckResult {
            name: "non_invariant_rejected".into(),
            pass: false,
            value: 1.0,
            threshold: 1.0,
            detail: "audit accepted a non-invariant Lagrangian".into(),
        },
    };
    (well_defined, rejected)
}

fn phase_points(seed: u64, salt: u64, rep: &Representation) -> Vec<PhasePoint> {
    let mut s = sampler(seed, salt);
    (0..POISSON_POINTS)
        .map(|_| PhasePoint::reduced(s.vector(2.0), s.unit_vector() * rep.anchor.norm()))
        .collect()
}

/// The reduced map of `lag` as a phase map, optionally with `M` scaled.
pub fn ep_phase_map<R: ReducedLagrangian>(lag: R, newton: NewtonConfig, scale: f64) -> impl Fn(&PhasePoint) -> Result<PhasePoint> + Sync {
    move |x: &PhasePoint| {
        let PhasePoint::Reduced(s) = x else {
            return Err(Error::PhaseMismatch("reduced map"));
        };
        let step = step_ep_any(&lag, s, &So3::identity(), &newton)?;
        Ok(PhasePoint::reduced(step.state.m * scale, step.state.p))
    }
}

/// Poisson-map check of the reduced stepper on `side` against its semidirect bracket.
pub fn poisson_map(cfg: &RunConfig, side: Side, corrupt: bool) -> CheckResult {
    let (name, kind) = match side {
        Side::Left => ("poisson_map_left", BracketKind::SemidirectLeft),
        Side::Right => ("poisson_map_right", BracketKind::SemidirectRight),
    };
    let run = || -> Result<(f64, String)> {
        let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, side)?;
        let rep = *lag.representation();
        let map = ep_phase_map(lag, cfg.newton, if corrupt { CORRUPTION } else { 1.0 });
        let report = verify_poisson_map(&map, kind, &rep, &phase_points(cfg.seed, 5, &rep), POISSON_PAIRS, cfg.seed)?;
        Ok((
            report.max_residual,
            format!(
                "{} pairs at {} points{}",
                report.n_pairs,
                report.n_points,
                if corrupt { ", corrupted map" } else { "" }
            ),
        ))
    };
    CheckResult::from_result(name, POISSON_TOL, run())
}

/// The corrupted map must fail by at least two orders of magnitude. The value is
/// the true-map residual (floored at the pass threshold) over the corrupted one.
pub fn poisson_negative_control(cfg: &RunConfig) -> CheckResult {
    let run = || -> Result<(f64, f64)> {
        let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, Side::Left)?;
        let rep = *lag.representation();
        let points = phase_points(cfg.seed, 5, &rep);
        let good = ep_phase_map(lag.clone(), cfg.newton, 1.0);
        let bad = ep_phase_map(lag, cfg.newton, CORRUPTION);
        let g = verify_poisson_map(&good, BracketKind::SemidirectLeft, &rep, &points, POISSON_PAIRS, cfg.seed)?;
        let b = verify_poisson_map(&bad, BracketKind::SemidirectLeft, &rep, &points, POISSON_PAIRS, cfg.seed)?;
        Ok((g.max_residual, b.max_residual))
    };
    match run() {
        Ok((good, bad)) => {
            let ratio = good.max(POISSON_TOL) / bad;
            CheckResult {
                name: "poisson_negative_control".into(),
                pass: bad > 1e-3 && ratio <= 1e-2,
                value: ratio,
                threshold: 1e-2,
                detail: format!("corrupted residual {bad:e} vs true map {good:e}"),
            }
        }
        Err(e) => CheckResult::errored("poisson_negative_control", 1e-2, &e),
    }
}

fn random_observable(kind: BracketKind, linear: bool, s: &mut Sampler) -> Box<dyn Observable> {
    match (kind.is_semidirect(), linear) {
        (true, false) => Box::new(Quadratic::random(s)),
        (true, true) => Box::new(Quadratic::random_linear(s)),
        (false, false) => Box::new(GroupQuadratic::random(s)),
        (false, true) => Box::new(GroupQuadratic::random_linear(s)),
    }
}

fn random_point(kind: BracketKind, s: &mut Sampler) -> PhasePoint {
    if kind.is_semidirect() {
        PhasePoint::reduced(s.vector(2.0), s.unit_vector())
    } else {
        PhasePoint::Group {
            g: s.rotation(),
            m: s.vector(2.0),
        }
    }
}

/// Jacobi identity residuals for one bracket kind: (quadratics, linears).
pub fn jacobi(cfg: &RunConfig, kind: BracketKind) -> (CheckResult, CheckResult) {
    let rep = cfg.system.representation();
    let tag = match kind {
        BracketKind::LeftTrivialized => "left_trivialized",
        BracketKind::RightTrivialized => "right_trivialized",
        BracketKind::SemidirectLeft => "semidirect_left",
        BracketKind::SemidirectRight => "semidirect_right",
    };
    let run = |linear: bool, salt: u64| -> Result<(f64, String)> {
        let mut s = sampler(cfg.seed, salt);
        let mut worst: f64 = 0.0;
        for _ in 0..JACOBI_TRIPLES {
            let x = random_point(kind, &mut s);
            let f: Vec<Box<dyn Observable>> = (0..3).map(|_| random_observable(kind, linear, &mut s)).collect();
            worst = worst.max(verify_jacobi(kind, &rep, &*f[0], &*f[1], &*f[2], &x)?);
        }
        Ok((worst, format!("{JACOBI_TRIPLES} triples")))
    };
    let salt = 10 + kind as u64;
    (
        CheckResult::from_result(&format!("jacobi_{tag}_quadratic"), JACOBI_QUADRATIC_TOL, run(false, salt)),
        CheckResult::from_result(&format!("jacobi_{tag}_linear"), JACOBI_LINEAR_TOL, run(true, salt + 100)),
    )
}

/// `|P|^2` and `<M, P>` commute with random observables under both semidirect brackets.
pub fn casimirs(cfg: &RunConfig) -> CheckResult {
    let rep = cfg.system.representation();
    let run = || -> Result<(f64, String)> {
        let mut s = sampler(cfg.seed, 6);
        let mut worst: f64 = 0.0;
        for kind in [BracketKind::SemidirectLeft, BracketKind::SemidirectRight] {
            for _ in 0..20 {
                let x = random_point(kind, &mut s);
                let f = Quadratic::random(&mut s);
                worst = worst
                    .max(bracket(kind, &rep, &OrbitRadius, &f, &x)?.abs())
                    .max(bracket(kind, &rep, &MomentumPairing, &f, &x)?.abs());
            }
        }
        Ok((worst, "20 random observables per bracket".into()))
    };
    CheckResult::from_result("casimirs", CASIMIR_TOL, run())
}

/// Chained left steps against direct extremization of the reduced action.
pub fn variational_equivalence(cfg: &RunConfig) -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, Side::Left)?;
        let start = cfg.initial;
        let chained = integrate_ep(&lag, cfg.system_name(), cfg.epsilon, start, VARIATIONAL_STEPS, &So3::identity(), &cfg.newton).map_err(|e| e.error)?;
        let displacement = chained.increments.iter().fold(So3::identity(), |acc, w| acc.compose(w));
        let bf = extremize_action_bruteforce(&lag, &VariationalBoundary { start, displacement }, VARIATIONAL_STEPS, &cfg.newton)?;
        let gap = chained.states.iter().zip(&bf.trajectory.states).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
        Ok((gap, format!("{VARIATIONAL_STEPS} steps, stationarity {:e}", bf.stationarity)))
    };
    CheckResult::from_result("variational_equivalence", VARIATIONAL_TOL, run())
}

/// Left and right trivialized steppers from matched data, and the right reduced
/// stepper against the mirrored left one.
pub fn left_right_consistency(cfg: &RunConfig) -> CheckResult {
    let run = || -> Result<(f64, String)> {
        let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, Side::Left)?;
        let full = ReducedAsFull::new(lag.clone());
        let left = trivialize(full.clone(), Side::Left);
        let right = trivialize(full, Side::Right);
        let rep = *lag.representation();
        let g0 = sampler(cfg.seed, 7).rotation().compose(&rep.lift_left(&cfg.initial.p));
        let (mut gl, mut ml, mut wl) = (g0, cfg.initial.m, So3::identity());
        let (mut gr, mut mr, mut wr) = (g0, g0.inverse().coadjoint(&cfg.initial.m), So3::identity());
        let mut worst: f64 = 0.0;
        for _ in 0..CONSISTENCY_STEPS {
            let a = step_left_trivialized(&left, &gl, &ml, &wl, &cfg.newton)?;
            let b = step_right_trivialized(&right, &gr, &mr, &wr, &cfg.newton)?;
            (gl, ml, wl) = (a.g_next, a.momentum, a.increment);
            (gr, mr, wr) = (b.g_next, b.momentum, b.increment);
            worst = worst.max(gl.distance(&gr)).max((gr.coadjoint(&mr) - ml).norm());
        }
        let mirrored = Mirrored::new(lag.clone());
        let start = ReducedState::new(-cfg.initial.m, cfg.initial.p);
        let l = integrate_ep(&lag, "left", cfg.epsilon, cfg.initial, CONSISTENCY_STEPS, &So3::identity(), &cfg.newton).map_err(|e| e.error)?;
        let r = integrate_ep(&mirrored, "right", cfg.epsilon, start, CONSISTENCY_STEPS, &So3::identity(), &cfg.newton).map_err(|e| e.error)?;
        for (a, b) in l.states.iter().zip(&r.states) {
            worst = worst.max((a.m + b.m).norm()).max((a.p - b.p).norm());
        }
        Ok((worst, format!("{CONSISTENCY_STEPS} steps, trivialized and reduced")))
    };
    CheckResult::from_result("left_right_consistency", CONSISTENCY_TOL, run())
}

/// Orbit, pairing and |M| invariants along an `n_steps` trajectory of the configured stepper.
pub fn exact_invariants(cfg: &RunConfig) -> Vec<CheckResult> {
    let run = || -> Result<Vec<CheckResult>> {
        let lag = cfg.system.discrete(cfg.epsilon, cfg.scheme, cfg.side)?;
        let guess = So3::exp(&(cfg.omega_guess * cfg.epsilon));
        let traj = integrate_ep(&lag, cfg.system_name(), cfg.epsilon, cfg.initial, cfg.n_steps, &guess, &cfg.newton).map_err(|e| e.error)?;
        let report = invariant_report(&cfg.system, &lag, &traj)?;
        let a = lag.representation().anchor.norm();
        let orbit = traj.states.iter().map(|s| (s.p.norm() - a).abs()).fold(0.0, f64::max);
        let detail = format!("{} steps", cfg.n_steps);
        let mut out = vec![CheckResult::measured("orbit_invariant", orbit, ORBIT_TOL, detail.clone())];
        if let Some(p) = report.pairing {
            out.push(CheckResult::measured("pairing_invariant", p.max_drift, PAIRING_TOL, detail.clone()));
        }
        if let Some(m) = report.m_norm {
            out.push(CheckResult::measured("momentum_norm_invariant", m.max_drift, M_NORM_TOL, detail));
        }
        Ok(out)
    };
    run().unwrap_or_else(|e| vec![CheckResult::errored("exact_invariants", ORBIT_TOL, &e)])
}

type Check<'a> = Box<dyn Fn() -> Vec<CheckResult> + Send + Sync + 'a>;

/// Runs every check. Poisson-map checks use the corrupted map when requested.
pub fn run_suite(cfg: &RunConfig, opts: SuiteOptions) -> SuiteReport {
    let seed = opts.seed;
    let checks: Vec<Check> = vec![
        Box::new(move || {
            let (a, b) = lie_identities(seed);
            vec![a, b]
        }),
        Box::new(move || {
            let (a, b) = representation_identities(seed);
            vec![a, b]
        }),
        Box::new(|| vec![gradient_checks(cfg)]),
        Box::new(|| {
            let (a, b) = reduction_well_defined(cfg);
            vec![a, b]
        }),
        Box::new(move || vec![poisson_map(cfg, Side::Left, opts.corrupt_map)]),
        Box::new(move || vec![poisson_map(cfg, Side::Right, opts.corrupt_map)]),
        Box::new(|| vec![poisson_negative_control(cfg)]),
        Box::new(|| {
            BracketKind::ALL
                .iter()
                .flat_map(|k| {
                    let (a, b) = jacobi(cfg, *k);
                    [a, b]
                })
                .collect()
        }),
        Box::new(|| vec![casimirs(cfg)]),
        Box::new(|| vec![variational_equivalence(cfg)]),
        Box::new(|| vec![left_right_consistency(cfg)]),
        Box::new(|| exact_invariants(cfg)),
    ];
    let results: Vec<CheckResult> = checks.par_iter().map(|c| c()).collect::<Vec<_>>().into_iter().flatten().collect();
    let failed: Vec<String> = results.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    SuiteReport {
        system: cfg.system_name().into(),
        seed,
        corrupt_map: opts.corrupt_map,
        pass: failed.is_empty(),
        failed,
        checks: results,
    }
}
