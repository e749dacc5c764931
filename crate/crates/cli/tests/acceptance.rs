//! Acceptance criteria, one line each. Run with `cargo test -p depi-cli --test acceptance`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use depi_cli::config::RunConfig;
use depi_cli::suite::{self, CheckResult};
use depi_core::continuum::{convergence_study, fit_slope, one_step_errors};
use depi_core::lagrangian::Side;
use depi_core::poisson::BracketKind;
use rayon::prelude::*;

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn from_checks(checks: &[CheckResult]) -> Outcome {
    let detail = checks.iter().map(|c| format!("{}={:.1e}", c.name, c.value)).collect::<Vec<_>>().join(" ");
    Outcome {
        pass: checks.iter().all(|c| c.pass),
        detail,
    }
}

fn config(text: &str) -> RunConfig {
    let mut cfg = RunConfig::from_json(text).expect("acceptance config");
    cfg.seed = SEED;
    cfg
}

fn heavy_top() -> RunConfig {
    config(r#"{"system": "heavy_top", "epsilon": 0.01, "n_steps": 10000}"#)
}

fn free_body() -> RunConfig {
    config(r#"{"system": "rigid_body", "epsilon": 0.01, "n_steps": 10000, "initial": {"m": [0.7, 1.1, -0.4], "p": [0, 0, 1]}}"#)
}

fn identities() -> Outcome {
    let (a, b) = suite::lie_identities(SEED);
    let (c, d) = suite::representation_identities(SEED);
    from_checks(&[a, b, c, d])
}

fn variational() -> Outcome {
    from_checks(&[suite::variational_equivalence(&heavy_top()), suite::variational_equivalence(&free_body())])
}

fn poisson() -> Outcome {
    let cfg = heavy_top();
    from_checks(&[
        suite::poisson_map(&cfg, Side::Left, false),
        suite::poisson_map(&cfg, Side::Right, false),
        suite::poisson_negative_control(&cfg),
    ])
}

fn jacobi() -> Outcome {
    let cfg = heavy_top();
    let checks: Vec<CheckResult> = BracketKind::ALL
        .iter()
        .flat_map(|k| {
            let (a, b) = suite::jacobi(&cfg, *k);
            [a, b]
        })
        .collect();
    from_checks(&checks)
}

fn invariants() -> Outcome {
    let start = Instant::now();
    let mut checks = suite::exact_invariants(&heavy_top());
    checks.extend(suite::exact_invariants(&free_body()));
    let secs = start.elapsed().as_secs_f64();
    let mut out = from_checks(&checks);
    out.detail.push_str(&format!(" runtime={secs:.1}s"));
    out.pass &= secs < 30.0;
    out
}

fn consistency() -> Outcome {
    from_checks(&[suite::left_right_consistency(&heavy_top())])
}

fn continuum() -> Outcome {
    let cfg = heavy_top();
    let eps = [2e-2, 1e-2, 5e-3, 2.5e-3];
    let lc = cfg.system.continuous().unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for side in [Side::Left, Side::Right] {
        let make = |e: f64| cfg.system.discrete(e, cfg.scheme, side);
        let one = one_step_errors(&lc, side, make, &cfg.initial, &eps, &cfg.newton)
            .ok()
            .and_then(|e| fit_slope(&eps, &e));
        let study = convergence_study(&lc, side, make, &cfg.initial, 1.0, &eps, &cfg.newton);
        let (slope, self_err, ok) = match &study {
            Ok(r) => (r.slope, r.reference_self_error, r.pass),
            Err(_) => (None, f64::NAN, false),
        };
        pass &= one.is_some_and(|s| s >= 1.9) && ok && slope.is_some_and(|s| s >= 0.9) && self_err < 1e-10;
        detail.push_str(&format!(
            "{side:?}: one_step_slope={:.3} trajectory_slope={:.3} reference_self_error={self_err:.1e} ",
            one.unwrap_or(f64::NAN),
            slope.unwrap_or(f64::NAN)
        ));
    }
    Outcome {
        pass,
        detail: detail.trim_end().into(),
    }
}

fn well_defined() -> Outcome {
    let (a, b) = suite::reduction_well_defined(&heavy_top());
    from_checks(&[a, b])
}

fn run_binary(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_depi"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("DEPI_THREADS", "2")
        .output()
        .expect("spawn depi")
        .status
        .code()
        .unwrap_or(-1)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"system": "heavy_top", "n_steps": 2000, "seed": 7}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut codes = Vec::new();
    for out in [&a, &b] {
        for cmd in ["simulate", "verify", "converge"] {
            codes.push(run_binary(&[cmd, cfg], out));
        }
    }
    let files = ["trajectory.csv", "report.json", "verify.json", "convergence.csv", "convergence.json"];
    let same = files
        .iter()
        .all(|f| matches!((std::fs::read(a.join(f)), std::fs::read(b.join(f))), (Ok(x), Ok(y)) if x == y));
    Outcome {
        pass: same && codes.iter().all(|c| *c == 0),
        detail: format!("{} files compared, exit codes {codes:?}", files.len()),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("defining identities", identities),
        ("variational equivalence", variational),
        ("Poisson map", poisson),
        ("Jacobi identity", jacobi),
        ("exact invariants", invariants),
        ("left/right consistency", consistency),
        ("continuous limit", continuum),
        ("reduction well-defined", well_defined),
        ("determinism", determinism),
    ];
    let outcomes: Vec<Outcome> = criteria.par_iter().map(|(_, f)| f()).collect();
    let mut all = true;
    for (i, ((name, _), o)) in criteria.iter().zip(&outcomes).enumerate() {
        all &= o.pass;
        println!("criterion {} {:<24} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
