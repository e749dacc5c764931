//! Output files. Every file is written to a temporary sibling and renamed into
//! place, so readers never observe a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use depi_core::stepper::{ReducedState, Trajectory};
use serde::Serialize;

use crate::CliError;

pub const TRAJECTORY_HEADER: &str = "k,M1,M2,M3,P1,P2,P3,W1,W2,W3,residual";

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.into()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

fn row(out: &mut String, k: usize, s: &ReducedState, w: [f64; 3], residual: f64) {
    use std::fmt::Write as _;
    let _ = write!(out, "{k}");
    for v in s.m.iter().chain(s.p.iter()).chain(w.iter()).chain(std::iter::once(&residual)) {
        let _ = write!(out, ",{v:.16e}");
    }
    out.push('\n');
}

/// CSV text of a trajectory. Row `k` holds `(M_k, P_k)`, the axis-angle vector
/// of the increment that produced it and the Newton residual of that step; row 0
/// has zeros in both. `residuals[k]` belongs to the step leaving state `k`.
pub fn trajectory_csv(traj: &Trajectory, residuals: &[f64], failure: Option<&str>) -> Result<String, CliError> {
    let mut out = String::with_capacity(200 * traj.states.len());
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (k, s) in traj.states.iter().enumerate() {
        let (w, r) = if k == 0 {
            ([0.0; 3], 0.0)
        } else {
            let v = traj.increments[k - 1].log()?;
            ([v.x, v.y, v.z], residuals[k - 1])
        };
        row(&mut out, k, s, w, r);
    }
    if let Some(msg) = failure {
        out.push_str("# FAILED: ");
        out.push_str(&msg.replace('\n', " "));
        out.push('\n');
    }
    Ok(out)
}
