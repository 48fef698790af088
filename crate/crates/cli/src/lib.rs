//! Experiment runner: TOML configs in, a hashed artifact tree out, and a
//! verifier that re-checks every invariant suite against that tree.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod records;
pub mod run;
pub mod verify;

use std::fmt::Write as _;
use std::path::Path;

use laminate::hyperbolic::cone_profile;
use laminate::limits::LimitReport;

use crate::error::RunError;

/// CSV with one `f_p` column per exponent on a shared `t` grid.
pub fn cone_table(n: u32, p_list: &[f64], t_max: f64, steps: usize) -> Result<String, RunError> {
    if p_list.is_empty() {
        return Err(RunError::Config {
            field: "--p-list".into(),
            reason: "at least one exponent is required".into(),
        });
    }
    let profiles = p_list
        .iter()
        .map(|&p| {
            cone_profile(n, p, t_max, steps).map_err(|e| RunError::Config {
                field: "--p-list".into(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::from("t");
    for p in p_list {
        let _ = write!(out, ",f_{}", records::num_label(*p));
    }
    out.push('\n');
    for k in 0..steps {
        let _ = write!(out, "{}", profiles[0].t[k]);
        for prof in &profiles {
            let _ = write!(out, ",{}", prof.f[k]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Human-readable K/L comparison from a run directory.
pub fn k_vs_l(dir: &Path) -> Result<String, RunError> {
    let path = dir.join(records::LIMITS);
    let text = std::fs::read_to_string(&path).map_err(|e| RunError::Missing(format!("{}: {e}", path.display())))?;
    let lim: LimitReport =
        serde_json::from_str(&text).map_err(|e| RunError::Missing(format!("{} is unreadable: {e}", path.display())))?;
    let mut out = String::new();
    let _ = writeln!(out, "K_hat        {:.10}", lim.k_hat);
    let _ = writeln!(out, "L_hat        {:.10}", lim.l_hat);
    let _ = writeln!(out, "K / L_hat    {:.6}", lim.k_hat / lim.l_hat);
    let _ = writeln!(out, "rel. gap     {:.3e}", (lim.l_hat - lim.k_hat) / lim.l_hat);
    match lim.argmax_class {
        Some([m, n]) => {
            let _ = writeln!(out, "argmax class ({m}, {n})");
        }
        None => {
            let _ = writeln!(out, "argmax class boundary loop");
        }
    }
    let _ = writeln!(out, "\n{:>8} {:>14} {:>14} {:>14}", "p", "max|du_p|", "Lp mean", "1/k_p");
    for r in &lim.traces {
        let inv = r.inv_k_p.map(|v| format!("{v:.10}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{:>8} {:>14.10} {:>14.10} {:>14}", r.p, r.max_du, r.lp_mean, inv);
    }
    Ok(out)
}
