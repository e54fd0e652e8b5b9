//! Bifurcation sweep: the steady state at each α of a grid, alongside the
//! analytic amplitude for overlay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MediumParams, PumpBoundary};
use crate::par::{map_indexed, Execution};
use crate::steady::{analytic_amplitude, solve_steady_state, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Numerical E/E_d, absent when the point failed.
    pub e_over_ed: Option<f64>,
    pub analytic_e_over_ed: f64,
    pub residual: Option<f64>,
    /// "zero", "oscillating" or "error".
    pub branch: String,
    pub error: Option<String>,
    /// True when the failure is a validity-domain exit rather than a solver fault.
    pub out_of_domain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Rows whose solve failed for reasons other than leaving the validity domain.
    pub fn solver_failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some() && !r.out_of_domain).count()
    }

    /// More than 10% of the points failed.
    pub fn failed(&self) -> bool {
        10 * self.solver_failures() > self.rows.len()
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn alpha_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || n < 2 {
        return Err(Error::Domain(format!(
            "sweep needs alpha_min < alpha_max and n_points >= 2, got [{lo}, {hi}] x {n}"
        )));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Solves every point independently; the cell length is adjusted to reach each α.
pub fn bifurcation_sweep(
    params: &MediumParams,
    pumps: &PumpBoundary,
    alphas: &[f64],
    opts: &SolverOptions,
    exec: Execution,
) -> SweepTable {
    let drive = pumps.forward().norm();
    let rows = map_indexed(exec, alphas.len(), |i| {
        let alpha = alphas[i];
        let analytic = analytic_amplitude(alpha, 1.0).unwrap_or(f64::NAN);
        let solved = params.with_alpha(alpha).and_then(|p| solve_steady_state(&p, pumps, opts));
        match solved {
            Ok(st) => SweepRow {
                alpha,
                e_over_ed: Some(st.amplitude / drive),
                analytic_e_over_ed: analytic,
                residual: Some(st.residual_norm),
                branch: st.branch.as_str().to_string(),
                error: None,
                out_of_domain: false,
            },
            Err(e) => SweepRow {
                alpha,
                e_over_ed: None,
                analytic_e_over_ed: analytic,
                residual: None,
                branch: "error".to_string(),
                out_of_domain: matches!(e, Error::ValidityDomain(_)),
                error: Some(e.to_string()),
            },
        }
    });
    SweepTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = alpha_grid(1.0, 4.0, 61).unwrap();
        assert_eq!(g.len(), 61);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[60], 4.0);
        assert!(alpha_grid(2.0, 1.0, 5).is_err());
        assert!(alpha_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn below_threshold_pair() {
        let p = MediumParams::builder().build().unwrap();
        let b = PumpBoundary::equal(1e7).unwrap();
        let t = bifurcation_sweep(&p, &b, &[1.0, 1.2], &SolverOptions::default(), Execution::Sequential);
        assert!(t.rows.iter().all(|r| r.branch == "zero" && r.e_over_ed == Some(0.0)));
        assert!(!t.failed());
    }
}
