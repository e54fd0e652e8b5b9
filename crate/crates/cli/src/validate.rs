//! The `validate` suite: cross-checks between independent routes to the same
//! quantity, each with a pass/fail verdict.

use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};

use mirrorless_core::constants::HBAR;
use mirrorless_core::model::{dispersion_report, self_consistent_beat, stabilization_factor};
use mirrorless_core::noise::{
    linewidth_closed_form, linewidth_group_delay_form, monte_carlo_linewidth, phase_variance_semianalytic,
};
use mirrorless_core::steady::{conserved_quantities, solve_steady_state};
use mirrorless_core::threshold::{threshold_pump_intensity, threshold_residual};
use mirrorless_core::{model::group_delay, Branch};

use crate::commands::mc_options;
use crate::config::RunConfig;
use crate::error::CliError;

pub const CHECKS: [&str; 6] = ["conservation", "threshold", "locking", "bridge", "quadrature", "mc"];

/// Ground-state decay used to exercise the lossy threshold when the
/// configuration itself is lossless, rad/s.
const PROBE_GROUND_DECAY: f64 = 2.0 * PI * 100.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

type Verdict = Result<(bool, String), CliError>;

fn conservation(cfg: &RunConfig) -> Verdict {
    let st = match solve_steady_state(&cfg.medium()?, &cfg.pumps()?, &cfg.solver) {
        Ok(st) => st,
        Err(e) => return Ok((false, format!("steady state unavailable: {e}"))),
    };
    let a = conserved_quantities(&st)?;
    let r = st.amplitude_ratio();
    // |Ef|²+|Eb|² and |E1|²+|E2|² are exact; the other two hold to leading order
    let leading_tol = (r * r).max(1e-4);
    let ok = a.gen_sum_drift <= 1e-6
        && a.pump_sum_drift <= 1e-6
        && a.quartic_drift <= leading_tol
        && a.mixed_drift <= leading_tol
        && st.residual_norm <= 1e-8;
    Ok((
        ok,
        format!(
            "E/E_d = {r:.4e}, residual {:.2e}; drifts gen {:.2e}, pump {:.2e} (tol 1e-6), quartic {:.2e}, mixed {:.2e} (tol {leading_tol:.2e})",
            st.residual_norm, a.gen_sum_drift, a.pump_sum_drift, a.quartic_drift, a.mixed_drift
        ),
    ))
}

fn threshold(cfg: &RunConfig) -> Verdict {
    let params = cfg.medium()?;
    let ideal = params.to_builder().ground_decay(0.0).build()?.with_alpha(FRAC_PI_2)?;
    let r0 = threshold_residual(cfg.pumps()?.drive_intensity(), &ideal)?;
    let lossy = if params.ground_decay() > 0.0 {
        params
    } else {
        params.to_builder().ground_decay(PROBE_GROUND_DECAY).build()?
    };
    let t = threshold_pump_intensity(&lossy, &cfg.threshold_options())?;
    let mut ok = r0.abs() <= 1e-12;
    let mut detail = format!("ideal residual {r0:.2e}");
    if t.feasible {
        let ed2 = t.ed2_threshold.unwrap_or(0.0);
        ok &= t.residual.abs() <= 1e-10 && ed2 > t.floor;
        detail += &format!("; lossy threshold {ed2:.4e} rad^2/s^2 > floor {:.4e}, residual {:.2e}", t.floor, t.residual);
    } else {
        detail += "; lossy threshold infeasible at this coupling";
    }
    Ok((ok, detail))
}

fn locking(cfg: &RunConfig) -> Verdict {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let closed = dispersion_report(&params, &pumps).locked_beat;
    let solved = self_consistent_beat(&params, &pumps)?;
    let rel = (solved - closed).abs() / closed.abs();
    Ok((rel <= 1e-10, format!("locked beat {closed:.10e} rad/s, relative gap {rel:.2e} (tol 1e-10)")))
}

fn bridge(cfg: &RunConfig) -> Verdict {
    let params = cfg.medium()?.with_alpha(FRAC_PI_2)?;
    let pumps = cfg.pumps()?;
    let p_out = cfg.linewidth.p_out_w;
    let eta = stabilization_factor(&params, &pumps);
    let tau = group_delay(&params, &pumps);
    let nu = params.optical_frequency();
    let closed = linewidth_closed_form(&params, &pumps, p_out)?;
    let gd = linewidth_group_delay_form(tau, 0.0, nu, p_out)?;
    let ideal_laser = PI * PI / 8.0 / (tau * tau) * HBAR * nu / p_out;
    let rel = (gd / closed - 1.0).abs();
    // the two forms differ by (η/(1+η))², i.e. about 2/η
    let tol = 2.5 / eta;
    Ok((
        rel <= tol && (gd / ideal_laser - 1.0).abs() <= 1e-14,
        format!("eta {eta:.3e}, relative gap {rel:.2e} (tol 2.5/eta = {tol:.2e}); lossless group-delay form exact"),
    ))
}

fn quadrature(cfg: &RunConfig) -> Verdict {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let st = solve_steady_state(&params, &pumps, &cfg.solver)?;
    if st.branch != Branch::Oscillating {
        return Ok((true, "below threshold; nothing to integrate".into()));
    }
    let p_out = cfg.linewidth.p_out_w;
    let semi = phase_variance_semianalytic(&params, &pumps, &st, p_out)?;
    let closed = linewidth_closed_form(&params, &pumps, p_out)?;
    let r = st.amplitude_ratio();
    let eta = stabilization_factor(&params, &pumps);
    // near-threshold identity up to its O(E²/E_d²) and O(1/η) corrections
    let tol = 1e-3 + r * r + 2.5 / eta;
    let rel = (semi / closed - 1.0).abs();
    Ok((rel <= tol, format!("quadrature {semi:.6e} vs closed {closed:.6e} rad/s, gap {rel:.2e} (tol {tol:.2e})")))
}

fn monte_carlo(cfg: &RunConfig) -> Verdict {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let st = solve_steady_state(&params, &pumps, &cfg.solver)?;
    if st.branch != Branch::Oscillating {
        return Ok((true, "below threshold; no phase diffusion to sample".into()));
    }
    let p_out = cfg.linewidth.p_out_w;
    let semi = phase_variance_semianalytic(&params, &pumps, &st, p_out)?;
    let est = monte_carlo_linewidth(&params, &pumps, &st, p_out, &mc_options(cfg)?)?;
    let diff = (est.linewidth - semi).abs();
    let white = est
        .spectrum
        .iter()
        .map(|p| (p.omega2_s_phi - est.linewidth).abs() / p.stderr)
        .fold(0.0_f64, f64::max);
    let ok = diff <= 3.0 * est.stderr && diff <= 0.15 * semi && white <= 5.0;
    Ok((
        ok,
        format!(
            "{:.4e} +- {:.2e} vs {semi:.4e} rad/s ({:.2} standard errors, {:.2}%); flatness {white:.2} standard errors",
            est.linewidth,
            est.stderr,
            diff / est.stderr,
            100.0 * diff / semi
        ),
    ))
}

pub fn run(cfg: &RunConfig, skip: &[String]) -> Result<Vec<CheckOutcome>, CliError> {
    for s in skip {
        if !CHECKS.contains(&s.as_str()) {
            return Err(CliError::Input(format!("unknown check '{s}'; known: {}", CHECKS.join(", "))));
        }
    }
    let mut out = Vec::new();
    for name in CHECKS {
        if skip.iter().any(|s| s == name) {
            continue;
        }
        let verdict = match name {
            "conservation" => conservation(cfg),
            "threshold" => threshold(cfg),
            "locking" => locking(cfg),
            "bridge" => bridge(cfg),
            "quadrature" => quadrature(cfg),
            _ => monte_carlo(cfg),
        };
        let (passed, detail) = match verdict {
            Ok(v) => v,
            Err(e) => (false, e.to_string()),
        };
        out.push(CheckOutcome { name: name.to_string(), passed, detail });
    }
    Ok(out)
}
