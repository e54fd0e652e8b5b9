//! Subcommand implementations. Each returns the primary output text plus any
//! side files; the caller decides where they land.

use serde::Serialize;
use serde_json::json;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use mirrorless_core::model::{dispersion_report, group_delay};
use mirrorless_core::noise::{linewidth_report, MonteCarloOptions, CORRELATOR_MODEL};
use mirrorless_core::steady::{conserved_quantities, solve_steady_state, zero_branch_stable, SteadyState};
use mirrorless_core::sweep::{alpha_grid, bifurcation_sweep};
use mirrorless_core::threshold::{effective_coupling, threshold_photon_flux, threshold_pump_intensity};
use mirrorless_core::{Branch, Execution};

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::svg::{line_plot, Series};

pub struct Output {
    pub main: String,
    /// (file-name suffix, contents), written next to the main output.
    pub side: Vec<(String, String)>,
    /// Set when the command produced its output but must exit nonzero.
    pub failure: Option<CliError>,
}

impl Output {
    fn text(main: String) -> Self {
        Self { main, side: Vec::new(), failure: None }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn kv_csv(title: &str, rows: &[(&str, String, &str)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {title}");
    let _ = writeln!(s, "# units: frequencies in rad/s, lengths in m, powers in W");
    let _ = writeln!(s, "{}", model_tag());
    s.push_str("quantity,value,unit\n");
    for (k, v, u) in rows {
        let _ = writeln!(s, "{k},{v},{u}");
    }
    s
}

fn model_tag() -> String {
    format!("# correlator_model: {CORRELATOR_MODEL}")
}

fn tagged(body: Vec<u8>) -> String {
    format!("{}\n{}", model_tag(), String::from_utf8(body).expect("ascii csv"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn threshold(cfg: &RunConfig, fmt: Format) -> Result<Output, CliError> {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let t = threshold_pump_intensity(&params, &cfg.threshold_options())?;
    let ed2 = pumps.drive_intensity();
    let stable = zero_branch_stable(&params, &pumps)?;
    let xi_l = effective_coupling(ed2, &params)?;
    let flux = threshold_photon_flux(&params, cfg.threshold.photon_flux_prefactor)?;
    Ok(Output::text(match fmt {
        Format::Json => pretty(&json!({
            "units": {"frequency": "rad/s", "intensity": "rad^2/s^2", "photon_flux": "1/s"},
            "schema": "schemas/threshold.schema.json",
            "correlator_model": CORRELATOR_MODEL,
            "alpha": params.alpha(),
            "ground_decay": params.ground_decay(),
            "alpha_critical": t.alpha_critical,
            "ed2_threshold": t.ed2_threshold,
            "residual": t.residual,
            "feasible": t.feasible,
            "floor": t.floor,
            "drive_intensity": ed2,
            "xi_l_at_drive": xi_l,
            "zero_branch_stable": stable,
            "threshold_photon_flux": flux,
        })),
        Format::Csv => kv_csv(
            "threshold report",
            &[
                ("alpha", format!("{:e}", params.alpha()), "1"),
                ("ground_decay", format!("{:e}", params.ground_decay()), "rad/s"),
                ("feasible", t.feasible.to_string(), "bool"),
                ("ed2_threshold", opt(t.ed2_threshold), "rad^2/s^2"),
                ("alpha_critical", opt(t.alpha_critical), "1"),
                ("residual", format!("{:e}", t.residual), "1"),
                ("floor", format!("{:e}", t.floor), "rad^2/s^2"),
                ("drive_intensity", format!("{ed2:e}"), "rad^2/s^2"),
                ("xi_l_at_drive", opt(xi_l), "1"),
                ("zero_branch_stable", stable.to_string(), "bool"),
                ("threshold_photon_flux", format!("{flux:e}"), "1/s"),
            ],
        ),
    }))
}

fn solve(cfg: &RunConfig) -> Result<SteadyState, CliError> {
    Ok(solve_steady_state(&cfg.medium()?, &cfg.pumps()?, &cfg.solver)?)
}

pub fn steady(cfg: &RunConfig, fmt: Format) -> Result<Output, CliError> {
    let st = solve(cfg)?;
    Ok(Output::text(match fmt {
        Format::Json => {
            let audit = conserved_quantities(&st)?;
            pretty(&json!({
                "units": {"z": "m", "fields": "rad/s"},
                "correlator_model": CORRELATOR_MODEL,
                "e_over_ed": st.amplitude_ratio(),
                "drifts": {
                    "gen_sum": audit.gen_sum_drift,
                    "pump_sum": audit.pump_sum_drift,
                    "quartic": audit.quartic_drift,
                    "mixed": audit.mixed_drift,
                },
                "state": st,
            }))
        }
        Format::Csv => {
            let mut buf = Vec::new();
            st.write_csv(&mut buf)?;
            tagged(buf)
        }
    }))
}

/// Finds the α whose numerical amplitude equals `target` (E/E_d) by secant
/// iteration from the analytic estimate.
fn insert_state(cfg: &RunConfig, target: f64) -> Result<(f64, SteadyState), CliError> {
    let base = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let f = |a: f64| -> Result<(f64, SteadyState), CliError> {
        let st = solve_steady_state(&base.with_alpha(a)?, &pumps, &cfg.solver)?;
        Ok((st.amplitude_ratio() - target, st))
    };
    let mut a0 = FRAC_PI_2 / (1.0 - target * target / 2.0);
    let mut a1 = a0 * 1.01;
    let (mut r0, _) = f(a0)?;
    let (mut r1, mut s1) = f(a1)?;
    for _ in 0..30 {
        if r1.abs() < 1e-10 || r1 == r0 {
            break;
        }
        let a2 = (a1 - r1 * (a1 - a0) / (r1 - r0)).max(FRAC_PI_2 + 1e-6);
        a0 = a1;
        r0 = r1;
        a1 = a2;
        let (r, s) = f(a1)?;
        r1 = r;
        s1 = s;
    }
    Ok((a1, s1))
}

pub fn sweep(cfg: &RunConfig, fmt: Format) -> Result<Output, CliError> {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let s = &cfg.sweep;
    let alphas = alpha_grid(s.alpha_min, s.alpha_max, s.n_points)?;
    let table = bifurcation_sweep(&params, &pumps, &alphas, &cfg.solver, Execution::Sequential);

    let main = match fmt {
        Format::Json => pretty(&json!({
            "units": {"alpha": "1", "E_over_Ed": "1", "residual": "1"},
            "correlator_model": CORRELATOR_MODEL,
            "ground_decay": params.ground_decay(),
            "rows": table.rows,
        })),
        Format::Csv => {
            let mut out = String::new();
            out.push_str("# units: alpha, E_over_Ed and residual are dimensionless; E_d in rad/s\n");
            let _ = writeln!(out, "{}", model_tag());
            let _ = writeln!(out, "# drive_rad_s: {:e}; ground_decay_rad_s: {:e}", pumps.forward().norm(), params.ground_decay());
            out.push_str("alpha,E_over_Ed,analytic_E_over_Ed,residual,branch,error\n");
            for r in &table.rows {
                let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
                let _ = writeln!(
                    out,
                    "{:e},{},{:e},{},{},{}",
                    r.alpha,
                    opt(r.e_over_ed),
                    r.analytic_e_over_ed,
                    opt(r.residual),
                    r.branch,
                    err
                );
            }
            out
        }
    };
    let mut side = Vec::new();
    if cfg.output.emit_svg {
        let numeric: Vec<(f64, f64)> = table.rows.iter().filter_map(|r| r.e_over_ed.map(|e| (r.alpha, e))).collect();
        let analytic: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.alpha, r.analytic_e_over_ed)).collect();
        side.push((
            ".svg".to_string(),
            line_plot(
                "Generated amplitude against coupling",
                "alpha = kappa L / Delta",
                "E / E_d",
                &[
                    Series { label: "numerical", points: numeric, dashed: false },
                    Series { label: "analytic", points: analytic, dashed: true },
                ],
            ),
        ));
        let (alpha, st) = insert_state(cfg, s.insert_e_over_ed)?;
        let mut buf = format!("# insert at alpha = {alpha:e}\n").into_bytes();
        st.write_csv(&mut buf)?;
        side.push(("_insert.csv".to_string(), tagged(buf)));
        let len = st.cell_length();
        let curve = |g: &dyn Fn(&mirrorless_core::steady::FieldState) -> f64| -> Vec<(f64, f64)> {
            st.grid.iter().zip(&st.fields).map(|(z, f)| (z / len, g(f) / st.drive)).collect()
        };
        side.push((
            "_insert.svg".to_string(),
            line_plot(
                &format!("Field moduli at E/E_d = {:.3}", st.amplitude_ratio()),
                "z / L",
                "|E| / E_d",
                &[
                    Series { label: "|E1|", points: curve(&|f| f.e1.norm()), dashed: false },
                    Series { label: "|E2|", points: curve(&|f| f.e2.norm()), dashed: false },
                    Series { label: "|Ef|", points: curve(&|f| f.ef.norm()), dashed: true },
                    Series { label: "|Eb|", points: curve(&|f| f.eb.norm()), dashed: true },
                ],
            ),
        ));
    }
    let failure = table.failed().then(|| {
        CliError::Solver(format!(
            "{} of {} sweep points failed",
            table.solver_failures(),
            table.rows.len()
        ))
    });
    Ok(Output { main, side, failure })
}

pub fn mc_options(cfg: &RunConfig) -> Result<MonteCarloOptions, CliError> {
    let omegas = cfg.mc.omega_band.grid(&cfg.medium()?, &cfg.pumps()?)?;
    let mut o = MonteCarloOptions::new(omegas, cfg.mc.n_realizations, cfg.mc.master_seed);
    o.band_fraction = cfg.mc.band_fraction;
    Ok(o)
}

fn report_csv(r: &mirrorless_core::noise::LinewidthReport) -> String {
    let mut s = kv_csv(
        "linewidth report",
        &[
            ("eta", format!("{:e}", r.eta), "1"),
            ("tau_gr", format!("{:e}", r.tau_gr), "s"),
            ("p_out", format!("{:e}", r.p_out), "W"),
            ("dnu_closed", format!("{:e}", r.dnu_closed), "rad/s"),
            ("dnu_group_delay", format!("{:e}", r.dnu_group_delay), "rad/s"),
            ("dnu_lossy", format!("{:e}", r.dnu_lossy), "rad/s"),
            ("dnu_semianalytic", opt(r.dnu_semianalytic), "rad/s"),
            ("dnu_monte_carlo", opt(r.dnu_monte_carlo), "rad/s"),
            ("dnu_monte_carlo_stderr", opt(r.dnu_monte_carlo_stderr), "rad/s"),
            ("omega_band_lo", opt(r.omega_band.map(|b| b[0])), "rad/s"),
            ("omega_band_hi", opt(r.omega_band.map(|b| b[1])), "rad/s"),
        ],
    );
    if let Some(seed) = r.master_seed {
        let _ = writeln!(s, "master_seed,{seed},1");
    }
    s
}

pub fn linewidth(cfg: &RunConfig, fmt: Format) -> Result<Output, CliError> {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let st = solve(cfg)?;
    let steady = (st.branch == Branch::Oscillating).then_some(&st);
    let (report, _) = linewidth_report(&params, &pumps, cfg.linewidth.p_out_w, steady, None)?;
    let disp = dispersion_report(&params, &pumps);
    Ok(Output::text(match fmt {
        Format::Json => pretty(&json!({
            "units": {"linewidth": "rad/s", "tau_gr": "s", "p_out": "W", "frequency": "rad/s"},
            "branch": st.branch,
            "locked_beat": disp.locked_beat,
            "report": report,
        })),
        Format::Csv => report_csv(&report),
    }))
}

pub fn mc_linewidth(cfg: &RunConfig, fmt: Format) -> Result<Output, CliError> {
    let params = cfg.medium()?;
    let pumps = cfg.pumps()?;
    let st = solve(cfg)?;
    if st.branch != Branch::Oscillating {
        return Err(CliError::Input(
            "configuration is below threshold; the Monte Carlo linewidth needs the oscillating branch".into(),
        ));
    }
    let opts = mc_options(cfg)?;
    let (report, est) = linewidth_report(&params, &pumps, cfg.linewidth.p_out_w, Some(&st), Some(&opts))?;
    let est = est.expect("monte carlo requested");
    Ok(Output::text(match fmt {
        Format::Json => pretty(&json!({
            "units": {"linewidth": "rad/s", "omega": "rad/s", "omega2_S_phi": "rad/s", "tau_gr": "s", "p_out": "W"},
            "correlator_model": CORRELATOR_MODEL,
            "report": report,
            "spectrum": est.spectrum,
        })),
        Format::Csv => {
            let mut buf = Vec::new();
            est.write_csv(&mut buf)?;
            let mut s = String::from_utf8(buf).expect("ascii csv");
            let _ = write!(
                s,
                "# dnu_monte_carlo_rad_s: {:e}; stderr_rad_s: {:e}; dnu_semianalytic_rad_s: {}; tau_gr_s: {:e}\n",
                est.linewidth,
                est.stderr,
                opt(report.dnu_semianalytic),
                group_delay(&params, &pumps)
            );
            s
        }
    }))
}
