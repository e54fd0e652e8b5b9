//! Oscillation threshold with and without ground-state decay, threshold pump
//! photon flux and photon-number bookkeeping.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::model::MediumParams;

/// Ratio γ₀|Δ|/(2E_d²); ξ is real when this is at most one.
fn loss_ratio(ed2: f64, params: &MediumParams) -> f64 {
    params.ground_decay() * params.one_photon_detuning().abs() / (2.0 * ed2)
}

fn check_ed2(ed2: f64) -> Result<()> {
    if ed2 > 0.0 && ed2.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("pump intensity must be > 0, got {ed2:e}")))
    }
}

/// ξL with ξ = κ√(1/Δ² − γ₀²/4E_d⁴), or `None` when the radicand is negative.
pub fn effective_coupling(ed2: f64, params: &MediumParams) -> Result<Option<f64>> {
    check_ed2(ed2)?;
    let c = loss_ratio(ed2, params);
    if c > 1.0 {
        return Ok(None);
    }
    let kl_over_delta = params.coupling_constant() * params.cell_length() / params.one_photon_detuning().abs();
    Ok(Some(kl_over_delta * ((1.0 - c) * (1.0 + c)).sqrt()))
}

/// cos(ξL) + (γ₀Δ/2E_d²)·sin(ξL); errors in the hyperbolic regime.
pub fn oscillatory_determinant(ed2: f64, params: &MediumParams) -> Result<f64> {
    let xi_l = effective_coupling(ed2, params)?.ok_or_else(|| {
        Error::Domain(format!(
            "E_d^2 = {ed2:e} is below the floor gamma0*|Delta|/2 = {:e}; only the hyperbolic form exists",
            threshold_floor(params)
        ))
    })?;
    let coeff = params.ground_decay() * params.one_photon_detuning() / (2.0 * ed2);
    Ok(xi_l.cos() + coeff * xi_l.sin())
}

/// Lossy threshold condition evaluated at pump intensity `ed2` (rad²/s²).
///
/// Below the floor γ₀|Δ|/2 the analytic continuation
/// cosh(|ξ|L) + (γ₀Δ/2E_d²)·sinh(|ξ|L) is returned.
pub fn threshold_residual(ed2: f64, params: &MediumParams) -> Result<f64> {
    check_ed2(ed2)?;
    let c = loss_ratio(ed2, params);
    if c <= 1.0 {
        return oscillatory_determinant(ed2, params);
    }
    let coeff = params.ground_decay() * params.one_photon_detuning() / (2.0 * ed2);
    let kl_over_delta = params.coupling_constant() * params.cell_length() / params.one_photon_detuning().abs();
    let x = kl_over_delta * ((c - 1.0) * (c + 1.0)).sqrt();
    Ok(x.cosh() + coeff * x.sinh())
}

/// γ₀|Δ|/2, the smallest pump intensity at which oscillation is possible.
pub fn threshold_floor(params: &MediumParams) -> f64 {
    params.ground_decay() * params.one_photon_detuning().abs() / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Effective coupling ξL at threshold; π/2 in the lossless limit.
    pub alpha_critical: Option<f64>,
    /// Threshold E_d², rad²/s². Zero in the lossless case: any pump works.
    pub ed2_threshold: Option<f64>,
    /// Threshold condition evaluated at the returned root.
    pub residual: f64,
    pub feasible: bool,
    /// γ₀|Δ|/2, rad²/s².
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdOptions {
    /// Bracketing stops at this multiple of the floor.
    pub ed2_max_factor: f64,
    pub scan_points: usize,
    pub tolerance: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            ed2_max_factor: 1e6,
            scan_points: 4000,
            tolerance: 1e-10,
        }
    }
}

/// Smallest pump intensity satisfying the threshold condition.
pub fn threshold_pump_intensity(params: &MediumParams, opts: &ThresholdOptions) -> Result<ThresholdResult> {
    let alpha = params.positive_alpha()?;
    let gamma0 = params.ground_decay();
    if gamma0 == 0.0 {
        let feasible = alpha >= FRAC_PI_2;
        return Ok(ThresholdResult {
            alpha_critical: Some(FRAC_PI_2),
            ed2_threshold: feasible.then_some(0.0),
            residual: FRAC_PI_2.cos(),
            feasible,
            floor: 0.0,
        });
    }
    let floor = threshold_floor(params);
    let lo = floor * (1.0 + 1e-12);
    let hi = floor * opts.ed2_max_factor;
    let infeasible = ThresholdResult {
        alpha_critical: None,
        ed2_threshold: None,
        residual: threshold_residual(hi, params)?,
        feasible: false,
        floor,
    };
    if alpha < FRAC_PI_2 {
        return Ok(infeasible);
    }

    // scan on a log grid for the first sign change, then bisect in log space
    let n = opts.scan_points.max(2);
    let ratio = (hi / lo).ln();
    let at = |k: usize| lo * (ratio * k as f64 / (n - 1) as f64).exp();
    let mut a = lo;
    let mut ra = threshold_residual(a, params)?;
    let mut bracket = None;
    for k in 1..n {
        let b = at(k);
        let rb = threshold_residual(b, params)?;
        if rb == 0.0 {
            bracket = Some((b, b));
            break;
        }
        if ra.signum() != rb.signum() {
            bracket = Some((a, b));
            break;
        }
        a = b;
        ra = rb;
    }
    let Some((mut a, mut b)) = bracket else {
        return Ok(infeasible);
    };
    let mut ra = threshold_residual(a, params)?;
    let mut root = b;
    for _ in 0..200 {
        let mid = (a * b).sqrt();
        let rm = threshold_residual(mid, params)?;
        root = mid;
        if rm.abs() <= opts.tolerance * 1e-3 || (b - a) <= 4.0 * f64::EPSILON * b {
            break;
        }
        if rm.signum() == ra.signum() {
            a = mid;
            ra = rm;
        } else {
            b = mid;
        }
    }
    let residual = threshold_residual(root, params)?;
    if residual.abs() > opts.tolerance {
        return Err(Error::NoConvergence {
            iterations: 200,
            residual: residual.abs(),
        });
    }
    Ok(ThresholdResult {
        alpha_critical: effective_coupling(root, params)?,
        ed2_threshold: Some(root),
        residual,
        feasible: true,
        floor,
    })
}

/// Threshold pump photon flux f·𝒩·γ₀, photons/s.
pub fn threshold_photon_flux(params: &MediumParams, prefactor: f64) -> Result<f64> {
    if !(prefactor > 0.0) {
        return Err(Error::Domain(format!("prefactor must be > 0, got {prefactor}")));
    }
    Ok(prefactor * params.atom_count() * params.ground_decay())
}

/// Per-mode photon number n with P_out·τ_gr/(ħν) = 2n.
pub fn photons_in_cell(p_out: f64, tau_gr: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("optical frequency must be > 0, got {nu:e}")));
    }
    if p_out < 0.0 || tau_gr < 0.0 {
        return Err(Error::Domain("power and group delay must be >= 0".into()));
    }
    Ok(p_out * tau_gr / (2.0 * HBAR * nu))
}
