//! Quantum phase noise of the generated field: the linearised fluctuation
//! system, the closed-form linewidths, a quadrature of the phase response, and
//! a seeded Monte Carlo estimator over stochastic realisations.
//!
//! Noise model: only the cross-correlation ⟨f₁f₂⟩ = (κ²L/𝒩)(i/Δ)δ(z−z′) is
//! kept, split evenly between the quadrature pairs (Im f₁, Re f₂) and
//! (Re f₁, Im f₂). Autocorrelations are set to zero. The pair covariance is
//! not positive semidefinite, so samples are drawn as complex conjugate
//! combinations of real normals and spectra are estimated from the formal
//! square Re(δφ²).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::constants::{HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::model::{group_delay, stabilization_factor, MediumParams, PumpBoundary};
use crate::par::{map_indexed, Execution};
use crate::steady::{Branch, SteadyState};

/// Tag written into every linewidth output.
pub const CORRELATOR_MODEL: &str = "cross-only-symmetric-split";

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

type Mat2 = [[Complex64; 2]; 2];

/// Strength of the δ-correlated Langevin forces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// D = κ²L/(𝒩|Δ|)
    pub coefficient: f64,
    /// sign(Δ)
    pub sign: f64,
}

impl NoiseModel {
    pub fn from_params(params: &MediumParams) -> Self {
        let kappa = params.coupling_constant();
        let delta = params.one_photon_detuning();
        Self {
            coefficient: kappa * kappa * params.cell_length() / (params.atom_count() * delta.abs()),
            sign: delta.signum(),
        }
    }

    /// The signed cross-correlation strength D·sign(Δ).
    pub fn signed(&self) -> f64 {
        self.coefficient * self.sign
    }
}

/// Linearised fluctuation equations at a single Fourier frequency:
/// d/dz (δE₁*, δE₂) = M(ω)·(δE₁*, δE₂) + (f₁*, f₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationSystem {
    pub omega: f64,
    pub matrix: Mat2,
    pub noise: NoiseModel,
}

impl FluctuationSystem {
    pub fn noise_coefficient(&self) -> f64 {
        self.noise.coefficient
    }
}

/// Builds M(ω) with the constant coupling κ/Δ. `band_fraction` bounds |ω|
/// relative to E_d (0.01 by default in callers).
pub fn fluctuation_system_with_band(
    omega: f64,
    params: &MediumParams,
    pumps: &PumpBoundary,
    band_fraction: f64,
) -> Result<FluctuationSystem> {
    let ed2 = pumps.drive_intensity();
    if !omega.is_finite() || omega.abs() > band_fraction * ed2.sqrt() {
        return Err(Error::ValidityDomain(format!(
            "|omega| = {omega:e} rad/s exceeds {band_fraction}*E_d = {:e} rad/s",
            band_fraction * ed2.sqrt()
        )));
    }
    let kappa = params.coupling_constant();
    let p = kappa / params.one_photon_detuning();
    let a = -kappa * omega / ed2 - omega / SPEED_OF_LIGHT;
    let b = omega / SPEED_OF_LIGHT;
    Ok(FluctuationSystem {
        omega,
        matrix: [[I * a, I * p], [I * p, I * b]],
        noise: NoiseModel::from_params(params),
    })
}

pub fn fluctuation_system(
    omega: f64,
    params: &MediumParams,
    pumps: &PumpBoundary,
) -> Result<FluctuationSystem> {
    fluctuation_system_with_band(omega, params, pumps, 0.01)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {v:e}")))
    }
}

/// Δν₁ = (2E_d⁴/Δ²)·ħν/P_out, rad/s.
pub fn linewidth_closed_form(params: &MediumParams, pumps: &PumpBoundary, p_out: f64) -> Result<f64> {
    positive("P_out", p_out)?;
    let ed2 = pumps.drive_intensity();
    let delta = params.one_photon_detuning();
    Ok(2.0 * ed2 * ed2 / (delta * delta) * HBAR * params.optical_frequency() / p_out)
}

/// Δν₁ = (π²/8)·τ_gr⁻¹·(τ_gr⁻¹ + 2γ₀)·ħν/P_out, rad/s.
pub fn linewidth_group_delay_form(tau_gr: f64, gamma0: f64, nu: f64, p_out: f64) -> Result<f64> {
    positive("tau_gr", tau_gr)?;
    positive("P_out", p_out)?;
    if !(gamma0 >= 0.0) {
        return Err(Error::Domain(format!("gamma0 must be >= 0, got {gamma0:e}")));
    }
    let inv = 1.0 / tau_gr;
    Ok(std::f64::consts::PI.powi(2) / 8.0 * inv * (inv + 2.0 * gamma0) * HBAR * nu / p_out)
}

/// Output power carried by a generated field of magnitude |E₁(L)|, W.
///
/// The photon flux through the exit face is taken as 𝒩|E₁(L)|²/(κL). This is
/// the normalisation under which the phase-response quadrature reduces to the
/// closed-form linewidth.
pub fn output_power(params: &MediumParams, e1_out: f64) -> f64 {
    HBAR * params.optical_frequency() * params.atom_count() * e1_out * e1_out
        / (params.coupling_constant() * params.cell_length())
}

/// Inverse of [`output_power`]: |E₁(L)| in rad/s.
pub fn output_field_magnitude(params: &MediumParams, p_out: f64) -> Result<f64> {
    positive("P_out", p_out)?;
    let kappa = params.coupling_constant();
    positive("kappa", kappa)?;
    Ok((kappa * params.cell_length() * p_out / (HBAR * params.optical_frequency() * params.atom_count()))
        .sqrt())
}

fn require_oscillating(steady: &SteadyState) -> Result<()> {
    if steady.branch != Branch::Oscillating || steady.amplitude <= 0.0 {
        return Err(Error::Domain("phase noise needs the oscillating branch".into()));
    }
    if steady.grid.len() < 3 {
        return Err(Error::Domain("steady-state grid needs at least 3 nodes".into()));
    }
    Ok(())
}

/// Composite Simpson rule on a (possibly non-uniform) grid. An odd number of
/// intervals closes with a three-eighths panel.
fn simpson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() - 1;
    let mut total = 0.0;
    let pairs_end = if n % 2 == 0 { n } else { n - 3 };
    let mut i = 0;
    while i < pairs_end {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let hs = h0 + h1;
        total += hs / 6.0
            * (y[i] * (2.0 - h1 / h0) + y[i + 1] * hs * hs / (h0 * h1) + y[i + 2] * (2.0 - h0 / h1));
        i += 2;
    }
    if n % 2 == 1 {
        if n == 1 {
            return 0.5 * (x[1] - x[0]) * (y[0] + y[1]);
        }
        let h = (x[n] - x[n - 3]) / 3.0;
        total += 3.0 * h / 8.0 * (y[n - 3] + 3.0 * y[n - 2] + 3.0 * y[n - 1] + y[n]);
    }
    total
}

/// ∫₀ᴸ sinθ cosθ dz over the steady-state grid.
pub fn mixing_overlap(steady: &SteadyState) -> f64 {
    let y: Vec<f64> = steady.theta.iter().map(|t| t.sin() * t.cos()).collect();
    simpson(&steady.grid, &y)
}

/// ω²⟨δφ₁(L,ω)δφ₁(L,−ω)⟩ from the phase-response integral, for the given
/// noise strength.
pub fn phase_variance_with_noise(
    params: &MediumParams,
    pumps: &PumpBoundary,
    steady: &SteadyState,
    p_out: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    require_oscillating(steady)?;
    let e1 = output_field_magnitude(params, p_out)?;
    let eta = stabilization_factor(params, pumps);
    let pref = params.coupling_constant() * SPEED_OF_LIGHT
        / (params.one_photon_detuning() * e1 * (1.0 + eta));
    Ok(pref * pref * noise.signed() * mixing_overlap(steady))
}

/// Linewidth Δν₁ from the phase-response quadrature, rad/s.
pub fn phase_variance_semianalytic(
    params: &MediumParams,
    pumps: &PumpBoundary,
    steady: &SteadyState,
    p_out: f64,
) -> Result<f64> {
    phase_variance_with_noise(params, pumps, steady, p_out, &NoiseModel::from_params(params))
}

/// The quadrature phase spectrum S_φ(ω) = Δν₁/ω² on `omegas`.
pub fn phase_spectrum_semianalytic(
    params: &MediumParams,
    pumps: &PumpBoundary,
    steady: &SteadyState,
    p_out: f64,
    omegas: &[f64],
) -> Result<Vec<f64>> {
    let dnu = phase_variance_semianalytic(params, pumps, steady, p_out)?;
    omegas
        .iter()
        .map(|&w| {
            fluctuation_system(w, params, pumps)?;
            if w == 0.0 {
                return Err(Error::ValidityDomain("omega must be nonzero".into()));
            }
            Ok(dnu / (w * w))
        })
        .collect()
}

/// Logarithmic extraction band, as fractions of min(E_d, 1/τ_gr).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmegaBand {
    pub lo_fraction: f64,
    pub hi_fraction: f64,
    pub points: usize,
}

impl Default for OmegaBand {
    fn default() -> Self {
        Self { lo_fraction: 1e-4, hi_fraction: 1e-2, points: 8 }
    }
}

impl OmegaBand {
    /// Reference rate min(E_d, 1/τ_gr), rad/s.
    pub fn reference_rate(params: &MediumParams, pumps: &PumpBoundary) -> f64 {
        pumps.forward().norm().min(1.0 / group_delay(params, pumps))
    }

    pub fn grid(&self, params: &MediumParams, pumps: &PumpBoundary) -> Result<Vec<f64>> {
        if !(self.lo_fraction > 0.0 && self.hi_fraction > self.lo_fraction) || self.points < 1 {
            return Err(Error::Domain(format!(
                "omega band needs 0 < lo < hi and at least one point, got {:?}",
                self
            )));
        }
        let r = Self::reference_rate(params, pumps);
        let (l0, l1) = (self.lo_fraction.ln(), self.hi_fraction.ln());
        Ok((0..self.points)
            .map(|k| {
                let t = if self.points == 1 { 0.0 } else { k as f64 / (self.points - 1) as f64 };
                r * (l0 + t * (l1 - l0)).exp()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    pub omegas: Vec<f64>,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub execution: Execution,
    /// Largest allowed |ω|/E_d.
    pub band_fraction: f64,
    /// Overrides the noise strength derived from the medium.
    pub noise: Option<NoiseModel>,
}

impl MonteCarloOptions {
    pub fn new(omegas: Vec<f64>, n_realizations: usize, master_seed: u64) -> Self {
        Self {
            omegas,
            n_realizations,
            master_seed,
            execution: Execution::default(),
            band_fraction: 0.01,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub omega: f64,
    /// ω²·S_φ(ω), rad/s
    pub omega2_s_phi: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub linewidth: f64,
    pub stderr: f64,
    pub spectrum: Vec<SpectrumPoint>,
    pub n_realizations: usize,
    pub master_seed: u64,
}

impl MonteCarloEstimate {
    /// Spectrum CSV with a unit/metadata preamble.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: omega_rad_s in rad/s; omega2_S_phi and stderr in rad/s")?;
        writeln!(
            w,
            "# correlator_model: {CORRELATOR_MODEL}; master_seed: {}; n_realizations: {}",
            self.master_seed, self.n_realizations
        )?;
        writeln!(w, "omega_rad_s,omega2_S_phi,stderr")?;
        for p in &self.spectrum {
            writeln!(w, "{:e},{:e},{:e}", p.omega, p.omega2_s_phi, p.stderr)?;
        }
        Ok(())
    }
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// exp(A) for a 2×2 complex matrix.
fn expm2(a: &Mat2) -> Mat2 {
    let half_tr = (a[0][0] + a[1][1]) * 0.5;
    let d = (a[0][0] - a[1][1]) * 0.5;
    let s2 = d * d + a[0][1] * a[1][0];
    let s = s2.sqrt();
    let (ch, sh_over_s) = if s.norm() < 1e-4 {
        (1.0 + s2 / 2.0 + s2 * s2 / 24.0, 1.0 + s2 / 6.0 + s2 * s2 / 120.0)
    } else {
        (s.cosh(), s.sinh() / s)
    };
    let e = half_tr.exp();
    [
        [e * (ch + sh_over_s * d), e * sh_over_s * a[0][1]],
        [e * sh_over_s * a[1][0], e * (ch - sh_over_s * d)],
    ]
}

/// Real response coefficients of δφ₁(L) to the cell-integrated force
/// components (Re f₁, Im f₁, Re f₂, Im f₂), one entry per cell.
fn phase_response(
    omega: f64,
    params: &MediumParams,
    pumps: &PumpBoundary,
    steady: &SteadyState,
    e1_out: f64,
) -> Result<Vec<[f64; 4]>> {
    let kappa = params.coupling_constant();
    let ed2 = pumps.drive_intensity();
    let a = -kappa * omega / ed2 - omega / SPEED_OF_LIGHT;
    let b = omega / SPEED_OF_LIGHT;
    let cells = steady.grid.len() - 1;

    // The coupling follows the local rotation rate of the classical mode,
    // which makes the ω → 0 limit carry the exact zero mode.
    let mut full = Vec::with_capacity(cells);
    let mut half = Vec::with_capacity(cells);
    for i in 0..cells {
        let h = steady.grid[i + 1] - steady.grid[i];
        let p = (steady.theta[i + 1] - steady.theta[i]) / h;
        let m = [[I * a, I * p], [I * p, I * b]];
        let scaled = |f: f64| -> Mat2 {
            [[m[0][0] * f, m[0][1] * f], [m[1][0] * f, m[1][1] * f]]
        };
        full.push(expm2(&scaled(h)));
        half.push(expm2(&scaled(0.5 * h)));
    }

    // suffix[i]: propagator from z_{i+1} to L
    let identity = [[Complex64::new(1.0, 0.0), Complex64::default()], [Complex64::default(), Complex64::new(1.0, 0.0)]];
    let mut suffix = vec![identity; cells];
    for i in (0..cells.saturating_sub(1)).rev() {
        suffix[i] = mat_mul(&suffix[i + 1], &full[i + 1]);
    }
    let total = mat_mul(&suffix[0], &full[0]);
    let t11 = total[1][1];
    if !(t11.norm() > 0.0) || !t11.is_finite() {
        return Err(Error::NonFinite(format!(
            "degenerate transfer matrix at omega = {omega:e} rad/s (T22 = {t11})"
        )));
    }
    let ratio = total[0][1] / t11;
    let phase = Complex64::from_polar(1.0, steady.output_field().arg());

    let mut coeffs = Vec::with_capacity(cells);
    for i in 0..cells {
        let g = mat_mul(&suffix[i], &half[i]);
        let rho1 = (g[0][0] - ratio * g[1][0]) * phase;
        let rho2 = (g[0][1] - ratio * g[1][1]) * phase;
        let c = [
            -rho1.im / e1_out,
            rho1.re / e1_out,
            -rho2.im / e1_out,
            -rho2.re / e1_out,
        ];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "non-finite phase response in cell {i} at omega = {omega:e} rad/s"
            )));
        }
        coeffs.push(c);
    }
    Ok(coeffs)
}

/// Stochastic estimate of Δν₁ with its standard error.
///
/// Each realisation draws its own stream from a ChaCha generator keyed by
/// (master_seed, realisation index), and per-realisation results are reduced
/// in index order, so the output is independent of the execution mode.
pub fn monte_carlo_linewidth(
    params: &MediumParams,
    pumps: &PumpBoundary,
    steady: &SteadyState,
    p_out: f64,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloEstimate> {
    require_oscillating(steady)?;
    if opts.n_realizations < 100 {
        return Err(Error::Domain(format!(
            "n_realizations must be >= 100, got {}",
            opts.n_realizations
        )));
    }
    if opts.omegas.is_empty() {
        return Err(Error::Domain("omega grid is empty".into()));
    }
    for &w in &opts.omegas {
        if !(w > 0.0) {
            return Err(Error::ValidityDomain(format!("omega must be > 0, got {w:e}")));
        }
        fluctuation_system_with_band(w, params, pumps, opts.band_fraction)?;
    }
    let e1_out = output_field_magnitude(params, p_out)?;
    let noise = opts.noise.unwrap_or_else(|| NoiseModel::from_params(params));

    let responses = opts
        .omegas
        .iter()
        .map(|&w| phase_response(w, params, pumps, steady, e1_out))
        .collect::<Result<Vec<_>>>()?;
    // per-cell scale of the complex quadrature samples
    let sigmas: Vec<Complex64> = steady
        .grid
        .windows(2)
        .map(|z| Complex64::new(noise.signed() * (z[1] - z[0]) / 4.0, 0.0).sqrt())
        .collect();

    let samples = map_indexed(opts.execution, opts.n_realizations, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.master_seed);
        rng.set_stream(r as u64);
        let mut out = Vec::with_capacity(opts.omegas.len());
        for (w, resp) in opts.omegas.iter().zip(&responses) {
            let mut dphi = Complex64::default();
            for (c, sigma) in resp.iter().zip(&sigmas) {
                let xi: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                // pair (Im f1, Re f2) and pair (Re f1, Im f2)
                let im_f1 = sigma * Complex64::new(xi[0], xi[1]);
                let re_f2 = sigma * Complex64::new(xi[0], -xi[1]);
                let re_f1 = sigma * Complex64::new(xi[2], xi[3]);
                let im_f2 = sigma * Complex64::new(xi[2], -xi[3]);
                dphi += re_f1 * c[0] + im_f1 * c[1] + re_f2 * c[2] + im_f2 * c[3];
            }
            out.push(w * w * (dphi * dphi).re);
        }
        out
    });

    let n = opts.n_realizations as f64;
    let mut spectrum = Vec::with_capacity(opts.omegas.len());
    for (k, &w) in opts.omegas.iter().enumerate() {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        if !mean.is_finite() || !stderr.is_finite() {
            return Err(Error::NonFinite(format!("non-finite spectrum at omega = {w:e} rad/s")));
        }
        spectrum.push(SpectrumPoint { omega: w, omega2_s_phi: mean, stderr });
    }
    let m = spectrum.len() as f64;
    let linewidth = spectrum.iter().map(|p| p.omega2_s_phi).sum::<f64>() / m;
    let stderr = spectrum.iter().map(|p| p.stderr * p.stderr).sum::<f64>().sqrt() / m;
    Ok(MonteCarloEstimate {
        linewidth,
        stderr,
        spectrum,
        n_realizations: opts.n_realizations,
        master_seed: opts.master_seed,
    })
}

/// All linewidth estimates for one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthReport {
    pub eta: f64,
    /// s
    pub tau_gr: f64,
    /// W
    pub p_out: f64,
    /// rad/s
    pub dnu_closed: f64,
    pub dnu_group_delay: f64,
    pub dnu_lossy: f64,
    pub dnu_semianalytic: Option<f64>,
    pub dnu_monte_carlo: Option<f64>,
    pub dnu_monte_carlo_stderr: Option<f64>,
    /// [lo, hi] of the extraction band, rad/s
    pub omega_band: Option<[f64; 2]>,
    pub correlator_model: String,
    pub master_seed: Option<u64>,
    pub n_realizations: Option<usize>,
}

/// Closed forms always; the quadrature when `steady` is given and oscillating;
/// Monte Carlo when `mc` is also given.
pub fn linewidth_report(
    params: &MediumParams,
    pumps: &PumpBoundary,
    p_out: f64,
    steady: Option<&SteadyState>,
    mc: Option<&MonteCarloOptions>,
) -> Result<(LinewidthReport, Option<MonteCarloEstimate>)> {
    let tau_gr = group_delay(params, pumps);
    let nu = params.optical_frequency();
    let mut report = LinewidthReport {
        eta: stabilization_factor(params, pumps),
        tau_gr,
        p_out,
        dnu_closed: linewidth_closed_form(params, pumps, p_out)?,
        dnu_group_delay: linewidth_group_delay_form(tau_gr, 0.0, nu, p_out)?,
        dnu_lossy: linewidth_group_delay_form(tau_gr, params.ground_decay(), nu, p_out)?,
        dnu_semianalytic: None,
        dnu_monte_carlo: None,
        dnu_monte_carlo_stderr: None,
        omega_band: None,
        correlator_model: CORRELATOR_MODEL.to_string(),
        master_seed: None,
        n_realizations: None,
    };
    let mut estimate = None;
    if let Some(st) = steady {
        report.dnu_semianalytic = Some(phase_variance_semianalytic(params, pumps, st, p_out)?);
        if let Some(opts) = mc {
            let est = monte_carlo_linewidth(params, pumps, st, p_out, opts)?;
            let lo = opts.omegas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = opts.omegas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            report.dnu_monte_carlo = Some(est.linewidth);
            report.dnu_monte_carlo_stderr = Some(est.stderr);
            report.omega_band = Some([lo, hi]);
            report.master_seed = Some(opts.master_seed);
            report.n_realizations = Some(opts.n_realizations);
            estimate = Some(est);
        }
    }
    Ok((report, estimate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::{solve_steady_state, SolverOptions};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn desk() -> (MediumParams, PumpBoundary) {
        (MediumParams::builder().build().unwrap(), PumpBoundary::equal(2.0 * PI * 1e6).unwrap())
    }

    #[test]
    fn zero_frequency_matrix() {
        let (p, b) = desk();
        let sys = fluctuation_system(0.0, &p, &b).unwrap();
        let off = p.coupling_constant() / p.one_photon_detuning();
        assert_eq!(sys.matrix[0][0], Complex64::default());
        assert_eq!(sys.matrix[1][1], Complex64::default());
        assert_eq!(sys.matrix[0][1], I * off);
        assert_eq!(sys.matrix[0][1], sys.matrix[1][0]);
    }

    #[test]
    fn dispersion_to_vacuum_ratio_is_two_eta() {
        let (p, b) = desk();
        let eta = stabilization_factor(&p, &b);
        for w in [1.0, -30.0, 5e3] {
            let sys = fluctuation_system(w, &p, &b).unwrap();
            let vacuum = w / SPEED_OF_LIGHT;
            let dispersion = -(sys.matrix[0][0].im + vacuum);
            assert!((dispersion / vacuum / (2.0 * eta) - 1.0).abs() < 1e-12);
            assert_eq!(sys.matrix[0][1], sys.matrix[1][0]);
        }
    }

    #[test]
    fn out_of_band_rejected() {
        let (p, b) = desk();
        let ed = b.forward().norm();
        assert!(matches!(fluctuation_system(0.02 * ed, &p, &b), Err(Error::ValidityDomain(_))));
        assert!(fluctuation_system_with_band(0.02 * ed, &p, &b, 0.05).is_ok());
    }

    #[test]
    fn noise_doubles_when_atoms_halve() {
        let (p, _) = desk();
        let half = p.to_builder().beam_area(p.beam_area() / 2.0).build().unwrap();
        let r = NoiseModel::from_params(&half).coefficient / NoiseModel::from_params(&p).coefficient;
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_numeric_example() {
        let p = MediumParams::builder()
            .one_photon_detuning(1e9)
            .optical_frequency(2.4e15)
            .build()
            .unwrap();
        let b = PumpBoundary::equal(1e6).unwrap();
        let v = linewidth_closed_form(&p, &b, 1e-12).unwrap();
        let oracle = 2.0 * 1e24 / 1e18 * (1.054_571_817e-34 * 2.4e15) / 1e-12;
        assert!((v / oracle - 1.0).abs() < 1e-12);
        assert!((v - 5.06e-1).abs() < 1e-3);
        let v2 = linewidth_closed_form(&p, &b, 2e-12).unwrap();
        assert!((v / v2 - 2.0).abs() < 1e-12);
        assert!(linewidth_closed_form(&p, &b, 0.0).is_err());
    }

    #[test]
    fn group_delay_form_cases() {
        let nu = 2.4e15;
        let tau = 1e-4;
        let base = linewidth_group_delay_form(tau, 0.0, nu, 1e-9).unwrap();
        let oracle = PI * PI / 8.0 / (tau * tau) * HBAR * nu / 1e-9;
        assert!((base / oracle - 1.0).abs() < 1e-14);
        let lossy = linewidth_group_delay_form(tau, 10.0 / tau, nu, 1e-9).unwrap();
        assert!((lossy / base - 21.0).abs() < 1e-12);
        let g0 = 1e6 / tau;
        let dominated = linewidth_group_delay_form(tau, g0, nu, 1e-9).unwrap();
        let limit = PI * PI / 4.0 * g0 / tau * HBAR * nu / 1e-9;
        assert!((dominated / limit - 1.0).abs() < 2e-6);
        assert!(linewidth_group_delay_form(0.0, 0.0, nu, 1e-9).is_err());
        assert!(linewidth_group_delay_form(tau, 0.0, nu, -1.0).is_err());
    }

    #[test]
    fn power_round_trip() {
        let (p, _) = desk();
        let e = output_field_magnitude(&p, 3e-9).unwrap();
        assert!((output_power(&p, e) / 3e-9 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_exactness() {
        // non-uniform pairs integrate quadratics exactly
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.37).powf(1.3)).collect();
        let q = |t: f64| 3.0 * t * t - t + 0.5;
        let yq: Vec<f64> = x.iter().map(|&t| q(t)).collect();
        let qp = |t: f64| t * t * t - 0.5 * t * t + 0.5 * t;
        assert!((simpson(&x, &yq) - (qp(x[6]) - qp(x[0]))).abs() < 1e-12);
        // uniform grid with an odd interval count integrates cubics exactly
        let c = |t: f64| 2.0 * t * t * t - t + 0.5;
        let cp = |t: f64| 0.5 * t.powi(4) - 0.5 * t * t + 0.5 * t;
        let u: Vec<f64> = (0..8).map(|i| i as f64 * 0.25).collect();
        let yu: Vec<f64> = u.iter().map(|&t| c(t)).collect();
        assert!((simpson(&u, &yu) - (cp(1.75) - cp(0.0))).abs() < 1e-12);
    }

    #[test]
    fn expm_matches_series() {
        let a: Mat2 = [
            [Complex64::new(0.1, -0.3), Complex64::new(0.0, 0.7)],
            [Complex64::new(0.2, 0.7), Complex64::new(-0.4, 0.05)],
        ];
        let mut term = [[Complex64::new(1.0, 0.0), Complex64::default()], [Complex64::default(), Complex64::new(1.0, 0.0)]];
        let mut sum = term;
        for k in 1..40 {
            term = mat_mul(&term, &a);
            for row in term.iter_mut() {
                for v in row.iter_mut() {
                    *v /= k as f64;
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        let e = expm2(&a);
        for i in 0..2 {
            for j in 0..2 {
                assert!((e[i][j] - sum[i][j]).norm() < 1e-13);
            }
        }
    }

    fn near_threshold() -> (MediumParams, PumpBoundary, SteadyState) {
        let (p, b) = desk();
        let p = p.with_alpha(FRAC_PI_2 * 1.0005).unwrap();
        let st = solve_steady_state(&p, &b, &SolverOptions::default()).unwrap();
        (p, b, st)
    }

    #[test]
    fn quadrature_reproduces_closed_form() {
        let (p, b, st) = near_threshold();
        assert_eq!(st.branch, Branch::Oscillating);
        let p_out = 1e-9;
        let semi = phase_variance_semianalytic(&p, &b, &st, p_out).unwrap();
        let closed = linewidth_closed_form(&p, &b, p_out).unwrap();
        assert!((semi / closed - 1.0).abs() < 1e-3, "{semi} vs {closed}");
        let zero = NoiseModel { coefficient: 0.0, sign: 1.0 };
        assert_eq!(phase_variance_with_noise(&p, &b, &st, p_out, &zero).unwrap(), 0.0);
    }

    #[test]
    fn zero_branch_rejected() {
        let (p, b) = desk();
        let p = p.with_alpha(1.2).unwrap();
        let st = solve_steady_state(&p, &b, &SolverOptions::default()).unwrap();
        assert!(matches!(phase_variance_semianalytic(&p, &b, &st, 1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn monte_carlo_small_run() {
        let (p, b, st) = near_threshold();
        let omegas = OmegaBand::default().grid(&p, &b).unwrap();
        let mut opts = MonteCarloOptions::new(omegas, 200, 7);
        let a = monte_carlo_linewidth(&p, &b, &st, 1e-9, &opts).unwrap();
        opts.execution = Execution::Sequential;
        let c = monte_carlo_linewidth(&p, &b, &st, 1e-9, &opts).unwrap();
        assert_eq!(a, c);
        let semi = phase_variance_semianalytic(&p, &b, &st, 1e-9).unwrap();
        assert!((a.linewidth - semi).abs() < 5.0 * a.stderr, "{} +- {} vs {semi}", a.linewidth, a.stderr);

        opts.noise = Some(NoiseModel { coefficient: 0.0, sign: 1.0 });
        let z = monte_carlo_linewidth(&p, &b, &st, 1e-9, &opts).unwrap();
        assert_eq!(z.linewidth, 0.0);
        assert_eq!(z.stderr, 0.0);

        opts.n_realizations = 99;
        assert!(matches!(monte_carlo_linewidth(&p, &b, &st, 1e-9, &opts), Err(Error::Domain(_))));
    }
}
