//! Medium and pump parameters plus the algebraic dispersion relations:
//! coupling constant, stabilisation factor, group delay, phase matching and
//! frequency pulling of the generated beat note.
//!
//! Every frequency-like quantity is angular (rad/s). Conversion from Hz is the
//! caller's job.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::SPEED_OF_LIGHT;
use crate::error::{invalid, Error, Result};

/// Atomic and geometric constants of the vapor cell, SI units.
///
/// Construct through [`MediumParams::builder`]; the fields are validated once
/// at build time and every derived quantity can then be computed infallibly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    atom_density: f64,
    wavelength: f64,
    radiative_decay: f64,
    ground_decay: f64,
    one_photon_detuning: f64,
    two_photon_detuning: f64,
    raman_splitting: f64,
    cell_length: f64,
    phase_mismatch: f64,
    beam_area: f64,
    optical_frequency: f64,
}

/// Builder for [`MediumParams`]. Defaults describe a warm Rb D1 cell with a
/// 1 mm² beam, tuned close to the ideal oscillation threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumBuilder {
    inner: MediumParams,
}

impl Default for MediumBuilder {
    fn default() -> Self {
        Self {
            inner: MediumParams {
                atom_density: 1e17,
                wavelength: 795e-9,
                radiative_decay: 2.0 * PI * 5.75e6,
                ground_decay: 0.0,
                one_photon_detuning: 2.0 * PI * 5.52e8,
                two_photon_detuning: 0.0,
                raman_splitting: 2.0 * PI * 6.834_682_610_904e9,
                cell_length: 0.02,
                phase_mismatch: 0.0,
                beam_area: 1e-6,
                optical_frequency: 2.0 * PI * SPEED_OF_LIGHT / 795e-9,
            },
        }
    }
}

macro_rules! setter {
    ($name:ident) => {
        pub fn $name(mut self, value: f64) -> Self {
            self.inner.$name = value;
            self
        }
    };
}

impl MediumBuilder {
    setter!(atom_density);
    setter!(wavelength);
    setter!(radiative_decay);
    setter!(ground_decay);
    setter!(one_photon_detuning);
    setter!(two_photon_detuning);
    setter!(raman_splitting);
    setter!(cell_length);
    setter!(phase_mismatch);
    setter!(beam_area);
    setter!(optical_frequency);

    pub fn build(self) -> Result<MediumParams> {
        self.inner.validate()?;
        Ok(self.inner)
    }
}

fn finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

impl MediumParams {
    pub fn builder() -> MediumBuilder {
        MediumBuilder::default()
    }

    /// Re-open an existing parameter set for modification.
    pub fn to_builder(self) -> MediumBuilder {
        MediumBuilder { inner: self }
    }

    fn validate(&self) -> Result<()> {
        finite("atom_density", self.atom_density)?;
        finite("wavelength", self.wavelength)?;
        finite("radiative_decay", self.radiative_decay)?;
        finite("ground_decay", self.ground_decay)?;
        finite("one_photon_detuning", self.one_photon_detuning)?;
        finite("two_photon_detuning", self.two_photon_detuning)?;
        finite("raman_splitting", self.raman_splitting)?;
        finite("cell_length", self.cell_length)?;
        finite("phase_mismatch", self.phase_mismatch)?;
        finite("beam_area", self.beam_area)?;
        finite("optical_frequency", self.optical_frequency)?;
        if self.atom_density < 0.0 {
            return Err(invalid("atom_density", "must be >= 0"));
        }
        if self.wavelength <= 0.0 {
            return Err(invalid("wavelength", "must be > 0"));
        }
        if self.radiative_decay <= 0.0 {
            return Err(invalid("radiative_decay", "must be > 0"));
        }
        if self.ground_decay < 0.0 {
            return Err(invalid("ground_decay", "must be >= 0"));
        }
        if self.one_photon_detuning == 0.0 {
            return Err(invalid("one_photon_detuning", "must be nonzero"));
        }
        if self.cell_length <= 0.0 {
            return Err(invalid("cell_length", "must be > 0"));
        }
        if self.beam_area <= 0.0 {
            return Err(invalid("beam_area", "must be > 0"));
        }
        if self.optical_frequency <= 0.0 {
            return Err(invalid("optical_frequency", "must be > 0"));
        }
        Ok(())
    }

    pub fn atom_density(&self) -> f64 {
        self.atom_density
    }
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
    pub fn radiative_decay(&self) -> f64 {
        self.radiative_decay
    }
    pub fn ground_decay(&self) -> f64 {
        self.ground_decay
    }
    pub fn one_photon_detuning(&self) -> f64 {
        self.one_photon_detuning
    }
    pub fn two_photon_detuning(&self) -> f64 {
        self.two_photon_detuning
    }
    pub fn raman_splitting(&self) -> f64 {
        self.raman_splitting
    }
    pub fn cell_length(&self) -> f64 {
        self.cell_length
    }
    pub fn phase_mismatch(&self) -> f64 {
        self.phase_mismatch
    }
    pub fn beam_area(&self) -> f64 {
        self.beam_area
    }
    pub fn optical_frequency(&self) -> f64 {
        self.optical_frequency
    }

    /// κ = (3/8π)·N·λ²·γ_a in rad/(m·s).
    pub fn coupling_constant(&self) -> f64 {
        3.0 / (8.0 * PI) * self.atom_density * self.wavelength * self.wavelength * self.radiative_decay
    }

    /// Dimensionless coupling α = κL/Δ. Oscillation analysis requires α > 0.
    pub fn alpha(&self) -> f64 {
        self.coupling_constant() * self.cell_length / self.one_photon_detuning
    }

    /// Total number of atoms in the illuminated volume, N·A·L.
    pub fn atom_count(&self) -> f64 {
        self.atom_density * self.beam_area * self.cell_length
    }

    /// Returns α after checking it is positive.
    pub fn positive_alpha(&self) -> Result<f64> {
        let alpha = self.alpha();
        if alpha > 0.0 && alpha.is_finite() {
            Ok(alpha)
        } else {
            Err(Error::Domain(format!(
                "oscillation analysis needs alpha = kappa*L/Delta > 0, got {alpha:.6e}"
            )))
        }
    }

    /// Copy with the cell length chosen so that κL/Δ equals `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let kappa = self.coupling_constant();
        if kappa <= 0.0 {
            return Err(Error::Domain("cannot set alpha with zero coupling".into()));
        }
        self.to_builder()
            .cell_length(alpha * self.one_photon_detuning / kappa)
            .build()
    }
}

/// Pump Rabi frequencies at their entry faces: forward pump at z = 0,
/// backward pump at z = L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpBoundary {
    ef_in: Complex64,
    eb_in: Complex64,
}

impl PumpBoundary {
    pub fn new(ef_in: Complex64, eb_in: Complex64) -> Result<Self> {
        if !(ef_in.re.is_finite() && ef_in.im.is_finite()) {
            return Err(invalid("forward_pump", "must be finite"));
        }
        if !(eb_in.re.is_finite() && eb_in.im.is_finite()) {
            return Err(invalid("backward_pump", "must be finite"));
        }
        if ef_in.norm() <= 0.0 {
            return Err(invalid("forward_pump", "|Ef_in| must be > 0"));
        }
        Ok(Self { ef_in, eb_in })
    }

    /// Equal, real and positive pumps of amplitude `ed`.
    pub fn equal(ed: f64) -> Result<Self> {
        Self::new(Complex64::new(ed, 0.0), Complex64::new(ed, 0.0))
    }

    pub fn forward(&self) -> Complex64 {
        self.ef_in
    }
    pub fn backward(&self) -> Complex64 {
        self.eb_in
    }

    /// E_d² ≡ |Ef_in|².
    pub fn drive_intensity(&self) -> f64 {
        self.ef_in.norm_sqr()
    }

    /// Whether |Ef_in| = |Eb_in| holds to 1e-12 relative.
    pub fn equal_magnitudes(&self) -> bool {
        (self.ef_in.norm() - self.eb_in.norm()).abs() <= 1e-12 * self.ef_in.norm()
    }

    /// Intensity imbalance |Eb|² − |Ef|².
    pub fn imbalance(&self) -> f64 {
        self.eb_in.norm_sqr() - self.ef_in.norm_sqr()
    }

    /// Both pumps multiplied by a common positive factor.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.ef_in * s, self.eb_in * s)
    }
}

/// Free-function form of [`MediumParams::coupling_constant`].
pub fn coupling_constant(params: &MediumParams) -> f64 {
    params.coupling_constant()
}

/// Stabilisation factor η = c·κ / (2|E_f|²).
pub fn stabilization_factor(params: &MediumParams, pumps: &PumpBoundary) -> f64 {
    SPEED_OF_LIGHT * params.coupling_constant() / (2.0 * pumps.drive_intensity())
}

/// Group delay τ_gr = (L/c)(1 + η).
pub fn group_delay(params: &MediumParams, pumps: &PumpBoundary) -> f64 {
    params.cell_length() / SPEED_OF_LIGHT * (1.0 + stabilization_factor(params, pumps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub eta: f64,
    /// m/s
    pub group_velocity: f64,
    /// s
    pub group_delay: f64,
    /// ν₁ − ν_d, rad/s
    pub locked_beat: f64,
    /// (|E_b|² − |E_f|²)/Δ, rad/s
    pub stark_shift: f64,
    /// Phase-matched two-photon detuning, rad/s; `None` when κ = 0.
    pub matched_detuning: Option<f64>,
}

pub fn dispersion_report(params: &MediumParams, pumps: &PumpBoundary) -> DispersionReport {
    let eta = stabilization_factor(params, pumps);
    let stark_shift = pumps.imbalance() / params.one_photon_detuning();
    DispersionReport {
        eta,
        group_velocity: SPEED_OF_LIGHT / (1.0 + eta),
        group_delay: params.cell_length() / SPEED_OF_LIGHT * (1.0 + eta),
        locked_beat: eta * (params.raman_splitting() + stark_shift) / (1.0 + eta),
        stark_shift,
        matched_detuning: matched_detuning(params, pumps).ok(),
    }
}

/// κδ/|E_f|² + κ(|E_b|² − |E_f|²)/(Δ|E_f|²) + Δk, in rad/m. Zero iff phase matched.
pub fn phase_matching_residual(params: &MediumParams, pumps: &PumpBoundary) -> f64 {
    let kappa = params.coupling_constant();
    let ef2 = pumps.drive_intensity();
    kappa * params.two_photon_detuning() / ef2
        + kappa * pumps.imbalance() / (params.one_photon_detuning() * ef2)
        + params.phase_mismatch()
}

/// The unique two-photon detuning that zeroes [`phase_matching_residual`].
pub fn matched_detuning(params: &MediumParams, pumps: &PumpBoundary) -> Result<f64> {
    let kappa = params.coupling_constant();
    if kappa <= 0.0 {
        return Err(Error::NoSolution(
            "phase matching is independent of the two-photon detuning when kappa = 0".into(),
        ));
    }
    Ok(-pumps.imbalance() / params.one_photon_detuning()
        - params.phase_mismatch() * pumps.drive_intensity() / kappa)
}

/// Carrier mismatch Δk = −2(ω₀ − δ)/c implied by the generated frequencies.
pub fn carrier_mismatch(raman_splitting: f64, two_photon_detuning: f64) -> f64 {
    -2.0 * (raman_splitting - two_photon_detuning) / SPEED_OF_LIGHT
}

/// Beat frequency ν₁ − ν_d obtained by solving phase matching with the carrier
/// mismatch tied to the detuning, Δk = −2(ω₀ − δ)/c.
///
/// This goes through [`phase_matching_residual`] only (the residual is affine
/// in δ, so two evaluations give the root exactly). It is the independent
/// route to the closed-form `locked_beat` of [`dispersion_report`].
pub fn self_consistent_beat(params: &MediumParams, pumps: &PumpBoundary) -> Result<f64> {
    if params.coupling_constant() <= 0.0 {
        return Err(Error::NoSolution("kappa = 0".into()));
    }
    let omega0 = params.raman_splitting();
    let residual_at = |delta: f64| -> Result<f64> {
        let p = params
            .to_builder()
            .two_photon_detuning(delta)
            .phase_mismatch(carrier_mismatch(omega0, delta))
            .build()?;
        Ok(phase_matching_residual(&p, pumps))
    };
    let d1 = if omega0 != 0.0 { omega0 } else { 1.0 };
    let r0 = residual_at(0.0)?;
    let r1 = residual_at(d1)?;
    let delta = -r0 * d1 / (r1 - r0);
    Ok(omega0 - delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> MediumBuilder {
        MediumParams::builder()
    }

    #[test]
    fn kappa_zero_density() {
        let p = base().atom_density(0.0).build().unwrap();
        assert_eq!(p.coupling_constant(), 0.0);
    }

    #[test]
    fn kappa_linear_in_density() {
        let p1 = base().atom_density(3e16).build().unwrap();
        let p2 = base().atom_density(6e16).build().unwrap();
        assert_relative_eq!(2.0 * p1.coupling_constant(), p2.coupling_constant(), max_relative = 1e-15);
    }

    #[test]
    fn kappa_rb_value() {
        let p = base()
            .atom_density(1e17)
            .wavelength(795e-9)
            .radiative_decay(3.58e7)
            .build()
            .unwrap();
        // 3/(8π)·1e17·(795e-9)²·3.58e7
        assert_relative_eq!(p.coupling_constant(), 2.700_86e11, max_relative = 1e-4);
    }

    #[test]
    fn rejects_zero_detuning() {
        let err = base().one_photon_detuning(0.0).build().unwrap_err();
        assert!(matches!(err, Error::InvalidParam { field: "one_photon_detuning", .. }));
    }

    #[test]
    fn rejects_zero_forward_pump() {
        assert!(PumpBoundary::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn vacuum_limit() {
        let p = base().atom_density(0.0).build().unwrap();
        let pumps = PumpBoundary::equal(1e6).unwrap();
        let r = dispersion_report(&p, &pumps);
        assert_eq!(r.eta, 0.0);
        assert_eq!(r.locked_beat, 0.0);
        assert_relative_eq!(r.group_delay, p.cell_length() / SPEED_OF_LIGHT, max_relative = 1e-15);
        assert!(r.matched_detuning.is_none());
    }

    #[test]
    fn unit_eta_pulls_half_way() {
        let p = base().build().unwrap();
        // choose |E_f|² so that η = 1
        let ed2 = SPEED_OF_LIGHT * p.coupling_constant() / 2.0;
        let pumps = PumpBoundary::equal(ed2.sqrt()).unwrap();
        let r = dispersion_report(&p, &pumps);
        assert_relative_eq!(r.eta, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.locked_beat, p.raman_splitting() / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn large_eta_pulling_offset() {
        let p = base().build().unwrap();
        let eta = 5e6;
        let ed2 = SPEED_OF_LIGHT * p.coupling_constant() / (2.0 * eta);
        let pumps = PumpBoundary::equal(ed2.sqrt()).unwrap();
        let r = dispersion_report(&p, &pumps);
        let offset = (r.locked_beat - p.raman_splitting()).abs() / p.raman_splitting();
        assert_relative_eq!(offset, 1.0 / (1.0 + eta), max_relative = 1e-6);
        assert_relative_eq!(offset, 2.0e-7, max_relative = 1e-6);
    }

    #[test]
    fn residual_trivial_cases() {
        let pumps = PumpBoundary::equal(1e6).unwrap();
        let p = base().two_photon_detuning(0.0).phase_mismatch(0.0).build().unwrap();
        assert_eq!(phase_matching_residual(&p, &pumps), 0.0);
        let p = base().two_photon_detuning(0.0).phase_mismatch(1.0).build().unwrap();
        assert_eq!(phase_matching_residual(&p, &pumps), 1.0);
    }

    #[test]
    fn matched_detuning_zeroes_residual() {
        let pumps = PumpBoundary::new(Complex64::new(1.3e6, 0.2e6), Complex64::new(0.9e6, -0.4e6)).unwrap();
        let p = base().phase_mismatch(3.7).build().unwrap();
        let delta = matched_detuning(&p, &pumps).unwrap();
        let p = p.to_builder().two_photon_detuning(delta).build().unwrap();
        let scale = p.coupling_constant() * delta.abs() / pumps.drive_intensity() + 3.7;
        assert!(phase_matching_residual(&p, &pumps).abs() <= 1e-12 * scale);
    }

    #[test]
    fn matched_detuning_cases() {
        let p = base().phase_mismatch(0.0).build().unwrap();
        assert_eq!(matched_detuning(&p, &PumpBoundary::equal(2e6).unwrap()).unwrap(), 0.0);

        let x = 1234.5;
        let ef = 2e6_f64;
        let eb2 = ef * ef + p.one_photon_detuning() * x;
        let pumps = PumpBoundary::new(Complex64::new(ef, 0.0), Complex64::new(eb2.sqrt(), 0.0)).unwrap();
        assert_relative_eq!(matched_detuning(&p, &pumps).unwrap(), -x, max_relative = 1e-9);

        let p0 = base().atom_density(0.0).build().unwrap();
        assert!(matches!(
            matched_detuning(&p0, &PumpBoundary::equal(1.0).unwrap()),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn alpha_matches_raw_inputs() {
        let (n, lam, ga, l, d) = (2.3e16, 780e-9, 3.8e7, 0.05, 1.7e9);
        let p = base()
            .atom_density(n)
            .wavelength(lam)
            .radiative_decay(ga)
            .cell_length(l)
            .one_photon_detuning(d)
            .build()
            .unwrap();
        let independent = 3.0 * n * lam * lam * ga * l / (8.0 * PI * d);
        assert_relative_eq!(p.alpha(), independent, max_relative = 1e-14);
    }

    #[test]
    fn with_alpha_sets_coupling() {
        let p = base().build().unwrap().with_alpha(2.25).unwrap();
        assert_relative_eq!(p.alpha(), 2.25, max_relative = 1e-14);
    }
}
