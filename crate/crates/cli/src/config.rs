//! Strict JSON run configuration. Frequencies are given in Hz (cycles per
//! second) and converted to rad/s on load; everything else is SI.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use mirrorless_core::model::matched_detuning;
use mirrorless_core::noise::OmegaBand;
use mirrorless_core::steady::SolverOptions;
use mirrorless_core::threshold::ThresholdOptions;
use mirrorless_core::{MediumParams, PumpBoundary};

use crate::error::CliError;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumSection {
    pub atom_density_m3: f64,
    pub wavelength_m: f64,
    pub radiative_decay_hz: f64,
    pub ground_decay_hz: f64,
    pub one_photon_detuning_hz: f64,
    pub two_photon_detuning_hz: f64,
    pub raman_splitting_hz: f64,
    pub cell_length_m: f64,
    pub phase_mismatch_rad_m: f64,
    pub beam_area_m2: f64,
    /// Optical carrier frequency; defaults to c/λ.
    pub optical_frequency_hz: Option<f64>,
    /// Replace the two-photon detuning by the phase-matched value.
    pub match_detuning: bool,
}

impl Default for MediumSection {
    fn default() -> Self {
        Self {
            atom_density_m3: 1e17,
            wavelength_m: 795e-9,
            radiative_decay_hz: 5.75e6,
            ground_decay_hz: 0.0,
            one_photon_detuning_hz: 5.52e8,
            two_photon_detuning_hz: 0.0,
            raman_splitting_hz: 6.834_682_610_904e9,
            cell_length_m: 0.02,
            phase_mismatch_rad_m: 0.0,
            beam_area_m2: 1e-6,
            optical_frequency_hz: None,
            match_detuning: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpSection {
    /// |E_f(0)|/2π
    pub forward_rabi_hz: f64,
    /// |E_b(L)|/2π; equal to the forward value when absent.
    pub backward_rabi_hz: Option<f64>,
    pub forward_phase_rad: f64,
    pub backward_phase_rad: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        Self {
            forward_rabi_hz: 1e6,
            backward_rabi_hz: None,
            forward_phase_rad: 0.0,
            backward_phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub ed2_max_factor: f64,
    pub scan_points: usize,
    pub tolerance: f64,
    /// Order-unity prefactor of the threshold photon flux.
    pub photon_flux_prefactor: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        let t = ThresholdOptions::default();
        Self {
            ed2_max_factor: t.ed2_max_factor,
            scan_points: t.scan_points,
            tolerance: t.tolerance,
            photon_flux_prefactor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub n_points: usize,
    /// E/E_d at which the profile insert is drawn.
    pub insert_e_over_ed: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { alpha_min: 1.0, alpha_max: 4.0, n_points: 61, insert_e_over_ed: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub omega_band: OmegaBand,
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Largest |ω|/E_d accepted by the fluctuation equations.
    pub band_fraction: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { omega_band: OmegaBand::default(), n_realizations: 1000, master_seed: 20_240_601, band_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinewidthSection {
    pub p_out_w: f64,
}

impl Default for LinewidthSection {
    fn default() -> Self {
        Self { p_out_w: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: Format,
    pub path: Option<String>,
    pub emit_svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { format: Format::Csv, path: None, emit_svg: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub medium: MediumSection,
    pub pumps: PumpSection,
    pub solver: SolverOptions,
    pub threshold: ThresholdSection,
    pub sweep: SweepSection,
    pub mc: McSection,
    pub linewidth: LinewidthSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Re-checks every physical invariant by building the core types.
    pub fn validate(&self) -> Result<(), CliError> {
        self.medium()?;
        let s = &self.sweep;
        if !(s.alpha_min < s.alpha_max) {
            return Err(CliError::Input(format!(
                "sweep.alpha_min must be < sweep.alpha_max, got {} and {}",
                s.alpha_min, s.alpha_max
            )));
        }
        if s.n_points < 2 {
            return Err(CliError::Input("sweep.n_points must be >= 2".into()));
        }
        if !(s.insert_e_over_ed > 0.0 && s.insert_e_over_ed < 2f64.sqrt()) {
            return Err(CliError::Input("sweep.insert_e_over_ed must lie in (0, sqrt(2))".into()));
        }
        if self.mc.n_realizations < 100 {
            return Err(CliError::Input("mc.n_realizations must be >= 100".into()));
        }
        let b = &self.mc.omega_band;
        if !(b.lo_fraction > 0.0 && b.hi_fraction > b.lo_fraction && b.points >= 1) {
            return Err(CliError::Input("mc.omega_band needs 0 < lo_fraction < hi_fraction and points >= 1".into()));
        }
        if !(self.mc.band_fraction > 0.0) {
            return Err(CliError::Input("mc.band_fraction must be > 0".into()));
        }
        if !(self.linewidth.p_out_w > 0.0) {
            return Err(CliError::Input("linewidth.p_out_w must be > 0".into()));
        }
        if !(self.threshold.photon_flux_prefactor > 0.0) {
            return Err(CliError::Input("threshold.photon_flux_prefactor must be > 0".into()));
        }
        let o = &self.solver;
        if !(o.rtol > 0.0 && o.atol_rel > 0.0 && o.tolerance > 0.0 && o.grid_nodes >= 3) {
            return Err(CliError::Input(
                "solver needs rtol, atol_rel, tolerance > 0 and grid_nodes >= 3".into(),
            ));
        }
        Ok(())
    }

    pub fn pumps(&self) -> Result<PumpBoundary, CliError> {
        let p = &self.pumps;
        let ef = TWO_PI * p.forward_rabi_hz;
        let eb = TWO_PI * p.backward_rabi_hz.unwrap_or(p.forward_rabi_hz);
        Ok(PumpBoundary::new(
            Complex64::from_polar(ef, p.forward_phase_rad),
            Complex64::from_polar(eb, p.backward_phase_rad),
        )?)
    }

    /// Medium in rad/s units, with the phase-matched detuning applied when requested.
    pub fn medium(&self) -> Result<MediumParams, CliError> {
        let m = &self.medium;
        let mut b = MediumParams::builder()
            .atom_density(m.atom_density_m3)
            .wavelength(m.wavelength_m)
            .radiative_decay(TWO_PI * m.radiative_decay_hz)
            .ground_decay(TWO_PI * m.ground_decay_hz)
            .one_photon_detuning(TWO_PI * m.one_photon_detuning_hz)
            .two_photon_detuning(TWO_PI * m.two_photon_detuning_hz)
            .raman_splitting(TWO_PI * m.raman_splitting_hz)
            .cell_length(m.cell_length_m)
            .phase_mismatch(m.phase_mismatch_rad_m)
            .beam_area(m.beam_area_m2);
        b = match m.optical_frequency_hz {
            Some(f) => b.optical_frequency(TWO_PI * f),
            None => b.optical_frequency(TWO_PI * mirrorless_core::constants::SPEED_OF_LIGHT / m.wavelength_m),
        };
        let params = b.build()?;
        if m.match_detuning {
            let pumps = self.pumps()?;
            let delta = matched_detuning(&params, &pumps)?;
            return Ok(params.to_builder().two_photon_detuning(delta).build()?);
        }
        Ok(params)
    }

    pub fn threshold_options(&self) -> ThresholdOptions {
        ThresholdOptions {
            ed2_max_factor: self.threshold.ed2_max_factor,
            scan_points: self.threshold.scan_points,
            tolerance: self.threshold.tolerance,
        }
    }
}
