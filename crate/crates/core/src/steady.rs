//! Classical steady state of the four coupled fields: the propagation
//! equations, analytic second-order profiles, a shooting/continuation solver
//! for the counter-propagating boundary problem, and a conserved-quantity
//! auditor.
//!
//! Fields are the slowly varying complex Rabi frequencies in the rotating
//! frame (E₁ and E_b already stripped of their linear phase ramps). The gauge
//! of every returned solution is: E₂(0) real and nonnegative, pumps real and
//! positive at their entry faces when the inputs are.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{MediumParams, PumpBoundary};
use crate::ode::Dopri5;
use crate::threshold;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldState {
    pub e1: Complex64,
    pub e2: Complex64,
    pub ef: Complex64,
    pub eb: Complex64,
}

impl FieldState {
    fn to_array(self) -> [f64; 8] {
        [
            self.e1.re, self.e1.im, self.e2.re, self.e2.im, self.ef.re, self.ef.im, self.eb.re,
            self.eb.im,
        ]
    }

    fn from_array(y: &[f64; 8]) -> Self {
        Self {
            e1: Complex64::new(y[0], y[1]),
            e2: Complex64::new(y[2], y[3]),
            ef: Complex64::new(y[4], y[5]),
            eb: Complex64::new(y[6], y[7]),
        }
    }
}

/// Coefficients of the propagation equations, pre-computed from the medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEquations {
    kappa: f64,
    detuning: f64,
    ground_decay: f64,
    two_photon_detuning: f64,
    phase_mismatch: f64,
    /// |Ef| below this aborts evaluation.
    singular_floor: f64,
    /// |Ef|² below this aborts with a validity-domain error (0 disables).
    depletion_floor: f64,
}

impl FieldEquations {
    pub fn new(params: &MediumParams, drive: f64) -> Self {
        Self {
            kappa: params.coupling_constant(),
            detuning: params.one_photon_detuning(),
            ground_decay: params.ground_decay(),
            two_photon_detuning: params.two_photon_detuning(),
            phase_mismatch: params.phase_mismatch(),
            singular_floor: 1e-12 * drive,
            depletion_floor: 0.0,
        }
    }

    /// Abort when |Ef|² drops below `fraction`·E_d².
    pub fn with_depletion_limit(mut self, fraction: f64, drive: f64) -> Self {
        self.depletion_floor = fraction * drive * drive;
        self
    }

    fn with_detuning_shift(mut self, shift: f64) -> Self {
        self.two_photon_detuning += shift;
        self
    }

    pub fn derivatives(&self, z: f64, s: &FieldState) -> Result<FieldState> {
        let ef_abs = s.ef.norm();
        if !(ef_abs > self.singular_floor) {
            return Err(Error::SingularState { z, ef_abs });
        }
        let f2 = ef_abs * ef_abs;
        if f2 < self.depletion_floor {
            return Err(Error::ValidityDomain(format!(
                "forward pump depleted to |Ef|^2 = {f2:.3e} at z = {z:.4e} m"
            )));
        }
        let f4 = f2 * f2;
        let kd = self.kappa / self.detuning;
        let (e1, e2, ef, eb) = (s.e1, s.e2, s.ef, s.eb);
        let e1_2 = e1.norm_sqr();

        let cubic = e1 * e1 * e2 * ef.conj() * eb.conj() + ef * eb * e2.conj() * (2.0 * e1_2 - f2);
        let linear = Complex64::new(-self.two_photon_detuning, self.ground_decay) * (self.kappa / f2)
            - self.kappa * (eb.norm_sqr() - f2) / (self.detuning * f2)
            - self.phase_mismatch;
        let de1 = I * kd * cubic / f4 + I * linear * e1;

        let de2_conj = I * kd * (e1_2 - f2) * ef.conj() * eb.conj() * e1 / f4;
        let def = I * kd * e1.conj() * e2.conj() * eb * ef * ef / f4;
        let deb_conj = -I * kd * e1.conj() * e2.conj() * ef * f2 / f4;

        Ok(FieldState {
            e1: de1,
            e2: de2_conj.conj(),
            ef: def,
            eb: deb_conj.conj(),
        })
    }
}

/// d/dz of the four fields at `s`, for the medium `params` and drive scale
/// taken from `pumps`.
pub fn field_derivatives(
    z: f64,
    s: &FieldState,
    params: &MediumParams,
    pumps: &PumpBoundary,
) -> Result<FieldState> {
    FieldEquations::new(params, pumps.forward().norm()).derivatives(z, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Zero,
    Oscillating,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Zero => "zero",
            Branch::Oscillating => "oscillating",
        }
    }
}

/// A steady-state profile sampled on a grid of z values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Generated-field amplitude E = √(|E₁|² + |E₂|²), rad/s.
    pub amplitude: f64,
    /// E_d = |Ef_in|, rad/s.
    pub drive: f64,
    pub branch: Branch,
    /// z nodes in m.
    pub grid: Vec<f64>,
    /// Mixing angle θ(z) = atan2(|E₁|, |E₂|).
    pub theta: Vec<f64>,
    pub fields: Vec<FieldState>,
    /// Largest boundary-condition violation divided by E_d.
    pub residual_norm: f64,
    /// Shift of the two-photon detuning selected by the oscillation, rad/s.
    pub detuning_correction: f64,
    pub newton_iterations: usize,
}

impl SteadyState {
    pub fn amplitude_ratio(&self) -> f64 {
        self.amplitude / self.drive
    }

    pub fn cell_length(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }

    pub fn output_field(&self) -> Complex64 {
        self.fields.last().map(|s| s.e1).unwrap_or_default()
    }

    /// Profile CSV: `z_m,reE1,imE1,reE2,imE2,reEf,imEf,reEb,imEb`, rad/s.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: z_m in m; field columns are Rabi frequencies in rad/s")?;
        writeln!(
            w,
            "# branch: {}; amplitude_rad_s: {:e}; drive_rad_s: {:e}; residual_norm: {:e}",
            self.branch.as_str(),
            self.amplitude,
            self.drive,
            self.residual_norm
        )?;
        writeln!(w, "z_m,reE1,imE1,reE2,imE2,reEf,imEf,reEb,imEb")?;
        for (z, s) in self.grid.iter().zip(&self.fields) {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                z, s.e1.re, s.e1.im, s.e2.re, s.e2.im, s.ef.re, s.ef.im, s.eb.re, s.eb.im
            )?;
        }
        Ok(())
    }
}

/// Amplitude of the oscillating branch in the lossless second-order theory:
/// zero below α = π/2 and √2·Ef0·√(1 − π/(2α)) above.
pub fn analytic_amplitude(alpha: f64, ef0: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    if alpha < FRAC_PI_2 {
        return Ok(0.0);
    }
    Ok(2f64.sqrt() * ef0 * (1.0 - FRAC_PI_2 / alpha).max(0.0).sqrt())
}

/// Second-order analytic profiles on `grid` (values of z/L in [0, 1]).
pub fn analytic_profile(
    amplitude: f64,
    ef0: f64,
    alpha: f64,
    grid: &[f64],
    cell_length: f64,
) -> Result<SteadyState> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    if amplitude > 2f64.sqrt() * ef0 {
        return Err(Error::Domain(format!(
            "amplitude {amplitude:e} exceeds sqrt(2)*Ef0 = {:e}",
            2f64.sqrt() * ef0
        )));
    }
    let e2 = amplitude * amplitude;
    let rate = alpha * (1.0 - e2 / (2.0 * ef0 * ef0));
    let mut theta = Vec::with_capacity(grid.len());
    let mut fields = Vec::with_capacity(grid.len());
    for &x in grid {
        let th = rate * x;
        let (s, c) = th.sin_cos();
        let rf = ef0 * ef0 - e2 * s * s;
        let rb = ef0 * ef0 - e2 * c * c;
        if rf < 0.0 || rb < 0.0 {
            return Err(Error::Domain(format!(
                "pump radicand negative at z/L = {x} (theta = {th})"
            )));
        }
        theta.push(th);
        fields.push(FieldState {
            e1: Complex64::new(0.0, -amplitude * s),
            e2: Complex64::new(amplitude * c, 0.0),
            ef: Complex64::new(rf.sqrt(), 0.0),
            eb: Complex64::new(rb.sqrt(), 0.0),
        });
    }
    Ok(SteadyState {
        amplitude,
        drive: ef0,
        branch: if amplitude > 0.0 { Branch::Oscillating } else { Branch::Zero },
        grid: grid.iter().map(|x| x * cell_length).collect(),
        theta,
        fields,
        residual_norm: 0.0,
        detuning_correction: 0.0,
        newton_iterations: 0,
    })
}

pub fn uniform_grid(nodes: usize, length: f64) -> Vec<f64> {
    let n = nodes.max(2);
    (0..n).map(|i| length * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub rtol: f64,
    /// Absolute integrator tolerance in units of E_d.
    pub atol_rel: f64,
    pub grid_nodes: usize,
    pub max_newton: usize,
    /// Line-search reduction factor applied to rejected Newton steps.
    pub damping: f64,
    /// Newton stops when the largest scaled residual falls below this.
    pub tolerance: f64,
    pub continuation_step: f64,
    /// Converged amplitudes below this fraction of E_d count as the zero branch.
    pub amplitude_floor: f64,
    /// Smallest |Ef|²/E_d² tolerated anywhere in the cell.
    pub depletion_limit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol_rel: 1e-12,
            grid_nodes: 257,
            max_newton: 50,
            damping: 0.5,
            tolerance: 1e-11,
            continuation_step: 0.02,
            amplitude_floor: 1e-7,
            depletion_limit: 0.25,
        }
    }
}

/// Integrates from z = 0 with unknown launch values and scores the far boundary.
///
/// Unknowns (dimensionless): E₂(0)/E_d, E_b(0)/E_d (both real: the first fixes
/// the generated-pair gauge, the second the pump gauge which is restored
/// afterwards) and the detuning correction in units of E_d²/(κL).
struct Shooter {
    eqs: FieldEquations,
    integrator: Dopri5,
    length: f64,
    drive: f64,
    eb_target: f64,
    detuning_unit: f64,
}

impl Shooter {
    fn new(params: &MediumParams, drive: f64, eb_target: f64, opts: &SolverOptions) -> Self {
        let kappa = params.coupling_constant();
        Self {
            eqs: FieldEquations::new(params, drive).with_depletion_limit(opts.depletion_limit, drive),
            integrator: Dopri5::new(opts.rtol, opts.atol_rel * drive),
            length: params.cell_length(),
            drive,
            eb_target,
            detuning_unit: drive * drive / (kappa * params.cell_length()),
        }
    }

    fn launch(&self, u: &[f64; 3]) -> (FieldState, FieldEquations) {
        let s = FieldState {
            e1: Complex64::new(0.0, 0.0),
            e2: Complex64::new(u[0] * self.drive, 0.0),
            ef: Complex64::new(self.drive, 0.0),
            eb: Complex64::new(u[1] * self.drive, 0.0),
        };
        (s, self.eqs.with_detuning_shift(u[2] * self.detuning_unit))
    }

    fn end_state(&self, u: &[f64; 3]) -> Result<FieldState> {
        let (s0, eqs) = self.launch(u);
        let mut rhs = |z: f64, y: &[f64; 8]| -> Result<[f64; 8]> {
            eqs.derivatives(z, &FieldState::from_array(y)).map(FieldState::to_array)
        };
        let mut h = 0.0;
        let y = self
            .integrator
            .integrate(&mut rhs, 0.0, self.length, s0.to_array(), &mut h)?;
        Ok(FieldState::from_array(&y))
    }

    fn residual(&self, u: &[f64; 3]) -> Result<[f64; 3]> {
        let end = self.end_state(u)?;
        Ok([
            end.e2.re / self.drive,
            end.e2.im / self.drive,
            (end.eb.norm() - self.eb_target) / self.drive,
        ])
    }

    fn profile(&self, u: &[f64; 3], grid: &[f64]) -> Result<Vec<FieldState>> {
        let (s0, eqs) = self.launch(u);
        let mut rhs = |z: f64, y: &[f64; 8]| -> Result<[f64; 8]> {
            eqs.derivatives(z, &FieldState::from_array(y)).map(FieldState::to_array)
        };
        let ys = self.integrator.integrate_grid(&mut rhs, grid, s0.to_array())?;
        Ok(ys.iter().map(FieldState::from_array).collect())
    }
}

fn max_abs(r: &[f64; 3]) -> f64 {
    r.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    let scale = a.iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-300 || m[piv][col].abs() < 1e-15 * scale {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

struct NewtonOutcome {
    u: [f64; 3],
    iterations: usize,
}

fn newton(shooter: &Shooter, mut u: [f64; 3], opts: &SolverOptions) -> Result<NewtonOutcome> {
    let mut r = shooter.residual(&u)?;
    let mut norm = max_abs(&r);
    for it in 0..opts.max_newton {
        if norm <= opts.tolerance {
            return Ok(NewtonOutcome { u, iterations: it });
        }
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let h = 1e-7 * u[j].abs().max(1e-2);
            let mut up = u;
            up[j] += h;
            let rp = shooter.residual(&up)?;
            for i in 0..3 {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let step = solve3(jac, [-r[0], -r[1], -r[2]]).ok_or(Error::NoConvergence {
            iterations: it,
            residual: norm,
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = [u[0] + lambda * step[0], u[1] + lambda * step[1], u[2] + lambda * step[2]];
            if trial[1] > 0.0 {
                if let Ok(rt) = shooter.residual(&trial) {
                    let nt = max_abs(&rt);
                    if nt < norm {
                        u = trial;
                        r = rt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= opts.damping;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations: it + 1, residual: norm });
        }
    }
    if norm <= opts.tolerance {
        Ok(NewtonOutcome { u, iterations: opts.max_newton })
    } else {
        Err(Error::NoConvergence { iterations: opts.max_newton, residual: norm })
    }
}

fn zero_branch(params: &MediumParams, pumps: &PumpBoundary, opts: &SolverOptions) -> SteadyState {
    let grid = uniform_grid(opts.grid_nodes, params.cell_length());
    let fixed = FieldState {
        e1: Complex64::default(),
        e2: Complex64::default(),
        ef: pumps.forward(),
        eb: pumps.backward(),
    };
    SteadyState {
        amplitude: 0.0,
        drive: pumps.forward().norm(),
        branch: Branch::Zero,
        theta: vec![0.0; grid.len()],
        fields: vec![fixed; grid.len()],
        grid,
        residual_norm: 0.0,
        detuning_correction: 0.0,
        newton_iterations: 0,
    }
}

fn analytic_guess(alpha: f64) -> [f64; 3] {
    let e = analytic_amplitude(alpha, 1.0).unwrap_or(0.0).min(0.95);
    [e, (1.0 - e * e).max(0.05).sqrt(), 0.0]
}

/// Follows the lossless branch from just above threshold up to the target α.
fn lossless_branch(
    params: &MediumParams,
    drive: f64,
    eb_target: f64,
    opts: &SolverOptions,
) -> Result<NewtonOutcome> {
    let lossless = params.to_builder().ground_decay(0.0).build()?;
    let alpha = lossless.alpha();
    let start = (FRAC_PI_2 + opts.continuation_step).min(alpha);
    let shooter_at = |a: f64| -> Result<Shooter> {
        let p = if a == alpha { lossless } else { lossless.with_alpha(a)? };
        Ok(Shooter::new(&p, drive, eb_target, opts))
    };
    let guess = analytic_guess(start);
    let mut out = newton(&shooter_at(start)?, guess, opts)?;
    let mut total = out.iterations;
    let mut prev: Option<(f64, [f64; 3])> = None;
    let mut a = start;
    let mut step = opts.continuation_step;
    while a < alpha {
        let next = (a + step).min(alpha);
        let mut guess = out.u;
        if let Some((pa, pu)) = prev {
            let t = (next - a) / (a - pa);
            for k in 0..3 {
                guess[k] = out.u[k] + t * (out.u[k] - pu[k]);
            }
        }
        match newton(&shooter_at(next)?, guess, opts) {
            Ok(res) => {
                total += res.iterations;
                prev = Some((a, out.u));
                out = res;
                a = next;
                step = (step * 1.5).min(opts.continuation_step);
            }
            Err(e) => {
                step *= 0.5;
                if step < 1e-5 {
                    return Err(e);
                }
            }
        }
    }
    out.iterations = total;
    Ok(out)
}

/// Solves the two-point boundary problem E₁(0) = 0, E₂(L) = 0,
/// E_f(0) = Ef_in, |E_b(L)| = |Eb_in|.
///
/// The lossless branch is continued in α from just above π/2, then the
/// ground-state decay is switched on gradually. The two-photon detuning is
/// corrected as part of the shooting so the oscillation can select its own
/// frequency; the correction is reported in the result.
pub fn solve_steady_state(
    params: &MediumParams,
    pumps: &PumpBoundary,
    opts: &SolverOptions,
) -> Result<SteadyState> {
    let alpha = params.positive_alpha()?;
    if !pumps.equal_magnitudes() {
        return Err(Error::Domain(
            "steady-state solver requires |Ef_in| = |Eb_in|".into(),
        ));
    }
    if alpha <= FRAC_PI_2 {
        return Ok(zero_branch(params, pumps, opts));
    }
    let drive = pumps.forward().norm();
    let eb_target = pumps.backward().norm();
    let mut out = lossless_branch(params, drive, eb_target, opts)?;
    let gamma0 = params.ground_decay();
    if gamma0 > 0.0 {
        // homotopy in the ground-state decay rate
        let mut t = 0.0_f64;
        let mut dt = 0.25_f64;
        let mut total = out.iterations;
        while t < 1.0 {
            let next = (t + dt).min(1.0);
            let p = params.to_builder().ground_decay(gamma0 * next).build()?;
            let shooter = Shooter::new(&p, drive, eb_target, opts);
            match newton(&shooter, out.u, opts) {
                Ok(res) => {
                    total += res.iterations;
                    out = res;
                    t = next;
                    if out.u[0] < opts.amplitude_floor {
                        return Ok(zero_branch(params, pumps, opts));
                    }
                    dt = (dt * 2.0).min(0.25);
                }
                Err(e) => {
                    dt *= 0.5;
                    if dt < 1e-4 {
                        // Past the bifurcation the nontrivial branch is gone; check
                        // whether the trivial solution is what remains.
                        let tiny = [opts.amplitude_floor * 0.1, 1.0, out.u[2]];
                        if let Ok(res) = newton(&shooter, tiny, opts) {
                            if res.u[0] < opts.amplitude_floor {
                                return Ok(zero_branch(params, pumps, opts));
                            }
                        }
                        return Err(e);
                    }
                }
            }
        }
        out.iterations = total;
    }
    if out.u[0] < opts.amplitude_floor {
        return Ok(zero_branch(params, pumps, opts));
    }
    finish(params, pumps, out, opts)
}

fn finish(
    params: &MediumParams,
    pumps: &PumpBoundary,
    out: NewtonOutcome,
    opts: &SolverOptions,
) -> Result<SteadyState> {
    let drive = pumps.forward().norm();
    let shooter = Shooter::new(params, drive, pumps.backward().norm(), opts);
    let grid = uniform_grid(opts.grid_nodes, params.cell_length());
    let mut fields = shooter.profile(&out.u, &grid)?;

    // restore the pump phases: Ef by arg(Ef_in), Eb so that Eb(L) has arg(Eb_in),
    // E1 by their sum so the equations stay invariant; E2 untouched.
    let rot_f = pumps.forward().arg();
    let eb_end = fields.last().map(|s| s.eb).unwrap_or_default();
    let rot_b = if pumps.backward().norm() > 0.0 {
        pumps.backward().arg() - eb_end.arg()
    } else {
        0.0
    };
    let pf = Complex64::from_polar(1.0, rot_f);
    let pb = Complex64::from_polar(1.0, rot_b);
    for s in fields.iter_mut() {
        s.ef *= pf;
        s.eb *= pb;
        s.e1 *= pf * pb;
    }

    let first = fields[0];
    let last = *fields.last().unwrap();
    let residual_norm = [
        first.e1.norm(),
        last.e2.norm(),
        (first.ef - pumps.forward()).norm(),
        (last.eb.norm() - pumps.backward().norm()).abs(),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max)
        / drive;

    let theta = fields.iter().map(|s| s.e1.norm().atan2(s.e2.norm())).collect();
    Ok(SteadyState {
        amplitude: (first.e1.norm_sqr() + first.e2.norm_sqr()).sqrt(),
        drive,
        branch: Branch::Oscillating,
        grid,
        theta,
        fields,
        residual_norm,
        detuning_correction: out.u[2] * shooter.detuning_unit,
        newton_iterations: out.iterations,
    })
}

/// Whether the non-oscillating solution is stable: the boundary determinant of
/// the linearised lossy problem about E = 0 must be positive with ξL still
/// below its first root. Hyperbolic regime (E_d² < γ₀|Δ|/2) is always stable.
pub fn zero_branch_stable(params: &MediumParams, pumps: &PumpBoundary) -> Result<bool> {
    params.positive_alpha()?;
    let ed2 = pumps.drive_intensity();
    let Some(xi_l) = threshold::effective_coupling(ed2, params)? else {
        return Ok(true);
    };
    let coeff = params.ground_decay() * params.one_photon_detuning() / (2.0 * ed2);
    let first_root = PI - (1.0 / coeff).atan();
    let det = threshold::oscillatory_determinant(ed2, params)?;
    Ok(det > 1e-12 && xi_l < first_root)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationAudit {
    /// |E₁|² + |E₂|²
    pub gen_sum: Vec<f64>,
    /// |E_f|² + |E_b|²
    pub pump_sum: Vec<f64>,
    /// Re[E_f* E_b* E₁ E₂]
    pub quartic: Vec<f64>,
    /// |E_f|² + |E₁|²
    pub mixed: Vec<f64>,
    pub gen_sum_drift: f64,
    pub pump_sum_drift: f64,
    /// Normalised by E_d²·E² because the quartic invariant starts at zero.
    pub quartic_drift: f64,
    pub mixed_drift: f64,
}

fn drift(q: &[f64], scale: f64) -> f64 {
    let q0 = q[0];
    let denom = q0.abs().max(scale);
    q.iter().fold(0.0_f64, |m, v| m.max((v - q0).abs())) / denom
}

pub fn conserved_quantities(state: &SteadyState) -> Result<ConservationAudit> {
    if state.fields.len() < 2 {
        return Err(Error::Domain("conservation audit needs at least two nodes".into()));
    }
    let ed2 = state.drive * state.drive;
    let floor = 1e-30 * ed2 * ed2;
    let gen_sum: Vec<f64> = state.fields.iter().map(|s| s.e1.norm_sqr() + s.e2.norm_sqr()).collect();
    let pump_sum: Vec<f64> = state.fields.iter().map(|s| s.ef.norm_sqr() + s.eb.norm_sqr()).collect();
    let quartic: Vec<f64> = state
        .fields
        .iter()
        .map(|s| (s.ef.conj() * s.eb.conj() * s.e1 * s.e2).re)
        .collect();
    let mixed: Vec<f64> = state.fields.iter().map(|s| s.ef.norm_sqr() + s.e1.norm_sqr()).collect();
    let quartic_scale = (ed2 * state.amplitude * state.amplitude).max(floor);
    Ok(ConservationAudit {
        gen_sum_drift: drift(&gen_sum, floor),
        pump_sum_drift: drift(&pump_sum, floor),
        quartic_drift: drift(&quartic, quartic_scale),
        mixed_drift: drift(&mixed, floor),
        gen_sum,
        pump_sum,
        quartic,
        mixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn medium(alpha: f64) -> MediumParams {
        MediumParams::builder().build().unwrap().with_alpha(alpha).unwrap()
    }

    fn eqs(p: &MediumParams) -> FieldEquations {
        FieldEquations::new(p, 1e6)
    }

    #[test]
    fn pump_only_fixed_point() {
        let p = medium(2.0);
        let s = FieldState {
            ef: Complex64::new(1e6, 2e5),
            eb: Complex64::new(-3e5, 8e5),
            ..Default::default()
        };
        let d = eqs(&p).derivatives(0.0, &s).unwrap();
        assert_eq!(d, FieldState::default());
    }

    #[test]
    fn coupling_independent_of_common_pump_amplitude() {
        let p = medium(1.7);
        let leading = |f: f64| {
            let s = FieldState {
                e1: Complex64::default(),
                e2: Complex64::new(1e-6 * f, 0.0),
                ef: Complex64::new(f, 0.0),
                eb: Complex64::new(f, 0.0),
            };
            eqs(&p).derivatives(0.0, &s).unwrap().e1 / s.e2.conj()
        };
        let a = leading(1e6);
        let b = leading(2e6);
        assert_relative_eq!(a.re, b.re, epsilon = 1e-12 * a.norm());
        assert_relative_eq!(a.im, b.im, max_relative = 1e-12);
        // −iκ/Δ
        assert_relative_eq!(a.im, -p.coupling_constant() / p.one_photon_detuning(), max_relative = 1e-12);
    }

    #[test]
    fn loss_term_damps_e1() {
        let p = medium(1.7)
            .to_builder()
            .ground_decay(500.0)
            .two_photon_detuning(0.0)
            .phase_mismatch(0.0)
            .build()
            .unwrap();
        let f = 1e6;
        let x = 1e-3;
        let s = FieldState {
            e1: Complex64::new(x, 0.0),
            e2: Complex64::default(),
            ef: Complex64::new(f, 0.0),
            eb: Complex64::new(f, 0.0),
        };
        let d = eqs(&p).derivatives(0.0, &s).unwrap();
        // d|E1|/dz = Re(E1* dE1/dz)/|E1| for real E1
        let expected = -p.coupling_constant() * p.ground_decay() / (f * f) * x;
        // cubic term contributes O(x^3) relative corrections only
        assert_relative_eq!(d.e1.re, expected, max_relative = 1e-6);
    }

    #[test]
    fn singular_state_rejected() {
        let p = medium(1.7);
        let s = FieldState {
            ef: Complex64::new(1e-9, 0.0),
            ..Default::default()
        };
        assert!(matches!(eqs(&p).derivatives(0.1, &s), Err(Error::SingularState { .. })));
    }

    #[test]
    fn analytic_amplitude_cases() {
        assert_eq!(analytic_amplitude(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(analytic_amplitude(FRAC_PI_2, 1.0).unwrap(), 0.0);
        assert_relative_eq!(analytic_amplitude(PI, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(analytic_amplitude(1.60285, 1.0).unwrap(), 0.2, max_relative = 1e-3);
        assert!(analytic_amplitude(0.0, 1.0).is_err());
        assert!(analytic_amplitude(-1.0, 1.0).is_err());
    }

    #[test]
    fn analytic_profile_properties() {
        let alpha = 2.0;
        let e = analytic_amplitude(alpha, 1.0).unwrap();
        let grid: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        let st = analytic_profile(e, 1.0, alpha, &grid, 0.03).unwrap();
        assert_eq!(st.fields[0].e1.norm(), 0.0);
        assert_relative_eq!(st.fields[0].e2.norm(), e, max_relative = 1e-15);
        // self-consistent amplitude puts θ(L) at π/2
        assert_relative_eq!(*st.theta.last().unwrap(), FRAC_PI_2, max_relative = 1e-14);
        assert!(st.fields.last().unwrap().e2.norm() < 1e-15);

        let audit = conserved_quantities(&st).unwrap();
        assert!(audit.gen_sum_drift < 1e-14);
        assert!(audit.pump_sum_drift < 1e-14);
    }

    #[test]
    fn analytic_profile_symmetry_point() {
        let alpha = 2.0;
        let e = 0.5;
        let x = quarter_turn_position(alpha, e);
        let st = analytic_profile(e, 1.0, alpha, &[x], 1.0).unwrap();
        let s = st.fields[0];
        assert_relative_eq!(s.e1.norm(), e / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(s.e2.norm(), e / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(s.ef.norm(), s.eb.norm(), max_relative = 1e-14);
    }

    /// z/L where θ = π/4.
    fn quarter_turn_position(alpha: f64, e: f64) -> f64 {
        std::f64::consts::FRAC_PI_4 / (alpha * (1.0 - e * e / 2.0))
    }

    #[test]
    fn analytic_profile_rejects_overdriven() {
        assert!(analytic_profile(1.5, 1.0, 2.0, &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn zero_branch_below_threshold() {
        let p = medium(1.0);
        let pumps = PumpBoundary::equal(2e6).unwrap();
        let st = solve_steady_state(&p, &pumps, &SolverOptions::default()).unwrap();
        assert_eq!(st.branch, Branch::Zero);
        assert!(st.fields.iter().all(|s| s.e1.norm() <= 1e-10 * 2e6 && s.e2.norm() <= 1e-10 * 2e6));
    }

    #[test]
    fn oscillating_branch_boundary_conditions() {
        let p = medium(1.8);
        let pumps = PumpBoundary::equal(2e6).unwrap();
        let st = solve_steady_state(&p, &pumps, &SolverOptions::default()).unwrap();
        assert_eq!(st.branch, Branch::Oscillating);
        assert!(st.residual_norm <= 1e-8, "residual {}", st.residual_norm);
        assert_eq!(st.grid.len(), 257);
        assert!(st.fields[0].e2.im.abs() < 1e-12 * 2e6 && st.fields[0].e2.re > 0.0);
        assert!(st.fields.last().unwrap().eb.im.abs() < 1e-9 * 2e6);
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        let p = MediumParams::builder().one_photon_detuning(-1e9).build().unwrap();
        let pumps = PumpBoundary::equal(2e6).unwrap();
        assert!(matches!(
            solve_steady_state(&p, &pumps, &SolverOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_branch_stability() {
        let pumps = PumpBoundary::equal(2e6).unwrap();
        assert!(zero_branch_stable(&medium(std::f64::consts::FRAC_PI_4), &pumps).unwrap());
        assert!(!zero_branch_stable(&medium(FRAC_PI_2), &pumps).unwrap());
        assert!(!zero_branch_stable(&medium(2.0), &pumps).unwrap());
        assert!(!zero_branch_stable(&medium(5.0), &pumps).unwrap());
    }

    #[test]
    fn zero_branch_stable_in_hyperbolic_regime() {
        let p = medium(3.0).to_builder().ground_decay(1e4).build().unwrap();
        // E_d² below γ₀|Δ|/2
        let ed2 = 0.5 * p.ground_decay() * p.one_photon_detuning() / 2.0;
        let pumps = PumpBoundary::equal(ed2.sqrt()).unwrap();
        assert!(zero_branch_stable(&p, &pumps).unwrap());
    }
}
