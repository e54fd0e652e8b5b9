//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with adaptive step
//! control, specialised to small fixed-size real state vectors.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 200_000,
        }
    }

    /// Integrates `y' = f(z, y)` from `z0` to `z1` and returns `y(z1)`.
    ///
    /// `h` carries the step size between calls so that a sequence of
    /// consecutive segments does not restart from a tiny step each time.
    pub fn integrate<const N: usize, F>(
        &self,
        f: &mut F,
        z0: f64,
        z1: f64,
        y0: [f64; N],
        h: &mut f64,
    ) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let span = z1 - z0;
        if span == 0.0 {
            return Ok(y0);
        }
        let dir = span.signum();
        let mut z = z0;
        let mut y = y0;
        let mut k1 = f(z, &y)?;
        if *h <= 0.0 || !h.is_finite() {
            *h = span.abs() * 1e-3;
        }
        let hmin = span.abs() * 1e-14;
        let mut steps = 0usize;
        while (z1 - z) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::Integration {
                    z,
                    reason: format!("step budget {} exhausted", self.max_steps),
                });
            }
            let last = (z + dir * *h - z1) * dir >= 0.0;
            let step = if last { z1 - z } else { dir * *h };

            let stage = |coef: &[(f64, &[f64; N])]| -> [f64; N] {
                let mut out = y;
                for &(c, k) in coef {
                    for i in 0..N {
                        out[i] += step * c * k[i];
                    }
                }
                out
            };
            let k2 = f(z + C2 * step, &stage(&[(A21, &k1)]))?;
            let k3 = f(z + C3 * step, &stage(&[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(z + C4 * step, &stage(&[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(
                z + C5 * step,
                &stage(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = f(
                z + step,
                &stage(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let y_new = stage(&[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(z + step, &y_new)?;

            let mut err2 = 0.0;
            for i in 0..N {
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err2 += (e / sc) * (e / sc);
            }
            let err = (err2 / N as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration {
                    z,
                    reason: "non-finite error estimate".into(),
                });
            }

            if err <= 1.0 {
                z = if last { z1 } else { z + step };
                y = y_new;
                k1 = k7;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    *h = step.abs() * fac;
                }
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                *h = step.abs() * fac;
                if *h < hmin {
                    return Err(Error::Integration {
                        z,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
        Ok(y)
    }

    /// Integrates across the increasing `grid`, returning the state at every node.
    pub fn integrate_grid<const N: usize, F>(
        &self,
        f: &mut F,
        grid: &[f64],
        y0: [f64; N],
    ) -> Result<Vec<[f64; N]>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let mut out = Vec::with_capacity(grid.len());
        let mut y = y0;
        let mut h = 0.0;
        if let Some(&first) = grid.first() {
            out.push(y);
            let mut z = first;
            for &zn in &grid[1..] {
                y = self.integrate(f, z, zn, y, &mut h)?;
                out.push(y);
                z = zn;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let solver = Dopri5::new(1e-11, 1e-13);
        let mut f = |_z: f64, y: &[f64; 2]| -> Result<[f64; 2]> { Ok([y[1], -y[0]]) };
        let mut h = 0.0;
        let y = solver
            .integrate(&mut f, 0.0, 2.0 * std::f64::consts::PI, [1.0, 0.0], &mut h)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
        assert!(y[1].abs() < 1e-9);
    }

    #[test]
    fn exponential_grid() {
        let solver = Dopri5::new(1e-10, 1e-14);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let mut f = |_z: f64, y: &[f64; 1]| -> Result<[f64; 1]> { Ok([-2.0 * y[0]]) };
        let ys = solver.integrate_grid(&mut f, &grid, [1.0]).unwrap();
        for (z, y) in grid.iter().zip(&ys) {
            assert!((y[0] - (-2.0 * z).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn propagates_rhs_errors() {
        let solver = Dopri5::new(1e-8, 1e-10);
        let mut f = |z: f64, y: &[f64; 1]| -> Result<[f64; 1]> {
            if z > 0.5 {
                Err(Error::Domain("stop".into()))
            } else {
                Ok([y[0]])
            }
        };
        let mut h = 0.0;
        assert!(solver.integrate(&mut f, 0.0, 1.0, [1.0], &mut h).is_err());
    }
}
