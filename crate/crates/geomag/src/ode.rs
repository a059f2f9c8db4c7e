//! Adaptive Dormand-Prince 5(4) integrator for complex-valued linear systems.
//!
//! Error control is per component (mixed absolute/relative), which matters
//! when one channel is exponentially larger than another.

use crate::error::{GeomagError, Result};
use crate::C64;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            h_init: 1e-3,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..y.len() {
        let mut acc = C64::new(0.0, 0.0);
        for (w, k) in terms {
            acc += k[i] * *w;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrate y' = f(x, y) from x0 to x1 (either direction).
pub fn integrate<F>(
    f: F,
    x0: f64,
    y0: &[C64],
    x1: f64,
    opts: &OdeOptions,
) -> Result<(Vec<C64>, OdeStats)>
where
    F: Fn(f64, &[C64], &mut [C64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut stats = OdeStats::default();
    // spans below the underflow threshold count as already there
    let done = |x: f64| (x1 - x).abs() <= 1e-14 * x.abs().max(x1.abs()).max(1.0);
    if done(x0) {
        return Ok((y, stats));
    }
    let dir = (x1 - x0).signum();
    let mut x = x0;
    let mut h = opts.h_init.abs().min((x1 - x0).abs()) * dir;
    let mut k1 = vec![C64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut ynew = k1.clone();
    f(x, &y, &mut k1);
    while (x1 - x) * dir > 0.0 && !done(x) {
        if stats.accepted + stats.rejected > opts.max_steps {
            return Err(GeomagError::Accuracy {
                achieved: f64::NAN,
                wanted: opts.rtol,
            });
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        axpy(&mut tmp, &y, h, &[(A21, &k1)]);
        f(x + C2 * h, &tmp, &mut k2);
        axpy(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
        f(x + C3 * h, &tmp, &mut k3);
        axpy(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(x + C4 * h, &tmp, &mut k4);
        axpy(
            &mut tmp,
            &y,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        );
        f(x + C5 * h, &tmp, &mut k5);
        axpy(
            &mut tmp,
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        f(x + h, &tmp, &mut k6);
        axpy(
            &mut ynew,
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        f(x + h, &ynew, &mut k7);
        let mut err = 0.0;
        for i in 0..n {
            let e =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err += (e.norm() / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(GeomagError::Numerical(format!(
                "non-finite state near x = {x}"
            )));
        }
        if err <= 1.0 {
            x += h;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            stats.accepted += 1;
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if !done(x) && h.abs() < 1e-14 * x.abs().max(1.0) {
            return Err(GeomagError::Numerical(format!(
                "step size underflow at x = {x}"
            )));
        }
    }
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn osc(_x: f64, y: &[C64], dy: &mut [C64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn oscillator_to_tolerance() {
        let y0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let (y, st) = integrate(osc, 0.0, &y0, 10.0, &OdeOptions::default()).unwrap();
        assert!((y[0].re - 10f64.cos()).abs() < 1e-8);
        assert!((y[1].re + 10f64.sin()).abs() < 1e-8);
        assert!(st.accepted > 0);
    }

    #[test]
    fn negligible_span_returns_start() {
        let y0 = [C64::new(0.3, 0.1), C64::new(-1.0, 0.0)];
        let x0 = -11.6;
        let x1 = x0 + 2.0 * f64::EPSILON * 11.6;
        let (y, st) = integrate(osc, x0, &y0, x1, &OdeOptions::default()).unwrap();
        assert_eq!(y, y0.to_vec());
        assert_eq!(st.accepted, 0);
    }
}
