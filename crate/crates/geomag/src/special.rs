//! Gamma function, Kummer's confluent hypergeometric series and parabolic
//! cylinder functions D_nu(z) for real order and complex argument.

use std::f64::consts::PI;

use crate::error::{GeomagError, Result};
use crate::C64;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Lanczos sum for Gamma(x + 1), x >= -0.5.
fn lanczos_gamma1(x: f64) -> f64 {
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, p) in LANCZOS.iter().enumerate().skip(1) {
        a += p / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        lanczos_gamma1(x - 1.0)
    }
}

/// 1/Gamma(x); exactly zero at the poles x = 0, -1, -2, ...
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x < 0.5 {
        (PI * x).sin() * gamma(1.0 - x) / PI
    } else {
        1.0 / lanczos_gamma1(x - 1.0)
    }
}

/// Kummer M(a, b, w) by direct summation until the term ratio drops below
/// 1e-16. Returns the sum and the sum of term magnitudes.
fn kummer_series(a: f64, b: f64, w: C64) -> (C64, f64) {
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    let mut abs_sum = 1.0;
    for n in 0..2000 {
        let nf = n as f64;
        term *= w * ((a + nf) / ((b + nf) * (nf + 1.0)));
        sum += term;
        abs_sum += term.norm();
        if term.norm() <= 1e-17 * sum.norm().max(1e-300) && nf > w.norm() {
            break;
        }
        if term == C64::new(0.0, 0.0) {
            break;
        }
    }
    (sum, abs_sum)
}

/// M(a, b, w); for Re w < 0 Kummer's transformation keeps the series
/// free of alternating cancellation.
pub fn kummer_m(a: f64, b: f64, w: C64) -> (C64, f64) {
    if w.re < 0.0 {
        let (s, abs) = kummer_series(b - a, b, -w);
        let e = w.exp();
        (e * s, e.norm() * abs)
    } else {
        kummer_series(a, b, w)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PcfValue {
    pub nu: f64,
    pub z: C64,
    pub d: C64,
    pub dp: C64,
    /// Rounding estimate from cancellation in the series.
    pub error_estimate: f64,
}

/// Largest |z^2 / 2| accepted by `pcf_d`.
pub const PCF_DOMAIN: f64 = 40.0;

/// D_nu(z) and dD_nu/dz from the Kummer-function representation.
pub fn pcf_d(nu: f64, z: C64) -> Result<PcfValue> {
    let w = z * z * 0.5;
    if w.norm() > PCF_DOMAIN {
        return Err(GeomagError::Domain(format!(
            "|z^2/2| = {:.3} exceeds the validated series domain {PCF_DOMAIN}",
            w.norm()
        )));
    }
    let alpha = PI.sqrt() * rgamma((1.0 - nu) / 2.0);
    let beta = (2.0 * PI).sqrt() * rgamma(-nu / 2.0);
    let (a1, b1) = (-nu / 2.0, 0.5);
    let (a2, b2) = ((1.0 - nu) / 2.0, 1.5);
    let (m1, s1) = kummer_m(a1, b1, w);
    let (m2, s2) = kummer_m(a2, b2, w);
    let (m1p, s1p) = kummer_m(a1 + 1.0, b1 + 1.0, w);
    let (m2p, s2p) = kummer_m(a2 + 1.0, b2 + 1.0, w);
    let m1p = m1p * (a1 / b1);
    let m2p = m2p * (a2 / b2);
    let pre = 2f64.powf(nu / 2.0) * (-z * z * 0.25).exp();
    let s = m1 * alpha - z * m2 * beta;
    let sp = z * m1p * alpha - (m2 + z * z * m2p) * beta;
    let d = pre * s;
    let dp = -z * 0.5 * d + pre * sp;
    let zn = z.norm();
    let abs = alpha.abs() * (s1 + zn * s1p.abs() * (a1 / b1).abs())
        + beta.abs() * (zn * s2 + s2 + zn * zn * s2p * (a2 / b2).abs());
    let error_estimate = 4.0 * f64::EPSILON * pre.norm() * abs;
    Ok(PcfValue {
        nu,
        z,
        d,
        dp,
        error_estimate,
    })
}
