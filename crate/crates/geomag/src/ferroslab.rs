//! Charged particle at normal incidence on a uniform-field slab
//! B = B0 on |x| < L/2, with A_y = B0 (x + L/2) inside and B0 L beyond.
//!
//! Inside the slab psi'' + (k^2 - B0^2 (x + L/2)^2) psi = 0, solved by
//! D_nu1(z) and D_nu2(iz) with z = sqrt(2 B0)(x + L/2).

use crate::error::{GeomagError, Result};
use crate::linalg::{c, I};
use crate::ode::{integrate, OdeOptions};
use crate::special::{pcf_d, PCF_DOMAIN};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FerroConfig {
    pub b0: f64,
    pub l: f64,
    pub m: f64,
}

impl Default for FerroConfig {
    fn default() -> Self {
        FerroConfig {
            b0: 1.0,
            l: 0.8,
            m: 0.5,
        }
    }
}

impl FerroConfig {
    pub fn phi(&self) -> f64 {
        self.b0 * self.l
    }

    pub fn nu1(&self, k: f64) -> f64 {
        k * k / (2.0 * self.b0) - 0.5
    }

    pub fn nu2(&self, k: f64) -> f64 {
        -k * k / (2.0 * self.b0) - 0.5
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0) || !(self.l > 0.0) || !(self.m > 0.0) {
            return Err(GeomagError::Argument(format!(
                "need B0 > 0, L > 0, m > 0; got {self:?}"
            )));
        }
        if self.b0 * self.l * self.l > PCF_DOMAIN {
            return Err(GeomagError::Domain(format!(
                "B0 L^2 = {} exceeds the parabolic cylinder series domain {PCF_DOMAIN}",
                self.b0 * self.l * self.l
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FerroAmplitudes {
    pub k: f64,
    pub r: C64,
    /// Coefficient of e^{ik'x} (k > Phi) or of e^{-p x} (k < Phi).
    pub t: C64,
    pub transmitted_open: bool,
    /// Rounding estimate propagated from the series evaluations.
    pub error_estimate: f64,
}

/// Exponent of the transmitted wave: i sqrt(k^2 - Phi^2) or -sqrt(Phi^2 - k^2).
fn transmitted_rate(k: f64, phi: f64) -> C64 {
    let q2 = k * k - phi * phi;
    if q2 > 0.0 {
        I * q2.sqrt()
    } else {
        c(-(-q2).sqrt(), 0.0)
    }
}

/// Exact r and t from the parabolic cylinder solutions.
pub fn slab_analytic(k: f64, cfg: &FerroConfig) -> Result<FerroAmplitudes> {
    cfg.validate()?;
    if !(k > 0.0) {
        return Err(GeomagError::Argument(format!("need k > 0, got {k}")));
    }
    let s = (2.0 * cfg.b0).sqrt();
    let zr = s * cfg.l;
    let (nu1, nu2) = (cfg.nu1(k), cfg.nu2(k));
    // x-derivatives: d/dx D(z) = s D'(z), d/dx D(iz) = i s D'(iz)
    let p1l = pcf_d(nu1, c(0.0, 0.0))?;
    let p2l = pcf_d(nu2, c(0.0, 0.0))?;
    let p1r = pcf_d(nu1, c(zr, 0.0))?;
    let p2r = pcf_d(nu2, c(0.0, zr))?;
    let (u1l, u1lp) = (p1l.d, p1l.dp * s);
    let (u2l, u2lp) = (p2l.d, p2l.dp * s * I);
    let (u1r, u1rp) = (p1r.d, p1r.dp * s);
    let (u2r, u2rp) = (p2r.d, p2r.dp * s * I);
    let lam = transmitted_rate(k, cfg.phi());
    let gamma = -(u1rp - lam * u1r) / (u2rp - lam * u2r);
    let left = u1l + gamma * u2l;
    let y = (u1lp + gamma * u2lp) / left;
    let ik = I * k;
    let half = 0.5 * cfg.l;
    let r = C64::from_polar(1.0, -k * cfg.l) * (ik - y) / (ik + y);
    // c1 fixed by the incident wave at x = -L/2
    let c1 = (C64::from_polar(1.0, -k * half) + r * C64::from_polar(1.0, k * half)) / left;
    let t = c1 * (u1r + gamma * u2r) * (-lam * half).exp();
    let err = [p1l, p2l, p1r, p2r]
        .iter()
        .map(|p| p.error_estimate / p.d.norm().max(1e-300))
        .fold(0.0, f64::max);
    Ok(FerroAmplitudes {
        k,
        r,
        t,
        transmitted_open: k > cfg.phi(),
        error_estimate: err,
    })
}

/// Reflection and transmission for a potential step of height Phi^2.
pub fn step_limit(k: f64, phi: f64) -> (C64, C64) {
    let lam = transmitted_rate(k, phi);
    let ik = I * k;
    let r = (ik - lam) / (ik + lam);
    (r, r + 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct FerroCurrents {
    pub j_in: f64,
    pub j_refl: f64,
    pub jx: f64,
    pub jy: f64,
    pub tan_theta: f64,
}

/// Asymptotic currents on both sides and the deflection tan(theta) = jy/jx.
pub fn slab_currents(amps: &FerroAmplitudes, cfg: &FerroConfig) -> Result<FerroCurrents> {
    let (k, phi, m) = (amps.k, cfg.phi(), cfg.m);
    if !(k > phi.abs()) {
        return Err(GeomagError::UndefinedTransmission { k, phi });
    }
    let kp = (k * k - phi * phi).sqrt();
    let t2 = amps.t.norm_sqr();
    let jx = kp * t2 / m;
    let jy = -phi * t2 / m;
    Ok(FerroCurrents {
        j_in: k / m,
        j_refl: -k * amps.r.norm_sqr() / m,
        jx,
        jy,
        tan_theta: jy / jx,
    })
}

/// (r, t) by direct integration of psi'' = (A_y^2 - k^2) psi across the
/// slab, from the transmitted wave at +L/2 back to -L/2.
pub fn slab_ode(k: f64, cfg: &FerroConfig) -> Result<(C64, C64)> {
    cfg.validate()?;
    let half = 0.5 * cfg.l;
    let lam = transmitted_rate(k, cfg.phi());
    let (y, _) = integrate(
        |x, y, dy| {
            let a = cfg.b0 * (x + half);
            dy[0] = y[1];
            dy[1] = y[0] * (a * a - k * k);
        },
        half,
        &[c(1.0, 0.0), lam],
        -half,
        &OdeOptions {
            rtol: 1e-13,
            atol: 1e-16,
            h_init: 1e-4,
            ..Default::default()
        },
    )?;
    let ik = I * k;
    let a = (y[0] + y[1] / ik) * 0.5 * C64::from_polar(1.0, k * half);
    let b = (y[0] - y[1] / ik) * 0.5 * C64::from_polar(1.0, -k * half);
    Ok((b / a, (-lam * half).exp() / a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Weber equation u'' = (z^2/4 - nu - 1/2) u along z = e^{i theta} s,
    /// seeded with the closed forms of D_nu(0), D_nu'(0).
    fn weber_oracle(nu: f64, dir: C64, s1: f64) -> C64 {
        let d0 = 2f64.powf(nu / 2.0) * PI.sqrt() / gamma((1.0 - nu) / 2.0);
        let dp0 = -(2f64.powf((nu + 1.0) / 2.0)) * PI.sqrt() / gamma(-nu / 2.0);
        let (y, _) = integrate(
            |s, y, dy| {
                let z = dir * s;
                dy[0] = y[1];
                dy[1] = y[0] * (z * z * 0.25 - nu - 0.5) * dir * dir;
            },
            0.0,
            &[c(d0, 0.0), dir * dp0],
            s1,
            &OdeOptions {
                rtol: 1e-13,
                atol: 1e-16,
                ..Default::default()
            },
        )
        .unwrap();
        y[0]
    }

    #[test]
    fn pcf_classical_identities() {
        for z in [c(0.5, 0.0), c(1.0, 1.0)] {
            let d0 = pcf_d(0.0, z).unwrap();
            assert!((d0.d - (-z * z * 0.25).exp()).norm() < 1e-14);
            let d1 = pcf_d(1.0, z).unwrap();
            assert!((d1.d - z * (-z * z * 0.25).exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn pcf_matches_weber_ode() {
        let v = pcf_d(1.3, c(0.8, 0.0)).unwrap().d;
        let o = weber_oracle(1.3, c(1.0, 0.0), 0.8);
        assert!((v - o).norm() < 1e-9, "{v} vs {o}");
        let v = pcf_d(-2.7, c(0.0, 1.9)).unwrap().d;
        let o = weber_oracle(-2.7, I, 1.9);
        assert!((v - o).norm() < 1e-9 * o.norm().max(1.0), "{v} vs {o}");
    }

    #[test]
    fn pcf_recurrence() {
        for (nu, z) in [(1.3, c(0.8, 0.0)), (-0.9, c(0.0, 2.0)), (3.2, c(2.5, 0.0))] {
            let p = pcf_d(nu, z).unwrap();
            let lower = pcf_d(nu - 1.0, z).unwrap();
            let res = p.dp + z * 0.5 * p.d - lower.d * nu;
            assert!(res.norm() < 1e-10 * (1.0 + p.d.norm()), "nu {nu}: {res}");
        }
    }

    #[test]
    fn pcf_rejects_far_arguments() {
        assert!(pcf_d(0.5, c(10.0, 0.0)).is_err());
    }

    #[test]
    fn analytic_matches_ode_oracle() {
        let cfg = FerroConfig {
            b0: 1.0,
            l: 0.8,
            m: 0.5,
        };
        let a = slab_analytic(1.2, &cfg).unwrap();
        let (r, t) = slab_ode(1.2, &cfg).unwrap();
        assert!((a.r - r).norm() < 1e-8 && (a.t - t).norm() < 1e-8);
    }

    #[test]
    fn step_limit_for_thin_slab() {
        let (k, phi) = (1.2, 0.8);
        let at = |l: f64| {
            slab_analytic(
                k,
                &FerroConfig {
                    b0: phi / l,
                    l,
                    m: 0.5,
                },
            )
            .unwrap()
        };
        let (rs, ts) = step_limit(k, phi);
        let a = at(1e-6);
        assert!((a.r - rs).norm() < 1e-6 && (a.t - ts).norm() < 1e-6);
        // deviation is linear in L
        let d1 = (at(1e-3).r - rs).norm();
        let d2 = (at(5e-4).r - rs).norm();
        assert!((d1 / d2 - 2.0).abs() < 0.05, "{d1} {d2}");
    }

    #[test]
    fn currents_and_deflection() {
        let cfg = FerroConfig {
            b0: 1.0,
            l: 1.0,
            m: 0.5,
        };
        let a = slab_analytic(2.0, &cfg).unwrap();
        let j = slab_currents(&a, &cfg).unwrap();
        assert!((j.j_in + j.j_refl - j.jx).abs() < 1e-10 * j.j_in);
        assert!((j.tan_theta.abs() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let slab = crate::slab2d::deflection_angle(2.0, 1.0).unwrap();
        assert!((j.tan_theta.abs() - slab).abs() < 1e-14);
        let free = FerroAmplitudes {
            k: 1.0,
            r: c(0.0, 0.0),
            t: c(1.0, 0.0),
            transmitted_open: true,
            error_estimate: 0.0,
        };
        let j = slab_currents(
            &free,
            &FerroConfig {
                b0: 1e-300,
                l: 1.0,
                m: 0.5,
            },
        )
        .unwrap();
        assert!((j.jx - 2.0).abs() < 1e-15 && j.jy.abs() < 1e-15);
        let a = slab_analytic(0.5, &cfg).unwrap();
        assert!(slab_currents(&a, &cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn current_conserved_above_threshold(frac in 1.01f64..3.0, b0 in 0.3f64..3.0, l in 0.2f64..2.0) {
            let cfg = FerroConfig { b0, l, m: 0.5 };
            prop_assume!(b0 * l * l < 8.0);
            let k = frac * cfg.phi();
            let a = slab_analytic(k, &cfg).unwrap();
            let kp = (k * k - cfg.phi().powi(2)).sqrt();
            prop_assert!((k * (1.0 - a.r.norm_sqr()) - kp * a.t.norm_sqr()).abs() < 1e-10 * k);
        }

        #[test]
        fn total_reflection_below_threshold(frac in 0.05f64..0.99, b0 in 0.3f64..3.0, l in 0.2f64..2.0) {
            let cfg = FerroConfig { b0, l, m: 0.5 };
            prop_assume!(b0 * l * l < 8.0);
            let a = slab_analytic(frac * cfg.phi(), &cfg).unwrap();
            prop_assert!((a.r.norm() - 1.0).abs() < 1e-10);
        }
    }
}
