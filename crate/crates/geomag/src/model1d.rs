//! One-dimensional two-channel model with a constant pure-gauge connection
//! A = [[A0, A1], [A1, -A0]] on x > 0, a hard wall at x = L and the gap
//! H_BO = diag(Delta, -Delta).
//!
//! Reflection amplitudes use the wave e^{ik(x-L)} + R e^{-ik(x-L)} on x < 0,
//! i.e. the phase is referenced at the wall.

use nalgebra::Matrix4;

use crate::error::{GeomagError, Result};
use crate::gauge_core::GaugeConnection;
use crate::linalg::{c, mat2, solve, CMat, CVec, I};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model1DConfig {
    pub a0: f64,
    pub a1: f64,
    pub delta: f64,
    pub m: f64,
    pub l: f64,
}

impl Default for Model1DConfig {
    fn default() -> Self {
        Model1DConfig {
            a0: 0.0,
            a1: 1.0,
            delta: 1e4,
            m: 0.5,
            l: 3.0,
        }
    }
}

impl Model1DConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !(self.l > 0.0) || !(self.m > 0.0) {
            return Err(GeomagError::Argument(format!(
                "need delta >= 0, L > 0, m > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn gauge_matrix(&self) -> CMat {
        mat2(
            c(self.a0, 0.0),
            c(self.a1, 0.0),
            c(self.a1, 0.0),
            c(-self.a0, 0.0),
        )
    }

    /// The constant connection on x > 0 as a one-dimensional connection.
    pub fn connection(&self) -> GaugeConnection {
        GaugeConnection::constant(vec![self.gauge_matrix()])
    }
}

/// U(x) = exp(-i x A) written out with A = sqrt(A0^2 + A1^2).
pub fn closed_form_unitary(x: f64, cfg: &Model1DConfig) -> CMat {
    let a = cfg.a0.hypot(cfg.a1);
    let (cs, sa) = ((a * x).cos(), if a == 0.0 { x } else { (a * x).sin() / a });
    mat2(
        c(cs, -cfg.a0 * sa),
        c(0.0, -cfg.a1 * sa),
        c(0.0, -cfg.a1 * sa),
        c(cs, cfg.a0 * sa),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct Reflection1D {
    pub r: C64,
    pub s_co: C64,
    pub k: f64,
    pub cond: f64,
}

/// q cot(qL) with q = sqrt(k^2 - A1^2); continues to p coth(pL) below |A1|.
fn log_derivative_at_origin(k: f64, a1: f64, l: f64) -> f64 {
    let q2 = k * k - a1 * a1;
    let x2 = q2 * l * l;
    if x2.abs() < 1e-6 {
        // q cot(qL) = (1/L)(1 - x^2/3 - x^4/45 - ...)
        return (1.0 - x2 / 3.0 - x2 * x2 / 45.0) / l;
    }
    if q2 > 0.0 {
        let q = q2.sqrt();
        q / (q * l).tan()
    } else {
        let p = (-q2).sqrt();
        p / (p * l).tanh()
    }
}

/// Single-channel (Born-Oppenheimer) reflection coefficient. Independent
/// of A0, which is a pure phase in this approximation.
pub fn bo_reflection_closed_form(k: f64, cfg: &Model1DConfig) -> Result<C64> {
    cfg.validate()?;
    if !(k > 0.0) {
        return Err(GeomagError::Argument(format!("need k > 0, got {k}")));
    }
    let g = log_derivative_at_origin(k, cfg.a1, cfg.l);
    let inner = c(-1.0, 0.0) + c(2.0 * k, 0.0) / c(k, g);
    Ok(C64::from_polar(1.0, -2.0 * k * cfg.l) * inner)
}

#[derive(Debug, Clone, Copy)]
pub struct MomentumRoot {
    pub omega: C64,
    /// Null vector (closed, open) of the 2x2 ansatz system.
    pub vector: [C64; 2],
    pub residual: f64,
}

/// The 2x2 matrix -(Omega - A)^2 + 2m(E - H_BO) acting on the ansatz
/// e^{i Omega x} (c_c, c_o).
pub fn ansatz_matrix(omega: C64, e: f64, cfg: &Model1DConfig) -> CMat {
    let a = cfg.gauge_matrix();
    let d = CMat::identity(2, 2) * omega - a;
    let h = mat2(
        c(cfg.delta, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(-cfg.delta, 0.0),
    );
    -(&d * &d) + (CMat::identity(2, 2) * c(e, 0.0) - h).scale(2.0 * cfg.m)
}

fn poly_eval(coef: &[f64; 5], z: C64) -> (C64, C64) {
    // coef[i] multiplies z^i
    let mut p = c(coef[4], 0.0);
    let mut dp = c(0.0, 0.0);
    for i in (0..4).rev() {
        dp = dp * z + p;
        p = p * z + c(coef[i], 0.0);
    }
    (p, dp)
}

/// Four roots of the squared momentum equation, each with the null vector of
/// the ansatz system. Solved through the companion matrix, polished by
/// Newton steps, then filtered on the unsquared equation.
pub fn quartic_momenta(e: f64, cfg: &Model1DConfig) -> Result<Vec<MomentumRoot>> {
    cfg.validate()?;
    let m = cfg.m;
    let a2 = cfg.a0 * cfg.a0 + cfg.a1 * cfg.a1;
    let s = 2.0 * m * e - a2;
    let coef = [
        s * s - 4.0 * m * m * cfg.delta * cfg.delta,
        8.0 * m * cfg.delta * cfg.a0,
        -2.0 * s - 4.0 * a2,
        0.0,
        1.0,
    ];
    let comp = Matrix4::new(
        0.0, 0.0, 0.0, -coef[0], //
        1.0, 0.0, 0.0, -coef[1], //
        0.0, 1.0, 0.0, -coef[2], //
        0.0, 0.0, 1.0, -coef[3],
    );
    let eig = comp.complex_eigenvalues();
    let scale = 1.0 + (2.0 * m * e).abs() + 2.0 * m * cfg.delta + a2;
    let mut roots = Vec::with_capacity(4);
    for z0 in eig.iter() {
        let mut z = *z0;
        for _ in 0..4 {
            let (p, dp) = poly_eval(&coef, z);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            z -= step;
        }
        // residual of the unsquared equation, best sign branch
        let lhs = -z * z - a2 + 2.0 * m * e;
        let u = c(2.0 * m * cfg.delta, 0.0) - z * (2.0 * cfg.a0);
        let w = z * (2.0 * cfg.a1);
        let rt = (u * u + w * w).sqrt();
        let branch = (lhs - rt).norm().min((lhs + rt).norm()) / (scale + z.norm_sqr());
        let mat = ansatz_matrix(z, e, cfg);
        let r0 = (mat[(0, 0)].norm_sqr() + mat[(0, 1)].norm_sqr()).sqrt();
        let r1 = (mat[(1, 0)].norm_sqr() + mat[(1, 1)].norm_sqr()).sqrt();
        let mut v = if r0 >= r1 && r0 > 0.0 {
            [mat[(0, 1)], -mat[(0, 0)]]
        } else if r1 > 0.0 {
            [mat[(1, 1)], -mat[(1, 0)]]
        } else {
            [c(1.0, 0.0), c(0.0, 0.0)]
        };
        let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        v[0] /= nv;
        v[1] /= nv;
        let mv0 = mat[(0, 0)] * v[0] + mat[(0, 1)] * v[1];
        let mv1 = mat[(1, 0)] * v[0] + mat[(1, 1)] * v[1];
        let resid = (mv0.norm().max(mv1.norm()) / (scale + z.norm_sqr())).max(branch);
        if resid < 1e-9 {
            roots.push(MomentumRoot {
                omega: z,
                vector: v,
                residual: resid,
            });
        }
    }
    if roots.len() < 4 {
        return Err(GeomagError::Numerical(format!(
            "only {} of 4 momentum roots passed the residual filter (E = {e}, cfg = {cfg:?})",
            roots.len()
        )));
    }
    Ok(roots)
}

/// Exact coupled-channel reflection by matching at x = 0 and x = L.
pub fn coupled_reflection(k: f64, cfg: &Model1DConfig) -> Result<Reflection1D> {
    cfg.validate()?;
    if !(k > 0.0) {
        return Err(GeomagError::Argument(format!("need k > 0, got {k}")));
    }
    let ekin = k * k / (2.0 * cfg.m);
    if cfg.delta > 0.0 && ekin >= 2.0 * cfg.delta {
        return Err(GeomagError::Argument(format!(
            "k^2/2m = {ekin} must lie below the gap 2 Delta = {}",
            2.0 * cfg.delta
        )));
    }
    let e = -cfg.delta + ekin;
    let roots = quartic_momenta(e, cfg)?;
    let l = cfg.l;
    let a = cfg.gauge_matrix();
    // closed channel on x < 0: S e^{kappa x}; outgoing if the channel is open
    let kc2 = 4.0 * cfg.m * cfg.delta - k * k;
    let kappa = if kc2 >= 0.0 {
        c(kc2.sqrt(), 0.0)
    } else {
        c(0.0, -(-kc2).sqrt())
    };
    let mut mat = CMat::zeros(6, 6);
    let mut rhs = CVec::zeros(6);
    for (j, root) in roots.iter().enumerate() {
        let om = root.omega;
        // growing exponentials are referenced at the wall
        let xref = if om.im < 0.0 { l } else { 0.0 };
        let at_l = (I * om * (l - xref)).exp();
        let at_0 = (I * om * (-xref)).exp();
        let v = [root.vector[0], root.vector[1]];
        let av = [
            a[(0, 0)] * v[0] + a[(0, 1)] * v[1],
            a[(1, 0)] * v[0] + a[(1, 1)] * v[1],
        ];
        for ch in 0..2 {
            mat[(ch, j)] = v[ch] * at_l;
            mat[(2 + ch, j)] = v[ch] * at_0;
            mat[(4 + ch, j)] = (I * om * v[ch] - I * av[ch]) * at_0;
        }
    }
    let eikl = C64::from_polar(1.0, k * l);
    // unknown 4: R, unknown 5: S
    mat[(2, 5)] = c(-1.0, 0.0);
    mat[(3, 4)] = -eikl;
    rhs[3] = eikl.conj();
    mat[(4, 5)] = -kappa;
    mat[(5, 4)] = I * k * eikl;
    rhs[5] = I * k * eikl.conj();
    let (x, cond) = solve(&mat, &rhs, 1e12)?;
    Ok(Reflection1D {
        r: x[4],
        s_co: x[5],
        k,
        cond,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EffectiveLength {
    pub closed_form: f64,
    pub fitted: f64,
    pub difference: f64,
}

/// L - tanh(A1 L)/A1, continuous at A1 = 0.
pub fn effective_length_closed_form(cfg: &Model1DConfig) -> f64 {
    let x = cfg.a1 * cfg.l;
    let ratio = if x.abs() < 1e-6 {
        1.0 - x * x / 3.0
    } else {
        x.tanh() / x
    };
    cfg.l - cfg.l * ratio
}

/// Closed form and the value fitted from Im R of the coupled solution at
/// k = 1e-3 and 2e-3 (R = -1 + 2 i k a_eff + ...).
pub fn effective_length(cfg: &Model1DConfig) -> Result<EffectiveLength> {
    let (k1, k2) = (1e-3, 2e-3);
    let r1 = coupled_reflection(k1, cfg)?.r;
    let r2 = coupled_reflection(k2, cfg)?.r;
    let fitted = (r2.im - r1.im) / (2.0 * (k2 - k1));
    let closed_form = effective_length_closed_form(cfg);
    Ok(EffectiveLength {
        closed_form,
        fitted,
        difference: fitted - closed_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, OdeOptions};
    use proptest::prelude::*;

    /// Integrate F'' = (A1^2 - k^2) F back from the wall and read off R.
    fn bo_oracle(k: f64, a1: f64, l: f64) -> C64 {
        let q2 = k * k - a1 * a1;
        let (y, _) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = y[0] * (-q2);
            },
            l,
            &[c(0.0, 0.0), c(1.0, 0.0)],
            0.0,
            &OdeOptions {
                rtol: 1e-12,
                atol: 1e-16,
                ..Default::default()
            },
        )
        .unwrap();
        let g = y[1] / y[0];
        let ik = I * k;
        C64::from_polar(1.0, -2.0 * k * l) * (ik - g) / (ik + g)
    }

    #[test]
    fn bo_closed_form_matches_ode() {
        for &(k, a1) in &[(0.3, 1.0), (1.0, 1.0), (2.5, 1.0), (0.7, 0.0), (1.3, 2.0)] {
            let cfg = Model1DConfig {
                a1,
                ..Default::default()
            };
            let r = bo_reflection_closed_form(k, &cfg).unwrap();
            let o = bo_oracle(k, a1, cfg.l);
            assert!((r - o).norm() < 1e-9, "k={k} a1={a1}: {r} vs {o}");
        }
    }

    #[test]
    fn bo_continuous_at_threshold() {
        let cfg = Model1DConfig::default();
        let r0 = bo_reflection_closed_form(1.0, &cfg).unwrap();
        let r1 = bo_reflection_closed_form(1.0 + 1e-7, &cfg).unwrap();
        assert!((r0 - r1).norm() < 1e-5);
    }

    #[test]
    fn quartic_roots_solve_ansatz() {
        let cfg = Model1DConfig {
            a0: 0.4,
            a1: 1.0,
            delta: 30.0,
            ..Default::default()
        };
        let e = -cfg.delta + 0.5;
        for r in quartic_momenta(e, &cfg).unwrap() {
            let m = ansatz_matrix(r.omega, e, &cfg);
            let v = CVec::from_row_slice(&r.vector);
            assert!((m * v).norm() < 1e-8 * (1.0 + r.omega.norm_sqr()));
        }
    }

    #[test]
    fn decoupled_wall_reflects_minus_one() {
        let cfg = Model1DConfig {
            a0: 0.7,
            a1: 0.0,
            delta: 50.0,
            ..Default::default()
        };
        for &k in &[0.1, 0.5, 1.0, 2.0] {
            let r = coupled_reflection(k, &cfg).unwrap().r;
            assert!((r + 1.0).norm() < 1e-10, "k={k}: {r}");
            // same amplitude referenced at the origin
            let r_origin = r * C64::from_polar(1.0, -2.0 * k * cfg.l);
            let want = -C64::from_polar(1.0, -2.0 * k * cfg.l);
            assert!((r_origin - want).norm() < 1e-10);
        }
    }

    #[test]
    fn degenerate_channels_conserve_flux() {
        let cfg = Model1DConfig {
            a0: 0.3,
            a1: 1.0,
            delta: 0.0,
            ..Default::default()
        };
        for &k in &[0.2, 0.9, 1.7] {
            let s = coupled_reflection(k, &cfg).unwrap();
            assert!((s.r.norm_sqr() + s.s_co.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn large_gap_approaches_bo() {
        let mut prev = f64::INFINITY;
        for &delta in &[1e2, 1e3, 1e4] {
            let cfg = Model1DConfig {
                delta,
                ..Default::default()
            };
            let k = 0.8;
            let d = (coupled_reflection(k, &cfg).unwrap().r
                - bo_reflection_closed_form(k, &cfg).unwrap())
            .norm();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn effective_length_small_a1() {
        let cfg = Model1DConfig {
            a1: 1e-8,
            ..Default::default()
        };
        assert!(effective_length_closed_form(&cfg).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bo_reflection_is_unimodular(k in 0.01f64..5.0, a1 in -3.0f64..3.0, l in 0.1f64..5.0) {
            let cfg = Model1DConfig { a1, l, ..Default::default() };
            let r = bo_reflection_closed_form(k, &cfg).unwrap();
            prop_assert!((r.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn closed_channel_keeps_unit_reflection(k in 0.05f64..3.0, a0 in -1.0f64..1.0, a1 in 0.1f64..2.0) {
            let cfg = Model1DConfig { a0, a1, delta: 40.0, ..Default::default() };
            let r = coupled_reflection(k, &cfg).unwrap().r;
            prop_assert!((r.norm() - 1.0).abs() < 1e-9);
        }
    }
}
