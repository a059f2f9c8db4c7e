//! Internal-state gauge structures: a spin-1/2 dressed by an azimuthal field
//! (Aharonov-Bohm type vector potential) and two spin-1/2 particles coupled
//! by a dipolar interaction.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use crate::error::{GeomagError, Result};
use crate::gauge_core::{wilson_line, GaugeConnection, ParamPath, SingularLocus, UnitaryFamily};
use crate::linalg::{c, identity, kron, mat2, max_abs, pauli, CMat, I};
use crate::C64;

/// Radial profile of the azimuthal field magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldProfile {
    /// B(rho) = delta.
    Constant,
    /// B(rho) = delta * r0 / rho, as for a straight wire.
    InverseRadius,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbConfig {
    pub delta: f64,
    pub r0: f64,
    pub omega: f64,
    pub rho_min: f64,
    pub m: f64,
    pub profile: FieldProfile,
}

impl Default for AbConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            r0: 1.0,
            omega: 1.0,
            rho_min: 1e-3,
            m: 0.5,
            profile: FieldProfile::Constant,
        }
    }
}

impl AbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.rho_min > 0.0 && self.m > 0.0) {
            return Err(GeomagError::Argument(format!(
                "need r0 > 0, rho_min > 0, m > 0 (got {}, {}, {})",
                self.r0, self.rho_min, self.m
            )));
        }
        if !(self.delta.is_finite() && self.omega.is_finite()) {
            return Err(GeomagError::Argument(
                "delta and omega must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn field(&self, rho: f64) -> f64 {
        match self.profile {
            FieldProfile::Constant => self.delta,
            FieldProfile::InverseRadius => self.delta * self.r0 / rho,
        }
    }

    fn check_radius(&self, rho: f64) -> Result<()> {
        if rho < self.rho_min {
            return Err(GeomagError::Domain(format!(
                "rho = {rho:e} is inside the excluded core rho_min = {:e}",
                self.rho_min
            )));
        }
        Ok(())
    }
}

/// Index of the open (lower, -B) adiabatic channel.
pub const AB_OPEN: usize = 1;

/// U(phi) = exp(-i phi s3/2) exp(i pi s1/4) exp(i phi s3/2).
pub fn ab_unitary(phi: f64) -> CMat {
    let h = 0.5 * phi;
    let r = FRAC_1_SQRT_2;
    // exp(i pi s1 / 4) = (1 + i s1)/sqrt2
    let v = mat2(c(r, 0.0), c(0.0, r), c(0.0, r), c(r, 0.0));
    let a = mat2(
        C64::from_polar(1.0, -h),
        c(0.0, 0.0),
        c(0.0, 0.0),
        C64::from_polar(1.0, h),
    );
    &a * v * a.adjoint()
}

/// The matrix multiplying phi_hat / (2 rho).
fn ab_matrix(phi: f64) -> CMat {
    mat2(
        c(-1.0, 0.0),
        I * C64::from_polar(1.0, -phi),
        -I * C64::from_polar(1.0, phi),
        c(1.0, 0.0),
    )
}

/// Cartesian components (A_x, A_y) of the full 2x2 connection at (rho, phi).
pub fn ab_connection(rho: f64, phi: f64, cfg: &AbConfig) -> Result<[CMat; 2]> {
    cfg.check_radius(rho)?;
    let m = ab_matrix(phi).scale(0.5 / rho);
    Ok([m.scale(-phi.sin()), m.scale(phi.cos())])
}

/// The connection as a function of Cartesian (x, y), with the origin excluded.
pub fn ab_gauge_connection(cfg: &AbConfig) -> GaugeConnection {
    GaugeConnection::new(2, 2, |p: &[f64]| {
        let rho = p[0].hypot(p[1]);
        let phi = p[1].atan2(p[0]);
        let m = ab_matrix(phi).scale(0.5 / rho);
        vec![m.scale(-phi.sin()), m.scale(phi.cos())]
    })
    .with_singular_locus(SingularLocus {
        center: vec![0.0, 0.0],
        exclusion_radius: cfg.rho_min,
    })
}

/// U as a family over Cartesian (x, y).
pub fn ab_unitary_family() -> UnitaryFamily {
    UnitaryFamily::new(|p: &[f64]| ab_unitary(p[1].atan2(p[0])))
}

/// Open-channel projection: Abelian phi_hat component and BO potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbBo {
    pub rho: f64,
    /// phi_hat component of the projected vector potential.
    pub a_phi: f64,
    /// -B(rho) + 1/(8 m rho^2).
    pub v: f64,
    /// The 1/(8 m rho^2) part alone.
    pub scalar_gauge: f64,
}

pub fn ab_bo(rho: f64, cfg: &AbConfig) -> Result<AbBo> {
    cfg.validate()?;
    cfg.check_radius(rho)?;
    let scalar_gauge = 1.0 / (8.0 * cfg.m * rho * rho);
    Ok(AbBo {
        rho,
        a_phi: 0.5 / rho,
        v: -cfg.field(rho) + scalar_gauge,
        scalar_gauge,
    })
}

/// Scalar gauge potential (1/2m) sum_mu |A_mu[open, closed]|^2 rebuilt from the
/// off-diagonal entries of the full connection.
pub fn ab_scalar_from_offdiagonal(rho: f64, phi: f64, cfg: &AbConfig) -> Result<f64> {
    let a = ab_connection(rho, phi, cfg)?;
    let closed = 1 - AB_OPEN;
    let s: f64 = a.iter().map(|m| m[(AB_OPEN, closed)].norm_sqr()).sum();
    Ok(s / (2.0 * cfg.m))
}

/// Loop integral of the open-channel Abelian potential around a circle of
/// radius `rho`, midpoint rule in the angle with the exact tangent.
pub fn ab_abelian_loop(rho: f64, steps: usize, cfg: &AbConfig) -> Result<f64> {
    cfg.check_radius(rho)?;
    let mut sum = 0.0;
    for j in 0..steps {
        let dp = 2.0 * PI / steps as f64;
        let pm = (j as f64 + 0.5) * dp;
        let a = ab_connection(rho, pm, cfg)?;
        let d = [-rho * pm.sin() * dp, rho * pm.cos() * dp];
        sum += a[0][(AB_OPEN, AB_OPEN)].re * d[0] + a[1][(AB_OPEN, AB_OPEN)].re * d[1];
    }
    Ok(sum)
}

/// Closed-form W(t) = (1/sqrt2)[[1, -i e^{-i w t}], [-i e^{i w t}, 1]] = U^dag(w t).
pub fn ab_wilson(t: f64, cfg: &AbConfig) -> CMat {
    let p = cfg.omega * t;
    mat2(
        c(1.0, 0.0),
        -I * C64::from_polar(1.0, -p),
        -I * C64::from_polar(1.0, p),
        c(1.0, 0.0),
    )
    .scale(FRAC_1_SQRT_2)
}

/// Path-ordered exponential along the arc rho = r0 from phi = 0 to omega t.
pub fn ab_wilson_numeric(t: f64, cfg: &AbConfig, steps: usize) -> Result<CMat> {
    cfg.validate()?;
    let path = ParamPath::arc(cfg.r0, 0.0, cfg.omega * t);
    Ok(wilson_line(&ab_gauge_connection(cfg), &path, steps)?.unitary)
}

/// Deviation of the numeric arc holonomy from W(t) W(0)^dag, which is the
/// closed form expressed with the identity at the start of the arc.
pub fn ab_wilson_deviation(t: f64, cfg: &AbConfig, steps: usize) -> Result<f64> {
    let num = ab_wilson_numeric(t, cfg, steps)?;
    let exact = ab_wilson(t, cfg) * ab_wilson(0.0, cfg).adjoint();
    Ok(max_abs(&(num - exact)))
}

type Potential = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct DipolarConfig {
    pub triplet: Potential,
    pub singlet: Potential,
    pub alpha: f64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl std::fmt::Debug for DipolarConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DipolarConfig")
            .field("triplet(r)", &(self.triplet)(self.r))
            .field("singlet(r)", &(self.singlet)(self.r))
            .field("alpha", &self.alpha)
            .field("r", &self.r)
            .field("theta", &self.theta)
            .field("phi", &self.phi)
            .finish()
    }
}

impl DipolarConfig {
    /// Constant triplet and singlet curves.
    pub fn constant(triplet: f64, singlet: f64, alpha: f64, r: f64, theta: f64, phi: f64) -> Self {
        Self {
            triplet: Arc::new(move |_| triplet),
            singlet: Arc::new(move |_| singlet),
            alpha,
            r,
            theta,
            phi,
        }
    }

    pub fn with_orientation(&self, theta: f64, phi: f64) -> Self {
        Self {
            theta,
            phi,
            ..self.clone()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(GeomagError::Argument(format!("need R > 0, got {}", self.r)));
        }
        Ok(())
    }

    /// Diagonal of H_BO in the order (M = -1, M = 0, M = +1, singlet).
    pub fn bo_energies(&self) -> [f64; 4] {
        let t = (self.triplet)(self.r);
        let s = (self.singlet)(self.r);
        let d = self.alpha * self.alpha / self.r.powi(3);
        [t - 0.5 * d, t + d, t - 0.5 * d, s]
    }
}

/// Spin-1/2 operators for particles a and b on |uu>, |ud>, |du>, |dd>.
fn spin_ops() -> [[CMat; 3]; 2] {
    let one = identity(2);
    let s = |k| pauli(k).scale(0.5);
    [
        [kron(&s(1), &one), kron(&s(2), &one), kron(&s(3), &one)],
        [kron(&one, &s(1)), kron(&one, &s(2)), kron(&one, &s(3))],
    ]
}

pub fn dipolar_hamiltonian(cfg: &DipolarConfig) -> Result<CMat> {
    cfg.check()?;
    let [sa, sb] = spin_ops();
    let r = cfg.r;
    let t = (cfg.triplet)(r);
    let s = (cfg.singlet)(r);
    let n = [
        cfg.theta.sin() * cfg.phi.cos(),
        cfg.theta.sin() * cfg.phi.sin(),
        cfg.theta.cos(),
    ];
    let mut sdot = CMat::zeros(4, 4);
    let mut san = CMat::zeros(4, 4);
    let mut sbn = CMat::zeros(4, 4);
    for k in 0..3 {
        sdot += &sa[k] * &sb[k];
        san += sa[k].scale(n[k]);
        sbn += sb[k].scale(n[k]);
    }
    let h0 = sdot.scale(t - s) + identity(4).scale((3.0 * t + s) / 4.0);
    let hdip = (&sdot - (san * sbn).scale(3.0)).scale(cfg.alpha * cfg.alpha / r.powi(3));
    Ok(h0 + hdip)
}

/// The fixed change of basis from the product basis to (|dd>, -T0, |uu>, S).
pub fn z_matrix() -> CMat {
    let r = FRAC_1_SQRT_2;
    CMat::from_row_slice(
        4,
        4,
        &[
            [0.0, 0.0, 1.0, 0.0],
            [0.0, -r, 0.0, -r],
            [0.0, -r, 0.0, r],
            [1.0, 0.0, 0.0, 0.0],
        ]
        .concat()
        .into_iter()
        .map(|x| c(x, 0.0))
        .collect::<Vec<_>>(),
    )
}

/// Single-spin rotation exp(-i s3 phi/2) exp(-i s2 theta/2) exp(i s3 phi/2)
/// and its theta and phi derivatives.
fn spin_rotation(theta: f64, phi: f64) -> [CMat; 3] {
    let (ch, sh) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let ry = mat2(c(ch, 0.0), c(-sh, 0.0), c(sh, 0.0), c(ch, 0.0));
    let dry = mat2(c(-sh, 0.0), c(-ch, 0.0), c(ch, 0.0), c(-sh, 0.0)).scale(0.5);
    let rz = mat2(
        C64::from_polar(1.0, -0.5 * phi),
        c(0.0, 0.0),
        c(0.0, 0.0),
        C64::from_polar(1.0, 0.5 * phi),
    );
    let u = &rz * &ry * rz.adjoint();
    let du_theta = &rz * dry * rz.adjoint();
    let s3 = pauli(3).map(|z| z * I * 0.5);
    let du_phi = -(&s3 * &u) + &u * &s3;
    [u, du_theta, du_phi]
}

/// U(theta, phi) = (U_a (x) U_b) Z.
pub fn dipolar_unitary(theta: f64, phi: f64) -> CMat {
    let [u, _, _] = spin_rotation(theta, phi);
    kron(&u, &u) * z_matrix()
}

pub fn dipolar_unitary_family() -> UnitaryFamily {
    UnitaryFamily::new(|p: &[f64]| dipolar_unitary(p[0], p[1]))
}

/// Max-entry defect of H_ad - U H_BO U^dag.
pub fn factorization_defect(cfg: &DipolarConfig) -> Result<f64> {
    let h = dipolar_hamiltonian(cfg)?;
    let u = dipolar_unitary(cfg.theta, cfg.phi);
    let e = cfg.bo_energies();
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        4,
        e.iter().map(|&x| c(x, 0.0)),
    ));
    Ok(max_abs(&(h - &u * d * u.adjoint())))
}

/// Coordinate components (A_theta, A_phi) = i U^dag d U.
fn coordinate_connection(theta: f64, phi: f64) -> [CMat; 2] {
    let [u, dt, dp] = spin_rotation(theta, phi);
    let z = z_matrix();
    let full = kron(&u, &u) * &z;
    let d_theta = (kron(&dt, &u) + kron(&u, &dt)) * &z;
    let d_phi = (kron(&dp, &u) + kron(&u, &dp)) * &z;
    let ud = full.adjoint();
    [(&ud * d_theta).map(|x| x * I), (&ud * d_phi).map(|x| x * I)]
}

/// Closest approach to theta = pi accepted by `dipolar_connection`.
pub const POLE_GUARD: f64 = 1e-6;

/// Orthonormal components of the 4x4 connection.
#[derive(Debug, Clone)]
pub struct DipolarConnection {
    pub theta_hat: CMat,
    pub phi_hat: CMat,
}

pub fn dipolar_connection(theta: f64, phi: f64, r: f64) -> Result<DipolarConnection> {
    if !(r > 0.0) {
        return Err(GeomagError::Argument(format!("need R > 0, got {r}")));
    }
    if !(theta > 0.0) {
        return Err(GeomagError::Domain(format!(
            "theta = {theta} must be positive"
        )));
    }
    if theta > PI - POLE_GUARD {
        return Err(GeomagError::Domain(format!(
            "theta = {theta} is within {POLE_GUARD:e} of the tan(theta/2) pole at pi"
        )));
    }
    let [at, ap] = coordinate_connection(theta, phi);
    Ok(DipolarConnection {
        theta_hat: at.unscale(r),
        phi_hat: ap.unscale(r * theta.sin()),
    })
}

/// The connection over coordinates (theta, phi); the south pole is excluded.
pub fn dipolar_gauge_connection() -> GaugeConnection {
    GaugeConnection::new(2, 4, |p: &[f64]| coordinate_connection(p[0], p[1]).to_vec())
        .with_singular_locus(SingularLocus {
            center: vec![PI, 0.0],
            exclusion_radius: POLE_GUARD,
        })
}
