//! Non-singular slab: Omega(x) = (pi/4)(1 + tanh(beta x)), phi = Phi y / 2.
//!
//! Born-Oppenheimer scattering at normal incidence, exact two-channel
//! scattering in the primed diabatic gauge, transmission, deflection and the
//! contour current functional in both pictures.
//!
//! Channel order in the adiabatic picture is (closed, open); in the diabatic
//! picture (f1, f2) with f2 carrying the incident wave.

use std::f64::consts::PI;

use nalgebra::SVD;
use rayon::prelude::*;

use crate::error::{GeomagError, Result};
use crate::gauge_core::{GaugeConnection, UnitaryFamily};
use crate::linalg::{c, mat2, pauli, CMat, CVec, I};
use crate::ode::{integrate, OdeOptions, OdeStats};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabConfig {
    pub beta: f64,
    pub b0: f64,
    pub l: f64,
    pub delta: f64,
    pub m: f64,
}

impl Default for SlabConfig {
    fn default() -> Self {
        SlabConfig {
            beta: 1.0,
            b0: 1.0,
            l: 1.0,
            delta: 1.0,
            m: 0.5,
        }
    }
}

impl SlabConfig {
    /// Config with flux Phi = phi (B0 = phi, L = 1).
    pub fn with_flux(beta: f64, phi: f64, delta: f64) -> Self {
        SlabConfig {
            beta,
            b0: phi,
            l: 1.0,
            delta,
            m: 0.5,
        }
    }

    pub fn phi(&self) -> f64 {
        self.b0 * self.l
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.phi().is_finite() || !(self.delta > 0.0) || !(self.m > 0.0) {
            return Err(GeomagError::Argument(format!(
                "need beta > 0, finite Phi, Delta > 0, m > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Integration cutoff a with 1 - tanh(beta a) < 1e-12.
    pub fn cutoff(&self) -> f64 {
        14.5 / self.beta
    }
}

pub fn omega_profile(x: f64, cfg: &SlabConfig) -> f64 {
    0.25 * PI * (1.0 + (cfg.beta * x).tanh())
}

fn sech2(z: f64) -> f64 {
    let s = 1.0 / z.cosh();
    s * s
}

/// Adiabatic-gauge components (A_x, A_y) at (x, y).
pub fn vector_potential(x: f64, y: f64, cfg: &SlabConfig) -> [CMat; 2] {
    let phi = cfg.phi();
    let t = (cfg.beta * x).tanh();
    let s2 = omega_profile(x, cfg).sin().powi(2);
    let off = 0.5 * PI * t;
    let ph = C64::from_polar(1.0, -phi * y);
    let ax_off = 0.25 * PI * cfg.beta * sech2(cfg.beta * x);
    let ax = mat2(
        c(0.0, 0.0),
        -I * ph * ax_off,
        I * ph.conj() * ax_off,
        c(0.0, 0.0),
    );
    let ay_off = -0.5 * phi * off.cos();
    let ay = mat2(
        c(-phi * s2, 0.0),
        ph * ay_off,
        ph.conj() * ay_off,
        c(phi * s2, 0.0),
    );
    [ax, ay]
}

pub fn connection(cfg: &SlabConfig) -> GaugeConnection {
    let cfg = *cfg;
    GaugeConnection::new(2, 2, move |p| vector_potential(p[0], p[1], &cfg).to_vec())
}

/// U = exp(-i sigma3 phi) exp(-i sigma2 Omega) exp(i sigma3 phi).
pub fn unitary(x: f64, y: f64, cfg: &SlabConfig) -> CMat {
    let om = omega_profile(x, cfg);
    let ph = C64::from_polar(1.0, -cfg.phi() * y);
    let (co, so) = (om.cos(), om.sin());
    mat2(c(co, 0.0), -ph * so, ph.conj() * so, c(co, 0.0))
}

pub fn unitary_family(cfg: &SlabConfig) -> UnitaryFamily {
    let cfg = *cfg;
    UnitaryFamily::new(move |p| unitary(p[0], p[1], &cfg))
}

/// Open-channel induction B(x) = d/dx (Phi sin^2 Omega), hbar = 1.
pub fn induction(x: f64, cfg: &SlabConfig) -> f64 {
    let bx = cfg.beta * x;
    cfg.phi() * 0.25 * PI * cfg.beta * sech2(bx) * (0.5 * PI * bx.tanh()).cos()
}

#[derive(Debug, Clone, Copy)]
pub struct FluxIntegral {
    pub value: f64,
    pub error_estimate: f64,
}

/// Integral of |B(x)| over [-40/beta, 40/beta], Clenshaw-Curtis on panels
/// of width 5/beta.
pub fn flux(cfg: &SlabConfig) -> FluxIntegral {
    let panel = 5.0 / cfg.beta;
    let tol = 1e-14 * cfg.phi().abs().max(1e-300);
    let mut value = 0.0;
    let mut error_estimate = 0.0;
    for i in -8..8 {
        let x0 = panel * i as f64;
        let out = quadrature::clenshaw_curtis::integrate(
            |x| induction(x, cfg).abs(),
            x0,
            x0 + panel,
            tol,
        );
        value += out.integral;
        error_estimate += out.error_estimate;
    }
    FluxIntegral {
        value,
        error_estimate,
    }
}

/// Diagonal open-channel gauge potential A0(x) = Phi sin^2 Omega.
pub fn open_channel_potential(x: f64, cfg: &SlabConfig) -> f64 {
    cfg.phi() * omega_profile(x, cfg).sin().powi(2)
}

/// Induced scalar potential b(x) = sin^2(2 Omega) |grad phi|^2 + |grad Omega|^2.
pub fn scalar_potential(x: f64, cfg: &SlabConfig) -> f64 {
    let bx = cfg.beta * x;
    let phi = cfg.phi();
    let s = sech2(bx);
    (2.0 * phi * phi * ((PI * bx.tanh()).cos() + 1.0) + PI * PI * cfg.beta * cfg.beta * s * s)
        / 16.0
}

pub fn effective_potential(x: f64, cfg: &SlabConfig) -> f64 {
    open_channel_potential(x, cfg).powi(2) + scalar_potential(x, cfg)
}

#[derive(Debug, Clone, Copy)]
pub struct BoAmplitudes {
    pub k: f64,
    pub r: C64,
    /// Coefficient of e^{ik'x}, or of e^{-p x} below threshold.
    pub t: C64,
    /// k' = sqrt(k^2 - Phi^2) when the transmitted channel is open.
    pub k_prime: Option<f64>,
    /// Difference against the run at 1/32 of the tolerance.
    pub step_halving_diff: f64,
}

impl BoAmplitudes {
    pub fn transmission(&self) -> Result<f64> {
        match self.k_prime {
            Some(kp) => Ok(self.t.norm_sqr() * kp / self.k),
            None => Err(GeomagError::UndefinedTransmission {
                k: self.k,
                phi: f64::NAN,
            }),
        }
    }
}

fn bo_once(k: f64, cfg: &SlabConfig, rtol: f64) -> Result<(C64, C64)> {
    let a = cfg.cutoff();
    let phi = cfg.phi();
    let kp2 = k * k - phi * phi;
    let lam = if kp2 > 0.0 {
        I * kp2.sqrt()
    } else {
        c(-(-kp2).sqrt(), 0.0)
    };
    let opts = OdeOptions {
        rtol,
        atol: rtol * 1e-4,
        h_init: 1e-2 / (1.0 + k),
        ..Default::default()
    };
    let (y, _) = integrate(
        |x, y, dy| {
            dy[0] = y[1];
            dy[1] = y[0] * (effective_potential(x, cfg) - k * k);
        },
        a,
        &[c(1.0, 0.0), lam],
        -a,
        &opts,
    )?;
    let ik = I * k;
    let amp_in = (y[0] + y[1] / ik) * 0.5 * C64::from_polar(1.0, k * a);
    let amp_out = (y[0] - y[1] / ik) * 0.5 * C64::from_polar(1.0, -k * a);
    // seed e^{lam (x - a)} referenced at the origin
    let t0 = (-lam * a).exp();
    Ok((amp_out / amp_in, t0 / amp_in))
}

/// Single-channel scattering on v_eff at normal incidence. Amplitudes are
/// referenced at x = 0: F -> e^{ikx} + r e^{-ikx} on the left and
/// t e^{ik'x} on the right.
pub fn bo_scatter_normal(k: f64, cfg: &SlabConfig) -> Result<BoAmplitudes> {
    if !(cfg.beta > 0.0) || !cfg.phi().is_finite() {
        return Err(GeomagError::Argument(format!("bad slab config {cfg:?}")));
    }
    if !(k > 0.0) {
        return Err(GeomagError::Argument(format!("need k > 0, got {k}")));
    }
    let rtol = 1e-11;
    let (r, t) = bo_once(k, cfg, rtol)?;
    let (r2, t2) = bo_once(k, cfg, rtol / 32.0)?;
    let diff = (r - r2).norm().max((t - t2).norm());
    if diff > 1e-8 {
        return Err(GeomagError::Accuracy {
            achieved: diff,
            wanted: 1e-8,
        });
    }
    let kp2 = k * k - cfg.phi().powi(2);
    Ok(BoAmplitudes {
        k,
        r: r2,
        t: t2,
        k_prime: (kp2 > 0.0).then(|| kp2.sqrt()),
        step_halving_diff: diff,
    })
}

/// Asymptotic behaviour of one channel on one side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Asymptote {
    Open(f64),
    Closed(f64),
}

impl Asymptote {
    fn from_q(q: f64) -> Self {
        if q > 0.0 {
            Asymptote::Closed(q.sqrt())
        } else {
            Asymptote::Open((-q).sqrt())
        }
    }

    pub fn is_open(&self) -> bool {
        matches!(self, Asymptote::Open(_))
    }

    pub fn momentum(&self) -> f64 {
        match *self {
            Asymptote::Open(k) | Asymptote::Closed(k) => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// E < Delta + Phi^2/2m: channel 1 closed on the left.
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy)]
pub struct SlabAmplitudes {
    pub energy: f64,
    pub r11: C64,
    /// Coefficients of closed channels (r12 below the excited threshold,
    /// t11 for E < Delta) are read off at the cutoff and only carry a few
    /// digits once the coupling tail outlasts the evanescent wave.
    pub r12: C64,
    pub t11: C64,
    pub t12: C64,
    pub regime: Regime,
    /// k = sqrt(2m(E + Delta)) of the incident channel.
    pub k: f64,
    /// Channel 1 on the left: kappa (closed) or k2 (open).
    pub left1: Asymptote,
    /// Channel 1 on the right: k' (open) or its decay constant.
    pub right1: Asymptote,
    /// Channel 2 on the right: kappa' (closed) or k2' (open).
    pub right2: Asymptote,
    pub cond: f64,
    pub step_halving_diff: f64,
}

impl SlabAmplitudes {
    /// Net x-current on the left, per unit hbar/m.
    pub fn left_current(&self) -> f64 {
        let mut j = self.k * (1.0 - self.r11.norm_sqr());
        if let Asymptote::Open(k2) = self.left1 {
            j -= k2 * self.r12.norm_sqr();
        }
        j
    }

    /// Transmitted x-current on the right, per unit hbar/m.
    pub fn right_current(&self) -> f64 {
        let mut j = 0.0;
        if let Asymptote::Open(kp) = self.right1 {
            j += kp * self.t12.norm_sqr();
        }
        if let Asymptote::Open(k2p) = self.right2 {
            j += k2p * self.t11.norm_sqr();
        }
        j
    }
}

/// Q(x) in f'' = Q f for the primed diabatic amplitudes (f1, f2).
fn coupling_matrix(x: f64, e: f64, cfg: &SlabConfig) -> [f64; 3] {
    let t = (cfg.beta * x).tanh();
    let cos2 = -(0.5 * PI * t).sin();
    let sin2 = (0.5 * PI * t).cos();
    let tm = 2.0 * cfg.m;
    let phi = cfg.phi();
    [
        phi * phi + tm * cfg.delta * cos2 - tm * e,
        -tm * cfg.delta * cos2 - tm * e,
        tm * cfg.delta * sin2,
    ]
}

fn rhs(x: f64, e: f64, cfg: &SlabConfig, y: &[C64], dy: &mut [C64]) {
    let [q11, q22, q12] = coupling_matrix(x, e, cfg);
    for col in 0..y.len() / 4 {
        let s = &y[4 * col..4 * col + 4];
        let d = &mut dy[4 * col..4 * col + 4];
        d[0] = s[2];
        d[1] = s[3];
        d[2] = s[0] * q11 + s[1] * q12;
        d[3] = s[0] * q12 + s[1] * q22;
    }
}

/// One side of the two-sided shooting: orthonormal bases at chunk
/// boundaries, from the seed point to x = 0.
#[derive(Debug, Clone)]
struct Side {
    bounds: Vec<f64>,
    q: Vec<CMat>,
    r: Vec<CMat>,
    /// Exponent lambda of each seed e^{lambda (x - x_seed)}.
    rates: Vec<C64>,
    stats: OdeStats,
}

fn shoot(
    seeds: &CMat,
    rates: Vec<C64>,
    x_seed: f64,
    e: f64,
    cfg: &SlabConfig,
    chunk: f64,
    opts: &OdeOptions,
) -> Result<Side> {
    let p = seeds.ncols();
    let n = ((x_seed.abs() / chunk).ceil() as usize).max(1);
    let qr = seeds.clone().qr();
    let mut q = vec![qr.q()];
    let mut r = vec![qr.r()];
    let mut bounds = vec![x_seed];
    let mut stats = OdeStats::default();
    for j in 0..n {
        let x0 = x_seed * (1.0 - j as f64 / n as f64);
        let x1 = x_seed * (1.0 - (j + 1) as f64 / n as f64);
        let cur = q.last().unwrap();
        let y0: Vec<C64> = (0..p)
            .flat_map(|col| cur.column(col).iter().copied().collect::<Vec<_>>())
            .collect();
        let (y1, st) = integrate(|x, y, dy| rhs(x, e, cfg, y, dy), x0, &y0, x1, opts)?;
        stats.accepted += st.accepted;
        stats.rejected += st.rejected;
        let evolved = CMat::from_column_slice(4, p, &y1);
        let qr = evolved.qr();
        q.push(qr.q());
        r.push(qr.r());
        bounds.push(x1);
    }
    Ok(Side {
        bounds,
        q,
        r,
        rates,
        stats,
    })
}

/// Coefficient vectors at each boundary for the solution Q_n g at x = 0,
/// each normalized with a log-scale; last entry is the seed coefficients.
struct Chain {
    gammas: Vec<(CVec, f64)>,
    seed: (CVec, f64),
}

fn back_chain(side: &Side, g: CVec) -> Result<Chain> {
    let n = side.q.len() - 1;
    let mut gammas = vec![(CVec::zeros(0), 0.0); n + 1];
    let mut cur = g;
    let mut log = 0.0;
    for j in (0..=n).rev() {
        let nrm = cur.norm();
        if nrm > 0.0 {
            cur /= c(nrm, 0.0);
            log += nrm.ln();
        }
        gammas[j] = (cur.clone(), log);
        cur = side.r[j]
            .solve_upper_triangular(&cur)
            .ok_or(GeomagError::Conditioning {
                cond: f64::INFINITY,
            })?;
    }
    let nrm = cur.norm();
    if nrm > 0.0 {
        cur /= c(nrm, 0.0);
        log += nrm.ln();
    }
    Ok(Chain {
        gammas,
        seed: (cur, log),
    })
}

fn clog(z: C64) -> Option<C64> {
    (z.norm() > 0.0).then(|| c(z.norm().ln(), z.arg()))
}

/// Exact two-channel solution at energy E; keeps what is needed to evaluate
/// the field anywhere in [-a, a].
#[derive(Debug, Clone)]
pub struct SlabSolution {
    pub cfg: SlabConfig,
    pub amplitudes: SlabAmplitudes,
    left: Side,
    right: Side,
    /// Per side: boundary states as (normalized coefficients, log scale)
    /// already divided by the incident amplitude.
    left_states: Vec<(CVec, f64)>,
    right_states: Vec<(CVec, f64)>,
    rtol: f64,
}

fn asymptotes(e: f64, cfg: &SlabConfig) -> (Asymptote, Asymptote, Asymptote, Asymptote) {
    let tm = 2.0 * cfg.m;
    let phi2 = cfg.phi().powi(2);
    let l1 = Asymptote::from_q(phi2 + tm * (cfg.delta - e));
    let l2 = Asymptote::from_q(-tm * (cfg.delta + e));
    let r1 = Asymptote::from_q(phi2 - tm * (cfg.delta + e));
    let r2 = Asymptote::from_q(tm * (cfg.delta - e));
    (l1, l2, r1, r2)
}

fn check_thresholds(e: f64, cfg: &SlabConfig) -> Result<()> {
    let tm = 2.0 * cfg.m;
    let phi2 = cfg.phi().powi(2);
    let scale = 1.0 + e.abs() + cfg.delta;
    // channel thresholds in energy units
    let thresholds = [cfg.delta + phi2 / tm, cfg.delta, -cfg.delta + phi2 / tm];
    for th in thresholds {
        if (e - th).abs() <= 1e-9 * scale {
            return Err(GeomagError::ThresholdProximity {
                energy: e,
                threshold: th,
                tol: 1e-9 * scale,
            });
        }
    }
    if !(e > -cfg.delta) {
        return Err(GeomagError::Argument(format!(
            "E = {e} must exceed -Delta = {}",
            -cfg.delta
        )));
    }
    Ok(())
}

fn solve_once(e: f64, cfg: &SlabConfig, rtol: f64) -> Result<SlabSolution> {
    let (l1, l2, r1, r2) = asymptotes(e, cfg);
    let k = l2.momentum();
    let a = cfg.cutoff();
    let tm = 2.0 * cfg.m;
    let rate = (cfg.phi().powi(2) + tm * (cfg.delta + e.abs()))
        .sqrt()
        .max(1.0);
    let chunk = (2.5 / rate).min(1.0);
    let opts = OdeOptions {
        rtol,
        atol: rtol * 1e-4,
        h_init: 0.05 / rate,
        ..Default::default()
    };
    let col = |a0: C64, a1: C64, l0: C64, l1: C64| [a0, a1, l0, l1];
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    // left: incoming, reflected, channel 1 (decaying or outgoing)
    let lam1 = match l1 {
        Asymptote::Closed(kap) => c(kap, 0.0),
        Asymptote::Open(k2) => -I * k2,
    };
    let lrates = vec![I * k, -I * k, lam1];
    let mut lseed = Vec::new();
    lseed.extend(col(zero, one, zero, lrates[0]));
    lseed.extend(col(zero, one, zero, lrates[1]));
    lseed.extend(col(one, zero, lam1, zero));
    let lseed = CMat::from_column_slice(4, 3, &lseed);
    let rlam = |asy: Asymptote| match asy {
        Asymptote::Open(q) => I * q,
        Asymptote::Closed(q) => c(-q, 0.0),
    };
    let rrates = vec![rlam(r1), rlam(r2)];
    let mut rseed = Vec::new();
    rseed.extend(col(one, zero, rrates[0], zero));
    rseed.extend(col(zero, one, zero, rrates[1]));
    let rseed = CMat::from_column_slice(4, 2, &rseed);

    let left = shoot(&lseed, lrates, -a, e, cfg, chunk, &opts)?;
    let right = shoot(&rseed, rrates, a, e, cfg, chunk, &opts)?;

    // match at x = 0: Q_L alpha = Q_R gamma
    let mut m = CMat::zeros(5, 5);
    let ql = left.q.last().unwrap();
    let qrt = right.q.last().unwrap();
    for i in 0..4 {
        for j in 0..3 {
            m[(i, j)] = ql[(i, j)];
        }
        for j in 0..2 {
            m[(i, 3 + j)] = -qrt[(i, j)];
        }
    }
    let svd = SVD::new(m, false, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    let cond = sv[order[0]] / sv[order[3]];
    if !cond.is_finite() || cond > 1e12 {
        return Err(GeomagError::Conditioning { cond });
    }
    let vt = svd.v_t.as_ref().unwrap();
    let null: Vec<C64> = (0..5).map(|j| vt[(order[4], j)].conj()).collect();
    let alpha = CVec::from_row_slice(&null[0..3]);
    let gamma = CVec::from_row_slice(&null[3..5]);
    let lchain = back_chain(&left, alpha)?;
    let rchain = back_chain(&right, gamma)?;

    // amplitudes referenced at the origin, in log form
    let amp_log = |chain: &Chain, side: &Side, i: usize| -> Option<C64> {
        let (v, log) = &chain.seed;
        clog(v[i]).map(|lv| lv + *log - side.rates[i] * side.bounds[0])
    };
    let lin = amp_log(&lchain, &left, 0).ok_or(GeomagError::Numerical(
        "incident amplitude vanished in matching".into(),
    ))?;
    let amp = |l: Option<C64>| l.map_or(c(0.0, 0.0), |z| (z - lin).exp());
    let r11 = amp(amp_log(&lchain, &left, 1));
    let r12 = amp(amp_log(&lchain, &left, 2));
    let t12 = amp(amp_log(&rchain, &right, 0));
    let t11 = amp(amp_log(&rchain, &right, 1));
    let norm_states = |chain: &Chain| -> Vec<(CVec, f64)> {
        chain
            .gammas
            .iter()
            .map(|(g, log)| {
                let ph = C64::from_polar(1.0, -lin.im);
                (g * ph, log - lin.re)
            })
            .collect()
    };
    let regime = if e < cfg.delta + cfg.phi().powi(2) / tm {
        Regime::Closed
    } else {
        Regime::Open
    };
    let amplitudes = SlabAmplitudes {
        energy: e,
        r11,
        r12,
        t11,
        t12,
        regime,
        k,
        left1: l1,
        right1: r1,
        right2: r2,
        cond,
        step_halving_diff: 0.0,
    };
    Ok(SlabSolution {
        cfg: *cfg,
        amplitudes,
        left_states: norm_states(&lchain),
        right_states: norm_states(&rchain),
        left,
        right,
        rtol,
    })
}

/// Solve at energy E (measured so that the incident channel has
/// k = sqrt(2m(E + Delta))). Runs twice, the second time at 1/32 of the
/// tolerance, and fails if the amplitudes differ by more than 1e-8.
pub fn coupled_solve(e: f64, cfg: &SlabConfig) -> Result<SlabSolution> {
    cfg.validate()?;
    check_thresholds(e, cfg)?;
    let rtol = 1e-10;
    let coarse = solve_once(e, cfg, rtol)?;
    let mut fine = solve_once(e, cfg, rtol / 32.0)?;
    let (a, b) = (&coarse.amplitudes, &fine.amplitudes);
    // closed-channel coefficients are dominated by the driven tail far out
    // and are not compared
    let open_only = |z: C64, w: C64, open: bool| if open { (z - w).norm() } else { 0.0 };
    let diff = [
        (a.r11 - b.r11).norm(),
        open_only(a.r12, b.r12, b.left1.is_open()),
        open_only(a.t11, b.t11, b.right2.is_open()),
        open_only(a.t12, b.t12, b.right1.is_open()),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if !(diff <= 1e-8) {
        return Err(GeomagError::Accuracy {
            achieved: diff,
            wanted: 1e-8,
        });
    }
    fine.amplitudes.step_halving_diff = diff;
    Ok(fine)
}

pub fn coupled_scatter(e: f64, cfg: &SlabConfig) -> Result<SlabAmplitudes> {
    Ok(coupled_solve(e, cfg)?.amplitudes)
}

/// The kappa' = k convention: E = 0 and Delta = k^2/2m.
pub fn kappa_prime_equals_k(k: f64, cfg: &SlabConfig) -> (f64, SlabConfig) {
    let mut c2 = *cfg;
    c2.delta = k * k / (2.0 * cfg.m);
    (0.0, c2)
}

impl SlabSolution {
    pub fn cutoff(&self) -> f64 {
        self.cfg.cutoff()
    }

    /// (f1, f2, f1', f2') at x in [-a, a].
    pub fn state(&self, x: f64) -> Result<[C64; 4]> {
        let a = self.cutoff();
        if !(x.abs() <= a) {
            return Err(GeomagError::Domain(format!(
                "x = {x} outside the integrated range [-{a}, {a}]"
            )));
        }
        let (side, states) = if x <= 0.0 {
            (&self.left, &self.left_states)
        } else {
            (&self.right, &self.right_states)
        };
        // boundaries run from the seed point toward 0
        let nb = side.bounds.len();
        let mut j = 0;
        while j + 1 < nb && (side.bounds[j + 1] - x) * side.bounds[0].signum() >= 0.0 {
            j += 1;
        }
        let (g, log) = &states[j];
        let y0 = &side.q[j] * g;
        let scale = log.exp();
        let opts = OdeOptions {
            rtol: self.rtol,
            atol: self.rtol * 1e-4,
            h_init: 1e-3,
            ..Default::default()
        };
        let e = self.amplitudes.energy;
        let (y, _) = integrate(
            |xx, y, dy| rhs(xx, e, &self.cfg, y, dy),
            side.bounds[j],
            y0.as_slice(),
            x,
            &opts,
        )?;
        Ok([y[0] * scale, y[1] * scale, y[2] * scale, y[3] * scale])
    }

    pub fn ode_steps(&self) -> usize {
        self.left.stats.accepted + self.right.stats.accepted
    }
}

/// |T| = |t12|^2 sqrt(k^2 - Phi^2) / k.
pub fn transmission_coefficient(amps: &SlabAmplitudes, cfg: &SlabConfig) -> Result<f64> {
    match amps.right1 {
        Asymptote::Open(kp) => Ok(amps.t12.norm_sqr() * kp / amps.k),
        Asymptote::Closed(_) => Err(GeomagError::UndefinedTransmission {
            k: amps.k,
            phi: cfg.phi(),
        }),
    }
}

/// |tan theta| = |Phi| / sqrt(k^2 - Phi^2).
pub fn deflection_angle(k: f64, phi: f64) -> Result<f64> {
    if !(k > phi.abs()) {
        return Err(GeomagError::Domain(format!(
            "deflection needs k > |Phi|, got k = {k}, Phi = {phi}"
        )));
    }
    Ok(phi.abs() / (k * k - phi * phi).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSample {
    pub x: f64,
    pub y: f64,
    pub jx: f64,
    pub jy: f64,
}

fn diabatic_current(s: &[C64; 4], cfg: &SlabConfig) -> (f64, f64) {
    let m = cfg.m;
    let jx = (s[0].conj() * s[2] + s[1].conj() * s[3]).im / m;
    let jy = -cfg.phi() * s[0].norm_sqr() / m;
    (jx, jy)
}

impl SlabSolution {
    /// Diabatic current at x (independent of y).
    pub fn current(&self, x: f64) -> Result<(f64, f64)> {
        Ok(diabatic_current(&self.state(x)?, &self.cfg))
    }

    /// Diabatic amplitude G = (e^{-i Phi y} f1, f2) and its x, y derivatives.
    pub fn diabatic_field(&self, x: f64, y: f64) -> Result<[CVec; 3]> {
        let s = self.state(x)?;
        let ph = C64::from_polar(1.0, -self.cfg.phi() * y);
        let g = CVec::from_row_slice(&[ph * s[0], s[1]]);
        let gx = CVec::from_row_slice(&[ph * s[2], s[3]]);
        let gy = CVec::from_row_slice(&[-I * self.cfg.phi() * ph * s[0], c(0.0, 0.0)]);
        Ok([g, gx, gy])
    }
}

/// Currents sampled on a grid of x and y values; points outside [-a, a]
/// are rejected.
pub fn current_field(sol: &SlabSolution, xs: &[f64], ys: &[f64]) -> Result<Vec<CurrentSample>> {
    let per_x: Vec<(f64, f64, f64)> = xs
        .par_iter()
        .map(|&x| sol.current(x).map(|(jx, jy)| (x, jx, jy)))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &(x, jx, jy) in &per_x {
        for &y in ys {
            out.push(CurrentSample { x, y, jx, jy });
        }
    }
    Ok(out)
}

/// Largest |div j| on the interior of a uniform x-grid with spacing h, with
/// j_x built from central differences of the sampled field.
pub fn divergence_residual(sol: &SlabSolution, x0: f64, x1: f64, h: f64) -> Result<f64> {
    let n = ((x1 - x0) / h).round() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| x0 + h * i as f64).collect();
    let f: Vec<[C64; 4]> = xs
        .par_iter()
        .map(|&x| sol.state(x))
        .collect::<Result<_>>()?;
    let m = sol.cfg.m;
    let jx: Vec<f64> = (1..n)
        .map(|i| {
            let d1 = (f[i + 1][0] - f[i - 1][0]) / (2.0 * h);
            let d2 = (f[i + 1][1] - f[i - 1][1]) / (2.0 * h);
            (f[i][0].conj() * d1 + f[i][1].conj() * d2).im / m
        })
        .collect();
    // j_y does not depend on y, so only d/dx j_x remains
    Ok((1..jx.len() - 1)
        .map(|i| ((jx[i + 1] - jx[i - 1]) / (2.0 * h)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy)]
pub struct FluxResult {
    /// Contour integral of the diabatic current.
    pub diabatic: f64,
    /// Contour integral of (1/m) Im(F^dag grad F) in the adiabatic picture.
    pub adiabatic_current: f64,
    /// Contour integral of -(1/m) F^dag A F.
    pub gauge_part: f64,
    pub w: f64,
    /// Same three quantities from the asymptotic amplitudes.
    pub closed_form: [f64; 3],
}

/// y-components (j, j_tilde, j_A) at (x, y).
fn y_currents(sol: &SlabSolution, x: f64, y: f64) -> Result<[f64; 3]> {
    let cfg = &sol.cfg;
    let m = cfg.m;
    let [g, _, gy] = sol.diabatic_field(x, y)?;
    let u = unitary(x, y, cfg);
    let ud = u.adjoint();
    // dU/dy = -i (Phi/2) [sigma3, U]
    let s3 = pauli(3);
    let duy = (&s3 * &u - &u * &s3) * (-I * (0.5 * cfg.phi()));
    let dud = duy.adjoint();
    let f = &ud * &g;
    let fy = &dud * &g + &ud * &gy;
    let ay = &vector_potential(x, y, cfg)[1];
    let j = g.dotc(&gy).im / m;
    let jt = f.dotc(&fy).im / m;
    let ja = -(f.dotc(&(ay * &f))).re / m;
    Ok([j, jt, ja])
}

/// Contour functional for the rectangle [-a, a] x [-w, w]. The x-segments
/// cancel because the currents do not depend on y.
pub fn flux_functional(sol: &SlabSolution, w: f64) -> Result<FluxResult> {
    if !(w > 0.0) {
        return Err(GeomagError::Argument(format!("need w > 0, got {w}")));
    }
    let a = sol.cutoff();
    let y = 0.37 * w;
    let left = y_currents(sol, -a, y)?;
    let right = y_currents(sol, a, y)?;
    let f = |i: usize| 2.0 * w * (left[i] - right[i]);
    let amps = &sol.amplitudes;
    let pref = 2.0 * w * sol.cfg.phi() / sol.cfg.m;
    let t12 = if amps.right1.is_open() {
        amps.t12.norm_sqr()
    } else {
        0.0
    };
    let t11 = if amps.right2.is_open() {
        amps.t11.norm_sqr()
    } else {
        0.0
    };
    let r12 = if amps.left1.is_open() {
        amps.r12.norm_sqr()
    } else {
        0.0
    };
    Ok(FluxResult {
        diabatic: f(0),
        adiabatic_current: f(1),
        gauge_part: f(2),
        w,
        closed_form: [pref * (t12 - r12), pref * (t11 - r12), pref * (t12 - t11)],
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TransmissionPoint {
    pub k: f64,
    pub t_bo: f64,
    pub t_coupled: f64,
}

/// BO and coupled |T| under the kappa' = k convention, in parallel over k.
pub fn transmission_scan(ks: &[f64], cfg: &SlabConfig) -> Result<Vec<TransmissionPoint>> {
    ks.par_iter()
        .map(|&k| {
            let (e, c2) = kappa_prime_equals_k(k, cfg);
            let bo = bo_scatter_normal(k, &c2)?;
            let amps = coupled_scatter(e, &c2)?;
            Ok(TransmissionPoint {
                k,
                t_bo: bo.transmission().unwrap_or(0.0),
                t_coupled: transmission_coefficient(&amps, &c2).unwrap_or(0.0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge_core::{connection_from_unitary, curvature, curvature_norm};
    use crate::linalg::max_abs;
    use proptest::prelude::*;

    fn rk4_bo(k: f64, cfg: &SlabConfig, n: usize) -> C64 {
        // fixed-step RK4 from +a to -a, then read off r
        let a = cfg.cutoff();
        let kp = (k * k - cfg.phi().powi(2)).sqrt();
        let h = -2.0 * a / n as f64;
        let f = |x: f64, y: [C64; 2]| [y[1], y[0] * (effective_potential(x, cfg) - k * k)];
        let mut y = [c(1.0, 0.0), I * kp];
        let mut x = a;
        for _ in 0..n {
            let k1 = f(x, y);
            let k2 = f(
                x + h / 2.0,
                [y[0] + k1[0] * (h / 2.0), y[1] + k1[1] * (h / 2.0)],
            );
            let k3 = f(
                x + h / 2.0,
                [y[0] + k2[0] * (h / 2.0), y[1] + k2[1] * (h / 2.0)],
            );
            let k4 = f(x + h, [y[0] + k3[0] * h, y[1] + k3[1] * h]);
            for i in 0..2 {
                y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
            x += h;
        }
        let ik = I * k;
        let ain = (y[0] + y[1] / ik) * C64::from_polar(1.0, k * a);
        let aout = (y[0] - y[1] / ik) * C64::from_polar(1.0, -k * a);
        aout / ain
    }

    #[test]
    fn profile_limits() {
        let cfg = SlabConfig::with_flux(1.0, 1.5, 1.0);
        assert!(omega_profile(-40.0, &cfg).abs() < 1e-15);
        assert!((omega_profile(40.0, &cfg) - PI / 2.0).abs() < 1e-15);
        let ay = &vector_potential(40.0, 0.3, &cfg)[1];
        assert!((ay[(0, 0)].re + 1.5).abs() < 1e-12 && (ay[(1, 1)].re - 1.5).abs() < 1e-12);
        assert!(ay[(0, 1)].norm() < 1e-12);
        assert!(effective_potential(-40.0, &cfg).abs() < 1e-12);
        assert!((effective_potential(40.0, &cfg) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn effective_potential_at_origin() {
        let cfg = SlabConfig::with_flux(1.0, 2.0, 1.0);
        let want = 2.0 + PI * PI / 16.0;
        assert!((effective_potential(0.0, &cfg) - want).abs() < 1e-14);
    }

    #[test]
    fn flux_equals_b0_l() {
        let cfg = SlabConfig {
            beta: 1.0,
            b0: 1.0,
            l: 2.0,
            ..Default::default()
        };
        assert!((flux(&cfg).value - 2.0).abs() < 2e-10);
    }

    #[test]
    fn explicit_connection_matches_unitary_family() {
        let cfg = SlabConfig::with_flux(1.3, 0.8, 1.0);
        let fam = unitary_family(&cfg);
        for p in [[0.3, 0.7], [-1.1, 2.0], [0.0, -0.4]] {
            let num = connection_from_unitary(&fam, &p, 1e-5).unwrap();
            let ana = vector_potential(p[0], p[1], &cfg);
            for mu in 0..2 {
                assert!(max_abs(&(&num.components[mu] - &ana[mu])) < 1e-8);
            }
        }
    }

    #[test]
    fn slab_connection_is_flat() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 1.0);
        let f = curvature(&connection(&cfg), &[0.3, 0.7], 1e-3).unwrap();
        assert!(curvature_norm(&f) <= 1e-5);
    }

    #[test]
    fn bo_matches_rk4_oracle() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 1.0);
        let k = 1.5;
        let bo = bo_scatter_normal(k, &cfg).unwrap();
        let r = rk4_bo(k, &cfg, 40_000);
        assert!((bo.r - r).norm() < 1e-8, "{} vs {r}", bo.r);
        let kp = bo.k_prime.unwrap();
        assert!((k * (1.0 - bo.r.norm_sqr()) - kp * bo.t.norm_sqr()).abs() < 1e-8);
    }

    #[test]
    fn bo_unitary_without_flux_and_total_below_threshold() {
        let cfg = SlabConfig::with_flux(2.0, 0.0, 1.0);
        let bo = bo_scatter_normal(0.8, &cfg).unwrap();
        assert!((bo.r.norm_sqr() + bo.t.norm_sqr() - 1.0).abs() < 1e-8);
        let cfg = SlabConfig::with_flux(1.0, 1.0, 1.0);
        let bo = bo_scatter_normal(0.5, &cfg).unwrap();
        assert!((bo.r.norm() - 1.0).abs() < 1e-8);
        assert!(bo.transmission().is_err());
    }

    /// One-sided oracle: integrate the two right-hand solutions back to -a
    /// and decompose into the four exponentials there.
    fn one_sided(e: f64, cfg: &SlabConfig) -> (C64, C64) {
        let a = cfg.cutoff();
        let tm = 2.0 * cfg.m;
        let k = (tm * (e + cfg.delta)).sqrt();
        let kap = (cfg.phi().powi(2) + tm * (cfg.delta - e)).sqrt();
        let kp = (k * k - cfg.phi().powi(2)).sqrt();
        let kpp = (tm * (cfg.delta - e)).sqrt();
        let opts = OdeOptions {
            rtol: 1e-13,
            atol: 1e-17,
            ..Default::default()
        };
        let mut cols = Vec::new();
        for seed in [
            [c(1.0, 0.0), c(0.0, 0.0), I * kp, c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(-kpp, 0.0)],
        ] {
            let (y, _) = integrate(|x, y, dy| rhs(x, e, cfg, y, dy), a, &seed, -a, &opts).unwrap();
            let x = -a;
            let ik = I * k;
            let inc = (y[1] + y[3] / ik) * 0.5 * C64::from_polar(1.0, -k * x);
            let refl = (y[1] - y[3] / ik) * 0.5 * C64::from_polar(1.0, k * x);
            let grow = (y[0] - y[2] / kap) * 0.5;
            cols.push((inc, refl, grow));
        }
        // u inc0 + v inc1 = 1, u grow0 + v grow1 = 0
        let det = cols[0].0 * cols[1].2 - cols[1].0 * cols[0].2;
        let u = cols[1].2 / det;
        let v = -cols[0].2 / det;
        let r11 = u * cols[0].1 + v * cols[1].1;
        let t12 = u * C64::from_polar(1.0, -kp * a);
        (r11, t12)
    }

    #[test]
    fn coupled_matches_one_sided_oracle() {
        let cfg = SlabConfig::with_flux(4.0, 1.0, 4.0);
        let amps = coupled_scatter(0.0, &cfg).unwrap();
        let (r11, t12) = one_sided(0.0, &cfg);
        assert!((amps.r11 - r11).norm() < 1e-8, "{} vs {r11}", amps.r11);
        assert!((amps.t12 - t12).norm() < 1e-8, "{} vs {t12}", amps.t12);
    }

    #[test]
    fn open_regime_conserves_current() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 0.5);
        let amps = coupled_scatter(2.0, &cfg).unwrap();
        assert_eq!(amps.regime, Regime::Open);
        assert!((amps.left_current() - amps.right_current()).abs() < 1e-8);
    }

    #[test]
    fn high_energy_suppresses_channel_mixing() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 0.1);
        let amps = coupled_scatter(10.0, &cfg).unwrap();
        assert!(amps.t12.norm() < 0.05 && amps.r12.norm() < 0.05);
    }

    #[test]
    fn threshold_proximity_is_rejected() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 1.0);
        let th = cfg.delta + cfg.phi().powi(2) / (2.0 * cfg.m);
        assert!(matches!(
            coupled_scatter(th + 1e-12, &cfg),
            Err(GeomagError::ThresholdProximity { .. })
        ));
    }

    #[test]
    fn bo_fidelity_improves_with_gap() {
        let k = 1.3;
        let mut prev = f64::INFINITY;
        for delta in [10.0, 100.0, 1000.0] {
            let cfg = SlabConfig::with_flux(1.0, 1.0, delta);
            let e = k * k / (2.0 * cfg.m) - delta;
            let tc = transmission_coefficient(&coupled_scatter(e, &cfg).unwrap(), &cfg).unwrap();
            let tb = bo_scatter_normal(k, &cfg).unwrap().transmission().unwrap();
            let d = (tc - tb).abs();
            assert!(d < prev, "delta {delta}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn transmission_and_deflection_edge_cases() {
        let cfg = SlabConfig::with_flux(1.0, 0.0, 1.0);
        let mut amps = coupled_scatter(0.0, &cfg).unwrap();
        amps.t12 = c(0.0, 0.0);
        assert_eq!(transmission_coefficient(&amps, &cfg).unwrap(), 0.0);
        amps.t12 = c(0.6, 0.8);
        assert!((transmission_coefficient(&amps, &cfg).unwrap() - 1.0).abs() < 1e-15);
        assert!((deflection_angle(2.0, 1.0).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((deflection_angle(4.0, 1.0).unwrap() - 0.258).abs() < 5e-4);
        assert_eq!(deflection_angle(3.0, 0.0).unwrap(), 0.0);
        assert!(deflection_angle(1.0, 1.0).is_err());
    }

    #[test]
    fn flux_functional_in_both_pictures() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 4.0);
        let sol = coupled_solve(0.0, &cfg).unwrap();
        let f = flux_functional(&sol, 1.0).unwrap();
        assert!(((f.adiabatic_current + f.gauge_part) / f.diabatic - 1.0).abs() < 1e-8);
        assert!(f.adiabatic_current.abs() < 1e-12);
        let t12 = sol.amplitudes.t12.norm_sqr();
        assert!((f.diabatic / (2.0 * f.w * cfg.phi() / cfg.m) - t12).abs() < 1e-8);
        let cfg = SlabConfig::with_flux(1.0, 1.0, 0.5);
        let sol = coupled_solve(2.0, &cfg).unwrap();
        let f = flux_functional(&sol, 0.5).unwrap();
        assert!(((f.adiabatic_current + f.gauge_part) / f.diabatic - 1.0).abs() < 1e-8);
        for i in 0..3 {
            let v = [f.diabatic, f.adiabatic_current, f.gauge_part][i];
            assert!((v - f.closed_form[i]).abs() < 1e-8 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn current_field_limits() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 4.0);
        let sol = coupled_solve(0.0, &cfg).unwrap();
        let a = sol.cutoff();
        let amps = sol.amplitudes;
        let s = current_field(&sol, &[-a, a], &[0.0, 1.0]).unwrap();
        assert_eq!(s.len(), 4);
        let jl = amps.k * (1.0 - amps.r11.norm_sqr()) / cfg.m;
        assert!((s[0].jx - jl).abs() < 1e-8 && s[0].jy.abs() < 1e-12);
        let kp = (amps.k * amps.k - 1.0).sqrt();
        assert!((s[2].jx - kp * amps.t12.norm_sqr() / cfg.m).abs() < 1e-8);
        assert!((s[2].jy + amps.t12.norm_sqr() / cfg.m).abs() < 1e-8);
        assert!(current_field(&sol, &[a + 1.0], &[0.0]).is_err());
    }

    #[test]
    fn divergence_residual_is_second_order() {
        let cfg = SlabConfig::with_flux(1.0, 1.0, 4.0);
        let sol = coupled_solve(0.0, &cfg).unwrap();
        let r1 = divergence_residual(&sol, -2.0, 2.0, 0.02).unwrap();
        let r2 = divergence_residual(&sol, -2.0, 2.0, 0.01).unwrap();
        let ratio = r1 / r2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn closed_regime_conserves_current(kk in 1.01f64..3.0) {
            let (e, cfg) = kappa_prime_equals_k(kk, &SlabConfig::with_flux(1.0, 1.0, 1.0));
            let amps = coupled_scatter(e, &cfg).unwrap();
            let t = transmission_coefficient(&amps, &cfg).unwrap();
            prop_assert!((amps.r11.norm_sqr() + t - 1.0).abs() < 1e-8);
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }
}
