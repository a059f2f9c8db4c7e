//! Two-channel time-dependent propagation on a periodic grid (split-operator
//! with spectral kinetic steps), trajectory analysis, the adiabatic rotation,
//! a classical Lorentz-force comparator and the flux lens.
//!
//! Units: hbar = 1, 2m = 1, so the kinetic operator is -laplacian and a
//! packet with wavenumber k moves at speed 2k.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{GeomagError, Result};
use crate::ode::{integrate, OdeOptions};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub xi: (f64, f64),
    pub eta: (f64, f64),
}

impl Default for Grid2D {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 256,
            xi: (-2.0 * PI, 2.0 * PI),
            eta: (-2.0 * PI, 2.0 * PI),
        }
    }
}

impl Grid2D {
    pub fn validate(&self) -> Result<()> {
        if !self.nx.is_power_of_two() || !self.ny.is_power_of_two() || self.nx < 4 || self.ny < 4 {
            return Err(GeomagError::Argument(format!(
                "grid sizes must be powers of two >= 4, got {} x {}",
                self.nx, self.ny
            )));
        }
        if !(self.xi.1 > self.xi.0 && self.eta.1 > self.eta.0) {
            return Err(GeomagError::Argument(
                "grid ranges must be increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn dxi(&self) -> f64 {
        (self.xi.1 - self.xi.0) / self.nx as f64
    }

    pub fn deta(&self) -> f64 {
        (self.eta.1 - self.eta.0) / self.ny as f64
    }

    pub fn area(&self) -> f64 {
        self.dxi() * self.deta()
    }

    pub fn xi_at(&self, i: usize) -> f64 {
        self.xi.0 + i as f64 * self.dxi()
    }

    pub fn eta_at(&self, j: usize) -> f64 {
        self.eta.0 + j as f64 * self.deta()
    }

    fn wavenumbers(n: usize, len: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let m = if i < n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                };
                2.0 * PI * m / len
            })
            .collect()
    }
}

/// Channel amplitudes f and g stored row-major (one row per eta value).
#[derive(Debug, Clone)]
pub struct SpinorField {
    pub grid: Grid2D,
    pub f: Vec<C64>,
    pub g: Vec<C64>,
    pub tau: f64,
}

impl SpinorField {
    pub fn zeros(grid: Grid2D) -> Self {
        let n = grid.nx * grid.ny;
        Self {
            grid,
            f: vec![C64::new(0.0, 0.0); n],
            g: vec![C64::new(0.0, 0.0); n],
            tau: 0.0,
        }
    }

    /// Isotropic Gaussian in the g channel with |psi|^2 of standard
    /// deviation sigma along each axis, moving along +xi with wavenumber k.
    pub fn gaussian(grid: Grid2D, xi0: f64, eta0: f64, sigma: f64, k: f64) -> Self {
        let mut s = Self::zeros(grid);
        for j in 0..grid.ny {
            let y = grid.eta_at(j) - eta0;
            for i in 0..grid.nx {
                let x = grid.xi_at(i) - xi0;
                let amp = (-(x * x + y * y) / (4.0 * sigma * sigma)).exp();
                s.g[j * grid.nx + i] = C64::from_polar(amp, k * x);
            }
        }
        let n = s.norm().sqrt();
        s.g.iter_mut().for_each(|z| *z /= n);
        s
    }

    pub fn populations(&self) -> (f64, f64) {
        let da = self.grid.area();
        let pf: f64 = self.f.iter().map(|z| z.norm_sqr()).sum::<f64>() * da;
        let pg: f64 = self.g.iter().map(|z| z.norm_sqr()).sum::<f64>() * da;
        (pf, pg)
    }

    pub fn norm(&self) -> f64 {
        let (a, b) = self.populations();
        a + b
    }

    pub fn density(&self) -> Vec<f64> {
        self.f
            .iter()
            .zip(&self.g)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    /// (<xi>, <eta>) over the full grid, normalized by the current norm.
    pub fn center(&self) -> Option<(f64, f64)> {
        center_of(&self.grid, &self.density())
    }
}

fn center_of(grid: &Grid2D, rho: &[f64]) -> Option<(f64, f64)> {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for j in 0..grid.ny {
        let y = grid.eta_at(j);
        for i in 0..grid.nx {
            let w = rho[j * grid.nx + i];
            m += w;
            sx += w * grid.xi_at(i);
            sy += w * y;
        }
    }
    (m > 0.0).then(|| (sx / m, sy / m))
}

/// The phase parameter entering V12 = exp(-i chi(eta)) Delta sin(2 Omega).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxProfile {
    /// chi = Phi eta.
    Constant(f64),
    /// chi = Phi(eta) eta with Phi(eta) = eta k / sqrt(eta^2 + 4 gamma f^2).
    Lens { gamma: f64, focal: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdseConfig {
    pub grid: Grid2D,
    pub k: f64,
    pub sigma: f64,
    pub xi0: f64,
    pub eta0: f64,
    pub delta: f64,
    pub beta: f64,
    pub flux: FluxProfile,
    pub dt: f64,
    pub steps: usize,
    /// Trajectory sampling interval in steps.
    pub output_every: usize,
    /// Width of the edge band watched for wrap-around.
    pub guard: f64,
    /// Allowed growth of the norm inside the guard band.
    pub guard_tol: f64,
    /// End the run at the last clean sample instead of failing when the
    /// guard tolerance is exceeded.
    pub stop_at_guard: bool,
}

impl Default for TdseConfig {
    fn default() -> Self {
        Self {
            grid: Grid2D::default(),
            k: 12.0,
            sigma: 0.5,
            xi0: -4.0,
            eta0: 0.0,
            delta: 200.0,
            beta: 2.0,
            flux: FluxProfile::Constant(6.0),
            dt: 2.5e-4,
            steps: 1200,
            output_every: 20,
            guard: 0.5,
            guard_tol: 1e-6,
            stop_at_guard: false,
        }
    }
}

impl TdseConfig {
    /// Ratio parameters: 2 Delta / k^2 and Phi / k at fixed k.
    pub fn from_ratios(k: f64, gap_ratio: f64, flux_ratio: f64) -> Self {
        Self {
            k,
            delta: 0.5 * gap_ratio * k * k,
            flux: FluxProfile::Constant(flux_ratio * k),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.dt > 0.0 && self.sigma > 0.0 && self.beta > 0.0 && self.k > 0.0) {
            return Err(GeomagError::Argument("need dt, sigma, beta, k > 0".into()));
        }
        if self.output_every == 0 {
            return Err(GeomagError::Argument("output_every must be >= 1".into()));
        }
        if let FluxProfile::Lens { gamma, focal } = self.flux {
            if !(gamma > 0.0 && focal > 0.0) {
                return Err(GeomagError::Argument(
                    "lens needs gamma > 0 and f > 0".into(),
                ));
            }
        }
        if self.beta * self.xi0.abs() < 4.0 {
            return Err(GeomagError::Argument(format!(
                "packet starts inside the interaction region (beta |xi0| = {})",
                self.beta * self.xi0.abs()
            )));
        }
        Ok(())
    }

    pub fn omega(&self, xi: f64) -> f64 {
        0.25 * PI * (1.0 + (self.beta * xi).tanh())
    }

    pub fn phase(&self, eta: f64) -> f64 {
        match self.flux {
            FluxProfile::Constant(phi) => phi * eta,
            FluxProfile::Lens { gamma, focal } => {
                self.k * eta * eta / (eta * eta + 4.0 * gamma * focal * focal).sqrt()
            }
        }
    }

    /// Signed induction B = d(sin^2 Omega)/dxi * dchi/deta felt by the open
    /// adiabatic channel.
    pub fn induction(&self, xi: f64, eta: f64) -> f64 {
        let bx = self.beta * xi;
        let s = 1.0 / bx.cosh();
        let shape = 0.25 * PI * self.beta * s * s * (0.5 * PI * bx.tanh()).cos();
        let dchi = match self.flux {
            FluxProfile::Constant(phi) => phi,
            FluxProfile::Lens { gamma, focal } => {
                let a = 4.0 * gamma * focal * focal;
                self.k * eta * (eta * eta + 2.0 * a) / (eta * eta + a).powf(1.5)
            }
        };
        shape * dchi
    }
}

/// V = [[Delta cos 2Omega, e^{-i chi} Delta sin 2Omega], [c.c., -Delta cos 2Omega]].
pub fn potential_matrix(xi: f64, eta: f64, cfg: &TdseConfig) -> [[C64; 2]; 2] {
    let w = 2.0 * cfg.omega(xi);
    let v = cfg.delta * w.cos();
    let v12 = C64::from_polar(cfg.delta * w.sin(), -cfg.phase(eta));
    [[C64::new(v, 0.0), v12], [v12.conj(), C64::new(-v, 0.0)]]
}

/// Precomputed propagation factors for one configuration and time step.
pub struct Propagator {
    cfg: TdseConfig,
    dt: f64,
    /// exp(-i kappa^2 dt/2) including the 1/(nx ny) FFT normalization.
    kinetic_half: Vec<C64>,
    kinetic_full: Vec<C64>,
    /// Per point: cos(Delta dt), and -i sin(Delta dt)/Delta times (V11, V12).
    pot: Vec<(f64, C64, C64)>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl Propagator {
    pub fn new(cfg: &TdseConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        let g = cfg.grid;
        let kx = Grid2D::wavenumbers(g.nx, g.xi.1 - g.xi.0);
        let ky = Grid2D::wavenumbers(g.ny, g.eta.1 - g.eta.0);
        let norm = 1.0 / (g.nx * g.ny) as f64;
        let mut kinetic_half = Vec::with_capacity(g.nx * g.ny);
        let mut kinetic_full = Vec::with_capacity(g.nx * g.ny);
        for y in &ky {
            for x in &kx {
                let k2 = x * x + y * y;
                kinetic_half.push(C64::from_polar(norm, -0.5 * k2 * dt));
                kinetic_full.push(C64::from_polar(norm, -k2 * dt));
            }
        }
        let (c, s) = ((cfg.delta * dt).cos(), (cfg.delta * dt).sin());
        let mut pot = Vec::with_capacity(g.nx * g.ny);
        for j in 0..g.ny {
            let eta = g.eta_at(j);
            for i in 0..g.nx {
                let v = potential_matrix(g.xi_at(i), eta, cfg);
                let scale = if cfg.delta != 0.0 {
                    C64::new(0.0, -s / cfg.delta)
                } else {
                    C64::new(0.0, 0.0)
                };
                pot.push((c, scale * v[0][0], scale * v[0][1]));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: *cfg,
            dt,
            kinetic_half,
            kinetic_full,
            pot,
            fft_x: planner.plan_fft_forward(g.nx),
            ifft_x: planner.plan_fft_inverse(g.nx),
            fft_y: planner.plan_fft_forward(g.ny),
            ifft_y: planner.plan_fft_inverse(g.ny),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn fft2(&self, data: &mut [C64], forward: bool) {
        let (nx, ny) = (self.cfg.grid.nx, self.cfg.grid.ny);
        let (px, py) = if forward {
            (&self.fft_x, &self.fft_y)
        } else {
            (&self.ifft_x, &self.ifft_y)
        };
        data.par_chunks_mut(nx).for_each(|row| px.process(row));
        let mut t = vec![C64::new(0.0, 0.0); nx * ny];
        transpose(data, &mut t, nx, ny);
        t.par_chunks_mut(ny).for_each(|col| py.process(col));
        transpose(&t, data, ny, nx);
    }

    fn kinetic(&self, s: &mut SpinorField, factor: &[C64]) {
        for comp in [&mut s.f, &mut s.g] {
            self.fft2(comp, true);
            comp.par_iter_mut()
                .zip(factor.par_iter())
                .for_each(|(z, k)| *z *= k);
            self.fft2(comp, false);
        }
    }

    fn potential(&self, s: &mut SpinorField) {
        s.f.par_iter_mut()
            .zip(s.g.par_iter_mut())
            .zip(self.pot.par_iter())
            .for_each(|((f, g), &(c, a, b))| {
                // exp(-i V dt) = cos(Delta dt) - i sin(Delta dt)/Delta V, V11 = -V22
                let nf = *f * c + a * *f + b * *g;
                // scale is imaginary, so scale * conj(V12) = -conj(b)
                let ng = *g * c - b.conj() * *f - a * *g;
                *f = nf;
                *g = ng;
            });
    }

    /// One Strang step: half kinetic, full potential, half kinetic.
    pub fn step(&self, s: &mut SpinorField) {
        self.kinetic(s, &self.kinetic_half);
        self.potential(s);
        self.kinetic(s, &self.kinetic_half);
        s.tau += self.dt;
    }

    /// n Strang steps with the inner half kinetic steps fused.
    pub fn steps(&self, s: &mut SpinorField, n: usize) {
        if n == 0 {
            return;
        }
        self.kinetic(s, &self.kinetic_half);
        for i in 0..n {
            self.potential(s);
            if i + 1 < n {
                self.kinetic(s, &self.kinetic_full);
            }
        }
        self.kinetic(s, &self.kinetic_half);
        s.tau += n as f64 * self.dt;
    }
}

fn transpose(src: &[C64], dst: &mut [C64], cols: usize, rows: usize) {
    const B: usize = 32;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Single Strang step with freshly built factors.
pub fn step(field: &SpinorField, cfg: &TdseConfig, dt: f64) -> Result<SpinorField> {
    let p = Propagator::new(cfg, dt)?;
    let mut out = field.clone();
    p.step(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub tau: f64,
    pub xi: f64,
    pub eta: f64,
    pub pop_f: f64,
    pub pop_g: f64,
    pub norm: f64,
    /// Channel-resolved centers; None while a channel is empty.
    pub f_center: Option<(f64, f64)>,
    pub g_center: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Time at which a run with `stop_at_guard` was cut short.
    pub truncated_at: Option<f64>,
}

impl Trajectory {
    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.points.first().map_or(1.0, |p| p.norm);
        self.points
            .iter()
            .map(|p| (p.norm - n0).abs())
            .fold(0.0, f64::max)
    }
}

fn sample(s: &SpinorField) -> TrajectoryPoint {
    let (pop_f, pop_g) = s.populations();
    let (xi, eta) = center_of(&s.grid, &s.density()).unwrap_or((f64::NAN, f64::NAN));
    let df: Vec<f64> = s.f.iter().map(|z| z.norm_sqr()).collect();
    let dg: Vec<f64> = s.g.iter().map(|z| z.norm_sqr()).collect();
    TrajectoryPoint {
        tau: s.tau,
        xi,
        eta,
        pop_f,
        pop_g,
        norm: pop_f + pop_g,
        f_center: center_of(&s.grid, &df),
        g_center: center_of(&s.grid, &dg),
    }
}

/// Norm inside the edge band of width `w`.
pub fn guard_mass(s: &SpinorField, w: f64) -> f64 {
    let g = s.grid;
    let rho = s.density();
    let mut m = 0.0;
    for j in 0..g.ny {
        let y = g.eta_at(j);
        let ey = y < g.eta.0 + w || y >= g.eta.1 - w;
        for i in 0..g.nx {
            let x = g.xi_at(i);
            if ey || x < g.xi.0 + w || x >= g.xi.1 - w {
                m += rho[j * g.nx + i];
            }
        }
    }
    m * g.area()
}

pub fn initial_field(cfg: &TdseConfig) -> SpinorField {
    SpinorField::gaussian(cfg.grid, cfg.xi0, cfg.eta0, cfg.sigma, cfg.k)
}

/// Propagate the initial packet for `cfg.steps` steps, sampling every
/// `cfg.output_every` steps. Fails with `WrapAround` when the norm in the
/// edge band grows by more than `guard_tol` over its initial value, unless
/// `stop_at_guard` is set.
pub fn propagate(cfg: &TdseConfig) -> Result<(Trajectory, SpinorField)> {
    let p = Propagator::new(cfg, cfg.dt)?;
    let mut s = initial_field(cfg);
    let base = guard_mass(&s, cfg.guard);
    let mut traj = Trajectory {
        points: vec![sample(&s)],
        truncated_at: None,
    };
    let mut done = 0;
    while done < cfg.steps {
        let n = cfg.output_every.min(cfg.steps - done);
        p.steps(&mut s, n);
        done += n;
        let excess = guard_mass(&s, cfg.guard) - base;
        if excess > cfg.guard_tol {
            if cfg.stop_at_guard {
                traj.truncated_at = Some(s.tau);
                break;
            }
            return Err(GeomagError::WrapAround {
                mass: excess,
                tau: s.tau,
            });
        }
        traj.points.push(sample(&s));
    }
    Ok((traj, s))
}

/// Pointwise rotation to the adiabatic amplitudes (f~, g~).
pub fn adiabatic_amplitudes(field: &SpinorField, cfg: &TdseConfig) -> (Vec<C64>, Vec<C64>) {
    let g = field.grid;
    let n = g.nx * g.ny;
    let mut ft = vec![C64::new(0.0, 0.0); n];
    let mut gt = vec![C64::new(0.0, 0.0); n];
    for j in 0..g.ny {
        let e = C64::from_polar(1.0, -cfg.phase(g.eta_at(j)));
        for i in 0..g.nx {
            let w = cfg.omega(g.xi_at(i));
            let (c, s) = (w.cos(), w.sin());
            let idx = j * g.nx + i;
            let (f, gg) = (field.f[idx], field.g[idx]);
            ft[idx] = f * c + e * s * gg;
            gt[idx] = gg * c - e.conj() * s * f;
        }
    }
    (ft, gt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflectionFit {
    pub tan_theta: f64,
    pub intercept: f64,
    /// RMS residual of the linear fit.
    pub residual: f64,
    pub points: usize,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let res = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, icpt, res)
}

/// Slope d<eta>/d<xi> over the samples with <xi> >= xi_min.
pub fn deflection_from_trajectory(traj: &Trajectory, xi_min: f64) -> Result<DeflectionFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = traj
        .points
        .iter()
        .filter(|p| p.xi >= xi_min)
        .map(|p| (p.xi, p.eta))
        .unzip();
    if x.len() < 4 || x.last().unwrap() - x[0] < 0.25 {
        return Err(GeomagError::InsufficientPropagation);
    }
    let (slope, icpt, res) = linear_fit(&x, &y);
    Ok(DeflectionFit {
        tan_theta: -slope,
        intercept: icpt,
        residual: res,
        points: x.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalPoint {
    pub t: f64,
    pub xi: f64,
    pub eta: f64,
    pub p_xi: f64,
    pub p_eta: f64,
}

/// Lorentz-force motion p' = v x B z_hat with v = 2p (2m = 1), started at
/// (xi0, eta0) with momentum (k, 0) and stopped once xi >= xi_end.
pub fn classical_trajectory(
    k: f64,
    eta0: f64,
    cfg: &TdseConfig,
    xi_end: f64,
    dt_out: f64,
) -> Result<Vec<ClassicalPoint>> {
    let c = *cfg;
    let rhs = move |_t: f64, y: &[C64], dy: &mut [C64]| {
        let (xi, eta, px, py) = (y[0].re, y[1].re, y[2].re, y[3].re);
        let b = c.induction(xi, eta);
        let (vx, vy) = (2.0 * px, 2.0 * py);
        dy[0] = C64::new(vx, 0.0);
        dy[1] = C64::new(vy, 0.0);
        dy[2] = C64::new(vy * b, 0.0);
        dy[3] = C64::new(-vx * b, 0.0);
    };
    let opts = OdeOptions {
        rtol: 1e-12,
        atol: 1e-14,
        h_init: 1e-4,
        ..Default::default()
    };
    let mut y = vec![
        C64::new(cfg.xi0, 0.0),
        C64::new(eta0, 0.0),
        C64::new(k, 0.0),
        C64::new(0.0, 0.0),
    ];
    let mut t = 0.0;
    let mut out = vec![ClassicalPoint {
        t,
        xi: cfg.xi0,
        eta: eta0,
        p_xi: k,
        p_eta: 0.0,
    }];
    let t_max = 100.0 * (xi_end - cfg.xi0).abs() / (2.0 * k);
    while y[0].re < xi_end {
        if t > t_max {
            return Err(GeomagError::Numerical(format!(
                "classical path did not reach xi = {xi_end} by t = {t_max}"
            )));
        }
        let (ny, _) = integrate(rhs, t, &y, t + dt_out, &opts)?;
        y = ny;
        t += dt_out;
        out.push(ClassicalPoint {
            t,
            xi: y[0].re,
            eta: y[1].re,
            p_xi: y[2].re,
            p_eta: y[3].re,
        });
    }
    Ok(out)
}

/// Exit slope -p_eta / p_xi at the end of a classical path.
pub fn classical_deflection(path: &[ClassicalPoint]) -> f64 {
    let p = path.last().expect("non-empty path");
    -p.p_eta / p.p_xi
}

/// Lines eta = a_i + s_i xi; the xi minimizing the spread of eta across lines.
pub fn focal_point(lines: &[(f64, f64)]) -> Result<f64> {
    if lines.len() < 2 {
        return Err(GeomagError::Argument(
            "focal estimate needs at least 2 lines".into(),
        ));
    }
    let n = lines.len() as f64;
    let ma = lines.iter().map(|l| l.0).sum::<f64>() / n;
    let ms = lines.iter().map(|l| l.1).sum::<f64>() / n;
    let sas: f64 = lines.iter().map(|l| (l.0 - ma) * (l.1 - ms)).sum();
    let sss: f64 = lines.iter().map(|l| (l.1 - ms).powi(2)).sum();
    if sss == 0.0 {
        return Err(GeomagError::Numerical(
            "parallel lines have no focus".into(),
        ));
    }
    Ok(-sas / sss)
}

#[derive(Debug, Clone)]
pub struct LensRun {
    pub impact: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// (intercept, slope) of each post-lens fit.
    pub lines: Vec<(f64, f64)>,
    pub focal: f64,
    pub classical_paths: Vec<Vec<ClassicalPoint>>,
    pub classical_focal: f64,
}

/// One packet per impact parameter through the lens profile; post-lens
/// lines are fit over samples with <xi> >= xi_min.
pub fn lens_run(impact: &[f64], cfg: &TdseConfig, xi_min: f64) -> Result<LensRun> {
    if impact.len() < 2 {
        return Err(GeomagError::Argument(
            "lens_run needs at least 2 impact parameters".into(),
        ));
    }
    if !matches!(cfg.flux, FluxProfile::Lens { .. }) {
        return Err(GeomagError::Argument(
            "lens_run needs a lens flux profile".into(),
        ));
    }
    let runs: Vec<Result<Trajectory>> = impact
        .par_iter()
        .map(|&b| {
            let c = TdseConfig { eta0: b, ..*cfg };
            propagate(&c).map(|r| r.0)
        })
        .collect();
    let trajectories = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut lines = Vec::new();
    for t in &trajectories {
        let d = deflection_from_trajectory(t, xi_min)?;
        lines.push((d.intercept, -d.tan_theta));
    }
    let focal = focal_point(&lines)?;
    let xi_end = cfg.grid.xi.1;
    let classical_paths = impact
        .iter()
        .map(|&b| classical_trajectory(cfg.k, b, cfg, xi_end, 0.005))
        .collect::<Result<Vec<_>>>()?;
    let clines: Vec<(f64, f64)> = classical_paths
        .iter()
        .map(|p| {
            let q = p.last().unwrap();
            let s = q.p_eta / q.p_xi;
            (q.eta - s * q.xi, s)
        })
        .collect();
    let classical_focal = focal_point(&clines)?;
    Ok(LensRun {
        impact: impact.to_vec(),
        trajectories,
        lines,
        focal,
        classical_paths,
        classical_focal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(delta: f64, phi: f64) -> TdseConfig {
        TdseConfig {
            grid: Grid2D {
                nx: 128,
                ny: 128,
                ..Default::default()
            },
            delta,
            flux: FluxProfile::Constant(phi),
            ..Default::default()
        }
    }

    fn variance_xi(s: &SpinorField) -> f64 {
        let rho = s.density();
        let (cx, _) = center_of(&s.grid, &rho).unwrap();
        let mut v = 0.0;
        for j in 0..s.grid.ny {
            for i in 0..s.grid.nx {
                v += rho[j * s.grid.nx + i] * (s.grid.xi_at(i) - cx).powi(2);
            }
        }
        v * s.grid.area() / s.norm()
    }

    #[test]
    fn potential_has_gap_eigenvalues() {
        let cfg = TdseConfig::default();
        for &(x, y) in &[(-1.0, 0.3), (0.0, 0.0), (0.4, -2.0), (3.0, 1.0)] {
            let v = potential_matrix(x, y, &cfg);
            let det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
            assert!((det.re + cfg.delta * cfg.delta).abs() < 1e-12 * cfg.delta * cfg.delta);
            assert!(det.im.abs() < 1e-9);
            assert!((v[0][1] - v[1][0].conj()).norm() < 1e-12);
        }
        let far_left = potential_matrix(-20.0, 0.7, &cfg);
        assert!((far_left[0][0].re - cfg.delta).abs() < 1e-9 && far_left[0][1].norm() < 1e-9);
        let far_right = potential_matrix(20.0, 0.7, &cfg);
        assert!((far_right[0][0].re + cfg.delta).abs() < 1e-9);
    }

    #[test]
    fn potential_step_is_identity_at_full_period() {
        let cfg = small(200.0, 6.0);
        let p = Propagator::new(&cfg, 2.0 * PI / cfg.delta).unwrap();
        let mut s = initial_field(&cfg);
        s.f = s.g.iter().map(|z| z * 0.5).collect();
        let before = s.clone();
        p.potential(&mut s);
        let err =
            s.f.iter()
                .zip(&before.f)
                .chain(s.g.iter().zip(&before.g))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn free_packet_spreads_analytically() {
        // centered so the Gaussian tail does not touch the periodic edge
        let cfg = TdseConfig {
            xi0: -2.0,
            ..small(0.0, 0.0)
        };
        let p = Propagator::new(&cfg, cfg.dt).unwrap();
        let mut s = initial_field(&cfg);
        let v0 = variance_xi(&s);
        assert!((v0 - cfg.sigma.powi(2)).abs() < 1e-10);
        p.steps(&mut s, 100);
        let t = s.tau;
        let want = cfg.sigma.powi(2) + (t / cfg.sigma).powi(2);
        assert!(
            (variance_xi(&s) - want).abs() < 1e-6,
            "{} vs {want}",
            variance_xi(&s)
        );
        let (x, y) = s.center().unwrap();
        assert!((x - (cfg.xi0 + 2.0 * cfg.k * t)).abs() < 1e-8);
        assert!(y.abs() < 1e-12);
    }

    #[test]
    fn fused_steps_match_single_steps() {
        let cfg = small(200.0, 6.0);
        let p = Propagator::new(&cfg, cfg.dt).unwrap();
        let mut a = initial_field(&cfg);
        for _ in 0..5 {
            a = step(&a, &cfg, cfg.dt).unwrap();
        }
        let mut b = initial_field(&cfg);
        p.steps(&mut b, 5);
        let err =
            a.g.iter()
                .zip(&b.g)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!((a.tau - b.tau).abs() < 1e-15);
    }

    #[test]
    fn norm_drift_per_step_is_round_off() {
        let cfg = small(200.0, 6.0);
        let p = Propagator::new(&cfg, cfg.dt).unwrap();
        let mut s = initial_field(&cfg);
        let mut prev = s.norm();
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            p.step(&mut s);
            let n = s.norm();
            worst = worst.max((n - prev).abs());
            prev = n;
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn zero_gap_gives_free_motion() {
        let cfg = TdseConfig {
            steps: 400,
            xi0: -2.0,
            ..small(0.0, 6.0)
        };
        let (traj, _) = propagate(&cfg).unwrap();
        for p in &traj.points {
            assert!((p.xi - (cfg.xi0 + 2.0 * cfg.k * p.tau)).abs() < 1e-8);
            assert!(p.eta.abs() < 1e-12);
            assert!(p.pop_f < 1e-20);
        }
    }

    #[test]
    fn packet_splits_when_both_channels_open() {
        // 2 Delta / k^2 = 1/3
        let cfg = TdseConfig {
            steps: 1200,
            stop_at_guard: true,
            ..small(24.0, 6.0)
        };
        let (traj, _) = propagate(&cfg).unwrap();
        let last = traj.points.last().unwrap();
        assert!(last.xi > 1.0);
        assert!(last.pop_f > 0.01 && last.pop_g > 0.01, "{last:?}");
    }

    #[test]
    fn adiabatic_rotation_preserves_density() {
        let cfg = TdseConfig {
            steps: 600,
            ..small(200.0, 6.0)
        };
        let (_, s) = propagate(&cfg).unwrap();
        let (ft, gt) = adiabatic_amplitudes(&s, &cfg);
        let g = s.grid;
        for idx in 0..g.nx * g.ny {
            let a = s.f[idx].norm_sqr() + s.g[idx].norm_sqr();
            let b = ft[idx].norm_sqr() + gt[idx].norm_sqr();
            assert!((a - b).abs() < 1e-14);
        }
        // far left, the rotation is the identity on g
        let i = 2;
        for j in 0..g.ny {
            let idx = j * g.nx + i;
            assert!((gt[idx] - s.g[idx]).norm() < 1e-10);
        }
        let rt: Vec<f64> = ft
            .iter()
            .zip(&gt)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        let (x0, y0) = s.center().unwrap();
        let (x1, y1) = center_of(&g, &rt).unwrap();
        assert!((x0 - x1).abs() < 1e-12 && (y0 - y1).abs() < 1e-12);
    }

    #[test]
    fn zero_flux_gives_no_deflection() {
        let cfg = TdseConfig {
            steps: 1500,
            output_every: 10,
            stop_at_guard: true,
            ..small(200.0, 0.0)
        };
        let (traj, _) = propagate(&cfg).unwrap();
        let d = deflection_from_trajectory(&traj, 2.0).unwrap();
        assert!(d.tan_theta.abs() <= d.residual.max(1e-12), "{d:?}");
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let cfg = TdseConfig {
            steps: 100,
            ..small(200.0, 6.0)
        };
        let (traj, _) = propagate(&cfg).unwrap();
        assert!(matches!(
            deflection_from_trajectory(&traj, 2.0),
            Err(GeomagError::InsufficientPropagation)
        ));
    }

    #[test]
    fn wrap_around_is_reported() {
        let cfg = TdseConfig {
            steps: 1500,
            ..small(200.0, 6.0)
        };
        assert!(matches!(
            propagate(&cfg),
            Err(GeomagError::WrapAround { .. })
        ));
    }

    #[test]
    fn classical_slab_deflection_matches_formula() {
        for phi in [6.0, 3.0, 1.0] {
            let cfg = TdseConfig {
                flux: FluxProfile::Constant(phi),
                ..Default::default()
            };
            let path = classical_trajectory(12.0, 0.0, &cfg, 8.0, 0.005).unwrap();
            let want = phi / (144.0 - phi * phi).sqrt();
            assert!((classical_deflection(&path) - want).abs() < 1e-6);
            for p in &path {
                assert!((p.p_xi.hypot(p.p_eta) - 12.0).abs() < 1e-10);
            }
        }
        let free = TdseConfig {
            flux: FluxProfile::Constant(0.0),
            ..Default::default()
        };
        let path = classical_trajectory(12.0, 0.3, &free, 5.0, 0.01).unwrap();
        assert!(path.iter().all(|p| (p.eta - 0.3).abs() < 1e-14));
    }

    #[test]
    fn lens_axis_ray_is_undeflected() {
        let cfg = TdseConfig {
            delta: 400.0,
            flux: FluxProfile::Lens {
                gamma: 1.0,
                focal: 3.0,
            },
            ..Default::default()
        };
        let path = classical_trajectory(12.0, 0.0, &cfg, 5.0, 0.01).unwrap();
        assert!(path.iter().all(|p| p.eta.abs() < 1e-14));
        assert!(matches!(
            lens_run(&[1.0], &cfg, 2.0),
            Err(GeomagError::Argument(_))
        ));
    }

    #[test]
    fn focal_point_of_exact_lines() {
        let lines: Vec<(f64, f64)> = [0.5, 1.0, 1.5].iter().map(|&b| (b, -b / 3.0)).collect();
        assert!((focal_point(&lines).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn lens_induction_is_the_derivative_of_the_phase() {
        let cfg = TdseConfig {
            flux: FluxProfile::Lens {
                gamma: 1.0,
                focal: 3.0,
            },
            ..Default::default()
        };
        let (x, y, h) = (0.2, 1.3, 1e-5);
        let s2 = |x: f64| cfg.omega(x).sin().powi(2);
        let num =
            (s2(x + h) - s2(x - h)) / (2.0 * h) * (cfg.phase(y + h) - cfg.phase(y - h)) / (2.0 * h);
        assert!((num - cfg.induction(x, y)).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prop_potential_traceless_with_gap(x in -5.0f64..5.0, y in -6.0f64..6.0, d in 1.0f64..500.0) {
            let cfg = TdseConfig { delta: d, ..Default::default() };
            let v = potential_matrix(x, y, &cfg);
            prop_assert!((v[0][0] + v[1][1]).norm() < 1e-12 * d);
            let n2 = v[0][0].norm_sqr() + v[0][1].norm_sqr();
            prop_assert!((n2 - d * d).abs() < 1e-12 * d * d);
        }
    }
}
