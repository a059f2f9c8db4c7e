//! One function per subcommand. Each reads its keys, writes its CSV files
//! into the output directory and returns the run summary.

use std::f64::consts::PI;
use std::path::Path;

use geomag::acceptance;
use geomag::ferroslab::{slab_analytic, slab_currents, slab_ode, FerroConfig};
use geomag::gauge_core::{wilson_line, ParamPath};
use geomag::internal_gauge::{
    ab_bo, ab_gauge_connection, ab_scalar_from_offdiagonal, ab_wilson_deviation,
    dipolar_hamiltonian, factorization_defect, AbConfig, DipolarConfig, FieldProfile,
};
use geomag::linalg::{hermitian_eigenvalues, identity, max_abs};
use geomag::model1d::{
    bo_reflection_closed_form, closed_form_unitary, coupled_reflection, effective_length,
    Model1DConfig,
};
use geomag::slab2d::{
    self, bo_scatter_normal, coupled_scatter, coupled_solve, current_field as slab_current_field,
    flux_functional, transmission_coefficient, transmission_scan, SlabConfig,
};
use geomag::tdse::{
    adiabatic_amplitudes, classical_deflection, classical_trajectory, deflection_from_trajectory,
    initial_field, lens_run, propagate, FluxProfile, Grid2D, Propagator, TdseConfig, Trajectory,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, InModule};
use crate::output::{RunSummary, Table};

pub struct Ctx<'a> {
    pub out: &'a Path,
}

fn linspace(a: f64, b: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if n < 2 || !(b > a) {
        return Err(CliError::Config(format!(
            "need points >= 2 and max > min (got {n}, [{a}, {b}])"
        )));
    }
    Ok((0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect())
}

fn write(ctx: &Ctx, s: &mut RunSummary, t: &Table, module: &'static str) -> Result<(), CliError> {
    let p = t.write(ctx.out, module)?;
    s.int(
        &format!("rows.{}", p.file_name().unwrap().to_string_lossy()),
        t.len(),
    );
    Ok(())
}

fn slab_config(c: &mut ExperimentConfig, need_delta: bool) -> Result<SlabConfig, CliError> {
    let beta = c.f64("beta")?;
    let phi = c.f64("phi")?;
    let delta = if need_delta { c.f64("delta")? } else { 1.0 };
    let cfg = SlabConfig {
        m: c.f64_or("m", 0.5)?,
        ..SlabConfig::with_flux(beta, phi, delta)
    };
    cfg.validate().in_module("slab2d")?;
    Ok(cfg)
}

pub fn potentials(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let cfg = slab_config(c, false)?;
    let x_max = c.f64_or("x_max", cfg.cutoff())?;
    let xs = linspace(-x_max, x_max, c.usize_or("points", 401)?)?;
    // ferromagnetic slab of the same flux, for comparison
    let fl = c.f64_or("ferro_l", 2.0)?;
    c.finish()?;
    if !(fl > 0.0) {
        return Err(CliError::Config(format!(
            "ferro_l must be positive, got {fl}"
        )));
    }
    let phi = cfg.phi();
    let ferro = |x: f64| phi * ((x / fl + 0.5).clamp(0.0, 1.0));
    let mut t = Table::new(
        "potentials.csv",
        &[
            "x",
            "omega",
            "a_open",
            "scalar",
            "effective",
            "induction",
            "ferro_effective",
        ],
    );
    for x in xs {
        t.push(vec![
            x,
            slab2d::omega_profile(x, &cfg),
            slab2d::open_channel_potential(x, &cfg),
            slab2d::scalar_potential(x, &cfg),
            slab2d::effective_potential(x, &cfg),
            slab2d::induction(x, &cfg),
            ferro(x).powi(2),
        ]);
    }
    write(ctx, s, &t, "slab2d")?;
    let f = slab2d::flux(&cfg);
    s.num("flux", f.value);
    s.num("flux_error", f.error_estimate);
    Ok(())
}

pub fn scatter1d(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let cfg = Model1DConfig {
        a1: c.f64("a1")?,
        l: c.f64("l")?,
        delta: c.f64("delta")?,
        a0: c.f64_or("a0", 0.0)?,
        m: c.f64_or("m", 0.5)?,
    };
    let ks = linspace(
        c.f64_or("k_min", 0.01)?,
        c.f64_or("k_max", 1.0)?,
        c.usize_or("points", 100)?,
    )?;
    c.finish()?;
    cfg.validate().in_module("model1d")?;
    let rows: Vec<Vec<f64>> = ks
        .par_iter()
        .map(|&k| {
            let r = coupled_reflection(k, &cfg)?;
            let bo = bo_reflection_closed_form(k, &cfg)?;
            Ok(vec![
                k,
                r.r.re,
                r.r.im,
                r.r.norm(),
                r.s_co.norm(),
                bo.re,
                bo.im,
                r.cond,
            ])
        })
        .collect::<geomag::Result<_>>()
        .in_module("model1d")?;
    let mut t = Table::new(
        "reflection.csv",
        &[
            "k",
            "re_r",
            "im_r",
            "abs_r",
            "abs_closed",
            "re_r_bo",
            "im_r_bo",
            "condition",
        ],
    );
    rows.into_iter().for_each(|r| t.push(r));
    write(ctx, s, &t, "model1d")?;
    if cfg.delta > 0.0 {
        let e = effective_length(&cfg).in_module("model1d")?;
        s.num("effective_length_closed_form", e.closed_form);
        s.num("effective_length_fitted", e.fitted);
    }
    Ok(())
}

pub fn slab(
    c: &mut ExperimentConfig,
    ctx: &Ctx,
    s: &mut RunSummary,
    mode: &str,
) -> Result<(), CliError> {
    s.text("mode", mode);
    match mode {
        "bo" => {
            let cfg = slab_config(c, false)?;
            let phi = cfg.phi();
            let ks = linspace(
                c.f64_or("k_min", 0.05 * phi)?,
                c.f64_or("k_max", 3.0 * phi)?,
                c.usize_or("points", 100)?,
            )?;
            c.finish()?;
            let rows: Vec<Vec<f64>> = ks
                .par_iter()
                .map(|&k| {
                    let a = bo_scatter_normal(k, &cfg)?;
                    let open = a.k_prime.is_some();
                    let tr = if open { a.transmission()? } else { 0.0 };
                    Ok(vec![
                        k,
                        a.r.re,
                        a.r.im,
                        a.t.re,
                        a.t.im,
                        tr,
                        open as u8 as f64,
                    ])
                })
                .collect::<geomag::Result<_>>()
                .in_module("slab2d")?;
            let mut t = Table::new(
                "bo.csv",
                &["k", "re_r", "im_r", "re_t", "im_t", "transmission", "open"],
            );
            rows.into_iter().for_each(|r| t.push(r));
            write(ctx, s, &t, "slab2d")
        }
        "coupled" => {
            let cfg = slab_config(c, true)?;
            let es = linspace(c.f64("e_min")?, c.f64("e_max")?, c.usize_or("points", 100)?)?;
            c.finish()?;
            let rows: Vec<Vec<f64>> = es
                .par_iter()
                .map(|&e| {
                    let a = coupled_scatter(e, &cfg)?;
                    let tr = transmission_coefficient(&a, &cfg).unwrap_or(0.0);
                    Ok(vec![
                        e,
                        a.k,
                        a.r11.norm(),
                        a.r12.norm(),
                        a.t11.norm(),
                        a.t12.norm(),
                        tr,
                    ])
                })
                .collect::<geomag::Result<_>>()
                .in_module("slab2d")?;
            let mut t = Table::new(
                "coupled.csv",
                &[
                    "energy",
                    "k",
                    "abs_r11",
                    "abs_r12",
                    "abs_t11",
                    "abs_t12",
                    "transmission",
                ],
            );
            rows.into_iter().for_each(|r| t.push(r));
            write(ctx, s, &t, "slab2d")
        }
        "scan" => {
            let cfg = slab_config(c, false)?;
            let phi = cfg.phi();
            let ks = linspace(
                c.f64_or("k_min", 1.01 * phi)?,
                c.f64_or("k_max", 3.0 * phi)?,
                c.usize_or("points", 100)?,
            )?;
            c.finish()?;
            let pts = transmission_scan(&ks, &cfg).in_module("slab2d")?;
            let mut t = Table::new("transmission.csv", &["k", "t_bo", "t_coupled"]);
            let mut worst: f64 = 0.0;
            for p in pts {
                worst = worst.max((p.t_bo - p.t_coupled).abs());
                t.push(vec![p.k, p.t_bo, p.t_coupled]);
            }
            s.num("max_abs_difference", worst);
            write(ctx, s, &t, "slab2d")
        }
        other => Err(CliError::Config(format!(
            "unknown slab mode `{other}` (bo, coupled, scan)"
        ))),
    }
}

pub fn flux(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let cfg = slab_config(c, true)?;
    let e = c.f64("energy")?;
    let w = c.f64_or("w", 1.0)?;
    let tol = c.f64_or("tolerance", 1e-8)?;
    c.finish()?;
    let sol = coupled_solve(e, &cfg).in_module("slab2d")?;
    let f = flux_functional(&sol, w).in_module("slab2d")?;
    let defect = ((f.adiabatic_current + f.gauge_part) / f.diabatic - 1.0).abs();
    let mut t = Table::new(
        "flux.csv",
        &[
            "w",
            "diabatic",
            "adiabatic_current",
            "gauge_part",
            "closed_t12_r12",
            "closed_t11_r12",
            "closed_t12_t11",
            "relative_defect",
        ],
    );
    t.push(vec![
        w,
        f.diabatic,
        f.adiabatic_current,
        f.gauge_part,
        f.closed_form[0],
        f.closed_form[1],
        f.closed_form[2],
        defect,
    ]);
    write(ctx, s, &t, "slab2d")?;
    s.text("regime", &format!("{:?}", sol.amplitudes.regime));
    s.num("diabatic", f.diabatic);
    s.num("adiabatic_current", f.adiabatic_current);
    s.num("gauge_part", f.gauge_part);
    s.num("relative_defect", defect);
    s.pass("gauge_invariance", defect <= tol);
    Ok(())
}

pub fn current_field(
    c: &mut ExperimentConfig,
    ctx: &Ctx,
    s: &mut RunSummary,
) -> Result<(), CliError> {
    let cfg = slab_config(c, true)?;
    let e = c.f64("energy")?;
    let x_max = c.f64_or("x_max", cfg.cutoff())?;
    let xs = linspace(-x_max, x_max, c.usize_or("nx", 81)?)?;
    let y_max = c.f64_or("y_max", 1.0)?;
    let ys = linspace(-y_max, y_max, c.usize_or("ny", 5)?)?;
    c.finish()?;
    let sol = coupled_solve(e, &cfg).in_module("slab2d")?;
    let field = slab_current_field(&sol, &xs, &ys).in_module("slab2d")?;
    let mut t = Table::new("current_field.csv", &["x", "y", "jx", "jy"]);
    field
        .iter()
        .for_each(|p| t.push(vec![p.x, p.y, p.jx, p.jy]));
    write(ctx, s, &t, "slab2d")?;
    let (jx, jy) = sol.current(sol.cutoff()).in_module("slab2d")?;
    s.num("transmitted_jx", jx);
    s.num("transmitted_jy", jy);
    Ok(())
}

/// Propagation keys shared by `tdse` and `lens`.
fn tdse_common(c: &mut ExperimentConfig, mut cfg: TdseConfig) -> Result<TdseConfig, CliError> {
    let n = c.usize_or("grid", 256)?;
    let half = c.f64_or("extent", 2.0 * PI)?;
    cfg.grid = Grid2D {
        nx: n,
        ny: n,
        xi: (-half, half),
        eta: (-half, half),
    };
    cfg.beta = c.f64_or("beta", cfg.beta)?;
    cfg.sigma = c.f64_or("sigma", cfg.sigma)?;
    cfg.xi0 = c.f64_or("xi0", cfg.xi0)?;
    cfg.dt = c.f64_or("dt", cfg.dt)?;
    cfg.steps = c.usize_or("steps", 1600)?;
    cfg.output_every = c.usize_or("output_every", 10)?;
    cfg.guard = c.f64_or("guard", cfg.guard)?;
    cfg.guard_tol = c.f64_or("guard_tol", cfg.guard_tol)?;
    cfg.stop_at_guard = c.bool_or("stop_at_guard", true)?;
    Ok(cfg)
}

fn trajectory_table(name: &str, traj: &Trajectory) -> Table {
    let mut t = Table::new(
        name,
        &["tau", "xi_mean", "eta_mean", "pop_f", "pop_g", "norm"],
    );
    for p in &traj.points {
        t.push(vec![p.tau, p.xi, p.eta, p.pop_f, p.pop_g, p.norm]);
    }
    t
}

pub fn tdse(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let base = TdseConfig {
        k: c.f64("k")?,
        delta: c.f64("delta")?,
        flux: FluxProfile::Constant(c.f64("phi")?),
        eta0: c.f64_or("eta0", 0.0)?,
        ..Default::default()
    };
    let cfg = tdse_common(c, base)?;
    let fit_from = c.f64_or("fit_from", acceptance::free_flight_start(cfg.beta))?;
    let snaps = c.list_or("snapshot_times", &[])?;
    let stride = c.usize_or("snapshot_stride", 2)?.max(1);
    c.finish()?;
    cfg.validate().in_module("tdse")?;
    let (traj, _) = propagate(&cfg).in_module("tdse")?;
    write(ctx, s, &trajectory_table("trajectory.csv", &traj), "tdse")?;
    snapshots(&cfg, &snaps, stride, ctx, s)?;
    s.num("max_norm_drift", traj.max_norm_drift());
    s.num("truncated_at", traj.truncated_at.unwrap_or(f64::NAN));
    let fit = deflection_from_trajectory(&traj, fit_from).in_module("tdse")?;
    s.num("tan_theta", fit.tan_theta);
    s.num("fit_intercept", fit.intercept);
    s.num("fit_residual", fit.residual);
    s.int("fit_points", fit.points);
    let cl = classical_trajectory(cfg.k, cfg.eta0, &cfg, 2.0 * cfg.xi0.abs(), 0.005)
        .in_module("tdse")?;
    s.num("classical_tan_theta", classical_deflection(&cl));
    Ok(())
}

/// Densities in both gauges at the requested times, one file per time.
fn snapshots(
    cfg: &TdseConfig,
    times: &[f64],
    stride: usize,
    ctx: &Ctx,
    s: &mut RunSummary,
) -> Result<(), CliError> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.first().is_some_and(|&t| t < 0.0) {
        return Err(CliError::Config("snapshot_times must be >= 0".into()));
    }
    let p = Propagator::new(cfg, cfg.dt).in_module("tdse")?;
    let mut field = initial_field(cfg);
    let mut done = 0usize;
    for (n, &tau) in sorted.iter().enumerate() {
        let target = (tau / cfg.dt).round() as usize;
        p.steps(&mut field, target - done);
        done = target;
        let (fa, ga) = adiabatic_amplitudes(&field, cfg);
        let g = field.grid;
        let mut t = Table::new(
            &format!("snapshot_{n}.csv"),
            &[
                "xi",
                "eta",
                "rho_f",
                "rho_g",
                "rho_f_adiabatic",
                "rho_g_adiabatic",
            ],
        );
        for i in (0..g.nx).step_by(stride) {
            for j in (0..g.ny).step_by(stride) {
                let k = j * g.nx + i;
                t.push(vec![
                    g.xi_at(i),
                    g.eta_at(j),
                    field.f[k].norm_sqr(),
                    field.g[k].norm_sqr(),
                    fa[k].norm_sqr(),
                    ga[k].norm_sqr(),
                ]);
            }
        }
        write(ctx, s, &t, "tdse")?;
        s.num(&format!("snapshot_{n}.tau"), field.tau);
    }
    Ok(())
}

pub fn lens(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let base = TdseConfig {
        k: c.f64("k")?,
        delta: c.f64("delta")?,
        flux: FluxProfile::Lens {
            gamma: c.f64("gamma")?,
            focal: c.f64("focal")?,
        },
        ..Default::default()
    };
    let cfg = tdse_common(c, base)?;
    let impact = c.list_or("impact", &[0.5, 1.0, 1.5])?;
    let fit_from = c.f64_or("fit_from", acceptance::free_flight_start(cfg.beta))?;
    c.finish()?;
    cfg.validate().in_module("tdse")?;
    let run = lens_run(&impact, &cfg, fit_from).in_module("tdse")?;
    let mut t = Table::new(
        "lens_trajectories.csv",
        &["impact", "tau", "xi_mean", "eta_mean", "norm"],
    );
    for (b, tr) in run.impact.iter().zip(&run.trajectories) {
        tr.points
            .iter()
            .for_each(|p| t.push(vec![*b, p.tau, p.xi, p.eta, p.norm]));
    }
    write(ctx, s, &t, "tdse")?;
    let mut t = Table::new("lens_classical.csv", &["impact", "t", "xi", "eta"]);
    for (b, path) in run.impact.iter().zip(&run.classical_paths) {
        path.iter().for_each(|p| t.push(vec![*b, p.t, p.xi, p.eta]));
    }
    write(ctx, s, &t, "tdse")?;
    let mut t = Table::new("lens_lines.csv", &["impact", "intercept", "slope"]);
    for (b, (i, m)) in run.impact.iter().zip(&run.lines) {
        t.push(vec![*b, *i, *m]);
    }
    write(ctx, s, &t, "tdse")?;
    s.num("focal", run.focal);
    s.num("classical_focal", run.classical_focal);
    Ok(())
}

pub fn ferroslab(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let cfg = FerroConfig {
        b0: c.f64("b0")?,
        l: c.f64("l")?,
        m: c.f64_or("m", 0.5)?,
    };
    cfg.validate().in_module("ferroslab")?;
    let phi = cfg.phi();
    let ks = linspace(
        c.f64_or("k_min", 0.05 * phi.abs().max(1.0))?,
        c.f64_or("k_max", 3.0 * phi.abs().max(1.0))?,
        c.usize_or("points", 100)?,
    )?;
    let check = c.bool_or("check_ode", true)?;
    let tol = c.f64_or("tolerance", 1e-8)?;
    c.finish()?;
    let rows: Vec<Vec<f64>> = ks
        .par_iter()
        .map(|&k| {
            let a = slab_analytic(k, &cfg)?;
            let (tr, tan) = match slab_currents(&a, &cfg) {
                Ok(j) => (j.jx / j.j_in, j.tan_theta),
                Err(_) => (0.0, 0.0),
            };
            let dev = if check {
                let (r, t) = slab_ode(k, &cfg)?;
                (a.r - r).norm().max((a.t - t).norm())
            } else {
                0.0
            };
            Ok(vec![
                k,
                a.r.re,
                a.r.im,
                a.t.re,
                a.t.im,
                a.r.norm(),
                tr,
                tan,
                dev,
            ])
        })
        .collect::<geomag::Result<_>>()
        .in_module("ferroslab")?;
    let worst = rows.iter().map(|r| r[8]).fold(0.0, f64::max);
    let mut t = Table::new(
        "ferroslab.csv",
        &[
            "k",
            "re_r",
            "im_r",
            "re_t",
            "im_t",
            "abs_r",
            "transmission",
            "tan_theta",
            "ode_deviation",
        ],
    );
    rows.into_iter().for_each(|r| t.push(r));
    write(ctx, s, &t, "ferroslab")?;
    s.num("flux", phi);
    if check {
        s.num("max_ode_deviation", worst);
        s.pass("analytic_vs_ode", worst <= tol);
    }
    Ok(())
}

fn ab_config(c: &mut ExperimentConfig) -> Result<AbConfig, CliError> {
    let d = AbConfig::default();
    let profile = match c.str_or("profile", "constant").as_str() {
        "constant" => FieldProfile::Constant,
        "inverse_radius" => FieldProfile::InverseRadius,
        p => {
            return Err(CliError::Config(format!(
                "unknown profile `{p}` (constant, inverse_radius)"
            )))
        }
    };
    let cfg = AbConfig {
        delta: c.f64_or("delta", d.delta)?,
        r0: c.f64_or("r0", d.r0)?,
        omega: c.f64_or("omega", d.omega)?,
        rho_min: c.f64_or("rho_min", d.rho_min)?,
        m: c.f64_or("m", d.m)?,
        profile,
    };
    cfg.validate().in_module("internal_gauge")?;
    Ok(cfg)
}

pub fn holonomy(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let system = c.str("system")?;
    let steps: Vec<usize> = c
        .list_or("steps", &[625.0, 1250.0, 2500.0, 5000.0, 10_000.0])?
        .into_iter()
        .map(|x| {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(CliError::Config(format!(
                    "steps must be positive integers, got {x}"
                )))
            }
        })
        .collect::<Result<_, _>>()?;
    let tol = c.f64_or("tolerance", 1e-7)?;
    s.text("system", &system);
    let mut t;
    match system.as_str() {
        "ab" => {
            let cfg = ab_config(c)?;
            let t_arc = c.f64_or("t_arc", 2.0)?;
            c.finish()?;
            let conn = ab_gauge_connection(&cfg);
            let rows: Vec<Vec<f64>> = steps
                .par_iter()
                .map(|&n| {
                    let w = wilson_line(&conn, &ParamPath::arc(cfg.r0, 0.0, 2.0 * PI), n)?;
                    let arc = ab_wilson_deviation(t_arc, &cfg, n)?;
                    Ok(vec![
                        n as f64,
                        max_abs(&(w.unitary - identity(2))),
                        arc,
                        w.unitarity_defect,
                    ])
                })
                .collect::<geomag::Result<_>>()
                .in_module("gauge_core")?;
            t = Table::new(
                "holonomy.csv",
                &[
                    "steps",
                    "loop_deviation",
                    "arc_deviation",
                    "unitarity_defect",
                ],
            );
            rows.into_iter().for_each(|r| t.push(r));
        }
        "model1d" => {
            let cfg = Model1DConfig {
                a0: c.f64_or("a0", 0.0)?,
                a1: c.f64_or("a1", 1.0)?,
                ..Default::default()
            };
            let x = c.f64_or("x", 3.0)?;
            c.finish()?;
            cfg.validate().in_module("model1d")?;
            let want = closed_form_unitary(x, &cfg).adjoint();
            let path = ParamPath::segment(vec![0.0], vec![x]);
            t = Table::new(
                "holonomy.csv",
                &["steps", "closed_form_deviation", "unitarity_defect"],
            );
            for &n in &steps {
                let w = wilson_line(&cfg.connection(), &path, n).in_module("gauge_core")?;
                t.push(vec![
                    n as f64,
                    max_abs(&(w.unitary - &want)),
                    w.unitarity_defect,
                ]);
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown system `{other}` (ab, model1d)"
            )))
        }
    }
    write(ctx, s, &t, "gauge_core")?;
    holonomy_summary(&t, s, tol);
    Ok(())
}

fn holonomy_summary(t: &Table, s: &mut RunSummary, tol: f64) {
    let last = t.rows().last().expect("at least one step count");
    s.num("final_deviation", last[1]);
    if t.len() >= 2 {
        let prev = &t.rows()[t.len() - 2];
        // below roundoff the ratio says nothing about the order
        if last[1] > 1e-13 && prev[1] > 1e-13 {
            s.num(
                "order_estimate",
                (prev[1] / last[1]).ln() / (last[0] / prev[0]).ln(),
            );
        }
    }
    s.pass("final_deviation", last[1] <= tol);
}

pub fn internal(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let base = DipolarConfig::constant(
        c.f64("triplet")?,
        c.f64("singlet")?,
        c.f64("alpha")?,
        c.f64("r")?,
        0.0,
        0.0,
    );
    let n_theta = c.usize_or("n_theta", 7)?;
    let n_phi = c.usize_or("n_phi", 8)?;
    let ab = ab_config(c)?;
    let rhos = linspace(
        c.f64_or("rho_lo", 0.1)?,
        c.f64_or("rho_hi", 3.0)?,
        c.usize_or("rho_points", 30)?,
    )?;
    let tol = c.f64_or("tolerance", 1e-10)?;
    c.finish()?;
    if n_theta < 1 || n_phi < 1 {
        return Err(CliError::Config("n_theta and n_phi must be >= 1".into()));
    }
    let mut want = base.bo_energies().to_vec();
    want.sort_by(f64::total_cmp);
    // interior polar angles only; the poles are coordinate singularities
    let mut grid = Vec::new();
    for i in 0..n_theta {
        for j in 0..n_phi {
            grid.push((
                PI * (i as f64 + 0.5) / n_theta as f64,
                2.0 * PI * j as f64 / n_phi as f64,
            ));
        }
    }
    let rows: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&(th, ph)| {
            let cfg = base.with_orientation(th, ph);
            let ev = hermitian_eigenvalues(&dipolar_hamiltonian(&cfg)?);
            let dev = ev
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let fac = factorization_defect(&cfg)?;
            Ok(vec![th, ph, ev[0], ev[1], ev[2], ev[3], dev, fac])
        })
        .collect::<geomag::Result<_>>()
        .in_module("internal_gauge")?;
    let ev_dev = rows.iter().map(|r| r[6]).fold(0.0, f64::max);
    let fac = rows.iter().map(|r| r[7]).fold(0.0, f64::max);
    let mut t = Table::new(
        "dipolar.csv",
        &[
            "theta",
            "phi",
            "e0",
            "e1",
            "e2",
            "e3",
            "eigenvalue_deviation",
            "factorization_defect",
        ],
    );
    rows.into_iter().for_each(|r| t.push(r));
    write(ctx, s, &t, "internal_gauge")?;
    let mut t = Table::new(
        "ab.csv",
        &[
            "rho",
            "a_phi",
            "v",
            "scalar_gauge",
            "scalar_from_offdiagonal",
        ],
    );
    let mut scalar_dev: f64 = 0.0;
    for rho in rhos {
        let b = ab_bo(rho, &ab).in_module("internal_gauge")?;
        let off = ab_scalar_from_offdiagonal(rho, 0.7, &ab).in_module("internal_gauge")?;
        scalar_dev = scalar_dev.max((off - b.scalar_gauge).abs());
        t.push(vec![rho, b.a_phi, b.v, b.scalar_gauge, off]);
    }
    write(ctx, s, &t, "internal_gauge")?;
    s.num("max_eigenvalue_deviation", ev_dev);
    s.num("max_factorization_defect", fac);
    s.num("max_scalar_deviation", scalar_dev);
    s.pass("eigenvalues", ev_dev <= tol);
    s.pass("factorization", fac <= tol);
    s.pass("scalar_gauge", scalar_dev <= tol);
    Ok(())
}

pub fn accept(c: &mut ExperimentConfig, ctx: &Ctx, s: &mut RunSummary) -> Result<(), CliError> {
    let only = c.list_or("only", &[])?;
    c.finish()?;
    let ids: Vec<u32> = if only.is_empty() {
        (1..=acceptance::COUNT).collect()
    } else {
        only.iter()
            .map(|&x| {
                let id = x as u32;
                if x.fract() == 0.0 && (1..=acceptance::COUNT).contains(&id) {
                    Ok(id)
                } else {
                    Err(CliError::Config(format!("no acceptance criterion {x}")))
                }
            })
            .collect::<Result<_, _>>()?
    };
    let mut t = Table::new("acceptance.csv", &["criterion", "passed", "seconds"]);
    for id in ids {
        let r = acceptance::criterion(id).expect("checked above");
        println!("{}", r.line());
        t.push(vec![id as f64, r.passed as u8 as f64, r.seconds]);
        for (k, v) in &r.values {
            s.num(&format!("c{id}.{k}"), *v);
        }
        if !r.detail.is_empty() {
            s.text(&format!("c{id}.detail"), &r.detail);
        }
        s.pass(&format!("criterion_{id}"), r.passed);
    }
    write(ctx, s, &t, "acceptance")
}
