//! Time integration of both PDEs, conservation and tube monitors, and the
//! scripted stability / instability experiments.
//!
//! Both integrators are Strang splittings between an implicit
//! Crank-Nicolson step for the linear flow (unconditionally stable
//! tridiagonal solves) and an exact pointwise nonlinear substep:
//!
//! * Klein-Gordon pairs (u, v): half kick v += (τ/2)f(u), full linear
//!   Crank-Nicolson step of u_t = v, v_t = (Δ-1)u, half kick.
//! * Schrödinger field: half phase rotation u ↦ e^{-i f(|u|)τ/2} u, full
//!   Cayley step of u_t = -iΔu, half rotation. The Cayley step is unitary
//!   in the weighted L² metric, so the charge is conserved to round-off.

use crate::error::{Error, Result};
use crate::functionals::{evaluate_charge, evaluate_energy};
use crate::grid::RadialGrid;
use crate::modulation::{modulation_with_functionals, orbital_distance};
use crate::profile::ProfileSolver;
use crate::state::{Fields, State, C64};
use crate::tridiag::thomas_complex;
use serde::Serialize;

/// Field sup-norm beyond which the run is declared blown up.
const BLOWUP_SUP: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct EvolveConfig {
    pub t_final: f64,
    pub dt: f64,
    /// Steps between log samples (and tube / modulation checks).
    pub output_every: usize,
    /// Mild damping outside 0.8·R absorbing outgoing radiation; keep off
    /// for conservation runs.
    pub sponge: bool,
    /// Stop integrating once the orbital distance crosses the tube radius.
    pub stop_on_exit: bool,
}

impl EvolveConfig {
    pub fn new(t_final: f64, dt: f64) -> Self {
        EvolveConfig { t_final, dt, output_every: 50, sponge: false, stop_on_exit: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.dt > 0.0 && self.dt <= self.t_final) {
            return Err(Error::invalid("need 0 < dt <= t_final"));
        }
        if self.output_every == 0 {
            return Err(Error::invalid("output_every must be positive"));
        }
        Ok(())
    }
}

/// Reference orbit for the distance / modulation monitors.
pub struct OrbitMonitor<'a> {
    pub solver: &'a ProfileSolver,
    pub omega0: f64,
    /// Exit threshold for the orbital distance in the X norm.
    pub tube_radius: f64,
    /// Also track (θ, Λ, α, ‖w‖, A, P) while inside the tube.
    pub track_modulation: bool,
}

/// ε_tube = 0.3·‖Φ_ω‖_X: far above perturbation scale, far below orbit
/// separation.
pub fn tube_radius(solver: &ProfileSolver, omega0: f64) -> Result<f64> {
    Ok(0.3 * solver.solve(omega0)?.state().norm_x())
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub charge: Vec<f64>,
    pub distance: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub norm_w: Vec<f64>,
    pub a_series: Vec<f64>,
    pub p_series: Vec<f64>,
    /// First logged time with distance > tube radius.
    pub exit_time: Option<f64>,
    pub blowup: bool,
    pub final_state: State,
}

impl TrajectoryLog {
    pub fn relative_e_drift(&self) -> f64 {
        relative_drift(&self.energy)
    }

    pub fn relative_q_drift(&self) -> f64 {
        relative_drift(&self.charge)
    }

    pub fn max_distance(&self) -> f64 {
        self.distance.iter().copied().fold(0.0, f64::max)
    }

    /// Modulation time series in CSV form.
    pub fn modulation_csv(&self) -> String {
        let mut out = String::from("t,theta,Lambda,alpha,norm_w,A,P,distance\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[k],
                self.theta[k],
                self.lambda[k],
                self.alpha[k],
                self.norm_w[k],
                self.a_series[k],
                self.p_series[k],
                self.distance[k],
            ));
        }
        out
    }

    pub fn conservation_csv(&self) -> String {
        let mut out = String::from("t,E,Q\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.6},{:.12e},{:.12e}\n",
                self.times[k], self.energy[k], self.charge[k]
            ));
        }
        out
    }
}

fn relative_drift(series: &[f64]) -> f64 {
    let first = series.first().copied().unwrap_or(0.0);
    let scale = first.abs().max(1e-12);
    series.iter().map(|v| (v - first).abs()).fold(0.0, f64::max) / scale
}

/// dA/dt = -P: max over interior log points of |ΔA/Δt + P| by centered
/// differences, restricted to samples inside the tube.
pub fn monitor_ap_identity(log: &TrajectoryLog) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 1..log.times.len().saturating_sub(1) {
        let vals = [
            log.a_series[k - 1],
            log.a_series[k + 1],
            log.p_series[k],
            log.distance[k + 1],
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let da = (log.a_series[k + 1] - log.a_series[k - 1])
            / (log.times[k + 1] - log.times[k - 1]);
        worst = worst.max((da + log.p_series[k]).abs());
    }
    worst
}

/// Damping rate profile of the sponge layer: zero inside 0.8·R, quadratic
/// ramp to `strength` at R.
fn sponge_rates(grid: &RadialGrid) -> Vec<f64> {
    let r0 = 0.8 * grid.r_max;
    let width = grid.r_max - r0;
    let strength = 2.0;
    grid.nodes()
        .map(|r| if r > r0 { strength * ((r - r0) / width).powi(2) } else { 0.0 })
        .collect()
}

/// The tridiagonal (sub, diag, sup) representation of the weighted
/// Laplacian of [`RadialGrid::laplacian`].
fn laplacian_tridiag(grid: &RadialGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let e = grid.edge_coeffs();
    let w = grid.weights();
    let mut sub = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut sup = vec![0.0; n + 1];
    diag[0] = -e[0] / w[0];
    sup[0] = e[0] / w[0];
    for i in 1..n {
        sub[i] = e[i - 1] / w[i];
        diag[i] = -(e[i - 1] + e[i]) / w[i];
        sup[i] = e[i] / w[i];
    }
    sub[n] = e[n - 1] / w[n];
    // Dirichlet ghost at R + h
    diag[n] = -2.0 * e[n - 1] / w[n];
    (sub, diag, sup)
}

fn apply_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], u: &[C64], out: &mut [C64]) {
    let n = u.len();
    for i in 0..n {
        let mut acc = diag[i] * u[i];
        if i > 0 {
            acc += sub[i] * u[i - 1];
        }
        if i + 1 < n {
            acc += sup[i] * u[i + 1];
        }
        out[i] = acc;
    }
}

/// One model-specific Strang step of size τ, in place.
enum Stepper {
    /// Klein-Gordon: the solve matrix I - (τ²/4)(Δ-1) and the apply
    /// matrix for the Laplacian itself.
    KleinGordon {
        lap: (Vec<f64>, Vec<f64>, Vec<f64>),
        solve_sub: Vec<C64>,
        solve_diag: Vec<C64>,
        solve_sup: Vec<C64>,
    },
    /// Schrödinger: Cayley matrices (I ± i(τ/2)Δ).
    Schroedinger {
        lap: (Vec<f64>, Vec<f64>, Vec<f64>),
        solve_sub: Vec<C64>,
        solve_diag: Vec<C64>,
        solve_sup: Vec<C64>,
    },
}

impl Stepper {
    fn new(s: &State, dt: f64) -> Stepper {
        let lap = laplacian_tridiag(&s.grid);
        let (sub, diag, sup) = (&lap.0, &lap.1, &lap.2);
        if s.model.is_nlkg() {
            // I - (τ²/4)(Δ - 1)
            let c = dt * dt / 4.0;
            let solve_sub: Vec<C64> = sub.iter().map(|&v| C64::new(-c * v, 0.0)).collect();
            let solve_diag: Vec<C64> =
                diag.iter().map(|&v| C64::new(1.0 + c - c * v, 0.0)).collect();
            let solve_sup: Vec<C64> = sup.iter().map(|&v| C64::new(-c * v, 0.0)).collect();
            Stepper::KleinGordon { lap, solve_sub, solve_diag, solve_sup }
        } else {
            // I + i(τ/2)Δ
            let c = 0.5 * dt;
            let solve_sub: Vec<C64> = sub.iter().map(|&v| C64::new(0.0, c * v)).collect();
            let solve_diag: Vec<C64> =
                diag.iter().map(|&v| C64::new(1.0, c * v)).collect();
            let solve_sup: Vec<C64> = sup.iter().map(|&v| C64::new(0.0, c * v)).collect();
            Stepper::Schroedinger { lap, solve_sub, solve_diag, solve_sup }
        }
    }

    fn step(&self, s: &mut State, dt: f64) -> Result<()> {
        match (&mut s.fields, self) {
            (
                Fields::Pair { u, v },
                Stepper::KleinGordon { lap, solve_sub, solve_diag, solve_sup },
            ) => {
                let model = s.model;
                let half_kick = |u: &[C64], v: &mut [C64], tau: f64| {
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi += tau * model.rotation_rate(ui.norm()) * ui;
                    }
                };
                half_kick(u, v, 0.5 * dt);
                // Crank-Nicolson for u_t = v, v_t = A u with A = Δ - 1:
                //   (I - (τ²/4)A) u⁺ = (I + (τ²/4)A) u + τ v
                //   v⁺ = v + (τ/2) A (u + u⁺)
                let n = u.len();
                let mut au = vec![C64::new(0.0, 0.0); n];
                apply_tridiag(&lap.0, &lap.1, &lap.2, u, &mut au);
                for (a, x) in au.iter_mut().zip(u.iter()) {
                    *a -= x; // A = Δ - 1
                }
                let c = dt * dt / 4.0;
                let mut rhs: Vec<C64> = (0..n).map(|i| u[i] + c * au[i] + dt * v[i]).collect();
                thomas_complex(&solve_sub[1..], solve_diag, &solve_sup[..n - 1], &mut rhs)?;
                let u_new = rhs;
                let mut au_new = vec![C64::new(0.0, 0.0); n];
                apply_tridiag(&lap.0, &lap.1, &lap.2, &u_new, &mut au_new);
                for (a, x) in au_new.iter_mut().zip(u_new.iter()) {
                    *a -= x;
                }
                for i in 0..n {
                    v[i] += 0.5 * dt * (au[i] + au_new[i]);
                }
                u.copy_from_slice(&u_new);
                half_kick(u, v, 0.5 * dt);
                Ok(())
            }
            (
                Fields::Single(u),
                Stepper::Schroedinger { lap, solve_sub, solve_diag, solve_sup },
            ) => {
                let model = s.model;
                let half_rotate = |u: &mut [C64], tau: f64| {
                    for z in u.iter_mut() {
                        let f = model.rotation_rate(z.norm());
                        *z *= C64::from_polar(1.0, -f * tau);
                    }
                };
                half_rotate(u, 0.5 * dt);
                // Cayley: (I + i(τ/2)Δ) u⁺ = (I - i(τ/2)Δ) u
                let n = u.len();
                let mut lu = vec![C64::new(0.0, 0.0); n];
                apply_tridiag(&lap.0, &lap.1, &lap.2, u, &mut lu);
                let i_c = C64::new(0.0, 0.5 * dt);
                let mut rhs: Vec<C64> = (0..n).map(|k| u[k] - i_c * lu[k]).collect();
                thomas_complex(&solve_sub[1..], solve_diag, &solve_sup[..n - 1], &mut rhs)?;
                u.copy_from_slice(&rhs);
                half_rotate(u, 0.5 * dt);
                Ok(())
            }
            _ => Err(Error::invalid("state layout does not match the model")),
        }
    }
}

fn sup_norm(s: &State) -> f64 {
    s.components()
        .iter()
        .flat_map(|c| c.iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Integrate either model to `t_final`, logging conserved quantities and,
/// when a monitor is supplied, the orbital distance and modulation series.
pub fn evolve(
    initial: &State,
    cfg: &EvolveConfig,
    monitor: Option<&OrbitMonitor>,
) -> Result<TrajectoryLog> {
    cfg.validate()?;
    initial.check_finite()?;
    let mut s = initial.clone();
    let stepper = Stepper::new(&s, cfg.dt);
    let sponge = if cfg.sponge { Some(sponge_rates(&s.grid)) } else { None };
    let steps = (cfg.t_final / cfg.dt).round() as usize;

    let reference = match monitor {
        Some(m) => Some(m.solver.solve(m.omega0)?.state()),
        None => None,
    };

    let mut log = TrajectoryLog {
        times: Vec::new(),
        energy: Vec::new(),
        charge: Vec::new(),
        distance: Vec::new(),
        theta: Vec::new(),
        lambda: Vec::new(),
        alpha: Vec::new(),
        norm_w: Vec::new(),
        a_series: Vec::new(),
        p_series: Vec::new(),
        exit_time: None,
        blowup: false,
        final_state: s.clone(),
    };
    let mut guess: Option<(f64, f64)> = None;
    let mut last_output_t = 0.0;

    let record = |log: &mut TrajectoryLog, s: &State, t: f64, guess: &mut Option<(f64, f64)>, last_t: &mut f64| -> Result<bool> {
        log.times.push(t);
        log.energy.push(evaluate_energy(s)?);
        log.charge.push(evaluate_charge(s)?);
        let mut exited = false;
        match (monitor, &reference) {
            (Some(m), Some(phi)) => {
                let dist = orbital_distance(s, phi);
                log.distance.push(dist);
                if dist > m.tube_radius && log.exit_time.is_none() {
                    log.exit_time = Some(t);
                    exited = true;
                }
                let mods = if m.track_modulation && log.exit_time.is_none() {
                    // predict θ from the bound-state rotation rate
                    let predicted = guess.map(|(th, la)| {
                        let omega_g = m.solver.model.group_sign() * m.omega0 + la;
                        (th - omega_g * (t - *last_t), la)
                    });
                    modulation_with_functionals(m.solver, s, m.omega0, predicted)
                        .or_else(|_| modulation_with_functionals(m.solver, s, m.omega0, None))
                        .ok()
                } else {
                    None
                };
                match mods {
                    Some((c, a, p)) => {
                        *guess = Some((c.theta, c.lambda));
                        log.theta.push(c.theta);
                        log.lambda.push(c.lambda);
                        log.alpha.push(c.alpha);
                        log.norm_w.push(c.w.norm_h_sqr().sqrt());
                        log.a_series.push(a);
                        log.p_series.push(p);
                    }
                    None => {
                        *guess = None;
                        for series in [
                            &mut log.theta,
                            &mut log.lambda,
                            &mut log.alpha,
                            &mut log.norm_w,
                            &mut log.a_series,
                            &mut log.p_series,
                        ] {
                            series.push(f64::NAN);
                        }
                    }
                }
            }
            _ => {
                log.distance.push(f64::NAN);
                for series in [
                    &mut log.theta,
                    &mut log.lambda,
                    &mut log.alpha,
                    &mut log.norm_w,
                    &mut log.a_series,
                    &mut log.p_series,
                ] {
                    series.push(f64::NAN);
                }
            }
        }
        *last_t = t;
        Ok(exited)
    };

    record(&mut log, &s, 0.0, &mut guess, &mut last_output_t)?;
    'time: for step in 1..=steps {
        stepper.step(&mut s, cfg.dt)?;
        if let Some(rates) = &sponge {
            for comp in match &mut s.fields {
                Fields::Single(u) => vec![u],
                Fields::Pair { u, v } => vec![u, v],
            } {
                for (z, &g) in comp.iter_mut().zip(rates) {
                    if g > 0.0 {
                        *z *= (-g * cfg.dt).exp();
                    }
                }
            }
        }
        if step % cfg.output_every == 0 || step == steps {
            let t = step as f64 * cfg.dt;
            if sup_norm(&s) > BLOWUP_SUP {
                log.blowup = true;
                break 'time;
            }
            let exited = record(&mut log, &s, t, &mut guess, &mut last_output_t)?;
            if exited && cfg.stop_on_exit {
                break 'time;
            }
        }
    }
    log.final_state = s;
    Ok(log)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRun {
    pub omega: f64,
    pub delta: f64,
    pub tube_radius: f64,
    pub max_distance: f64,
    pub exit_time: Option<f64>,
    pub consistent_with_stable: bool,
}

/// Evolve Φ_ω + δ·(fixed normalized even perturbation) for each δ and
/// record the largest orbital distance reached.
pub fn run_stability_experiment(
    solver: &ProfileSolver,
    omega: f64,
    deltas: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<Vec<StabilityRun>> {
    let phi = solver.solve(omega)?.state();
    let tube = tube_radius(solver, omega)?;
    let bump = even_perturbation(&phi);
    deltas
        .iter()
        .map(|&delta| {
            let initial = phi.axpy(delta, &bump);
            let mut cfg = EvolveConfig::new(t_final, dt);
            cfg.stop_on_exit = true;
            let monitor = OrbitMonitor {
                solver,
                omega0: omega,
                tube_radius: tube,
                track_modulation: false,
            };
            let log = evolve(&initial, &cfg, Some(&monitor))?;
            let max_distance = log.max_distance();
            Ok(StabilityRun {
                omega,
                delta,
                tube_radius: tube,
                max_distance,
                exit_time: log.exit_time,
                consistent_with_stable: log.exit_time.is_none() && !log.blowup,
            })
        })
        .collect()
}

/// A fixed smooth even perturbation with X norm 1, with both components
/// and both quadratures populated so no symmetry class is left untested.
pub fn even_perturbation(phi: &State) -> State {
    let grid = phi.grid.clone();
    let envelope = |x: f64| (-x * x / 8.0).exp();
    let field: Vec<C64> = grid.nodes().map(|x| C64::new(1.0, 0.5) * envelope(x)).collect();
    let raw = match &phi.fields {
        Fields::Single(_) => State::single(phi.model, grid, field),
        Fields::Pair { .. } => {
            let second: Vec<C64> =
                field.iter().map(|z| C64::new(0.3, -0.2) * z / C64::new(1.0, 0.5)).collect();
            State::pair(phi.model, grid, field, second)
        }
    };
    let norm = raw.norm_x();
    raw.scaled(C64::new(1.0 / norm, 0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct InstabilityRun {
    pub omega: f64,
    /// Signed group-frequency offset of the Ψ(λ) initial data.
    pub lambda: f64,
    pub tube_radius: f64,
    pub max_distance: f64,
    pub exit_time: Option<f64>,
    /// P kept one sign (within noise floor) until tube exit.
    pub p_sign_constant: bool,
    pub consistent_with_unstable: bool,
}

/// Evolve the unstable initial data Ψ(λ) for each λ and record the tube
/// exit time and the sign history of P.
pub fn run_instability_experiment(
    solver: &ProfileSolver,
    omega: f64,
    lambdas: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<Vec<InstabilityRun>> {
    let tube = tube_radius(solver, omega)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let initial = crate::dcurve::build_psi(solver, omega, lambda)?;
            let mut cfg = EvolveConfig::new(t_final, dt);
            cfg.stop_on_exit = true;
            cfg.sponge = true;
            let monitor =
                OrbitMonitor { solver, omega0: omega, tube_radius: tube, track_modulation: true };
            let log = evolve(&initial, &cfg, Some(&monitor))?;
            Ok(InstabilityRun {
                omega,
                lambda,
                tube_radius: tube,
                max_distance: log.max_distance(),
                exit_time: log.exit_time,
                p_sign_constant: p_sign_constant(&log),
                consistent_with_unstable: log.exit_time.is_some(),
            })
        })
        .collect()
}

/// Did P hold one sign over the logged samples? Samples below a noise
/// floor of 1e-3·max|P| are ignored.
pub fn p_sign_constant(log: &TrajectoryLog) -> bool {
    let max_p = log.p_series.iter().filter(|p| p.is_finite()).fold(0.0f64, |m, p| m.max(p.abs()));
    if max_p == 0.0 {
        return true;
    }
    let floor = 1e-3 * max_p;
    let mut sign = 0.0f64;
    for &p in &log.p_series {
        if !p.is_finite() || p.abs() < floor {
            continue;
        }
        if sign == 0.0 {
            sign = p.signum();
        } else if p.signum() != sign {
            return false;
        }
    }
    true
}
