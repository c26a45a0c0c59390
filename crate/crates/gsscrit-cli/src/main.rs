//! Command-line front end: profile / dcurve / spectrum / classify /
//! evolve / verify over the stability toolkit, with deterministic CSV and
//! JSON artifacts.

mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use gsscrit::dcurve::{
    build_d_curve, classify_stability, find_critical_frequency, probe_derivatives,
    verify_comparability, Rule, Verdict,
};
use gsscrit::dynamics::{
    evolve, even_perturbation, p_sign_constant, tube_radius, EvolveConfig, OrbitMonitor,
};
use gsscrit::functionals::evaluate_charge;
use gsscrit::profile::{validate_profile, DerivativeMethod};
use gsscrit::spectral::{check_spectral_assumptions, verify_sb_identity};
use gsscrit::{Error, Result};
use report::Emitter;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "gsscrit",
    about = "Orbital stability toolkit: bound states, the d(omega) curve, spectra, \
             modulation, and direct simulation",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the bound-state profile at a single frequency.
    Profile(Overrides),
    /// Sweep d(omega) and its derivatives, locating critical frequencies.
    Dcurve(Overrides),
    /// Spectral checks of the linearized operators at one frequency.
    Spectrum(Overrides),
    /// Stability classification at one frequency with the rule applied.
    Classify(Overrides),
    /// Time-evolve perturbed bound-state data and monitor the orbit.
    Evolve(Overrides),
    /// Run the fast invariant suite.
    Verify(Overrides),
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    grid_r: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    output_every: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sponge: Option<bool>,
    /// Output directory (GSSCRIT_OUT overrides this too).
    #[arg(long)]
    out: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_flat(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        take!(
            model, p, dim, a1, p1, a2, p2, omega, omega_min, omega_max, samples, grid_n,
            grid_r, tol, t_final, dt, output_every, delta, lambda, sponge
        );
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints its own message; usage problems are config errors
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(2),
            };
        }
    };
    match run(&cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cmd: &Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Profile(o) => cmd_profile(&o.resolve()?),
        Cmd::Dcurve(o) => cmd_dcurve(&o.resolve()?),
        Cmd::Spectrum(o) => cmd_spectrum(&o.resolve()?),
        Cmd::Classify(o) => cmd_classify(&o.resolve()?),
        Cmd::Evolve(o) => cmd_evolve(&o.resolve()?),
        Cmd::Verify(o) => cmd_verify(&o.resolve()?),
    }
}

#[derive(Serialize)]
struct ProfileResult {
    omega: f64,
    peak: f64,
    l2_norm_sqr: f64,
    residual: f64,
    checks: gsscrit::profile::ProfileReport,
    pass: bool,
}

fn cmd_profile(cfg: &RunConfig) -> Result<ExitCode> {
    let solver = cfg.solver(&[cfg.omega])?;
    let prof = solver.solve_with_derivative(cfg.omega)?;
    let checks = validate_profile(&prof, 100.0 * cfg.tol);
    let pass = checks.pass();
    let mut csv = String::from("r,phi,dphi_domega\n");
    let dphi = prof.dphi_domega.clone().unwrap_or_default();
    for (i, r) in prof.grid.nodes().enumerate() {
        csv.push_str(&format!("{:.9},{:.12e},{:.12e}\n", r, prof.phi[i], dphi[i]));
    }
    let result = ProfileResult {
        omega: cfg.omega,
        peak: prof.peak(),
        l2_norm_sqr: prof.l2_norm_sqr(),
        residual: prof.residual,
        checks,
        pass,
    };
    let em = Emitter::new("profile", cfg)?;
    em.write_csv(&csv)?;
    let json = em.write_json(cfg, &result)?;
    println!(
        "profile model={} omega={} peak={:.6} residual={:.2e} pass={} -> {}",
        cfg.model,
        cfg.omega,
        result.peak,
        result.residual,
        pass,
        json.display()
    );
    if pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::NonConvergence {
            what: "profile validation",
            detail: "an invariant check failed; see the JSON report".into(),
        })
    }
}

#[derive(Serialize)]
struct DcurveResult {
    critical_points: Vec<gsscrit::dcurve::CriticalPoint>,
    /// Largest |d1_fd + Q| over the sweep and the matching uncertainty band.
    max_d1_inconsistency: (f64, f64),
}

fn cmd_dcurve(cfg: &RunConfig) -> Result<ExitCode> {
    let solver = cfg.solver(&[cfg.omega_min, cfg.omega_max])?;
    let table = build_d_curve(&solver, cfg.omega_min, cfg.omega_max, cfg.samples)?;
    let critical = find_critical_frequency(&solver, &table)?;
    let result =
        DcurveResult { critical_points: critical, max_d1_inconsistency: table.d1_consistency() };
    let em = Emitter::new("dcurve", cfg)?;
    em.write_csv(&table.to_csv())?;
    let json = em.write_json(cfg, &result)?;
    let crit = result
        .critical_points
        .iter()
        .map(|c| format!("{:.5}", c.omega))
        .collect::<Vec<_>>()
        .join(",");
    println!(
        "dcurve model={} range=[{},{}] samples={} critical=[{}] -> {}",
        cfg.model,
        cfg.omega_min,
        cfg.omega_max,
        cfg.samples,
        crit,
        json.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SpectrumResult {
    report: gsscrit::spectral::SpectralReport,
    sb_residual: f64,
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<ExitCode> {
    let solver = cfg.solver(&[cfg.omega])?;
    let prof = solver.solve(cfg.omega)?;
    let report = check_spectral_assumptions(&prof)?;
    let sb = verify_sb_identity(&solver, &prof, DerivativeMethod::LinearSolve)?;
    let pass = report.pass() && sb < 1e-4;
    let result = SpectrumResult { report, sb_residual: sb };
    let em = Emitter::new("spectrum", cfg)?;
    let json = em.write_json(cfg, &result)?;
    println!(
        "spectrum model={} omega={} n_negative={} sb_residual={:.2e} pass={} -> {}",
        cfg.model,
        cfg.omega,
        result.report.n_negative,
        sb,
        pass,
        json.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(cfg: &RunConfig) -> Result<ExitCode> {
    let solver = cfg.solver(&[cfg.omega])?;
    let verdict = classify_stability(&solver, cfg.omega)?;
    let em = Emitter::new("classify", cfg)?;
    let json = em.write_json(cfg, &verdict)?;
    println!(
        "classify model={} omega={} verdict={:?} rule=\"{}\" -> {}",
        cfg.model,
        cfg.omega,
        verdict.verdict,
        verdict.rule_text,
        json.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvolveResult {
    initial_data: String,
    tube_radius: f64,
    max_distance: f64,
    exit_time: Option<f64>,
    relative_e_drift: f64,
    relative_q_drift: f64,
    p_sign_constant: bool,
    blowup: bool,
}

fn cmd_evolve(cfg: &RunConfig) -> Result<ExitCode> {
    let spec = cfg.model_spec()?;
    let refs = if cfg.lambda != 0.0 {
        vec![cfg.omega, spec.profile_at_group_offset(cfg.omega, cfg.lambda)]
    } else {
        vec![cfg.omega]
    };
    let solver = cfg.solver(&refs)?;
    let phi = solver.solve(cfg.omega)?.state();
    let (initial, label) = if cfg.lambda != 0.0 {
        (
            gsscrit::dcurve::build_psi(&solver, cfg.omega, cfg.lambda)?,
            format!("psi(lambda={})", cfg.lambda),
        )
    } else {
        (phi.axpy(cfg.delta, &even_perturbation(&phi)), format!("phi+delta(delta={})", cfg.delta))
    };
    let mut ecfg = EvolveConfig::new(cfg.t_final, cfg.dt);
    ecfg.output_every = cfg.output_every;
    ecfg.sponge = cfg.sponge;
    ecfg.stop_on_exit = true;
    let monitor = OrbitMonitor {
        solver: &solver,
        omega0: cfg.omega,
        tube_radius: tube_radius(&solver, cfg.omega)?,
        track_modulation: true,
    };
    let log = evolve(&initial, &ecfg, Some(&monitor))?;
    let result = EvolveResult {
        initial_data: label,
        tube_radius: monitor.tube_radius,
        max_distance: log.max_distance(),
        exit_time: log.exit_time,
        relative_e_drift: log.relative_e_drift(),
        relative_q_drift: log.relative_q_drift(),
        p_sign_constant: p_sign_constant(&log),
        blowup: log.blowup,
    };
    let em = Emitter::new("evolve", cfg)?;
    em.write_csv(&log.modulation_csv())?;
    let json = em.write_json(cfg, &result)?;
    println!(
        "evolve model={} omega={} data={} T={} max_distance={:.3e} exit_time={:?} -> {}",
        cfg.model,
        cfg.omega,
        result.initial_data,
        cfg.t_final,
        result.max_distance,
        result.exit_time,
        json.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    println!("verify {:<24} {} {detail}", name, if pass { "ok  " } else { "FAIL" });
    Check { name, pass, detail }
}

/// Fast invariant suite over the closed-form Klein-Gordon benchmark.
fn cmd_verify(cfg: &RunConfig) -> Result<ExitCode> {
    let mut fast = cfg.clone();
    fast.model = "nlkg".into();
    fast.p = 3.0;
    fast.dim = 1;
    fast.grid_n = fast.grid_n.min(1024);
    let star = std::f64::consts::FRAC_1_SQRT_2;
    let solver = fast.solver(&[0.9])?;
    let mut checks = Vec::new();

    let prof = solver.solve(0.5)?;
    let exact_peak = (2.0 * (1.0 - 0.25f64)).sqrt();
    checks.push(check(
        "profile-closed-form",
        (prof.peak() - exact_peak).abs() < 1e-3,
        format!("peak {:.6} vs {:.6}", prof.peak(), exact_peak),
    ));
    let report = validate_profile(&prof, 100.0 * fast.tol);
    checks.push(check("profile-invariants", report.pass(), format!("{} checks", report.checks.len())));

    let probe = probe_derivatives(&solver, 0.5, 1e-3)?;
    let q = evaluate_charge(&solver.solve(0.5)?.state())?;
    checks.push(check(
        "dprime-identity",
        (probe.d1 + q).abs() <= probe.d1_band.max(1e-8),
        format!("|d' + Q| = {:.2e}, band {:.2e}", (probe.d1 + q).abs(), probe.d1_band),
    ));
    let phi0 = solver.solve(0.0)?.l2_norm_sqr();
    let oracle = gsscrit::dcurve::analytic_d2_nlkg(3.0, 1, 0.5, phi0);
    checks.push(check(
        "d2-oracle",
        (probe.d2 - oracle).abs() < 0.01 * oracle.abs().max(0.1),
        format!("d'' {:.5} vs {:.5}", probe.d2, oracle),
    ));

    let sb = verify_sb_identity(&solver, &prof, DerivativeMethod::LinearSolve)?;
    checks.push(check("sb-identity", sb < 1e-4, format!("residual {sb:.2e}")));
    let spectral = check_spectral_assumptions(&prof)?;
    checks.push(check(
        "spectral-assumptions",
        spectral.pass(),
        format!("n_negative={} kernel_corr={:.6}", spectral.n_negative, spectral.kernel_correlation),
    ));

    let expected: [(f64, Verdict, fn(&Rule) -> bool); 3] = [
        (0.9, Verdict::Stable, |r| matches!(r, Rule::Slope)),
        (0.5, Verdict::Unstable, |r| matches!(r, Rule::Slope)),
        (star, Verdict::Unstable, |r| matches!(r, Rule::DerivativeUnstable { n: 3 })),
    ];
    for (om, want, rule_ok) in expected {
        let v = classify_stability(&solver, om)?;
        checks.push(check(
            "classifier-regime",
            v.verdict == want && rule_ok(&v.rule),
            format!("omega={om:.5} verdict={:?} rule=\"{}\"", v.verdict, v.rule_text),
        ));
    }

    let comp = verify_comparability(&solver, star, &[0.02, 0.05, 0.1])?;
    checks.push(check(
        "comparability",
        comp.min_ratio >= 0.25 && comp.max_ratio <= 0.45,
        format!("eta1/(lambda eta2) in [{:.4}, {:.4}]", comp.min_ratio, comp.max_ratio),
    ));

    let phi9 = solver.solve(0.9)?.state();
    let mut ecfg = EvolveConfig::new(5.0, 0.01);
    ecfg.output_every = 100;
    let log = evolve(&phi9, &ecfg, None)?;
    checks.push(check(
        "conservation",
        log.relative_e_drift() < 1e-6 && log.relative_q_drift() < 1e-6,
        format!("E drift {:.2e}, Q drift {:.2e}", log.relative_e_drift(), log.relative_q_drift()),
    ));

    let pass = checks.iter().all(|c| c.pass);
    let em = Emitter::new("verify", cfg)?;
    let json = em.write_json(cfg, &checks)?;
    println!(
        "verify {} of {} checks passed -> {}",
        checks.iter().filter(|c| c.pass).count(),
        checks.len(),
        json.display()
    );
    if pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
