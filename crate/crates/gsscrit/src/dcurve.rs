//! The scalar curve d(ω) = S_ω(Φ_ω), its derivatives, the degenerate-case
//! quantities η₁, η₂, σ(λ), the charge-preserving curve Ψ(λ), and the
//! stability classifier.
//!
//! All derivatives of d and all λ offsets are taken in the *group*
//! frequency variable (see [`crate::model`] for how it relates to the
//! positive profile frequency ω). With that convention d'(ω) = -Q(Φ_ω)
//! holds for both models.

use crate::error::{Error, Result};
use crate::fd::fd_weights;
use crate::functionals::{b_pairing, evaluate_charge, evaluate_energy};
use crate::model::ModelSpec;
use crate::profile::ProfileSolver;
use crate::state::{State, Symmetry};
use serde::Serialize;

/// d(g) and Q at one profile solve; g is the group frequency.
fn d_and_q(solver: &ProfileSolver, omega_profile: f64) -> Result<(f64, f64)> {
    let prof = solver.solve(omega_profile)?;
    let st = prof.state();
    let q = evaluate_charge(&st)?;
    let g = solver.model.group_sign() * omega_profile;
    Ok((evaluate_energy(&st)? - g * q, q))
}

fn offset_profile(model: &ModelSpec, omega0: f64, lambda: f64) -> f64 {
    model.profile_at_group_offset(omega0, lambda)
}

/// Derivative estimates of d at one frequency, from 5-point stencils with
/// step h and 2h; band = |difference between the two stencils| plus a
/// Richardson estimate of the spatial-discretization bias (probe repeated
/// on a half-resolution grid), making sign decisions near zero
/// operational. The spatial bias dominates the ω-stencil truncation near
/// a degenerate point, so the stencil difference alone would be far too
/// optimistic there.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivativeProbe {
    pub d1: f64,
    pub d1_band: f64,
    pub d2: f64,
    pub d2_band: f64,
    pub d3: f64,
    pub d3_band: f64,
    pub d4: f64,
    pub d4_band: f64,
    /// ω step of the inner stencil.
    pub h: f64,
}

/// Probe d', d'', d''', d⁗ (group variable) at profile frequency `omega`.
///
/// d' comes from a stencil over d samples; the higher derivatives
/// differentiate -Q, one order lower in the stencil (Eq.-(3.1)-style
/// identity d' = -Q), which keeps the noise floor down.
pub fn probe_derivatives(solver: &ProfileSolver, omega: f64, h_in: f64) -> Result<DerivativeProbe> {
    let s = solver.model.group_sign();
    // shrink the step near the edge of the existence range
    let h = match solver.model {
        ModelSpec::Nlkg { .. } => h_in.min((1.0 - omega.abs()) / 8.0),
        ModelSpec::Dpnls { .. } => h_in.min(omega / 8.0),
    };
    if h <= 0.0 {
        return Err(Error::invalid("omega too close to the existence boundary"));
    }
    let mut d = [0.0; 9];
    let mut q = [0.0; 9];
    for k in 0..9 {
        let om = omega + (k as f64 - 4.0) * h;
        let (dv, qv) = d_and_q(solver, om)?;
        d[k] = dv;
        q[k] = qv;
    }
    let stencil = |f: &[f64; 9], order: usize, step: usize| -> f64 {
        // 5 points at spacing step·h centered on index 4
        let nodes: Vec<f64> = (-2..=2).map(|k| k as f64 * step as f64 * h).collect();
        let w = fd_weights(0.0, &nodes, order);
        (-2i64..=2)
            .zip(&w)
            .map(|(k, c)| c * f[(4 + k * step as i64) as usize])
            .sum()
    };
    // group-variable conversions: d/dg = s·d/dω
    let d1_a = s * stencil(&d, 1, 1);
    let d1_b = s * stencil(&d, 1, 2);
    let d2_a = -s * stencil(&q, 1, 1);
    let d2_b = -s * stencil(&q, 1, 2);
    let d3_a = -stencil(&q, 2, 1);
    let d3_b = -stencil(&q, 2, 2);
    let d4_a = -s * stencil(&q, 3, 1);
    let d4_b = -s * stencil(&q, 3, 2);
    let (bias2, bias3, bias4) = coarse_grid_bias(solver, omega, h, d2_a, d3_a, d4_a)?;
    Ok(DerivativeProbe {
        d1: d1_a,
        d1_band: (d1_a - d1_b).abs(),
        d2: d2_a,
        d2_band: (d2_a - d2_b).abs() + bias2,
        d3: d3_a,
        d3_band: (d3_a - d3_b).abs() + bias3,
        d4: d4_a,
        d4_band: (d4_a - d4_b).abs() + bias4,
        h,
    })
}

/// Spatial-bias estimate for the d², d³, d⁴ probes: repeat the inner Q
/// stencils on a half-resolution grid; for an O(h²) scheme the fine-grid
/// bias is about a third of the fine/coarse difference.
fn coarse_grid_bias(
    solver: &ProfileSolver,
    omega: f64,
    h: f64,
    d2_fine: f64,
    d3_fine: f64,
    d4_fine: f64,
) -> Result<(f64, f64, f64)> {
    let g = &solver.grid;
    let coarse_grid = std::sync::Arc::new(crate::grid::RadialGrid::new(
        g.dim,
        g.n / 2,
        g.r_max,
        g.geometry,
    )?);
    let coarse = ProfileSolver::new(solver.model, coarse_grid, solver.tol.max(1e-12));
    let s = solver.model.group_sign();
    let mut q = [0.0; 5];
    for k in 0..5 {
        let om = omega + (k as f64 - 2.0) * h;
        let prof = coarse.solve(om)?;
        q[k] = evaluate_charge(&prof.state())?;
    }
    let nodes: Vec<f64> = (-2..=2).map(|k| k as f64 * h).collect();
    let stencil = |order: usize| -> f64 {
        fd_weights(0.0, &nodes, order).iter().zip(&q).map(|(c, v)| c * v).sum()
    };
    let d2_c = -s * stencil(1);
    let d3_c = -stencil(2);
    let d4_c = -s * stencil(3);
    Ok((
        (d2_fine - d2_c).abs() / 3.0,
        (d3_fine - d3_c).abs() / 3.0,
        (d4_fine - d4_c).abs() / 3.0,
    ))
}

/// One sample of the d-curve. Gap markers (failed profile solves) carry
/// NaN in every column but `omega`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DCurveRow {
    pub omega: f64,
    pub q: f64,
    pub d: f64,
    pub d1_fd: f64,
    pub d1_q: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DCurveTable {
    pub model: ModelSpec,
    pub rows: Vec<DCurveRow>,
    /// ω of samples where the profile solve failed.
    pub gaps: Vec<f64>,
    /// Stencil step used for the derivative columns.
    pub h_probe: f64,
    /// Uncertainty band of d1_fd per row (criterion for |d1_fd + Q|).
    pub d1_bands: Vec<f64>,
    pub d2_bands: Vec<f64>,
    pub d3_bands: Vec<f64>,
}

impl DCurveTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,Q,d,d1_fd,d1_Q,d2,d3\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.omega, r.q, r.d, r.d1_fd, r.d1_q, r.d2, r.d3
            ));
        }
        out
    }

    /// Max over samples of |d1_fd + Q| (Eq. (3.1): d' = -Q), together with
    /// the largest stencil uncertainty band, for the consistency check.
    pub fn d1_consistency(&self) -> (f64, f64) {
        let mut worst = 0.0f64;
        let mut band = 0.0f64;
        for (r, b) in self.rows.iter().zip(&self.d1_bands) {
            if r.d1_fd.is_finite() {
                worst = worst.max((r.d1_fd + r.q).abs());
                band = band.max(*b);
            }
        }
        (worst, band)
    }
}

/// Sweep ω over [omega_lo, omega_hi] (profile frequency) with `n_samples`
/// uniform samples; derivatives by [`probe_derivatives`] at each sample.
pub fn build_d_curve(
    solver: &ProfileSolver,
    omega_lo: f64,
    omega_hi: f64,
    n_samples: usize,
) -> Result<DCurveTable> {
    if !(omega_lo < omega_hi) || n_samples < 2 {
        return Err(Error::invalid("need omega_lo < omega_hi and >= 2 samples"));
    }
    let h_probe = 1e-3;
    let step = (omega_hi - omega_lo) / (n_samples - 1) as f64;
    let mut rows = Vec::with_capacity(n_samples);
    let mut gaps = Vec::new();
    let mut d1_bands = Vec::with_capacity(n_samples);
    let mut d2_bands = Vec::with_capacity(n_samples);
    let mut d3_bands = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let omega = omega_lo + i as f64 * step;
        let sample = d_and_q(solver, omega)
            .and_then(|(d, q)| Ok((d, q, probe_derivatives(solver, omega, h_probe)?)));
        match sample {
            Ok((d, q, p)) => {
                rows.push(DCurveRow {
                    omega,
                    q,
                    d,
                    d1_fd: p.d1,
                    d1_q: -q,
                    d2: p.d2,
                    d3: p.d3,
                });
                d1_bands.push(p.d1_band);
                d2_bands.push(p.d2_band);
                d3_bands.push(p.d3_band);
            }
            Err(_) => {
                rows.push(DCurveRow {
                    omega,
                    q: f64::NAN,
                    d: f64::NAN,
                    d1_fd: f64::NAN,
                    d1_q: f64::NAN,
                    d2: f64::NAN,
                    d3: f64::NAN,
                });
                gaps.push(omega);
                d1_bands.push(f64::NAN);
                d2_bands.push(f64::NAN);
                d3_bands.push(f64::NAN);
            }
        }
    }
    Ok(DCurveTable {
        model: solver.model,
        rows,
        gaps,
        h_probe,
        d1_bands,
        d2_bands,
        d3_bands,
    })
}

/// §5.1 closed form for NLKG:
/// d''(ω) = -(1 - (1 + 4/(p-1) - d)ω²)(1-ω²)^{2/(p-1) - d/2 - 1} ∫φ₀².
pub fn analytic_d2_nlkg(p: f64, dim: u32, omega: f64, phi0_l2sq: f64) -> f64 {
    let dm = dim as f64;
    let c = 1.0 - omega * omega;
    -(1.0 - (1.0 + 4.0 / (p - 1.0) - dm) * omega * omega)
        * c.powf(2.0 / (p - 1.0) - dm / 2.0 - 1.0)
        * phi0_l2sq
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    /// Profile frequency of the d'' root.
    pub omega: f64,
    /// d''' there (group variable), with its uncertainty band.
    pub d3: f64,
    pub d3_band: f64,
}

/// Brent root refinement on [a, b] with f(a)f(b) < 0.
fn brent_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if fa * fb > 0.0 {
        return Err(Error::invalid("brent: no sign change on bracket"));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() < tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let cond = !((lo.min(b) < s && s < lo.max(b))
            && (!bisected || (s - b).abs() < 0.5 * (b - c).abs())
            && (!bisected || (b - c).abs() > tol))
            && !((lo.min(b) < s && s < lo.max(b))
                && (bisected || (s - b).abs() < 0.5 * d.abs())
                && (bisected || d.abs() > tol));
        if cond {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s)?;
        d = c - b;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

/// Locate the roots of d'' from sign changes between table samples and
/// refine each by Brent's method with on-demand profile solves.
pub fn find_critical_frequency(
    solver: &ProfileSolver,
    table: &DCurveTable,
) -> Result<Vec<CriticalPoint>> {
    let mut out = Vec::new();
    let d2_at = |om: f64| -> Result<f64> { Ok(probe_derivatives(solver, om, table.h_probe)?.d2) };
    for w in table.rows.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(lo.d2.is_finite() && hi.d2.is_finite()) {
            continue;
        }
        if lo.d2 == 0.0 || lo.d2 * hi.d2 >= 0.0 {
            continue;
        }
        let root = brent_root(d2_at, lo.omega, hi.omega, lo.d2, hi.d2, 1e-6, 60)?;
        let probe = probe_derivatives(solver, root, table.h_probe)?;
        out.push(CriticalPoint { omega: root, d3: probe.d3, d3_band: probe.d3_band });
    }
    Ok(out)
}

/// η₁(λ) = d(g₀+λ) - d(g₀) - λd'(g₀) and η₂(λ) = d'(g₀+λ) - d'(g₀),
/// λ in the group variable, d' = -Q, from fresh profile solves.
pub fn eta_functions(solver: &ProfileSolver, omega0: f64, lambda: f64) -> Result<(f64, f64)> {
    if lambda == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (d0, q0) = d_and_q(solver, omega0)?;
    let om1 = offset_profile(&solver.model, omega0, lambda);
    let (d1, q1) = d_and_q(solver, om1)?;
    Ok((d1 - d0 + lambda * q0, q0 - q1))
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparabilitySample {
    pub lambda: f64,
    /// η₁/(λη₂) when both parts are above the noise floor.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityReport {
    pub samples: Vec<ComparabilitySample>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub skipped: usize,
}

impl ComparabilityReport {
    /// Pass iff every computed ratio lies within [c, 1/c].
    pub fn pass(&self, c: f64) -> bool {
        !self.samples.is_empty()
            && self.skipped < self.samples.len()
            && self.min_ratio >= c
            && self.max_ratio <= 1.0 / c
    }
}

/// Eq. (2.2) comparability from explicit η values; shared by the model
/// sweep and synthetic-table tests.
pub fn comparability_from_eta(
    mut eta: impl FnMut(f64) -> Result<(f64, f64)>,
    lambdas: &[f64],
    noise_floor: f64,
) -> Result<ComparabilityReport> {
    let mut samples = Vec::with_capacity(lambdas.len());
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut skipped = 0;
    for &la in lambdas {
        let (e1, e2) = eta(la)?;
        let denom = la * e2;
        if e1.abs() <= noise_floor && denom.abs() <= noise_floor {
            samples.push(ComparabilitySample { lambda: la, ratio: None });
            skipped += 1;
            continue;
        }
        let r = e1 / denom;
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
        samples.push(ComparabilitySample { lambda: la, ratio: Some(r) });
    }
    Ok(ComparabilityReport { samples, min_ratio, max_ratio, skipped })
}

/// Eq. (2.2) at ω₀ for the model: ratios η₁/(λη₂) over a λ grid.
pub fn verify_comparability(
    solver: &ProfileSolver,
    omega0: f64,
    lambdas: &[f64],
) -> Result<ComparabilityReport> {
    comparability_from_eta(|la| eta_functions(solver, omega0, la), lambdas, 1e-12)
}

/// Lemma 3.1: solve Q(φ_{g₀+λ} + σBφ_{g₀+λ}) = Q(φ_{g₀}) for the root
/// with σ(λ) → 0 as λ → 0.
///
/// Q is quadratic: Q(ψ+σBψ) = Q(ψ) + σ‖Bψ‖²_H + σ²Q(Bψ), so the root is
/// explicit; the smaller-magnitude branch is returned.
pub fn solve_sigma(solver: &ProfileSolver, omega0: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let q0 = evaluate_charge(&solver.solve(omega0)?.state())?;
    let psi = solver.solve(offset_profile(&solver.model, omega0, lambda))?.state();
    let bpsi = psi.apply_symmetry(Symmetry::B);
    let a = 0.5 * b_pairing(&bpsi, &bpsi); // Q(Bψ)
    let b = bpsi.norm_h_sqr();
    let c = evaluate_charge(&psi)? - q0;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(Error::NonConvergence {
            what: "sigma",
            detail: format!("no real root at lambda = {lambda}"),
        });
    }
    // b > 0 (it is ‖Bψ‖²); the small root avoids cancellation this way
    Ok(-2.0 * c / (b + disc.sqrt()))
}

/// §3: Ψ(λ) = φ_{g₀+λ} + σ(λ)Bφ_{g₀+λ}, the charge-preserving curve.
pub fn build_psi(solver: &ProfileSolver, omega0: f64, lambda: f64) -> Result<State> {
    let sigma = solve_sigma(solver, omega0, lambda)?;
    let psi = solver.solve(offset_profile(&solver.model, omega0, lambda))?.state();
    Ok(psi.axpy(sigma, &psi.apply_symmetry(Symmetry::B)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Undetermined,
}

/// Which statement of the theory produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "name")]
pub enum Rule {
    /// d'' decisively signed (Theorem 2.10).
    Slope,
    /// First nonvanishing derivative d^(n) > 0 with n even (Corollary 2.14).
    EvenDerivativePositive { n: u32 },
    /// d^(n) < 0 with n even, or d^(n) ≠ 0 with n odd (Corollary 2.15).
    DerivativeUnstable { n: u32 },
    /// η₁ > 0 on both sides: strict convexity at sample resolution
    /// (Theorem 2.11).
    EtaConvex,
    /// η₁ < 0 on one side (Theorem 2.12).
    EtaOneSided,
    NoneApplicable,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Rule::Slope => write!(f, "Theorem 2.10"),
            Rule::EvenDerivativePositive { n } => write!(f, "Corollary 2.14 (n={n})"),
            Rule::DerivativeUnstable { n } => write!(f, "Corollary 2.15 (n={n})"),
            Rule::EtaConvex => write!(f, "Theorem 2.11"),
            Rule::EtaOneSided => write!(f, "Theorem 2.12"),
            Rule::NoneApplicable => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Witnesses {
    pub d2: f64,
    pub d2_band: f64,
    pub d3: f64,
    pub d3_band: f64,
    pub d4: f64,
    pub d4_band: f64,
    pub eta1_left: Option<f64>,
    pub eta1_right: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub rule: Rule,
    pub rule_text: String,
    pub witnesses: Witnesses,
}

impl StabilityVerdict {
    /// Re-check that the recorded rule actually follows from the recorded
    /// witnesses.
    pub fn consistent(&self) -> bool {
        let w = &self.witnesses;
        match self.rule {
            Rule::Slope => {
                (self.verdict == Verdict::Stable && w.d2 > w.d2_band)
                    || (self.verdict == Verdict::Unstable && w.d2 < -w.d2_band)
            }
            Rule::DerivativeUnstable { n: 3 } => {
                self.verdict == Verdict::Unstable
                    && w.d2.abs() <= w.d2_band
                    && w.d3.abs() > w.d3_band
            }
            Rule::EvenDerivativePositive { n: 4 } => {
                self.verdict == Verdict::Stable
                    && w.d2.abs() <= w.d2_band
                    && w.d3.abs() <= w.d3_band
                    && w.d4 > w.d4_band
            }
            Rule::DerivativeUnstable { n: 4 } => {
                self.verdict == Verdict::Unstable
                    && w.d2.abs() <= w.d2_band
                    && w.d3.abs() <= w.d3_band
                    && w.d4 < -w.d4_band
            }
            Rule::EtaConvex => {
                self.verdict == Verdict::Stable
                    && matches!((w.eta1_left, w.eta1_right), (Some(l), Some(r)) if l > 0.0 && r > 0.0)
            }
            Rule::EtaOneSided => {
                self.verdict == Verdict::Unstable
                    && (matches!(w.eta1_left, Some(l) if l < 0.0)
                        || matches!(w.eta1_right, Some(r) if r < 0.0))
            }
            Rule::NoneApplicable => self.verdict == Verdict::Undetermined,
            _ => false,
        }
    }
}

/// Classify stability from derivative estimates alone (no solves); used
/// directly for synthetic probes and as the main path of
/// [`classify_stability`]. η values, if supplied, feed the fallback.
pub fn classify_from_probe(
    probe: &DerivativeProbe,
    eta1_left: Option<f64>,
    eta1_right: Option<f64>,
) -> StabilityVerdict {
    let w = Witnesses {
        d2: probe.d2,
        d2_band: probe.d2_band,
        d3: probe.d3,
        d3_band: probe.d3_band,
        d4: probe.d4,
        d4_band: probe.d4_band,
        eta1_left,
        eta1_right,
    };
    let (verdict, rule) = if probe.d2 > probe.d2_band {
        (Verdict::Stable, Rule::Slope)
    } else if probe.d2 < -probe.d2_band {
        (Verdict::Unstable, Rule::Slope)
    } else if probe.d3.abs() > probe.d3_band {
        (Verdict::Unstable, Rule::DerivativeUnstable { n: 3 })
    } else if probe.d4 > probe.d4_band {
        (Verdict::Stable, Rule::EvenDerivativePositive { n: 4 })
    } else if probe.d4 < -probe.d4_band {
        (Verdict::Unstable, Rule::DerivativeUnstable { n: 4 })
    } else {
        match (eta1_left, eta1_right) {
            (Some(l), _) if l < 0.0 => (Verdict::Unstable, Rule::EtaOneSided),
            (_, Some(r)) if r < 0.0 => (Verdict::Unstable, Rule::EtaOneSided),
            (Some(l), Some(r)) if l > 0.0 && r > 0.0 => (Verdict::Stable, Rule::EtaConvex),
            _ => (Verdict::Undetermined, Rule::NoneApplicable),
        }
    };
    StabilityVerdict { verdict, rule, rule_text: rule.to_string(), witnesses: w }
}

/// Classify the bound state at ω₀: probe derivatives with uncertainty
/// bands, then fall back on the one-sided η₁ sign test only when every
/// tested derivative is inside its band.
pub fn classify_stability(solver: &ProfileSolver, omega0: f64) -> Result<StabilityVerdict> {
    let probe = probe_derivatives(solver, omega0, 1e-3)?;
    let needs_eta = probe.d2.abs() <= probe.d2_band
        && probe.d3.abs() <= probe.d3_band
        && probe.d4.abs() <= probe.d4_band;
    let (left, right) = if needs_eta {
        let la = 0.05;
        (
            eta_functions(solver, omega0, -la).ok().map(|(e1, _)| e1),
            eta_functions(solver, omega0, la).ok().map(|(e1, _)| e1),
        )
    } else {
        (None, None)
    };
    Ok(classify_from_probe(&probe, left, right))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    /// λ samples (group variable, one side).
    pub lambdas: Vec<f64>,
    pub d2_values: Vec<f64>,
    pub eta1_values: Vec<f64>,
    /// (A): d''(g₀+λ) < 0 at every sample.
    pub cond_a: bool,
    /// (B): d(g₀+λ) - d(g₀) - λd'(g₀) < 0 at every sample.
    pub cond_b: bool,
    /// (C): d''(g₀+λ) < 0 at some sample.
    pub cond_c: bool,
    /// (A)⇒(B)⇒(C) on the computed booleans.
    pub chain_ok: bool,
}

/// §1 conditions (A), (B), (C) at sample resolution over one-sided λ
/// samples (all the same sign).
pub fn check_convexity_conditions(
    solver: &ProfileSolver,
    omega0: f64,
    lambdas: &[f64],
) -> Result<ConvexityReport> {
    if lambdas.is_empty() || !lambdas.iter().all(|l| l.signum() == lambdas[0].signum()) {
        return Err(Error::invalid("need a nonempty one-sided lambda grid"));
    }
    let mut d2_values = Vec::with_capacity(lambdas.len());
    let mut eta1_values = Vec::with_capacity(lambdas.len());
    for &la in lambdas {
        let om = offset_profile(&solver.model, omega0, la);
        d2_values.push(probe_derivatives(solver, om, 1e-3)?.d2);
        eta1_values.push(eta_functions(solver, omega0, la)?.0);
    }
    let cond_a = d2_values.iter().all(|&v| v < 0.0);
    let cond_b = eta1_values.iter().all(|&v| v < 0.0);
    let cond_c = d2_values.iter().any(|&v| v < 0.0);
    let chain_ok = (!cond_a || cond_b) && (!cond_b || cond_c);
    Ok(ConvexityReport { lambdas: lambdas.to_vec(), d2_values, eta1_values, cond_a, cond_b, cond_c, chain_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Geometry, RadialGrid};
    use crate::profile::solve_profile;
    use std::sync::Arc;

    /// ω★ for NLKG from the §5.1 formula.
    fn omega_star(p: f64, dim: u32) -> f64 {
        ((p - 1.0) / (4.0 - (dim as f64 - 1.0) * (p - 1.0))).sqrt()
    }

    fn nlkg_solver(p: f64) -> ProfileSolver {
        // one grid serving the full sweep: sized for the slowest decay at
        // ω = 0.95
        let grid = Arc::new(RadialGrid::new(1, 4096, 110.0, Geometry::EvenLine).unwrap());
        ProfileSolver::new(ModelSpec::nlkg(p, 1), grid, 1e-11)
    }

    #[test]
    fn probe_matches_closed_forms_midrange() {
        let solver = nlkg_solver(3.0);
        let p = probe_derivatives(&solver, 0.5, 1e-3).unwrap();
        // d' = -Q = -4ω√(1-ω²) = -√3
        assert!((p.d1 + 3.0f64.sqrt()).abs() < 1e-3, "d1 {}", p.d1);
        // d'' = -4(1-2ω²)/√(1-ω²) = -2/√0.75
        let d2_exact = -4.0 * 0.5 / 0.75f64.sqrt();
        assert!((p.d2 - d2_exact).abs() < 1e-2, "d2 {} vs {d2_exact}", p.d2);
    }

    #[test]
    fn probe_at_omega_zero() {
        let solver = nlkg_solver(3.0);
        let p = probe_derivatives(&solver, 0.0, 1e-3).unwrap();
        assert!(p.d1.abs() < 1e-6, "d1 {}", p.d1);
        assert!((p.d2 + 4.0).abs() < 2e-2, "d2 {}", p.d2);
    }

    #[test]
    fn probe_third_derivative_at_star() {
        let solver = nlkg_solver(3.0);
        let p = probe_derivatives(&solver, omega_star(3.0, 1), 1e-3).unwrap();
        assert!(p.d2.abs() < 2e-2, "d2 {}", p.d2);
        assert!((p.d3 - 16.0).abs() < 0.2, "d3 {}", p.d3);
    }

    #[test]
    fn curve_columns_and_gaps() {
        let solver = nlkg_solver(3.0);
        let table = build_d_curve(&solver, 0.3, 0.7, 5).unwrap();
        assert!(table.gaps.is_empty());
        let (worst, band) = table.d1_consistency();
        assert!(worst <= 5.0 * band.max(1e-8), "worst {worst} band {band}");
        let csv = table.to_csv();
        assert!(csv.starts_with("omega,Q,d,d1_fd,d1_Q,d2,d3\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn oracle_agreement_sample() {
        let solver = nlkg_solver(3.0);
        let phi0 = solve_profile(solver.model, 0.0, solver.grid.clone(), 1e-11).unwrap();
        let l2 = phi0.l2_norm_sqr();
        assert!((l2 - 4.0).abs() < 1e-3, "∫φ₀² = {l2}");
        for omega in [0.2, 0.5, 0.8] {
            let num = probe_derivatives(&solver, omega, 1e-3).unwrap().d2;
            let exact = analytic_d2_nlkg(3.0, 1, omega, l2);
            let denom = exact.abs().max(0.1);
            assert!((num - exact).abs() / denom < 0.01, "ω={omega}: {num} vs {exact}");
        }
    }

    #[test]
    fn analytic_d2_examples() {
        assert!(analytic_d2_nlkg(3.0, 1, omega_star(3.0, 1), 4.0).abs() < 1e-12);
        assert_eq!(analytic_d2_nlkg(3.0, 1, 0.0, 4.0), -4.0);
        // p = 5, d = 1: exponent 2/(p-1) - d/2 - 1 = -1, prefactor -(1-2ω²)... check ω-independence
        for omega in [0.0, 0.3, 0.7] {
            assert!((analytic_d2_nlkg(5.0, 1, omega, 3.0) + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn critical_frequency_cubic() {
        let solver = nlkg_solver(3.0);
        let table = build_d_curve(&solver, 0.3, 0.9, 7).unwrap();
        let roots = find_critical_frequency(&solver, &table).unwrap();
        assert_eq!(roots.len(), 1);
        let exact = omega_star(3.0, 1);
        assert!((roots[0].omega - exact).abs() < 2e-3, "{} vs {exact}", roots[0].omega);
        assert!((roots[0].d3 - 16.0).abs() < 0.5, "d3 {}", roots[0].d3);
    }

    #[test]
    fn critical_frequency_quadratic_power() {
        let solver = nlkg_solver(2.0);
        let table = build_d_curve(&solver, 0.2, 0.8, 7).unwrap();
        let roots = find_critical_frequency(&solver, &table).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].omega - 0.5).abs() < 2e-3, "{}", roots[0].omega);
    }

    #[test]
    fn no_critical_frequency_for_quintic() {
        let solver = nlkg_solver(5.0);
        let table = build_d_curve(&solver, 0.2, 0.8, 7).unwrap();
        assert!(table.rows.iter().all(|r| r.d2 < 0.0));
        assert!(find_critical_frequency(&solver, &table).unwrap().is_empty());
    }

    #[test]
    fn eta_taylor_at_star() {
        let solver = nlkg_solver(3.0);
        let star = omega_star(3.0, 1);
        assert_eq!(eta_functions(&solver, star, 0.0).unwrap(), (0.0, 0.0));
        for la in [0.02f64, 0.05] {
            let (e1, e2) = eta_functions(&solver, star, la).unwrap();
            let e1_taylor = 16.0 / 6.0 * la.powi(3);
            let e2_taylor = 8.0 * la * la;
            assert!((e1 - e1_taylor).abs() < 0.2 * e1_taylor.abs(), "λ={la}: η₁ {e1} vs {e1_taylor}");
            assert!((e2 - e2_taylor).abs() < 0.1 * e2_taylor.abs(), "λ={la}: η₂ {e2} vs {e2_taylor}");
        }
    }

    #[test]
    fn comparability_at_star_tends_to_third() {
        let solver = nlkg_solver(3.0);
        let star = omega_star(3.0, 1);
        let lambdas: Vec<f64> = (0..7).map(|k| 1e-2 * 10f64.powf(k as f64 / 6.0)).collect();
        let rep = verify_comparability(&solver, star, &lambdas).unwrap();
        assert_eq!(rep.skipped, 0);
        assert!(rep.min_ratio > 0.25 && rep.max_ratio < 0.45, "{:?}", (rep.min_ratio, rep.max_ratio));
        assert!(rep.pass(0.25));
        // the smallest λ should be closest to the Taylor value 1/3
        let first = rep.samples[0].ratio.unwrap();
        assert!((first - 1.0 / 3.0).abs() < 0.05, "{first}");
    }

    #[test]
    fn comparability_generic_point_tends_to_half() {
        let solver = nlkg_solver(3.0);
        let lambdas = [0.001, 0.003, 0.01];
        let rep = verify_comparability(&solver, 0.5, &lambdas).unwrap();
        for s in &rep.samples {
            let r = s.ratio.unwrap();
            assert!((r - 0.5).abs() < 0.05, "λ={}: {r}", s.lambda);
        }
    }

    #[test]
    fn comparability_rejects_flat_exponential() {
        // synthetic d with d(g₀+λ) - d(g₀) - λd'(g₀) = -e^{-1/|λ|}: all
        // derivatives vanish at λ=0, so η₁/λη₂ degenerates as λ→0
        let eta = |la: f64| -> Result<(f64, f64)> {
            let e1 = -(-1.0 / la.abs()).exp();
            // d'(g₀+λ) - d'(g₀) for d(g₀+λ)=d₀+λd'₀-e^{-1/|λ|}
            let e2 = -(-1.0 / la.abs()).exp() / (la * la) * la.signum();
            Ok((e1, e2))
        };
        let lambdas: Vec<f64> = (1..=6).map(|k| 0.02 * k as f64).collect();
        let rep = comparability_from_eta(eta, &lambdas, 1e-300).unwrap();
        assert!(!rep.pass(0.25), "{:?}", (rep.min_ratio, rep.max_ratio));
    }

    #[test]
    fn sigma_leading_order_at_star() {
        let solver = nlkg_solver(3.0);
        let star = omega_star(3.0, 1);
        assert_eq!(solve_sigma(&solver, star, 0.0).unwrap(), 0.0);
        let la = 0.05;
        let sigma = solve_sigma(&solver, star, la).unwrap();
        // σ ≈ η₂/‖Bφ_{ω+λ}‖², with ‖BΦ_ω‖² = (1+ω²)∫φ_ω²
        let (_, e2) = eta_functions(&solver, star, la).unwrap();
        let psi = solver.solve(star + la).unwrap().state();
        let bnorm = psi.apply_symmetry(Symmetry::B).norm_h_sqr();
        assert!((sigma * bnorm - e2).abs() < 0.2 * e2.abs(), "{} vs {e2}", sigma * bnorm);
        // the spec-level sanity number
        assert!((sigma - 4.71e-3).abs() < 0.2 * 4.71e-3, "σ = {sigma}");
    }

    #[test]
    fn psi_preserves_charge() {
        let solver = nlkg_solver(3.0);
        let star = omega_star(3.0, 1);
        let q0 = evaluate_charge(&solver.solve(star).unwrap().state()).unwrap();
        for la in [-0.05, 0.02, 0.1] {
            let psi = build_psi(&solver, star, la).unwrap();
            let q = evaluate_charge(&psi).unwrap();
            assert!((q - q0).abs() < 1e-10 * q0.abs(), "λ={la}: {q} vs {q0}");
        }
        // λ = 0 returns the bound state itself
        let psi0 = build_psi(&solver, star, 0.0).unwrap();
        let d = psi0.sub(&solver.solve(star).unwrap().state()).norm_x();
        assert!(d < 1e-14);
    }

    #[test]
    fn psi_action_gap_matches_eta1() {
        // Lemma 3.2: S_{g₀}(Ψ(λ)) - d(g₀) = η₁(λ)(1 + o(1))
        use crate::functionals::evaluate_action;
        let solver = nlkg_solver(3.0);
        let star = omega_star(3.0, 1);
        let g0 = solver.model.group_sign() * star;
        let d0 = evaluate_action(&solver.solve(star).unwrap().state(), g0).unwrap();
        for la in [0.02, 0.05, 0.1] {
            let psi = build_psi(&solver, star, la).unwrap();
            let gap = evaluate_action(&psi, g0).unwrap() - d0;
            let (e1, _) = eta_functions(&solver, star, la).unwrap();
            let ratio = gap / e1;
            assert!((0.85..=1.15).contains(&ratio), "λ={la}: ratio {ratio}");
        }
    }

    #[test]
    fn classifier_three_regimes() {
        let solver = nlkg_solver(3.0);
        let stable = classify_stability(&solver, 0.9).unwrap();
        assert_eq!(stable.verdict, Verdict::Stable);
        assert_eq!(stable.rule, Rule::Slope);
        assert!(stable.consistent());

        let unstable = classify_stability(&solver, 0.5).unwrap();
        assert_eq!(unstable.verdict, Verdict::Unstable);
        assert_eq!(unstable.rule, Rule::Slope);
        assert!(unstable.consistent());

        let degenerate = classify_stability(&solver, omega_star(3.0, 1)).unwrap();
        assert_eq!(degenerate.verdict, Verdict::Unstable);
        assert_eq!(degenerate.rule, Rule::DerivativeUnstable { n: 3 });
        assert_eq!(degenerate.rule_text, "Corollary 2.15 (n=3)");
        assert!(degenerate.consistent());
    }

    #[test]
    fn classifier_synthetic_quartic() {
        // d'' = d''' = 0 within band, d⁗ > 0 → stable by Corollary 2.14
        let probe = DerivativeProbe {
            d1: -1.0,
            d1_band: 1e-8,
            d2: 1e-9,
            d2_band: 1e-6,
            d3: -2e-8,
            d3_band: 1e-4,
            d4: 7.5,
            d4_band: 1e-2,
            h: 1e-3,
        };
        let v = classify_from_probe(&probe, None, None);
        assert_eq!(v.verdict, Verdict::Stable);
        assert_eq!(v.rule, Rule::EvenDerivativePositive { n: 4 });
        assert!(v.consistent());
    }

    #[test]
    fn classifier_band_refinement_keeps_verdicts() {
        let solver = nlkg_solver(3.0);
        for omega in [0.5, 0.9] {
            let coarse = classify_from_probe(&probe_derivatives(&solver, omega, 2e-3).unwrap(), None, None);
            let fine = classify_from_probe(&probe_derivatives(&solver, omega, 1e-3).unwrap(), None, None);
            assert_eq!(coarse.verdict, fine.verdict, "ω = {omega}");
        }
    }

    #[test]
    fn convexity_conditions_at_star() {
        let solver = nlkg_solver(3.0);
        let star = omega_star(3.0, 1);
        let right: Vec<f64> = vec![0.02, 0.05, 0.08];
        let rep = check_convexity_conditions(&solver, star, &right).unwrap();
        assert!(!rep.cond_a && !rep.cond_b, "{rep:?}");
        assert!(rep.chain_ok);
        let left: Vec<f64> = vec![-0.02, -0.05, -0.08];
        let rep = check_convexity_conditions(&solver, star, &left).unwrap();
        assert!(rep.cond_a && rep.cond_b && rep.cond_c, "{rep:?}");
        assert!(rep.chain_ok);
    }

    #[test]
    fn dpnls_vakhitov_kolokolov_sign() {
        // focusing cubic DPNLS limit: subcritical, d''(group) > 0 (stable)
        let grid = Arc::new(RadialGrid::new(1, 2048, 60.0, Geometry::EvenLine).unwrap());
        let solver = ProfileSolver::new(ModelSpec::dpnls(1.0, 3.0, 0.0, 5.0), grid, 1e-11);
        let p = probe_derivatives(&solver, 0.5, 1e-3).unwrap();
        assert!(p.d2 > p.d2_band, "d2 {} band {}", p.d2, p.d2_band);
    }
}
