//! Bound-state profiles φ_ω: shooting on φ(0), collocation-Newton
//! refinement on the grid, ω-derivatives and validation.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::ModelSpec;
use crate::state::{State, C64};
use crate::tridiag::WeightedOp;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct Profile {
    pub model: ModelSpec,
    /// Profile frequency (positive; see [`crate::model`] for the group sign).
    pub omega: f64,
    pub grid: Arc<RadialGrid>,
    pub phi: Vec<f64>,
    /// Sup-norm of the discrete stationary equation at the solution.
    pub residual: f64,
    /// ∂φ/∂ω (with respect to the profile frequency), when computed.
    pub dphi_domega: Option<Vec<f64>>,
}

impl Profile {
    /// The bound state as a State: (φ, iωφ) for NLKG, φ for DPNLS.
    pub fn state(&self) -> State {
        let u: Vec<C64> = self.phi.iter().map(|&p| C64::new(p, 0.0)).collect();
        if self.model.is_nlkg() {
            let v: Vec<C64> = self.phi.iter().map(|&p| C64::new(0.0, self.omega * p)).collect();
            State::pair(self.model, self.grid.clone(), u, v)
        } else {
            State::single(self.model, self.grid.clone(), u)
        }
    }

    /// A real radial function as a State in the model's layout, with zero
    /// velocity component for NLKG.
    pub fn real_state(&self, f: &[f64]) -> State {
        let u: Vec<C64> = f.iter().map(|&p| C64::new(p, 0.0)).collect();
        if self.model.is_nlkg() {
            let v = vec![C64::new(0.0, 0.0); f.len()];
            State::pair(self.model, self.grid.clone(), u, v)
        } else {
            State::single(self.model, self.grid.clone(), u)
        }
    }

    pub fn l2_norm_sqr(&self) -> f64 {
        let sq: Vec<f64> = self.phi.iter().map(|p| p * p).collect();
        self.grid.quad(&sq)
    }

    pub fn peak(&self) -> f64 {
        self.phi[0]
    }
}

/// Outcome of one shot of the profile ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    /// φ crossed zero: amplitude too large.
    Over,
    /// φ' turned positive while φ > 0: amplitude too small.
    Under,
}

/// Integrate φ'' + (d-1)/r φ' = cφ - N(φ) from r = 0 with φ(0) = a,
/// φ'(0) = 0 and classify; optionally record nodal values.
fn shoot(
    model: &ModelSpec,
    c: f64,
    grid: &RadialGrid,
    a: f64,
    record: Option<&mut Vec<f64>>,
) -> Shot {
    let dm = model.dim() as f64;
    let rhs = |r: f64, phi: f64, psi: f64| -> (f64, f64) {
        let force = c * phi - model.nonlinearity(phi);
        let dpsi = if r < 1e-12 { force / dm } else { force - (dm - 1.0) / r * psi };
        (psi, dpsi)
    };
    let substeps = 4usize;
    let dt = grid.h / substeps as f64;
    let mut phi = a;
    let mut psi = 0.0;
    let mut rec = record;
    if let Some(rec) = rec.as_deref_mut() {
        rec.clear();
        rec.push(phi);
    }
    let mut r = 0.0;
    for _ in 1..=grid.n {
        for _ in 0..substeps {
            // classic RK4
            let (k1p, k1s) = rhs(r, phi, psi);
            let (k2p, k2s) = rhs(r + 0.5 * dt, phi + 0.5 * dt * k1p, psi + 0.5 * dt * k1s);
            let (k3p, k3s) = rhs(r + 0.5 * dt, phi + 0.5 * dt * k2p, psi + 0.5 * dt * k2s);
            let (k4p, k4s) = rhs(r + dt, phi + dt * k3p, psi + dt * k3s);
            phi += dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            psi += dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            r += dt;
            if phi <= 0.0 {
                if let Some(rec) = rec.as_deref_mut() {
                    while rec.len() <= grid.n {
                        rec.push(0.0);
                    }
                }
                return Shot::Over;
            }
            if psi > 1e-12 * a {
                if let Some(rec) = rec.as_deref_mut() {
                    // decay the tail artificially so the Newton guess is sane
                    let kappa = c.max(1e-6).sqrt();
                    let mut tail = phi;
                    while rec.len() <= grid.n {
                        tail *= (-kappa * grid.h).exp();
                        rec.push(tail);
                    }
                }
                return Shot::Under;
            }
        }
        if let Some(rec) = rec.as_deref_mut() {
            rec.push(phi);
        }
    }
    // reached R still positive and decaying: treat as undershoot
    Shot::Under
}

/// Newton iteration on the collocation system -Δ_h φ + cφ - N(φ) = 0,
/// Dirichlet at R. Returns (φ over all nodes, sup residual).
fn newton_refine(
    model: &ModelSpec,
    c: f64,
    grid: &RadialGrid,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)> {
    let m = grid.n;
    let stiffness = WeightedOp::assemble(grid, &vec![0.0; grid.len()]);
    let w = grid.weights();
    let mut phi: Vec<f64> = guess[..m].to_vec();
    let nodal_residual = |phi: &[f64]| -> Vec<f64> {
        let k = stiffness.apply(phi);
        (0..m)
            .map(|i| k[i] / w[i] + c * phi[i] - model.nonlinearity(phi[i]))
            .collect()
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut res = nodal_residual(&phi);
    let mut best = sup(&res);
    for _ in 0..max_iter {
        if best < tol {
            break;
        }
        // Jacobian: -Δ + (c - N'(φ)); rhs in form coordinates
        let v: Vec<f64> = (0..=m)
            .map(|i| c - model.nonlinearity_prime(*phi.get(i).unwrap_or(&0.0)))
            .collect();
        let jac = WeightedOp::assemble(grid, &v);
        let rhs: Vec<f64> = (0..m).map(|i| -res[i] * w[i]).collect();
        let delta = jac.solve_shifted(0.0, &rhs)?;
        // damped update
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + step * d).collect();
            let tres = nodal_residual(&trial);
            let tsup = sup(&tres);
            if tsup < best || step < 1.0 / 64.0 {
                phi = trial;
                res = tres;
                best = tsup;
                break;
            }
            step *= 0.5;
        }
    }
    if best >= tol {
        return Err(Error::NonConvergence {
            what: "profile Newton",
            detail: format!("residual {best:.3e} > tol {tol:.3e}"),
        });
    }
    let mut full = phi;
    full.push(0.0);
    Ok((full, best))
}

/// Solve the stationary profile at frequency `omega` by shooting followed
/// by collocation-Newton refinement.
pub fn solve_profile(
    model: ModelSpec,
    omega: f64,
    grid: Arc<RadialGrid>,
    tol: f64,
) -> Result<Profile> {
    model.validate().map_err(|e| Error::invalid(format!("{e}")))?;
    if !model.omega_admissible(omega) {
        return Err(Error::invalid(format!("omega {omega} outside existence range of {model}")));
    }
    let c = model.linear_coeff(omega);
    let guess = shooting_guess(&model, c, &grid)?;
    let (phi, residual) = newton_refine(&model, c, &grid, &guess, tol, 60)?;
    if phi[..grid.n].iter().any(|&p| p < 0.0) {
        return Err(Error::NonConvergence {
            what: "profile Newton",
            detail: "refined profile lost positivity".into(),
        });
    }
    Ok(Profile { model, omega, grid, phi, residual, dphi_domega: None })
}

/// Bracket the ground-state amplitude by a multiplicative scan, bisect to
/// 1e-12 relative, and return the recorded shot as a Newton guess.
fn shooting_guess(model: &ModelSpec, c: f64, grid: &RadialGrid) -> Result<Vec<f64>> {
    const A_MAX: f64 = 1e3;
    let mut a_under: Option<f64> = None;
    let mut bracket: Option<(f64, f64)> = None;
    let mut a = 1e-3;
    while a <= A_MAX {
        match shoot(model, c, grid, a, None) {
            Shot::Under => a_under = Some(a),
            Shot::Over => {
                if let Some(lo) = a_under {
                    bracket = Some((lo, a));
                }
                break;
            }
        }
        a *= 1.3;
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| Error::NoGroundState {
        omega: f64::NAN,
        detail: format!("no shooting bracket in amplitude (0, {A_MAX}) for {model}"),
    })?;
    while (hi - lo) / hi > 1e-12 {
        let mid = 0.5 * (lo + hi);
        match shoot(model, c, grid, mid, None) {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
        }
    }
    let mut rec = Vec::with_capacity(grid.len());
    let _ = shoot(model, c, grid, 0.5 * (lo + hi), Some(&mut rec));
    Ok(rec)
}

/// The explicit NLKG solution in one dimension:
/// φ_ω(x) = (c(p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1)√c x / 2), c = 1-ω².
pub fn closed_form_profile_1d(
    model: ModelSpec,
    omega: f64,
    grid: Arc<RadialGrid>,
) -> Result<Profile> {
    let p = match model {
        ModelSpec::Nlkg { p, dim: 1 } => p,
        _ => return Err(Error::invalid("closed form requires NLKG with dim = 1")),
    };
    if omega * omega >= 1.0 {
        return Err(Error::invalid("NLKG requires omega² < 1"));
    }
    let c = 1.0 - omega * omega;
    let amp = (c * (p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
    let rate = (p - 1.0) * c.sqrt() / 2.0;
    let expo = 2.0 / (p - 1.0);
    let phi: Vec<f64> = grid.nodes().map(|x| amp * (1.0 / (rate * x).cosh()).powf(expo)).collect();
    // measure the discrete residual of the sampled closed form
    let stiffness = WeightedOp::assemble(&grid, &vec![0.0; grid.len()]);
    let k = stiffness.apply(&phi[..grid.n]);
    let residual = (0..grid.n)
        .map(|i| (k[i] / grid.weights()[i] + c * phi[i] - model.nonlinearity(phi[i])).abs())
        .fold(0.0f64, f64::max);
    Ok(Profile { model, omega, grid, phi, residual, dphi_domega: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    /// Central finite difference over ω.
    Fd,
    /// Solve the linearized equation L₊ ∂_ωφ = 2ωφ (NLKG) / -φ (DPNLS).
    LinearSolve,
}

/// Caching profile solver. Repeated solves at nearby frequencies are
/// seeded from the cache, which keeps the modulation and d-curve sweeps
/// cheap. Deterministic: the result never depends on cache state beyond
/// Newton round-off at the shared tolerance.
pub struct ProfileSolver {
    pub model: ModelSpec,
    pub grid: Arc<RadialGrid>,
    pub tol: f64,
    cache: RefCell<BTreeMap<u64, Arc<Profile>>>,
}

impl ProfileSolver {
    pub fn new(model: ModelSpec, grid: Arc<RadialGrid>, tol: f64) -> Self {
        ProfileSolver { model, grid, tol, cache: RefCell::new(BTreeMap::new()) }
    }

    pub fn solve(&self, omega: f64) -> Result<Arc<Profile>> {
        if !self.model.omega_admissible(omega) {
            return Err(Error::invalid(format!(
                "omega {omega} outside existence range of {}",
                self.model
            )));
        }
        let key = omega.to_bits();
        if let Some(p) = self.cache.borrow().get(&key) {
            return Ok(p.clone());
        }
        let prof = match self.nearest(omega) {
            Some(seed) if (seed.omega - omega).abs() <= 0.05 => {
                let c = self.model.linear_coeff(omega);
                match newton_refine(&self.model, c, &self.grid, &seed.phi, self.tol, 40) {
                    Ok((phi, residual)) if phi[..self.grid.n].iter().all(|&p| p >= 0.0) => {
                        Profile {
                            model: self.model,
                            omega,
                            grid: self.grid.clone(),
                            phi,
                            residual,
                            dphi_domega: None,
                        }
                    }
                    _ => solve_profile(self.model, omega, self.grid.clone(), self.tol)?,
                }
            }
            _ => solve_profile(self.model, omega, self.grid.clone(), self.tol)?,
        };
        let prof = Arc::new(prof);
        let mut cache = self.cache.borrow_mut();
        // bound the memory of long modulation runs; a cold cache only costs
        // a few warm Newton restarts
        if cache.len() >= 4096 {
            cache.clear();
        }
        cache.insert(key, prof.clone());
        Ok(prof)
    }

    fn nearest(&self, omega: f64) -> Option<Arc<Profile>> {
        let cache = self.cache.borrow();
        let key = omega.to_bits();
        let below = cache.range(..key).next_back().map(|(_, p)| p.clone());
        let above = cache.range(key..).next().map(|(_, p)| p.clone());
        match (below, above) {
            (Some(a), Some(b)) => {
                if (a.omega - omega).abs() <= (b.omega - omega).abs() {
                    Some(a)
                } else {
                    Some(b)
                }
            }
            (x, y) => x.or(y),
        }
    }

    /// Step used for ω-finite-differences, shrinking near the edge of the
    /// existence range.
    pub fn omega_step(&self, omega: f64) -> f64 {
        match self.model {
            ModelSpec::Nlkg { .. } => (1e-3f64).min(0.1 * (1.0 - omega.abs())).max(1e-5),
            ModelSpec::Dpnls { .. } => (1e-3f64).min(0.1 * omega).max(1e-5),
        }
    }

    /// ∂φ/∂ω with respect to the profile frequency.
    pub fn omega_derivative(&self, prof: &Profile, method: DerivativeMethod) -> Result<Vec<f64>> {
        match method {
            DerivativeMethod::Fd => {
                let h = self.omega_step(prof.omega);
                let hi = self.solve(prof.omega + h)?;
                let lo = self.solve(prof.omega - h)?;
                Ok(hi
                    .phi
                    .iter()
                    .zip(&lo.phi)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect())
            }
            DerivativeMethod::LinearSolve => {
                let c = self.model.linear_coeff(prof.omega);
                let v: Vec<f64> = prof
                    .phi
                    .iter()
                    .map(|&p| c - self.model.nonlinearity_prime(p))
                    .collect();
                let lplus = WeightedOp::assemble(&self.grid, &v);
                // L₊ ∂_ωφ = -(dc/dω) φ
                let dc = match self.model {
                    ModelSpec::Nlkg { .. } => -2.0 * prof.omega,
                    ModelSpec::Dpnls { .. } => 1.0,
                };
                let rhs: Vec<f64> = (0..self.grid.n)
                    .map(|i| -dc * prof.phi[i] * self.grid.weights()[i])
                    .collect();
                let mut sol = lplus.solve_shifted(0.0, &rhs)?;
                // guard: if L₊ is near-singular in this sector the solve blows up
                let scale = prof.phi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let mag = sol.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if !mag.is_finite() || mag > 1e8 * scale.max(1.0) {
                    return Err(Error::SingularSystem("L+ in omega-derivative"));
                }
                sol.push(0.0);
                Ok(sol)
            }
        }
    }

    /// Solve and attach ∂φ/∂ω by the linear solve (falling back to finite
    /// differences if L₊ is singular).
    pub fn solve_with_derivative(&self, omega: f64) -> Result<Profile> {
        let prof = self.solve(omega)?;
        let d = self
            .omega_derivative(&prof, DerivativeMethod::LinearSolve)
            .or_else(|_| self.omega_derivative(&prof, DerivativeMethod::Fd))?;
        let mut out = (*prof).clone();
        out.dphi_domega = Some(d);
        Ok(out)
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ProfileCheck {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ProfileReport {
    pub checks: Vec<ProfileCheck>,
}

impl ProfileReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Check the Profile invariants: interior positivity, monotone decay,
/// decay below 1e-8·φ(0) at R, residual below tolerance, frequency range.
pub fn validate_profile(prof: &Profile, tol: f64) -> ProfileReport {
    let n = prof.grid.n;
    let interior = &prof.phi[..n];
    let min_interior = interior.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_increase = 0.0f64;
    for i in 1..n {
        max_increase = max_increase.max(prof.phi[i] - prof.phi[i - 1]);
    }
    let tail = prof.phi[n - 1].abs() / prof.peak().max(1e-300);
    let omega_ok = prof.model.omega_admissible(prof.omega);
    ProfileReport {
        checks: vec![
            ProfileCheck { name: "positivity", pass: min_interior > 0.0, value: min_interior },
            ProfileCheck {
                name: "monotone-decay",
                pass: max_increase <= 1e-12 * prof.peak(),
                value: max_increase,
            },
            ProfileCheck { name: "tail-decay", pass: tail < 1e-8, value: tail },
            ProfileCheck { name: "residual", pass: prof.residual < tol, value: prof.residual },
            ProfileCheck {
                name: "frequency-range",
                pass: omega_ok,
                value: prof.omega,
            },
        ],
    }
}
