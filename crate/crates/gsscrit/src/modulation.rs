//! The Lemma 3.3 decomposition T(θ)u = Ψ(Λ) + w + αBφ_{ω+Λ}, the
//! Lyapunov functionals A and P, and the orbital distance.
//!
//! Every λ/Λ offset and every ∂_ω derivative here is taken in the group
//! frequency variable (see [`crate::model`]).

use crate::dcurve::build_psi;
use crate::error::{Error, Result};
use crate::functionals::action_gradient;
use crate::model::ModelSpec;
use crate::profile::{DerivativeMethod, ProfileSolver};
use crate::state::{State, Symmetry, C64};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct ModulationCoords {
    pub theta: f64,
    /// Λ: frequency shift in the group variable.
    pub lambda: f64,
    pub alpha: f64,
    pub w: State,
    /// ⟨w, T'(0)φ_Λ⟩, ⟨w, ∂_ωφ_Λ⟩, ⟨w, Bφ_Λ⟩.
    pub ortho_residuals: [f64; 3],
}

/// Bound state Φ at group offset Λ from ω₀ together with the derived
/// directions appearing in G, its Jacobian, and Eq. (3.8).
pub(crate) struct Frame {
    pub phi: State,
    /// T'(0)Φ
    pub tphi: State,
    /// ∂_ωΦ (group variable)
    pub dphi: State,
    /// ∂²_ωΦ
    pub d2phi: State,
    /// BΦ
    pub bphi: State,
    /// Ψ(Λ)
    pub psi: State,
    /// ∂_ΛΨ(Λ)
    pub dpsi: State,
}

/// The bound state as a State at profile frequency ω.
fn bound_state(solver: &ProfileSolver, omega: f64) -> Result<State> {
    Ok(solver.solve(omega)?.state())
}

/// ∂Φ/∂g, the group-frequency derivative of the full bound state.
fn bound_state_dg(solver: &ProfileSolver, omega: f64) -> Result<State> {
    let prof = solver.solve(omega)?;
    let dphi = solver
        .omega_derivative(&prof, DerivativeMethod::LinearSolve)
        .or_else(|_| solver.omega_derivative(&prof, DerivativeMethod::Fd))?;
    let s = solver.model.group_sign();
    match solver.model {
        ModelSpec::Nlkg { .. } => {
            // Φ = (φ, iωφ): ∂_ωΦ = (∂φ, i(φ + ω∂φ)); group = profile
            let u: Vec<C64> = dphi.iter().map(|&d| C64::new(d, 0.0)).collect();
            let v: Vec<C64> = prof
                .phi
                .iter()
                .zip(&dphi)
                .map(|(&p, &d)| C64::new(0.0, p + omega * d))
                .collect();
            Ok(State::pair(solver.model, solver.grid.clone(), u, v))
        }
        ModelSpec::Dpnls { .. } => {
            let u: Vec<C64> = dphi.iter().map(|&d| C64::new(s * d, 0.0)).collect();
            Ok(State::single(solver.model, solver.grid.clone(), u))
        }
    }
}

/// ∂²Φ/∂g² by central differences over ω (the second derivative is even
/// in the group sign). Step 1e-2 · (distance to the existence boundary).
fn bound_state_d2g(solver: &ProfileSolver, omega: f64) -> Result<State> {
    let h = match solver.model {
        ModelSpec::Nlkg { .. } => 1e-2 * (1.0 - omega.abs()).max(1e-3),
        ModelSpec::Dpnls { .. } => 1e-2 * omega.max(1e-3),
    };
    let hi = bound_state(solver, omega + h)?;
    let lo = bound_state(solver, omega - h)?;
    let mid = bound_state(solver, omega)?;
    Ok(hi.add(&lo).axpy(-2.0, &mid).scaled(C64::new(1.0 / (h * h), 0.0)))
}

pub(crate) fn frame(solver: &ProfileSolver, omega0: f64, lambda: f64) -> Result<Frame> {
    let om = solver.model.profile_at_group_offset(omega0, lambda);
    let phi = bound_state(solver, om)?;
    let tphi = phi.apply_symmetry(Symmetry::Generator);
    let dphi = bound_state_dg(solver, om)?;
    let d2phi = bound_state_d2g(solver, om)?;
    let bphi = phi.apply_symmetry(Symmetry::B);
    let psi = build_psi(solver, omega0, lambda)?;
    let dl = 1e-3;
    let psi_hi = build_psi(solver, omega0, lambda + dl)?;
    let psi_lo = build_psi(solver, omega0, lambda - dl)?;
    let dpsi = psi_hi.sub(&psi_lo).scaled(C64::new(1.0 / (2.0 * dl), 0.0));
    Ok(Frame { phi, tphi, dphi, d2phi, bphi, psi, dpsi })
}

/// Solve G(u, θ, Λ) = 0 (Lemma 3.3) by 2D Newton with the paper's
/// Jacobian, then read off α and w from the closed-form projections.
///
/// `guess`: (θ, Λ) from the previous time step; pass None for a cold
/// start, which scans 32 phases for θ.
pub fn solve_modulation(
    solver: &ProfileSolver,
    u: &State,
    omega0: f64,
    guess: Option<(f64, f64)>,
) -> Result<ModulationCoords> {
    u.check_finite()?;
    let (mut theta, mut lambda) = match guess {
        Some(g) => g,
        None => (cold_theta(solver, u, omega0)?, 0.0),
    };
    let scale = bound_state(solver, omega0)?.norm_h_sqr();
    let tol = 1e-10 * scale;
    let mut converged = false;
    for _ in 0..50 {
        let fr = frame(solver, omega0, lambda).map_err(|_| Error::OutOfTube)?;
        let m = u.apply_symmetry(Symmetry::Rotate(theta));
        let diff = m.sub(&fr.psi);
        let g1 = diff.inner_h(&fr.tphi);
        let g2 = diff.inner_h(&fr.dphi);
        if (g1 * g1 + g2 * g2).sqrt() < tol {
            converged = true;
            break;
        }
        let tm = m.apply_symmetry(Symmetry::Generator);
        let j11 = tm.inner_h(&fr.tphi);
        let j12 = -fr.dpsi.inner_h(&fr.tphi) + diff.inner_h(&fr.dphi.apply_symmetry(Symmetry::Generator));
        let j21 = tm.inner_h(&fr.dphi);
        let j22 = -fr.dpsi.inner_h(&fr.dphi) + diff.inner_h(&fr.d2phi);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 * scale * scale {
            return Err(Error::OutOfTube);
        }
        let dtheta = -(j22 * g1 - j12 * g2) / det;
        let dlambda = -(-j21 * g1 + j11 * g2) / det;
        // a large step means u has left the basin
        if !(dtheta.is_finite() && dlambda.is_finite()) || dlambda.abs() > 0.5 {
            return Err(Error::OutOfTube);
        }
        theta += dtheta;
        lambda += dlambda;
        if !solver
            .model
            .omega_admissible(solver.model.profile_at_group_offset(omega0, lambda))
        {
            return Err(Error::OutOfTube);
        }
    }
    if !converged {
        return Err(Error::OutOfTube);
    }
    let fr = frame(solver, omega0, lambda).map_err(|_| Error::OutOfTube)?;
    let m = u.apply_symmetry(Symmetry::Rotate(theta));
    let diff = m.sub(&fr.psi);
    // Newton can land on a formal critical point even when u is nowhere
    // near the orbit; the decomposition is only meaningful inside the tube
    if diff.norm_h_sqr() > fr.phi.norm_h_sqr() {
        return Err(Error::OutOfTube);
    }
    let alpha = diff.inner_h(&fr.bphi) / fr.bphi.norm_h_sqr();
    let w = diff.axpy(-alpha, &fr.bphi);
    let ortho_residuals = [w.inner_h(&fr.tphi), w.inner_h(&fr.dphi), w.inner_h(&fr.bphi)];
    Ok(ModulationCoords { theta, lambda, alpha, w, ortho_residuals })
}

/// Coarse phase scan for the cold-start θ guess.
fn cold_theta(solver: &ProfileSolver, u: &State, omega0: f64) -> Result<f64> {
    let phi = bound_state(solver, omega0)?;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..32 {
        let s = k as f64 * std::f64::consts::TAU / 32.0;
        let d = u.apply_symmetry(Symmetry::Rotate(s)).sub(&phi).norm_h_sqr();
        if d < best.0 {
            best = (d, s);
        }
    }
    Ok(best.1)
}

/// A(u) = ⟨M(u), J⁻¹∂_ωφ_{ω+Λ}⟩ with M(u) = T(θ(u))u.
pub fn functional_a(
    solver: &ProfileSolver,
    u: &State,
    omega0: f64,
    coords: &ModulationCoords,
) -> Result<f64> {
    let fr = frame(solver, omega0, coords.lambda)?;
    Ok(a_from_frame(u, coords, &fr))
}

fn a_from_frame(u: &State, coords: &ModulationCoords, fr: &Frame) -> f64 {
    let m = u.apply_symmetry(Symmetry::Rotate(coords.theta));
    m.inner_h(&fr.dphi.apply_symmetry(Symmetry::JInv))
}

/// P(u) = ⟨S'_{ω+Λ}(u), JA'(u)⟩, with A'(u) assembled from the three
/// terms of Eq. (3.8) and (θ', Λ') from the 2×2 system of Eq. (3.7).
pub fn functional_p(
    solver: &ProfileSolver,
    u: &State,
    omega0: f64,
    coords: &ModulationCoords,
) -> Result<f64> {
    let fr = frame(solver, omega0, coords.lambda)?;
    p_from_frame(solver, u, omega0, coords, &fr)
}

/// The decomposition and both Lyapunov functionals with a single frame
/// construction; this is what the trajectory monitors call per step.
pub fn modulation_with_functionals(
    solver: &ProfileSolver,
    u: &State,
    omega0: f64,
    guess: Option<(f64, f64)>,
) -> Result<(ModulationCoords, f64, f64)> {
    let coords = solve_modulation(solver, u, omega0, guess)?;
    let fr = frame(solver, omega0, coords.lambda)?;
    let a = a_from_frame(u, &coords, &fr);
    let p = p_from_frame(solver, u, omega0, &coords, &fr)?;
    Ok((coords, a, p))
}

fn p_from_frame(
    solver: &ProfileSolver,
    u: &State,
    omega0: f64,
    coords: &ModulationCoords,
    fr: &Frame,
) -> Result<f64> {
    let m = u.apply_symmetry(Symmetry::Rotate(coords.theta));
    let diff = m.sub(&fr.psi);
    // H(u): the Jacobian of G at the solution
    let tm = m.apply_symmetry(Symmetry::Generator);
    let j11 = tm.inner_h(&fr.tphi);
    let j12 = -fr.dpsi.inner_h(&fr.tphi) + diff.inner_h(&fr.dphi.apply_symmetry(Symmetry::Generator));
    let j21 = tm.inner_h(&fr.dphi);
    let j22 = -fr.dpsi.inner_h(&fr.dphi) + diff.inner_h(&fr.d2phi);
    let det = j11 * j22 - j12 * j21;
    if det.abs() < 1e-300 {
        return Err(Error::OutOfTube);
    }
    // Eq. (3.7): H (θ'; Λ') = -(T(-θ)T'(0)φ_Λ; T(-θ)∂_ωφ_Λ)
    let v1 = fr.tphi.apply_symmetry(Symmetry::Rotate(-coords.theta));
    let v2 = fr.dphi.apply_symmetry(Symmetry::Rotate(-coords.theta));
    // inverse of H applied to -(v1; v2), as states
    let theta_p = v1.scaled(C64::new(-j22 / det, 0.0)).axpy(j12 / det, &v2);
    let lambda_p = v1.scaled(C64::new(j21 / det, 0.0)).axpy(-j11 / det, &v2);
    // Eq. (3.8)
    let k_theta = tm.inner_h(&fr.dphi.apply_symmetry(Symmetry::JInv));
    let k_lambda = m.inner_h(&fr.d2phi.apply_symmetry(Symmetry::JInv));
    let a_prime = fr
        .dphi
        .apply_symmetry(Symmetry::Rotate(-coords.theta))
        .apply_symmetry(Symmetry::JInv)
        .axpy(k_theta, &theta_p)
        .axpy(k_lambda, &lambda_p);
    let g = solver.model.group_sign() * omega0 + coords.lambda;
    let s_grad = action_gradient(u, g);
    Ok(s_grad.inner_h(&a_prime.apply_symmetry(Symmetry::J)))
}

/// inf over s of ‖u - T(s)Φ_ω‖_X: 64-point scan refined by golden
/// section.
pub fn orbital_distance(u: &State, phi: &State) -> f64 {
    let f = |s: f64| u.sub(&phi.apply_symmetry(Symmetry::Rotate(s))).norm_x();
    let n = 64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..n {
        let s = k as f64 * std::f64::consts::TAU / n as f64;
        let d = f(s);
        if d < best.0 {
            best = (d, s);
        }
    }
    // golden section on the bracketing interval
    let span = std::f64::consts::TAU / n as f64;
    let (mut a, mut b) = (best.1 - span, best.1 + span);
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..60 {
        if b - a < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd).min(best.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct JOrthogonalitySample {
    pub omega: f64,
    /// ⟨φ_ω, J⁻¹∂²_ωφ_ω⟩ / (‖φ_ω‖ ‖∂²_ωφ_ω‖)
    pub normalized_pairing: f64,
}

/// Theorem 2.12's technical hypothesis ⟨φ_ω, J⁻¹∂²_ωφ_ω⟩ = 0, checked
/// numerically across a frequency range (Remark 2.13 asserts it for real
/// standing waves).
pub fn check_j_orthogonality(
    solver: &ProfileSolver,
    omegas: &[f64],
) -> Result<Vec<JOrthogonalitySample>> {
    omegas
        .iter()
        .map(|&om| {
            let phi = bound_state(solver, om)?;
            let d2 = bound_state_d2g(solver, om)?;
            let pairing = phi.inner_h(&d2.apply_symmetry(Symmetry::JInv));
            let norm = phi.norm_h_sqr().sqrt() * d2.norm_h_sqr().sqrt();
            Ok(JOrthogonalitySample { omega: om, normalized_pairing: pairing / norm })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcurve::eta_functions;
    use crate::grid::{Geometry, RadialGrid};
    use crate::state::random_state;
    use std::sync::Arc;

    const STAR: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn nlkg_solver() -> ProfileSolver {
        let grid = Arc::new(RadialGrid::new(1, 2048, 80.0, Geometry::EvenLine).unwrap());
        ProfileSolver::new(ModelSpec::nlkg(3.0, 1), grid, 1e-11)
    }

    #[test]
    fn psi_is_a_fixed_point() {
        let solver = nlkg_solver();
        let la = 0.04;
        let psi = build_psi(&solver, STAR, la).unwrap();
        let c = solve_modulation(&solver, &psi, STAR, None).unwrap();
        assert!(c.theta.abs() < 1e-8, "θ = {}", c.theta);
        assert!((c.lambda - la).abs() < 1e-8, "Λ = {}", c.lambda);
        assert!(c.alpha.abs() < 1e-8, "α = {}", c.alpha);
        assert!(c.w.norm_h_sqr().sqrt() < 1e-7, "‖w‖ = {}", c.w.norm_h_sqr().sqrt());
    }

    #[test]
    fn gauge_shift_moves_theta_only() {
        let solver = nlkg_solver();
        let la = 0.03;
        let psi = build_psi(&solver, STAR, la).unwrap();
        let s = 0.4;
        let c = solve_modulation(&solver, &psi.apply_symmetry(Symmetry::Rotate(s)), STAR, None)
            .unwrap();
        // θ(T(s)u) = θ(u) - s, modulo 2π
        let wrapped = (c.theta + s).rem_euclid(std::f64::consts::TAU);
        let dist = wrapped.min(std::f64::consts::TAU - wrapped);
        assert!(dist < 1e-8, "θ = {}", c.theta);
        assert!((c.lambda - la).abs() < 1e-8);
    }

    #[test]
    fn perturbed_state_reconstructs() {
        let solver = nlkg_solver();
        let phi = solver.solve(STAR).unwrap().state();
        for seed in [5u64, 17] {
            let noise = random_state(solver.model, solver.grid.clone(), seed);
            let u = phi.axpy(1e-3 / noise.norm_x(), &noise);
            let c = solve_modulation(&solver, &u, STAR, None).unwrap();
            for r in c.ortho_residuals {
                assert!(r.abs() < 1e-9, "residuals {:?}", c.ortho_residuals);
            }
            // reconstruction: T(θ)u = Ψ(Λ) + w + αBφ_Λ to round-off
            let fr = frame(&solver, STAR, c.lambda).unwrap();
            let rebuilt = fr.psi.add(&c.w).axpy(c.alpha, &fr.bphi);
            let m = u.apply_symmetry(Symmetry::Rotate(c.theta));
            let rel = m.sub(&rebuilt).norm_h_sqr().sqrt() / m.norm_h_sqr().sqrt();
            assert!(rel < 1e-12, "reconstruction {rel}");
        }
    }

    #[test]
    fn a_vanishes_on_real_bound_state() {
        let solver = nlkg_solver();
        let phi = solver.solve(STAR).unwrap().state();
        let c = solve_modulation(&solver, &phi, STAR, None).unwrap();
        let a = functional_a(&solver, &phi, STAR, &c).unwrap();
        assert!(a.abs() < 1e-8, "A = {a}");
    }

    #[test]
    fn a_and_p_gauge_invariant() {
        let solver = nlkg_solver();
        let psi = build_psi(&solver, STAR, 0.05).unwrap();
        let c0 = solve_modulation(&solver, &psi, STAR, None).unwrap();
        let a0 = functional_a(&solver, &psi, STAR, &c0).unwrap();
        let p0 = functional_p(&solver, &psi, STAR, &c0).unwrap();
        for s in [0.3, 1.7, 4.0] {
            let ts = psi.apply_symmetry(Symmetry::Rotate(s));
            let c = solve_modulation(&solver, &ts, STAR, None).unwrap();
            let a = functional_a(&solver, &ts, STAR, &c).unwrap();
            let p = functional_p(&solver, &ts, STAR, &c).unwrap();
            assert!((a - a0).abs() < 1e-8 * (1.0 + a0.abs()), "A({s}) = {a} vs {a0}");
            assert!((p - p0).abs() < 1e-8 * (1.0 + p0.abs()), "P({s}) = {p} vs {p0}");
        }
    }

    #[test]
    fn p_vanishes_on_bound_state() {
        let solver = nlkg_solver();
        let phi = solver.solve(STAR).unwrap().state();
        let c = solve_modulation(&solver, &phi, STAR, None).unwrap();
        let p = functional_p(&solver, &phi, STAR, &c).unwrap();
        assert!(p.abs() < 1e-8, "P = {p}");
    }

    #[test]
    fn p_of_psi_matches_eta2() {
        // Lemma 3.8: P(Ψ(λ)) = η₂(λ)(1 + o(1))
        let solver = nlkg_solver();
        for la in [0.02, 0.05, 0.1] {
            let psi = build_psi(&solver, STAR, la).unwrap();
            let c = solve_modulation(&solver, &psi, STAR, None).unwrap();
            let p = functional_p(&solver, &psi, STAR, &c).unwrap();
            let (_, e2) = eta_functions(&solver, STAR, la).unwrap();
            let ratio = p / e2;
            assert!((0.8..=1.2).contains(&ratio), "λ={la}: P={p}, η₂={e2}, ratio {ratio}");
        }
    }

    #[test]
    fn distance_zero_on_orbit() {
        let solver = nlkg_solver();
        let phi = solver.solve(0.5).unwrap().state();
        let u = phi.apply_symmetry(Symmetry::Rotate(1.234));
        assert!(orbital_distance(&u, &phi) < 1e-10);
    }

    #[test]
    fn distance_gauge_invariant_and_bounded_by_perturbation() {
        let solver = nlkg_solver();
        let phi = solver.solve(0.5).unwrap().state();
        let noise = random_state(solver.model, solver.grid.clone(), 3);
        let bump = noise.scaled(C64::new(1e-2 / noise.norm_x(), 0.0));
        let u = phi.add(&bump);
        let d = orbital_distance(&u, &phi);
        assert!(d > 0.0 && d <= 1.01e-2, "d = {d}");
        let d2 = orbital_distance(&u.apply_symmetry(Symmetry::Rotate(0.9)), &phi);
        assert!((d - d2).abs() < 1e-10);
    }

    #[test]
    fn j_orthogonality_real_profiles() {
        let solver = nlkg_solver();
        let report = check_j_orthogonality(&solver, &[0.3, STAR, 0.9]).unwrap();
        for s in &report {
            assert!(s.normalized_pairing.abs() < 1e-8, "ω={}: {}", s.omega, s.normalized_pairing);
        }
    }

    #[test]
    fn j_orthogonality_fails_for_twisted_profile() {
        // negative control: a complex-twisted pair is not J-orthogonal
        let solver = nlkg_solver();
        let phi = solver.solve(0.5).unwrap().state();
        let grid = solver.grid.clone();
        let twist: Vec<C64> = grid
            .nodes()
            .zip(phi.first())
            .map(|(x, z)| z * C64::from_polar(1.0, 0.3 * x * x * (-x / 10.0).exp()))
            .collect();
        let twisted = State::pair(solver.model, grid.clone(), twist.clone(), twist);
        let d2 = bound_state_d2g(&solver, 0.5).unwrap();
        let pairing = twisted.inner_h(&d2.apply_symmetry(Symmetry::JInv));
        let norm = twisted.norm_h_sqr().sqrt() * d2.norm_h_sqr().sqrt();
        assert!((pairing / norm).abs() > 1e-4, "{}", pairing / norm);
    }

    #[test]
    fn far_state_is_out_of_tube() {
        let solver = nlkg_solver();
        let noise = random_state(solver.model, solver.grid.clone(), 77);
        let far = noise.scaled(C64::new(10.0 / noise.norm_x(), 0.0));
        match solve_modulation(&solver, &far, STAR, None) {
            Err(Error::OutOfTube) => {}
            other => panic!("expected OutOfTube, got {other:?}"),
        }
    }

    #[test]
    fn dpnls_modulation_roundtrip() {
        let grid = Arc::new(RadialGrid::new(1, 2048, 80.0, Geometry::EvenLine).unwrap());
        let solver = ProfileSolver::new(ModelSpec::dpnls(1.0, 3.0, 1.0, 7.0), grid, 1e-11);
        let psi = build_psi(&solver, 0.5, 0.03).unwrap();
        let c = solve_modulation(&solver, &psi, 0.5, None).unwrap();
        assert!(c.theta.abs() < 1e-8);
        assert!((c.lambda - 0.03).abs() < 1e-8);
        assert!(c.w.norm_h_sqr().sqrt() < 1e-7);
    }
}
