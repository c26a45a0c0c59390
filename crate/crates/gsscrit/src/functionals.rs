//! Conserved functionals E, Q, the action S_ω and its gradient.

use crate::error::Result;
use crate::model::ModelSpec;
use crate::state::{Fields, State, Symmetry};
use num_complex::Complex64 as C64;

/// Energy of a state.
///
/// NLKG: ½∫ |v|² + |∇u|² + |u|² - ∫ F(|u|);  DPNLS: ½∫ |u_x|² - ∫ F(|u|).
pub fn evaluate_energy(s: &State) -> Result<f64> {
    s.check_finite()?;
    let grid = &s.grid;
    Ok(match &s.fields {
        Fields::Pair { u, v } => {
            let pot: Vec<f64> = u
                .iter()
                .map(|z| 0.5 * z.norm_sqr() - s.model.nonlinearity_primitive(z.norm()))
                .collect();
            0.5 * grid.inner(v, v) + grid.dirichlet_energy(u) + grid.quad(&pot)
        }
        Fields::Single(u) => {
            let pot: Vec<f64> = u
                .iter()
                .map(|z| -s.model.nonlinearity_primitive(z.norm()))
                .collect();
            grid.dirichlet_energy(u) + grid.quad(&pot)
        }
    })
}

/// Charge Q(u) = ½⟨Bu, u⟩: Im ∫ ū v for NLKG, ½∫ |u|² for DPNLS.
pub fn evaluate_charge(s: &State) -> Result<f64> {
    s.check_finite()?;
    let grid = &s.grid;
    Ok(match &s.fields {
        Fields::Pair { u, v } => u
            .iter()
            .zip(v)
            .zip(grid.weights())
            .map(|((a, b), w)| (a.conj() * b).im * w)
            .sum(),
        Fields::Single(u) => 0.5 * grid.inner(u, u),
    })
}

/// Action S_ω(u) = E(u) - ω Q(u).
///
/// `omega_group` is the group frequency (equal to the profile frequency for
/// NLKG, its negative for DPNLS; see [`crate::model`]).
pub fn evaluate_action(s: &State, omega_group: f64) -> Result<f64> {
    Ok(evaluate_energy(s)? - omega_group * evaluate_charge(s)?)
}

/// Gradient E'(u) with respect to the weighted L² pairing.
pub fn energy_gradient(s: &State) -> State {
    let grid = &s.grid;
    match &s.fields {
        Fields::Pair { u, v } => {
            let mut lap = vec![C64::new(0.0, 0.0); u.len()];
            grid.laplacian(u, &mut lap);
            let gu: Vec<C64> = u
                .iter()
                .zip(&lap)
                .map(|(z, l)| -l + z - s.model.rotation_rate(z.norm()) * z)
                .collect();
            State::pair(s.model, s.grid.clone(), gu, v.clone())
        }
        Fields::Single(u) => {
            let mut lap = vec![C64::new(0.0, 0.0); u.len()];
            grid.laplacian(u, &mut lap);
            let gu: Vec<C64> = u
                .iter()
                .zip(&lap)
                .map(|(z, l)| -l - s.model.rotation_rate(z.norm()) * z)
                .collect();
            State::single(s.model, s.grid.clone(), gu)
        }
    }
}

/// Gradient S'_ω(u) = E'(u) - ω B u (group frequency).
pub fn action_gradient(s: &State, omega_group: f64) -> State {
    let e = energy_gradient(s);
    let bu = s.apply_symmetry(Symmetry::B);
    e.axpy(-omega_group, &bu)
}

/// Half the B-quadratic form, ½⟨Bs, s⟩; must agree with [`evaluate_charge`].
pub fn half_b_form(s: &State) -> f64 {
    0.5 * s.apply_symmetry(Symmetry::B).inner_h(s)
}

/// Q is a quadratic form; its polarization ⟨Bu, w⟩ shows up in the σ and α
/// computations.
pub fn b_pairing(u: &State, w: &State) -> f64 {
    u.apply_symmetry(Symmetry::B).inner_h(w)
}

pub fn model_of(s: &State) -> ModelSpec {
    s.model
}
