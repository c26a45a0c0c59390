//! The two PDE instances and their sign conventions.
//!
//! # Conventions
//!
//! Both models are Hamiltonian systems du/dt = J E'(u) invariant under the
//! phase group T(s) = e^{is}.
//!
//! **NLKG** (single power, radial in ℝᵈ): u_tt - Δu + u - |u|^{p-1}u = 0,
//! written on pairs U = (u, v) with v = u_t. Here J(a, b) = (b, -a),
//! T'(0) = i, B = J⁻¹T'(0): (u, v) ↦ (-iv, iu), Q(U) = Im ∫ ū v. The bound
//! state at frequency ω is U = e^{iωt}(φ_ω, iωφ_ω) with
//! -Δφ + (1-ω²)φ - φᵖ = 0, so the group frequency equals the physical
//! frequency.
//!
//! **DPNLS** (double power, even line): the scalar field with J = i,
//! T'(0) = i, B = J⁻¹T'(0) = id, Q(u) = ½ ∫ |u|². The evolution equation
//! of this Hamiltonian triple is iu_t = u_xx + (a₁|u|^{p₁-1} + a₂|u|^{p₂-1})u,
//! the complex conjugate of the usual NLS orientation. Its standing wave
//! T(ω_g t)φ exists for *negative* group frequency ω_g; the profile solves
//! -φ'' + ωφ - a₁φ^{p₁} - a₂φ^{p₂} = 0 with ω = -ω_g > 0. All public APIs
//! take the positive profile frequency ω; quantities tied to the group
//! parameter (d-derivatives, λ offsets of the Ψ curve) are computed in the
//! group variable, related to ω by the sign [`ModelSpec::group_sign`].
//! This is the single place where the ω-orientation is fixed.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Nlkg { p: f64, dim: u32 },
    Dpnls { a1: f64, p1: f64, a2: f64, p2: f64 },
}

impl ModelSpec {
    pub fn nlkg(p: f64, dim: u32) -> Self {
        ModelSpec::Nlkg { p, dim }
    }

    pub fn dpnls(a1: f64, p1: f64, a2: f64, p2: f64) -> Self {
        ModelSpec::Dpnls { a1, p1, a2, p2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Nlkg { p, dim } => {
                if dim == 0 {
                    return Err(Error::invalid("NLKG requires dim >= 1"));
                }
                if p <= 1.0 {
                    return Err(Error::invalid("NLKG requires p > 1"));
                }
                if dim >= 3 && p >= 1.0 + 4.0 / (dim as f64 - 2.0) {
                    return Err(Error::invalid(format!(
                        "NLKG in dim {dim} requires p < 1 + 4/(dim-2)"
                    )));
                }
                Ok(())
            }
            ModelSpec::Dpnls { p1, p2, .. } => {
                if !(1.0 < p1 && p1 < p2) {
                    return Err(Error::invalid("DPNLS requires 1 < p1 < p2"));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> u32 {
        match *self {
            ModelSpec::Nlkg { dim, .. } => dim,
            ModelSpec::Dpnls { .. } => 1,
        }
    }

    pub fn is_nlkg(&self) -> bool {
        matches!(self, ModelSpec::Nlkg { .. })
    }

    /// dω_group/dω for the positive profile frequency ω: +1 for NLKG,
    /// -1 for DPNLS (see module docs).
    pub fn group_sign(&self) -> f64 {
        match self {
            ModelSpec::Nlkg { .. } => 1.0,
            ModelSpec::Dpnls { .. } => -1.0,
        }
    }

    /// Profile frequency of the group-frequency neighbor g₀ + λ of the
    /// profile at ω₀ (λ in the group variable).
    pub fn profile_at_group_offset(&self, omega0: f64, lambda: f64) -> f64 {
        omega0 + self.group_sign() * lambda
    }

    /// Is ω inside the a-priori existence range? For DPNLS this is only a
    /// necessary condition; existence is confirmed by the shooting solver.
    pub fn omega_admissible(&self, omega: f64) -> bool {
        match self {
            ModelSpec::Nlkg { .. } => omega * omega < 1.0,
            ModelSpec::Dpnls { .. } => omega > 0.0,
        }
    }

    /// Coefficient of the linear term in the stationary equation
    /// -Δφ + c φ - N(φ) = 0; also the exponential decay rate squared.
    pub fn linear_coeff(&self, omega: f64) -> f64 {
        match self {
            ModelSpec::Nlkg { .. } => 1.0 - omega * omega,
            ModelSpec::Dpnls { .. } => omega,
        }
    }

    pub fn decay_rate(&self, omega: f64) -> f64 {
        self.linear_coeff(omega).max(0.0).sqrt()
    }

    /// Nonlinear term N(φ) of the stationary equation, φ ≥ 0.
    pub fn nonlinearity(&self, phi: f64) -> f64 {
        match *self {
            ModelSpec::Nlkg { p, .. } => phi.abs().powf(p) * phi.signum(),
            ModelSpec::Dpnls { a1, p1, a2, p2 } => {
                let a = phi.abs();
                (a1 * a.powf(p1) + a2 * a.powf(p2)) * phi.signum()
            }
        }
    }

    /// N'(φ), the potential entering L₊.
    pub fn nonlinearity_prime(&self, phi: f64) -> f64 {
        let a = phi.abs();
        match *self {
            ModelSpec::Nlkg { p, .. } => p * a.powf(p - 1.0),
            ModelSpec::Dpnls { a1, p1, a2, p2 } => {
                a1 * p1 * a.powf(p1 - 1.0) + a2 * p2 * a.powf(p2 - 1.0)
            }
        }
    }

    /// N(φ)/φ, the potential entering L₋ (phase direction).
    pub fn nonlinearity_over_phi(&self, phi: f64) -> f64 {
        let a = phi.abs();
        match *self {
            ModelSpec::Nlkg { p, .. } => a.powf(p - 1.0),
            ModelSpec::Dpnls { a1, p1, a2, p2 } => {
                a1 * a.powf(p1 - 1.0) + a2 * a.powf(p2 - 1.0)
            }
        }
    }

    /// Primitive F(φ) = ∫₀^φ N, the potential energy density.
    pub fn nonlinearity_primitive(&self, phi: f64) -> f64 {
        let a = phi.abs();
        match *self {
            ModelSpec::Nlkg { p, .. } => a.powf(p + 1.0) / (p + 1.0),
            ModelSpec::Dpnls { a1, p1, a2, p2 } => {
                a1 * a.powf(p1 + 1.0) / (p1 + 1.0) + a2 * a.powf(p2 + 1.0) / (p2 + 1.0)
            }
        }
    }

    /// Amplitude-dependent phase-rotation rate g(|u|) = N(|u|)/|u| used by
    /// the nonlinear substeps of the integrators.
    pub fn rotation_rate(&self, amp: f64) -> f64 {
        if amp == 0.0 {
            0.0
        } else {
            self.nonlinearity_over_phi(amp)
        }
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            ModelSpec::Nlkg { p, dim } => write!(f, "nlkg(p={p}, dim={dim})"),
            ModelSpec::Dpnls { a1, p1, a2, p2 } => {
                write!(f, "dpnls(a1={a1}, p1={p1}, a2={a2}, p2={p2})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nlkg_exponent_constraints() {
        assert!(ModelSpec::nlkg(3.0, 1).validate().is_ok());
        assert!(ModelSpec::nlkg(3.0, 3).validate().is_ok());
        assert!(ModelSpec::nlkg(5.0, 3).validate().is_err());
        assert!(ModelSpec::nlkg(0.5, 1).validate().is_err());
        assert!(ModelSpec::nlkg(3.0, 0).validate().is_err());
    }

    #[test]
    fn dpnls_exponent_ordering() {
        assert!(ModelSpec::dpnls(1.0, 3.0, 1.0, 7.0).validate().is_ok());
        assert!(ModelSpec::dpnls(1.0, 7.0, 1.0, 3.0).validate().is_err());
        assert!(ModelSpec::dpnls(1.0, 1.0, 1.0, 3.0).validate().is_err());
    }

    #[test]
    fn nonlinearity_derivative_consistency() {
        let m = ModelSpec::dpnls(-1.0, 3.0, 1.0, 5.0);
        let h = 1e-6;
        for phi in [0.3, 0.9, 1.4] {
            let fd = (m.nonlinearity(phi + h) - m.nonlinearity(phi - h)) / (2.0 * h);
            assert!((fd - m.nonlinearity_prime(phi)).abs() < 1e-6);
            let fdprim = (m.nonlinearity_primitive(phi + h)
                - m.nonlinearity_primitive(phi - h))
                / (2.0 * h);
            assert!((fdprim - m.nonlinearity(phi)).abs() < 1e-6);
        }
    }
}
