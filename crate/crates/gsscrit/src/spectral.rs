//! Linearized operators L₊, L₋ around a profile, the spectral-assumption
//! checks (negative count, kernel, gap), the S''_ω(φ)∂_ωφ = Bφ identity,
//! and the coercivity constant k₀ on the triple-orthogonal complement.
//!
//! The second variation H_ω = S''_ω(Φ_ω) acts on pairs (NLKG) or on one
//! complex field (DPNLS). On radial/even data it reduces to the two scalar
//! Schrödinger operators
//!   L₊ = -Δ + c - N'(φ),   L₋ = -Δ + c - N(φ)/φ,
//! with c the linear coefficient of the stationary equation. For NLKG the
//! velocity sector is eliminated by completing the square:
//!   ⟨H_ω Z, Z⟩ = ∫(c̃+ωb)² + (d̃-ωa)² + ⟨L₊a,a⟩ + ⟨L₋b,b⟩
//! for Z = (a+ib, c̃+id̃), so n(H_ω) = n(L₊) + n(L₋) and the kernel is
//! tracked through L₋ (the phase direction). The translation zero mode of
//! L₊ (eigenfunction φ') lives in the odd sector and is excluded by the
//! radial/even discretization.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::ModelSpec;
use crate::profile::{DerivativeMethod, Profile, ProfileSolver};
use crate::tridiag::WeightedOp;
use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct LinearizedOperators {
    pub model: ModelSpec,
    pub omega: f64,
    pub lplus: WeightedOp,
    pub lminus: WeightedOp,
}

/// Assemble L₊ and L₋ for a solved profile.
pub fn assemble_linearized(prof: &Profile) -> LinearizedOperators {
    let c = prof.model.linear_coeff(prof.omega);
    let vplus: Vec<f64> = prof.phi.iter().map(|&p| c - prof.model.nonlinearity_prime(p)).collect();
    let vminus: Vec<f64> =
        prof.phi.iter().map(|&p| c - prof.model.nonlinearity_over_phi(p)).collect();
    LinearizedOperators {
        model: prof.model,
        omega: prof.omega,
        lplus: WeightedOp::assemble(&prof.grid, &vplus),
        lminus: WeightedOp::assemble(&prof.grid, &vminus),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub omega: f64,
    /// n(H_ω) = n(L₊) + n(L₋), by Sturm counts below -1e-6.
    pub n_negative: usize,
    pub lplus_low: Vec<f64>,
    pub lminus_low: Vec<f64>,
    /// ‖L₋φ‖/‖φ‖: the phase-direction kernel candidate.
    pub kernel_residual: f64,
    /// Correlation of the L₋ ground eigenvector with φ.
    pub kernel_correlation: f64,
    /// Smallest spectral point above the kernel tolerance.
    pub gap: f64,
    pub pass_negative_count: bool,
    pub pass_kernel: bool,
    pub pass_gap: bool,
}

impl SpectralReport {
    pub fn pass(&self) -> bool {
        self.pass_negative_count && self.pass_kernel && self.pass_gap
    }
}

const KERNEL_TOL: f64 = 1e-6;

/// Verify Assumption 2.8 at a profile: exactly one negative eigenvalue
/// (from L₊; L₋ ≥ 0 in this sector), kernel spanned by the phase
/// direction, and a positive gap above it.
pub fn check_spectral_assumptions(prof: &Profile) -> Result<SpectralReport> {
    let ops = assemble_linearized(prof);
    let n_neg_p = ops.lplus.count_below(-KERNEL_TOL);
    let n_neg_m = ops.lminus.count_below(-KERNEL_TOL);
    let n_negative = n_neg_p + n_neg_m;
    let pairs_p = ops.lplus.lowest_eigenpairs(2, 1e-10)?;
    let pairs_m = ops.lminus.lowest_eigenpairs(2, 1e-10)?;
    let lplus_low: Vec<f64> = pairs_p.iter().map(|(l, _)| *l).collect();
    let lminus_low: Vec<f64> = pairs_m.iter().map(|(l, _)| *l).collect();
    // kernel candidate: L₋ applied to φ itself
    let m = prof.grid.n;
    let phi = &prof.phi[..m];
    let lm_phi = ops.lminus.apply(phi);
    let phi_norm = ops.lminus.m_inner(phi, phi).sqrt();
    let kernel_residual = lm_phi
        .iter()
        .zip(ops.lminus.weights.iter())
        .map(|(r, w)| r * r / w)
        .sum::<f64>()
        .sqrt()
        / phi_norm;
    let (_, ground_m) = &pairs_m[0];
    let kernel_correlation = ops.lminus.m_inner(ground_m, phi).abs()
        / (ops.lminus.m_inner(ground_m, ground_m).sqrt() * phi_norm);
    let gap = lplus_low
        .iter()
        .chain(&lminus_low)
        .cloned()
        .filter(|&l| l > KERNEL_TOL)
        .fold(f64::INFINITY, f64::min);
    let pass_kernel = kernel_residual < 1e-5 && lminus_low[0].abs() < KERNEL_TOL;
    Ok(SpectralReport {
        omega: prof.omega,
        n_negative,
        lplus_low,
        lminus_low,
        kernel_residual,
        kernel_correlation,
        gap,
        pass_negative_count: n_negative == 1,
        pass_kernel,
        pass_gap: gap.is_finite() && gap > KERNEL_TOL,
    })
}

/// Eq. (3.3) in the scalar reduction: relative residual of
/// L₊ ∂_ωφ = 2ωφ (NLKG) / -φ (DPNLS), with ∂_ωφ from `method`.
/// At ω = 0 (NLKG) the right side vanishes and the residual is absolute.
pub fn verify_sb_identity(
    solver: &ProfileSolver,
    prof: &Profile,
    method: DerivativeMethod,
) -> Result<f64> {
    let dphi = solver.omega_derivative(prof, method)?;
    sb_residual(prof, &dphi)
}

/// The residual computation itself, usable with externally supplied ∂_ωφ
/// (e.g. closed forms for convergence studies).
pub fn sb_residual(prof: &Profile, dphi: &[f64]) -> Result<f64> {
    let ops = assemble_linearized(prof);
    let m = prof.grid.n;
    let dc = match prof.model {
        ModelSpec::Nlkg { .. } => -2.0 * prof.omega,
        ModelSpec::Dpnls { .. } => 1.0,
    };
    let rhs: Vec<f64> = prof.phi[..m].iter().map(|&p| -dc * p).collect();
    let lhs = ops.lplus.apply(&dphi[..m]);
    let w = &ops.lplus.weights;
    let res: f64 = (0..m)
        .map(|i| {
            let r = lhs[i] / w[i] - rhs[i];
            r * r * w[i]
        })
        .sum::<f64>()
        .sqrt();
    let scale: f64 = (0..m).map(|i| rhs[i] * rhs[i] * w[i]).sum::<f64>().sqrt();
    if scale < 1e-12 {
        // ω = 0: both sides vanish; report the absolute residual
        Ok(res)
    } else {
        Ok(res / scale)
    }
}

/// Which of the three Lemma 3.9 constraints to impose:
/// ⟨w, T'(0)Φ⟩ = ⟨w, ∂_ωΦ⟩ = ⟨w, BΦ⟩ = 0.
#[derive(Debug, Clone, Copy)]
pub struct CoercivityConstraints {
    pub phase: bool,
    pub omega_derivative: bool,
    pub charge: bool,
}

impl Default for CoercivityConstraints {
    fn default() -> Self {
        CoercivityConstraints { phase: true, omega_derivative: true, charge: true }
    }
}

/// Lemma 3.9: k₀ = min ⟨H_ω w, w⟩ / ‖w‖²_X over the constrained
/// complement, by a dense projected generalized eigensolve on a coarse
/// grid (the fine grid would be needlessly expensive for one scalar).
pub fn estimate_coercivity(
    solver: &ProfileSolver,
    omega: f64,
    constraints: CoercivityConstraints,
    n_coarse: usize,
) -> Result<f64> {
    let g = &solver.grid;
    let coarse_grid = Arc::new(RadialGrid::new(g.dim, n_coarse, g.r_max, g.geometry)?);
    let coarse = ProfileSolver::new(solver.model, coarse_grid.clone(), solver.tol.max(1e-11));
    let prof = coarse.solve(omega)?;
    let dphi = coarse
        .omega_derivative(&prof, DerivativeMethod::LinearSolve)
        .or_else(|_| coarse.omega_derivative(&prof, DerivativeMethod::Fd))?;
    let ops = assemble_linearized(&prof);
    let m = coarse_grid.n;
    let w = &coarse_grid.weights()[..m];
    let h1 = h1_gram(&coarse_grid);
    let nlkg = solver.model.is_nlkg();
    let dim = if nlkg { 4 * m } else { 2 * m };
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut mm = DMatrix::<f64>::zeros(dim, dim);
    let put_tri = |mat: &mut DMatrix<f64>, op: &WeightedOp, r0: usize| {
        for i in 0..m {
            mat[(r0 + i, r0 + i)] += op.diag[i];
            if i + 1 < m {
                mat[(r0 + i, r0 + i + 1)] += op.off[i];
                mat[(r0 + i + 1, r0 + i)] += op.off[i];
            }
        }
    };
    // block order: a (real part), b (imaginary part), then for NLKG the
    // velocity parts c, d
    put_tri(&mut a, &ops.lplus, 0);
    put_tri(&mut a, &ops.lminus, m);
    for i in 0..m {
        mm[(i, i)] += h1[(i, i)];
        mm[(m + i, m + i)] += h1[(i, i)];
        for j in 0..m {
            if i != j {
                mm[(i, j)] += h1[(i, j)];
                mm[(m + i, m + j)] += h1[(i, j)];
            }
        }
    }
    if nlkg {
        let om = prof.omega;
        for i in 0..m {
            // ∫ (c̃ + ωb)² + (d̃ - ωa)²
            a[(2 * m + i, 2 * m + i)] += w[i];
            a[(3 * m + i, 3 * m + i)] += w[i];
            a[(i, i)] += om * om * w[i];
            a[(m + i, m + i)] += om * om * w[i];
            a[(2 * m + i, m + i)] += om * w[i];
            a[(m + i, 2 * m + i)] += om * w[i];
            a[(3 * m + i, i)] -= om * w[i];
            a[(i, 3 * m + i)] -= om * w[i];
            mm[(2 * m + i, 2 * m + i)] += w[i];
            mm[(3 * m + i, 3 * m + i)] += w[i];
        }
    }
    // constraint vectors in the L² pairing, as Euclidean gradients W·V
    let phi = &prof.phi[..m];
    let mut cons: Vec<Vec<f64>> = Vec::new();
    let push = |cons: &mut Vec<Vec<f64>>, blocks: Vec<(usize, Vec<f64>)>| {
        let mut v = vec![0.0; dim];
        for (blk, vals) in blocks {
            for i in 0..m {
                v[blk * m + i] = vals[i] * w[i];
            }
        }
        cons.push(v);
    };
    if nlkg {
        let om = prof.omega;
        if constraints.phase {
            // T'(0)Φ = (iφ, -ωφ): b = φ, c̃ = -ωφ
            push(&mut cons, vec![(1, phi.to_vec()), (2, phi.iter().map(|p| -om * p).collect())]);
        }
        if constraints.omega_derivative {
            // ∂_ωΦ = (∂φ, i(φ + ω∂φ)): a = ∂φ, d̃ = φ + ω∂φ
            push(
                &mut cons,
                vec![
                    (0, dphi[..m].to_vec()),
                    (3, (0..m).map(|i| phi[i] + om * dphi[i]).collect()),
                ],
            );
        }
        if constraints.charge {
            // BΦ = (ωφ, iφ): a = ωφ, d̃ = φ
            push(&mut cons, vec![(0, phi.iter().map(|p| om * p).collect()), (3, phi.to_vec())]);
        }
    } else {
        if constraints.phase {
            push(&mut cons, vec![(1, phi.to_vec())]);
        }
        if constraints.omega_derivative {
            push(&mut cons, vec![(0, dphi[..m].to_vec())]);
        }
        if constraints.charge {
            // B = id: BΦ = φ
            push(&mut cons, vec![(0, phi.to_vec())]);
        }
    }
    let k0 = constrained_min_rayleigh(&a, &mm, &cons)?;
    Ok(k0)
}

/// Dense H¹ Gram matrix (centered gradient + L²) on the interior nodes.
fn h1_gram(grid: &RadialGrid) -> DMatrix<f64> {
    let m = grid.n;
    let h = grid.h;
    let w = grid.weights();
    // centered gradient rows: g[0] = 0 (even), g[i] = (u[i+1]-u[i-1])/2h,
    // u[m] = 0 (Dirichlet); nodes beyond i = m-1 excluded
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        gram[(i, i)] = w[i];
    }
    for i in 1..m {
        let c = 1.0 / (2.0 * h);
        // row i of D has +c at i+1 (if interior) and -c at i-1
        let entries: Vec<(usize, f64)> = if i + 1 < m {
            vec![(i + 1, c), (i - 1, -c)]
        } else {
            vec![(i - 1, -c)]
        };
        for &(p, cp) in &entries {
            for &(qq, cq) in &entries {
                gram[(p, qq)] += w[i] * cp * cq;
            }
        }
    }
    gram
}

/// Minimum of xᵀAx / xᵀMx subject to cᵀx = 0 for each constraint, via a
/// column-pivoted QR complement basis and a dense symmetric eigensolve.
fn constrained_min_rayleigh(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    constraints: &[Vec<f64>],
) -> Result<f64> {
    let dim = a.nrows();
    let k = constraints.len();
    let red = dim - k;
    let basis = if k == 0 {
        DMatrix::<f64>::identity(dim, dim)
    } else {
        // orthonormalize the constraint gradients, project them out of the
        // identity, and extract an orthonormal complement basis
        let mut c = DMatrix::<f64>::zeros(dim, k);
        for (j, v) in constraints.iter().enumerate() {
            for i in 0..dim {
                c[(i, j)] = v[i];
            }
        }
        let qr = c.qr();
        let q = qr.q(); // dim × k, orthonormal
        let mut p = DMatrix::<f64>::identity(dim, dim);
        p -= &q * q.transpose();
        let full = p.col_piv_qr();
        let qfull = full.q();
        qfull.columns(0, red).into_owned()
    };
    let ar = basis.transpose() * a * &basis;
    let mr = basis.transpose() * m * &basis;
    let chol = mr
        .clone()
        .cholesky()
        .ok_or(Error::SingularSystem("coercivity metric not positive definite"))?;
    let l = chol.l();
    let tmp = l
        .solve_lower_triangular(&ar)
        .ok_or(Error::SingularSystem("coercivity triangular solve"))?;
    let s = l
        .solve_lower_triangular(&tmp.transpose())
        .ok_or(Error::SingularSystem("coercivity triangular solve"))?;
    let sym = 0.5 * (&s + s.transpose());
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}
