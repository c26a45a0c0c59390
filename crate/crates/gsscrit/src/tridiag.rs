//! Tridiagonal machinery: weighted operator forms K x = λ M x, Sturm
//! sequence eigenvalue counts, bisection eigenvalues, inverse iteration,
//! and complex tridiagonal solves for the time integrators.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use num_complex::Complex64 as C64;

/// Symmetric generalized tridiagonal pencil (K, M): K from the Dirichlet
/// form of -Δ + V on the grid's interior nodes (Dirichlet at r = R,
/// Neumann at 0), M the diagonal of quadrature weights. Row i corresponds
/// to node i, i = 0..n-1.
#[derive(Debug, Clone)]
pub struct WeightedOp {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedOp {
    /// Assemble -Δ + V for nodal potential values `v` (length ≥ n).
    pub fn assemble(grid: &RadialGrid, v: &[f64]) -> WeightedOp {
        let m = grid.n;
        let e = grid.edge_coeffs();
        let w = grid.weights();
        let mut diag = Vec::with_capacity(m);
        for i in 0..m {
            let stiff = if i > 0 { e[i - 1] + e[i] } else { e[i] };
            diag.push(stiff + w[i] * v[i]);
        }
        let off = (0..m - 1).map(|i| -e[i]).collect();
        WeightedOp { diag, off, weights: w[..m].to_vec() }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// y = K x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Rayleigh quotient xᵀKx / xᵀMx.
    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        let num: f64 = self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(&self.weights).map(|(a, w)| a * a * w).sum();
        num / den
    }

    /// M-weighted inner product.
    pub fn m_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    /// Equivalent standard symmetric tridiagonal M^{-1/2} K M^{-1/2}.
    pub fn standardize(&self) -> SymTridiag {
        let m = self.len();
        let d = (0..m).map(|i| self.diag[i] / self.weights[i]).collect();
        let e = (0..m - 1)
            .map(|i| self.off[i] / (self.weights[i] * self.weights[i + 1]).sqrt())
            .collect();
        SymTridiag { d, e }
    }

    /// Number of eigenvalues of (K, M) strictly below `lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.standardize().sturm_count(lambda)
    }

    /// The k smallest eigenvalues with M-normalized eigenvectors.
    pub fn lowest_eigenpairs(&self, k: usize, tol: f64) -> Result<Vec<(f64, Vec<f64>)>> {
        let st = self.standardize();
        let vals = st.smallest_eigenvalues(k, tol);
        let mut out = Vec::with_capacity(k);
        for &lam in &vals {
            let vec = self.inverse_iterate(lam, tol)?;
            out.push((lam, vec));
        }
        Ok(out)
    }

    /// Inverse iteration for the eigenvector of (K, M) at eigenvalue ≈ lam.
    pub fn inverse_iterate(&self, lam: f64, tol: f64) -> Result<Vec<f64>> {
        let m = self.len();
        let scale: f64 = self.diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        // Deterministic start vector.
        let mut x: Vec<f64> = (0..m).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut shift = lam;
        for attempt in 0..3 {
            let mut ok = false;
            for _ in 0..50 {
                let mut y = match self.solve_shifted(shift, &x) {
                    Ok(y) => y,
                    Err(_) => break,
                };
                let norm = self.m_inner(&y, &y).sqrt();
                if !norm.is_finite() || norm == 0.0 {
                    break;
                }
                for v in &mut y {
                    *v /= norm;
                }
                let res: f64 = {
                    let ky = self.apply(&y);
                    ky.iter()
                        .zip(&y)
                        .zip(&self.weights)
                        .map(|((a, b), w)| (a - lam * w * b).powi(2) / w)
                        .sum::<f64>()
                        .sqrt()
                };
                x = y;
                if res < tol.max(1e-13) * scale.max(1.0) {
                    ok = true;
                    break;
                }
            }
            if ok {
                return Ok(x);
            }
            // retry with a nudged pivot
            shift = lam + (attempt as f64 + 1.0) * 1e-9 * scale.max(1.0);
        }
        Err(Error::NonConvergence {
            what: "inverse iteration",
            detail: format!("eigenvalue {lam}"),
        })
    }

    /// Solve (K - shift·M) x = b by Gaussian elimination with partial
    /// pivoting (the dgtsv scheme; one superdiagonal of fill-in).
    pub fn solve_shifted(&self, shift: f64, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.len();
        let mut d: Vec<f64> = (0..m).map(|i| self.diag[i] - shift * self.weights[i]).collect();
        let mut du: Vec<f64> = self.off.clone();
        let dl: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; m.saturating_sub(2)];
        let mut rhs = b.to_vec();
        for i in 0..m - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::SingularSystem("tridiagonal solve"));
                }
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                let t = fact * rhs[i];
                rhs[i + 1] -= t;
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i < m - 2 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du2[i];
                }
                du[i] = temp;
                let temp = rhs[i];
                rhs[i] = rhs[i + 1];
                rhs[i + 1] = temp - fact * rhs[i];
            }
        }
        if d[m - 1] == 0.0 {
            return Err(Error::SingularSystem("tridiagonal solve"));
        }
        let mut x = vec![0.0; m];
        x[m - 1] = rhs[m - 1] / d[m - 1];
        if m >= 2 {
            x[m - 2] = (rhs[m - 2] - du[m - 2] * x[m - 1]) / d[m - 2];
        }
        for i in (0..m.saturating_sub(2)).rev() {
            x[i] = (rhs[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        Ok(x)
    }
}

/// Standard symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SymTridiag {
    /// Number of eigenvalues strictly below `lambda` (negative pivots of
    /// the shifted LDLᵀ).
    pub fn sturm_count(&self, lambda: f64) -> usize {
        let m = self.d.len();
        let guard = 1e-300;
        let mut count = 0;
        let mut q = self.d[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..m {
            let qs = if q.abs() < guard { if q >= 0.0 { guard } else { -guard } } else { q };
            q = (self.d[i] - lambda) - self.e[i - 1] * self.e[i - 1] / qs;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gerschgorin bounds.
    pub fn bounds(&self) -> (f64, f64) {
        let m = self.d.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let r = (if i > 0 { self.e[i - 1].abs() } else { 0.0 })
                + (if i < m - 1 { self.e[i].abs() } else { 0.0 });
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    /// The k smallest eigenvalues by Sturm bisection, to absolute `tol`.
    pub fn smallest_eigenvalues(&self, k: usize, tol: f64) -> Vec<f64> {
        let (lo0, hi0) = self.bounds();
        let mut out = Vec::with_capacity(k);
        for j in 0..k.min(self.d.len()) {
            // bisect for the (j+1)-th eigenvalue
            let (mut lo, mut hi) = (lo0, hi0);
            while hi - lo > tol.max((hi.abs() + lo.abs()) * 1e-16) {
                let mid = 0.5 * (lo + hi);
                if self.sturm_count(mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }
}

/// In-place Thomas solve for a complex tridiagonal system without pivoting.
/// Intended for the diagonally dominant Cayley/Crank-Nicolson matrices.
pub fn thomas_complex(
    sub: &[C64],
    diag: &[C64],
    sup: &[C64],
    rhs: &mut [C64],
) -> Result<()> {
    let m = diag.len();
    let mut c = vec![C64::new(0.0, 0.0); m];
    let mut denom = diag[0];
    if denom.norm_sqr() == 0.0 {
        return Err(Error::SingularSystem("thomas"));
    }
    c[0] = sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..m {
        denom = diag[i] - sub[i - 1] * c[i - 1];
        if denom.norm_sqr() == 0.0 {
            return Err(Error::SingularSystem("thomas"));
        }
        if i < m - 1 {
            c[i] = sup[i] / denom;
        }
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / denom;
    }
    for i in (0..m - 1).rev() {
        let t = c[i] * rhs[i + 1];
        rhs[i] -= t;
    }
    Ok(())
}
