//! Finite-difference stencil weights on arbitrary node sets (Fornberg's
//! recursion). Used for the omega-derivatives of d, Q and the profiles.

/// Weights of the `m`-th derivative at `x0` for samples at `nodes`.
///
/// Fornberg, Math. Comp. 51 (1988). Exact for polynomials up to degree
/// `nodes.len() - 1`.
pub fn fd_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(m < n, "need more than m nodes for the m-th derivative");
    // c[k][j]: weight of node j for the k-th derivative, built incrementally.
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c.pop().unwrap()
}

/// Centered stencil offsets `-r..=r` scaled by `h`.
pub fn centered_offsets(r: usize, h: f64) -> Vec<f64> {
    (-(r as i64)..=r as i64).map(|k| k as f64 * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(x0: f64, nodes: &[f64], m: usize, f: impl Fn(f64) -> f64) -> f64 {
        fd_weights(x0, nodes, m)
            .iter()
            .zip(nodes)
            .map(|(w, &x)| w * f(x))
            .sum()
    }

    #[test]
    fn derivatives_of_exp_at_zero() {
        let h = 1e-2;
        for m in 1..=4 {
            let nodes = centered_offsets(4, h);
            let got = apply(0.0, &nodes, m, f64::exp);
            assert!((got - 1.0).abs() < 1e-6, "m={m}: {got}");
        }
    }

    #[test]
    fn first_derivative_five_point_matches_closed_form() {
        // (f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / (12h)
        let h = 0.1;
        let w = fd_weights(0.0, &centered_offsets(2, h), 1);
        let expect = [1.0 / (12.0 * h), -8.0 / (12.0 * h), 0.0, 8.0 / (12.0 * h), -1.0 / (12.0 * h)];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
