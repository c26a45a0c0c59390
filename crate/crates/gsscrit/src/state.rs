//! Discretized states and the symmetry operators T(s), J, B.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::ModelSpec;
use num_complex::Complex64;
use std::sync::Arc;

pub type C64 = Complex64;

/// Which operator to apply; see the convention notes in [`crate::model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symmetry {
    /// T(s) = e^{is}
    Rotate(f64),
    J,
    JInv,
    /// B = J⁻¹ T'(0)
    B,
    /// T'(0), the group generator
    Generator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fields {
    /// DPNLS: a single complex field u.
    Single(Vec<C64>),
    /// NLKG: the pair (u, v) with v = u_t.
    Pair { u: Vec<C64>, v: Vec<C64> },
}

#[derive(Debug, Clone)]
pub struct State {
    pub model: ModelSpec,
    pub grid: Arc<RadialGrid>,
    pub fields: Fields,
}

impl State {
    pub fn zeros(model: ModelSpec, grid: Arc<RadialGrid>) -> State {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        let fields = if model.is_nlkg() {
            Fields::Pair { u: z.clone(), v: z }
        } else {
            Fields::Single(z)
        };
        State { model, grid, fields }
    }

    pub fn single(model: ModelSpec, grid: Arc<RadialGrid>, u: Vec<C64>) -> State {
        assert_eq!(u.len(), grid.len());
        assert!(!model.is_nlkg());
        State { model, grid, fields: Fields::Single(u) }
    }

    pub fn pair(model: ModelSpec, grid: Arc<RadialGrid>, u: Vec<C64>, v: Vec<C64>) -> State {
        assert_eq!(u.len(), grid.len());
        assert_eq!(v.len(), grid.len());
        assert!(model.is_nlkg());
        State { model, grid, fields: Fields::Pair { u, v } }
    }

    pub fn components(&self) -> Vec<&[C64]> {
        match &self.fields {
            Fields::Single(u) => vec![u],
            Fields::Pair { u, v } => vec![u, v],
        }
    }

    pub fn first(&self) -> &[C64] {
        match &self.fields {
            Fields::Single(u) => u,
            Fields::Pair { u, .. } => u,
        }
    }

    pub fn second(&self) -> Option<&[C64]> {
        match &self.fields {
            Fields::Single(_) => None,
            Fields::Pair { v, .. } => Some(v),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for comp in self.components() {
            if !comp.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::invalid("state contains non-finite field values"));
            }
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(&[C64]) -> Vec<C64>) -> State {
        let fields = match &self.fields {
            Fields::Single(u) => Fields::Single(f(u)),
            Fields::Pair { u, v } => Fields::Pair { u: f(u), v: f(v) },
        };
        State { model: self.model, grid: self.grid.clone(), fields }
    }

    pub fn apply_symmetry(&self, which: Symmetry) -> State {
        let i = C64::new(0.0, 1.0);
        match which {
            Symmetry::Rotate(s) => {
                let ph = C64::from_polar(1.0, s);
                self.map(|c| c.iter().map(|z| ph * z).collect())
            }
            Symmetry::Generator => self.map(|c| c.iter().map(|z| i * z).collect()),
            Symmetry::J => match &self.fields {
                // J (a, b) = (b, -a)
                Fields::Pair { u, v } => State::pair(
                    self.model,
                    self.grid.clone(),
                    v.clone(),
                    u.iter().map(|z| -z).collect(),
                ),
                Fields::Single(u) => State::single(
                    self.model,
                    self.grid.clone(),
                    u.iter().map(|z| i * z).collect(),
                ),
            },
            Symmetry::JInv => match &self.fields {
                Fields::Pair { u, v } => State::pair(
                    self.model,
                    self.grid.clone(),
                    v.iter().map(|z| -z).collect(),
                    u.clone(),
                ),
                Fields::Single(u) => State::single(
                    self.model,
                    self.grid.clone(),
                    u.iter().map(|z| -i * z).collect(),
                ),
            },
            Symmetry::B => match &self.fields {
                // B (u, v) = (-iv, iu)
                Fields::Pair { u, v } => State::pair(
                    self.model,
                    self.grid.clone(),
                    v.iter().map(|z| -i * z).collect(),
                    u.iter().map(|z| i * z).collect(),
                ),
                Fields::Single(u) => {
                    State::single(self.model, self.grid.clone(), u.clone())
                }
            },
        }
    }

    /// Real H = (L²)ᵏ pairing Σ Re ∫ f ḡ over components.
    pub fn inner_h(&self, other: &State) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| self.grid.inner(a, b))
            .sum()
    }

    pub fn norm_h_sqr(&self) -> f64 {
        self.inner_h(self)
    }

    /// X-norm squared: H¹ for the configuration component, L² for the
    /// velocity component (NLKG); H¹ for the single field (DPNLS).
    pub fn norm_x_sqr(&self) -> f64 {
        match &self.fields {
            Fields::Single(u) => self.grid.h1_norm_sqr(u),
            Fields::Pair { u, v } => self.grid.h1_norm_sqr(u) + self.grid.inner(v, v),
        }
    }

    pub fn norm_x(&self) -> f64 {
        self.norm_x_sqr().max(0.0).sqrt()
    }

    /// X inner product matching [`State::norm_x_sqr`].
    pub fn inner_x(&self, other: &State) -> f64 {
        match (&self.fields, &other.fields) {
            (Fields::Single(a), Fields::Single(b)) => {
                let ga = self.grid.centered_gradient(a);
                let gb = self.grid.centered_gradient(b);
                self.grid.inner(&ga, &gb) + self.grid.inner(a, b)
            }
            (Fields::Pair { u: ua, v: va }, Fields::Pair { u: ub, v: vb }) => {
                let ga = self.grid.centered_gradient(ua);
                let gb = self.grid.centered_gradient(ub);
                self.grid.inner(&ga, &gb) + self.grid.inner(ua, ub) + self.grid.inner(va, vb)
            }
            _ => panic!("mismatched field layouts"),
        }
    }

    pub fn scaled(&self, c: C64) -> State {
        self.map(|f| f.iter().map(|z| c * z).collect())
    }

    pub fn add(&self, other: &State) -> State {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &State) -> State {
        self.zip(other, |a, b| a - b)
    }

    /// self + c · other
    pub fn axpy(&self, c: f64, other: &State) -> State {
        self.zip(other, |a, b| a + c * b)
    }

    fn zip(&self, other: &State, f: impl Fn(C64, C64) -> C64) -> State {
        let fields = match (&self.fields, &other.fields) {
            (Fields::Single(a), Fields::Single(b)) => {
                Fields::Single(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            }
            (Fields::Pair { u: ua, v: va }, Fields::Pair { u: ub, v: vb }) => Fields::Pair {
                u: ua.iter().zip(ub).map(|(&x, &y)| f(x, y)).collect(),
                v: va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect(),
            },
            _ => panic!("mismatched field layouts"),
        };
        State { model: self.model, grid: self.grid.clone(), fields }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Geometry;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub fn test_grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(1, 256, 16.0, Geometry::EvenLine).unwrap())
    }

    pub fn random_state(model: ModelSpec, grid: Arc<RadialGrid>, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = |g: &RadialGrid| -> Vec<C64> {
            g.nodes()
                .map(|x| {
                    let env = (-x * x / 20.0).exp();
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * env
                })
                .collect()
        };
        if model.is_nlkg() {
            let u = field(&grid);
            let v = field(&grid);
            State::pair(model, grid, u, v)
        } else {
            let u = field(&grid);
            State::single(model, grid, u)
        }
    }

    #[test]
    fn j_inverse_is_inverse() {
        for model in [ModelSpec::nlkg(3.0, 1), ModelSpec::dpnls(1.0, 3.0, 1.0, 7.0)] {
            let s = random_state(model, test_grid(), 1);
            let back = s.apply_symmetry(Symmetry::J).apply_symmetry(Symmetry::JInv);
            assert!(s.sub(&back).norm_h_sqr() < 1e-28);
        }
    }

    #[test]
    fn j_skew_symmetric() {
        for model in [ModelSpec::nlkg(3.0, 1), ModelSpec::dpnls(1.0, 3.0, 1.0, 7.0)] {
            for seed in 0..8 {
                let a = random_state(model, test_grid(), seed);
                let b = random_state(model, test_grid(), seed + 100);
                let lhs = a.apply_symmetry(Symmetry::J).inner_h(&b);
                let rhs = -a.inner_h(&b.apply_symmetry(Symmetry::J));
                assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn b_is_j_inv_generator() {
        for model in [ModelSpec::nlkg(3.0, 1), ModelSpec::dpnls(1.0, 3.0, 1.0, 7.0)] {
            let s = random_state(model, test_grid(), 7);
            let direct = s.apply_symmetry(Symmetry::B);
            let composed = s.apply_symmetry(Symmetry::Generator).apply_symmetry(Symmetry::JInv);
            assert!(direct.sub(&composed).norm_h_sqr() < 1e-28);
        }
    }

    #[test]
    fn rotation_commutes_with_j() {
        let s = random_state(ModelSpec::nlkg(3.0, 1), test_grid(), 3);
        let a = s.apply_symmetry(Symmetry::Rotate(0.7)).apply_symmetry(Symmetry::J);
        let b = s.apply_symmetry(Symmetry::J).apply_symmetry(Symmetry::Rotate(0.7));
        assert!(a.sub(&b).norm_h_sqr() < 1e-28);
    }

    #[test]
    fn b_is_symmetric() {
        for model in [ModelSpec::nlkg(3.0, 1), ModelSpec::dpnls(1.0, 3.0, 1.0, 7.0)] {
            let a = random_state(model, test_grid(), 11);
            let b = random_state(model, test_grid(), 12);
            let lhs = a.apply_symmetry(Symmetry::B).inner_h(&b);
            let rhs = a.inner_h(&b.apply_symmetry(Symmetry::B));
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}

#[cfg(test)]
pub use tests::{random_state, test_grid};
