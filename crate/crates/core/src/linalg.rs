//! Online ridge regression state shared by all three policies.
//!
//! [`DesignState`] keeps the regularized design matrix `V = λI + Σ x xᵀ`, its
//! inverse (maintained by Sherman–Morrison rank-1 updates) and the response
//! accumulator `b = Σ r x`. Matrices are dense, row-major `Vec<f64>`; all
//! reductions run in a fixed index order so that two players holding
//! bit-identical states compute bit-identical indices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Number of rank-1 inverse updates between full dense re-inversions.
pub const REINVERT_EVERY: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    dim: usize,
    v_matrix: Vec<f64>,
    v_inverse: Vec<f64>,
    b_vector: Vec<f64>,
    lambda: f64,
    update_count: u64,
}

impl DesignState {
    /// `V₀ = λI`, `b = 0`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("design dimension must be at least 1"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "regularizer lambda must be positive and finite, got {lambda}"
            )));
        }
        let mut v_matrix = vec![0.0; dim * dim];
        let mut v_inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            v_matrix[i * dim + i] = lambda;
            v_inverse[i * dim + i] = 1.0 / lambda;
        }
        Ok(Self {
            dim,
            v_matrix,
            v_inverse,
            b_vector: vec![0.0; dim],
            lambda,
            update_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Row-major `V`.
    pub fn v_matrix(&self) -> &[f64] {
        &self.v_matrix
    }

    /// Row-major `V⁻¹` as maintained incrementally.
    pub fn v_inverse(&self) -> &[f64] {
        &self.v_inverse
    }

    pub fn b_vector(&self) -> &[f64] {
        &self.b_vector
    }

    /// Adds `x xᵀ` to `V` and `r x` to `b`.
    pub fn update(&mut self, x: &[f64], r: f64) -> Result<()> {
        self.check_vector(x, "context")?;
        if !r.is_finite() {
            return Err(Error::invalid(format!("reward must be finite, got {r}")));
        }
        self.update_unchecked(x, r);
        Ok(())
    }

    pub(crate) fn update_unchecked(&mut self, x: &[f64], r: f64) {
        self.update_design_only(x);
        self.accumulate_response(x, r);
    }

    /// Adds `x xᵀ` to `V` (and refreshes `V⁻¹`) without touching `b`.
    ///
    /// Used by policies that keep `V` in lockstep across players while each
    /// player folds its private reward into its own accumulator.
    pub(crate) fn update_design_only(&mut self, x: &[f64]) {
        let d = self.dim;
        for i in 0..d {
            let xi = x[i];
            let row = &mut self.v_matrix[i * d..(i + 1) * d];
            for (j, v) in row.iter_mut().enumerate() {
                *v += xi * x[j];
            }
        }
        self.update_count += 1;

        if self.update_count.is_multiple_of(REINVERT_EVERY) {
            self.reinvert();
        } else {
            self.sherman_morrison(x);
        }
    }

    pub(crate) fn accumulate_response(&mut self, x: &[f64], r: f64) {
        for (b, xi) in self.b_vector.iter_mut().zip(x) {
            *b += r * xi;
        }
    }

    // V⁻¹ ← V⁻¹ − (V⁻¹x)(V⁻¹x)ᵀ / (1 + xᵀV⁻¹x)
    fn sherman_morrison(&mut self, x: &[f64]) {
        let d = self.dim;
        let u = mat_vec(&self.v_inverse, d, x);
        let denom = 1.0 + dot(x, &u);
        for i in 0..d {
            let ui = u[i] / denom;
            let row = &mut self.v_inverse[i * d..(i + 1) * d];
            for (j, w) in row.iter_mut().enumerate() {
                *w -= ui * u[j];
            }
        }
    }

    fn reinvert(&mut self) {
        let d = self.dim;
        let v = DMatrix::from_row_slice(d, d, &self.v_matrix);
        // V is symmetric positive definite with min eigenvalue >= λ, so
        // Cholesky cannot fail short of non-finite input.
        let inv = v
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| DMatrix::from_row_slice(d, d, &self.v_matrix).try_inverse())
            .expect("design matrix is positive definite");
        for i in 0..d {
            for j in 0..d {
                self.v_inverse[i * d + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
    }

    /// Ridge estimate `θ = V⁻¹ b`.
    pub fn solve_theta(&self) -> Vec<f64> {
        mat_vec(&self.v_inverse, self.dim, &self.b_vector)
    }

    /// `xᵀ V⁻¹ x`, clamped at zero.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.v_inverse[i * d..(i + 1) * d];
            acc += x[i] * dot(row, x);
        }
        acc.max(0.0)
    }

    /// Optimistic index `⟨θ̂, x⟩ + √β ‖x‖_{V⁻¹}`: the maximum of `⟨v, x⟩` over
    /// the confidence ellipsoid `‖v − θ̂‖_V ≤ √β`.
    pub fn ucb_index(&self, theta_hat: &[f64], x: &[f64], sqrt_beta: f64) -> Result<f64> {
        if sqrt_beta.is_nan() || sqrt_beta < 0.0 {
            return Err(Error::invalid(format!(
                "confidence width must be nonnegative, got {sqrt_beta}"
            )));
        }
        self.check_vector(theta_hat, "estimate")?;
        self.check_vector(x, "context")?;
        Ok(self.ucb_index_unchecked(theta_hat, x, sqrt_beta))
    }

    pub(crate) fn ucb_index_unchecked(&self, theta_hat: &[f64], x: &[f64], sqrt_beta: f64) -> f64 {
        dot(theta_hat, x) + sqrt_beta * self.quadratic_form(x).sqrt()
    }

    /// Smallest eigenvalue of `V` via a dense symmetric eigen-solve. Test
    /// surface only; never called on the simulation hot path.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim;
        let v = DMatrix::from_row_slice(d, d, &self.v_matrix);
        SymmetricEigen::new(v)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_vector(&self, x: &[f64], what: &str) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "{what} has length {}, expected {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{what} has non-finite entries")));
        }
        Ok(())
    }
}

/// Parameters of the classical confidence-width schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub lambda: f64,
    /// Upper bound on `‖θ*‖₂`.
    pub theta_norm_bound: f64,
    pub delta: f64,
    pub dim: usize,
    /// Upper bound on context norms.
    pub context_norm_bound: f64,
}

impl BetaParams {
    pub fn new(
        lambda: f64,
        theta_norm_bound: f64,
        delta: f64,
        dim: usize,
        context_norm_bound: f64,
    ) -> Result<Self> {
        let params = Self {
            lambda,
            theta_norm_bound,
            delta,
            dim,
            context_norm_bound,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if self.theta_norm_bound.is_nan()
            || self.theta_norm_bound < 0.0
            || !(self.context_norm_bound.is_finite() && self.context_norm_bound > 0.0)
        {
            return Err(Error::invalid("norm bounds must be nonnegative"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(())
    }
}

/// `√β_t = √λ m₂ + √(2 log(1/δ) + d log((dλ + t L²) / (dλ)))`.
pub fn beta_classic(params: &BetaParams, t: u64) -> f64 {
    let d = params.dim as f64;
    let dl = d * params.lambda;
    let l2 = params.context_norm_bound * params.context_norm_bound;
    let log_ratio = ((dl + t as f64 * l2) / dl).ln();
    params.lambda.sqrt() * params.theta_norm_bound
        + (2.0 * (1.0 / params.delta).ln() + d * log_ratio).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn mat_vec(a: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|i| dot(&a[i * dim..(i + 1) * dim], x))
        .collect()
}
