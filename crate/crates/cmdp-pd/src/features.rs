//! Quadratic Kronecker feature basis and the projected-SGD regression used
//! to fit linear models of the augmented action-value function.
//!
//! Features are `phi(s, a) = scale * (z kron z)` with `z = [s; a; 1]` (the
//! constant coordinate is optional). The scale keeps `||phi|| <= 1` over the
//! declared state/action boxes, so the projected SGD operates on bounded
//! features as its step-size schedule assumes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Appends a constant coordinate to `z`, letting the basis represent
    /// terms linear in the state and action. The pure Kronecker basis
    /// cannot express those, which matters as soon as a policy has an
    /// offset; default on.
    pub augment_bias: bool,
    /// Normalizer applied to the raw Kronecker vector.
    pub scale: f64,
}

impl FeatureMap {
    pub fn new(state_dim: usize, action_dim: usize, augment_bias: bool, scale: f64) -> Result<Self> {
        if scale <= 0.0 {
            return Err(Error::InvalidParameter(format!("feature scale must be positive, got {scale}")));
        }
        Ok(Self { state_dim, action_dim, augment_bias, scale })
    }

    /// Chooses the scale so that `||phi(s, a)|| <= 1` whenever
    /// `|s_i| <= state_bound` and `|a_j| <= action_bound`.
    pub fn normalized(
        state_dim: usize,
        action_dim: usize,
        augment_bias: bool,
        state_bound: f64,
        action_bound: f64,
    ) -> Result<Self> {
        if state_bound <= 0.0 || action_bound <= 0.0 {
            return Err(Error::InvalidParameter(
                "feature normalization bounds must be positive".into(),
            ));
        }
        let bias = if augment_bias { 1.0 } else { 0.0 };
        let z_norm_sq = state_dim as f64 * state_bound * state_bound
            + action_dim as f64 * action_bound * action_bound
            + bias;
        Self::new(state_dim, action_dim, augment_bias, 1.0 / z_norm_sq)
    }

    /// Dimension of `z = [s; a; 1?]`.
    pub fn z_dim(&self) -> usize {
        self.state_dim + self.action_dim + usize::from(self.augment_bias)
    }

    /// Feature dimension `(d_s + d_a + bias)^2`.
    pub fn dim(&self) -> usize {
        self.z_dim() * self.z_dim()
    }

    fn z(&self, s: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let n = self.z_dim();
        let mut z = DVector::zeros(n);
        z.rows_mut(0, self.state_dim).copy_from(s);
        z.rows_mut(self.state_dim, self.action_dim).copy_from(a);
        if self.augment_bias {
            z[n - 1] = 1.0;
        }
        z
    }

    /// `phi(s, a) = scale * (z kron z)`, laid out row-major:
    /// `phi[i * n + j] = scale * z_i * z_j`.
    pub fn phi(&self, s: &DVector<f64>, a: &DVector<f64>) -> Result<DVector<f64>> {
        if s.len() != self.state_dim || a.len() != self.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "phi expects dims ({}, {}), got ({}, {})",
                self.state_dim,
                self.action_dim,
                s.len(),
                a.len()
            )));
        }
        let z = self.z(s, a);
        let n = z.len();
        let mut out = DVector::zeros(n * n);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.scale * z[i] * z[j];
            }
        }
        Ok(out)
    }

    /// Reshapes a coefficient vector into the symmetric matrix `W` with
    /// `phi(s, a)^T theta = scale * z^T W z`.
    pub fn coefficient_matrix(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.z_dim();
        debug_assert_eq!(theta.len(), n * n);
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = theta[i * n + j];
            }
        }
        (&w + w.transpose()) * 0.5
    }
}

/// Linear value model `J(s, a) = phi(s, a)^T theta` with `||theta||`
/// confined to a ball.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub theta: DVector<f64>,
    pub theta_max: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize, theta_max: f64) -> Result<Self> {
        if theta_max <= 0.0 {
            return Err(Error::InvalidParameter(format!("theta_max must be positive, got {theta_max}")));
        }
        Ok(Self { theta: DVector::zeros(dim), theta_max })
    }

    pub fn predict(&self, phi: &DVector<f64>) -> f64 {
        self.theta.dot(phi)
    }
}

/// Radial projection onto the ball `||theta|| <= theta_max`.
pub fn project_ball(theta: &DVector<f64>, theta_max: f64) -> DVector<f64> {
    let norm = theta.norm();
    if norm <= theta_max {
        theta.clone()
    } else {
        theta * (theta_max / norm)
    }
}

/// One projected-SGD step on the squared regression residual:
/// `theta' = P(theta - alpha * 2 (phi^T theta - target) phi)`.
pub fn sgd_step(model: &LinearModel, phi: &DVector<f64>, target: f64, alpha: f64) -> Result<LinearModel> {
    if !target.is_finite() {
        return Err(Error::NonFinite(format!("regression target is not finite: {target}")));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {alpha}")));
    }
    let residual = model.predict(phi) - target;
    let theta = &model.theta - phi * (2.0 * alpha * residual);
    Ok(LinearModel { theta: project_ball(&theta, model.theta_max), theta_max: model.theta_max })
}

/// Step-size schedule `alpha_n = 1 / (2 kappa0 (n + 2))`, where `kappa0`
/// lower-bounds the feature covariance spectrum on the sampling
/// distribution.
pub fn sgd_schedule(n: usize, kappa0: f64) -> f64 {
    debug_assert!(kappa0 > 0.0);
    1.0 / (2.0 * kappa0 * (n as f64 + 2.0))
}

/// Triangular-weighted iterate average
/// `(2 / (N (N + 1))) * sum_{n=0}^{N-1} (n + 1) iterates[n]`.
/// The weights are a convex combination.
pub fn weighted_average(iterates: &[DVector<f64>]) -> Result<DVector<f64>> {
    if iterates.is_empty() {
        return Err(Error::InvalidParameter("weighted average of an empty iterate sequence".into()));
    }
    let n = iterates.len() as f64;
    let mut acc = DVector::zeros(iterates[0].len());
    for (i, theta) in iterates.iter().enumerate() {
        acc += theta * (i as f64 + 1.0);
    }
    Ok(acc * (2.0 / (n * (n + 1.0))))
}

/// Incremental form of [`weighted_average`] for long runs where storing
/// every iterate is wasteful.
#[derive(Debug, Clone)]
pub struct WeightedAverager {
    acc: DVector<f64>,
    count: usize,
}

impl WeightedAverager {
    pub fn new(dim: usize) -> Self {
        Self { acc: DVector::zeros(dim), count: 0 }
    }

    pub fn push(&mut self, theta: &DVector<f64>) {
        self.count += 1;
        self.acc += theta * self.count as f64;
    }

    pub fn finish(&self) -> Result<DVector<f64>> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("weighted average of an empty iterate sequence".into()));
        }
        let n = self.count as f64;
        Ok(&self.acc * (2.0 / (n * (n + 1.0))))
    }
}
