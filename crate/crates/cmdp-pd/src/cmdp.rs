//! Problem definition for a constrained MDP with continuous state-action
//! spaces: dynamics, reward and utility functions, a constraint threshold,
//! and the scalar algebra of the regularized Lagrangian.
//!
//! The constraint `V_u(pi) >= b` is translated into `V_g(pi) >= 0` through
//! the shifted utility `g := u - (1 - gamma) * b`, so the translated value
//! differs from the utility value by exactly `b`.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::envs::{Dynamics, RewardSpec};
use crate::error::{Error, Result};

/// `g(s, a) = u(s, a) - (1 - gamma) * b`.
pub fn translate_utility(u_value: f64, b: f64, gamma: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&gamma));
    u_value - (1.0 - gamma) * b
}

/// Composite regularized reward `r + lambda * g - (tau / 2) * ||a||^2`.
///
/// The action term is a penalty: every update rule treats it as a concave
/// quadratic added to the maximization objective.
pub fn regularized_reward(r_value: f64, g_value: f64, lambda: f64, tau: f64, action: &DVector<f64>) -> f64 {
    debug_assert!(lambda >= 0.0 && tau >= 0.0);
    r_value + lambda * g_value - 0.5 * tau * action.norm_squared()
}

/// Dual cap `lambda_max = 1 / ((1 - gamma) * xi)` from the Slater slack `xi`.
pub fn lambda_cap(gamma: f64, xi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("discount must lie in [0, 1), got {gamma}")));
    }
    if xi <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "feasibility slack must be positive, got {xi} (instance appears infeasible)"
        )));
    }
    Ok(1.0 / ((1.0 - gamma) * xi))
}

/// Regularization and step-size parameters shared by all drivers.
#[derive(Debug, Clone, Copy)]
pub struct RegularizationParams {
    /// Regularization weight `tau >= 0`.
    pub tau: f64,
    /// Step size `eta > 0` for both the primal proximal step and the dual descent step.
    pub eta: f64,
    /// Dual clipping cap; the dual variable lives in `[0, lambda_max]`.
    pub lambda_max: f64,
}

impl RegularizationParams {
    pub fn new(tau: f64, eta: f64, lambda_max: f64) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
        }
        if eta <= 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        if lambda_max <= 0.0 {
            return Err(Error::InvalidParameter(format!("lambda_max must be positive, got {lambda_max}")));
        }
        Ok(Self { tau, eta, lambda_max })
    }

    /// Builds the parameters for an instance, deriving the dual cap from
    /// the instance discount and slack.
    pub fn for_instance(instance: &CmdpInstance, tau: f64, eta: f64) -> Result<Self> {
        Self::new(tau, eta, lambda_cap(instance.gamma, instance.slack)?)
    }
}

/// Per-coordinate initial-state component.
#[derive(Debug, Clone)]
pub enum CoordDist {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Gaussian with the given mean and standard deviation.
    Gaussian { mean: f64, std: f64 },
    Point { value: f64 },
}

impl CoordDist {
    fn mean(&self) -> f64 {
        match self {
            CoordDist::Uniform { .. } => 0.0,
            CoordDist::Gaussian { mean, .. } => *mean,
            CoordDist::Point { value } => *value,
        }
    }

    fn variance(&self) -> f64 {
        match self {
            CoordDist::Uniform { half_width } => half_width * half_width / 3.0,
            CoordDist::Gaussian { std, .. } => std * std,
            CoordDist::Point { .. } => 0.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CoordDist::Uniform { half_width } => rng.random_range(-half_width..=*half_width),
            CoordDist::Gaussian { mean, std } => {
                if *std == 0.0 {
                    *mean
                } else {
                    Normal::new(*mean, *std).expect("valid normal").sample(rng)
                }
            }
            CoordDist::Point { value } => *value,
        }
    }
}

/// Initial-state distribution with closed-form first and second moments,
/// which the exact drivers need to average quadratic values over states.
#[derive(Debug, Clone)]
pub enum InitialStateDist {
    /// Independent coordinates.
    PerCoord(Vec<CoordDist>),
    /// `s = c * profile` with `c ~ Uniform[low, high]`; used for smooth
    /// initial velocity profiles.
    ScaledProfile { profile: DVector<f64>, low: f64, high: f64 },
}

impl InitialStateDist {
    pub fn dim(&self) -> usize {
        match self {
            InitialStateDist::PerCoord(coords) => coords.len(),
            InitialStateDist::ScaledProfile { profile, .. } => profile.len(),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match self {
            InitialStateDist::PerCoord(coords) => {
                DVector::from_iterator(coords.len(), coords.iter().map(|c| c.sample(rng)))
            }
            InitialStateDist::ScaledProfile { profile, low, high } => {
                let c = rng.random_range(*low..=*high);
                profile * c
            }
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            InitialStateDist::PerCoord(coords) => {
                DVector::from_iterator(coords.len(), coords.iter().map(|c| c.mean()))
            }
            InitialStateDist::ScaledProfile { profile, low, high } => profile * (0.5 * (low + high)),
        }
    }

    /// `E[s s^T]`.
    pub fn second_moment(&self) -> nalgebra::DMatrix<f64> {
        match self {
            InitialStateDist::PerCoord(coords) => {
                let mean = self.mean();
                let mut m = &mean * mean.transpose();
                for (i, c) in coords.iter().enumerate() {
                    m[(i, i)] += c.variance();
                }
                m
            }
            InitialStateDist::ScaledProfile { profile, low, high } => {
                let mean_c = 0.5 * (low + high);
                let var_c = (high - low) * (high - low) / 12.0;
                profile * profile.transpose() * (mean_c * mean_c + var_c)
            }
        }
    }
}

/// A constrained MDP instance: dynamics, reward, utility, threshold,
/// discount, action box and initial-state distribution.
#[derive(Debug, Clone)]
pub struct CmdpInstance {
    pub gamma: f64,
    /// Constraint threshold `b` in `V_u(pi) >= b`.
    pub threshold: f64,
    /// Action box half-width; actions live in `[-action_bound, action_bound]^{d_a}`.
    pub action_bound: f64,
    /// Diagnostic elementwise state clamp applied while stepping rollouts.
    pub state_clamp: f64,
    /// Slater slack `xi`, used only through the dual cap.
    pub slack: f64,
    pub dynamics: Dynamics,
    pub reward: RewardSpec,
    pub utility: RewardSpec,
    pub init: InitialStateDist,
}

impl CmdpInstance {
    pub fn new(
        gamma: f64,
        threshold: f64,
        action_bound: f64,
        state_clamp: f64,
        slack: f64,
        dynamics: Dynamics,
        reward: RewardSpec,
        utility: RewardSpec,
        init: InitialStateDist,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if action_bound <= 0.0 {
            return Err(Error::InvalidParameter(format!("action bound must be positive, got {action_bound}")));
        }
        if slack <= 0.0 {
            return Err(Error::InvalidParameter(format!("slack must be positive, got {slack}")));
        }
        if state_clamp <= 0.0 {
            return Err(Error::InvalidParameter(format!("state clamp must be positive, got {state_clamp}")));
        }
        let (d_s, d_a) = (dynamics.state_dim(), dynamics.action_dim());
        if init.dim() != d_s {
            return Err(Error::DimensionMismatch(format!(
                "initial distribution has dim {}, dynamics expect {}",
                init.dim(),
                d_s
            )));
        }
        reward.validate_dims(d_s, d_a)?;
        utility.validate_dims(d_s, d_a)?;
        Ok(Self {
            gamma,
            threshold,
            action_bound,
            state_clamp,
            slack,
            dynamics,
            reward,
            utility,
            init,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.dynamics.action_dim()
    }

    pub fn reward_at(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.reward.eval(s, a)
    }

    pub fn utility_at(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.utility.eval(s, a)
    }

    /// Translated utility `g(s, a)`.
    pub fn translated_utility_at(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        translate_utility(self.utility_at(s, a), self.threshold, self.gamma)
    }

    pub fn lambda_cap(&self) -> Result<f64> {
        lambda_cap(self.gamma, self.slack)
    }

    /// One environment transition followed by the diagnostic state clamp.
    /// Returns the next state and whether any coordinate was clamped.
    pub fn step(&self, s: &DVector<f64>, a: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<(DVector<f64>, bool)> {
        let mut next = self.dynamics.step(s, a, rng)?;
        let mut clamped = false;
        for v in next.iter_mut() {
            if *v > self.state_clamp {
                *v = self.state_clamp;
                clamped = true;
            } else if *v < -self.state_clamp {
                *v = -self.state_clamp;
                clamped = true;
            }
        }
        Ok((next, clamped))
    }
}
