//! Closed-form value and advantage evaluation for linear-Gaussian dynamics
//! with quadratic rewards, and the exact proximal primal update built on it.
//!
//! For an affine policy `a = K s + k` and quadratic per-step reward the
//! discounted value is a quadratic `V(s) = s^T P s + p^T s + c`, obtained
//! from the discounted Lyapunov fixed point of the closed loop
//! `M = B0 + B1 K`. Everything else (state-action values, regularized
//! advantages, the proximal argmax) is assembled from that quadratic.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::cmdp::InitialStateDist;
use crate::envs::LinearGaussianEnv;
use crate::error::{Error, Result};

/// Clips a vector elementwise to `[-bound, bound]`.
pub fn clip_box(v: &mut DVector<f64>, bound: f64) {
    for x in v.iter_mut() {
        *x = x.clamp(-bound, bound);
    }
}

/// Deterministic state-feedback policy with action-box clipping.
pub trait Policy: Sync {
    fn act(&self, s: &DVector<f64>) -> DVector<f64>;
}

/// Affine policy `a = clip(K s + k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub action_bound: f64,
}

impl AffinePolicy {
    pub fn new(gain: DMatrix<f64>, offset: DVector<f64>, action_bound: f64) -> Self {
        debug_assert_eq!(gain.nrows(), offset.len());
        Self { gain, offset, action_bound }
    }

    pub fn zero(d_s: usize, d_a: usize, action_bound: f64) -> Self {
        Self::new(DMatrix::zeros(d_a, d_s), DVector::zeros(d_a), action_bound)
    }

    /// The affine map before clipping.
    pub fn raw(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.gain * s + &self.offset
    }

    /// True when the unclipped action leaves the box at `s`; the closed-form
    /// evaluation below assumes this never happens on visited states.
    pub fn clips_at(&self, s: &DVector<f64>) -> bool {
        self.raw(s).iter().any(|v| v.abs() > self.action_bound)
    }
}

impl Policy for AffinePolicy {
    fn act(&self, s: &DVector<f64>) -> DVector<f64> {
        let mut a = self.raw(s);
        clip_box(&mut a, self.action_bound);
        a
    }
}

/// Quadratic per-step reward `s^T G s + a^T R a + constant`.
#[derive(Debug, Clone)]
pub struct QuadraticReward {
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub constant: f64,
}

impl QuadraticReward {
    pub fn new(g: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        Self { g, r, constant: 0.0 }
    }

    pub fn with_constant(g: DMatrix<f64>, r: DMatrix<f64>, constant: f64) -> Self {
        Self { g, r, constant }
    }

    /// The action-norm penalty `-||a||^2` as a quadratic reward.
    pub fn action_norm_penalty(d_s: usize, d_a: usize) -> Self {
        Self::new(DMatrix::zeros(d_s, d_s), -DMatrix::identity(d_a, d_a))
    }

    pub fn eval(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        (s.transpose() * &self.g * s)[(0, 0)] + (a.transpose() * &self.r * a)[(0, 0)] + self.constant
    }
}

/// Value quadratic `V(s) = s^T P s + p^T s + c`.
#[derive(Debug, Clone)]
pub struct QuadraticValue {
    pub p: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub constant: f64,
}

impl QuadraticValue {
    pub fn eval(&self, s: &DVector<f64>) -> f64 {
        (s.transpose() * &self.p * s)[(0, 0)] + self.lin.dot(s) + self.constant
    }

    /// `E_rho[V(s)] = tr(P E[s s^T]) + p^T E[s] + c`.
    pub fn mean_over(&self, init: &InitialStateDist) -> f64 {
        let second = init.second_moment();
        (&self.p * second).trace() + self.lin.dot(&init.mean()) + self.constant
    }

    pub fn zero(d_s: usize) -> Self {
        Self { p: DMatrix::zeros(d_s, d_s), lin: DVector::zeros(d_s), constant: 0.0 }
    }

    /// `self + other * w`, combining value pieces of linearly combined rewards.
    pub fn add_scaled(&self, other: &QuadraticValue, w: f64) -> Self {
        Self {
            p: &self.p + &other.p * w,
            lin: &self.lin + &other.lin * w,
            constant: self.constant + other.constant * w,
        }
    }
}

const LYAPUNOV_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_SWEEPS: usize = 100_000;

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max)
}

/// Discounted value of `policy` under `env` for a quadratic reward.
///
/// Solves `P = W + gamma M^T P M` by fixed-point iteration (a contraction
/// whenever `sqrt(gamma) * M` is Schur stable), then the linear and constant
/// parts by a direct solve. Clipping is assumed inactive on visited states.
pub fn eval_policy_quadratic(
    env: &LinearGaussianEnv,
    policy: &AffinePolicy,
    reward: &QuadraticReward,
    gamma: f64,
) -> Result<QuadraticValue> {
    if gamma < 0.0 || gamma >= 1.0 {
        return Err(Error::InvalidParameter(format!("discount must lie in [0, 1), got {gamma}")));
    }
    let d_s = env.state_dim();
    let k = &policy.gain;
    let closed_loop = &env.b0 + &env.b1 * k;
    if gamma > 0.0 {
        let rho = gamma.sqrt() * spectral_radius(&closed_loop);
        if rho >= 1.0 - 1e-9 {
            return Err(Error::UnstablePolicy { rho });
        }
    }

    // Per-step reward along the policy as a quadratic in s.
    let rk = &reward.r * k;
    let w = &reward.g + k.transpose() * &rk;
    let w_sym = (&w + w.transpose()) * 0.5;
    let lin_step = k.transpose() * (&reward.r + reward.r.transpose()) * &policy.offset;
    let const_step = (policy.offset.transpose() * &reward.r * &policy.offset)[(0, 0)] + reward.constant;

    // Quadratic part: discounted Lyapunov fixed point.
    let mut p = w_sym.clone();
    if gamma > 0.0 {
        let mut sweeps = 0;
        loop {
            let next = &w_sym + (closed_loop.transpose() * &p * &closed_loop) * gamma;
            let residual = (&next - &p).abs().max();
            p = next;
            sweeps += 1;
            if residual < LYAPUNOV_TOL {
                break;
            }
            if sweeps >= LYAPUNOV_MAX_SWEEPS || !residual.is_finite() {
                return Err(Error::NonFinite(format!(
                    "Lyapunov iteration did not reach {LYAPUNOV_TOL:e} after {sweeps} sweeps"
                )));
            }
        }
        // Enforce exact symmetry against rounding drift.
        p = (&p + p.transpose()) * 0.5;
    }

    // Linear part: (I - gamma M^T) lin = lin_step + 2 gamma M^T P m.
    let offset_drift = &env.b1 * &policy.offset;
    let lin = if gamma > 0.0 {
        let lhs = DMatrix::identity(d_s, d_s) - closed_loop.transpose() * gamma;
        let rhs = &lin_step + closed_loop.transpose() * (&p * &offset_drift) * (2.0 * gamma);
        lhs.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NonFinite("linear part of the value recursion is singular".into()))?
    } else {
        lin_step
    };

    // Constant part: c = (c0 + gamma (m^T P m + p^T m + tr(P Sigma))) / (1 - gamma).
    let noise_term = (&p * &env.noise_cov).trace();
    let constant = (const_step
        + gamma * ((offset_drift.transpose() * &p * &offset_drift)[(0, 0)] + lin.dot(&offset_drift) + noise_term))
        / (1.0 - gamma);

    Ok(QuadraticValue { p, lin, constant })
}

/// One-step Bellman backup `r(s, a) + gamma E_w[V(B0 s + B1 a + w)]`,
/// the Gaussian expectation taken in closed form.
pub fn exact_q(
    value: &QuadraticValue,
    env: &LinearGaussianEnv,
    reward: &QuadraticReward,
    gamma: f64,
    s: &DVector<f64>,
    a: &DVector<f64>,
) -> f64 {
    let next_mean = &env.b0 * s + &env.b1 * a;
    let noise_term = (&value.p * &env.noise_cov).trace();
    reward.eval(s, a) + gamma * (value.eval(&next_mean) + noise_term)
}

/// All value pieces of one policy on one instance: reward value, translated
/// utility value and the action-norm regularizer value. Linearity of policy
/// evaluation lets the composite regularized pieces be combined on demand.
#[derive(Debug, Clone)]
pub struct PolicyValues {
    pub v_r: QuadraticValue,
    pub v_g: QuadraticValue,
    pub v_h: QuadraticValue,
}

impl PolicyValues {
    pub fn evaluate(
        env: &LinearGaussianEnv,
        policy: &AffinePolicy,
        reward: &QuadraticReward,
        translated_utility: &QuadraticReward,
        gamma: f64,
    ) -> Result<Self> {
        let v_r = eval_policy_quadratic(env, policy, reward, gamma)?;
        let v_g = eval_policy_quadratic(env, policy, translated_utility, gamma)?;
        let h = QuadraticReward::action_norm_penalty(env.state_dim(), env.action_dim());
        let v_h = eval_policy_quadratic(env, policy, &h, gamma)?;
        Ok(Self { v_r, v_g, v_h })
    }

    /// Value quadratic of the composite reward `r + lambda g + (tau/2) h_a`.
    pub fn composite(&self, lambda: f64, tau: f64) -> QuadraticValue {
        self.v_r.add_scaled(&self.v_g, lambda).add_scaled(&self.v_h, 0.5 * tau)
    }
}

/// The regularized advantage
/// `A(s, a) = Q(s, a) - V(s) - (tau/2)(||a||^2 - ||pi(s)||^2)` where `Q` and
/// `V` belong to the composite regularized reward.
#[allow(clippy::too_many_arguments)]
pub fn regularized_advantage(
    values: &PolicyValues,
    env: &LinearGaussianEnv,
    reward: &QuadraticReward,
    translated_utility: &QuadraticReward,
    gamma: f64,
    lambda: f64,
    tau: f64,
    s: &DVector<f64>,
    a: &DVector<f64>,
    policy_action: &DVector<f64>,
) -> f64 {
    let composite_value = values.composite(lambda, tau);
    let composite_reward = composite_reward(env, reward, translated_utility, lambda, tau);
    let q = exact_q(&composite_value, env, &composite_reward, gamma, s, a);
    let v = composite_value.eval(s);
    q - v - 0.5 * tau * (a.norm_squared() - policy_action.norm_squared())
}

/// Per-step composite reward `r + lambda g - (tau/2) ||a||^2` as a quadratic.
pub fn composite_reward(
    env: &LinearGaussianEnv,
    reward: &QuadraticReward,
    translated_utility: &QuadraticReward,
    lambda: f64,
    tau: f64,
) -> QuadraticReward {
    let d_a = env.action_dim();
    QuadraticReward::with_constant(
        &reward.g + &translated_utility.g * lambda,
        &reward.r + &translated_utility.r * lambda - DMatrix::identity(d_a, d_a) * (0.5 * tau),
        reward.constant + translated_utility.constant * lambda,
    )
}

/// The regularized advantage as a quadratic in the action:
/// `A(s, a) = a^T aa a + (lin_state s + lin_const)^T a + const(s)`.
#[derive(Debug, Clone)]
pub struct AdvantageForm {
    pub aa: DMatrix<f64>,
    pub lin_state: DMatrix<f64>,
    pub lin_const: DVector<f64>,
}

impl AdvantageForm {
    /// Extracts the action-quadratic form of the regularized advantage for
    /// the policy whose composite value pieces are given.
    pub fn extract(
        values: &PolicyValues,
        env: &LinearGaussianEnv,
        reward: &QuadraticReward,
        translated_utility: &QuadraticReward,
        gamma: f64,
        lambda: f64,
        tau: f64,
    ) -> Self {
        let composite = composite_reward(env, reward, translated_utility, lambda, tau);
        let value = values.composite(lambda, tau);
        let d_a = env.action_dim();
        // Q(s, a) action curvature plus the extra advantage regularizer.
        let aa = &composite.r + env.b1.transpose() * &value.p * &env.b1 * gamma
            - DMatrix::identity(d_a, d_a) * (0.5 * tau);
        let aa = (&aa + aa.transpose()) * 0.5;
        let lin_state = env.b1.transpose() * &value.p * &env.b0 * (2.0 * gamma);
        let lin_const = env.b1.transpose() * &value.lin * gamma;
        Self { aa, lin_state, lin_const }
    }

    pub fn eval(&self, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        (a.transpose() * &self.aa * a)[(0, 0)] + (&self.lin_state * s + &self.lin_const).dot(a)
    }
}

const FALLBACK_STEPS: usize = 200;

/// Proximal primal update: the affine maximizer of
/// `A(s, a) - ||a - pi_t(s)||^2 / (2 eta)`, clipped to the action box.
///
/// When `I/eta - 2 aa` fails to be positive definite the update falls back
/// to plain gradient ascent initialized at `pi_t(s)`, composed in affine
/// form; the flag in the result reports that the fallback ran.
pub fn exact_primal_update(form: &AdvantageForm, policy: &AffinePolicy, eta: f64) -> Result<(AffinePolicy, bool)> {
    if eta <= 0.0 {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let d_a = form.aa.nrows();
    let curvature = DMatrix::identity(d_a, d_a) / eta - &form.aa * 2.0;
    let rhs_gain = &form.lin_state + &policy.gain / eta;
    let rhs_offset = &form.lin_const + &policy.offset / eta;
    if let Some(chol) = Cholesky::new(curvature.clone()) {
        let gain = chol.solve(&rhs_gain);
        let offset = chol.solve(&rhs_offset);
        return Ok((AffinePolicy::new(gain, offset, policy.action_bound), false));
    }
    // Gradient ascent on the proximal objective keeps iterates affine in s:
    // a <- a + alpha (2 aa a + lin(s) + (pi_t(s) - a) / eta).
    let step = 1.0 / (1.0 / eta + 2.0 * form.aa.norm());
    let mut gain = policy.gain.clone();
    let mut offset = policy.offset.clone();
    for _ in 0..FALLBACK_STEPS {
        let grad_gain = &form.aa * &gain * 2.0 + &form.lin_state + (&policy.gain - &gain) / eta;
        let grad_offset = &form.aa * &offset * 2.0 + &form.lin_const + (&policy.offset - &offset) / eta;
        gain += grad_gain * step;
        offset += grad_offset * step;
    }
    if gain.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("primal fallback diverged".into()));
    }
    Ok((AffinePolicy::new(gain, offset, policy.action_bound), true))
}
