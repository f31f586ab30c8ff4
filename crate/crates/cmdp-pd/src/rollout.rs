//! Unbiased Monte-Carlo estimation of discounted values with geometric
//! random horizons.
//!
//! Drawing `T` with `P(T = k) = (1 - gamma) * gamma^(k-1)` for `k >= 1` and
//! summing the undiscounted rewards of steps `0..T-1` gives an estimator
//! whose expectation is exactly the discounted value. The raw sum estimates
//! `V` on the same scale as the constraint threshold; the
//! `normalized_return` flag rescales by `(1 - gamma)`.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cmdp::CmdpInstance;
use crate::error::Result;
use crate::lq::Policy;
use crate::rng::{kahan_sum, stream, KahanSum};

/// Which scalar stream a rollout accumulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardSelector {
    Reward,
    Utility,
    /// `g = u - (1 - gamma) * b`.
    TranslatedUtility,
    /// `r + lambda * g - (tau / 2) * ||a||^2`.
    Regularized { lambda: f64, tau: f64 },
    /// `-||a||^2`.
    ActionPenalty,
}

impl RewardSelector {
    pub fn eval(&self, instance: &CmdpInstance, s: &DVector<f64>, a: &DVector<f64>) -> f64 {
        match self {
            RewardSelector::Reward => instance.reward_at(s, a),
            RewardSelector::Utility => instance.utility_at(s, a),
            RewardSelector::TranslatedUtility => instance.translated_utility_at(s, a),
            RewardSelector::Regularized { lambda, tau } => crate::cmdp::regularized_reward(
                instance.reward_at(s, a),
                instance.translated_utility_at(s, a),
                *lambda,
                *tau,
                a,
            ),
            RewardSelector::ActionPenalty => -a.norm_squared(),
        }
    }

    /// State-independent additive constant of the per-step reward. The
    /// translation constant `-(1 - gamma) b` (and its `lambda`-weighted
    /// copy in the composite reward) would otherwise ride the random
    /// horizon and dominate the estimator variance when `|b|` is large.
    pub fn constant_part(&self, instance: &CmdpInstance) -> f64 {
        match self {
            RewardSelector::TranslatedUtility => -(1.0 - instance.gamma) * instance.threshold,
            RewardSelector::Regularized { lambda, .. } => {
                -lambda * (1.0 - instance.gamma) * instance.threshold
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig {
    pub gamma: f64,
    /// Safety cap on the geometric horizon; hits are counted in the stats.
    pub max_horizon: usize,
    /// Return `(1 - gamma) * sum` instead of the raw sum.
    pub normalized_return: bool,
    /// Accumulate the reward with its constant part removed and add that
    /// constant's discounted value `c0 / (1 - gamma)` analytically. Same
    /// expectation, much smaller variance; off reproduces the literal
    /// per-step accumulation.
    pub analytic_constant: bool,
    pub selector: RewardSelector,
}

impl RolloutConfig {
    pub fn new(gamma: f64, selector: RewardSelector) -> Self {
        Self { gamma, max_horizon: 10_000, normalized_return: false, analytic_constant: true, selector }
    }

    fn scale(&self) -> f64 {
        if self.normalized_return {
            1.0 - self.gamma
        } else {
            1.0
        }
    }
}

/// Counters accumulated while estimating.
#[derive(Debug, Clone, Copy, Default)]
pub struct RolloutStats {
    pub rollouts: u64,
    pub cap_hits: u64,
    pub clamp_events: u64,
}

impl RolloutStats {
    pub fn merge(&mut self, other: &RolloutStats) {
        self.rollouts += other.rollouts;
        self.cap_hits += other.cap_hits;
        self.clamp_events += other.clamp_events;
    }
}

/// Draws the geometric horizon `T >= 1` with `P(T = k) = (1-g) g^(k-1)`,
/// capped at `max_horizon`.
pub fn sample_horizon(gamma: f64, max_horizon: usize, rng: &mut ChaCha8Rng) -> (usize, bool) {
    debug_assert!((0.0..1.0).contains(&gamma));
    if gamma == 0.0 {
        return (1, false);
    }
    // Inversion of the geometric CDF: T = ceil(ln(U) / ln(gamma)).
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let t = (u.ln() / gamma.ln()).ceil().max(1.0);
    if t >= max_horizon as f64 {
        (max_horizon, true)
    } else {
        (t as usize, false)
    }
}

fn accumulate_rollout(
    instance: &CmdpInstance,
    policy: &dyn Policy,
    config: &RolloutConfig,
    mut state: DVector<f64>,
    first_action: Option<DVector<f64>>,
    rng: &mut ChaCha8Rng,
    stats: &mut RolloutStats,
) -> Result<f64> {
    let (horizon, capped) = sample_horizon(config.gamma, config.max_horizon, rng);
    stats.rollouts += 1;
    if capped {
        stats.cap_hits += 1;
    }
    let c0 = if config.analytic_constant {
        config.selector.constant_part(instance)
    } else {
        0.0
    };
    let mut acc = KahanSum::default();
    let mut action = first_action.unwrap_or_else(|| policy.act(&state));
    for t in 0..horizon {
        acc.add(config.selector.eval(instance, &state, &action) - c0);
        if t + 1 < horizon {
            let (next, clamped) = instance.step(&state, &action, rng)?;
            if clamped {
                stats.clamp_events += 1;
            }
            state = next;
            action = policy.act(&state);
        }
    }
    Ok(config.scale() * (acc.value() + c0 / (1.0 - config.gamma)))
}

/// One unbiased estimate of `V(pi)`: the start state is drawn from the
/// instance's initial distribution.
pub fn estimate_v(
    instance: &CmdpInstance,
    policy: &dyn Policy,
    config: &RolloutConfig,
    rng: &mut ChaCha8Rng,
    stats: &mut RolloutStats,
) -> Result<f64> {
    let s0 = instance.init.sample(rng);
    accumulate_rollout(instance, policy, config, s0, None, rng, stats)
}

/// One unbiased estimate of `Q(s, a)`: the first transition uses the given
/// action, later actions come from the policy.
pub fn estimate_q(
    instance: &CmdpInstance,
    policy: &dyn Policy,
    s: &DVector<f64>,
    a: &DVector<f64>,
    config: &RolloutConfig,
    rng: &mut ChaCha8Rng,
    stats: &mut RolloutStats,
) -> Result<f64> {
    accumulate_rollout(instance, policy, config, s.clone(), Some(a.clone()), rng, stats)
}

/// Mean, standard error and counters of a batch of independent estimates.
#[derive(Debug, Clone, Copy)]
pub struct EstimateSummary {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub stats: RolloutStats,
}

/// Runs `n` independent `V` estimates on worker streams derived from
/// `(seed, path..., index)` and reduces them in index order with
/// compensated summation, so the result is identical however the batch is
/// scheduled.
pub fn estimate_v_batch(
    instance: &CmdpInstance,
    policy: &dyn Policy,
    config: &RolloutConfig,
    n: usize,
    seed: u64,
    path: &[u64],
) -> Result<EstimateSummary> {
    let samples: Vec<Result<(f64, RolloutStats)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut full_path = path.to_vec();
            full_path.push(i as u64);
            let mut rng = stream(seed, &full_path);
            let mut stats = RolloutStats::default();
            let v = estimate_v(instance, policy, config, &mut rng, &mut stats)?;
            Ok((v, stats))
        })
        .collect();
    summarize(samples)
}

/// Geometric-horizon draw from the discounted state-visitation distribution
/// of `policy`: roll `T - 1` transitions from an initial sample and return
/// the final state.
pub fn sample_visitation_state(
    instance: &CmdpInstance,
    policy: &dyn Policy,
    gamma: f64,
    max_horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let mut s = instance.init.sample(rng);
    let (horizon, _) = sample_horizon(gamma, max_horizon, rng);
    for _ in 0..horizon - 1 {
        let a = policy.act(&s);
        let (next, _) = instance.step(&s, &a, rng)?;
        s = next;
    }
    Ok(s)
}

fn summarize(samples: Vec<Result<(f64, RolloutStats)>>) -> Result<EstimateSummary> {
    let mut values = Vec::with_capacity(samples.len());
    let mut stats = RolloutStats::default();
    for sample in samples {
        let (v, s) = sample?;
        values.push(v);
        stats.merge(&s);
    }
    let n = values.len();
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n as f64 - 1.0).max(1.0);
    Ok(EstimateSummary { mean, std_error: (var / n as f64).sqrt(), n, stats })
}
