//! Primal-dual optimizer drivers: the exact proximal method for
//! linear-quadratic instances, its function-approximation variant with
//! exact or sampled regression targets, and a plain dual-descent baseline.

mod drivers;

pub use drivers::{
    run_approx_pd, run_dual_baseline, run_exact_pd, ApproxMode, DriverOptions, ExactOptions, FinalPolicy,
    IterRow, RunOutput,
};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rayon::prelude::*;

use crate::cmdp::RegularizationParams;
use crate::error::{Error, Result};
use crate::features::{sgd_schedule, sgd_step, FeatureMap, LinearModel, WeightedAverager};
use crate::lq::{clip_box, AffinePolicy, Policy};
use crate::rng::stream;
use crate::rollout::RolloutStats;

/// Current primal-dual iterate.
#[derive(Debug, Clone)]
pub struct PrimalDualState {
    pub policy: FinalPolicy,
    pub lambda: f64,
    pub iteration: usize,
    pub params: RegularizationParams,
}

impl PrimalDualState {
    pub fn initial(d_s: usize, d_a: usize, action_bound: f64, params: RegularizationParams) -> Self {
        Self {
            policy: FinalPolicy::Affine(AffinePolicy::zero(d_s, d_a, action_bound)),
            lambda: 0.0,
            iteration: 0,
            params,
        }
    }
}

/// Closed-form minimizer of the quadratic dual subproblem
/// `lambda (v_g + tau lambda_t) + (1 / 2 eta) (lambda - lambda_t)^2`
/// over `[0, lambda_max]`.
pub fn dual_update(lambda: f64, v_g: f64, tau: f64, eta: f64, lambda_max: f64) -> f64 {
    (lambda - eta * (v_g + tau * lambda)).clamp(0.0, lambda_max)
}

const FALLBACK_STEPS: usize = 200;

#[derive(Clone)]
enum ImplicitSolver {
    /// Factor of `c I - H`; the argmax is the clipped linear solve.
    ClosedForm(Cholesky<f64, Dyn>),
    /// Projected gradient ascent when the quadratic is not strictly
    /// concave; deterministic, started at the origin, so singular
    /// curvature resolves ties toward the minimum-norm maximizer.
    ProjectedAscent { step: f64 },
}

impl std::fmt::Debug for ImplicitSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImplicitSolver::ClosedForm(_) => write!(f, "ClosedForm"),
            ImplicitSolver::ProjectedAscent { step } => write!(f, "ProjectedAscent {{ step: {step} }}"),
        }
    }
}

/// Policy defined implicitly by a fitted model: the action at `s` is
/// `argmax_a phi(s, a)^T theta - c ||a||^2` over the action box, with
/// `c = tau/2 + 1/(2 eta)` (zero for the greedy baseline).
#[derive(Debug, Clone)]
pub struct ImplicitPolicy {
    pub penalty_coef: f64,
    pub action_bound: f64,
    /// `H`: action block of the model quadratic (scale folded in).
    h: DMatrix<f64>,
    /// `H_as`: action-state block, so the solve right-hand side is
    /// `H_as s + h_ab`.
    h_as: DMatrix<f64>,
    h_ab: DVector<f64>,
    solver: ImplicitSolver,
}

impl ImplicitPolicy {
    pub fn new(model: &LinearModel, penalty_coef: f64, map: &FeatureMap, action_bound: f64) -> Result<Self> {
        if model.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model coefficients are not finite".into()));
        }
        if penalty_coef < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "action penalty coefficient must be nonnegative, got {penalty_coef}"
            )));
        }
        let w = map.coefficient_matrix(&model.theta);
        let (d_s, d_a) = (map.state_dim, map.action_dim);
        let h = w.view((d_s, d_s), (d_a, d_a)).into_owned() * map.scale;
        let h_as = w.view((d_s, 0), (d_a, d_s)).into_owned() * map.scale;
        let h_ab = if map.augment_bias {
            w.view((d_s, d_s + d_a), (d_a, 1)).column(0).into_owned() * map.scale
        } else {
            DVector::zeros(d_a)
        };
        let curvature = DMatrix::identity(d_a, d_a) * penalty_coef - &h;
        let solver = match Cholesky::new(curvature) {
            Some(chol) => ImplicitSolver::ClosedForm(chol),
            None => ImplicitSolver::ProjectedAscent {
                step: 1.0 / (2.0 * penalty_coef + 2.0 * h.norm() + 1e-12),
            },
        };
        Ok(Self { penalty_coef, action_bound, h, h_as, h_ab, solver })
    }

    /// Whether the strictly-concave closed form was unavailable.
    pub fn is_fallback(&self) -> bool {
        matches!(self.solver, ImplicitSolver::ProjectedAscent { .. })
    }

    /// Right-hand side of the first-order condition at `s`.
    fn rhs(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.h_as * s + &self.h_ab
    }

    /// The equivalent affine policy `(K, k)` in the closed-form branch;
    /// the fallback branch composes unclipped gradient-ascent iterates,
    /// which stay affine in the state.
    pub fn affine_equivalent(&self) -> AffinePolicy {
        match &self.solver {
            ImplicitSolver::ClosedForm(chol) => AffinePolicy::new(
                chol.solve(&self.h_as),
                chol.solve(&self.h_ab),
                self.action_bound,
            ),
            ImplicitSolver::ProjectedAscent { step } => {
                let (d_a, d_s) = (self.h.nrows(), self.h_as.ncols());
                let mut gain = DMatrix::zeros(d_a, d_s);
                let mut offset = DVector::zeros(d_a);
                for _ in 0..FALLBACK_STEPS {
                    let grad_gain = (&self.h * &gain - &gain * self.penalty_coef) * 2.0 + &self.h_as * 2.0;
                    let grad_offset = (&self.h * &offset - &offset * self.penalty_coef) * 2.0 + &self.h_ab * 2.0;
                    gain += grad_gain * *step;
                    offset += grad_offset * *step;
                }
                AffinePolicy::new(gain, offset, self.action_bound)
            }
        }
    }
}

impl Policy for ImplicitPolicy {
    fn act(&self, s: &DVector<f64>) -> DVector<f64> {
        match &self.solver {
            ImplicitSolver::ClosedForm(chol) => {
                let mut a = chol.solve(&self.rhs(s));
                clip_box(&mut a, self.action_bound);
                a
            }
            ImplicitSolver::ProjectedAscent { step } => {
                let rhs = self.rhs(s);
                let mut a = DVector::zeros(self.h.nrows());
                for _ in 0..FALLBACK_STEPS {
                    let grad = (&self.h * &a - &a * self.penalty_coef + &rhs) * 2.0;
                    a += grad * *step;
                    clip_box(&mut a, self.action_bound);
                }
                a
            }
        }
    }
}

/// The action of the approximate proximal update at one state:
/// `argmax_a phi(s, a)^T theta - c ||a||^2` clipped to the box.
pub fn approx_primal_update(
    model: &LinearModel,
    penalty_coef: f64,
    map: &FeatureMap,
    action_bound: f64,
    s: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(ImplicitPolicy::new(model, penalty_coef, map, action_bound)?.act(s))
}

/// Uniform sampling distribution over the state box times the action box.
#[derive(Debug, Clone, Copy)]
pub struct NuSampler {
    pub state_dim: usize,
    pub action_dim: usize,
    pub state_bound: f64,
    pub action_bound: f64,
}

impl NuSampler {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
        let s = DVector::from_iterator(
            self.state_dim,
            (0..self.state_dim).map(|_| rng.random_range(-self.state_bound..=self.state_bound)),
        );
        let a = DVector::from_iterator(
            self.action_dim,
            (0..self.action_dim).map(|_| rng.random_range(-self.action_bound..=self.action_bound)),
        );
        (s, a)
    }
}

/// Step-size rule for one model fit.
#[derive(Debug, Clone, Copy)]
pub enum SgdSchedule {
    /// `alpha_n = multiplier / (2 kappa0 (n + 2))`: the averaging-friendly
    /// schedule for noisy targets.
    Decay { kappa0: f64, multiplier: f64 },
    /// Fixed step below the stability edge `1 / sup ||phi||^2`; on
    /// noiseless realizable targets this contracts geometrically, which the
    /// decaying schedule cannot do on ill-conditioned feature directions.
    Constant { alpha: f64 },
}

impl SgdSchedule {
    fn step(&self, n: usize) -> f64 {
        match self {
            SgdSchedule::Decay { kappa0, multiplier } => multiplier * sgd_schedule(n, *kappa0),
            SgdSchedule::Constant { alpha } => *alpha,
        }
    }
}

/// Projected-SGD settings for one model fit.
#[derive(Debug, Clone, Copy)]
pub struct RegressionConfig {
    /// Number of SGD steps `N`.
    pub steps: usize,
    pub schedule: SgdSchedule,
    pub theta_max: f64,
}

/// Where a fit starts from.
#[derive(Debug, Clone, Copy, Default)]
pub enum FitInit<'a> {
    /// Fresh fit from zero coefficients.
    #[default]
    Zero,
    /// Continue from an earlier coefficient vector. Regression targets
    /// drift by O(eta) per optimizer iteration, so warm starts let the
    /// poorly-conditioned feature directions converge across iterations.
    Warm(&'a DVector<f64>),
}

/// Fits the augmented action-value model for the current policy: runs `N`
/// projected-SGD steps on targets
/// `J(s_n, a_n) = q_target(s_n, a_n) + eta_inv * anchor(s_n)^T a_n`
/// with `(s_n, a_n)` drawn from `nu`, and returns the triangular-weighted
/// average of the produced iterates.
///
/// `anchor` is the proximal anchor action of the current policy. The
/// model-based path anchors on the raw affine map so the target stays
/// exactly quadratic; the sampled paths anchor on the clipped action the
/// rollouts actually take.
///
/// Target evaluation is fanned out over worker streams derived per sample,
/// so the fit is deterministic for a given `(seed, path)`.
pub fn fit_augmented_model<Q, A>(
    map: &FeatureMap,
    nu: &NuSampler,
    config: &RegressionConfig,
    anchor: A,
    eta_inv: f64,
    q_target: Q,
    init: FitInit<'_>,
    seed: u64,
    path: &[u64],
) -> Result<(LinearModel, RolloutStats)>
where
    Q: Fn(&DVector<f64>, &DVector<f64>, &mut ChaCha8Rng) -> Result<(f64, RolloutStats)> + Sync,
    A: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    if config.steps == 0 {
        return Err(Error::InvalidParameter("regression needs at least one SGD step".into()));
    }
    let samples: Vec<Result<(DVector<f64>, f64, RolloutStats)>> = (0..config.steps)
        .into_par_iter()
        .map(|n| {
            let mut sample_path = path.to_vec();
            sample_path.push(n as u64);
            let mut rng = stream(seed, &sample_path);
            let (s, a) = nu.sample(&mut rng);
            let (q, stats) = q_target(&s, &a, &mut rng)?;
            let target = if eta_inv == 0.0 { q } else { q + eta_inv * anchor(&s).dot(&a) };
            let phi = map.phi(&s, &a)?;
            Ok((phi, target, stats))
        })
        .collect();

    let mut model = LinearModel::zeros(map.dim(), config.theta_max)?;
    if let FitInit::Warm(theta) = init {
        model.theta = crate::features::project_ball(theta, config.theta_max);
    }
    let mut averager = WeightedAverager::new(map.dim());
    let mut stats = RolloutStats::default();
    for (n, sample) in samples.into_iter().enumerate() {
        let (phi, target, sample_stats) = sample?;
        stats.merge(&sample_stats);
        model = sgd_step(&model, &phi, target, config.schedule.step(n))?;
        averager.push(&model.theta);
    }
    let theta = averager.finish()?;
    Ok((LinearModel { theta, theta_max: config.theta_max }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream as rng_stream;

    #[test]
    fn dual_update_examples() {
        // Stationary subproblem leaves lambda unchanged.
        assert_eq!(dual_update(0.7, 0.0, 0.0, 0.3, 10.0), 0.7);
        // First-order condition of the strongly convex subproblem.
        let next = dual_update(0.5, -2.0, 0.01, 0.1, 10.0);
        assert!((next - 0.6995).abs() < 1e-12);
        // Lower clip.
        assert_eq!(dual_update(0.1, 5.0, 0.0, 1.0, 10.0), 0.0);
        // Upper clip.
        assert_eq!(dual_update(9.5, -50.0, 0.0, 1.0, 10.0), 10.0);
    }

    #[test]
    fn dual_update_matches_grid_argmin() {
        let mut rng = rng_stream(6, &[0]);
        for _ in 0..200 {
            let lambda = rng.random_range(0.0..5.0);
            let v_g = rng.random_range(-3.0..3.0);
            let tau = rng.random_range(0.0..0.5);
            let eta = rng.random_range(0.01..1.0);
            let lambda_max = 5.0;
            let closed = dual_update(lambda, v_g, tau, eta, lambda_max);
            let objective = |l: f64| l * (v_g + tau * lambda) + (l - lambda).powi(2) / (2.0 * eta);
            let grid = crate::oracles::grid_argmin_1d(objective, 0.0, lambda_max, 1e-6);
            assert!(
                (closed - grid).abs() < 1e-6 + 1e-6,
                "closed {closed} vs grid {grid}"
            );
        }
    }

    #[test]
    fn zero_model_acts_at_origin() {
        let map = FeatureMap::normalized(2, 2, true, 5.0, 2.0).unwrap();
        let model = LinearModel::zeros(map.dim(), 1e3).unwrap();
        // Positive penalty: pure concave penalty maximized at 0.
        let a = approx_primal_update(&model, 0.5, &map, 2.0, &DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert!(a.norm() < 1e-12);
        // Greedy with zero model: tie resolves to 0.
        let a = approx_primal_update(&model, 0.0, &map, 2.0, &DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert!(a.norm() < 1e-12);
    }

    #[test]
    fn scalar_first_order_condition() {
        // J(s, a) = 2 s a - a^2 through the basis, c = 1/2:
        // maximize 2sa - (3/2) a^2 so a = (2/3) s.
        let map = FeatureMap::new(1, 1, false, 1.0).unwrap();
        // theta indexes (s,a) pairs of z = [s, a]: coordinates
        // [s*s, s*a, a*s, a*a].
        let theta = DVector::from_vec(vec![0.0, 1.0, 1.0, -1.0]);
        let model = LinearModel { theta, theta_max: 1e3 };
        for s in [-1.5, -0.2, 0.4, 2.0] {
            let a = approx_primal_update(&model, 0.5, &map, 10.0, &DVector::from_element(1, s)).unwrap();
            assert!((a[0] - 2.0 * s / 3.0).abs() < 1e-10, "s = {s}, a = {}", a[0]);
        }
    }

    #[test]
    fn implicit_policy_clips_to_box() {
        let map = FeatureMap::new(1, 1, false, 1.0).unwrap();
        let theta = DVector::from_vec(vec![0.0, 5.0, 5.0, -0.5]);
        let model = LinearModel { theta, theta_max: 1e3 };
        let policy = ImplicitPolicy::new(&model, 0.5, &map, 1.0).unwrap();
        let a = policy.act(&DVector::from_element(1, 10.0));
        assert!(a[0].abs() <= 1.0);
    }

    #[test]
    fn affine_equivalent_matches_act() {
        let map = FeatureMap::normalized(3, 2, true, 4.0, 2.0).unwrap();
        let mut rng = rng_stream(8, &[1]);
        let theta = DVector::from_iterator(map.dim(), (0..map.dim()).map(|_| rng.random_range(-1.0..1.0)));
        let model = LinearModel { theta, theta_max: 1e6 };
        let policy = ImplicitPolicy::new(&model, 2.0, &map, 2.0).unwrap();
        assert!(!policy.is_fallback());
        let affine = policy.affine_equivalent();
        for _ in 0..20 {
            let s = DVector::from_iterator(3, (0..3).map(|_| rng.random_range(-4.0..4.0)));
            assert!((policy.act(&s) - affine.act(&s)).norm() < 1e-10);
        }
    }

    #[test]
    fn non_finite_model_rejected() {
        let map = FeatureMap::new(1, 1, false, 1.0).unwrap();
        let theta = DVector::from_vec(vec![0.0, f64::NAN, 0.0, 0.0]);
        let model = LinearModel { theta, theta_max: 1e3 };
        assert!(ImplicitPolicy::new(&model, 0.5, &map, 1.0).is_err());
    }

    #[test]
    fn fit_single_step_composes() {
        // N = 1: one SGD step from zero, trivial average = that step.
        let map = FeatureMap::new(1, 1, false, 1.0).unwrap();
        let nu = NuSampler { state_dim: 1, action_dim: 1, state_bound: 1.0, action_bound: 1.0 };
        let config = RegressionConfig { steps: 1, schedule: SgdSchedule::Decay { kappa0: 1.0, multiplier: 1.0 }, theta_max: 1e3 };
        let policy = AffinePolicy::zero(1, 1, 1.0);
        let (model, _) = fit_augmented_model(
            &map,
            &nu,
            &config,
            |s: &DVector<f64>| policy.act(s),
            0.0,
            |_s, _a, _rng| Ok((1.0, RolloutStats::default())),
            FitInit::Zero,
            3,
            &[0],
        )
        .unwrap();
        // Reproduce by hand: theta_1 = -alpha_0 * 2 * (0 - 1) * phi.
        let mut check_rng = rng_stream(3, &[0, 0]);
        let (s, a) = nu.sample(&mut check_rng);
        let phi = map.phi(&s, &a).unwrap();
        let expect = &phi * (2.0 * sgd_schedule(0, 1.0));
        assert!((model.theta - expect).norm() < 1e-14);
    }

    #[test]
    fn fit_recovers_synthetic_coefficients() {
        // Noiseless realizable targets through the feature map itself. The
        // coefficient matrix must be symmetric: the duplicated Kronecker
        // coordinates make antisymmetric parts invisible to the features.
        let map = FeatureMap::normalized(2, 1, true, 1.0, 1.0).unwrap();
        let n = map.z_dim();
        let mut rng = rng_stream(10, &[2]);
        let mut theta_star = DVector::zeros(map.dim());
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                theta_star[i * n + j] = v;
                theta_star[j * n + i] = v;
            }
        }
        let nu = NuSampler { state_dim: 2, action_dim: 1, state_bound: 1.0, action_bound: 1.0 };
        // kappa0 = measured covariance floor of this map on nu
        // (`oracle kappa0` style audit: 4.1e-3, condition about 21). The
        // projection radius sits a factor 4 above ||theta*||: the schedule's
        // early steps overshoot, and the ball bounds that excursion so the
        // decayed tail can contract it away.
        let config = RegressionConfig { steps: 10_000, schedule: SgdSchedule::Decay { kappa0: 4e-3, multiplier: 1.0 }, theta_max: 10.0 };
        let policy = AffinePolicy::zero(2, 1, 1.0);
        let map_ref = &map;
        let star = theta_star.clone();
        let (model, _) = fit_augmented_model(
            map_ref,
            &nu,
            &config,
            |s: &DVector<f64>| policy.act(s),
            0.0,
            move |s, a, _rng| {
                let phi = map_ref.phi(s, a)?;
                Ok((star.dot(&phi), RolloutStats::default()))
            },
            FitInit::Zero,
            11,
            &[3],
        )
        .unwrap();
        let rel = (&model.theta - &theta_star).norm() / theta_star.norm();
        assert!(rel < 0.1, "synthetic recovery error {rel}");
    }

    #[test]
    fn fit_is_deterministic() {
        let map = FeatureMap::normalized(2, 1, true, 2.0, 1.0).unwrap();
        let nu = NuSampler { state_dim: 2, action_dim: 1, state_bound: 2.0, action_bound: 1.0 };
        let config = RegressionConfig { steps: 500, schedule: SgdSchedule::Decay { kappa0: 0.01, multiplier: 1.0 }, theta_max: 1e3 };
        let policy = AffinePolicy::zero(2, 1, 1.0);
        let run = || {
            let (model, _) = fit_augmented_model(
                &map,
                &nu,
                &config,
                |s: &DVector<f64>| policy.act(s),
                0.0,
                |s, a, _rng| Ok((s.norm() + a.norm(), RolloutStats::default())),
                FitInit::Zero,
                21,
                &[4],
            )
            .unwrap();
            model.theta
        };
        assert_eq!(run(), run());
    }
}
