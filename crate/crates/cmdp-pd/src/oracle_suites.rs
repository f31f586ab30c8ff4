//! The `oracle` CLI suites: run the slow reference computations the tests
//! compare against and print their values, so they can be inspected or
//! regenerated by hand.

use nalgebra::{DMatrix, DVector};

use crate::cmdp::{CmdpInstance, CoordDist, InitialStateDist};
use crate::envs::{nav_build, nav_noise_cov, nav_quadratic_pair, Dynamics, LinearGaussianEnv, RewardSpec};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::harness::{build_instance, preset};
use crate::lq::{eval_policy_quadratic, AffinePolicy, Policy, QuadraticReward};
use crate::oracles::{feature_covariance_bounds, grid_argmax_box, grid_argmin_1d, lstsq_fit, truncated_value};
use crate::pgpd::{dual_update, NuSampler};
use crate::rng::stream;
use crate::rollout::{estimate_v_batch, RewardSelector, RolloutConfig};

/// Scalar linear-quadratic instance shared by tests and suites:
/// `s' = 0.8 s + 0.5 a + w`, `w ~ N(0, 0.04)`, quadratic penalties.
pub fn scalar_instance(gamma: f64) -> CmdpInstance {
    let env = LinearGaussianEnv::new(
        DMatrix::from_element(1, 1, 0.8),
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 0.04),
    )
    .unwrap();
    CmdpInstance::new(
        gamma,
        -5.0,
        50.0,
        1e3,
        1.0,
        Dynamics::LinearGaussian(env),
        RewardSpec::Quadratic {
            g: DMatrix::from_element(1, 1, -1.0),
            r: DMatrix::from_element(1, 1, -0.1),
        },
        RewardSpec::Quadratic {
            g: DMatrix::from_element(1, 1, -0.5),
            r: DMatrix::from_element(1, 1, -0.05),
        },
        InitialStateDist::PerCoord(vec![CoordDist::Gaussian { mean: 0.0, std: 1.0 }]),
    )
    .unwrap()
}

/// Navigation instance with a wide action box and a mild stabilizing
/// policy, kept far from both the action box and the state clamp so the
/// closed form applies on visited states.
pub fn nav_instance_and_policy() -> (CmdpInstance, AffinePolicy) {
    let env = nav_build(0.05, nav_noise_cov()).unwrap();
    let (reward, utility) = nav_quadratic_pair();
    let instance = CmdpInstance::new(
        0.95,
        -90.0,
        10.0,
        1e3,
        1.0,
        Dynamics::LinearGaussian(env),
        reward,
        utility,
        InitialStateDist::PerCoord(vec![
            CoordDist::Uniform { half_width: 5.0 },
            CoordDist::Uniform { half_width: 5.0 },
            CoordDist::Gaussian { mean: 0.0, std: 0.1f64.sqrt() },
            CoordDist::Gaussian { mean: 0.0, std: 0.1f64.sqrt() },
        ]),
    )
    .unwrap();
    let gain = DMatrix::from_row_slice(2, 4, &[-0.4, 0.0, -1.2, 0.0, 0.0, -0.4, 0.0, -1.2]);
    let policy = AffinePolicy::new(gain, DVector::zeros(2), 10.0);
    (instance, policy)
}

fn suite_bellman() -> Result<()> {
    println!("== bellman ==");
    let env = LinearGaussianEnv::new(
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 0.0),
        DMatrix::from_element(1, 1, 0.0),
    )?;
    let reward = QuadraticReward::new(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 0.0));
    let policy = AffinePolicy::zero(1, 1, 10.0);
    let value = eval_policy_quadratic(&env, &policy, &reward, 0.5)?;
    println!("scalar fixed point P = {} (expected -8/7 = {})", value.p[(0, 0)], -8.0 / 7.0);

    let (instance, policy) = nav_instance_and_policy();
    let task_env = instance.dynamics.as_linear_gaussian().unwrap();
    let (g, r) = instance.reward.as_quadratic().unwrap();
    let reward = QuadraticReward::new(g.clone(), r.clone());
    let value = eval_policy_quadratic(task_env, &policy, &reward, instance.gamma)?;
    let mut rng = stream(1, &[0]);
    let mut worst: f64 = 0.0;
    use rand::Rng;
    let noise_term = (&value.p * &task_env.noise_cov).trace();
    for _ in 0..100 {
        let s = DVector::from_iterator(4, (0..4).map(|_| rng.random_range(-5.0..5.0)));
        let a = policy.act(&s);
        let next = &task_env.b0 * &s + &task_env.b1 * &a;
        let backup = reward.eval(&s, &a) + instance.gamma * (value.eval(&next) + noise_term);
        worst = worst.max((value.eval(&s) - backup).abs());
    }
    println!("navigation Bellman residual over 100 probes: max {worst:.3e}");
    Ok(())
}

fn suite_estimators() -> Result<()> {
    println!("== estimators ==");
    let instance = scalar_instance(0.9);
    let policy = AffinePolicy::new(DMatrix::from_element(1, 1, -0.4), DVector::from_element(1, 0.1), 50.0);
    let task_env = instance.dynamics.as_linear_gaussian().unwrap();
    let (g, r) = instance.reward.as_quadratic().unwrap();
    let reward = QuadraticReward::new(g.clone(), r.clone());
    let value = eval_policy_quadratic(task_env, &policy, &reward, instance.gamma)?;
    let closed = value.mean_over(&instance.init);
    let config = RolloutConfig::new(instance.gamma, RewardSelector::Reward);
    let summary = estimate_v_batch(&instance, &policy, &config, 100_000, 0xE5, &[1])?;
    let (trunc_mean, trunc_se) = truncated_value(&instance, &policy, RewardSelector::Reward, 260, 20_000, 0xE5, &[2])?;
    println!("scalar V closed form      : {closed:.6}");
    println!("geometric-horizon mean    : {:.6} (se {:.6})", summary.mean, summary.std_error);
    println!("truncated-sum oracle mean : {trunc_mean:.6} (se {trunc_se:.6})");
    Ok(())
}

fn suite_subproblems() -> Result<()> {
    println!("== subproblems ==");
    let mut rng = stream(0xD0, &[0]);
    use rand::Rng;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.random_range(0.0..5.0);
        let v_g = rng.random_range(-3.0..3.0);
        let tau = rng.random_range(0.0..0.5);
        let eta = rng.random_range(0.01..1.0);
        let closed = dual_update(lambda, v_g, tau, eta, 5.0);
        let grid = grid_argmin_1d(
            |l| l * (v_g + tau * lambda) + (l - lambda).powi(2) / (2.0 * eta),
            0.0,
            5.0,
            1e-6,
        );
        worst = worst.max((closed - grid).abs());
    }
    println!("dual update vs 1e-6 grid argmin over 1000 draws: max gap {worst:.3e}");

    let f = |a: &DVector<f64>| -(a[0] - 0.3).powi(2) - 0.5 * (a[1] + 0.8).powi(2) + 0.2 * a[0] * a[1];
    let argmax = grid_argmax_box(&f, 2, 2.0, 1e-3)?;
    println!("sample 2-d grid argmax: ({:.4}, {:.4})", argmax[0], argmax[1]);
    Ok(())
}

fn suite_regression() -> Result<()> {
    println!("== regression ==");
    let map = FeatureMap::normalized(4, 2, true, 5.0, 5.0)?;
    let mut rng = stream(0xF0, &[0]);
    use rand::Rng;
    let n = map.z_dim();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-2.0..2.0);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let mut points = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..1000 {
        let s = DVector::from_iterator(4, (0..4).map(|_| rng.random_range(-5.0..5.0)));
        let a = DVector::from_iterator(2, (0..2).map(|_| rng.random_range(-5.0..5.0)));
        let mut z = DVector::zeros(n);
        z.rows_mut(0, 4).copy_from(&s);
        z.rows_mut(4, 2).copy_from(&a);
        z[6] = 1.0;
        targets.push((z.transpose() * &w * &z)[(0, 0)]);
        points.push((s, a));
    }
    let (_, residual) = lstsq_fit(&map, &points, &targets)?;
    println!("quadratic-target least-squares max residual: {residual:.3e}");
    Ok(())
}

fn suite_kappa0() -> Result<()> {
    println!("== kappa0 ==");
    for name in ["nav-quadratic", "burgers"] {
        let config = preset(name)?;
        let instance = build_instance(&config)?;
        let map = FeatureMap::normalized(
            instance.state_dim(),
            instance.action_dim(),
            config.feature_bias,
            config.nu_state_bound,
            instance.action_bound,
        )?;
        let nu = NuSampler {
            state_dim: instance.state_dim(),
            action_dim: instance.action_dim(),
            state_bound: config.nu_state_bound,
            action_bound: instance.action_bound,
        };
        let samples = if instance.state_dim() > 4 { 20_000 } else { 100_000 };
        let (min_eig, max_eig) = feature_covariance_bounds(&map, &nu, samples, 0xA1)?;
        println!(
            "{name}: feature covariance spectrum on nu — min positive {min_eig:.3e}, max {max_eig:.3e} \
             (preset kappa0 = {:.1e})",
            config.kappa0
        );
    }
    Ok(())
}

/// Runs one named oracle suite (or `all`).
pub fn run_suite(name: &str) -> Result<()> {
    match name {
        "bellman" => suite_bellman(),
        "estimators" => suite_estimators(),
        "subproblems" => suite_subproblems(),
        "regression" => suite_regression(),
        "kappa0" => suite_kappa0(),
        "all" => {
            suite_bellman()?;
            suite_estimators()?;
            suite_subproblems()?;
            suite_regression()?;
            suite_kappa0()
        }
        other => Err(Error::Config(format!(
            "unknown oracle suite '{other}'; available: bellman, estimators, subproblems, regression, kappa0, all"
        ))),
    }
}
