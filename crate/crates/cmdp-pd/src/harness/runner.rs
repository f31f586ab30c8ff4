//! Experiment execution: instance assembly from a config, seed-parallel
//! driver runs, persistence and the parameter sweep.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cmdp::{CmdpInstance, CoordDist, InitialStateDist, RegularizationParams};
use crate::envs::{
    burgers_build, burgers_pair, nav_absolute_pair, nav_build, nav_quadratic_pair, nav_zone_pair, Dynamics,
};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::lq::Policy;
use crate::pgpd::{SgdSchedule, 
    run_approx_pd, run_dual_baseline, run_exact_pd, ApproxMode, DriverOptions, ExactOptions, NuSampler,
    RegressionConfig, RunOutput,
};

use super::config::{AlgoKind, RunConfig, TaskKind};
use super::phi::{obtain_reference, potential_phi, reference_key, sample_probes, SaddleReference};
use super::record::RunRecord;

/// Environment variable bounding the worker pool used for seeds, rollout
/// batches and regression targets.
pub const WORKERS_ENV: &str = "CMDP_PD_WORKERS";

/// Builds the worker pool honoring [`WORKERS_ENV`]; call once at startup.
pub fn init_worker_pool() -> Result<()> {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let workers: usize = raw
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'")))?;
        if workers == 0 {
            return Err(Error::Config(format!("{WORKERS_ENV} must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    Ok(())
}

/// Assembles the constrained-MDP instance described by a config.
pub fn build_instance(config: &RunConfig) -> Result<CmdpInstance> {
    match config.task {
        TaskKind::NavQuadratic | TaskKind::NavAbsolute | TaskKind::NavZone => {
            let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
                config.noise_pos,
                config.noise_pos,
                config.noise_vel,
                config.noise_vel,
            ]));
            let env = nav_build(config.sampling_period, cov)?;
            let (reward, utility) = match config.task {
                TaskKind::NavQuadratic => nav_quadratic_pair(),
                TaskKind::NavAbsolute => nav_absolute_pair(),
                TaskKind::NavZone => nav_zone_pair(),
                TaskKind::Burgers => unreachable!(),
            };
            let init = InitialStateDist::PerCoord(vec![
                CoordDist::Uniform { half_width: config.init_pos_half_width },
                CoordDist::Uniform { half_width: config.init_pos_half_width },
                CoordDist::Gaussian { mean: 0.0, std: config.init_vel_std },
                CoordDist::Gaussian { mean: 0.0, std: config.init_vel_std },
            ]);
            CmdpInstance::new(
                config.gamma,
                config.threshold,
                config.action_bound,
                config.state_clamp,
                config.slack,
                Dynamics::LinearGaussian(env),
                reward,
                utility,
                init,
            )
        }
        TaskKind::Burgers => {
            let env = burgers_build(config.grid_size, config.time_step, config.viscosity, config.fluid_noise)?;
            let (reward, utility) = burgers_pair();
            let d = config.grid_size;
            // Smooth half-sine profile over the interior nodes.
            let profile = DVector::from_iterator(
                d,
                (0..d).map(|i| (std::f64::consts::PI * (i + 1) as f64 / (d + 1) as f64).sin()),
            );
            let init = InitialStateDist::ScaledProfile {
                profile,
                low: config.init_profile_low,
                high: config.init_profile_high,
            };
            CmdpInstance::new(
                config.gamma,
                config.threshold,
                config.action_bound,
                config.state_clamp,
                config.slack,
                Dynamics::Burgers(env),
                reward,
                utility,
                init,
            )
        }
    }
}

pub fn regularization_params(config: &RunConfig, instance: &CmdpInstance) -> Result<RegularizationParams> {
    RegularizationParams::for_instance(instance, config.tau, config.eta)
}

pub fn driver_options(config: &RunConfig, instance: &CmdpInstance) -> Result<DriverOptions> {
    let feature_map = FeatureMap::normalized(
        instance.state_dim(),
        instance.action_dim(),
        config.feature_bias,
        config.nu_state_bound,
        instance.action_bound,
    )?;
    Ok(DriverOptions {
        iterations: config.iterations,
        regression: RegressionConfig {
            steps: config.sgd_steps,
            schedule: SgdSchedule::Decay { kappa0: config.kappa0, multiplier: config.step_multiplier },
            theta_max: config.theta_max,
        },
        dual_rollouts: config.dual_rollouts,
        nu: NuSampler {
            state_dim: instance.state_dim(),
            action_dim: instance.action_dim(),
            state_bound: config.nu_state_bound,
            action_bound: instance.action_bound,
        },
        feature_map,
        max_horizon: config.max_horizon,
        normalized_return: config.normalized_return,
    })
}

/// Result of a finished experiment: the persisted record, file paths and
/// run-health counters.
#[derive(Debug)]
pub struct ExperimentResult {
    pub record: RunRecord,
    pub paths: Vec<PathBuf>,
    pub outputs: Vec<(u64, RunOutput)>,
    pub reference: Option<SaddleReference>,
}

/// Runs one seed of the configured experiment.
pub fn run_seed(
    config: &RunConfig,
    instance: &CmdpInstance,
    params: &RegularizationParams,
    phi_ctx: Option<&(SaddleReference, Vec<DVector<f64>>)>,
    seed: u64,
) -> Result<RunOutput> {
    let hook_params = *params;
    let hook = phi_ctx.map(|(reference, probes)| {
        move |policy: &dyn Policy, lambda: f64| {
            potential_phi(policy, lambda, reference, &hook_params, probes).unwrap_or(f64::NAN)
        }
    });
    let hook_ref: Option<&(dyn Fn(&dyn Policy, f64) -> f64 + Sync)> =
        hook.as_ref().map(|h| h as &(dyn Fn(&dyn Policy, f64) -> f64 + Sync));
    match config.algo {
        AlgoKind::ExactPd => run_exact_pd(instance, params, &ExactOptions::new(config.iterations), hook_ref, seed),
        AlgoKind::ApproxPdModel => {
            let opts = driver_options(config, instance)?;
            run_approx_pd(instance, params, &opts, ApproxMode::ModelBased, hook_ref, seed)
        }
        AlgoKind::ApproxPdSampled => {
            let opts = driver_options(config, instance)?;
            run_approx_pd(instance, params, &opts, ApproxMode::SampleBased, hook_ref, seed)
        }
        AlgoKind::DualBaseline => {
            let opts = driver_options(config, instance)?;
            run_dual_baseline(instance, params, &opts, hook_ref, seed)
        }
    }
}

/// Runs every seed of the experiment (seed-parallel), assembles the record,
/// persists the CSV files and prints a one-line summary per experiment.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let instance = build_instance(config)?;
    let params = regularization_params(config, &instance)?;
    let out_dir = Path::new(&config.output_dir);

    let phi_ctx = if config.track_phi {
        let reference = obtain_reference(config, &instance, out_dir)?;
        let probes = sample_probes(
            &instance,
            &reference,
            config.phi_probes,
            &reference_key(config),
            config.max_horizon,
        )?;
        Some((reference, probes))
    } else {
        None
    };

    let outputs: Vec<Result<(u64, RunOutput)>> = config
        .seeds
        .par_iter()
        .map(|seed| run_seed(config, &instance, &params, phi_ctx.as_ref(), *seed).map(|out| (*seed, out)))
        .collect();
    let outputs: Result<Vec<(u64, RunOutput)>> = outputs.into_iter().collect();
    let outputs = outputs?;

    let per_seed: Vec<(u64, Vec<crate::pgpd::IterRow>)> =
        outputs.iter().map(|(seed, out)| (*seed, out.rows.clone())).collect();
    let record = RunRecord::assemble(&config.experiment, per_seed)?;
    let paths = record.persist(out_dir)?;

    let clamps: u64 = outputs.iter().map(|(_, o)| o.total_clamp_events).sum();
    let caps: u64 = outputs.iter().flat_map(|(_, o)| o.rows.iter().map(|r| r.cap_hits)).sum();
    let fallbacks: u64 = outputs
        .iter()
        .flat_map(|(_, o)| o.rows.iter().map(|r| u64::from(r.fallbacks)))
        .sum();
    let last = record.aggregate.last().expect("at least one iteration");
    eprintln!(
        "[{}] {} seeds x {} iterations | last v_r {:.4} v_g {:.4} lambda {:.4} | clamps {} cap_hits {} fallbacks {}",
        config.experiment,
        config.seeds.len(),
        config.iterations,
        last.mean_v_r,
        last.mean_v_g,
        last.mean_lambda,
        clamps,
        caps,
        fallbacks,
    );

    Ok(ExperimentResult { record, paths, outputs, reference: phi_ctx.map(|(r, _)| r) })
}

/// Cartesian-product sweep over `key=v1,v2,...` grids. Each combination
/// runs as its own experiment with a suffixed identifier.
pub fn run_sweep(base: &RunConfig, grids: &[(String, Vec<String>)]) -> Result<Vec<ExperimentResult>> {
    if grids.is_empty() {
        return Err(Error::Config("sweep needs at least one --grid key=v1,v2,...".into()));
    }
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grids {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for value in values {
                let mut extended = combo.clone();
                extended.push((key.clone(), value.clone()));
                next.push(extended);
            }
        }
        combos = next;
    }
    let mut results = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut config = base.clone();
        let mut suffix = String::new();
        for (key, value) in &combo {
            config.apply_override(key, value)?;
            suffix.push_str(&format!("_{key}-{value}"));
        }
        config.experiment = format!("{}{}", base.experiment, suffix);
        results.push(run_experiment(&config)?);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::preset;

    #[test]
    fn tiny_experiment_row_counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = preset("nav-quadratic").unwrap();
        config.iterations = 10;
        config.seeds = vec![0, 1];
        config.output_dir = dir.path().to_string_lossy().to_string();
        config.experiment = "tiny".into();
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.record.per_seed.len(), 2);
        for (_, rows) in &result.record.per_seed {
            assert_eq!(rows.len(), 10);
        }
        assert_eq!(result.record.aggregate.len(), 10);

        // Byte-identical rerun.
        let bytes: Vec<Vec<u8>> = result.paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        run_experiment(&config).unwrap();
        let again: Vec<Vec<u8>> = result.paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(bytes, again);
    }

    #[test]
    fn aggregate_file_matches_independent_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = preset("nav-quadratic").unwrap();
        config.iterations = 6;
        config.seeds = vec![0, 1, 2];
        config.output_dir = dir.path().to_string_lossy().to_string();
        config.experiment = "aggcheck".into();
        let result = run_experiment(&config).unwrap();
        // Recompute aggregates from the per-seed files on disk.
        let mut series = Vec::new();
        for seed in &config.seeds {
            let path = result.record.seed_path(dir.path(), *seed);
            series.push(super::super::record::read_seed_csv(&path).unwrap());
        }
        for (t, agg) in result.record.aggregate.iter().enumerate() {
            let vals: Vec<f64> = series.iter().map(|rows| rows[t].v_r).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((agg.mean_v_r - mean).abs() < 1e-12);
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() as f64 - 1.0);
            assert!((agg.std_v_r - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_produces_suffixed_experiments() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = preset("nav-quadratic").unwrap();
        config.iterations = 5;
        config.seeds = vec![0];
        config.output_dir = dir.path().to_string_lossy().to_string();
        config.experiment = "sw".into();
        let grids = vec![("eta".to_string(), vec!["0.01".to_string(), "0.001".to_string()])];
        let results = run_sweep(&config, &grids).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].record.experiment, "sw_eta-0.01");
        assert_eq!(results[1].record.experiment, "sw_eta-0.001");
    }

    #[test]
    fn burgers_instance_builds() {
        let config = preset("burgers").unwrap();
        let instance = build_instance(&config).unwrap();
        assert_eq!(instance.state_dim(), 10);
        assert_eq!(instance.action_dim(), 10);
        // Initial profile is a nonnegative bump.
        let mean = instance.init.mean();
        assert!(mean.iter().all(|v| *v >= 0.0));
        assert!(mean.max() > 0.9);
    }
}
