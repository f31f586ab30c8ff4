//! Saddle-distance metric: squared distance of the iterate
//! `(pi_t, lambda_t)` to a reference pair, averaged over probe states drawn
//! from the reference policy's discounted visitation.
//!
//! The reference is the final iterate of a long, small-step, small-tau run
//! of the exact driver, cached on disk keyed by a hash of every config
//! field it depends on.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmdp::{CmdpInstance, RegularizationParams};
use crate::error::{Error, Result};
use crate::lq::{AffinePolicy, Policy};
use crate::pgpd::{run_exact_pd, ExactOptions, FinalPolicy};
use crate::rng::{stream, tag};
use crate::rollout::sample_visitation_state;

use super::config::RunConfig;

/// Approximate saddle pair used as the reference of the metric.
#[derive(Debug, Clone)]
pub struct SaddleReference {
    pub policy: AffinePolicy,
    pub lambda: f64,
}

/// `phi = 0.5 * mean_probes ||pi*(s) - pi_t(s)||^2
///        + (lambda* - lambda_t)^2 / (2 (1 + eta tau))`.
pub fn potential_phi(
    policy: &dyn Policy,
    lambda: f64,
    reference: &SaddleReference,
    params: &RegularizationParams,
    probes: &[DVector<f64>],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InvalidParameter("saddle-distance metric needs probe states".into()));
    }
    let mut acc = 0.0;
    for s in probes {
        acc += (reference.policy.act(s) - policy.act(s)).norm_squared();
    }
    let policy_term = 0.5 * acc / probes.len() as f64;
    let dual_gap = reference.lambda - lambda;
    let dual_term = dual_gap * dual_gap / (2.0 * (1.0 + params.eta * params.tau));
    Ok(policy_term + dual_term)
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    key: String,
    rows: usize,
    cols: usize,
    gain: Vec<f64>,
    offset: Vec<f64>,
    action_bound: f64,
    lambda: f64,
}

/// Hash of every config field the reference depends on.
pub fn reference_key(config: &RunConfig) -> String {
    let canonical = format!(
        "task={:?};gamma={};threshold={};action_bound={};state_clamp={};slack={};\
         sampling_period={};noise_pos={};noise_vel={};init_pos={};init_vel={};\
         ref_eta={};ref_tau={};ref_iters={}",
        config.task,
        config.gamma,
        config.threshold,
        config.action_bound,
        config.state_clamp,
        config.slack,
        config.sampling_period,
        config.noise_pos,
        config.noise_vel,
        config.init_pos_half_width,
        config.init_vel_std,
        config.reference_eta,
        config.reference_tau,
        config.reference_iterations,
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join("refs").join(format!("ref-{key}.toml"))
}

fn load_cached(path: &Path, key: &str) -> Option<SaddleReference> {
    let text = std::fs::read_to_string(path).ok()?;
    let cached: CachedReference = toml::from_str(&text).ok()?;
    if cached.key != key || cached.gain.len() != cached.rows * cached.cols {
        return None;
    }
    Some(SaddleReference {
        policy: AffinePolicy::new(
            DMatrix::from_row_slice(cached.rows, cached.cols, &cached.gain),
            DVector::from_vec(cached.offset),
            cached.action_bound,
        ),
        lambda: cached.lambda,
    })
}

fn store_cached(path: &Path, key: &str, reference: &SaddleReference) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let gain = &reference.policy.gain;
    let mut flat = Vec::with_capacity(gain.nrows() * gain.ncols());
    for i in 0..gain.nrows() {
        for j in 0..gain.ncols() {
            flat.push(gain[(i, j)]);
        }
    }
    let cached = CachedReference {
        key: key.to_string(),
        rows: gain.nrows(),
        cols: gain.ncols(),
        gain: flat,
        offset: reference.policy.offset.iter().copied().collect(),
        action_bound: reference.policy.action_bound,
        lambda: reference.lambda,
    };
    let text = toml::to_string(&cached).map_err(|e| Error::Config(format!("cannot serialize reference: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads the cached reference for this config, or produces it by running
/// the exact driver with the configured long-run parameters and caches it.
pub fn obtain_reference(config: &RunConfig, instance: &CmdpInstance, out_dir: &Path) -> Result<SaddleReference> {
    let key = reference_key(config);
    let path = cache_path(out_dir, &key);
    if let Some(reference) = load_cached(&path, &key) {
        return Ok(reference);
    }
    let params = RegularizationParams::for_instance(instance, config.reference_tau, config.reference_eta)?;
    let opts = ExactOptions::new(config.reference_iterations);
    let out = run_exact_pd(instance, &params, &opts, None, 0)?;
    let policy = match out.final_policy {
        FinalPolicy::Affine(p) => p,
        FinalPolicy::Implicit(_) => unreachable!("exact driver returns affine policies"),
    };
    let reference = SaddleReference { policy, lambda: out.final_lambda };
    store_cached(&path, &key, &reference)?;
    Ok(reference)
}

/// Probe states from the reference policy's discounted visitation. The
/// stream is derived from the reference key, so every seed of a run (and
/// every rerun) scores the metric on the same probes.
pub fn sample_probes(
    instance: &CmdpInstance,
    reference: &SaddleReference,
    count: usize,
    key: &str,
    max_horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    let key_seed = key.bytes().fold(0u64, |acc, b| acc.wrapping_mul(131).wrapping_add(u64::from(b)));
    (0..count)
        .map(|i| {
            let mut rng = stream(key_seed, &[tag::PROBES, i as u64]);
            sample_visitation_state(instance, &reference.policy, instance.gamma, max_horizon, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_2d() -> SaddleReference {
        SaddleReference {
            policy: AffinePolicy::new(
                DMatrix::from_row_slice(1, 2, &[-0.5, 0.25]),
                DVector::from_element(1, 0.1),
                5.0,
            ),
            lambda: 1.5,
        }
    }

    #[test]
    fn phi_is_zero_at_the_reference() {
        let reference = reference_2d();
        let params = RegularizationParams::new(0.01, 0.1, 10.0).unwrap();
        let probes: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_vec(vec![i as f64, -(i as f64)]))
            .collect();
        let phi = potential_phi(&reference.policy, reference.lambda, &reference, &params, &probes).unwrap();
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn phi_isolated_dual_term() {
        let reference = reference_2d();
        let (tau, eta) = (0.3, 0.2);
        let params = RegularizationParams::new(tau, eta, 10.0).unwrap();
        let probes = vec![DVector::from_vec(vec![1.0, 2.0])];
        let delta = 0.7;
        let phi =
            potential_phi(&reference.policy, reference.lambda + delta, &reference, &params, &probes).unwrap();
        let expect = delta * delta / (2.0 * (1.0 + eta * tau));
        assert!((phi - expect).abs() < 1e-14);
    }

    #[test]
    fn phi_requires_probes() {
        let reference = reference_2d();
        let params = RegularizationParams::new(0.01, 0.1, 10.0).unwrap();
        assert!(potential_phi(&reference.policy, 0.0, &reference, &params, &[]).is_err());
    }

    #[test]
    fn cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let reference = reference_2d();
        let path = cache_path(dir.path(), "abc");
        store_cached(&path, "abc", &reference).unwrap();
        let loaded = load_cached(&path, "abc").unwrap();
        assert_eq!(loaded.policy.gain, reference.policy.gain);
        assert_eq!(loaded.policy.offset, reference.policy.offset);
        assert_eq!(loaded.lambda, reference.lambda);
        assert!(load_cached(&path, "other-key").is_none());
    }
}
