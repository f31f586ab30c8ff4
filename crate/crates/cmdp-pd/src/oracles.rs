//! Independent reference computations: dense grid searches, truncated-sum
//! Monte-Carlo values, direct least squares and covariance spectra.
//!
//! Nothing here shares code with the solver paths it is used to check;
//! these routines exist so tests (and the `oracle` CLI subcommand) can
//! compare the implementation against a second, slower route.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cmdp::CmdpInstance;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::lq::Policy;
use crate::pgpd::NuSampler;
use crate::rng::{kahan_sum, stream};
use crate::rollout::RewardSelector;

/// Dense argmin of a scalar function on `[lo, hi]` with the given pitch.
pub fn grid_argmin_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, pitch: f64) -> f64 {
    let steps = ((hi - lo) / pitch).round() as usize;
    let mut best_x = lo;
    let mut best = f(lo);
    for i in 1..=steps {
        let x = lo + i as f64 * pitch;
        let v = f(x);
        if v < best {
            best = v;
            best_x = x;
        }
    }
    best_x
}

/// Dense argmax of a function over the action box `[-bound, bound]^d` with
/// the given pitch; supports one- and two-dimensional actions (higher
/// dimensions are out of reach for a dense grid).
pub fn grid_argmax_box(
    f: &(dyn Fn(&DVector<f64>) -> f64 + Sync),
    dim: usize,
    bound: f64,
    pitch: f64,
) -> Result<DVector<f64>> {
    let steps = (2.0 * bound / pitch).round() as usize;
    let coord = |i: usize| -bound + i as f64 * pitch;
    match dim {
        1 => {
            let (i, _) = (0..=steps)
                .map(|i| (i, f(&DVector::from_element(1, coord(i)))))
                .fold((0, f64::NEG_INFINITY), |acc, it| if it.1 > acc.1 { it } else { acc });
            Ok(DVector::from_element(1, coord(i)))
        }
        2 => {
            let rows: Vec<(usize, usize, f64)> = (0..=steps)
                .into_par_iter()
                .map(|i| {
                    let mut best = (i, 0usize, f64::NEG_INFINITY);
                    let mut a = DVector::zeros(2);
                    a[0] = coord(i);
                    for j in 0..=steps {
                        a[1] = coord(j);
                        let v = f(&a);
                        if v > best.2 {
                            best = (i, j, v);
                        }
                    }
                    best
                })
                .collect();
            let (i, j, _) = rows
                .into_iter()
                .fold((0, 0, f64::NEG_INFINITY), |acc, it| if it.2 > acc.2 { it } else { acc });
            Ok(DVector::from_vec(vec![coord(i), coord(j)]))
        }
        d => Err(Error::InvalidParameter(format!("dense action grid supports dim 1 or 2, got {d}"))),
    }
}

/// Mean and standard error of `n` truncated discounted sums under the
/// policy: each rollout runs exactly `horizon` steps with explicit
/// `gamma^t` weights. With `gamma^horizon * max|r| / (1 - gamma)` below the
/// tolerance of interest this is an unbiased-enough second oracle for `V`.
pub fn truncated_value(
    instance: &CmdpInstance,
    policy: &dyn Policy,
    selector: RewardSelector,
    horizon: usize,
    n: usize,
    seed: u64,
    path: &[u64],
) -> Result<(f64, f64)> {
    let gamma = instance.gamma;
    let values: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut full_path = path.to_vec();
            full_path.push(i as u64);
            let mut rng = stream(seed, &full_path);
            let mut s = instance.init.sample(&mut rng);
            let mut disc = 1.0;
            let mut acc = 0.0;
            for _ in 0..horizon {
                let a = policy.act(&s);
                acc += disc * selector.eval(instance, &s, &a);
                disc *= gamma;
                let (next, _) = instance.step(&s, &a, &mut rng)?;
                s = next;
            }
            Ok(acc)
        })
        .collect();
    let values: Result<Vec<f64>> = values.into_iter().collect();
    let values = values?;
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// Direct least-squares fit of `targets` on the feature map at the given
/// points, via SVD. Returns the coefficient vector and the maximum
/// absolute residual.
pub fn lstsq_fit(
    map: &FeatureMap,
    points: &[(DVector<f64>, DVector<f64>)],
    targets: &[f64],
) -> Result<(DVector<f64>, f64)> {
    if points.len() != targets.len() || points.is_empty() {
        return Err(Error::InvalidParameter("least squares needs matching, nonempty inputs".into()));
    }
    let mut design = DMatrix::zeros(points.len(), map.dim());
    for (row, (s, a)) in points.iter().enumerate() {
        let phi = map.phi(s, a)?;
        design.row_mut(row).copy_from(&phi.transpose());
    }
    let rhs = DVector::from_column_slice(targets);
    let svd = design.clone().svd(true, true);
    let theta = svd
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::NonFinite(format!("least-squares solve failed: {e}")))?;
    let residual = (design * &theta - rhs).abs().max();
    Ok((theta, residual))
}

/// Monte-Carlo estimate of the feature covariance spectrum under the
/// uniform sampling distribution: returns `(min positive eigenvalue,
/// max eigenvalue)`. The minimum positive eigenvalue is the covariance
/// floor `kappa0` that the SGD schedule wants; exact zeros from the
/// symmetry-duplicated coordinates are skipped.
pub fn feature_covariance_bounds(
    map: &FeatureMap,
    nu: &NuSampler,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let dim = map.dim();
    let mut second = DMatrix::zeros(dim, dim);
    let mut rng = stream(seed, &[0xC0]);
    for _ in 0..samples {
        let (s, a) = nu.sample(&mut rng);
        let phi = map.phi(&s, &a)?;
        second.syger(1.0, &phi, &phi, 1.0);
    }
    second /= samples as f64;
    // syger fills the lower triangle; mirror it.
    for i in 0..dim {
        for j in (i + 1)..dim {
            second[(i, j)] = second[(j, i)];
        }
    }
    let eigen = second.symmetric_eigen();
    let max = eigen.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Duplicated coordinates make about half the spectrum exactly zero;
    // treat anything below a relative floor as such.
    let min_positive = eigen
        .eigenvalues
        .iter()
        .copied()
        .filter(|v| *v > max * 1e-10)
        .fold(f64::INFINITY, f64::min);
    Ok((min_positive, max))
}
