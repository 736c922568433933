//! Shapley-value attribution with interventional missingness: a coalition's
//! value is the model's mean score when out-of-coalition factors are taken
//! from a background set.
//!
//! `shapley_exact` enumerates all coalitions (factor count capped at 20);
//! `shapley_sampled` is the permutation-walk Monte Carlo estimator of the
//! same quantity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attribution::{Attribution, AttributionMethod, Scorer};
use crate::data::FactorTable;
use crate::error::{Error, Result};

/// Enumeration bound for the exact method (2^20 coalitions).
pub const MAX_EXACT_FACTORS: usize = 20;

fn check_dims(model: &dyn Scorer, background: &FactorTable, x: &[f64]) -> Result<usize> {
    let f = model.n_factors();
    if x.len() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            actual: x.len(),
        });
    }
    if background.n_factors() != f {
        return Err(Error::DimensionMismatch {
            expected: f,
            actual: background.n_factors(),
        });
    }
    Ok(f)
}

/// Exact Shapley contributions of each factor to `model(x)`, relative to
/// the background expectation.
///
/// Satisfies efficiency: Σφ + baseline = model(x) up to float error.
pub fn shapley_exact(
    model: &dyn Scorer,
    background: &FactorTable,
    x: &[f64],
) -> Result<Attribution> {
    let f = check_dims(model, background, x)?;
    if f > MAX_EXACT_FACTORS {
        return Err(Error::InvalidArgument(format!(
            "{f} factors exceed the exact enumeration bound of {MAX_EXACT_FACTORS}; \
             use the sampled estimator instead"
        )));
    }
    let n_bg = background.n_rows();
    let n_masks = 1usize << f;

    // Coalition values: v[mask] = mean over background rows of the score
    // with in-coalition factors taken from x.
    let mut v = vec![0.0; n_masks];
    let mut z = vec![0.0; f];
    for (mask, value) in v.iter_mut().enumerate() {
        let mut sum = 0.0;
        for r in 0..n_bg {
            let row = background.row(r);
            for j in 0..f {
                z[j] = if mask & (1 << j) != 0 { x[j] } else { row[j] };
            }
            sum += model.score(&z);
        }
        *value = sum / n_bg as f64;
    }

    // Coalition weight by size: |S|!(f−|S|−1)!/f! = 1/(f·C(f−1,|S|)).
    let mut binom = vec![1.0; f];
    for s in 1..f {
        binom[s] = binom[s - 1] * (f - s) as f64 / s as f64;
    }
    let weight: Vec<f64> = binom.iter().map(|c| 1.0 / (f as f64 * c)).collect();

    let mut phi = vec![0.0; f];
    for mask in 0..n_masks {
        let size = (mask as u32).count_ones() as usize;
        for (j, phi_j) in phi.iter_mut().enumerate() {
            let bit = 1usize << j;
            if mask & bit == 0 {
                *phi_j += weight[size] * (v[mask | bit] - v[mask]);
            }
        }
    }
    Ok(Attribution {
        method: AttributionMethod::ShapleyExact,
        phi,
        baseline: v[0],
        seed: None,
    })
}

/// Permutation-sampling Shapley estimator: for each sampled factor order,
/// factors are switched from the background row to `x` one at a time and
/// the score deltas are credited to the switched factor. Unbiased for the
/// exact value; deterministic given the seed.
pub fn shapley_sampled(
    model: &dyn Scorer,
    background: &FactorTable,
    x: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    let f = check_dims(model, background, x)?;
    if n_permutations == 0 {
        return Err(Error::InvalidArgument(
            "at least one permutation is required".into(),
        ));
    }
    let n_bg = background.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..f).collect();
    let mut phi = vec![0.0; f];
    let mut baseline = 0.0;
    for r in 0..n_bg {
        baseline += model.score(background.row(r));
    }
    baseline /= n_bg as f64;

    let mut z = vec![0.0; f];
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        for r in 0..n_bg {
            z.copy_from_slice(background.row(r));
            let mut prev = model.score(&z);
            for &j in &order {
                z[j] = x[j];
                let cur = model.score(&z);
                phi[j] += cur - prev;
                prev = cur;
            }
        }
    }
    let scale = 1.0 / (n_permutations * n_bg) as f64;
    for p in &mut phi {
        *p *= scale;
    }
    Ok(Attribution {
        method: AttributionMethod::ShapleySampled,
        phi,
        baseline,
        seed: Some(seed),
    })
}
