//! Boltzmann-like selection of collocation nodes.
//!
//! Node `i` is weighted by `exp(−C̄ / (C_i + ε))`, where `C_i` is the mean
//! correction magnitude at the node over the training snapshots. Nodes with
//! large corrections are therefore drawn more often.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;
use crate::math::{ceil, exp, sqrt};

/// How the normalization `C̄` is derived from the node means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDistribution {
    pub probabilities: Vec<f64>,
    pub mean_corrections: Vec<f64>,
    pub normalizer: f64,
    pub epsilon: f64,
}

/// Mean correction magnitude per node. `corrections` has one snapshot per
/// row, laid out point-major with `d_field` components per node.
pub fn mean_correction_magnitudes(corrections: &DenseMatrix, d_field: usize) -> Result<Vec<f64>> {
    if corrections.rows() == 0 {
        return Err(invalid!("need at least one correction snapshot"));
    }
    if d_field == 0 || corrections.cols() % d_field != 0 {
        return Err(invalid!("correction length {} not divisible by d_field {}", corrections.cols(), d_field));
    }
    let n_nodes = corrections.cols() / d_field;
    let mut c = vec![0.0; n_nodes];
    for j in 0..corrections.rows() {
        let row = corrections.row(j);
        for (i, ci) in c.iter_mut().enumerate() {
            let node = &row[i * d_field..(i + 1) * d_field];
            *ci += sqrt(node.iter().map(|v| v * v).sum());
        }
    }
    let n = corrections.rows() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    Ok(c)
}

/// Default `ε`: `1e-6 · max C_i`.
pub fn default_epsilon(mean_corrections: &[f64]) -> f64 {
    1e-6 * mean_corrections.iter().fold(0.0f64, |a, &b| a.max(b))
}

/// Node probabilities from per-node mean corrections.
///
/// If every `C_i` is zero the distribution falls back to uniform.
pub fn node_probabilities_from_means(
    mean_corrections: Vec<f64>,
    epsilon: f64,
    normalization: Normalization,
) -> Result<NodeDistribution> {
    let n = mean_corrections.len();
    if n == 0 {
        return Err(invalid!("no nodes"));
    }
    let c_max = mean_corrections.iter().fold(0.0f64, |a, &b| a.max(b));
    let normalizer = match normalization {
        Normalization::Mean => mean_corrections.iter().sum::<f64>() / n as f64,
        Normalization::Max => c_max,
    };
    if c_max == 0.0 {
        return Ok(NodeDistribution {
            probabilities: vec![1.0 / n as f64; n],
            mean_corrections,
            normalizer,
            epsilon,
        });
    }
    if !(epsilon > 0.0) {
        return Err(invalid!("epsilon must be positive, got {}", epsilon));
    }
    let weights: Vec<f64> = mean_corrections
        .iter()
        .map(|&c| exp(-normalizer / (c + epsilon)))
        .collect();
    let total: f64 = weights.iter().sum();
    let probabilities = weights.iter().map(|w| w / total).collect();
    Ok(NodeDistribution {
        probabilities,
        mean_corrections,
        normalizer,
        epsilon,
    })
}

/// Node probabilities from per-snapshot correction fields, with `C̄` the
/// mean of `C_i`.
pub fn node_probabilities(corrections: &DenseMatrix, d_field: usize, epsilon: f64) -> Result<NodeDistribution> {
    let means = mean_correction_magnitudes(corrections, d_field)?;
    node_probabilities_from_means(means, epsilon, Normalization::Mean)
}

/// Draws `⌈fraction · N⌉` distinct nodes without replacement, each draw
/// proportional to the remaining probabilities. Indices come back sorted.
pub fn sample_nodes(dist: &NodeDistribution, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid!("fraction must lie in (0, 1], got {}", fraction));
    }
    let n = dist.probabilities.len();
    let k = (ceil(fraction * n as f64) as usize).clamp(1, n);
    if k == n {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = dist.probabilities.clone();
    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    last_positive = i;
                    acc += w;
                    if target < acc {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            // Only zero-probability nodes remain: draw uniformly among them.
            let remaining: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            remaining[rng.gen_range(0..remaining.len())]
        };
        taken[pick] = true;
        weights[pick] = 0.0;
        chosen.push(pick);
    }
    chosen.sort_unstable();
    Ok(chosen)
}
