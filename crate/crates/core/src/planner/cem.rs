//! Cross-entropy method over a flat parameter vector.
//!
//! The vector is split into blocks. Candidate `i` of generation `g` draws
//! block `b` from its own stream keyed by `(seed, g, i, b)`, so two searches
//! that share a leading block see identical draws for it.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub generations: usize,
    pub init_std: f64,
    /// Lower bound on every coordinate's sampling variance.
    pub var_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 128,
            elite_frac: 0.125,
            generations: 40,
            init_std: 0.5,
            var_floor: 1e-4,
        }
    }
}

impl CemConfig {
    pub fn elite_count(&self) -> usize {
        ((self.elite_frac * self.population as f64).ceil() as usize).clamp(1, self.population.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub best: Vec<f64>,
    pub best_score: f64,
    pub evals: usize,
    /// Best score seen so far, after each generation.
    pub history: Vec<f64>,
}

/// Maximize `objective` over vectors with the given block sizes.
///
/// `start` is the initial sampling mean (zeros when absent). `incumbents`
/// are evaluated alongside the first generation. Non-finite scores are
/// discarded; the search fails only if every evaluation was non-finite.
pub fn maximize(
    blocks: &[usize],
    cfg: &CemConfig,
    seed: u64,
    start: Option<&[f64]>,
    incumbents: &[Vec<f64>],
    mut objective: impl FnMut(&[f64]) -> f64,
) -> Result<CemOutcome> {
    let dim: usize = blocks.iter().sum();
    let mut mean = match start {
        Some(s) if s.len() == dim => s.to_vec(),
        Some(s) => {
            return Err(Error::Planning(format!(
                "start vector has {} entries, expected {dim}",
                s.len()
            )))
        }
        None => vec![0.0; dim],
    };
    if let Some(bad) = incumbents.iter().find(|c| c.len() != dim) {
        return Err(Error::Planning(format!(
            "incumbent has {} entries, expected {dim}",
            bad.len()
        )));
    }
    let mut std = vec![cfg.init_std; dim];
    let n_elite = cfg.elite_count();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evals = 0;
    let mut history = Vec::with_capacity(cfg.generations);

    for g in 0..cfg.generations {
        let mut population: Vec<Vec<f64>> = if g == 0 { incumbents.to_vec() } else { Vec::new() };
        for i in 0..cfg.population {
            let mut x = Vec::with_capacity(dim);
            let mut offset = 0;
            for (b, &len) in blocks.iter().enumerate() {
                let mut rng = seed::rng(seed, &[seed::tag::CEM, g as u64, i as u64, b as u64]);
                for d in offset..offset + len {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x.push(mean[d] + std[d] * z);
                }
                offset += len;
            }
            population.push(x);
        }

        let mut scored: Vec<(usize, f64)> = Vec::with_capacity(population.len());
        for (i, x) in population.iter().enumerate() {
            let score = objective(x);
            evals += 1;
            if !score.is_finite() {
                continue;
            }
            if best.as_ref().map_or(true, |(_, b)| score > *b) {
                best = Some((x.clone(), score));
            }
            scored.push((i, score));
        }
        history.push(best.as_ref().map_or(f64::NEG_INFINITY, |(_, b)| *b));
        if scored.is_empty() {
            continue;
        }
        // Stable: equal scores keep population order.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let elites = &scored[..n_elite.min(scored.len())];
        let k = elites.len() as f64;
        for d in 0..dim {
            let m = elites.iter().map(|(i, _)| population[*i][d]).sum::<f64>() / k;
            let v = elites
                .iter()
                .map(|(i, _)| {
                    let e = population[*i][d] - m;
                    e * e
                })
                .sum::<f64>()
                / k;
            mean[d] = m;
            std[d] = v.max(cfg.var_floor).sqrt();
        }
    }

    let (best, best_score) = best.ok_or_else(|| {
        Error::Planning(format!("all {evals} candidate evaluations were non-finite"))
    })?;
    Ok(CemOutcome {
        best,
        best_score,
        evals,
        history,
    })
}
