//! Counterexample search: differential evolution against positivity of
//! the candidate on `D \ H^ε0`, and seeded uniform sampling against the
//! sufficient-decrease condition of the switching controller.
//!
//! Decrease sampling is deterministic given the seed: sample `i` is drawn
//! from its own generator seeded with `seed ⊕ i`, so batches may be
//! evaluated in parallel and reconciled in index order without changing
//! the outcome.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clf_learner::CandidateCLF;
use crate::dynamics::Region;
use crate::switching::{SampleOutcome, SwitchingController};
use crate::Result;

/// Differential evolution (best/1/bin) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub population: usize,
    pub f_weight: f64,
    pub crossover: f64,
    pub generations: usize,
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population: 40,
            f_weight: 0.7,
            crossover: 0.9,
            generations: 200,
            restarts: 3,
            rng_seed: 0,
        }
    }
}

/// Uniform-sampling budget with rule-of-three acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBudget {
    /// Consecutive failure-free samples required to accept.
    pub acceptance_threshold: u64,
    /// Cap on the global sample index.
    pub max_total: u64,
    pub rng_seed: u64,
}

/// Draws a point uniformly from `D \ H^ε0` by rejection.
pub fn sample_outside_h0<R: Rng + ?Sized>(region: &Region, rng: &mut R) -> DVector<f64> {
    loop {
        let x = region.d.sample_uniform(rng);
        if !region.in_h0(&x) {
            return x;
        }
    }
}

/// Minimizes `f` over `D \ H^ε0` with best/1/bin differential evolution
/// and returns the first point where `f ≤ 0`, or `None` after all
/// restarts. Mutants are clamped to `D`; points falling into the eps0
/// ball are replaced by fresh uniform samples.
pub fn minimize_below_zero(
    f: impl Fn(&DVector<f64>) -> f64,
    region: &Region,
    de: &DEConfig,
) -> Option<DVector<f64>> {
    assert!(de.population >= 4, "best/1/bin needs at least 4 members");
    let mut rng = ChaCha8Rng::seed_from_u64(de.rng_seed);
    let rounds = de.restarts.max(1);
    for _round in 0..rounds {
        let mut pop: Vec<DVector<f64>> = (0..de.population)
            .map(|_| sample_outside_h0(region, &mut rng))
            .collect();
        let mut vals: Vec<f64> = pop.iter().map(&f).collect();
        if let Some(i) = vals.iter().position(|&v| v <= 0.0) {
            return Some(pop[i].clone());
        }
        let mut best = argmin(&vals);
        for _gen in 0..de.generations {
            for i in 0..de.population {
                let (r1, r2) = distinct_pair(de.population, i, &mut rng);
                let mut trial = pop[i].clone();
                let dims = trial.len();
                let j_rand = rng.random_range(0..dims);
                for j in 0..dims {
                    if j == j_rand || rng.random_bool(de.crossover) {
                        trial[j] = pop[best][j] + de.f_weight * (pop[r1][j] - pop[r2][j]);
                    }
                }
                region.d.clamp(&mut trial);
                if region.in_h0(&trial) {
                    trial = sample_outside_h0(region, &mut rng);
                }
                let v = f(&trial);
                if v <= 0.0 {
                    return Some(trial);
                }
                if v < vals[i] {
                    pop[i] = trial;
                    vals[i] = v;
                    if v < vals[best] {
                        best = i;
                    }
                }
            }
        }
    }
    None
}

fn argmin(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    best
}

fn distinct_pair<R: Rng + ?Sized>(n: usize, avoid: usize, rng: &mut R) -> (usize, usize) {
    loop {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && a != avoid && b != avoid {
            return (a, b);
        }
    }
}

/// Searches for a point in `D \ H^ε0` where the candidate is ≤ 0.
pub fn falsify_positivity(
    candidate: &CandidateCLF,
    region: &Region,
    de: &DEConfig,
) -> Option<DVector<f64>> {
    minimize_below_zero(|x| candidate.evaluate(x), region, de)
}

/// One logged decrease-falsification sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_index: u64,
    pub x0: Vec<f64>,
    pub outcome: SampleOutcome,
    pub assigned_demo_id: Option<usize>,
    pub switch_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum DecreaseOutcome {
    /// A sample failed the check; synthesis demonstrates from it.
    Counterexample {
        x0: DVector<f64>,
        sample_index: u64,
        samples_consumed: u64,
    },
    /// `acceptance_threshold` consecutive successes.
    Accepted {
        samples_consumed: u64,
        last_streak: u64,
    },
    /// The global sample cap was reached first.
    BudgetExhausted {
        samples_consumed: u64,
        streak: u64,
    },
}

/// Runs the decrease falsifier from global sample index `start_index`
/// with `initial_streak` successes already banked. Stops at the first
/// counterexample, at `acceptance_threshold` consecutive successes, or at
/// the budget cap. Counted samples are reported to `on_record` in index
/// order.
pub fn falsify_decrease(
    controller: &SwitchingController,
    budget: &SamplingBudget,
    start_index: u64,
    initial_streak: u64,
    workers: usize,
    mut on_record: impl FnMut(&SampleRecord),
) -> Result<DecreaseOutcome> {
    let mut streak = initial_streak;
    let mut index = start_index;
    let mut consumed = 0u64;
    let batch = (workers.max(1) * 8) as u64;

    while streak < budget.acceptance_threshold {
        if index >= budget.max_total {
            return Ok(DecreaseOutcome::BudgetExhausted {
                samples_consumed: consumed,
                streak,
            });
        }
        let need = budget.acceptance_threshold - streak;
        let take = batch.min(need).min(budget.max_total - index);
        let indices: Vec<u64> = (index..index + take).collect();
        let evaluate = |i: &u64| -> Result<(u64, DVector<f64>, crate::switching::SampleProbe)> {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed ^ *i);
            let x0 = sample_outside_h0(&controller.region, &mut rng);
            let probe = controller.probe_decrease(&x0)?;
            Ok((*i, x0, probe))
        };
        let results: Vec<_> = if workers > 1 {
            indices.par_iter().map(evaluate).collect::<Vec<_>>()
        } else {
            indices.iter().map(evaluate).collect()
        };
        for res in results {
            let (i, x0, probe) = res?;
            consumed += 1;
            index = i + 1;
            on_record(&SampleRecord {
                sample_index: i,
                x0: x0.iter().copied().collect(),
                outcome: probe.outcome,
                assigned_demo_id: probe.assigned_demo,
                switch_time: probe.switch_time,
            });
            if probe.outcome.is_success() {
                streak += 1;
                if streak >= budget.acceptance_threshold {
                    break;
                }
            } else {
                return Ok(DecreaseOutcome::Counterexample {
                    x0,
                    sample_index: i,
                    samples_consumed: consumed,
                });
            }
        }
    }
    Ok(DecreaseOutcome::Accepted {
        samples_consumed: consumed,
        last_streak: streak,
    })
}

/// Rule of three: after `N` failure-free samples the one-sided 95%
/// confidence interval for the success probability is `(1 − 3/N, 1]`,
/// i.e. the failure probability is bounded by `3/N`.
pub fn rule_of_three_interval(n: u64) -> (f64, f64) {
    assert!(n >= 1);
    ((1.0 - 3.0 / n as f64).max(0.0), 1.0)
}
