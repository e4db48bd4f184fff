use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, SampleId, UpdateBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub incremental_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            incremental_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train_fraction, self.incremental_fraction, self.test_fraction];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidPlan(format!("fractions must lie in [0, 1]: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPlan(format!("fractions sum to {sum}")));
        }
        Ok(())
    }
}

/// One seeded shuffle, then contiguous train / incremental / test slices.
pub fn split(samples: &[Sample], plan: &SplitPlan) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    plan.validate()?;
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let n_train = ((n as f64 * plan.train_fraction).round() as usize).min(n);
    let n_inc = ((n as f64 * plan.incremental_fraction).round() as usize).min(n - n_train);
    let take = |r: std::ops::Range<usize>| -> Vec<Sample> { order[r].iter().map(|&i| samples[i].clone()).collect() };
    Ok((take(0..n_train), take(n_train..n_train + n_inc), take(n_train + n_inc..n)))
}

/// Up to `limit` samples drawn uniformly without replacement, in their
/// original order.
pub fn subsample(samples: &[Sample], limit: usize, seed: u64) -> Vec<Sample> {
    if limit >= samples.len() {
        return samples.to_vec();
    }
    let mut picked = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), samples.len(), limit).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| samples[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub rounds: usize,
    pub add_per_round: usize,
    pub remove_per_round: usize,
    pub seed: u64,
}

/// Draws every round's batch up front. Removals are sampled without
/// replacement from the model as it will be at that round.
pub fn schedule_rounds(pool: &[Sample], model_ids: &[SampleId], schedule: &RoundSchedule) -> Result<Vec<UpdateBatch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let mut current: Vec<SampleId> = model_ids.to_vec();
    let mut next = 0;
    let mut out = Vec::with_capacity(schedule.rounds);
    for round in 0..schedule.rounds {
        let available = pool.len() - next;
        if available < schedule.add_per_round {
            return Err(Error::PoolExhausted { round, needed: schedule.add_per_round, available });
        }
        if schedule.remove_per_round > current.len() {
            return Err(Error::ScheduleInfeasible { requested: schedule.remove_per_round, available: current.len() });
        }
        let add: Vec<Sample> = order[next..next + schedule.add_per_round].iter().map(|&i| pool[i].clone()).collect();
        next += schedule.add_per_round;
        let mut picked = index::sample(&mut rng, current.len(), schedule.remove_per_round).into_vec();
        picked.sort_unstable();
        let remove: Vec<SampleId> = picked.iter().map(|&k| current[k]).collect();
        for &k in picked.iter().rev() {
            current.remove(k);
        }
        current.extend(add.iter().map(|s| s.id));
        out.push(UpdateBatch::new(add, remove));
    }
    Ok(out)
}
