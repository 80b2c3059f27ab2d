use crate::retrieval::Metric;

/// Settings shared by the per-scheme evaluation routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Channel realizations per query.
    pub trials: usize,
    /// Base seed; every (query, trial) pair derives its own stream from it.
    pub seed: u64,
    pub metric: Metric,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { trials: 1, seed: 0, metric: Metric::Euclidean }
    }
}

impl EvalOptions {
    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
