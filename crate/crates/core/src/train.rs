//! Bookkeeping shared by the training procedures: epoch logs and shuffled batching.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{Matrix, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Extractor + classifier head with cross-entropy.
    Pretrain,
    /// Encoder/decoder reconstruction through the channel, extractor frozen.
    Reconstruct,
    /// All parts jointly with cross-entropy through the channel.
    FineTune,
    /// Single-stage end-to-end training (JSCC FC).
    EndToEnd,
    /// Rate + λ·cross-entropy (digital scheme).
    RateAccuracy,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Reconstruct => "reconstruct",
            Stage::FineTune => "finetune",
            Stage::EndToEnd => "end_to_end",
            Stage::RateAccuracy => "rate_accuracy",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    /// 0-based within the stage.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn push(&mut self, stage: Stage, epoch: usize, learning_rate: f64, loss: f64) {
        log::debug!("{stage} epoch {epoch} lr {learning_rate} loss {loss:.6}");
        self.records.push(EpochRecord { stage, epoch, learning_rate, loss });
    }

    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    /// Stages in the order they first appear.
    pub fn stages(&self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.stage) {
                out.push(r.stage);
            }
        }
        out
    }

    /// `(epochs, [(first epoch, lr), ...])` for one stage, with consecutive equal rates merged.
    pub fn schedule(&self, stage: Stage) -> (usize, Vec<(usize, f64)>) {
        let mut runs: Vec<(usize, f64)> = Vec::new();
        let mut epochs = 0;
        for r in self.stage(stage) {
            epochs += 1;
            if runs.last().is_none_or(|&(_, lr)| lr != r.learning_rate) {
                runs.push((r.epoch, r.learning_rate));
            }
        }
        (epochs, runs)
    }
}

impl fmt::Display for TrainingLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{}\t{}\t{}\t{:.6}", r.stage, r.epoch, r.learning_rate, r.loss)?;
        }
        Ok(())
    }
}

/// Row indices for one epoch, shuffled and split into batches (the last may be short).
pub fn shuffled_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Fails with a non-finite error if `loss` is NaN or infinite.
pub(crate) fn check_loss(loss: f64, stage: Stage, epoch: usize) -> Result<(), NnError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(NnError::NonFinite(format!("{stage} loss at epoch {epoch}")))
    }
}

pub(crate) fn add_assign(a: &mut Matrix, b: &Matrix) {
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x += y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn batches_cover_every_row_once() {
        let b = shuffled_batches(37, 16, &mut seed::rng(1, &[]));
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![16, 16, 5]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn schedule_merges_runs() {
        let mut log = TrainingLog::default();
        for e in 0..5 {
            log.push(Stage::EndToEnd, e, if e < 3 { 0.01 } else { 0.001 }, 1.0);
        }
        log.push(Stage::Pretrain, 0, 0.5, 1.0);
        assert_eq!(log.schedule(Stage::EndToEnd), (5, vec![(0, 0.01), (3, 0.001)]));
        assert_eq!(log.schedule(Stage::FineTune), (0, vec![]));
    }
}
