use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imagio::GrayImage;
use crate::tensor::Sgd;

use super::{to_storage, Model, ModelError, PreparedInput, Result};

/// One line of the training metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Mean loss over the batch before the update.
    pub loss: f64,
    /// Batch samples whose argmax matched the label before the update.
    pub correct: usize,
}

/// Samples whose gradients are held in memory at once.
const GRADIENT_CHUNK: usize = 8;

impl Model {
    /// One SGD step on the mean cross-entropy of `batch`; returns the pre-step loss.
    pub fn train_step(&mut self, batch: &[(GrayImage, usize)]) -> Result<f64> {
        let prepared = batch
            .iter()
            .map(|(img, label)| Ok((self.prepare(img)?, *label)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<(&PreparedInput, usize)> = prepared.iter().map(|(p, l)| (p, *l)).collect();
        Ok(self.train_step_prepared(&refs)?.loss)
    }

    /// [`Model::train_step`] on inputs that are already encoded.
    ///
    /// Per-sample gradients may be computed in parallel but are summed in
    /// batch order, so results do not depend on the thread count.
    pub fn train_step_prepared(&mut self, batch: &[(&PreparedInput, usize)]) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let classes = self.config.num_classes;
        if let Some(&(_, label)) = batch.iter().find(|(_, l)| *l >= classes) {
            return Err(ModelError::LabelOutOfRange { label, classes });
        }
        let mut total: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in batch.chunks(GRADIENT_CHUNK) {
            let results = chunk
                .par_iter()
                .map(|&(input, label)| {
                    let e = self.evaluate(&self.params, input, label, true)?;
                    Ok((e.loss, e.predicted == label, e.grads.expect("backward requested")))
                })
                .collect::<Result<Vec<_>>>()?;
            for (loss, hit, grads) in results {
                loss_sum += loss;
                correct += hit as usize;
                for (acc, g) in total.iter_mut().zip(grads) {
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
        }
        let n = batch.len() as f64;
        for g in &mut total {
            g.iter_mut().for_each(|v| *v /= n);
        }
        let opt = Sgd::new(self.config.lr, self.config.momentum, self.config.weight_decay);
        opt.step(&mut self.params, &total, &mut self.velocity)?;
        for p in &mut self.params {
            p.data_mut().iter_mut().for_each(|v| *v = to_storage(*v));
        }
        Ok(StepOutcome {
            loss: loss_sum / n,
            correct,
        })
    }

    /// Clears the optimizer's momentum buffers.
    pub fn reset_velocity(&mut self) {
        self.velocity.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
    }

    /// Overrides the learning rate (used for zero-lr controls and schedules).
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}
