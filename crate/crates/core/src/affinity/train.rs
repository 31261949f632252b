use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dan_forward, loss_gradients, DanModel, LossKind, PairTensor, DEFAULT_HIDDEN, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::matrix::LabelMatrix;

/// One frame's association problem: pair features and the identity labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationSample {
    pub pairs: PairTensor,
    pub labels: LabelMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub margin: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            lr: 0.001,
            epochs: 20,
            margin: 0.2,
            seed: 42,
            loss: LossKind::Affinity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: DanModel,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

impl TrainReport {
    /// `epoch,loss` CSV.
    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in self.loss_curve.iter().enumerate() {
            s.push_str(&format!("{},{:.9}\n", e + 1, l));
        }
        s
    }
}

/// Plain SGD with one sample (one frame's matrix) per step.
///
/// Sample order is reshuffled every epoch from a generator seeded by `cfg.seed`, so training
/// is deterministic.
pub fn dan_train(dataset: &[AssociationSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = dataset[0].pairs.dim();
    if dim != FEATURE_DIM {
        log::debug!("training on non-default feature width {dim}");
    }
    if let Some(bad) = dataset.iter().find(|s| s.pairs.dim() != dim) {
        return Err(Error::shape_mismatch(&[dim], &[bad.pairs.dim()]));
    }
    let mut model = DanModel::new(dim, cfg.hidden, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut params = model.parameters();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &idx in &order {
            let sample = &dataset[idx];
            let (loss, grads) =
                loss_gradients(&model, &sample.pairs, &sample.labels, cfg.loss, cfg.margin)?;
            total += loss;
            for (p, g) in params.iter_mut().zip(grads.flatten()) {
                *p -= cfg.lr * g;
            }
            model.set_parameters(&params)?;
        }
        let mean = total / dataset.len() as f64;
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        loss_curve.push(mean);
    }
    Ok(TrainReport { model, loss_curve })
}

/// Fraction of positive entries that are the strict maximum of both their row and column.
///
/// Returns `None` when the dataset has no positives.
pub fn ranking_accuracy(model: &DanModel, dataset: &[AssociationSample]) -> Result<Option<f64>> {
    let mut positives = 0usize;
    let mut correct = 0usize;
    for sample in dataset {
        let c = dan_forward(model, &sample.pairs)?;
        let g = &sample.labels;
        let (m, n) = c.shape();
        for i in 0..m {
            for j in 0..n {
                if g[(i, j)] != 1.0 {
                    continue;
                }
                positives += 1;
                let v = c[(i, j)];
                let row_max = (0..n).all(|k| k == j || c[(i, k)] < v);
                let col_max = (0..m).all(|p| p == i || c[(p, j)] < v);
                if row_max && col_max {
                    correct += 1;
                }
            }
        }
    }
    Ok((positives > 0).then(|| correct as f64 / positives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            dan_train(&[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let pairs = PairTensor::from_vec(1, 1, 4, vec![0.0; 4]).unwrap();
        let sample = AssociationSample {
            pairs,
            labels: LabelMatrix::identity(1),
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let report = dan_train(&[sample], &cfg).unwrap();
        assert_eq!(report.model, DanModel::new(4, cfg.hidden, cfg.seed));
        assert!(report.loss_curve.is_empty());
    }
}
