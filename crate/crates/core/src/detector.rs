//! The intrusion detector: an MLP classifier trained on store views.

use std::fmt::Write as _;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledMatrix;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, PmRole};
use crate::neural::{one_hot, Activation, Direction, Loss, Mlp, Sgd, TrainConfig};

/// Per-epoch training record; validation scores are present when monitoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub validation_macro_f1: Option<f64>,
    pub validation_f1: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct IdsModel {
    pub net: Mlp,
    pub config: TrainConfig,
    /// Free-form description of the training data, e.g. `hybrid` or `hybrid+pending`.
    pub trained_on: String,
    pub history: Vec<EpochRecord>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn train_ids(data: &LabeledMatrix, config: &TrainConfig) -> Result<IdsModel> {
    train_ids_monitored(data, config, None)
}

/// Minibatch cross-entropy training. When `validation` is given, per-label F1
/// on it is logged after every epoch.
pub fn train_ids_monitored(
    data: &LabeledMatrix,
    config: &TrainConfig,
    validation: Option<&LabeledMatrix>,
) -> Result<IdsModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Data("cannot train the detector on an empty dataset".into()));
    }
    let mut dims = vec![data.dim()];
    dims.extend_from_slice(&config.hidden_layers);
    dims.push(data.class_count);
    let mut net = Mlp::new(&dims, Activation::Relu, Activation::Softmax, config.seed)?;
    let mut opt = Sgd::new(&net, config.learning_rate, config.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d1d5);

    let targets = one_hot(&data.labels, data.class_count);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = data.features.select(Axis(0), batch);
            let y = targets.select(Axis(0), batch);
            let (loss, grads) = net.loss_and_gradients(x.view(), y.view(), Loss::CrossEntropy)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite detector loss at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            opt.step(&mut net, &grads, Direction::Descend)?;
        }
        let mut record = EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            validation_macro_f1: None,
            validation_f1: None,
        };
        if let Some(val) = validation {
            let report = evaluate_net(&net, val)?;
            record.validation_macro_f1 = Some(report.macro_f1);
            record.validation_f1 = Some(report.per_label.iter().map(|m| m.f1).collect());
        }
        history.push(record);
    }
    Ok(IdsModel {
        net,
        config: config.clone(),
        trained_on: String::new(),
        history,
    })
}

fn predict_net(net: &Mlp, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let probs = net.forward(features)?;
    Ok(probs.rows().into_iter().map(argmax).collect())
}

fn evaluate_net(net: &Mlp, data: &LabeledMatrix) -> Result<MetricsReport> {
    let preds = predict_net(net, data.features.view())?;
    MetricsReport::from_predictions(&preds, &data.labels, net.output_dim().max(data.class_count))
}

impl IdsModel {
    pub fn with_description(mut self, trained_on: impl Into<String>) -> Self {
        self.trained_on = trained_on.into();
        self
    }

    pub fn predict(&self, features: ArrayView1<'_, f64>) -> Result<usize> {
        let x = features.insert_axis(Axis(0));
        Ok(predict_net(&self.net, x)?[0])
    }

    pub fn predict_batch(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        predict_net(&self.net, features)
    }

    pub fn evaluate(&self, data: &LabeledMatrix) -> Result<MetricsReport> {
        evaluate_net(&self.net, data)
    }

    pub fn evaluate_as(&self, data: &LabeledMatrix, role: PmRole) -> Result<MetricsReport> {
        Ok(self.evaluate(data)?.with_role(role))
    }

    pub fn accuracy(&self, data: &LabeledMatrix) -> Result<f64> {
        let preds = self.predict_batch(data.features.view())?;
        let hits = preds.iter().zip(&data.labels).filter(|(p, t)| p == t).count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    /// `epoch,loss,validation_macro_f1,f1_0,...` rows.
    pub fn history_csv(&self) -> String {
        let classes = self.net.output_dim();
        let mut out = String::from("epoch,loss,validation_macro_f1");
        for c in 0..classes {
            let _ = write!(out, ",f1_{c}");
        }
        out.push('\n');
        for r in &self.history {
            let _ = write!(out, "{},{}", r.epoch, r.loss);
            let _ = write!(out, ",{}", r.validation_macro_f1.map(|v| v.to_string()).unwrap_or_default());
            for c in 0..classes {
                let v = r.validation_f1.as_ref().and_then(|f| f.get(c));
                let _ = write!(out, ",{}", v.map(|v| v.to_string()).unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }
}
