//! Loss assembly, plain SGD and the deterministic training and evaluation loops.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::net::{normalized_offsets, param_groups, ForwardOptions, Model, ModelConfig, ModelParams, ParamGroup};
use crate::scene::SceneSequence;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Fixed SGD step size; `None` picks one from the scene size with
    /// [`resolve_learning_rate`].
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    /// L1 coefficient on the LSTM parameters.
    pub l1_lstm: f64,
    /// L2 coefficient on the appearance encoder and image-class stream.
    pub l2_ic_stream: f64,
    /// L2 coefficient on the location-class stream.
    pub l2_lc_stream: f64,
    /// Weight of the trajectory MSE term.
    pub traj_loss_weight: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            epochs: 30,
            batch_size: 128,
            l1_lstm: 0.01,
            l2_ic_stream: 0.05,
            l2_lc_stream: 0.001,
            traj_loss_weight: 1.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Settings that train the default model to convergence on the
    /// synthetic world within 30 epochs of 2000 scenes. The defaults above
    /// take roughly 500 small steps in that budget and stay at chance, and
    /// their penalties outweigh the data loss at this model size.
    pub fn short_schedule() -> Self {
        TrainConfig {
            learning_rate: Some(0.05),
            batch_size: 16,
            l1_lstm: 1e-4,
            l2_ic_stream: 5e-4,
            l2_lc_stream: 1e-5,
            traj_loss_weight: 10.0,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coefs = [
            ("l1_lstm", self.l1_lstm),
            ("l2_ic_stream", self.l2_ic_stream),
            ("l2_lc_stream", self.l2_lc_stream),
            ("traj_loss_weight", self.traj_loss_weight),
            ("learning_rate", self.learning_rate.unwrap_or(0.0)),
        ];
        for (name, v) in coefs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("train_config.{name}"), "must be finite and >= 0"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::validation("train_config.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Step size by typical node count: up to 3 nodes 1e-3, 4 to 6 nodes 7e-4,
/// 7 or more 5e-4.
pub fn resolve_learning_rate(nodes: usize) -> f64 {
    match nodes {
        0..=3 => 1e-3,
        4..=6 => 7e-4,
        _ => 5e-4,
    }
}

/// Mean number of objects per frame over a dataset, rounded to the nearest integer.
pub fn typical_node_count(data: &[SceneSequence]) -> usize {
    let (objects, frames) = data.iter().flat_map(|s| &s.frames).fold((0usize, 0usize), |(o, f), fr| {
        (o + fr.objects.len(), f + 1)
    });
    if frames == 0 {
        0
    } else {
        (objects as f64 / frames as f64).round() as usize
    }
}

/// Targets for one sequence.
#[derive(Clone, Debug)]
pub struct Supervision {
    pub label: f64,
    /// `[horizon, 2]` normalized offsets, see [`normalized_offsets`].
    pub offsets: Tensor,
}

impl Supervision {
    pub fn from_scene(seq: &SceneSequence, horizon: usize) -> Result<Self> {
        Ok(Supervision {
            label: f64::from(seq.label_crossing),
            offsets: normalized_offsets(seq, horizon)?,
        })
    }
}

/// `BCE(ŷ, y) + λ·MSE(offsets, target)`.
pub fn data_loss(tape: &mut Tape, probability: Var, offsets: Var, target: &Supervision, cfg: &TrainConfig) -> Result<Var> {
    let bce = tape.bce(probability, target.label)?;
    if cfg.traj_loss_weight == 0.0 {
        return Ok(bce);
    }
    let truth = tape.leaf(target.offsets.clone());
    let mse = tape.mse(offsets, truth)?;
    let mse = tape.scale(mse, cfg.traj_loss_weight);
    tape.add(bce, mse)
}

/// `l1·Σ|θ_lstm| + l2_ic·Σθ_ic² + l2_lc·Σθ_lc²`, with the encoder counted in
/// the image-class group.
pub fn regularization(tape: &mut Tape, params: &[Var], groups: &[ParamGroup], cfg: &TrainConfig) -> Result<Var> {
    if params.len() != groups.len() {
        return Err(Error::Param(format!("{} parameters but {} groups", params.len(), groups.len())));
    }
    let mut total = tape.leaf(Tensor::scalar(0.0));
    for (&p, &g) in params.iter().zip(groups) {
        let term = match g {
            ParamGroup::Lstm if cfg.l1_lstm > 0.0 => {
                let s = tape.sum_abs(p);
                tape.scale(s, cfg.l1_lstm)
            }
            ParamGroup::Encoder | ParamGroup::ImageClassStream if cfg.l2_ic_stream > 0.0 => {
                let s = tape.sum_squares(p);
                tape.scale(s, cfg.l2_ic_stream)
            }
            ParamGroup::LocationClassStream if cfg.l2_lc_stream > 0.0 => {
                let s = tape.sum_squares(p);
                tape.scale(s, cfg.l2_lc_stream)
            }
            _ => continue,
        };
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// Data loss plus regularization for a single sequence.
pub fn total_loss(
    tape: &mut Tape,
    probability: Var,
    offsets: Var,
    target: &Supervision,
    params: &[Var],
    groups: &[ParamGroup],
    cfg: &TrainConfig,
) -> Result<Var> {
    let data = data_loss(tape, probability, offsets, target, cfg)?;
    let reg = regularization(tape, params, groups, cfg)?;
    tape.add(data, reg)
}

/// `θ ← θ − lr·g` for every parameter. Nothing is updated if any gradient
/// is non-finite.
pub fn sgd_step(params: &mut ModelParams, grads: &[Tensor], lr: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Param(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if g.shape() != p.shape() {
            return Err(Error::shape("sgd_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
    }
    for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Losses recorded after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss";

    pub fn csv_row(&self) -> String {
        match self.val_loss {
            Some(v) => format!("{},{:?},{:?}", self.epoch, self.train_loss, v),
            None => format!("{},{:?},", self.epoch, self.train_loss),
        }
    }
}

/// Everything needed to resume evaluation of a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ModelParams,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochLog>,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::new(self.config.clone(), self.params.clone())
    }
}

/// Owns a model being optimized.
pub struct Trainer {
    model: Model,
    cfg: TrainConfig,
    groups: Vec<ParamGroup>,
    lr: f64,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig, lr: f64) -> Result<Self> {
        cfg.validate()?;
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::validation("train_config.learning_rate", "must be finite and >= 0"));
        }
        let groups = param_groups(model.config());
        Ok(Trainer { model, cfg, groups, lr })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn regularization_grads(&self) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars = self.model.params().to_tape(&mut tape);
        let reg = regularization(&mut tape, &vars, &self.groups, &self.cfg)?;
        let grads = tape.backward(reg)?;
        let value = tape.value(reg).item();
        Ok((value, vars.iter().map(|&v| grads.wrt(&tape, v)).collect()))
    }

    fn example_grads(&self, seq: &SceneSequence) -> Result<(f64, Vec<Tensor>)> {
        let target = Supervision::from_scene(seq, self.model.config().horizon)?;
        let mut tape = Tape::new();
        let (rec, vars) = self.model.record(&mut tape, seq, ForwardOptions::default())?;
        let loss = data_loss(&mut tape, rec.probability, rec.offsets, &target, &self.cfg)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).item();
        Ok((value, vars.iter().map(|&v| grads.wrt(&tape, v)).collect()))
    }

    /// Batch loss (mean data loss plus regularization) and its gradient,
    /// with per-example gradients summed in batch order.
    pub fn batch_gradients(&self, batch: &[&SceneSequence]) -> Result<(f64, Vec<Tensor>)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (reg, mut grads) = self.regularization_grads()?;
        let mut data = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for seq in batch {
            let (l, g) = self.example_grads(seq)?;
            data += l;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                    *a += scale * b;
                }
            }
        }
        let loss = data * scale + reg;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok((loss, grads))
    }

    /// One SGD update on `batch`; returns the loss before the update.
    pub fn step(&mut self, batch: &[&SceneSequence]) -> Result<f64> {
        let (loss, grads) = self.batch_gradients(batch)?;
        sgd_step(self.model.params_mut(), &grads, self.lr)?;
        Ok(loss)
    }

    /// Mean data loss over `data` plus the regularization term, without updating.
    pub fn loss(&self, data: &[SceneSequence]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut tape = Tape::new();
        let vars = self.model.params().to_tape(&mut tape);
        let reg = regularization(&mut tape, &vars, &self.groups, &self.cfg)?;
        let reg = tape.value(reg).item();
        let mut sum = 0.0;
        for seq in data {
            let target = Supervision::from_scene(seq, self.model.config().horizon)?;
            let mut tape = Tape::new();
            let (rec, _) = self.model.record(&mut tape, seq, ForwardOptions::default())?;
            let l = data_loss(&mut tape, rec.probability, rec.offsets, &target, &self.cfg)?;
            sum += tape.value(l).item();
        }
        let loss = sum / data.len() as f64 + reg;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok(loss)
    }
}

/// Trains from a seeded initialization. `on_epoch` sees each log entry as
/// soon as the epoch finishes.
pub fn train_with(
    train: &[SceneSequence],
    val: &[SceneSequence],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Checkpoint> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let lr = cfg.learning_rate.unwrap_or_else(|| resolve_learning_rate(typical_node_count(train)));
    let model = Model::new(model_cfg.clone(), ModelParams::init(model_cfg, cfg.seed)?)?;
    let mut trainer = Trainer::new(model, cfg.clone(), lr)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SceneSequence> = chunk.iter().map(|&i| &train[i]).collect();
            weighted += trainer.step(&batch)? * batch.len() as f64;
        }
        let log = EpochLog {
            epoch,
            train_loss: weighted / train.len() as f64,
            val_loss: if val.is_empty() { None } else { Some(trainer.loss(val)?) },
        };
        on_epoch(&log);
        history.push(log);
    }
    let mut train_config = cfg.clone();
    train_config.learning_rate = Some(lr);
    Ok(Checkpoint {
        config: model_cfg.clone(),
        train_config,
        params: trainer.into_model().into_params(),
        epoch: cfg.epochs,
        history,
    })
}

pub fn train(
    train: &[SceneSequence],
    val: &[SceneSequence],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    train_with(train, val, model_cfg, cfg, |_| {})
}

/// Runs the model over `data`, thresholds at the configured probability
/// (ties count as not crossing) and scores decisions and trajectories in pixels.
pub fn evaluate(model: &Model, data: &[SceneSequence], name: &str) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut preds = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    let mut pred_traj = Vec::with_capacity(data.len());
    let mut true_traj = Vec::with_capacity(data.len());
    for (i, seq) in data.iter().enumerate() {
        let out = model.forward(seq)?;
        if seq.label_future.len() != out.trajectory.len() {
            return Err(Error::validation(
                format!("scenes[{i}].label.future"),
                format!("model predicts {} steps, label has {}", out.trajectory.len(), seq.label_future.len()),
            ));
        }
        preds.push(out.crossing);
        labels.push(seq.label_crossing == 1);
        pred_traj.push(out.trajectory);
        true_traj.push(seq.label_future.clone());
    }
    MetricsReport::from_predictions(name, &preds, &labels, &pred_traj, &true_traj)
}

/// The last observed target center repeated over the horizon.
pub fn standstill_trajectory(seq: &SceneSequence, horizon: usize) -> Result<Vec<[f64; 2]>> {
    Ok(vec![seq.last_target_center()?; horizon])
}
