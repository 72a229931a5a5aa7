use std::collections::HashMap;

use super::layers::{
    appearance_encoder, fuse_streams, predict_intention, predict_trajectory, st_graph_layer, temporal_encoder,
    EncoderVars, LayerVars,
};
use super::params::{layout, LayerIdx, Layout};
use super::{ModelConfig, ModelParams};
use crate::autodiff::{LstmVars, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{build_scene_graph, GraphOptions, SceneGraph};
use crate::scene::{SceneSequence, CLASS_DIM, LOCATION_DIM, PATCH_LEN};

/// Switches that change the recorded computation without changing parameters.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions {
    /// Multiply the normalized adjacency by the learned importance matrix.
    pub use_importance: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { use_importance: true }
    }
}

/// Tape handles of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct Recorded {
    /// `[1, 1]` crossing probability.
    pub probability: Var,
    /// `[horizon, 2]` offsets from the last observed target center, in
    /// units of the last observed target box height.
    pub offsets: Var,
    /// Output of every ST-Graph layer of each stream, `[T, N, d_l]`.
    pub image_class_layers: Vec<Var>,
    pub location_class_layers: Vec<Var>,
    /// `[T, d1 + d2]`.
    pub fused: Var,
    /// LSTM hidden state after each frame, `[1, d_h]`.
    pub hidden: Vec<Var>,
}

/// Result of running the network on one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub crossing: bool,
    /// Future target centers in pixels.
    pub trajectory: Vec<[f64; 2]>,
}

/// Configuration plus parameters; immutable during inference.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    layout: Layout,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        let named = params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        let params = ModelParams::from_named(&config, named)?;
        let (layout, _) = layout(&config);
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            slots: Some(self.config.max_nodes),
            ablate_signals: self.config.ablate_signals,
        }
    }

    /// Records the forward pass, registering every parameter as a leaf.
    /// Returns the recording and the parameter handles in parameter order.
    pub fn record(&self, tape: &mut Tape, seq: &SceneSequence, opts: ForwardOptions) -> Result<(Recorded, Vec<Var>)> {
        let vars = self.params.to_tape(tape);
        let rec = self.record_with(tape, &vars, seq, opts)?;
        Ok((rec, vars))
    }

    /// Records the forward pass against caller-provided parameter leaves.
    pub fn record_with(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        seq: &SceneSequence,
        opts: ForwardOptions,
    ) -> Result<Recorded> {
        if vars.len() != self.params.len() {
            return Err(Error::Param(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                vars.len()
            )));
        }
        let cfg = &self.config;
        let lay = &self.layout;
        let graph = build_scene_graph(seq, self.graph_options())?;
        let (t_len, n) = (graph.frames, graph.slots);

        let encoder = EncoderVars {
            conv1_w: vars[lay.encoder.conv1_w],
            conv1_b: vars[lay.encoder.conv1_b],
            conv2_w: vars[lay.encoder.conv2_w],
            conv2_b: vars[lay.encoder.conv2_b],
            proj_w: vars[lay.encoder.proj_w],
            proj_b: vars[lay.encoder.proj_b],
        };
        let appearance = self.appearance_rows(tape, &encoder, seq, &graph)?;
        let class = tape.leaf(graph.class.clone().reshaped(&[t_len * n, CLASS_DIM])?);
        let location = tape.leaf(graph.location.clone().reshaped(&[t_len * n, LOCATION_DIM])?);
        let x_ic = tape.concat_cols(&[appearance, class])?;
        let x_ic = tape.reshape(x_ic, &[t_len, n, cfg.image_class_dim()])?;
        let x_lc = tape.concat_cols(&[location, class])?;
        let x_lc = tape.reshape(x_lc, &[t_len, n, cfg.location_class_dim()])?;

        let importance = opts.use_importance.then(|| vars[lay.importance]);
        let run_stream = |tape: &mut Tape, mut x: Var, layers: &[LayerIdx]| -> Result<Vec<Var>> {
            let mut outs = Vec::with_capacity(layers.len());
            for idx in layers {
                let layer = LayerVars {
                    fc_w: vars[idx.fc_w],
                    fc_b: vars[idx.fc_b],
                    smp_w: vars[idx.smp_w],
                    tmp_w: vars[idx.tmp_w],
                };
                x = st_graph_layer(tape, x, &graph.adjacency, importance, &layer)?;
                outs.push(x);
            }
            Ok(outs)
        };
        let ic_layers = run_stream(tape, x_ic, &lay.image_class)?;
        let lc_layers = run_stream(tape, x_lc, &lay.location_class)?;
        let fused = fuse_streams(
            tape,
            *ic_layers.last().expect("at least one layer"),
            *lc_layers.last().expect("at least one layer"),
            &graph.adjacency.mask,
            0,
        )?;
        let hidden = temporal_encoder(
            tape,
            fused,
            LstmVars {
                weight: vars[lay.lstm_w],
                bias: vars[lay.lstm_b],
            },
        )?;
        let h = *hidden.last().expect("at least one frame");
        let f = tape.matmul(h, vars[lay.fcn_w])?;
        let f = tape.add_bias(f, vars[lay.fcn_b], None)?;
        let f = tape.relu(f);
        let probability = predict_intention(tape, f, vars[lay.intent_w], vars[lay.intent_b])?;
        let offsets = predict_trajectory(tape, f, vars[lay.traj_w])?;
        Ok(Recorded {
            probability,
            offsets,
            image_class_layers: ic_layers,
            location_class_layers: lc_layers,
            fused,
            hidden,
        })
    }

    /// `[T * N, appearance_dim]` appearance features, zero rows for padding.
    /// Raw patches are encoded once per distinct patch; vectors of the
    /// appearance width are used as given.
    fn appearance_rows(
        &self,
        tape: &mut Tape,
        encoder: &EncoderVars,
        seq: &SceneSequence,
        graph: &SceneGraph,
    ) -> Result<Var> {
        let dim = self.config.appearance_dim;
        let mut rows = vec![tape.leaf(Tensor::zeros(&[1, dim]))];
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut index = Vec::with_capacity(graph.slot_objects.len());
        for (cell, slot) in graph.slot_objects.iter().enumerate() {
            let Some(j) = *slot else {
                index.push(0);
                continue;
            };
            let t = cell / graph.slots;
            let app = &seq.frames[t].objects[j].appearance;
            let key: Vec<u64> = app.iter().map(|v| v.to_bits()).collect();
            if let Some(&row) = seen.get(&key) {
                index.push(row);
                continue;
            }
            let feature = if app.len() == PATCH_LEN {
                let patch = tape.leaf(Tensor::vector(app.clone()));
                appearance_encoder(tape, encoder, patch)?
            } else if app.len() == dim {
                tape.leaf(Tensor::new(vec![1, dim], app.clone())?)
            } else {
                return Err(Error::validation(
                    format!("frames[{t}].objects[{j}].appearance"),
                    format!("expected a {PATCH_LEN}-value patch or {dim} features, found {}", app.len()),
                ));
            };
            rows.push(feature);
            seen.insert(key, rows.len() - 1);
            index.push(rows.len() - 1);
        }
        let table = tape.concat_rows(&rows)?;
        tape.select_rows(table, &index)
    }

    /// Runs the network and converts offsets back to pixel positions.
    pub fn forward(&self, seq: &SceneSequence) -> Result<Prediction> {
        self.forward_with(seq, ForwardOptions::default())
    }

    pub fn forward_with(&self, seq: &SceneSequence, opts: ForwardOptions) -> Result<Prediction> {
        let mut tape = Tape::new();
        let (rec, _) = self.record(&mut tape, seq, opts)?;
        let probability = tape.value(rec.probability).item();
        let trajectory = absolute_trajectory(seq, tape.value(rec.offsets))?;
        Ok(Prediction {
            probability,
            crossing: probability > self.config.threshold,
            trajectory,
        })
    }
}

/// Supervision target for the trajectory head: `[horizon, 2]` offsets of
/// the labelled future centers from the last observed target center, in
/// units of the last observed target box height.
pub fn normalized_offsets(seq: &SceneSequence, horizon: usize) -> Result<Tensor> {
    if seq.label_future.len() != horizon {
        return Err(Error::validation(
            "label.future",
            format!("expected {horizon} positions, found {}", seq.label_future.len()),
        ));
    }
    let ([cx, cy], scale) = offset_frame(seq)?;
    let data = seq
        .label_future
        .iter()
        .flat_map(|p| [(p[0] - cx) / scale, (p[1] - cy) / scale])
        .collect();
    Tensor::new(vec![horizon, 2], data)
}

/// Pixel positions from offsets in the units of [`normalized_offsets`].
pub fn absolute_trajectory(seq: &SceneSequence, offsets: &Tensor) -> Result<Vec<[f64; 2]>> {
    let ([cx, cy], scale) = offset_frame(seq)?;
    Ok(offsets
        .data()
        .chunks(2)
        .map(|o| [cx + o[0] * scale, cy + o[1] * scale])
        .collect())
}

/// Last observed target center and box height.
fn offset_frame(seq: &SceneSequence) -> Result<([f64; 2], f64)> {
    let center = seq.last_target_center()?;
    let height = seq.target_in(seq.len() - 1).map_or(1.0, |o| o.bbox.height());
    Ok((center, height))
}
