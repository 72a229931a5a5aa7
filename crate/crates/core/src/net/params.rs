use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scene::PATCH_SIDE;

/// Regularization group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    ImageClassStream,
    LocationClassStream,
    Importance,
    Lstm,
    Head,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Uniform { bound: f64 },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    init: Init,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncoderIdx {
    pub conv1_w: usize,
    pub conv1_b: usize,
    pub conv2_w: usize,
    pub conv2_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerIdx {
    pub fc_w: usize,
    pub fc_b: usize,
    pub smp_w: usize,
    pub tmp_w: usize,
}

/// Positions of every named parameter in [`ModelParams`].
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub encoder: EncoderIdx,
    pub image_class: Vec<LayerIdx>,
    pub location_class: Vec<LayerIdx>,
    pub importance: usize,
    pub lstm_w: usize,
    pub lstm_b: usize,
    pub fcn_w: usize,
    pub fcn_b: usize,
    pub intent_w: usize,
    pub intent_b: usize,
    pub traj_w: usize,
}

/// Spatial size after the two conv + pool stages of the encoder.
pub(crate) fn encoder_grid() -> usize {
    let after1 = (PATCH_SIDE - 2) / 2;
    (after1 - 2) / 2
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], group: ParamGroup, init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            group,
            init,
        });
        self.specs.len() - 1
    }

    /// `±1/sqrt(fan_in)`, for the LSTM and the output heads.
    fn weight(&mut self, name: String, shape: &[usize], group: ParamGroup, fan_in: usize) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.add(name, shape, group, Init::Uniform { bound })
    }

    /// `±sqrt(6/fan_in)`, variance preserving through a following ReLU.
    fn relu_weight(&mut self, name: String, shape: &[usize], group: ParamGroup, fan_in: usize) -> usize {
        let bound = (6.0 / fan_in as f64).sqrt();
        self.add(name, shape, group, Init::Uniform { bound })
    }

    /// `±sqrt(3/fan_in)`, variance preserving for a purely linear map.
    fn linear_weight(&mut self, name: String, shape: &[usize], group: ParamGroup, fan_in: usize) -> usize {
        let bound = (3.0 / fan_in as f64).sqrt();
        self.add(name, shape, group, Init::Uniform { bound })
    }

    fn bias(&mut self, name: String, len: usize, group: ParamGroup) -> usize {
        self.add(name, &[len], group, Init::Zeros)
    }

    fn stream(&mut self, prefix: &str, input_dim: usize, cfg: &ModelConfig, group: ParamGroup) -> Vec<LayerIdx> {
        let k = cfg.tmp_kernel;
        let mut d_in = input_dim;
        cfg.layer_dims
            .iter()
            .enumerate()
            .map(|(l, &d)| {
                let idx = LayerIdx {
                    fc_w: self.relu_weight(format!("{prefix}.layer{l}.fc.weight"), &[d_in, d], group, d_in),
                    fc_b: self.bias(format!("{prefix}.layer{l}.fc.bias"), d, group),
                    smp_w: self.relu_weight(format!("{prefix}.layer{l}.smp.weight"), &[d, d], group, d),
                    tmp_w: self.relu_weight(format!("{prefix}.layer{l}.tmp.weight"), &[k, d, d], group, k * d),
                };
                d_in = d;
                idx
            })
            .collect()
    }
}

pub(crate) fn layout(cfg: &ModelConfig) -> (Layout, Vec<ParamSpec>) {
    use ParamGroup::*;
    let mut b = Builder { specs: Vec::new() };
    let [c1, c2] = cfg.encoder_channels;
    let grid = encoder_grid();
    let encoder = EncoderIdx {
        conv1_w: b.relu_weight("encoder.conv1.weight".into(), &[c1, 1, 3, 3], Encoder, 9),
        conv1_b: b.bias("encoder.conv1.bias".into(), c1, Encoder),
        conv2_w: b.relu_weight("encoder.conv2.weight".into(), &[c2, c1, 3, 3], Encoder, 9 * c1),
        conv2_b: b.bias("encoder.conv2.bias".into(), c2, Encoder),
        proj_w: b.linear_weight(
            "encoder.proj.weight".into(),
            &[c2 * grid * grid, cfg.appearance_dim],
            Encoder,
            c2 * grid * grid,
        ),
        proj_b: b.bias("encoder.proj.bias".into(), cfg.appearance_dim, Encoder),
    };
    let image_class = b.stream("image_class", cfg.image_class_dim(), cfg, ImageClassStream);
    let location_class = b.stream("location_class", cfg.location_class_dim(), cfg, LocationClassStream);
    let n = cfg.max_nodes;
    let importance = b.add("importance".into(), &[n, n], Importance, Init::Ones);
    let (d_in, h) = (cfg.fused_dim(), cfg.lstm_hidden);
    let lstm_w = b.weight("lstm.weight".into(), &[d_in + h, 4 * h], Lstm, d_in + h);
    let lstm_b = b.bias("lstm.bias".into(), 4 * h, Lstm);
    let f = cfg.fcn_hidden;
    let fcn_w = b.relu_weight("fcn.weight".into(), &[h, f], Head, h);
    let fcn_b = b.bias("fcn.bias".into(), f, Head);
    let intent_w = b.weight("intent.weight".into(), &[f, 1], Head, f);
    let intent_b = b.bias("intent.bias".into(), 1, Head);
    let traj_w = b.weight("trajectory.weight".into(), &[f, 2 * cfg.horizon], Head, f);
    (
        Layout {
            encoder,
            image_class,
            location_class,
            importance,
            lstm_w,
            lstm_b,
            fcn_w,
            fcn_b,
            intent_w,
            intent_b,
            traj_w,
        },
        b.specs,
    )
}

/// Ordered, uniquely named parameter tensors of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Seeded uniform weights (bounds chosen per layer type, see the builder),
    /// biases zero, importance all ones.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (_, specs) = layout(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (names, tensors) = specs
            .into_iter()
            .map(|s| {
                let t = match s.init {
                    Init::Zeros => Tensor::zeros(&s.shape),
                    Init::Ones => Tensor::full(&s.shape, 1.0),
                    Init::Uniform { bound } => {
                        let n = s.shape.iter().product();
                        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                        Tensor::new(s.shape.clone(), data).expect("shape matches data")
                    }
                };
                (s.name, t)
            })
            .unzip();
        Ok(ModelParams { names, tensors })
    }

    /// Every parameter zero, including the importance matrix.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (_, specs) = layout(cfg);
        let (names, tensors) = specs.into_iter().map(|s| (s.name, Tensor::zeros(&s.shape))).unzip();
        Ok(ModelParams { names, tensors })
    }

    /// Rebuilds a parameter set from named tensors, checking names and shapes
    /// against `cfg`.
    pub fn from_named(cfg: &ModelConfig, mut named: Vec<(String, Tensor)>) -> Result<Self> {
        cfg.validate()?;
        let (_, specs) = layout(cfg);
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let pos = named
                .iter()
                .position(|(n, _)| n == &spec.name)
                .ok_or_else(|| Error::validation(format!("params.{}", spec.name), "missing parameter"))?;
            let (_, t) = named.swap_remove(pos);
            if t.shape() != spec.shape {
                return Err(Error::validation(
                    format!("params.{}", spec.name),
                    format!("shape {:?} does not match config shape {:?}", t.shape(), spec.shape),
                ));
            }
            if !t.is_finite() {
                return Err(Error::validation(format!("params.{}", spec.name), "non-finite value"));
            }
            tensors.push(t);
        }
        if let Some((extra, _)) = named.first() {
            return Err(Error::validation(format!("params.{extra}"), "unknown parameter"));
        }
        Ok(ModelParams {
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a leaf, in order.
    pub fn to_tape(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }
}

/// Regularization group of each parameter, in parameter order.
pub fn param_groups(cfg: &ModelConfig) -> Vec<ParamGroup> {
    layout(cfg).1.into_iter().map(|s| s.group).collect()
}
