//! Seeded synthetic traffic scenes with a known crossing rule.
//!
//! The target pedestrian crosses iff the vehicle-facing light is red in the
//! last observed frame, with the label flipped with probability `noise`.
//! Approach dynamics, bystanders and vehicles are drawn independently of the
//! signal, so signal-state features are the only route to the label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{BoundingBox, Frame, ObjectKind, SceneObject, SceneSequence, SignalState, PATCH_SIDE};

/// Fixed-cycle green, yellow, red light.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalFsm {
    pub green: u32,
    pub yellow: u32,
    pub red: u32,
    pub offset: u32,
}

impl SignalFsm {
    pub fn cycle(&self) -> u32 {
        self.green + self.yellow + self.red
    }

    /// Green for phase in `[0, g)`, yellow for `[g, g + y)`, red for the rest,
    /// where phase is `(t + offset) mod cycle`.
    pub fn state(&self, t: u64) -> SignalState {
        let phase = (t + u64::from(self.offset)) % u64::from(self.cycle());
        if phase < u64::from(self.green) {
            SignalState::Green
        } else if phase < u64::from(self.green + self.yellow) {
            SignalState::Yellow
        } else {
            SignalState::Red
        }
    }
}

/// Free parameters of the synthetic world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub image_dims: [f64; 2],
    /// Observed frames per sequence.
    pub frames: usize,
    /// Future frames in the trajectory label.
    pub horizon: usize,
    pub max_bystanders: usize,
    pub max_vehicles: usize,
    /// Probability of flipping the crossing label, in `[0, 0.5)`.
    pub noise: f64,
    /// Range of the per-frame relative growth of the target box.
    pub growth_rate: [f64; 2],
    /// Green, yellow and red durations in frames.
    pub signal_durations: [u32; 3],
    /// Horizontal speed of a crossing pedestrian in pixels per frame.
    pub crossing_speed: f64,
    /// Half-width of the uniform jitter of a waiting pedestrian, in pixels.
    pub hold_jitter: f64,
    /// Node-slot capacity the generated scenes must fit into.
    pub max_nodes: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            image_dims: [640.0, 360.0],
            frames: 15,
            horizon: 15,
            max_bystanders: 2,
            max_vehicles: 2,
            noise: 0.05,
            growth_rate: [0.01, 0.03],
            signal_durations: [60, 15, 45],
            crossing_speed: 6.0,
            hold_jitter: 0.5,
            max_nodes: 8,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::validation("noise", format!("{} must lie in [0, 0.5)", self.noise)));
        }
        if self.frames == 0 || self.horizon == 0 {
            return Err(Error::validation("frames", "frames and horizon must be positive"));
        }
        if self.signal_durations.contains(&0) {
            return Err(Error::validation("signal_durations", "every phase needs at least one frame"));
        }
        let [w, h] = self.image_dims;
        if !(w >= 320.0 && h >= 240.0) {
            return Err(Error::validation("image_dims", "image must be at least 320x240"));
        }
        let [g0, g1] = self.growth_rate;
        if !(g0 > 0.0 && g0 <= g1 && g1 < 0.1) {
            return Err(Error::validation("growth_rate", "need 0 < min <= max < 0.1"));
        }
        if !(self.crossing_speed.is_finite() && self.crossing_speed >= 0.0) {
            return Err(Error::validation("crossing_speed", "must be finite and non-negative"));
        }
        if !(self.hold_jitter.is_finite() && self.hold_jitter >= 0.0) {
            return Err(Error::validation("hold_jitter", "must be finite and non-negative"));
        }
        let nodes = 3 + self.max_bystanders + self.max_vehicles;
        if nodes > self.max_nodes {
            return Err(Error::validation(
                "max_nodes",
                format!("up to {nodes} objects per scene exceed {} slots", self.max_nodes),
            ));
        }
        Ok(())
    }

    fn fsm(&self, offset: u32) -> SignalFsm {
        let [green, yellow, red] = self.signal_durations;
        SignalFsm {
            green,
            yellow,
            red,
            offset,
        }
    }
}

/// Splittable per-scene seed derived from a dataset seed and scene index.
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index)
}

// SplitMix64 finalizer; a bijection on u64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const TARGET_ID: u32 = 1;
const LIGHT_ID: u32 = 2;
const CROSSWALK_ID: u32 = 3;
const VEHICLE_ID0: u32 = 10;
const BYSTANDER_ID0: u32 = 20;

/// Generates one scene; whether the light ends on red is drawn from the seed.
pub fn generate_scene(cfg: &WorldConfig, scene_seed: u64) -> Result<SceneSequence> {
    generate(cfg, scene_seed, None)
}

/// Generates `n` scenes with seeds `scene_seed(seed, i)`. Even-indexed scenes
/// end on red and odd-indexed ones do not, so the noiseless labels are
/// balanced exactly.
pub fn generate_dataset(cfg: &WorldConfig, n: usize, seed: u64) -> Result<Vec<SceneSequence>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    (0..n)
        .map(|i| generate(cfg, scene_seed(seed, i as u64), Some(i % 2 == 0)))
        .collect()
}

/// The light's state in the last observed frame of a generated scene.
pub fn final_signal(seq: &SceneSequence) -> Option<SignalState> {
    seq.frames
        .last()?
        .objects
        .iter()
        .find(|o| o.kind == ObjectKind::TrafficLight)
        .map(|o| o.signal)
}

fn generate(cfg: &WorldConfig, seed: u64, end_on_red: Option<bool>) -> Result<SceneSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [img_w, img_h] = cfg.image_dims;
    let t_len = cfg.frames;

    // Signal: pick the phase of the last frame, then back out the offset.
    let fsm0 = cfg.fsm(0);
    let cycle = fsm0.cycle();
    let red_start = fsm0.green + fsm0.yellow;
    let end_on_red = end_on_red.unwrap_or_else(|| rng.gen_bool(0.5));
    let end_phase = if end_on_red {
        rng.gen_range(red_start..cycle)
    } else {
        rng.gen_range(0..red_start)
    };
    let last = (t_len - 1) as u64;
    let offset = ((u64::from(end_phase) + u64::from(cycle) - last % u64::from(cycle)) % u64::from(cycle)) as u32;
    let fsm = cfg.fsm(offset);
    debug_assert_eq!(fsm.state(last) == SignalState::Red, end_on_red);
    let crossing = end_on_red ^ rng.gen_bool(cfg.noise);

    // Target pedestrian: approaches the curb from one side while its box grows.
    let from_left = rng.gen_bool(0.5);
    let toward_center = if from_left { 1.0 } else { -1.0 };
    let h0 = rng.gen_range(0.11..0.19) * img_h;
    let growth = rng.gen_range(cfg.growth_rate[0]..=cfg.growth_rate[1]);
    let walk = rng.gen_range(0.5..2.0);
    let cx0 = if from_left {
        rng.gen_range(0.1..0.25) * img_w
    } else {
        rng.gen_range(0.75..0.9) * img_w
    };
    let foot = rng.gen_range(0.68..0.76) * img_h;
    let target_boxes: Vec<BoundingBox> = (0..t_len)
        .map(|t| {
            let h = h0 * (1.0 + growth).powi(t as i32);
            let cx = cx0 + toward_center * walk * t as f64;
            let w = 0.4 * h;
            clamp_box(BoundingBox::new(cx - w / 2.0, foot - h, cx + w / 2.0, foot), cfg.image_dims)
        })
        .collect();

    let light_box = {
        let x = rng.gen_range(0.42..0.55) * img_w;
        let y = rng.gen_range(0.04..0.1) * img_h;
        BoundingBox::new(x, y, x + 0.02 * img_w, y + 0.09 * img_h)
    };
    let crosswalk_box = BoundingBox::new(0.3 * img_w, 0.78 * img_h, 0.7 * img_w, 0.9 * img_h);

    // (x at t = 0, y, width, height, signed speed), kept inside the image.
    let vehicles: Vec<[f64; 5]> = (0..rng.gen_range(0..=cfg.max_vehicles))
        .map(|_| {
            let w = rng.gen_range(0.12..0.2) * img_w;
            let h = rng.gen_range(0.1..0.16) * img_h;
            let v: f64 = rng.gen_range(2.0..6.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let travel = v.abs() * t_len as f64;
            let x0 = rng.gen_range(0.0..(img_w - w - travel).max(1.0));
            let x0 = if v < 0.0 { x0 + travel } else { x0 };
            let y = rng.gen_range(0.5..0.62) * img_h;
            [x0, y, w, h, v]
        })
        .collect();

    let bystanders: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(0..=cfg.max_bystanders))
        .map(|_| {
            let h = rng.gen_range(0.08..0.15) * img_h;
            let cx = rng.gen_range(0.05..0.95) * img_w;
            let foot = rng.gen_range(0.55..0.7) * img_h;
            let v = rng.gen_range(-1.5..1.5);
            (cx, foot, h, v)
        })
        .collect();

    let mut patch_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let target_patch = texture(ObjectKind::Pedestrian, &mut patch_rng);
    let light_patch = texture(ObjectKind::TrafficLight, &mut patch_rng);
    let crosswalk_patch = texture(ObjectKind::Crosswalk, &mut patch_rng);
    let vehicle_patches: Vec<Vec<f64>> = vehicles.iter().map(|_| texture(ObjectKind::Vehicle, &mut patch_rng)).collect();
    let bystander_patches: Vec<Vec<f64>> =
        bystanders.iter().map(|_| texture(ObjectKind::Pedestrian, &mut patch_rng)).collect();

    let frames = (0..t_len)
        .map(|t| {
            let tf = t as f64;
            let mut objects = vec![
                SceneObject {
                    id: TARGET_ID,
                    kind: ObjectKind::Pedestrian,
                    bbox: target_boxes[t],
                    signal: SignalState::NotApplicable,
                    appearance: target_patch.clone(),
                },
                SceneObject {
                    id: LIGHT_ID,
                    kind: ObjectKind::TrafficLight,
                    bbox: light_box,
                    signal: fsm.state(t as u64),
                    appearance: light_patch.clone(),
                },
                SceneObject {
                    id: CROSSWALK_ID,
                    kind: ObjectKind::Crosswalk,
                    bbox: crosswalk_box,
                    signal: SignalState::NotApplicable,
                    appearance: crosswalk_patch.clone(),
                },
            ];
            for (k, &[x0, y, w, h, v]) in vehicles.iter().enumerate() {
                let x = x0 + v * tf;
                objects.push(SceneObject {
                    id: VEHICLE_ID0 + k as u32,
                    kind: ObjectKind::Vehicle,
                    bbox: clamp_box(BoundingBox::new(x, y, x + w, y + h), cfg.image_dims),
                    signal: SignalState::NotApplicable,
                    appearance: vehicle_patches[k].clone(),
                });
            }
            for (k, &(cx, foot, h, v)) in bystanders.iter().enumerate() {
                let cx = cx + v * tf;
                let w = 0.4 * h;
                objects.push(SceneObject {
                    id: BYSTANDER_ID0 + k as u32,
                    kind: ObjectKind::Pedestrian,
                    bbox: clamp_box(BoundingBox::new(cx - w / 2.0, foot - h, cx + w / 2.0, foot), cfg.image_dims),
                    signal: SignalState::NotApplicable,
                    appearance: bystander_patches[k].clone(),
                });
            }
            Frame { objects }
        })
        .collect();

    let [lx, ly] = target_boxes[t_len - 1].center();
    let label_future = (1..=cfg.horizon)
        .map(|k| {
            if crossing {
                [lx + toward_center * cfg.crossing_speed * k as f64, ly]
            } else {
                [
                    lx + rng.gen_range(-1.0..=1.0) * cfg.hold_jitter,
                    ly + rng.gen_range(-1.0..=1.0) * cfg.hold_jitter,
                ]
            }
        })
        .collect();

    let seq = SceneSequence {
        frames,
        image_dims: cfg.image_dims,
        target_id: TARGET_ID,
        label_crossing: u8::from(crossing),
        label_future,
    };
    seq.validate()?;
    Ok(seq)
}

/// Shrinks a box to lie inside the image while keeping it non-degenerate.
fn clamp_box(b: BoundingBox, dims: [f64; 2]) -> BoundingBox {
    let x1 = b.x1.clamp(0.0, dims[0] - 2.0);
    let y1 = b.y1.clamp(0.0, dims[1] - 2.0);
    let x2 = b.x2.clamp(x1 + 1.0, dims[0]);
    let y2 = b.y2.clamp(y1 + 1.0, dims[1]);
    BoundingBox::new(x1, y1, x2, y2)
}

/// Procedural grayscale texture, distinct per object kind, quantized to
/// sixteenths. Traffic-light textures do not depend on the signal state.
fn texture(kind: ObjectKind, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = PATCH_SIDE;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let freq = rng.gen_range(0.3..0.6);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (y, x) = (i as f64, j as f64);
            let base = match kind {
                ObjectKind::Pedestrian => 0.5 + 0.35 * (freq * x + phase).sin(),
                ObjectKind::TrafficLight => {
                    let cx = 15.5;
                    let lamp = [6.0, 16.0, 26.0]
                        .iter()
                        .any(|&cy| (x - cx).powi(2) + (y - cy).powi(2) < 16.0);
                    if lamp {
                        0.6
                    } else {
                        0.1
                    }
                }
                ObjectKind::Vehicle => 0.45 + 0.3 * (freq * y + phase).sin(),
                ObjectKind::Crosswalk => {
                    if ((x + y) / 4.0 + phase).floor() as i64 % 2 == 0 {
                        0.9
                    } else {
                        0.2
                    }
                }
            };
            let v = (base + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0);
            out.push((v * 16.0).round() / 16.0);
        }
    }
    out
}
