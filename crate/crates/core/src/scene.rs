//! Scene domain types and per-object feature encoding.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of a square grayscale appearance patch.
pub const PATCH_SIDE: usize = 32;
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;

/// Length of the class vector: kind one-hot (4) followed by signal one-hot (3).
pub const CLASS_DIM: usize = 7;
/// Length of the location vector `[cx, cy, w, h, area]`, all normalized.
pub const LOCATION_DIM: usize = 5;

/// Object class. The one-hot encoding follows declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Pedestrian,
    TrafficLight,
    Vehicle,
    Crosswalk,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [
        ObjectKind::Pedestrian,
        ObjectKind::TrafficLight,
        ObjectKind::Vehicle,
        ObjectKind::Crosswalk,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Traffic-signal state; `NotApplicable` for every object that is not a light.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalState {
    Red,
    Yellow,
    Green,
    NotApplicable,
}

impl SignalState {
    /// Position in the R, Y, G one-hot block.
    pub fn one_hot_index(self) -> Option<usize> {
        match self {
            SignalState::Red => Some(0),
            SignalState::Yellow => Some(1),
            SignalState::Green => Some(2),
            SignalState::NotApplicable => None,
        }
    }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0]
    }

    /// Checks ordering, finiteness and containment in a `W x H` image.
    pub fn validate(&self, dims: [f64; 2]) -> std::result::Result<(), String> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(format!(
                "degenerate box [{}, {}, {}, {}]: need x1 < x2 and y1 < y2",
                self.x1, self.y1, self.x2, self.y2
            ));
        }
        if self.x1 < 0.0 || self.y1 < 0.0 || self.x2 > dims[0] || self.y2 > dims[1] {
            return Err(format!(
                "box [{}, {}, {}, {}] outside image {}x{}",
                self.x1, self.y1, self.x2, self.y2, dims[0], dims[1]
            ));
        }
        Ok(())
    }
}

/// One detected object in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    /// Stable across frames.
    pub id: u32,
    pub kind: ObjectKind,
    pub bbox: BoundingBox,
    pub signal: SignalState,
    /// Either a raw `32 x 32` grayscale patch (row-major, values in [0, 1])
    /// or a precomputed feature vector of the model's appearance width.
    pub appearance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Frame {
    pub objects: Vec<SceneObject>,
}

/// An observed sequence around one target pedestrian plus its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSequence {
    pub frames: Vec<Frame>,
    /// Image width and height in pixels.
    pub image_dims: [f64; 2],
    /// `id` of the target pedestrian; it must appear in every frame.
    pub target_id: u32,
    /// 1 when the target crosses.
    pub label_crossing: u8,
    /// Future target centers, one per horizon frame, in pixels.
    pub label_future: Vec<[f64; 2]>,
}

impl SceneSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn target_in(&self, frame: usize) -> Option<&SceneObject> {
        self.frames[frame].objects.iter().find(|o| o.id == self.target_id)
    }

    /// Center of the target in the last observed frame.
    pub fn last_target_center(&self) -> Result<[f64; 2]> {
        let last = self.frames.len().checked_sub(1).ok_or_else(|| Error::validation("frames", "no frames"))?;
        self.target_in(last)
            .map(|o| o.bbox.center())
            .ok_or_else(|| Error::validation(format!("frames[{last}]"), "target pedestrian missing"))
    }

    /// Checks every structural invariant, reporting the first violation with
    /// its field path.
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.image_dims;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::validation("image_dims", "must be positive"));
        }
        if self.frames.is_empty() {
            return Err(Error::validation("frames", "at least one frame required"));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            let mut ids = HashSet::new();
            for (j, obj) in frame.objects.iter().enumerate() {
                let path = format!("frames[{t}].objects[{j}]");
                if !ids.insert(obj.id) {
                    return Err(Error::validation(format!("{path}.id"), format!("duplicate id {}", obj.id)));
                }
                obj.bbox
                    .validate(self.image_dims)
                    .map_err(|msg| Error::validation(format!("{path}.bbox"), msg))?;
                check_signal(obj.kind, obj.signal).map_err(|msg| Error::validation(format!("{path}.signal"), msg))?;
                if obj.appearance.is_empty() || obj.appearance.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(
                        format!("{path}.appearance"),
                        "must be a non-empty finite vector",
                    ));
                }
            }
            match self.target_in(t) {
                None => {
                    return Err(Error::validation(
                        format!("frames[{t}]"),
                        format!("target pedestrian {} missing", self.target_id),
                    ))
                }
                Some(o) if o.kind != ObjectKind::Pedestrian => {
                    return Err(Error::validation(
                        format!("frames[{t}]"),
                        format!("target {} is a {:?}, not a pedestrian", self.target_id, o.kind),
                    ))
                }
                Some(_) => {}
            }
        }
        if self.label_crossing > 1 {
            return Err(Error::validation("label.crossing", "must be 0 or 1"));
        }
        if self.label_future.is_empty() {
            return Err(Error::validation("label.future", "at least one future position required"));
        }
        if let Some(i) = self.label_future.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::validation(format!("label.future[{i}]"), "non-finite position"));
        }
        Ok(())
    }
}

fn check_signal(kind: ObjectKind, signal: SignalState) -> std::result::Result<(), String> {
    match (kind, signal) {
        (ObjectKind::TrafficLight, SignalState::NotApplicable) => {
            Err("traffic light requires a red, yellow or green state".into())
        }
        (ObjectKind::TrafficLight, _) | (_, SignalState::NotApplicable) => Ok(()),
        (k, s) => Err(format!("{k:?} cannot carry signal state {s:?}")),
    }
}

/// `[kind one-hot (4) | signal one-hot (3)]`; the signal block is all zero
/// for objects that are not traffic lights.
pub fn encode_class(obj: &SceneObject) -> Result<[f64; CLASS_DIM]> {
    check_signal(obj.kind, obj.signal).map_err(|msg| Error::validation("signal", msg))?;
    let mut v = [0.0; CLASS_DIM];
    v[obj.kind.index()] = 1.0;
    if let Some(s) = obj.signal.one_hot_index() {
        v[4 + s] = 1.0;
    }
    Ok(v)
}

/// `[cx/W, cy/H, w/W, h/H, (w*h)/(W*H)]` for a box inside a `W x H` image.
pub fn location_features(bbox: &BoundingBox, dims: [f64; 2]) -> Result<[f64; LOCATION_DIM]> {
    bbox.validate(dims).map_err(|msg| Error::validation("bbox", msg))?;
    let [cx, cy] = bbox.center();
    let (w, h) = (bbox.width(), bbox.height());
    Ok([
        cx / dims[0],
        cy / dims[1],
        w / dims[0],
        h / dims[1],
        (w * h) / (dims[0] * dims[1]),
    ])
}
