//! Per-frame scene graphs: slot assignment, adjacency and stream features.
//!
//! Every real object in a frame is connected to every other real object.
//! Self-loops are added by [`normalize_adjacency`], which returns
//! `D^{-1/2} (A + I) D^{-1/2}` restricted to the real slots.

use std::collections::HashMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scene::{encode_class, location_features, SceneSequence, CLASS_DIM, LOCATION_DIM};

/// Normalized adjacency for every frame plus the real-node masks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyStack {
    /// `[T, N, N]`.
    pub frames: Tensor,
    /// `mask[t][n]` is true when slot `n` holds an object in frame `t`.
    pub mask: Vec<Vec<bool>>,
}

impl AdjacencyStack {
    pub fn num_frames(&self) -> usize {
        self.mask.len()
    }

    pub fn num_slots(&self) -> usize {
        self.frames.shape()[1]
    }

    /// Row mask over the flattened `[T * N]` slot grid.
    pub fn flat_mask(&self) -> Vec<bool> {
        self.mask.iter().flatten().copied().collect()
    }
}

/// Raw adjacency of the complete graph over the real slots in `mask`.
/// The diagonal is 1 on real slots only when `self_loops` is set.
pub fn build_adjacency(mask: &[bool], self_loops: bool) -> Tensor {
    let n = mask.len();
    let mut a = Tensor::zeros(&[n, n]);
    let data = a.data_mut();
    for u in 0..n {
        for v in 0..n {
            if mask[u] && mask[v] && (u != v || self_loops) {
                data[u * n + v] = 1.0;
            }
        }
    }
    a
}

/// Symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` over the real slots;
/// rows and columns of padded slots stay zero.
pub fn normalize_adjacency(a: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let n = mask.len();
    if a.shape() != [n, n] {
        return Err(Error::shape("normalize_adjacency", a.shape(), &[n, n]));
    }
    let d = a.data();
    for u in 0..n {
        for v in 0..n {
            let (x, y) = (d[u * n + v], d[v * n + u]);
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::validation(format!("adjacency[{u}][{v}]"), "must be finite and non-negative"));
            }
            if x != y {
                return Err(Error::validation(format!("adjacency[{u}][{v}]"), "matrix is not symmetric"));
            }
        }
    }
    let real = |u: usize| mask[u];
    let mut looped = vec![0.0; n * n];
    for u in (0..n).filter(|&u| real(u)) {
        for v in (0..n).filter(|&v| real(v)) {
            looped[u * n + v] = d[u * n + v] + if u == v { 1.0 } else { 0.0 };
        }
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|u| {
            let deg: f64 = looped[u * n..(u + 1) * n].iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let out = (0..n * n)
        .map(|i| {
            let (u, v) = (i / n, i % n);
            inv_sqrt_deg[u] * looped[i] * inv_sqrt_deg[v]
        })
        .collect();
    Tensor::new(vec![n, n], out)
}

/// A sequence laid out on a fixed `T x N` slot grid, without appearance.
#[derive(Clone, Debug)]
pub struct SceneGraph {
    pub frames: usize,
    pub slots: usize,
    /// For each `(t, n)` in row-major order, the index of the object within
    /// `seq.frames[t].objects`, or `None` for padding.
    pub slot_objects: Vec<Option<usize>>,
    /// `[T, N, CLASS_DIM]`.
    pub class: Tensor,
    /// `[T, N, LOCATION_DIM]`.
    pub location: Tensor,
    pub adjacency: AdjacencyStack,
}

/// Options controlling [`build_scene_graph`].
#[derive(Clone, Copy, Debug, Default)]
pub struct GraphOptions {
    /// Fixed slot count; `None` uses the number of distinct objects.
    pub slots: Option<usize>,
    /// Zero the signal-state block of every class vector.
    pub ablate_signals: bool,
}

/// Assigns objects to slots and encodes class and location features.
///
/// The target pedestrian always occupies slot 0; the remaining objects take
/// slots in order of first appearance.
pub fn build_scene_graph(seq: &SceneSequence, opts: GraphOptions) -> Result<SceneGraph> {
    let t_len = seq.frames.len();
    if t_len == 0 {
        return Err(Error::validation("frames", "at least one frame required"));
    }
    for t in 0..t_len {
        if seq.target_in(t).is_none() {
            return Err(Error::validation(
                format!("frames[{t}]"),
                format!("target pedestrian {} missing", seq.target_id),
            ));
        }
    }
    let mut slot_of: HashMap<u32, usize> = HashMap::new();
    slot_of.insert(seq.target_id, 0);
    for frame in &seq.frames {
        for obj in &frame.objects {
            let next = slot_of.len();
            slot_of.entry(obj.id).or_insert(next);
        }
    }
    let n = match opts.slots {
        Some(cap) if slot_of.len() > cap => {
            return Err(Error::validation(
                "frames",
                format!("{} distinct objects exceed the {cap} available node slots", slot_of.len()),
            ))
        }
        Some(cap) => cap,
        None => slot_of.len(),
    };

    let mut slot_objects = vec![None; t_len * n];
    let mut class = Tensor::zeros(&[t_len, n, CLASS_DIM]);
    let mut location = Tensor::zeros(&[t_len, n, LOCATION_DIM]);
    let mut mask = vec![vec![false; n]; t_len];
    let mut adj = Vec::with_capacity(t_len * n * n);
    for (t, frame) in seq.frames.iter().enumerate() {
        for (j, obj) in frame.objects.iter().enumerate() {
            let path = format!("frames[{t}].objects[{j}]");
            let slot = slot_of[&obj.id];
            let cell = t * n + slot;
            slot_objects[cell] = Some(j);
            mask[t][slot] = true;
            let mut cv = encode_class(obj).map_err(|e| prefix(e, &path))?;
            if opts.ablate_signals {
                cv[4..].iter_mut().for_each(|v| *v = 0.0);
            }
            class.data_mut()[cell * CLASS_DIM..(cell + 1) * CLASS_DIM].copy_from_slice(&cv);
            let lv = location_features(&obj.bbox, seq.image_dims).map_err(|e| prefix(e, &path))?;
            location.data_mut()[cell * LOCATION_DIM..(cell + 1) * LOCATION_DIM].copy_from_slice(&lv);
        }
        let raw = build_adjacency(&mask[t], false);
        adj.extend_from_slice(normalize_adjacency(&raw, &mask[t])?.data());
    }
    Ok(SceneGraph {
        frames: t_len,
        slots: n,
        slot_objects,
        class,
        location,
        adjacency: AdjacencyStack {
            frames: Tensor::new(vec![t_len, n, n], adj)?,
            mask,
        },
    })
}

fn prefix(err: Error, path: &str) -> Error {
    match err {
        Error::Validation { path: p, msg } => Error::Validation {
            path: format!("{path}.{p}"),
            msg,
        },
        other => other,
    }
}

/// Builds both stream inputs from precomputed appearance features:
/// image-class `[T, N, appearance_dim + 7]` and location-class `[T, N, 5 + 7]`.
/// Padded slots are zero rows in both.
pub fn assemble_streams(
    seq: &SceneSequence,
    appearance_dim: usize,
    opts: GraphOptions,
) -> Result<(Tensor, Tensor, AdjacencyStack)> {
    let g = build_scene_graph(seq, opts)?;
    let (t_len, n) = (g.frames, g.slots);
    let d_ic = appearance_dim + CLASS_DIM;
    let d_lc = LOCATION_DIM + CLASS_DIM;
    let mut x_ic = vec![0.0; t_len * n * d_ic];
    let mut x_lc = vec![0.0; t_len * n * d_lc];
    for (cell, obj_idx) in g.slot_objects.iter().enumerate() {
        let Some(j) = obj_idx else { continue };
        let t = cell / n;
        let obj = &seq.frames[t].objects[*j];
        if obj.appearance.len() != appearance_dim {
            return Err(Error::validation(
                format!("frames[{t}].objects[{j}].appearance"),
                format!("expected {appearance_dim} features, found {}", obj.appearance.len()),
            ));
        }
        let class = &g.class.data()[cell * CLASS_DIM..(cell + 1) * CLASS_DIM];
        let loc = &g.location.data()[cell * LOCATION_DIM..(cell + 1) * LOCATION_DIM];
        let ic = &mut x_ic[cell * d_ic..(cell + 1) * d_ic];
        ic[..appearance_dim].copy_from_slice(&obj.appearance);
        ic[appearance_dim..].copy_from_slice(class);
        let lc = &mut x_lc[cell * d_lc..(cell + 1) * d_lc];
        lc[..LOCATION_DIM].copy_from_slice(loc);
        lc[LOCATION_DIM..].copy_from_slice(class);
    }
    Ok((
        Tensor::new(vec![t_len, n, d_ic], x_ic)?,
        Tensor::new(vec![t_len, n, d_lc], x_lc)?,
        g.adjacency,
    ))
}
