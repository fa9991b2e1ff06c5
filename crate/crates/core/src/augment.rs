//! The two augmentation mechanisms: interleaved time-series splitting and
//! spatial taxel shifts.
//!
//! Splitting turns one length-N series into k series by dealing samples
//! round-robin (series i takes indices i, i+k, i+2k, ...). Nothing is
//! discarded: the k outputs partition the input exactly. Shorter outputs
//! are padded to ceil(N/k) by repeating their own final sample so tensor
//! shapes stay uniform.
//!
//! Splitting must happen *after* the grasp-level train/validation
//! partition; sibling series of one grasp are near-duplicates and leak
//! across partitions otherwise. `augment_partition` enforces that.

use crate::dataset::{DatasetSplit, GraspRecording};
use crate::nn::Tensor;
use crate::preprocess::SampleLayout;
use crate::{Error, Result};

/// Maximum horizontal (column) and vertical (row) shift in taxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftSpec {
    pub max_horizontal: i64,
    pub max_vertical: i64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            max_horizontal: 1,
            max_vertical: 2,
        }
    }
}

/// Interleaved split of a generic sample sequence. Output i holds items
/// i, i+k, i+2k, ... padded to ceil(N/k) by repeating its last item.
pub fn split_interleaved<T: Clone>(items: &[T], k: usize) -> Result<Vec<Vec<T>>> {
    if k == 0 {
        return Err(Error::invalid("split ratio must be >= 1"));
    }
    if k > items.len() {
        return Err(Error::invalid(format!(
            "split ratio {k} exceeds series length {}",
            items.len()
        )));
    }
    let target = items.len().div_ceil(k);
    let mut out: Vec<Vec<T>> = (0..k).map(|_| Vec::with_capacity(target)).collect();
    for (i, item) in items.iter().enumerate() {
        out[i % k].push(item.clone());
    }
    for series in &mut out {
        while series.len() < target {
            let last = series.last().expect("k <= N so every series is non-empty").clone();
            series.push(last);
        }
    }
    Ok(out)
}

/// Splits a recording into k recordings of ceil(T/k) samples each. Children
/// inherit the parent's grasp id and label; the sample rate drops by k.
pub fn split_recording(recording: &GraspRecording, k: usize) -> Result<Vec<GraspRecording>> {
    let frame_len = 3 * recording.taxels_per_finger;
    let frames: Vec<&[f64]> = (0..recording.samples)
        .map(|t| &recording.values()[t * frame_len..(t + 1) * frame_len])
        .collect();
    let parts = split_interleaved(&frames, k)?;
    parts
        .into_iter()
        .map(|frames| {
            let samples = frames.len();
            let values: Vec<f64> = frames.into_iter().flatten().copied().collect();
            GraspRecording::new_unchecked(
                recording.sensor,
                recording.object,
                recording.grasp_id,
                recording.taxels_per_finger,
                samples,
                recording.rate_hz / k as f64,
                values,
            )
        })
        .collect()
}

/// Translates the spatial plane of an assembled sample by (`dh` columns,
/// `dv` rows), identically at every time step. Vacated cells are
/// zero-filled; shifted-out values are discarded. The 1D sequence layout
/// has no spatial axes and is rejected.
pub fn shift_sample(
    tensor: &Tensor,
    layout: SampleLayout,
    dh: i64,
    dv: i64,
    spec: ShiftSpec,
) -> Result<Tensor> {
    if !layout.has_spatial_axes() {
        return Err(Error::invalid(
            "shift augmentation needs spatial axes; the sequence-of-vectors layout has none",
        ));
    }
    if dh.abs() > spec.max_horizontal || dv.abs() > spec.max_vertical {
        return Err(Error::invalid(format!(
            "shift ({dh}, {dv}) outside +-({}, {})",
            spec.max_horizontal, spec.max_vertical
        )));
    }
    let shape = tensor.shape();
    let (planes, rows, cols) = match (layout, shape.len()) {
        (SampleLayout::ChannelsAsTime2D, 3) => (shape[0], shape[1], shape[2]),
        (SampleLayout::Volume3D, 4) => (shape[0] * shape[1], shape[2], shape[3]),
        _ => {
            return Err(Error::invalid(format!(
                "layout {} does not match tensor shape {shape:?}",
                layout.as_str()
            )))
        }
    };
    if dh == 0 && dv == 0 {
        return Ok(tensor.detached());
    }
    let x = tensor.data();
    let mut out = vec![0.0; x.len()];
    for p in 0..planes {
        let base = p * rows * cols;
        for r in 0..rows as i64 {
            let src_r = r - dv;
            if src_r < 0 || src_r >= rows as i64 {
                continue;
            }
            for c in 0..cols as i64 {
                let src_c = c - dh;
                if src_c < 0 || src_c >= cols as i64 {
                    continue;
                }
                out[base + r as usize * cols + c as usize] =
                    x[base + src_r as usize * cols + src_c as usize];
            }
        }
    }
    Tensor::from_vec(shape, out)
}

/// Split-augmented train and validation recordings. `shift_train` records
/// whether taxel-shift augmentation should be drawn for the training side
/// during training (it is never applied to validation data).
#[derive(Debug, Clone)]
pub struct AugmentedPartition {
    pub train: Vec<GraspRecording>,
    pub val: Vec<GraspRecording>,
    pub shift_train: bool,
}

/// Applies series splitting to both partitions of an existing grasp-level
/// split. Fails hard if any grasp id reaches both outputs.
pub fn augment_partition(
    recordings: &[GraspRecording],
    split: &DatasetSplit,
    k: usize,
    shift_train: bool,
) -> Result<AugmentedPartition> {
    split.validate()?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for r in recordings {
        let target = if split.train_ids.contains(&r.grasp_id) {
            &mut train
        } else if split.val_ids.contains(&r.grasp_id) {
            &mut val
        } else {
            return Err(Error::invalid(format!(
                "grasp id {} appears in neither partition",
                r.grasp_id
            )));
        };
        target.extend(split_recording(r, k)?);
    }
    let train_ids: std::collections::BTreeSet<u32> = train.iter().map(|r| r.grasp_id).collect();
    let val_ids: std::collections::BTreeSet<u32> = val.iter().map(|r| r.grasp_id).collect();
    let shared: Vec<u32> = train_ids.intersection(&val_ids).copied().collect();
    if !shared.is_empty() {
        return Err(Error::Leakage { ids: shared });
    }
    Ok(AugmentedPartition {
        train,
        val,
        shift_train,
    })
}
