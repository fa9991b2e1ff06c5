//! Normalization, taxel-to-matrix rastering, optional blur, and assembly of
//! model-ready tensors in the three layouts the architectures consume.
//!
//! Normalization statistics are fitted on training recordings only and
//! frozen afterwards; applying a normalizer never mutates it.

use crate::dataset::{GraspRecording, TaxelLayout};
use crate::nn::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Map [0, max] to [0, 1] by dividing by the training maximum.
    Scaled,
    /// Map to zero mean, unit standard deviation (training statistics).
    Standardized,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Scaled => "scaled",
            NormKind::Standardized => "standardized",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled" => Ok(NormKind::Scaled),
            "standardized" => Ok(NormKind::Standardized),
            other => Err(Error::invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Whether statistics pool every taxel or are kept per taxel position
/// (flat index = finger * taxels_per_finger + taxel).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormScope {
    Global,
    PerTaxel,
}

impl NormScope {
    pub fn as_str(self) -> &'static str {
        match self {
            NormScope::Global => "global",
            NormScope::PerTaxel => "per_taxel",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(NormScope::Global),
            "per_taxel" => Ok(NormScope::PerTaxel),
            other => Err(Error::invalid(format!("unknown norm scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NormStats {
    /// One slot in Global scope, 3 * taxels slots in PerTaxel scope.
    Scaled { max: Vec<f64> },
    Standardized { mean: Vec<f64>, std: Vec<f64> },
}

/// Frozen normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub kind: NormKind,
    pub scope: NormScope,
    stats: NormStats,
    /// True if a degenerate statistic (all-zero max or zero spread) was
    /// clamped to 1 during fitting.
    pub clamped: bool,
}

/// Computes statistics over the training recordings. Degenerate data (an
/// all-zero maximum, or zero spread) clamps the statistic to 1 and logs a
/// warning instead of failing.
pub fn fit_normalizer(
    training: &[GraspRecording],
    kind: NormKind,
    scope: NormScope,
) -> Result<Normalizer> {
    if training.is_empty() {
        return Err(Error::invalid("cannot fit a normalizer on an empty set"));
    }
    let slots = match scope {
        NormScope::Global => 1,
        NormScope::PerTaxel => 3 * training[0].taxels_per_finger,
    };
    let slot_of = |i: usize, frame_len: usize| match scope {
        NormScope::Global => 0,
        NormScope::PerTaxel => i % frame_len,
    };

    let mut clamped = false;
    let stats = match kind {
        NormKind::Scaled => {
            let mut max = vec![f64::NEG_INFINITY; slots];
            for r in training {
                let frame_len = 3 * r.taxels_per_finger;
                for (i, &v) in r.values().iter().enumerate() {
                    let s = slot_of(i, frame_len);
                    if v > max[s] {
                        max[s] = v;
                    }
                }
            }
            for m in &mut max {
                if *m <= 0.0 {
                    *m = 1.0;
                    clamped = true;
                }
            }
            if clamped {
                log::warn!("scaled normalizer saw all-zero training data; max clamped to 1");
            }
            NormStats::Scaled { max }
        }
        NormKind::Standardized => {
            // Two-pass mean and population standard deviation.
            let mut sum = vec![0.0; slots];
            let mut count = vec![0usize; slots];
            for r in training {
                let frame_len = 3 * r.taxels_per_finger;
                for (i, &v) in r.values().iter().enumerate() {
                    let s = slot_of(i, frame_len);
                    sum[s] += v;
                    count[s] += 1;
                }
            }
            let mean: Vec<f64> = sum
                .iter()
                .zip(&count)
                .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
                .collect();
            let mut sq = vec![0.0; slots];
            for r in training {
                let frame_len = 3 * r.taxels_per_finger;
                for (i, &v) in r.values().iter().enumerate() {
                    let s = slot_of(i, frame_len);
                    let d = v - mean[s];
                    sq[s] += d * d;
                }
            }
            let mut std: Vec<f64> = sq
                .iter()
                .zip(&count)
                .map(|(s, c)| if *c > 0 { (s / *c as f64).sqrt() } else { 0.0 })
                .collect();
            for s in &mut std {
                if *s <= 0.0 {
                    *s = 1.0;
                    clamped = true;
                }
            }
            if clamped {
                log::warn!("standardized normalizer saw constant training data; std clamped to 1");
            }
            NormStats::Standardized { mean, std }
        }
    };
    Ok(Normalizer {
        kind,
        scope,
        stats,
        clamped,
    })
}

impl Normalizer {
    /// Transforms a recording with the frozen statistics. Standardized
    /// output may be negative; such recordings stay in memory only.
    pub fn apply(&self, recording: &GraspRecording) -> GraspRecording {
        match &self.stats {
            NormStats::Scaled { max } => {
                recording.map_values(|slot, v| v / max[slot.min(max.len() - 1)])
            }
            NormStats::Standardized { mean, std } => recording.map_values(|slot, v| {
                let i = slot.min(mean.len() - 1);
                (v - mean[i]) / std[i]
            }),
        }
    }

    pub fn global_max(&self) -> Option<f64> {
        match &self.stats {
            NormStats::Scaled { max } if max.len() == 1 => Some(max[0]),
            _ => None,
        }
    }

    pub fn global_mean_std(&self) -> Option<(f64, f64)> {
        match &self.stats {
            NormStats::Standardized { mean, std } if mean.len() == 1 => Some((mean[0], std[0])),
            _ => None,
        }
    }
}

/// Tensor arrangements consumed by the model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleLayout {
    /// `[T, 3 * grid_rows, grid_cols]`: each time step is an input channel.
    ChannelsAsTime2D,
    /// `[1, T, 3 * grid_rows, grid_cols]`: a single-channel volume.
    Volume3D,
    /// `[T, 3 * taxel_count]`: one concatenated vector per time step.
    SequenceOfVectors,
}

impl SampleLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleLayout::ChannelsAsTime2D => "channels_as_time_2d",
            SampleLayout::Volume3D => "volume_3d",
            SampleLayout::SequenceOfVectors => "sequence_of_vectors",
        }
    }

    pub fn has_spatial_axes(self) -> bool {
        !matches!(self, SampleLayout::SequenceOfVectors)
    }
}

/// Rasters one finger frame into its grid matrix; unmapped cells stay 0.
/// The layout map is injective, so no cell is written twice.
pub fn map_to_grid(frame: &[f64], layout: &TaxelLayout) -> Result<Tensor> {
    if frame.len() != layout.taxel_count {
        return Err(Error::ShapeMismatch {
            context: "map_to_grid frame".into(),
            expected: vec![layout.taxel_count],
            got: vec![frame.len()],
        });
    }
    let mut grid = Tensor::zeros(&[layout.grid_rows, layout.grid_cols]);
    for (v, &(r, c)) in frame.iter().zip(&layout.taxel_to_cell) {
        grid.data_mut()[r * layout.grid_cols + c] = *v;
    }
    Ok(grid)
}

/// Normalized box blur with zero-padded borders; `kernel_size` must be odd.
pub fn blur_grid(matrix: &Tensor, kernel_size: usize) -> Result<Tensor> {
    if matrix.rank() != 2 {
        return Err(Error::invalid(format!(
            "blur_grid expects a matrix, got {:?}",
            matrix.shape()
        )));
    }
    if kernel_size < 3 || kernel_size % 2 == 0 {
        return Err(Error::invalid(format!(
            "blur kernel size must be odd and >= 3, got {kernel_size}"
        )));
    }
    let (rows, cols) = (matrix.shape()[0], matrix.shape()[1]);
    let half = (kernel_size / 2) as isize;
    let weight = 1.0 / (kernel_size * kernel_size) as f64;
    let x = matrix.data();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let mut acc = 0.0;
            for dr in -half..=half {
                for dc in -half..=half {
                    let (ir, ic) = (r + dr, c + dc);
                    if ir >= 0 && ir < rows as isize && ic >= 0 && ic < cols as isize {
                        acc += x[ir as usize * cols + ic as usize];
                    }
                }
            }
            out[(r as usize) * cols + c as usize] = acc * weight;
        }
    }
    Tensor::from_vec(&[rows, cols], out)
}

/// Vertically stacks thumb, index and ring matrices (thumb on top).
pub fn concat_fingers(fingers: &[Tensor; 3]) -> Result<Tensor> {
    let shape = fingers[0].shape().to_vec();
    for f in fingers.iter() {
        if f.rank() != 2 || f.shape() != shape {
            return Err(Error::ShapeMismatch {
                context: "concat_fingers".into(),
                expected: shape.clone(),
                got: f.shape().to_vec(),
            });
        }
    }
    let data: Vec<f64> = fingers.iter().flat_map(|f| f.data().iter().copied()).collect();
    Tensor::from_vec(&[3 * shape[0], shape[1]], data)
}

/// A model-ready tensor with its label and source grasp.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tensor: Tensor,
    pub label: usize,
    pub grasp_id: u32,
}

/// Builds the model input for one (already normalized) recording.
/// `blur` applies a box blur of the given odd size to each finger grid
/// before stacking (grid layouts only).
pub fn assemble(
    recording: &GraspRecording,
    layout: &TaxelLayout,
    sample_layout: SampleLayout,
    blur: Option<usize>,
) -> Result<Sample> {
    let t_len = recording.samples;
    let tensor = match sample_layout {
        SampleLayout::SequenceOfVectors => {
            let per_step = 3 * recording.taxels_per_finger;
            let mut data = Vec::with_capacity(t_len * per_step);
            for t in 0..t_len {
                for f in 0..3 {
                    data.extend_from_slice(recording.frame(t, f));
                }
            }
            Tensor::from_vec(&[t_len, per_step], data)?
        }
        SampleLayout::ChannelsAsTime2D | SampleLayout::Volume3D => {
            let rows = 3 * layout.grid_rows;
            let cols = layout.grid_cols;
            let mut data = Vec::with_capacity(t_len * rows * cols);
            for t in 0..t_len {
                for f in 0..3 {
                    let mut g = map_to_grid(recording.frame(t, f), layout)?;
                    if let Some(k) = blur {
                        g = blur_grid(&g, k)?;
                    }
                    data.extend_from_slice(g.data());
                }
            }
            match sample_layout {
                SampleLayout::ChannelsAsTime2D => Tensor::from_vec(&[t_len, rows, cols], data)?,
                _ => Tensor::from_vec(&[1, t_len, rows, cols], data)?,
            }
        }
    };
    Ok(Sample {
        tensor,
        label: recording.object.id(),
        grasp_id: recording.grasp_id,
    })
}
