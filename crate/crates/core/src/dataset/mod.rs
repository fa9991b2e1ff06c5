//! Recording format, grasp-detection gate, the fixed 9-class label set and
//! leakage-safe train/validation partitioning.

mod tacrec;

pub use tacrec::{
    load_dataset, read_recording, read_recording_text, write_dataset, write_recording,
    write_recording_text, ManifestEntry, MANIFEST_NAME, TACREC_MAGIC,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::seed;
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 9;

/// Number of samples every recording is resampled to.
pub const CANONICAL_SAMPLES: usize = 63;

/// Raw taxel values are ADC-like counts on this scale.
pub const SENSOR_FULL_SCALE: f64 = 4096.0;

/// Default grasp-gate pressure threshold: 2% of full scale.
pub fn default_gate_threshold() -> f64 {
    0.02 * SENSOR_FULL_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectClass {
    SpikyRubberBall,
    PlasticBall,
    EmptyBottle,
    MetalPipe,
    CardboardBox,
    SpongeBox,
    PaintRoller,
    TriangularPrism,
    Icosahedron,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; NUM_CLASSES] = [
        ObjectClass::SpikyRubberBall,
        ObjectClass::PlasticBall,
        ObjectClass::EmptyBottle,
        ObjectClass::MetalPipe,
        ObjectClass::CardboardBox,
        ObjectClass::SpongeBox,
        ObjectClass::PaintRoller,
        ObjectClass::TriangularPrism,
        ObjectClass::Icosahedron,
    ];

    pub fn id(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("object class id {id} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::SpikyRubberBall => "spiky_rubber_ball",
            ObjectClass::PlasticBall => "plastic_ball",
            ObjectClass::EmptyBottle => "empty_bottle",
            ObjectClass::MetalPipe => "metal_pipe",
            ObjectClass::CardboardBox => "cardboard_box",
            ObjectClass::SpongeBox => "sponge_box",
            ObjectClass::PaintRoller => "paint_roller",
            ObjectClass::TriangularPrism => "triangular_prism",
            ObjectClass::Icosahedron => "icosahedron",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown object class `{name}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sensor {
    BioTacSp,
    WtsFt,
}

impl Sensor {
    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::BioTacSp => "biotac",
            Sensor::WtsFt => "wtsft",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "biotac" => Ok(Sensor::BioTacSp),
            "wtsft" => Ok(Sensor::WtsFt),
            other => Err(Error::invalid(format!("unknown sensor `{other}`"))),
        }
    }

    pub fn taxel_count(self) -> usize {
        match self {
            Sensor::BioTacSp => 24,
            Sensor::WtsFt => 32,
        }
    }

    /// Native samples per ~6 s recording before any resampling.
    pub fn native_samples(self) -> usize {
        match self {
            Sensor::BioTacSp => 63,
            Sensor::WtsFt => 200,
        }
    }

    pub fn native_rate_hz(self) -> f64 {
        match self {
            Sensor::BioTacSp => 10.5,
            Sensor::WtsFt => 33.33,
        }
    }
}

pub const FINGER_NAMES: [&str; 3] = ["thumb", "index", "ring"];
pub const THUMB: usize = 0;
pub const INDEX_FINGER: usize = 1;
pub const RING_FINGER: usize = 2;

/// Per-sensor geometry: taxel count, grid extents and the injective
/// taxel-to-cell map used to raster taxels into a matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxelLayout {
    pub sensor: Sensor,
    pub taxel_count: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub taxel_to_cell: Vec<(usize, usize)>,
}

const BIOTAC_LAYOUT_V1: &str = include_str!("../../data/biotac_sp_layout_v1.tsv");

impl TaxelLayout {
    /// The WTS-FT is a plain 8x4 grid; taxels map row-major.
    pub fn wts_ft() -> Self {
        let taxel_to_cell = (0..32).map(|i| (i / 4, i % 4)).collect();
        TaxelLayout {
            sensor: Sensor::WtsFt,
            taxel_count: 32,
            grid_rows: 8,
            grid_cols: 4,
            taxel_to_cell,
        }
    }

    /// Approximate BioTac SP map shipped with the crate (see the data file).
    pub fn biotac_sp() -> Self {
        Self::from_table(Sensor::BioTacSp, BIOTAC_LAYOUT_V1, "biotac_sp_layout_v1.tsv")
            .expect("embedded layout table is valid")
    }

    pub fn for_sensor(sensor: Sensor) -> Self {
        match sensor {
            Sensor::BioTacSp => Self::biotac_sp(),
            Sensor::WtsFt => Self::wts_ft(),
        }
    }

    /// Parses a layout table (`rows=`/`cols=` headers, then
    /// `taxel<TAB>row<TAB>col` lines). The map must be injective, in-bounds
    /// and match the sensor's taxel count.
    pub fn from_table(sensor: Sensor, text: &str, origin: &str) -> Result<Self> {
        let mut rows = None;
        let mut cols = None;
        let mut cells: Vec<Option<(usize, usize)>> = vec![None; sensor.taxel_count()];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("rows=") {
                rows = Some(v.parse::<usize>().map_err(|_| {
                    Error::format(origin, n + 1, format!("bad rows value `{v}`"))
                })?);
                continue;
            }
            if let Some(v) = line.strip_prefix("cols=") {
                cols = Some(v.parse::<usize>().map_err(|_| {
                    Error::format(origin, n + 1, format!("bad cols value `{v}`"))
                })?);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::format(origin, n + 1, format!("expected 3 fields, got `{line}`")));
            }
            let parse = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::format(origin, n + 1, format!("bad integer `{s}`")))
            };
            let (taxel, row, col) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
            if taxel >= cells.len() {
                return Err(Error::format(
                    origin,
                    n + 1,
                    format!("taxel {taxel} out of range for {}", cells.len()),
                ));
            }
            if cells[taxel].is_some() {
                return Err(Error::format(origin, n + 1, format!("duplicate taxel {taxel}")));
            }
            cells[taxel] = Some((row, col));
        }
        let grid_rows = rows.ok_or_else(|| Error::format(origin, 1, "missing rows= header"))?;
        let grid_cols = cols.ok_or_else(|| Error::format(origin, 1, "missing cols= header"))?;
        let taxel_to_cell: Vec<(usize, usize)> = cells
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| Error::format(origin, 1, format!("taxel {i} unmapped"))))
            .collect::<Result<_>>()?;
        let layout = TaxelLayout {
            sensor,
            taxel_count: taxel_to_cell.len(),
            grid_rows,
            grid_cols,
            taxel_to_cell,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taxel_to_cell.len() != self.taxel_count
            || self.taxel_count != self.sensor.taxel_count()
        {
            return Err(Error::invalid(format!(
                "layout for {} must map {} taxels, has {}",
                self.sensor.as_str(),
                self.sensor.taxel_count(),
                self.taxel_to_cell.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for &(r, c) in &self.taxel_to_cell {
            if r >= self.grid_rows || c >= self.grid_cols {
                return Err(Error::invalid(format!(
                    "cell ({r}, {c}) outside {}x{} grid",
                    self.grid_rows, self.grid_cols
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::invalid(format!("cell ({r}, {c}) mapped twice")));
            }
        }
        Ok(())
    }
}

/// One labeled grasp: frames of per-finger taxel values over time.
///
/// Frame storage is `[t][finger][taxel]` row-major; finger order is fixed
/// to thumb, index, ring.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspRecording {
    pub sensor: Sensor,
    pub object: ObjectClass,
    pub grasp_id: u32,
    pub taxels_per_finger: usize,
    pub samples: usize,
    pub rate_hz: f64,
    values: Vec<f64>,
}

impl GraspRecording {
    /// Builds a raw recording; values must be non-negative and finite.
    pub fn new(
        sensor: Sensor,
        object: ObjectClass,
        grasp_id: u32,
        taxels_per_finger: usize,
        samples: usize,
        rate_hz: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "recording values must be finite and non-negative",
            ));
        }
        Self::new_unchecked(sensor, object, grasp_id, taxels_per_finger, samples, rate_hz, values)
    }

    /// Same as `new` but skips the non-negativity check; used for processed
    /// (e.g. standardized) recordings that are never written back to disk.
    pub(crate) fn new_unchecked(
        sensor: Sensor,
        object: ObjectClass,
        grasp_id: u32,
        taxels_per_finger: usize,
        samples: usize,
        rate_hz: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::invalid("recording needs at least one sample"));
        }
        if values.len() != samples * 3 * taxels_per_finger {
            return Err(Error::ShapeMismatch {
                context: "recording values".into(),
                expected: vec![samples * 3 * taxels_per_finger],
                got: vec![values.len()],
            });
        }
        Ok(GraspRecording {
            sensor,
            object,
            grasp_id,
            taxels_per_finger,
            samples,
            rate_hz,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Taxel values of one finger at one time step.
    pub fn frame(&self, t: usize, finger: usize) -> &[f64] {
        let n = self.taxels_per_finger;
        let start = (t * 3 + finger) * n;
        &self.values[start..start + n]
    }

    /// Maps every value through `f`, keeping metadata.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> GraspRecording {
        // f receives (flat taxel index within frame, value) so per-taxel
        // statistics can apply; flat index = finger * taxels + taxel.
        let frame_len = 3 * self.taxels_per_finger;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % frame_len, v))
            .collect();
        GraspRecording {
            values,
            ..self.clone()
        }
    }

    /// Number of frames covering the first second of this recording.
    pub fn first_second_frames(&self) -> usize {
        (self.rate_hz.ceil() as usize).clamp(1, self.samples)
    }
}

/// Sustained-contact gate over the first second of a candidate recording:
/// every frame must show thumb pressure above `threshold` and index or ring
/// pressure above `threshold`.
pub fn grasp_gate(recording: &GraspRecording, threshold: f64) -> Result<bool> {
    gate_over_window(recording, recording.first_second_frames(), threshold)
}

/// Gate evaluated over the first `window` frames.
pub fn gate_over_window(
    recording: &GraspRecording,
    window: usize,
    threshold: f64,
) -> Result<bool> {
    if window == 0 || window > recording.samples {
        return Err(Error::invalid(format!(
            "gate window must cover 1..={} frames, got {window}",
            recording.samples
        )));
    }
    let max_of = |t: usize, finger: usize| {
        recording
            .frame(t, finger)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    };
    for t in 0..window {
        let thumb = max_of(t, THUMB) > threshold;
        let other = max_of(t, INDEX_FINGER) > threshold || max_of(t, RING_FINGER) > threshold;
        if !(thumb && other) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Nearest-neighbour resampling to the canonical 63 samples.
/// Output frame j comes from input frame round(j * (T-1) / 62).
pub fn resample_to_canonical(recording: &GraspRecording) -> Result<GraspRecording> {
    let t_in = recording.samples;
    if t_in < CANONICAL_SAMPLES {
        return Err(Error::invalid(format!(
            "cannot resample {t_in} samples up to {CANONICAL_SAMPLES}"
        )));
    }
    if t_in == CANONICAL_SAMPLES {
        return Ok(recording.clone());
    }
    let frame_len = 3 * recording.taxels_per_finger;
    let mut values = Vec::with_capacity(CANONICAL_SAMPLES * frame_len);
    for j in 0..CANONICAL_SAMPLES {
        let src = resample_source_index(j, t_in);
        values.extend_from_slice(&recording.values[src * frame_len..(src + 1) * frame_len]);
    }
    GraspRecording::new_unchecked(
        recording.sensor,
        recording.object,
        recording.grasp_id,
        recording.taxels_per_finger,
        CANONICAL_SAMPLES,
        recording.rate_hz * CANONICAL_SAMPLES as f64 / t_in as f64,
        values,
    )
}

/// round(j * (T-1) / 62) in exact integer arithmetic (half rounds up).
pub fn resample_source_index(j: usize, t_in: usize) -> usize {
    (j * (t_in - 1) + (CANONICAL_SAMPLES - 1) / 2) / (CANONICAL_SAMPLES - 1)
}

/// Grasp-level train/validation partition. Both sides hold grasp ids, never
/// derived series, so splitting augmentation cannot leak across them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<u32>,
    pub val_ids: BTreeSet<u32>,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        let shared: Vec<u32> = self.train_ids.intersection(&self.val_ids).copied().collect();
        if !shared.is_empty() {
            return Err(Error::Leakage { ids: shared });
        }
        Ok(())
    }
}

/// Stratified, seeded partition by grasp id. Each class contributes
/// round(n * val_fraction) validation grasps (at least one grasp stays in
/// training per class).
pub fn partition_by_grasp(
    recordings: &[GraspRecording],
    val_fraction: f64,
    seed_value: u64,
) -> Result<DatasetSplit> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for r in recordings {
        by_class.entry(r.object.id()).or_default().insert(r.grasp_id);
    }
    if by_class.is_empty() {
        return Err(Error::invalid("cannot partition an empty dataset"));
    }
    let mut split = DatasetSplit::default();
    for (class_id, ids) in by_class {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        let mut rng = seed::rng(seed_value, &[seed::stream::PARTITION, class_id as u64]);
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
        for (i, id) in ids.into_iter().enumerate() {
            if i < n_val {
                split.val_ids.insert(id);
            } else {
                split.train_ids.insert(id);
            }
        }
    }
    split.validate()?;
    Ok(split)
}
