//! Deterministic synthetic grasp generator.
//!
//! Stands in for the physical rig: each object class has a contact
//! footprint over the finger grids, a stiffness-shaped pressure ramp, pose
//! jitter and sensor noise. The prism and icosahedron re-seat mid-squeeze
//! (facet_shift), swapping footprint variants at fixed transition times.
//!
//! Every grasp draws from its own stream derived from
//! (seed, class, grasp_id), so parallel and serial generation agree, and a
//! dataset is byte-reproducible from its seed.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{
    default_gate_threshold, grasp_gate, write_dataset, GraspRecording, ManifestEntry, ObjectClass,
    Sensor, TaxelLayout,
};
use crate::seed;
use crate::{Error, Result};

/// Per-finger pressure scaling: thumb opposes, ring trails.
const FINGER_SCALE: [f64; 3] = [1.0, 0.85, 0.72];
/// Per-finger contact-center offsets in normalized grid units.
const FINGER_OFFSET: [(f64, f64); 3] = [(0.0, 0.0), (0.05, -0.04), (-0.05, 0.04)];

const MAX_GATE_RETRIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FootprintShape {
    Blob,
    Spiky,
    Bar,
    Slab,
    Edge,
    Vertex,
}

impl FootprintShape {
    pub fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "blob" => FootprintShape::Blob,
            "spiky" => FootprintShape::Spiky,
            "bar" => FootprintShape::Bar,
            "slab" => FootprintShape::Slab,
            "edge" => FootprintShape::Edge,
            "vertex" => FootprintShape::Vertex,
            other => return Err(Error::invalid(format!("unknown footprint shape `{other}`"))),
        })
    }

    /// Gaussian blobs (center_row, center_col, sigma_row, sigma_col, amp)
    /// in normalized [0,1] grid coordinates, per variant.
    fn variants(self) -> &'static [&'static [(f64, f64, f64, f64, f64)]] {
        match self {
            FootprintShape::Blob => &[&[(0.5, 0.5, 0.24, 0.28, 1.0)]],
            FootprintShape::Spiky => &[&[
                (0.28, 0.30, 0.11, 0.11, 1.0),
                (0.34, 0.72, 0.10, 0.10, 0.9),
                (0.66, 0.42, 0.11, 0.11, 0.95),
                (0.72, 0.78, 0.09, 0.09, 0.85),
            ]],
            FootprintShape::Bar => &[&[
                (0.15, 0.5, 0.16, 0.14, 1.0),
                (0.38, 0.5, 0.16, 0.14, 1.0),
                (0.62, 0.5, 0.16, 0.14, 1.0),
                (0.85, 0.5, 0.16, 0.14, 1.0),
            ]],
            FootprintShape::Slab => &[&[(0.5, 0.5, 0.42, 0.45, 1.3)]],
            FootprintShape::Edge => &[
                &[
                    (0.2, 0.35, 0.12, 0.09, 1.0),
                    (0.5, 0.35, 0.12, 0.09, 1.0),
                    (0.8, 0.35, 0.12, 0.09, 1.0),
                ],
                &[
                    (0.5, 0.2, 0.09, 0.12, 1.0),
                    (0.5, 0.5, 0.09, 0.12, 1.0),
                    (0.5, 0.8, 0.09, 0.12, 1.0),
                ],
                &[
                    (0.25, 0.25, 0.10, 0.10, 1.0),
                    (0.5, 0.5, 0.10, 0.10, 1.0),
                    (0.75, 0.75, 0.10, 0.10, 1.0),
                ],
            ],
            FootprintShape::Vertex => &[
                &[
                    (0.45, 0.5, 0.10, 0.10, 1.0),
                    (0.7, 0.3, 0.08, 0.08, 0.55),
                    (0.25, 0.7, 0.08, 0.08, 0.5),
                ],
                &[(0.35, 0.35, 0.10, 0.10, 1.0), (0.7, 0.65, 0.10, 0.10, 0.9)],
                &[(0.6, 0.55, 0.10, 0.10, 1.0), (0.3, 0.45, 0.08, 0.08, 0.6)],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Static,
    /// Re-seat times as fractions of the recording length.
    FacetShift { transitions: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectProfile {
    pub class: ObjectClass,
    pub shape: FootprintShape,
    /// Contact pressure at recording start (the gate has already fired).
    pub base: f64,
    /// Pressure at full squeeze.
    pub peak: f64,
    /// Ramp exponent: pressure(t) = base + (peak-base) * (t/(T-1))^stiffness.
    pub stiffness: f64,
    pub noise_sigma: f64,
    pub jitter_rows: f64,
    pub jitter_cols: f64,
    pub dynamics: Dynamics,
}

impl ObjectProfile {
    fn validate(&self) -> Result<()> {
        if self.base <= 0.0 || self.peak < self.base {
            return Err(Error::invalid(format!(
                "{}: need 0 < base <= peak",
                self.class.name()
            )));
        }
        if self.stiffness <= 0.0 {
            return Err(Error::invalid(format!(
                "{}: stiffness must be positive",
                self.class.name()
            )));
        }
        if self.noise_sigma < 0.0 || self.jitter_rows < 0.0 || self.jitter_cols < 0.0 {
            return Err(Error::invalid(format!(
                "{}: noise and jitter must be non-negative",
                self.class.name()
            )));
        }
        if let Dynamics::FacetShift { transitions } = &self.dynamics {
            let facet_classes = [ObjectClass::TriangularPrism, ObjectClass::Icosahedron];
            if !facet_classes.contains(&self.class) {
                return Err(Error::invalid(format!(
                    "{}: facet_shift dynamics are reserved for the prism and icosahedron",
                    self.class.name()
                )));
            }
            if transitions.is_empty() || transitions.iter().any(|t| !(0.0..1.0).contains(t)) {
                return Err(Error::invalid(format!(
                    "{}: transitions must be fractions in [0, 1)",
                    self.class.name()
                )));
            }
        }
        Ok(())
    }
}

const DEFAULT_PROFILES: &str = include_str!("../data/grasp_profiles_v1.cfg");

/// The profiles shipped with the crate.
pub fn default_profiles() -> Vec<ObjectProfile> {
    parse_profiles(DEFAULT_PROFILES, "grasp_profiles_v1.cfg").expect("embedded profiles are valid")
}

/// Parses blank-line separated `key=value` blocks, one per class. All nine
/// classes must appear exactly once.
pub fn parse_profiles(text: &str, origin: &str) -> Result<Vec<ObjectProfile>> {
    struct Block {
        line: usize,
        fields: Vec<(usize, String, String)>,
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut current: Option<Block> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format(origin, n + 1, format!("expected key=value, got `{line}`"))
        })?;
        let block = current.get_or_insert(Block {
            line: n + 1,
            fields: Vec::new(),
        });
        block
            .fields
            .push((n + 1, k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(b) = current.take() {
        blocks.push(b);
    }

    let mut profiles: Vec<ObjectProfile> = Vec::new();
    for block in blocks {
        let get = |key: &str| -> Result<(usize, &str)> {
            block
                .fields
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(n, _, v)| (*n, v.as_str()))
                .ok_or_else(|| Error::format(origin, block.line, format!("block missing `{key}`")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            let (n, v) = get(key)?;
            v.parse::<f64>()
                .map_err(|_| Error::format(origin, n, format!("bad number `{v}` for {key}")))
        };
        let (n, class_name) = get("class")?;
        let class = ObjectClass::from_name(class_name)
            .map_err(|e| Error::format(origin, n, e.to_string()))?;
        let (n, shape_name) = get("shape")?;
        let shape = FootprintShape::from_str(shape_name)
            .map_err(|e| Error::format(origin, n, e.to_string()))?;
        let (n, dyn_name) = get("dynamics")?;
        let dynamics = match dyn_name {
            "static" => Dynamics::Static,
            "facet_shift" => {
                let (tn, list) = get("transitions")?;
                let transitions: Vec<f64> = list
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format(origin, tn, format!("bad transitions `{list}`")))?;
                Dynamics::FacetShift { transitions }
            }
            other => return Err(Error::format(origin, n, format!("unknown dynamics `{other}`"))),
        };
        let profile = ObjectProfile {
            class,
            shape,
            base: parse_f64("base")?,
            peak: parse_f64("peak")?,
            stiffness: parse_f64("stiffness")?,
            noise_sigma: parse_f64("noise_sigma")?,
            jitter_rows: parse_f64("jitter_rows")?,
            jitter_cols: parse_f64("jitter_cols")?,
            dynamics,
        };
        profile
            .validate()
            .map_err(|e| Error::format(origin, block.line, e.to_string()))?;
        if profiles.iter().any(|p| p.class == class) {
            return Err(Error::format(
                origin,
                block.line,
                format!("duplicate profile for {}", class.name()),
            ));
        }
        profiles.push(profile);
    }
    if profiles.len() != ObjectClass::ALL.len() {
        return Err(Error::format(
            origin,
            1,
            format!(
                "expected {} class profiles, found {}",
                ObjectClass::ALL.len(),
                profiles.len()
            ),
        ));
    }
    profiles.sort_by_key(|p| p.class.id());
    Ok(profiles)
}

/// Footprint value at a grid cell for one finger, shifted by the grasp's
/// pose jitter (in taxels).
fn footprint_at(
    shape: FootprintShape,
    variant: usize,
    finger: usize,
    layout: &TaxelLayout,
    cell: (usize, usize),
    jitter: (f64, f64),
) -> f64 {
    let blobs = shape.variants()[variant % shape.variants().len()];
    let (f_dr, f_dc) = FINGER_OFFSET[finger];
    let r = (cell.0 as f64 + 0.5) / layout.grid_rows as f64
        - jitter.0 / layout.grid_rows as f64
        - f_dr;
    let c = (cell.1 as f64 + 0.5) / layout.grid_cols as f64
        - jitter.1 / layout.grid_cols as f64
        - f_dc;
    let mut acc = 0.0;
    for &(cr, cc, sr, sc, amp) in blobs {
        let dr = (r - cr) / sr;
        let dc = (c - cc) / sc;
        acc += amp * (-0.5 * (dr * dr + dc * dc)).exp();
    }
    acc.min(1.0)
}

struct GraspDraw {
    jitter: (f64, f64),
    variant: usize,
}

fn draw_pose(
    profile: &ObjectProfile,
    rng: &mut ChaCha8Rng,
    exclude_variant: Option<usize>,
) -> GraspDraw {
    let jitter = if profile.jitter_rows > 0.0 || profile.jitter_cols > 0.0 {
        (
            rng.gen_range(-profile.jitter_rows..=profile.jitter_rows),
            rng.gen_range(-profile.jitter_cols..=profile.jitter_cols),
        )
    } else {
        (0.0, 0.0)
    };
    let n_variants = profile.shape.variants().len();
    let variant = match (&profile.dynamics, exclude_variant) {
        (Dynamics::Static, _) => 0,
        (Dynamics::FacetShift { .. }, None) => rng.gen_range(0..n_variants),
        (Dynamics::FacetShift { .. }, Some(prev)) => {
            // Re-seat onto a different facet.
            let offset = rng.gen_range(1..n_variants.max(2));
            (prev + offset) % n_variants
        }
    };
    GraspDraw { jitter, variant }
}

/// Generates one recording. The output passes the default grasp gate by
/// construction (draws are retried on the rare gate violation).
pub fn generate(
    profile: &ObjectProfile,
    grasp_id: u32,
    seed_value: u64,
    sensor: Sensor,
) -> Result<GraspRecording> {
    profile.validate()?;
    let layout = TaxelLayout::for_sensor(sensor);
    let samples = sensor.native_samples();
    let rate_hz = sensor.native_rate_hz();
    let mut rng = seed::rng(
        seed_value,
        &[seed::stream::NOISE, profile.class.id() as u64, grasp_id as u64],
    );

    let transition_frames: Vec<usize> = match &profile.dynamics {
        Dynamics::Static => Vec::new(),
        Dynamics::FacetShift { transitions } => transitions
            .iter()
            .map(|f| ((f * samples as f64) as usize).clamp(1, samples - 1))
            .collect(),
    };

    for _attempt in 0..MAX_GATE_RETRIES {
        let mut pose = draw_pose(profile, &mut rng, None);
        let noise = (profile.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, profile.noise_sigma).expect("sigma validated"));

        let mut values = Vec::with_capacity(samples * 3 * layout.taxel_count);
        for t in 0..samples {
            if transition_frames.contains(&t) {
                pose = draw_pose(profile, &mut rng, Some(pose.variant));
            }
            let ramp = profile.base
                + (profile.peak - profile.base)
                    * (t as f64 / (samples - 1) as f64).powf(profile.stiffness);
            for finger in 0..3 {
                for &cell in &layout.taxel_to_cell {
                    let fp =
                        footprint_at(profile.shape, pose.variant, finger, &layout, cell, pose.jitter);
                    let mut v = ramp * fp * FINGER_SCALE[finger];
                    if let Some(n) = &noise {
                        v += n.sample(&mut rng);
                    }
                    // Sensor quantization to 0.01 counts, floor at zero.
                    values.push((v.max(0.0) * 100.0).round() / 100.0);
                }
            }
        }
        let recording = GraspRecording::new(
            sensor,
            profile.class,
            grasp_id,
            layout.taxel_count,
            samples,
            rate_hz,
            values,
        )?;
        if grasp_gate(&recording, default_gate_threshold())? {
            return Ok(recording);
        }
    }
    Err(Error::invalid(format!(
        "profile {} cannot satisfy the grasp gate (noise too large?)",
        profile.class.name()
    )))
}

/// Generates `n_per_class` grasps per class into `dir` as a TACREC dataset.
/// Grasp ids are class_id * 100_000 + index, so they are globally unique.
pub fn generate_dataset(
    profiles: &[ObjectProfile],
    n_per_class: usize,
    sensor: Sensor,
    seed_value: u64,
    dir: &Path,
) -> Result<Vec<ManifestEntry>> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be >= 1"));
    }
    if profiles.len() != ObjectClass::ALL.len() {
        return Err(Error::invalid(format!(
            "need {} profiles, got {}",
            ObjectClass::ALL.len(),
            profiles.len()
        )));
    }
    let mut recordings = Vec::with_capacity(profiles.len() * n_per_class);
    for profile in profiles {
        for i in 0..n_per_class {
            let grasp_id = (profile.class.id() * 100_000 + i) as u32;
            recordings.push(generate(profile, grasp_id, seed_value, sensor)?);
        }
    }
    write_dataset(dir, &recordings)
}
