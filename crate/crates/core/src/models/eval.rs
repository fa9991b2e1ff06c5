//! Accuracy and per-class confusion counts.

use crate::dataset::{ObjectClass, NUM_CLASSES};
use crate::nn::Network;
use crate::preprocess::Sample;
use crate::{Error, Result};

/// 9x9 count matrix: rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u32; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = ConfusionMatrix::default();
        for (truth, pred) in pairs {
            if truth >= NUM_CLASSES || pred >= NUM_CLASSES {
                return Err(Error::invalid(format!(
                    "class index out of range: ({truth}, {pred})"
                )));
            }
            m.counts[truth][pred] += 1;
        }
        Ok(m)
    }

    pub fn counts(&self) -> &[[u32; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> u32 {
        self.counts[class].iter().sum()
    }

    /// trace / total.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u32 = (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum();
        trace as f64 / total as f64
    }

    /// TSV with class-name headers; empty rows render as zeros.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in ObjectClass::ALL {
            out.push('\t');
            out.push_str(c.name());
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(ObjectClass::ALL[i].name());
            for v in row {
                out.push_str(&format!("\t{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the network over `samples` in inference mode.
/// Returns (accuracy, confusion); the accuracy equals trace/total of the
/// returned matrix by construction.
pub fn evaluate(net: &mut Network, samples: &[Sample]) -> Result<(f64, ConfusionMatrix)> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty sample set"));
    }
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = net.predict(&s.tensor)?;
        pairs.push((s.label, pred));
    }
    let matrix = ConfusionMatrix::from_pairs(pairs)?;
    Ok((matrix.accuracy(), matrix))
}
