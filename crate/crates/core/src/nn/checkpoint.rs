//! Versioned text checkpoint format.
//!
//! ```text
//! TAXELGRASP-CKPT v1
//! layer <index> <kind>
//! shape <d0> <d1> ...
//! <row-major values, one line per tensor>
//! ```
//!
//! Values carry 17 significant digits, which round-trips 64-bit floats
//! bit-exactly; write -> read -> write is byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::layer::LayerKind;
use super::network::Network;
use super::tensor::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "TAXELGRASP-CKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointLayer {
    pub kind: LayerKind,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub layers: Vec<CheckpointLayer>,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        Checkpoint {
            layers: net
                .checkpoint_entries()
                .into_iter()
                .map(|(kind, tensors)| CheckpointLayer {
                    kind,
                    tensors: tensors.iter().map(|t| t.detached()).collect(),
                })
                .collect(),
        }
    }

    /// Copies weights into `net`; layer kinds and tensor shapes must match.
    pub fn apply_to(&self, net: &mut Network) -> Result<()> {
        let kinds = net.layer_kinds();
        if self.layers.len() != kinds.len() + 1 {
            return Err(Error::invalid(format!(
                "checkpoint has {} layer blocks, network expects {}",
                self.layers.len(),
                kinds.len() + 1
            )));
        }
        for (i, (block, layer)) in self
            .layers
            .iter()
            .zip(net.layers_mut().iter_mut())
            .enumerate()
        {
            if block.kind != layer.kind() {
                return Err(Error::invalid(format!(
                    "checkpoint layer {i} is {}, network layer is {}",
                    block.kind.as_str(),
                    layer.kind().as_str()
                )));
            }
            let mut params = layer.params_mut();
            if params.len() != block.tensors.len() {
                return Err(Error::invalid(format!(
                    "checkpoint layer {i} carries {} tensors, layer has {}",
                    block.tensors.len(),
                    params.len()
                )));
            }
            for (p, t) in params.iter_mut().zip(&block.tensors) {
                if p.shape() != t.shape() {
                    return Err(Error::ShapeMismatch {
                        context: format!("checkpoint layer {i} tensor"),
                        expected: p.shape().to_vec(),
                        got: t.shape().to_vec(),
                    });
                }
                p.data_mut().copy_from_slice(t.data());
            }
        }
        let last = self.layers.last().expect("non-empty checked above");
        if last.kind != LayerKind::SoftmaxXent {
            return Err(Error::invalid(format!(
                "checkpoint must end with a softmax_xent block, found {}",
                last.kind.as_str()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        for (i, layer) in self.layers.iter().enumerate() {
            out.push_str(&format!("layer {i} {}\n", layer.kind.as_str()));
            for t in &layer.tensors {
                out.push_str("shape");
                for d in t.shape() {
                    out.push_str(&format!(" {d}"));
                }
                out.push('\n');
                let mut first = true;
                for v in t.data() {
                    if !first {
                        out.push(' ');
                    }
                    out.push_str(&fmt_value(*v));
                    first = false;
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::format(origin, line, msg);
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == CHECKPOINT_MAGIC => {}
            Some((n, l)) => return Err(err(n + 1, format!("bad magic line `{l}`"))),
            None => return Err(err(1, "empty checkpoint".into())),
        }

        let mut layers: Vec<CheckpointLayer> = Vec::new();
        while let Some((n, line)) = lines.next() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("layer ") {
                let mut parts = rest.split_whitespace();
                let idx: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(n + 1, "bad layer index".into()))?;
                if idx != layers.len() {
                    return Err(err(
                        n + 1,
                        format!("layer index {idx} out of order, expected {}", layers.len()),
                    ));
                }
                let kind_str = parts
                    .next()
                    .ok_or_else(|| err(n + 1, "missing layer kind".into()))?;
                let kind = LayerKind::from_str(kind_str)
                    .ok_or_else(|| err(n + 1, format!("unknown layer kind `{kind_str}`")))?;
                layers.push(CheckpointLayer {
                    kind,
                    tensors: Vec::new(),
                });
            } else if let Some(rest) = line.strip_prefix("shape") {
                let layer = layers
                    .last_mut()
                    .ok_or_else(|| err(n + 1, "shape line before any layer".into()))?;
                let shape: Vec<usize> = rest
                    .split_whitespace()
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(n + 1, format!("bad shape line `{line}`")))?;
                let volume: usize = shape.iter().product();
                let (vn, vline) = lines
                    .next()
                    .ok_or_else(|| err(n + 2, "missing value line after shape".into()))?;
                let values: Vec<f64> = vline
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(vn + 1, "unparseable value".into()))?;
                if values.len() != volume {
                    return Err(err(
                        vn + 1,
                        format!("expected {volume} values for shape {shape:?}, got {}", values.len()),
                    ));
                }
                layer.tensors.push(Tensor::from_vec(&shape, values).map_err(|e| {
                    err(vn + 1, e.to_string())
                })?);
            } else {
                return Err(err(n + 1, format!("unexpected line `{line}`")));
            }
        }
        Ok(Checkpoint { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Checkpoint::from_text(&text, &path.display().to_string())
    }

    /// Flattened copies of the tensors, for `Network::restore`.
    pub fn weight_tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| l.tensors.iter().cloned())
            .collect()
    }
}
