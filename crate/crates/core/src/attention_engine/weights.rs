//! Model weights and their binary file format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! header:  b"SGAT" | version u32 | layer count u32
//!          per layer: head count u32 | in dim u32 | out dim u32 | leaky slope f32
//! body:    per layer, per head: W (out × in, row-major f32) then a (2·out f32)
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gat::DEFAULT_LEAKY_SLOPE;
use super::AttentionError;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SGAT";
pub const WEIGHTS_VERSION: u32 = 1;

/// One attention head: projection `W` (out × in) and attention vector `a`
/// (length 2·out, source half first).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w: DMatrix<f64>,
    pub a: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub heads: Vec<HeadWeights>,
    pub leaky_slope: f64,
}

impl LayerWeights {
    pub fn in_dim(&self) -> usize {
        self.heads[0].w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.heads[0].w.nrows()
    }

    /// Width of the concatenated output when used as a hidden layer.
    pub fn concat_dim(&self) -> usize {
        self.heads.len() * self.out_dim()
    }
}

/// Shape-validated multi-layer attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    layers: Vec<LayerWeights>,
}

/// Architecture used when synthesizing weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchitectureSpec {
    pub layers: usize,
    pub heads: usize,
    pub hidden_width: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            hidden_width: 32,
        }
    }
}

impl ModelWeights {
    pub fn new(layers: Vec<LayerWeights>) -> Result<Self, AttentionError> {
        if layers.is_empty() {
            return Err(AttentionError::Format("model has no layers".into()));
        }
        let mut expected_in: Option<usize> = None;
        for (index, layer) in layers.iter().enumerate() {
            let shape = |reason: String| AttentionError::Shape { layer: index, reason };
            let Some(first) = layer.heads.first() else {
                return Err(shape("no heads".into()));
            };
            let (out_dim, in_dim) = first.w.shape();
            if out_dim == 0 || in_dim == 0 {
                return Err(shape(format!("empty projection {out_dim}×{in_dim}")));
            }
            for (h, head) in layer.heads.iter().enumerate() {
                if head.w.shape() != (out_dim, in_dim) {
                    return Err(shape(format!(
                        "head {h} W is {:?}, expected {:?}",
                        head.w.shape(),
                        (out_dim, in_dim)
                    )));
                }
                if head.a.len() != 2 * out_dim {
                    return Err(shape(format!(
                        "head {h} attention vector has length {}, expected {}",
                        head.a.len(),
                        2 * out_dim
                    )));
                }
                if !head.w.iter().chain(head.a.iter()).all(|v| v.is_finite()) {
                    return Err(AttentionError::NonFinite { layer: index });
                }
            }
            if !layer.leaky_slope.is_finite() {
                return Err(AttentionError::NonFinite { layer: index });
            }
            if let Some(expected) = expected_in {
                if in_dim != expected {
                    return Err(shape(format!(
                        "input dimension {in_dim} does not match previous layer output {expected}"
                    )));
                }
            }
            expected_in = Some(layer.concat_dim());
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform random weights with the fixed LeakyReLU slope.
    pub fn synthesize(input_dim: usize, arch: ArchitectureSpec, seed: u64) -> Result<Self, AttentionError> {
        if arch.layers == 0 || arch.heads == 0 || arch.hidden_width == 0 || input_dim == 0 {
            return Err(AttentionError::Format(format!("degenerate architecture {arch:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.layers);
        let mut in_dim = input_dim;
        for _ in 0..arch.layers {
            let out_dim = arch.hidden_width;
            let heads = (0..arch.heads)
                .map(|_| {
                    let w_bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
                    let a_bound = (6.0 / (2 * out_dim + 1) as f64).sqrt();
                    // values are drawn in f32 so the file format round-trips bitwise
                    let w = DMatrix::from_fn(out_dim, in_dim, |_, _| {
                        rng.random_range(-w_bound as f32..w_bound as f32) as f64
                    });
                    let a = DVector::from_fn(2 * out_dim, |_, _| {
                        rng.random_range(-a_bound as f32..a_bound as f32) as f64
                    });
                    HeadWeights { w, a }
                })
                .collect();
            layers.push(LayerWeights {
                heads,
                leaky_slope: DEFAULT_LEAKY_SLOPE as f32 as f64,
            });
            in_dim = arch.heads * out_dim;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn last_head_count(&self) -> usize {
        self.layers.last().expect("at least one layer").heads.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            for v in [layer.heads.len(), layer.in_dim(), layer.out_dim()] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
            out.extend_from_slice(&(layer.leaky_slope as f32).to_le_bytes());
        }
        for layer in &self.layers {
            for head in &layer.heads {
                for r in 0..head.w.nrows() {
                    for c in 0..head.w.ncols() {
                        out.extend_from_slice(&(head.w[(r, c)] as f32).to_le_bytes());
                    }
                }
                for v in head.a.iter() {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttentionError> {
        let mut reader = Reader { bytes, pos: 0 };
        if reader.take(4)? != WEIGHTS_MAGIC {
            return Err(AttentionError::Format("bad magic".into()));
        }
        let version = reader.u32()?;
        if version != WEIGHTS_VERSION {
            return Err(AttentionError::Format(format!("unsupported version {version}")));
        }
        let layer_count = reader.u32()? as usize;
        if layer_count == 0 {
            return Err(AttentionError::Format("model has no layers".into()));
        }
        let mut headers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let heads = reader.u32()? as usize;
            let in_dim = reader.u32()? as usize;
            let out_dim = reader.u32()? as usize;
            let slope = reader.f32()? as f64;
            headers.push((heads, in_dim, out_dim, slope));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for (index, &(heads, in_dim, out_dim, slope)) in headers.iter().enumerate() {
            if heads == 0 || in_dim == 0 || out_dim == 0 {
                return Err(AttentionError::Shape {
                    layer: index,
                    reason: format!("degenerate header H={heads} in={in_dim} out={out_dim}"),
                });
            }
            let mut head_weights = Vec::with_capacity(heads);
            for _ in 0..heads {
                let w = DMatrix::from_row_iterator(out_dim, in_dim, reader.f32s(out_dim * in_dim)?);
                let a = DVector::from_iterator(2 * out_dim, reader.f32s(2 * out_dim)?);
                head_weights.push(HeadWeights { w, a });
            }
            layers.push(LayerWeights {
                heads: head_weights,
                leaky_slope: slope,
            });
        }
        if reader.pos != bytes.len() {
            return Err(AttentionError::Format(format!(
                "{} trailing bytes",
                bytes.len() - reader.pos
            )));
        }
        Self::new(layers)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AttentionError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AttentionError::Format(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, AttentionError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, AttentionError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<impl Iterator<Item = f64> + 'a, AttentionError> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| AttentionError::Format("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
    }
}

pub fn load_model_weights(path: &Path) -> Result<ModelWeights, AttentionError> {
    let bytes = fs::read(path).map_err(|source| AttentionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ModelWeights::from_bytes(&bytes)
}

pub fn save_model_weights(path: &Path, weights: &ModelWeights) -> Result<(), AttentionError> {
    fs::write(path, weights.to_bytes()).map_err(|source| AttentionError::Io {
        path: path.to_path_buf(),
        source,
    })
}
