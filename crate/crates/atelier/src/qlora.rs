//! Frozen-base adaptation: blockwise 4-bit quantization of linear weights
//! plus trainable low-rank adapters.
//!
//! The quantizer maps each block of weights onto 15 symmetric uniform
//! levels {-7..7}/7 scaled by the block's absolute maximum (a uniform
//! codebook rather than NF4; the uniform grid makes the error bound exact:
//! per-weight roundtrip error is at most absmax/14). Codes pack two to a
//! byte; nibble value 15 is outside the codebook and rejected as corrupt.
//!
//! Adapters follow the standard low-rank scheme: a targeted layer computes
//! `y = dequant(W) x + bias + (alpha/rank) * B (A x)` with `A` seeded
//! uniform in ±1/sqrt(d_in) and `B` zero, so injection leaves the model's
//! outputs exactly unchanged until training moves `B`. Bias vectors stay
//! frozen with the base in adapter training.

use crate::error::{Error, Result};
use crate::model::{BaseWeight, VlmModel};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A frozen linear weight in blockwise 4-bit form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLinear {
    /// Two 4-bit codes per byte, low nibble first; code = level + 7.
    pub codes: Vec<u8>,
    /// One absmax scale per block of `block` weights.
    pub scales: Vec<f64>,
    /// (d_out, d_in)
    pub shape: (usize, usize),
    pub block: usize,
}

fn round_ties_toward_zero(x: f64) -> f64 {
    let t = x.abs();
    let floor = t.floor();
    let rounded = if t - floor > 0.5 { floor + 1.0 } else { floor };
    rounded.copysign(x)
}

/// Quantize a [d_out, d_in] weight matrix with the given block length.
pub fn quantize(weights: &Tensor, block: usize) -> Result<QuantizedLinear> {
    if block < 1 {
        return Err(Error::contract("quantization block must be at least 1"));
    }
    if weights.shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "quantize",
            left: weights.shape.clone(),
            right: vec![0, 0],
        });
    }
    let numel = weights.numel();
    let n_blocks = numel.div_ceil(block);
    let mut scales = Vec::with_capacity(n_blocks);
    let mut nibbles = Vec::with_capacity(numel);
    for chunk in weights.data.chunks(block) {
        let scale = chunk.iter().fold(0.0f64, |m, &w| m.max(w.abs()));
        scales.push(scale);
        for &w in chunk {
            let level = if scale == 0.0 {
                0.0
            } else {
                round_ties_toward_zero(w / scale * 7.0)
            };
            nibbles.push((level + 7.0) as u8);
        }
    }
    let mut codes = vec![0u8; numel.div_ceil(2)];
    for (i, &nib) in nibbles.iter().enumerate() {
        codes[i / 2] |= nib << ((i % 2) * 4);
    }
    Ok(QuantizedLinear {
        codes,
        scales,
        shape: (weights.shape[0], weights.shape[1]),
        block,
    })
}

impl QuantizedLinear {
    pub fn numel(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    /// Reconstruct the dense weight. Runs on every forward pass; the
    /// reconstruction receives no gradient.
    pub fn dequantize(&self) -> Result<Tensor> {
        let numel = self.numel();
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            let nib = (self.codes[i / 2] >> ((i % 2) * 4)) & 0x0F;
            if nib > 14 {
                return Err(Error::format(format!(
                    "quantized code {nib} at index {i} is outside the 15-level codebook"
                )));
            }
            let scale = self.scales[i / self.block];
            // (level/7) * scale: level 7 divides to exactly 1.0, so absmax
            // entries reconstruct bit-exactly.
            data.push((nib as f64 - 7.0) / 7.0 * scale);
        }
        Tensor::new(vec![self.shape.0, self.shape.1], data)
    }

    /// Stable byte view of codes and scales for frozen-base fingerprints.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let mut bytes = self.codes.clone();
        for s in &self.scales {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        bytes
    }
}

/// Trainable low-rank factor pair attached to a frozen linear layer.
#[derive(Debug, Clone)]
pub struct LoraAdapter {
    /// [rank, d_in], seeded uniform in ±1/sqrt(d_in).
    pub a: Tensor,
    /// [d_out, rank], zero at initialization so the adapter starts silent.
    pub b: Tensor,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn seeded(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut Rng) -> Self {
        let spread = 1.0 / (d_in as f64).sqrt();
        LoraAdapter {
            a: Tensor::rand_uniform(vec![rank, d_in], spread, rng).with_grad(),
            b: Tensor::zeros(vec![d_out, rank]).with_grad(),
            rank,
            alpha,
        }
    }

    /// Effective update scale applied to B·A.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// Which linear layers receive adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoraTargets {
    pub attention: bool,
    pub mlp: bool,
}

impl LoraTargets {
    pub const ALL: LoraTargets = LoraTargets { attention: true, mlp: true };
}

/// Quantize every transformer-block linear in place. The embeddings, heads
/// and norms stay dense; attention and MLP projections are the frozen base.
pub fn quantize_base(model: &mut VlmModel, block: usize) -> Result<()> {
    for layer in model.block_linears_mut(LoraTargets::ALL) {
        match &layer.base {
            BaseWeight::Dense(w) => {
                layer.base = BaseWeight::Quantized(quantize(w, block)?);
            }
            BaseWeight::Quantized(_) => {
                return Err(Error::contract(format!("layer {} is already quantized", layer.name)));
            }
        }
    }
    Ok(())
}

/// Inject seeded adapters into the targeted layers. Fails on empty targets,
/// rank zero, or a layer that already carries an adapter.
pub fn inject_lora(model: &mut VlmModel, targets: LoraTargets, rank: usize, alpha: f64) -> Result<()> {
    if !targets.attention && !targets.mlp {
        return Err(Error::contract("no adapter targets selected"));
    }
    if rank < 1 {
        return Err(Error::contract("adapter rank must be at least 1"));
    }
    let seed = model.config.seed;
    for (i, layer) in model.block_linears_mut(targets).into_iter().enumerate() {
        if layer.adapter.is_some() {
            return Err(Error::contract(format!(
                "layer {} already has an adapter injected",
                layer.name
            )));
        }
        let (d_out, d_in) = layer.dims();
        let mut rng = Rng::new(seed).stream(0x10_5A + i as u64);
        layer.adapter = Some(LoraAdapter::seeded(d_in, d_out, rank, alpha, &mut rng));
    }
    Ok(())
}

/// Fold every adapter into a dense weight: W = dequant(W_q) + (alpha/r)·B·A,
/// removing the adapters. Merging a model without adapters is an error.
pub fn merge_lora(model: &mut VlmModel) -> Result<()> {
    let mut merged_any = false;
    for layer in model.block_linears_mut(LoraTargets::ALL) {
        let Some(adapter) = layer.adapter.take() else {
            continue;
        };
        merged_any = true;
        let mut dense = match &layer.base {
            BaseWeight::Dense(w) => w.clone(),
            BaseWeight::Quantized(q) => q.dequantize()?,
        };
        // W += scaling * B·A
        let (d_out, d_in) = (dense.shape[0], dense.shape[1]);
        let r = adapter.rank;
        let mut update = vec![0.0; d_out * d_in];
        crate::tensor::matmul_nn_acc(&adapter.b.data, &adapter.a.data, d_out, r, d_in, &mut update);
        let scaling = adapter.scaling();
        for (w, u) in dense.data.iter_mut().zip(&update) {
            *w += scaling * u;
        }
        dense.requires_grad = false;
        layer.base = BaseWeight::Dense(dense);
    }
    if !merged_any {
        return Err(Error::contract("model has no adapters to merge"));
    }
    Ok(())
}

/// Number of layers currently carrying adapters.
pub fn adapted_layer_count(model: &VlmModel) -> usize {
    model.block_linears(LoraTargets::ALL)
        .into_iter()
        .filter(|l| l.adapter.is_some())
        .count()
}

/// FNV-1a fingerprint of all quantized codes and scales; bit-identical
/// pre/post training in adapter mode.
pub fn base_fingerprint(model: &VlmModel) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    };
    for layer in model.block_linears(LoraTargets::ALL) {
        if let BaseWeight::Quantized(q) = &layer.base {
            eat(&q.raw_bytes());
        }
    }
    hash
}
