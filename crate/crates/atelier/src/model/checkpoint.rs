//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "ATELCKPT"
//! version  u32      currently 1
//! mode     u8       0 = full, 1 = adapters_only
//! quant    u8       1 if the transformer-block base weights are quantized
//! config   fixed    d_model, n_layers, n_heads, image_size, patch_size,
//!                   vocab_size, max_seq_len, lora_rank (u64 each),
//!                   lora_alpha (f64), quant_block, seed (u64)
//! n_blocks u64
//! block*   name_len u32, name utf8, dtype u8 (0 = f64 tensor, 1 = bytes),
//!          ndim u32, dims u64*, payload (f64 LE or raw bytes)
//! ```
//!
//! Full-mode checkpoints carry every tensor (plus quantized codes/scales);
//! adapter-mode checkpoints carry only the LoRA factors and the regression
//! head — the frozen base is rebuilt from the seeded initialization, which
//! is deterministic. Writes go to a temp file and rename into place.

use super::{BaseWeight, LoraTargets, ModelConfig, TrainMode, VlmModel};
use crate::error::{Error, Result};
use crate::qlora::{quantize_base, LoraAdapter};
use crate::tensor::Tensor;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ATELCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Payload {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub payload: Payload,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub config: ModelConfig,
    pub mode: TrainMode,
    pub base_quantized: bool,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<(&[usize], &[f64])> {
        match self.block(name).map(|b| &b.payload) {
            Some(Payload::F64 { shape, data }) => Some((shape, data)),
            _ => None,
        }
    }
}

pub fn write_container(path: &Path, container: &Container) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[match container.mode {
            TrainMode::Full => 0u8,
            TrainMode::AdaptersOnly => 1,
        }])?;
        w.write_all(&[container.base_quantized as u8])?;
        let c = &container.config;
        for v in [
            c.d_model as u64,
            c.n_layers as u64,
            c.n_heads as u64,
            c.image_size as u64,
            c.patch_size as u64,
            c.vocab_size as u64,
            c.max_seq_len as u64,
            c.lora_rank as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&c.lora_alpha.to_le_bytes())?;
        w.write_all(&(c.quant_block as u64).to_le_bytes())?;
        w.write_all(&c.seed.to_le_bytes())?;

        w.write_all(&(container.blocks.len() as u64).to_le_bytes())?;
        for block in &container.blocks {
            let name = block.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            match &block.payload {
                Payload::F64 { shape, data } => {
                    w.write_all(&[0u8])?;
                    w.write_all(&(shape.len() as u32).to_le_bytes())?;
                    for &d in shape {
                        w.write_all(&(d as u64).to_le_bytes())?;
                    }
                    for v in data {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                Payload::Bytes(bytes) => {
                    w.write_all(&[1u8])?;
                    w.write_all(&1u32.to_le_bytes())?;
                    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
                    w.write_all(bytes)?;
                }
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("checkpoint: truncated before magic"))?;
    if &magic != MAGIC {
        return Err(Error::format("checkpoint: bad magic string"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format(format!("checkpoint: unsupported version {version}")));
    }
    let mode = match read_u8(&mut r)? {
        0 => TrainMode::Full,
        1 => TrainMode::AdaptersOnly,
        m => return Err(Error::format(format!("checkpoint: unknown mode {m}"))),
    };
    let base_quantized = read_u8(&mut r)? != 0;
    let mut u = || -> Result<usize> { Ok(read_u64_from(&mut r)? as usize) };
    let d_model = u()?;
    let n_layers = u()?;
    let n_heads = u()?;
    let image_size = u()?;
    let patch_size = u()?;
    let vocab_size = u()?;
    let max_seq_len = u()?;
    let lora_rank = u()?;
    let lora_alpha = read_f64(&mut r)?;
    let quant_block = read_u64_from(&mut r)? as usize;
    let seed = read_u64_from(&mut r)?;
    let config = ModelConfig {
        d_model,
        n_layers,
        n_heads,
        image_size,
        patch_size,
        vocab_size,
        max_seq_len,
        lora_rank,
        lora_alpha,
        quant_block,
        seed,
    };

    let n_blocks = read_u64_from(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| Error::format("checkpoint: truncated block name"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format("checkpoint: non-utf8 block name"))?;
        let dtype = read_u8(&mut r)?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64_from(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = match dtype {
            0 => {
                let mut data = vec![0.0f64; numel];
                let mut buf = [0u8; 8];
                for v in &mut data {
                    r.read_exact(&mut buf)
                        .map_err(|_| Error::format("checkpoint: truncated tensor payload"))?;
                    *v = f64::from_le_bytes(buf);
                }
                Payload::F64 { shape, data }
            }
            1 => {
                let mut bytes = vec![0u8; numel];
                r.read_exact(&mut bytes)
                    .map_err(|_| Error::format("checkpoint: truncated byte payload"))?;
                Payload::Bytes(bytes)
            }
            d => return Err(Error::format(format!("checkpoint: unknown dtype {d}"))),
        };
        blocks.push(Block { name, payload });
    }
    Ok(Container {
        config,
        mode,
        base_quantized,
        blocks,
    })
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("checkpoint: truncated header"))?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("checkpoint: truncated header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64_from(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("checkpoint: truncated header"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_u64_from(r)?.to_le_bytes()))
}

// ── Model (dis)assembly ─────────────────────────────────────────────────

impl VlmModel {
    fn is_base_quantized(&self) -> bool {
        self.block_linears(LoraTargets::ALL)
            .iter()
            .any(|l| matches!(l.base, BaseWeight::Quantized(_)))
    }

    /// Parameter blocks for the current mode: everything in full mode,
    /// adapters plus regression head in adapter mode (the frozen base is
    /// reproducible from the seed and carries no blocks).
    pub fn to_blocks(&self) -> Vec<Block> {
        let mut blocks = Vec::new();
        match self.mode {
            TrainMode::Full => {
                for (name, t) in self.named_tensors() {
                    blocks.push(Block {
                        name,
                        payload: Payload::F64 {
                            shape: t.shape.clone(),
                            data: t.data.clone(),
                        },
                    });
                }
                for layer in self.block_linears(LoraTargets::ALL) {
                    if let BaseWeight::Quantized(q) = &layer.base {
                        blocks.push(Block {
                            name: format!("{}.codes", layer.name),
                            payload: Payload::Bytes(q.codes.clone()),
                        });
                        blocks.push(Block {
                            name: format!("{}.scales", layer.name),
                            payload: Payload::F64 {
                                shape: vec![q.scales.len()],
                                data: q.scales.clone(),
                            },
                        });
                    }
                }
            }
            TrainMode::AdaptersOnly => {
                for layer in self.block_linears(LoraTargets::ALL) {
                    if let Some(ad) = &layer.adapter {
                        blocks.push(Block {
                            name: format!("{}.lora_a", layer.name),
                            payload: Payload::F64 {
                                shape: ad.a.shape.clone(),
                                data: ad.a.data.clone(),
                            },
                        });
                        blocks.push(Block {
                            name: format!("{}.lora_b", layer.name),
                            payload: Payload::F64 {
                                shape: ad.b.shape.clone(),
                                data: ad.b.data.clone(),
                            },
                        });
                    }
                }
                for (name, t) in [
                    ("reg_head.w", match &self.reg_head.base {
                        BaseWeight::Dense(w) => w,
                        BaseWeight::Quantized(_) => unreachable!("regression head is dense"),
                    }),
                    ("reg_head.bias", &self.reg_head.bias),
                ] {
                    blocks.push(Block {
                        name: name.to_string(),
                        payload: Payload::F64 {
                            shape: t.shape.clone(),
                            data: t.data.clone(),
                        },
                    });
                }
            }
        }
        blocks
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_container(
            path,
            &Container {
                config: self.config.clone(),
                mode: self.mode,
                base_quantized: self.is_base_quantized(),
                blocks: self.to_blocks(),
            },
        )
    }

    /// Rebuild a model from a container: seeded init, optional base
    /// quantization, then overwrite from the stored blocks.
    pub fn from_container(container: &Container) -> Result<Self> {
        let mut model = VlmModel::new(container.config.clone())?;
        if container.base_quantized {
            quantize_base(&mut model, container.config.quant_block)?;
        }
        model.apply_blocks(&container.blocks)?;
        model.set_mode(container.mode)?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&read_container(path)?)
    }

    /// Overwrite named tensors (and quantized codes/scales, and adapters)
    /// from checkpoint blocks. Unknown names and shape mismatches error.
    pub fn apply_blocks(&mut self, blocks: &[Block]) -> Result<()> {
        for block in blocks {
            if block.name.starts_with("adam.") || block.name.starts_with("trainstate.") {
                continue;
            }
            if let Some(layer_name) = block.name.strip_suffix(".lora_a") {
                let (shape, data) = expect_f64(block)?;
                let rank = shape[0];
                self.with_layer(layer_name, |layer| {
                    let (d_out, d_in) = layer.dims();
                    if shape != [rank, d_in] {
                        return Err(Error::format(format!(
                            "checkpoint block {} has shape {shape:?}",
                            block.name
                        )));
                    }
                    let adapter = layer.adapter.get_or_insert_with(|| LoraAdapter {
                        a: Tensor::zeros(vec![rank, d_in]).with_grad(),
                        b: Tensor::zeros(vec![d_out, rank]).with_grad(),
                        rank,
                        alpha: 0.0,
                    });
                    adapter.rank = rank;
                    adapter.a.data = data.to_vec();
                    Ok(())
                })?;
                continue;
            }
            if let Some(layer_name) = block.name.strip_suffix(".lora_b") {
                let (shape, data) = expect_f64(block)?;
                let rank = shape[1];
                self.with_layer(layer_name, |layer| {
                    let (d_out, d_in) = layer.dims();
                    if shape != [d_out, rank] {
                        return Err(Error::format(format!(
                            "checkpoint block {} has shape {shape:?}",
                            block.name
                        )));
                    }
                    let adapter = layer.adapter.get_or_insert_with(|| LoraAdapter {
                        a: Tensor::zeros(vec![rank, d_in]).with_grad(),
                        b: Tensor::zeros(vec![d_out, rank]).with_grad(),
                        rank,
                        alpha: 0.0,
                    });
                    adapter.b.data = data.to_vec();
                    Ok(())
                })?;
                continue;
            }
            if let Some(layer_name) = block.name.strip_suffix(".codes") {
                let Payload::Bytes(bytes) = &block.payload else {
                    return Err(Error::format(format!("{} must be a byte block", block.name)));
                };
                self.with_layer(layer_name, |layer| match &mut layer.base {
                    BaseWeight::Quantized(q) => {
                        if q.codes.len() != bytes.len() {
                            return Err(Error::format(format!(
                                "checkpoint block {} has wrong length",
                                block.name
                            )));
                        }
                        q.codes = bytes.clone();
                        Ok(())
                    }
                    BaseWeight::Dense(_) => Err(Error::format(format!(
                        "checkpoint block {} targets a dense layer",
                        block.name
                    ))),
                })?;
                continue;
            }
            if let Some(layer_name) = block.name.strip_suffix(".scales") {
                let (shape, data) = expect_f64(block)?;
                self.with_layer(layer_name, |layer| match &mut layer.base {
                    BaseWeight::Quantized(q) => {
                        if shape != [q.scales.len()] {
                            return Err(Error::format(format!(
                                "checkpoint block {} has wrong length",
                                block.name
                            )));
                        }
                        q.scales = data.to_vec();
                        Ok(())
                    }
                    BaseWeight::Dense(_) => Err(Error::format(format!(
                        "checkpoint block {} targets a dense layer",
                        block.name
                    ))),
                })?;
                continue;
            }
            // Plain named tensor.
            let (shape, data) = expect_f64(block)?;
            let mut found = false;
            let mut fail: Option<Error> = None;
            self.for_each_tensor_mut(&mut |name, t| {
                if name == block.name {
                    found = true;
                    if t.shape != shape {
                        fail = Some(Error::format(format!(
                            "checkpoint block {} shape {shape:?} does not match model {:?}",
                            block.name, t.shape
                        )));
                    } else {
                        t.data = data.to_vec();
                    }
                }
            });
            if let Some(e) = fail {
                return Err(e);
            }
            if !found {
                return Err(Error::format(format!("checkpoint block {} is unknown", block.name)));
            }
        }
        // Adapter alpha comes from the config.
        let alpha = self.config.lora_alpha;
        for layer in self.block_linears_mut(LoraTargets::ALL) {
            if let Some(ad) = &mut layer.adapter {
                if ad.alpha == 0.0 {
                    ad.alpha = alpha;
                }
            }
        }
        Ok(())
    }

    fn with_layer(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut LinearLayer) -> Result<()>,
    ) -> Result<()> {
        for layer in self.block_linears_mut(LoraTargets::ALL) {
            if layer.name == name {
                return f(layer);
            }
        }
        Err(Error::format(format!("checkpoint names unknown layer {name}")))
    }

    /// Write only the adapters and regression head, loadable onto a model
    /// with a matching config.
    pub fn save_adapters(&self, path: &Path) -> Result<()> {
        let blocks = {
            let saved_mode = self.mode;
            let mut clone = self.clone();
            clone.mode = TrainMode::AdaptersOnly;
            let b = clone.to_blocks();
            clone.mode = saved_mode;
            b
        };
        write_container(
            path,
            &Container {
                config: self.config.clone(),
                mode: TrainMode::AdaptersOnly,
                base_quantized: self.is_base_quantized(),
                blocks,
            },
        )
    }

    /// Load adapters and regression head from an adapter checkpoint onto
    /// this model. The stored config must match exactly.
    pub fn load_adapters(&mut self, path: &Path) -> Result<()> {
        let container = read_container(path)?;
        if container.config != self.config {
            return Err(Error::ConfigMismatch(format!(
                "adapter checkpoint config {:?} does not match model config",
                container.config
            )));
        }
        self.apply_blocks(&container.blocks)
    }
}

use super::LinearLayer;

fn expect_f64(block: &Block) -> Result<(&[usize], &[f64])> {
    match &block.payload {
        Payload::F64 { shape, data } => Ok((shape, data)),
        Payload::Bytes(_) => Err(Error::format(format!(
            "checkpoint block {} must be an f64 tensor",
            block.name
        ))),
    }
}
