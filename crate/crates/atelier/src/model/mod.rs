//! The toy vision-language transformer.
//!
//! Image patches enter a causal decoder as a visual prefix ahead of the
//! prompt tokens; a reserved [SCORING] token's final hidden state (after
//! the final norm) feeds a 1-unit regression head, and the language head
//! over the same pass supplies critique logits — score and critique come
//! from a single forward run.
//!
//! The score activation is `100 * sigmoid(raw)`, so predictions always lie
//! strictly inside (0, 100); training targets are the totals divided by
//! 100. The regression head initializes to exactly zero, which pins the
//! untrained score to 50.

mod checkpoint;
#[cfg(test)]
mod tests;

pub use checkpoint::{read_container, write_container, Block as CheckpointBlock, Container, Payload};

use crate::corpus::text::SCORING;
use crate::error::{Error, Result};
use crate::qlora::{LoraAdapter, LoraTargets, QuantizedLinear};
use crate::rng::Rng;
use crate::tensor::{sigmoid, Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub quant_block: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults: minutes of CPU training.
    pub fn toy(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            image_size: 32,
            patch_size: 8,
            vocab_size,
            max_seq_len: 256,
            lora_rank: 8,
            lora_alpha: 16.0,
            quant_block: 64,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::contract(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::contract(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 || self.n_layers == 0 {
            return Err(Error::contract("vocab_size, max_seq_len and n_layers must be positive"));
        }
        Ok(())
    }

    /// Number of visual prefix tokens: (image_size / patch_size)^2.
    pub fn visual_tokens(&self) -> usize {
        let per_side = self.image_size / self.patch_size;
        per_side * per_side
    }

    /// Flattened patch length: 3 channels * patch_size^2.
    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Full,
    AdaptersOnly,
}

/// A linear layer's frozen storage: dense f64 or blockwise 4-bit.
#[derive(Debug, Clone)]
pub enum BaseWeight {
    Dense(Tensor),
    Quantized(QuantizedLinear),
}

/// Linear layer with optional low-rank adapter. Weights are stored
/// [d_out, d_in]; the forward computes x·Wᵀ + bias (+ adapter path).
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub name: String,
    pub base: BaseWeight,
    pub bias: Tensor,
    pub adapter: Option<LoraAdapter>,
}

impl LinearLayer {
    fn new(name: &str, d_out: usize, d_in: usize, std: f64, rng: &mut Rng) -> Self {
        LinearLayer {
            name: name.to_string(),
            base: BaseWeight::Dense(Tensor::randn(vec![d_out, d_in], std, rng)),
            bias: Tensor::zeros(vec![d_out]),
            adapter: None,
        }
    }

    fn zeros(name: &str, d_out: usize, d_in: usize) -> Self {
        LinearLayer {
            name: name.to_string(),
            base: BaseWeight::Dense(Tensor::zeros(vec![d_out, d_in])),
            bias: Tensor::zeros(vec![d_out]),
            adapter: None,
        }
    }

    /// (d_out, d_in)
    pub fn dims(&self) -> (usize, usize) {
        match &self.base {
            BaseWeight::Dense(w) => (w.shape[0], w.shape[1]),
            BaseWeight::Quantized(q) => q.shape,
        }
    }

    fn forward(&self, g: &mut Graph, x: Var, binds: &mut Vec<(String, Var)>) -> Result<Var> {
        let w_var = match &self.base {
            BaseWeight::Dense(w) => {
                let v = g.leaf(w);
                if w.requires_grad {
                    binds.push((format!("{}.w", self.name), v));
                }
                v
            }
            BaseWeight::Quantized(q) => g.leaf(&q.dequantize()?),
        };
        let mut y = g.matmul_nt(x, w_var)?;
        let b_var = g.leaf(&self.bias);
        if self.bias.requires_grad {
            binds.push((format!("{}.bias", self.name), b_var));
        }
        y = g.add_bias(y, b_var)?;
        if let Some(adapter) = &self.adapter {
            let a_var = g.leaf(&adapter.a);
            if adapter.a.requires_grad {
                binds.push((format!("{}.lora_a", self.name), a_var));
            }
            let b2_var = g.leaf(&adapter.b);
            if adapter.b.requires_grad {
                binds.push((format!("{}.lora_b", self.name), b2_var));
            }
            let xa = g.matmul_nt(x, a_var)?;
            let xab = g.matmul_nt(xa, b2_var)?;
            let update = g.scale(xab, adapter.scaling());
            y = g.add(y, update)?;
        }
        Ok(y)
    }

    /// Dense weight without autodiff, for inference-only paths.
    fn dense_weight(&self) -> Result<Tensor> {
        match &self.base {
            BaseWeight::Dense(w) => Ok(w.clone()),
            BaseWeight::Quantized(q) => q.dequantize(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub name: String,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl Norm {
    fn new(name: &str, d: usize) -> Self {
        Norm {
            name: name.to_string(),
            gamma: Tensor::new(vec![d], vec![1.0; d]).expect("norm shape"),
            beta: Tensor::zeros(vec![d]),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var, binds: &mut Vec<(String, Var)>) -> Result<Var> {
        let gv = g.leaf(&self.gamma);
        if self.gamma.requires_grad {
            binds.push((format!("{}.gamma", self.name), gv));
        }
        let bv = g.leaf(&self.beta);
        if self.beta.requires_grad {
            binds.push((format!("{}.beta", self.name), bv));
        }
        g.layer_norm(x, gv, bv, LAYER_NORM_EPS)
    }
}

/// Pre-norm transformer block: fused qkv projection, output projection,
/// and a 4x GELU MLP. Four adapter-targetable linears per block.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub ln1: Norm,
    pub qkv: LinearLayer,
    pub attn_out: LinearLayer,
    pub ln2: Norm,
    pub mlp_in: LinearLayer,
    pub mlp_out: LinearLayer,
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// (visual_len + token_len) x vocab_size.
    pub logits: Tensor,
    pub score_raw: f64,
    /// 100 * sigmoid(score_raw), always in (0, 100).
    pub score: f64,
}

/// Graph-embedded forward pass for training.
pub struct ForwardPass {
    pub logits: Var,
    pub score_raw: Var,
    pub score: f64,
    pub visual_len: usize,
    /// Leaf bindings of every trainable parameter touched by this pass.
    pub binds: Vec<(String, Var)>,
}

pub enum VisualInput<'a> {
    /// [n_patches, patch_dim]; projected by the model (gradients reach the
    /// patch projection when it is trainable).
    Patches(&'a Tensor),
    /// [n_visual, d_model]; used verbatim.
    Embeddings(&'a Tensor),
}

#[derive(Debug, Clone, Copy)]
pub enum DecodeMode {
    Greedy,
    Temperature { t: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct VlmModel {
    pub config: ModelConfig,
    pub mode: TrainMode,
    pub patch_proj: LinearLayer,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: Norm,
    pub lm_head: LinearLayer,
    pub reg_head: LinearLayer,
}

impl VlmModel {
    /// Seeded initialization. The regression head starts at exactly zero so
    /// an untrained model scores 50 for every input.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut rng = Rng::new(config.seed).stream(0xB0DE);
        let patch_std = 1.0 / (config.patch_dim() as f64).sqrt();
        let d_std = 1.0 / (d as f64).sqrt();
        let patch_proj = LinearLayer::new("patch_proj", d, config.patch_dim(), patch_std, &mut rng);
        let tok_emb = Tensor::randn(vec![config.vocab_size, d], 0.1, &mut rng);
        let pos_emb = Tensor::randn(vec![config.max_seq_len, d], 0.1, &mut rng);
        let blocks = (0..config.n_layers)
            .map(|i| {
                let p = |part: &str| format!("block{i}.{part}");
                TransformerBlock {
                    ln1: Norm::new(&p("ln1"), d),
                    qkv: LinearLayer::new(&p("qkv"), 3 * d, d, d_std, &mut rng),
                    attn_out: LinearLayer::new(&p("attn_out"), d, d, d_std, &mut rng),
                    ln2: Norm::new(&p("ln2"), d),
                    mlp_in: LinearLayer::new(&p("mlp_in"), 4 * d, d, d_std, &mut rng),
                    mlp_out: LinearLayer::new(
                        &p("mlp_out"),
                        d,
                        4 * d,
                        1.0 / (4.0 * d as f64).sqrt(),
                        &mut rng,
                    ),
                }
            })
            .collect();
        let final_norm = Norm::new("final_norm", d);
        let lm_head = LinearLayer::new("lm_head", config.vocab_size, d, d_std, &mut rng);
        let reg_head = LinearLayer::zeros("reg_head", 1, d);
        let mut model = VlmModel {
            config,
            mode: TrainMode::Full,
            patch_proj,
            tok_emb,
            pos_emb,
            blocks,
            final_norm,
            lm_head,
            reg_head,
        };
        model.set_mode(TrainMode::Full)?;
        Ok(model)
    }

    // ── Parameter enumeration ───────────────────────────────────────────

    fn linear_tensors<'a>(
        layer: &'a LinearLayer,
        out: &mut Vec<(String, &'a Tensor)>,
    ) {
        if let BaseWeight::Dense(w) = &layer.base {
            out.push((format!("{}.w", layer.name), w));
        }
        out.push((format!("{}.bias", layer.name), &layer.bias));
        if let Some(ad) = &layer.adapter {
            out.push((format!("{}.lora_a", layer.name), &ad.a));
            out.push((format!("{}.lora_b", layer.name), &ad.b));
        }
    }

    /// Every named dense tensor in a fixed order (quantized codes excluded).
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        Self::linear_tensors(&self.patch_proj, &mut out);
        out.push(("tok_emb".to_string(), &self.tok_emb));
        out.push(("pos_emb".to_string(), &self.pos_emb));
        for b in &self.blocks {
            out.push((format!("{}.gamma", b.ln1.name), &b.ln1.gamma));
            out.push((format!("{}.beta", b.ln1.name), &b.ln1.beta));
            Self::linear_tensors(&b.qkv, &mut out);
            Self::linear_tensors(&b.attn_out, &mut out);
            out.push((format!("{}.gamma", b.ln2.name), &b.ln2.gamma));
            out.push((format!("{}.beta", b.ln2.name), &b.ln2.beta));
            Self::linear_tensors(&b.mlp_in, &mut out);
            Self::linear_tensors(&b.mlp_out, &mut out);
        }
        out.push(("final_norm.gamma".to_string(), &self.final_norm.gamma));
        out.push(("final_norm.beta".to_string(), &self.final_norm.beta));
        Self::linear_tensors(&self.lm_head, &mut out);
        Self::linear_tensors(&self.reg_head, &mut out);
        out
    }

    pub fn for_each_tensor_mut(&mut self, f: &mut impl FnMut(&str, &mut Tensor)) {
        let visit_linear = |layer: &mut LinearLayer, f: &mut dyn FnMut(&str, &mut Tensor)| {
            if let BaseWeight::Dense(w) = &mut layer.base {
                f(&format!("{}.w", layer.name), w);
            }
            f(&format!("{}.bias", layer.name), &mut layer.bias);
            if let Some(ad) = &mut layer.adapter {
                f(&format!("{}.lora_a", layer.name), &mut ad.a);
                f(&format!("{}.lora_b", layer.name), &mut ad.b);
            }
        };
        visit_linear(&mut self.patch_proj, f);
        f("tok_emb", &mut self.tok_emb);
        f("pos_emb", &mut self.pos_emb);
        for b in &mut self.blocks {
            f(&format!("{}.gamma", b.ln1.name), &mut b.ln1.gamma);
            f(&format!("{}.beta", b.ln1.name), &mut b.ln1.beta);
            visit_linear(&mut b.qkv, f);
            visit_linear(&mut b.attn_out, f);
            f(&format!("{}.gamma", b.ln2.name), &mut b.ln2.gamma);
            f(&format!("{}.beta", b.ln2.name), &mut b.ln2.beta);
            visit_linear(&mut b.mlp_in, f);
            visit_linear(&mut b.mlp_out, f);
        }
        f("final_norm.gamma", &mut self.final_norm.gamma);
        f("final_norm.beta", &mut self.final_norm.beta);
        visit_linear(&mut self.lm_head, f);
        visit_linear(&mut self.reg_head, f);
    }

    /// The adapter-targetable linears of every block, in order.
    pub fn block_linears(&self, targets: LoraTargets) -> Vec<&LinearLayer> {
        let mut out = Vec::new();
        for b in &self.blocks {
            if targets.attention {
                out.push(&b.qkv);
                out.push(&b.attn_out);
            }
            if targets.mlp {
                out.push(&b.mlp_in);
                out.push(&b.mlp_out);
            }
        }
        out
    }

    pub fn block_linears_mut(&mut self, targets: LoraTargets) -> Vec<&mut LinearLayer> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            if targets.attention {
                out.push(&mut b.qkv);
                out.push(&mut b.attn_out);
            }
            if targets.mlp {
                out.push(&mut b.mlp_in);
                out.push(&mut b.mlp_out);
            }
        }
        out
    }

    /// Parameter names trainable under a mode. Full mode covers every dense
    /// tensor; adapter mode covers exactly the LoRA factors plus the
    /// regression head (which is newly attached and has nothing to freeze).
    pub fn trainable_parameters(&self, mode: TrainMode) -> Result<Vec<String>> {
        match mode {
            TrainMode::Full => Ok(self.named_tensors().into_iter().map(|(n, _)| n).collect()),
            TrainMode::AdaptersOnly => {
                let adapted: Vec<&LinearLayer> = self
                    .block_linears(LoraTargets::ALL)
                    .into_iter()
                    .filter(|l| l.adapter.is_some())
                    .collect();
                if adapted.is_empty() {
                    return Err(Error::contract(
                        "adapters_only mode requires injected adapters",
                    ));
                }
                let mut names = Vec::new();
                for layer in adapted {
                    names.push(format!("{}.lora_a", layer.name));
                    names.push(format!("{}.lora_b", layer.name));
                }
                names.push("reg_head.w".to_string());
                names.push("reg_head.bias".to_string());
                Ok(names)
            }
        }
    }

    /// Total element count of the trainable set.
    pub fn trainable_parameter_count(&self, mode: TrainMode) -> Result<usize> {
        let names = self.trainable_parameters(mode)?;
        let tensors = self.named_tensors();
        Ok(names
            .iter()
            .map(|n| {
                tensors
                    .iter()
                    .find(|(name, _)| name == n)
                    .map(|(_, t)| t.numel())
                    .unwrap_or(0)
            })
            .sum())
    }

    /// Apply a mode: set requires_grad on exactly the trainable set.
    pub fn set_mode(&mut self, mode: TrainMode) -> Result<()> {
        let names = self.trainable_parameters(mode)?;
        let set: std::collections::HashSet<String> = names.into_iter().collect();
        self.for_each_tensor_mut(&mut |name, t| {
            t.requires_grad = set.contains(name);
        });
        self.mode = mode;
        Ok(())
    }

    // ── Forward paths ───────────────────────────────────────────────────

    /// Project a [0,1] image into visual embeddings (no gradients).
    pub fn encode_image(&self, image: &Tensor) -> Result<Tensor> {
        let patches = patchify(image, self.config.image_size, self.config.patch_size)?;
        let w = self.patch_proj.dense_weight()?;
        let n = patches.shape[0];
        let (d_out, d_in) = (w.shape[0], w.shape[1]);
        let mut out = vec![0.0; n * d_out];
        for i in 0..n {
            let row = &patches.data[i * d_in..(i + 1) * d_in];
            for j in 0..d_out {
                let wrow = &w.data[j * d_in..(j + 1) * d_in];
                let mut acc = self.patch_proj.bias.data[j];
                for (a, b) in row.iter().zip(wrow) {
                    acc += a * b;
                }
                out[i * d_out + j] = acc;
            }
        }
        Tensor::new(vec![n, d_out], out)
    }

    /// Build the full pass inside a caller-owned graph.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        visual: VisualInput,
        tokens: &[usize],
        scoring_pos: usize,
    ) -> Result<ForwardPass> {
        if tokens.get(scoring_pos).copied() != Some(SCORING) {
            return Err(Error::contract(format!(
                "scoring_pos {scoring_pos} does not hold the [SCORING] token"
            )));
        }
        let mut binds = Vec::new();
        let visual_var = match visual {
            VisualInput::Patches(p) => {
                let pv = g.leaf(p);
                self.patch_proj.forward(g, pv, &mut binds)?
            }
            VisualInput::Embeddings(e) => g.leaf(e),
        };
        let visual_len = g.shape(visual_var)[0];
        let total_len = visual_len + tokens.len();
        if total_len > self.config.max_seq_len {
            return Err(Error::Length(format!(
                "sequence of {total_len} exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }

        let emb_var = g.leaf(&self.tok_emb);
        if self.tok_emb.requires_grad {
            binds.push(("tok_emb".to_string(), emb_var));
        }
        let tok_var = g.embed(emb_var, tokens)?;
        let seq = g.concat_rows(visual_var, tok_var)?;

        let pos_var = g.leaf(&self.pos_emb);
        if self.pos_emb.requires_grad {
            binds.push(("pos_emb".to_string(), pos_var));
        }
        let positions: Vec<usize> = (0..total_len).collect();
        let pos_rows = g.embed(pos_var, &positions)?;
        let mut x = g.add(seq, pos_rows)?;

        let d = self.config.d_model;
        let dh = d / self.config.n_heads;
        let head_scale = 1.0 / (dh as f64).sqrt();
        for block in &self.blocks {
            let normed = block.ln1.forward(g, x, &mut binds)?;
            let qkv = block.qkv.forward(g, normed, &mut binds)?;
            let q = g.slice_cols(qkv, 0, d)?;
            let k = g.slice_cols(qkv, d, d)?;
            let v = g.slice_cols(qkv, 2 * d, d)?;
            let mut heads = Vec::with_capacity(self.config.n_heads);
            for h in 0..self.config.n_heads {
                let qh = g.slice_cols(q, h * dh, dh)?;
                let kh = g.slice_cols(k, h * dh, dh)?;
                let vh = g.slice_cols(v, h * dh, dh)?;
                let scores = g.matmul_nt(qh, kh)?;
                let scaled = g.scale(scores, head_scale);
                let attn = g.causal_softmax(scaled)?;
                heads.push(g.matmul(attn, vh)?);
            }
            let merged = g.concat_cols(&heads)?;
            let attn_proj = block.attn_out.forward(g, merged, &mut binds)?;
            x = g.add(x, attn_proj)?;

            let normed2 = block.ln2.forward(g, x, &mut binds)?;
            let hidden = block.mlp_in.forward(g, normed2, &mut binds)?;
            let hidden = g.gelu(hidden);
            let mlp_proj = block.mlp_out.forward(g, hidden, &mut binds)?;
            x = g.add(x, mlp_proj)?;
        }

        // Final norm feeds both heads; the regression head reads the
        // normalized hidden state at the scoring position.
        let xf = self.final_norm.forward(g, x, &mut binds)?;
        let logits = self.lm_head.forward(g, xf, &mut binds)?;
        let scoring_row = g.row(xf, visual_len + scoring_pos)?;
        let score_raw = self.reg_head.forward(g, scoring_row, &mut binds)?;
        let score = 100.0 * sigmoid(g.value(score_raw));
        Ok(ForwardPass {
            logits,
            score_raw,
            score,
            visual_len,
            binds,
        })
    }

    /// One inference pass from precomputed visual embeddings.
    pub fn forward(
        &self,
        visual: &Tensor,
        tokens: &[usize],
        scoring_pos: usize,
    ) -> Result<ModelOutput> {
        let mut g = Graph::new();
        let pass = self.forward_graph(&mut g, VisualInput::Embeddings(visual), tokens, scoring_pos)?;
        let logits = Tensor::new(g.shape(pass.logits).to_vec(), g.data(pass.logits).to_vec())?;
        Ok(ModelOutput {
            logits,
            score_raw: g.value(pass.score_raw),
            score: pass.score,
        })
    }

    /// Autoregressive decoding after the prompt. The prompt must end with
    /// [SCORING] [CRITIQUE]. Greedy mode is fully deterministic;
    /// temperature mode is deterministic given its seed. Stops after EOS
    /// or max_new tokens, whichever comes first.
    pub fn generate_critique(
        &self,
        visual: &Tensor,
        prompt: &[usize],
        max_new: usize,
        mode: DecodeMode,
    ) -> Result<Vec<usize>> {
        use crate::corpus::text::{CRITIQUE, EOS};
        if max_new < 1 {
            return Err(Error::contract("max_new must be at least 1"));
        }
        if prompt.len() < 2
            || prompt[prompt.len() - 2] != SCORING
            || prompt[prompt.len() - 1] != CRITIQUE
        {
            return Err(Error::contract(
                "prompt must end with [SCORING] then the critique marker",
            ));
        }
        let scoring_pos = prompt.len() - 2;
        let mut rng = match mode {
            DecodeMode::Temperature { seed, .. } => Some(Rng::new(seed).stream(0xDEC0)),
            DecodeMode::Greedy => None,
        };
        let mut tokens = prompt.to_vec();
        let mut generated = Vec::new();
        for _ in 0..max_new {
            let output = self.forward(visual, &tokens, scoring_pos)?;
            let v = self.config.vocab_size;
            let last = output.logits.shape[0] - 1;
            let row = &output.logits.data[last * v..(last + 1) * v];
            let next = match mode {
                DecodeMode::Greedy => argmax(row),
                DecodeMode::Temperature { t, .. } => {
                    let scaled: Vec<f64> = row.iter().map(|&l| l / t.max(1e-9)).collect();
                    let probs = crate::tensor::softmax_row(&scaled);
                    let draw = rng.as_mut().expect("temperature rng").next_f64();
                    let mut acc = 0.0;
                    let mut pick = v - 1;
                    for (i, p) in probs.iter().enumerate() {
                        acc += p;
                        if draw < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick
                }
            };
            tokens.push(next);
            generated.push(next);
            if next == EOS {
                break;
            }
        }
        Ok(generated)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Split an [s, s, 3] image into non-overlapping p x p patches, each
/// flattened row-major as (y, x, channel).
pub fn patchify(image: &Tensor, image_size: usize, patch_size: usize) -> Result<Tensor> {
    if image.shape != vec![image_size, image_size, 3] {
        return Err(Error::ShapeMismatch {
            op: "patchify",
            left: image.shape.clone(),
            right: vec![image_size, image_size, 3],
        });
    }
    let per_side = image_size / patch_size;
    let patch_dim = 3 * patch_size * patch_size;
    let mut data = Vec::with_capacity(per_side * per_side * patch_dim);
    for pr in 0..per_side {
        for pc in 0..per_side {
            for y in 0..patch_size {
                for x in 0..patch_size {
                    let base = ((pr * patch_size + y) * image_size + pc * patch_size + x) * 3;
                    data.extend_from_slice(&image.data[base..base + 3]);
                }
            }
        }
    }
    Tensor::new(vec![per_side * per_side, patch_dim], data)
}
