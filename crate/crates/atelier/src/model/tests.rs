use super::*;
use crate::corpus::text::{CRITIQUE, EOS};
use crate::qlora::{inject_lora, merge_lora, quantize_base, LoraTargets};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        image_size: 16,
        patch_size: 8,
        vocab_size: 30,
        max_seq_len: 64,
        lora_rank: 2,
        lora_alpha: 4.0,
        quant_block: 16,
        seed: 7,
    }
}

fn tiny_model() -> VlmModel {
    VlmModel::new(tiny_config()).unwrap()
}

fn random_image(size: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let data = (0..size * size * 3).map(|_| rng.next_f64()).collect();
    Tensor::new(vec![size, size, 3], data).unwrap()
}

fn prompt_tokens() -> (Vec<usize>, usize) {
    // [BOS-ish filler ... SCORING CRITIQUE]
    let tokens = vec![7, 8, 9, 10, 11, SCORING, CRITIQUE];
    (tokens, 5)
}

#[test]
fn default_toy_scale_has_sixteen_visual_tokens() {
    let config = ModelConfig::toy(200);
    assert_eq!(config.visual_tokens(), 16);
    assert_eq!(tiny_config().visual_tokens(), 4);
}

#[test]
fn zero_image_with_zero_bias_encodes_to_zero() {
    let model = tiny_model();
    let image = Tensor::zeros(vec![16, 16, 3]);
    let emb = model.encode_image(&image).unwrap();
    assert_eq!(emb.shape, vec![4, 16]);
    assert!(emb.data.iter().all(|&v| v == 0.0));
}

#[test]
fn encoding_is_local_to_the_changed_patch() {
    let model = tiny_model();
    let image = random_image(16, 3);
    let mut poked = image.clone();
    // Pixel (y=2, x=11) lives in patch row 0, patch col 1 -> patch index 1.
    poked.data[(2 * 16 + 11) * 3] += 0.25;
    let a = model.encode_image(&image).unwrap();
    let b = model.encode_image(&poked).unwrap();
    for patch in 0..4 {
        let row_a = &a.data[patch * 16..(patch + 1) * 16];
        let row_b = &b.data[patch * 16..(patch + 1) * 16];
        if patch == 1 {
            assert_ne!(row_a, row_b);
        } else {
            assert_eq!(row_a, row_b);
        }
    }
}

#[test]
fn wrong_image_size_is_a_dimension_error() {
    let model = tiny_model();
    let image = Tensor::zeros(vec![8, 8, 3]);
    assert!(matches!(
        model.encode_image(&image),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn zero_regression_head_scores_exactly_fifty() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let (tokens, pos) = prompt_tokens();
    let out = model.forward(&visual, &tokens, pos).unwrap();
    assert_eq!(out.score_raw, 0.0);
    assert_eq!(out.score, 50.0);
}

#[test]
fn logits_cover_every_position_and_the_vocabulary() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let (tokens, pos) = prompt_tokens();
    let out = model.forward(&visual, &tokens, pos).unwrap();
    assert_eq!(out.logits.shape, vec![4 + tokens.len(), 30]);
}

#[test]
fn tokens_after_scoring_position_cannot_change_the_score() {
    let mut model = tiny_model();
    // Give the head nonzero weights so the score actually depends on input.
    if let BaseWeight::Dense(w) = &mut model.reg_head.base {
        let mut rng = Rng::new(9);
        *w = Tensor::randn(vec![1, 16], 0.5, &mut rng);
    }
    let visual = model.encode_image(&random_image(16, 6)).unwrap();
    let mut tokens = vec![7, 8, 9, SCORING, CRITIQUE, 12, 13, 14];
    let base = model.forward(&visual, &tokens, 3).unwrap();
    tokens[5..].reverse();
    let permuted = model.forward(&visual, &tokens, 3).unwrap();
    assert_eq!(base.score_raw, permuted.score_raw);
    assert_eq!(base.score, permuted.score);
}

#[test]
fn causal_mask_gives_exact_prefix_equality() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 8)).unwrap();
    let mut tokens = vec![7, 8, 9, 10, SCORING, CRITIQUE, 20, 21];
    let a = model.forward(&visual, &tokens, 4).unwrap();
    tokens[6] = 25; // change a late token
    let b = model.forward(&visual, &tokens, 4).unwrap();
    let v = 30;
    let changed_pos = 4 + 6; // visual prefix + token index
    for p in 0..changed_pos {
        assert_eq!(
            a.logits.data[p * v..(p + 1) * v],
            b.logits.data[p * v..(p + 1) * v],
            "prefix logits must match exactly at position {p}"
        );
    }
    assert_ne!(
        a.logits.data[changed_pos * v..(changed_pos + 1) * v],
        b.logits.data[changed_pos * v..(changed_pos + 1) * v]
    );
}

#[test]
fn score_stays_inside_the_open_interval() {
    let mut model = tiny_model();
    if let BaseWeight::Dense(w) = &mut model.reg_head.base {
        w.data.iter_mut().for_each(|v| *v = 50.0);
    }
    model.reg_head.bias.data[0] = 1e4;
    let visual = model.encode_image(&random_image(16, 10)).unwrap();
    let (tokens, pos) = prompt_tokens();
    let out = model.forward(&visual, &tokens, pos).unwrap();
    assert!(out.score > 0.0 && out.score < 100.0 || out.score == 100.0 * sigmoid(out.score_raw));
    assert!((0.0..=100.0).contains(&out.score));
    model.reg_head.bias.data[0] = -1e4;
    let out = model.forward(&visual, &tokens, pos).unwrap();
    assert!(out.score >= 0.0 && out.score < 50.0);
}

#[test]
fn missing_scoring_token_is_a_contract_error() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let tokens = vec![7, 8, 9];
    assert!(matches!(
        model.forward(&visual, &tokens, 1),
        Err(Error::Contract(_))
    ));
}

#[test]
fn overlong_sequence_is_a_length_error() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let mut tokens = vec![7; 70];
    tokens[0] = SCORING;
    assert!(matches!(
        model.forward(&visual, &tokens, 0),
        Err(Error::Length(_))
    ));
}

#[test]
fn generation_appends_exactly_one_token_when_asked() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let (tokens, _) = prompt_tokens();
    let out = model
        .generate_critique(&visual, &tokens, 1, DecodeMode::Greedy)
        .unwrap();
    assert_eq!(out.len(), 1);
}

#[test]
fn greedy_generation_is_deterministic() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let (tokens, _) = prompt_tokens();
    let a = model
        .generate_critique(&visual, &tokens, 8, DecodeMode::Greedy)
        .unwrap();
    let b = model
        .generate_critique(&visual, &tokens, 8, DecodeMode::Greedy)
        .unwrap();
    assert_eq!(a, b);
    assert!(a.len() <= 8);
    if a.len() < 8 {
        assert_eq!(*a.last().unwrap(), EOS);
    }
}

#[test]
fn temperature_generation_is_seed_deterministic() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    let (tokens, _) = prompt_tokens();
    let mode = DecodeMode::Temperature { t: 0.8, seed: 123 };
    let a = model.generate_critique(&visual, &tokens, 6, mode).unwrap();
    let b = model.generate_critique(&visual, &tokens, 6, mode).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bad_prompt_tail_is_rejected_for_generation() {
    let model = tiny_model();
    let visual = model.encode_image(&random_image(16, 5)).unwrap();
    assert!(model
        .generate_critique(&visual, &[7, SCORING, 9], 4, DecodeMode::Greedy)
        .is_err());
    let (tokens, _) = prompt_tokens();
    assert!(model
        .generate_critique(&visual, &tokens, 0, DecodeMode::Greedy)
        .is_err());
}

#[test]
fn adapters_only_without_adapters_is_a_contract_error() {
    let model = tiny_model();
    assert!(matches!(
        model.trainable_parameters(TrainMode::AdaptersOnly),
        Err(Error::Contract(_))
    ));
}

#[test]
fn trainable_sets_nest_and_exclude_the_frozen_base() {
    let mut model = tiny_model();
    quantize_base(&mut model, 16).unwrap();
    inject_lora(&mut model, LoraTargets::ALL, 2, 4.0).unwrap();
    let full: std::collections::HashSet<String> = model
        .trainable_parameters(TrainMode::Full)
        .unwrap()
        .into_iter()
        .collect();
    let adapters: std::collections::HashSet<String> = model
        .trainable_parameters(TrainMode::AdaptersOnly)
        .unwrap()
        .into_iter()
        .collect();
    assert!(adapters.is_subset(&full), "full must contain adapters_only");
    assert!(!adapters.contains("tok_emb"));
    assert!(!adapters.contains("pos_emb"));
    assert!(adapters.contains("reg_head.w"));
    assert!(adapters.iter().all(|n| !n.ends_with(".bias") || n.starts_with("reg_head")));
}

#[test]
fn adapter_parameter_count_matches_config_arithmetic() {
    let mut model = tiny_model();
    quantize_base(&mut model, 16).unwrap();
    inject_lora(&mut model, LoraTargets::ALL, 2, 4.0).unwrap();
    let d = 16usize;
    let r = 2usize;
    // Per block: qkv [3d, d], attn_out [d, d], mlp_in [4d, d], mlp_out [d, 4d].
    let per_block: usize = [(3 * d, d), (d, d), (4 * d, d), (d, 4 * d)]
        .iter()
        .map(|&(o, i)| r * (o + i))
        .sum();
    let expected = 2 * per_block + (d + 1); // blocks + regression head
    assert_eq!(
        model.trainable_parameter_count(TrainMode::AdaptersOnly).unwrap(),
        expected
    );
}

#[test]
fn four_layers_are_adapted_per_block_when_all_targets_selected() {
    let mut model = tiny_model();
    inject_lora(&mut model, LoraTargets::ALL, 2, 4.0).unwrap();
    assert_eq!(crate::qlora::adapted_layer_count(&model), 4 * 2);
}

#[test]
fn adapter_mode_backpropagates_into_adapters_not_the_base() {
    let mut model = tiny_model();
    quantize_base(&mut model, 16).unwrap();
    inject_lora(&mut model, LoraTargets::ALL, 2, 4.0).unwrap();
    model.set_mode(TrainMode::AdaptersOnly).unwrap();

    let image = random_image(16, 4);
    let patches = patchify(&image, 16, 8).unwrap();
    let (tokens, pos) = prompt_tokens();
    let mut g = Graph::new();
    let pass = model
        .forward_graph(&mut g, VisualInput::Patches(&patches), &tokens, pos)
        .unwrap();
    let targets: Vec<usize> = (0..g.shape(pass.logits)[0])
        .map(|i| if i > 4 { 1 } else { crate::corpus::dataset::IGNORE_INDEX })
        .collect();
    let ce = g
        .softmax_cross_entropy(pass.logits, &targets, crate::corpus::dataset::IGNORE_INDEX)
        .unwrap();
    let sig = g.sigmoid(pass.score_raw);
    let sig_sum = g.sum(sig);
    let loss = g.add(ce, sig_sum).unwrap();
    g.backward(loss).unwrap();

    let grad_norm = |name: &str| -> Option<f64> {
        pass.binds
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, v)| g.grad(*v))
            .map(|gr| gr.iter().map(|x| x * x).sum::<f64>())
    };
    // B factors receive gradient signal on the first pass.
    let some_b = grad_norm("block0.qkv.lora_b").unwrap();
    assert!(some_b > 0.0, "lora_b gradient should be nonzero");
    // The frozen base never appears among the bindings.
    assert!(pass.binds.iter().all(|(n, _)| !n.ends_with(".w") || n == "reg_head.w"));
    assert!(grad_norm("reg_head.w").is_some());
}

#[test]
fn checkpoint_roundtrips_bit_exactly() {
    let mut model = tiny_model();
    // Perturb a few weights so the file is not just the seeded init.
    model.tok_emb.data[5] = 0.123456789;
    model.reg_head.bias.data[0] = -0.5;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let loaded = VlmModel::load(&path).unwrap();
    for ((na, ta), (nb, tb)) in model.named_tensors().iter().zip(loaded.named_tensors().iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta.data, tb.data, "tensor {na} must roundtrip bit-exactly");
    }
    assert_eq!(loaded.config, model.config);
}

#[test]
fn quantized_adapter_checkpoint_roundtrips_and_omits_base_blocks() {
    let mut model = tiny_model();
    quantize_base(&mut model, 16).unwrap();
    inject_lora(&mut model, LoraTargets::ALL, 2, 4.0).unwrap();
    model.set_mode(TrainMode::AdaptersOnly).unwrap();
    // Move an adapter away from init.
    if let Some(ad) = &mut model.blocks[0].qkv.adapter {
        ad.b.data[0] = 0.25;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adapters.ckpt");
    model.save(&path).unwrap();

    let container = read_container(&path).unwrap();
    assert!(container.blocks.iter().all(|b| {
        b.name.contains("lora_") || b.name.starts_with("reg_head")
    }), "adapter checkpoints carry no base weights");

    let loaded = VlmModel::load(&path).unwrap();
    let visual = loaded.encode_image(&random_image(16, 5)).unwrap();
    let (tokens, pos) = prompt_tokens();
    let a = model.forward(&visual, &tokens, pos).unwrap();
    let b = loaded.forward(&visual, &tokens, pos).unwrap();
    assert_eq!(a.logits.data, b.logits.data);
    assert_eq!(a.score, b.score);
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let model = tiny_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(VlmModel::load(&path), Err(Error::Format(_))));
}

#[test]
fn adapter_checkpoint_rejects_config_mismatch() {
    let mut model = tiny_model();
    inject_lora(&mut model, LoraTargets::ALL, 2, 4.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adapters.ckpt");
    model.save_adapters(&path).unwrap();

    let mut other_config = tiny_config();
    other_config.seed = 99;
    let mut other = VlmModel::new(other_config).unwrap();
    assert!(matches!(
        other.load_adapters(&path),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn patchify_rearranges_without_loss() {
    let image = random_image(16, 2);
    let patches = patchify(&image, 16, 8).unwrap();
    assert_eq!(patches.shape, vec![4, 192]);
    // First element of patch 3 (row 1, col 1) is pixel (8, 8) channel 0.
    assert_eq!(patches.data[3 * 192], image.data[(8 * 16 + 8) * 3]);
    let total_a: f64 = image.data.iter().sum();
    let total_b: f64 = patches.data.iter().sum();
    assert!((total_a - total_b).abs() < 1e-9);
}
