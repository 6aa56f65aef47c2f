//! Closed-grammar text layer: tokenizer, band table, description and
//! critique templates, and the prompt builder.
//!
//! All generated text is word-level with punctuation as separate tokens, so
//! `decode(encode(t)) == t` holds exactly for every template-generated
//! string and nothing ever tokenizes to UNK.

use super::catalog::{hue_name, COMBOS, HUES};
use super::ArtworkParams;
use crate::corpus::rubric::RubricScores;
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::path::Path;

// Special token ids are fixed and documented; everything else follows.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// The reserved scoring token; the regression head reads its hidden state.
pub const SCORING: usize = 4;
/// Marks the start of critique generation.
pub const CRITIQUE: usize = 5;

pub const SPECIAL_NAMES: [&str; 6] = ["[PAD]", "[BOS]", "[EOS]", "[UNK]", "[SCORING]", "[CRITIQUE]"];

/// Texture adjective per texture level 0..=6.
pub const TEXTURE_WORDS: [&str; 7] =
    ["smooth", "glassy", "soft", "grainy", "stippled", "rough", "coarse"];

/// Arrangement adjective per arrangement level 0..=8.
pub const ARRANGEMENT_WORDS: [&str; 9] = [
    "centered",
    "poised",
    "settled",
    "nudged",
    "shifted",
    "leaning",
    "drifting",
    "sideways",
    "peripheral",
];

pub const COUNT_WORDS: [&str; 5] = ["one", "two", "three", "four", "five"];

/// Fixed rubric preamble embedded at the head of every prompt.
pub const RUBRIC_PREAMBLE: &str = "Grade the painting for originality , color , composition , \
texture and content . Each dimension is worth twenty points and the total creativity score is \
out of one hundred .";

/// Token budget reserved for the critique when sizing prompts.
pub const CRITIQUE_BUDGET: usize = 40;

// ── Score bands ─────────────────────────────────────────────────────────

/// Score bands over [0,100] with their adjective sets. The five band names
/// partition [0,100] with no gaps or overlaps; each dimension has one
/// adjective per band and every adjective belongs to exactly one band.
#[derive(Debug, Clone, Copy, Default)]
pub struct CritiqueBands;

/// Upper bounds (exclusive) of the first four bands; the last band is
/// [90, 100] inclusive.
pub const BAND_BOUNDS: [f64; 4] = [40.0, 60.0, 75.0, 90.0];

pub const BAND_NAMES: [&str; 5] = ["poor", "fair", "good", "strong", "exceptional"];

/// Adjectives indexed by [dimension][band]; dimensions follow
/// [`RubricScores::DIMENSION_NAMES`].
pub const DIMENSION_ADJECTIVES: [[&str; 5]; 5] = [
    ["derivative", "conventional", "fresh", "inventive", "visionary"],
    ["drab", "muted", "pleasant", "vibrant", "radiant"],
    ["chaotic", "uneven", "balanced", "harmonious", "masterful"],
    ["flat", "plain", "layered", "rich", "sumptuous"],
    ["sparse", "simple", "engaging", "lively", "abundant"],
];

impl CritiqueBands {
    /// Band index of a score on the 0-100 scale.
    pub fn band_of(score: f64) -> usize {
        BAND_BOUNDS.iter().position(|&b| score < b).unwrap_or(4)
    }

    pub fn band_name(band: usize) -> &'static str {
        BAND_NAMES[band]
    }

    pub fn dimension_adjective(dim: usize, band: usize) -> &'static str {
        DIMENSION_ADJECTIVES[dim][band]
    }

    /// The band (and dimension, for dimension adjectives) a word belongs
    /// to, if it is a band adjective at all.
    pub fn lookup(word: &str) -> Option<(usize, Option<usize>)> {
        if let Some(band) = BAND_NAMES.iter().position(|&n| n == word) {
            return Some((band, None));
        }
        for (dim, adjectives) in DIMENSION_ADJECTIVES.iter().enumerate() {
            if let Some(band) = adjectives.iter().position(|&a| a == word) {
                return Some((band, Some(dim)));
            }
        }
        None
    }

    /// (lower, upper, name) of every band, in order.
    pub fn bands() -> [(f64, f64, &'static str); 5] {
        [
            (0.0, 40.0, BAND_NAMES[0]),
            (40.0, 60.0, BAND_NAMES[1]),
            (60.0, 75.0, BAND_NAMES[2]),
            (75.0, 90.0, BAND_NAMES[3]),
            (90.0, 100.0, BAND_NAMES[4]),
        ]
    }
}

// ── Templates ───────────────────────────────────────────────────────────

/// Render the description from generation parameters. Every rubric input is
/// stated: motif counts, kinds and hues, the arrangement word, the texture
/// word and the background colors.
pub fn describe(params: &ArtworkParams) -> String {
    let texture = TEXTURE_WORDS[params.texture_level as usize];
    let background = if params.background.0 == params.background.1 {
        format!("{} backdrop", hue_name(params.background.0))
    } else {
        format!(
            "{} and {} gradient",
            hue_name(params.background.0),
            hue_name(params.background.1)
        )
    };
    let combo = &COMBOS[params.combo_id];
    if combo.groups.is_empty() {
        return format!("An empty {texture} canvas over a {background} .");
    }

    // One phrase per kind group, in catalog order; the group hue is the hue
    // of its first instance.
    let mut phrases = Vec::new();
    let mut offset = 0;
    for &(kind, count) in combo.groups {
        let hue = hue_name(params.motifs[offset].hue);
        offset += count;
        let noun = if count == 1 { kind.singular() } else { kind.plural() };
        phrases.push(format!("{} {hue} {noun}", COUNT_WORDS[count - 1]));
    }
    let listed = match phrases.len() {
        1 => phrases[0].clone(),
        2 => format!("{} and {}", phrases[0], phrases[1]),
        _ => {
            let head = phrases[..phrases.len() - 1].join(" , ");
            format!("{head} and {}", phrases[phrases.len() - 1])
        }
    };
    let arrangement = ARRANGEMENT_WORDS[params.arrangement_level as usize];
    format!("A {texture} painting of {listed} , {arrangement} , over a {background} .")
}

/// Reference critique: one sentence per rubric dimension using that
/// dimension's band adjective (dimension scores are scaled to the 0-100
/// band scale), plus a closing total-score sentence.
pub fn reference_critique(scores: &RubricScores) -> String {
    let mut sentences = Vec::with_capacity(6);
    for (dim, (name, value)) in RubricScores::DIMENSION_NAMES
        .iter()
        .zip(scores.dimensions())
        .enumerate()
    {
        let band = CritiqueBands::band_of(value * 5.0);
        let adjective = CritiqueBands::dimension_adjective(dim, band);
        sentences.push(format!("The {name} is {adjective} ."));
    }
    let total_band = CritiqueBands::band_of(scores.total);
    sentences.push(format!(
        "Overall this work is {} .",
        CritiqueBands::band_name(total_band)
    ));
    sentences.join(" ")
}

/// Description plus reference critique, both pure functions of their inputs.
pub fn compose_texts(params: &ArtworkParams, scores: &RubricScores) -> (String, String) {
    (describe(params), reference_critique(scores))
}

/// Prompt layout: [BOS] rubric description [SCORING] [CRITIQUE].
/// Errors if the prompt would not leave room for the critique budget.
pub fn build_prompt(
    tokenizer: &Tokenizer,
    description: &str,
    max_seq_len: usize,
) -> Result<Vec<usize>> {
    let mut ids = vec![BOS];
    ids.extend(tokenizer.encode(RUBRIC_PREAMBLE));
    ids.extend(tokenizer.encode(description));
    ids.push(SCORING);
    ids.push(CRITIQUE);
    if ids.len() + CRITIQUE_BUDGET > max_seq_len {
        return Err(Error::Length(format!(
            "prompt of {} tokens leaves no critique budget within {max_seq_len}",
            ids.len()
        )));
    }
    Ok(ids)
}

// ── Tokenizer ───────────────────────────────────────────────────────────

/// Word-level tokenizer over the closed template grammar.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Tokenizer {
    /// The built-in vocabulary: specials first (stable ids), then every
    /// word the templates can emit, in a fixed order.
    pub fn builtin() -> Self {
        let mut words: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        let mut push = |w: &str| {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        };
        for w in RUBRIC_PREAMBLE.split_whitespace() {
            push(w);
        }
        // Description grammar.
        for w in [
            "A", "An", "empty", "painting", "canvas", "of", "over", "a", "and", ",", ".",
            "backdrop", "gradient",
        ] {
            push(w);
        }
        for w in TEXTURE_WORDS {
            push(w);
        }
        for w in ARRANGEMENT_WORDS {
            push(w);
        }
        for w in COUNT_WORDS {
            push(w);
        }
        for (name, _) in HUES {
            push(name);
        }
        for combo in &COMBOS {
            for &(kind, _) in combo.groups {
                push(kind.singular());
                push(kind.plural());
            }
        }
        // Critique grammar.
        for w in ["The", "is", "Overall", "this", "work"] {
            push(w);
        }
        for name in RubricScores::DIMENSION_NAMES {
            push(name);
        }
        for row in DIMENSION_ADJECTIVES {
            for adjective in row {
                push(adjective);
            }
        }
        for name in BAND_NAMES {
            push(name);
        }
        Self::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Tokenizer { words, index }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.words.get(id).map(String::as_str).unwrap_or("[UNK]"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// One token per line; the index is the line number.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.words.join("\n") + "\n")?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let words: Vec<String> = text.lines().map(str::to_string).collect();
        if words.len() < SPECIAL_NAMES.len()
            || SPECIAL_NAMES.iter().enumerate().any(|(i, s)| words[i] != *s)
        {
            return Err(Error::format("vocabulary file missing special tokens"));
        }
        Ok(Self::from_words(words))
    }
}

#[cfg(test)]
mod tests {
    use super::super::render::render_artwork;
    use super::super::rubric::ground_truth_scores;
    use super::super::Category;
    use super::*;

    #[test]
    fn bands_partition_the_scale() {
        let bands = CritiqueBands::bands();
        assert_eq!(bands[0].0, 0.0);
        assert_eq!(bands[4].1, 100.0);
        for w in bands.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(CritiqueBands::band_of(0.0), 0);
        assert_eq!(CritiqueBands::band_of(39.999), 0);
        assert_eq!(CritiqueBands::band_of(40.0), 1);
        assert_eq!(CritiqueBands::band_of(89.999), 3);
        assert_eq!(CritiqueBands::band_of(90.0), 4);
        assert_eq!(CritiqueBands::band_of(100.0), 4);
    }

    #[test]
    fn every_adjective_maps_to_exactly_one_band() {
        let mut seen = std::collections::HashSet::new();
        for name in BAND_NAMES {
            assert!(seen.insert(name), "duplicate adjective {name}");
        }
        for row in DIMENSION_ADJECTIVES {
            for adjective in row {
                assert!(seen.insert(adjective), "duplicate adjective {adjective}");
                assert!(CritiqueBands::lookup(adjective).is_some());
            }
        }
        assert!(CritiqueBands::lookup("painting").is_none());
    }

    #[test]
    fn high_dimension_score_uses_exceptional_band_adjective() {
        // 19/20 scales to 95/100, which is in the exceptional band.
        let scores = RubricScores::new(19.0, 10.0, 10.0, 10.0, 10.0);
        let critique = reference_critique(&scores);
        assert!(critique.contains("The originality is visionary ."), "{critique}");
    }

    #[test]
    fn identical_params_compose_identical_texts() {
        let a = render_artwork(31, Category::Professional);
        let scores = ground_truth_scores(&a.params);
        let first = compose_texts(&a.params, &scores);
        let second = compose_texts(&a.params, &scores);
        assert_eq!(first, second);
    }

    #[test]
    fn generated_texts_tokenize_without_unk_and_roundtrip() {
        let tok = Tokenizer::builtin();
        for seed in 0..300 {
            for cat in Category::ALL {
                let art = render_artwork(seed, cat);
                let scores = ground_truth_scores(&art.params);
                let (description, critique) = compose_texts(&art.params, &scores);
                for text in [&description, &critique, &RUBRIC_PREAMBLE.to_string()] {
                    let ids = tok.encode(text);
                    assert!(
                        ids.iter().all(|&id| id != UNK),
                        "UNK in {text:?}"
                    );
                    assert_eq!(&tok.decode(&ids), text, "roundtrip failed");
                }
            }
        }
    }

    #[test]
    fn prompt_contains_exactly_one_scoring_token_and_fixed_preamble() {
        let tok = Tokenizer::builtin();
        let preamble_len = tok.encode(RUBRIC_PREAMBLE).len();
        let mut seen_lens = std::collections::HashSet::new();
        for seed in 0..50 {
            let art = render_artwork(seed, Category::Child);
            let prompt = build_prompt(&tok, &art.description, 256).unwrap();
            assert_eq!(prompt.iter().filter(|&&t| t == SCORING).count(), 1);
            assert_eq!(prompt[prompt.len() - 2], SCORING);
            assert_eq!(prompt[prompt.len() - 1], CRITIQUE);
            assert_eq!(prompt[0], BOS);
            // The preamble occupies the same fixed token span in every prompt.
            assert_eq!(&prompt[1..=preamble_len], &tok.encode(RUBRIC_PREAMBLE)[..]);
            seen_lens.insert(prompt.len());
        }
        assert!(seen_lens.len() > 1, "descriptions vary in length");
    }

    #[test]
    fn same_description_builds_identical_prompts() {
        let tok = Tokenizer::builtin();
        let description = "A soft painting of one red sun , centered , over a blue backdrop .";
        assert_eq!(
            build_prompt(&tok, description, 256).unwrap(),
            build_prompt(&tok, description, 256).unwrap()
        );
    }

    #[test]
    fn overlong_prompt_is_a_length_error() {
        let tok = Tokenizer::builtin();
        let art = render_artwork(1, Category::Child);
        assert!(matches!(
            build_prompt(&tok, &art.description, 40),
            Err(Error::Length(_))
        ));
    }

    #[test]
    fn vocabulary_file_roundtrips_with_stable_ids() {
        let tok = Tokenizer::builtin();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        tok.write_file(&path).unwrap();
        let back = Tokenizer::read_file(&path).unwrap();
        assert_eq!(back.vocab_size(), tok.vocab_size());
        assert_eq!(back.encode("painting , over"), tok.encode("painting , over"));
        assert_eq!(back.token(SCORING), Some("[SCORING]"));
    }
}
