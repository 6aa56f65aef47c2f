//! Procedural painting corpus with exact ground truth.
//!
//! Stands in for a collected image corpus with expert ratings: every artwork
//! is rendered from seeded parameters, every rubric score is a documented
//! pure function of those parameters, and every description and reference
//! critique is templated from them. That makes training signal, evaluation
//! metrics and text alignment checkable to machine precision.
//!
//! The five rubric dimensions score 0-20 each and sum to a 0-100 total:
//!
//! * `color`       = 20 * min(1, distinct motif hues / 6)
//! * `composition` = 20 * (1 - clamp(centroid offset / half canvas, 0, 1))
//! * `texture`     = 20 * min(1, noise amplitude / MAX_NOISE_AMPLITUDE)
//! * `content`     = 20 * min(1, motif count / 5)
//! * `originality` = 20 * (1 - combo frequency), where the combo frequency
//!   is the documented prior probability of the painting's motif-kind
//!   multiset in [`catalog::COMBOS`].

pub mod catalog;
pub mod dataset;
pub mod render;
pub mod rubric;
pub mod text;

pub use dataset::{generate_dataset, split_dataset, Dataset, DatasetSplit, GeneratedSample, TrainSample};
pub use render::render_artwork;
pub use rubric::{ground_truth_scores, simulated_second_rater, RubricScores};
pub use text::{build_prompt, compose_texts, CritiqueBands, Tokenizer};

use serde::{Deserialize, Serialize};

/// Source category of an artwork; biases every generation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Child,
    Professional,
    Masterpiece,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Child,
        Category::Professional,
        Category::Masterpiece,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Child => "child",
            Category::Professional => "professional",
            Category::Masterpiece => "masterpiece",
        }
    }
}

/// Motif shapes the renderer knows how to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifKind {
    Circle,
    Square,
    Triangle,
    Star,
    House,
    Tree,
    Sun,
    Figure,
}

impl MotifKind {
    pub fn singular(self) -> &'static str {
        match self {
            MotifKind::Circle => "circle",
            MotifKind::Square => "square",
            MotifKind::Triangle => "triangle",
            MotifKind::Star => "star",
            MotifKind::House => "house",
            MotifKind::Tree => "tree",
            MotifKind::Sun => "sun",
            MotifKind::Figure => "figure",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            MotifKind::Circle => "circles",
            MotifKind::Square => "squares",
            MotifKind::Triangle => "triangles",
            MotifKind::Star => "stars",
            MotifKind::House => "houses",
            MotifKind::Tree => "trees",
            MotifKind::Sun => "suns",
            MotifKind::Figure => "figures",
        }
    }
}

/// One placed motif. Positions are f64 pixel coordinates of the motif
/// center; `size` is its radius-like extent in pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifInstance {
    pub kind: MotifKind,
    pub hue: usize,
    pub x: f64,
    pub y: f64,
    pub size: f64,
}

/// Everything needed to re-render an artwork and re-derive its scores and
/// texts. A pure function of (seed, category).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtworkParams {
    pub seed: u64,
    pub combo_id: usize,
    /// Grouped by kind; one hue per kind group.
    pub motifs: Vec<MotifInstance>,
    /// Hue indices of the background gradient (top, bottom).
    pub background: (usize, usize),
    /// Arrangement level 0..=8; centroid offset is level/8 of half canvas.
    pub arrangement_level: u8,
    /// Texture level 0..=6; noise amplitude is level/6 of the maximum.
    pub texture_level: u8,
    pub noise_amplitude: f64,
}

/// Rendered image plus the record it was rendered from.
#[derive(Debug, Clone)]
pub struct Artwork {
    pub id: String,
    /// image_size x image_size x 3, row-major (y, x, channel), values in [0,1].
    pub image: crate::tensor::Tensor,
    pub params: ArtworkParams,
    pub description: String,
    pub category: Category,
}

/// Canvas side in pixels.
pub const IMAGE_SIZE: usize = 32;

/// Largest per-pixel noise amplitude the generator uses (texture level 6).
pub const MAX_NOISE_AMPLITUDE: f64 = 0.25;

pub fn artwork_id(index: usize) -> String {
    format!("art-{index:06}")
}
