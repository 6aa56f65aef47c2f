//! Ground-truth rubric oracle.
//!
//! Scores are pure functions of [`ArtworkParams`]; re-scoring a stored
//! artwork reproduces its stored scores exactly.

use super::catalog::COMBOS;
use super::{ArtworkParams, IMAGE_SIZE, MAX_NOISE_AMPLITUDE};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Five dimension scores in [0,20] plus their exact sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricScores {
    pub originality: f64,
    pub color: f64,
    pub composition: f64,
    pub texture: f64,
    pub content: f64,
    pub total: f64,
}

impl RubricScores {
    pub fn new(originality: f64, color: f64, composition: f64, texture: f64, content: f64) -> Self {
        RubricScores {
            originality,
            color,
            composition,
            texture,
            content,
            total: originality + color + composition + texture + content,
        }
    }

    pub fn dimensions(&self) -> [f64; 5] {
        [
            self.originality,
            self.color,
            self.composition,
            self.texture,
            self.content,
        ]
    }

    pub const DIMENSION_NAMES: [&'static str; 5] =
        ["originality", "color", "composition", "texture", "content"];
}

/// Distinct hues among the motif groups. The background does not count.
fn distinct_motif_hues(params: &ArtworkParams) -> usize {
    let mut seen = [false; super::catalog::HUES.len()];
    let mut n = 0;
    for m in &params.motifs {
        if !seen[m.hue] {
            seen[m.hue] = true;
            n += 1;
        }
    }
    n
}

/// Euclidean distance of the motif centroid from the canvas center.
/// A blank canvas is defined to have offset equal to the half canvas,
/// so its composition score is 0.
pub fn centroid_offset(params: &ArtworkParams) -> f64 {
    let half = IMAGE_SIZE as f64 / 2.0;
    if params.motifs.is_empty() {
        return half;
    }
    let n = params.motifs.len() as f64;
    let cx = params.motifs.iter().map(|m| m.x).sum::<f64>() / n;
    let cy = params.motifs.iter().map(|m| m.y).sum::<f64>() / n;
    let dx = cx - half;
    let dy = cy - half;
    (dx * dx + dy * dy).sqrt()
}

/// The documented score formulas. See the module docs of [`super`].
pub fn ground_truth_scores(params: &ArtworkParams) -> RubricScores {
    let half = IMAGE_SIZE as f64 / 2.0;
    let color = 20.0 * (distinct_motif_hues(params) as f64 / 6.0).min(1.0);
    let composition = 20.0 * (1.0 - (centroid_offset(params) / half).clamp(0.0, 1.0));
    let texture = 20.0 * (params.noise_amplitude / MAX_NOISE_AMPLITUDE).min(1.0);
    let content = 20.0 * (params.motifs.len() as f64 / 5.0).min(1.0);
    let originality = 20.0 * (1.0 - COMBOS[params.combo_id].prior);
    RubricScores::new(originality, color, composition, texture, content)
}

/// The second simulated expert: ground truth plus seeded N(0,1) noise per
/// dimension, clamped to [0,20]. The first expert is ground truth itself.
pub fn simulated_second_rater(scores: &RubricScores, seed: u64) -> RubricScores {
    let mut rng = Rng::new(seed).stream(0xA7E0);
    let noisy: Vec<f64> = scores
        .dimensions()
        .iter()
        .map(|d| (d + rng.normal()).clamp(0.0, 20.0))
        .collect();
    RubricScores::new(noisy[0], noisy[1], noisy[2], noisy[3], noisy[4])
}
