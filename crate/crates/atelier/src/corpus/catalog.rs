//! Fixed tables the generator draws from: the hue palette, the motif-combo
//! catalog with its documented prior, per-category sampling affinities and
//! the per-category distributions of hue count, arrangement and texture.

use super::{Category, MotifKind};
use MotifKind::*;

/// Named palette. Hue index everywhere refers to this table.
pub const HUES: [(&str, [f64; 3]); 10] = [
    ("red", [0.85, 0.10, 0.10]),
    ("orange", [0.95, 0.55, 0.10]),
    ("yellow", [0.95, 0.90, 0.20]),
    ("green", [0.15, 0.65, 0.20]),
    ("teal", [0.10, 0.60, 0.60]),
    ("blue", [0.15, 0.30, 0.80]),
    ("purple", [0.55, 0.20, 0.70]),
    ("pink", [0.95, 0.60, 0.75]),
    ("brown", [0.50, 0.33, 0.15]),
    ("gray", [0.55, 0.55, 0.55]),
];

pub fn hue_name(index: usize) -> &'static str {
    HUES[index].0
}

/// One catalog entry: a motif-kind multiset (kind, multiplicity) and its
/// prior probability in the modeled population of paintings. The
/// `originality` rubric dimension is 20 * (1 - prior).
pub struct Combo {
    pub groups: &'static [(MotifKind, usize)],
    pub prior: f64,
}

/// The combo catalog. Priors sum to exactly 1. Entry 0 is the blank canvas.
pub const COMBOS: [Combo; 26] = [
    Combo { groups: &[], prior: 0.28 },
    Combo { groups: &[(House, 1), (Tree, 1), (Sun, 1)], prior: 0.25 },
    Combo { groups: &[(Sun, 1)], prior: 0.10 },
    Combo { groups: &[(Figure, 1)], prior: 0.06 },
    Combo { groups: &[(Figure, 2), (House, 1)], prior: 0.05 },
    Combo { groups: &[(Tree, 2), (Sun, 1)], prior: 0.04 },
    Combo { groups: &[(Circle, 3), (Sun, 1)], prior: 0.03 },
    Combo { groups: &[(Star, 4)], prior: 0.025 },
    Combo { groups: &[(House, 1), (Figure, 2), (Sun, 1)], prior: 0.02 },
    Combo { groups: &[(Tree, 3), (House, 1), (Sun, 1)], prior: 0.02 },
    Combo { groups: &[(Square, 2), (Triangle, 2)], prior: 0.018 },
    Combo { groups: &[(Figure, 3), (Tree, 2)], prior: 0.015 },
    Combo { groups: &[(Circle, 2), (Square, 2), (Triangle, 1)], prior: 0.013 },
    Combo { groups: &[(Tree, 4), (Figure, 1)], prior: 0.012 },
    Combo { groups: &[(Star, 2), (Circle, 3)], prior: 0.011 },
    Combo { groups: &[(House, 2), (Tree, 2), (Figure, 1)], prior: 0.010 },
    Combo { groups: &[(Triangle, 3), (Circle, 2), (Star, 1)], prior: 0.009 },
    Combo { groups: &[(Sun, 1), (Tree, 2), (Figure, 2), (House, 1)], prior: 0.008 },
    Combo { groups: &[(Square, 5)], prior: 0.007 },
    Combo { groups: &[(Figure, 4), (Sun, 1)], prior: 0.006 },
    Combo { groups: &[(Star, 3), (Figure, 2), (Tree, 1), (Sun, 1)], prior: 0.005 },
    Combo { groups: &[(Circle, 4), (Triangle, 2), (Square, 1)], prior: 0.004 },
    Combo { groups: &[(House, 1), (Tree, 2), (Figure, 3), (Sun, 1)], prior: 0.003 },
    Combo { groups: &[(Star, 2), (Circle, 1), (Triangle, 1), (Square, 1), (Figure, 1)], prior: 0.002 },
    Combo { groups: &[(Figure, 2), (Tree, 1), (Sun, 1), (Star, 1), (Circle, 1), (House, 1)], prior: 0.0015 },
    Combo { groups: &[(Triangle, 1), (Star, 1), (Sun, 1), (Circle, 1), (Square, 1), (Tree, 1), (Figure, 1)], prior: 0.0005 },
];

impl Combo {
    pub fn motif_count(&self) -> usize {
        self.groups.iter().map(|(_, n)| n).sum()
    }
}

/// Sampling weight multiplier of a combo within a category. The corpus
/// draws combos with probability proportional to prior * affinity.
pub fn combo_affinity(combo_id: usize, category: Category) -> f64 {
    match category {
        Category::Child => match combo_id {
            0 => 0.15,
            1 => 0.60,
            2..=9 => 1.0,
            10..=19 => 0.05,
            _ => 0.0,
        },
        Category::Professional => match combo_id {
            0 => 0.02,
            1..=8 => 0.15,
            9..=19 => 1.0,
            _ => 0.30,
        },
        Category::Masterpiece => match combo_id {
            10..=19 => 0.10,
            20..=25 => 1.0,
            _ => 0.0,
        },
    }
}

/// Distribution of the target number of distinct motif hues.
/// Returned as (value, weight) pairs.
pub fn hue_count_weights(category: Category) -> &'static [(usize, f64)] {
    match category {
        Category::Child => &[(1, 0.15), (2, 0.30), (3, 0.30), (4, 0.25)],
        Category::Professional => &[(3, 0.20), (4, 0.30), (5, 0.30), (6, 0.20)],
        Category::Masterpiece => &[(5, 0.25), (6, 0.35), (7, 0.25), (8, 0.15)],
    }
}

/// Distribution of the arrangement level (0 = centered .. 8 = far off-center).
pub fn arrangement_weights(category: Category) -> &'static [(u8, f64)] {
    match category {
        Category::Child => &[
            (0, 0.05),
            (1, 0.07),
            (2, 0.10),
            (3, 0.13),
            (4, 0.15),
            (5, 0.15),
            (6, 0.15),
            (7, 0.12),
            (8, 0.08),
        ],
        Category::Professional => &[
            (0, 0.18),
            (1, 0.22),
            (2, 0.22),
            (3, 0.18),
            (4, 0.12),
            (5, 0.05),
            (6, 0.03),
        ],
        Category::Masterpiece => &[(0, 0.45), (1, 0.30), (2, 0.15), (3, 0.10)],
    }
}

/// Distribution of the texture level (0 = no noise .. 6 = maximum noise).
pub fn texture_weights(category: Category) -> &'static [(u8, f64)] {
    match category {
        Category::Child => &[
            (0, 0.22),
            (1, 0.25),
            (2, 0.22),
            (3, 0.16),
            (4, 0.10),
            (5, 0.04),
            (6, 0.01),
        ],
        Category::Professional => &[
            (1, 0.05),
            (2, 0.15),
            (3, 0.25),
            (4, 0.25),
            (5, 0.20),
            (6, 0.10),
        ],
        Category::Masterpiece => &[(3, 0.10), (4, 0.20), (5, 0.30), (6, 0.40)],
    }
}
