//! Seeded rasterizer for synthetic paintings.
//!
//! Rendering avoids transcendental functions (only +, -, *, /, sqrt), so a
//! fixed seed produces byte-identical images across platforms.

use super::catalog::{
    arrangement_weights, combo_affinity, hue_count_weights, texture_weights, COMBOS, HUES,
};
use super::{
    Artwork, ArtworkParams, Category, MotifInstance, MotifKind, IMAGE_SIZE, MAX_NOISE_AMPLITUDE,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

/// Deterministically draw parameters and rasterize one artwork.
pub fn render_artwork(seed: u64, category: Category) -> Artwork {
    let params = draw_params(seed, category);
    let image = rasterize(&params);
    let description = super::text::describe(&params);
    Artwork {
        id: format!("art-seed-{seed:016x}"),
        image,
        params,
        description,
        category,
    }
}

fn weighted_u8(rng: &mut Rng, table: &[(u8, f64)]) -> u8 {
    let weights: Vec<f64> = table.iter().map(|&(_, w)| w).collect();
    table[rng.weighted(&weights)].0
}

fn draw_params(seed: u64, category: Category) -> ArtworkParams {
    let root = Rng::new(seed);

    let combo_id = {
        let mut rng = root.stream(0);
        let weights: Vec<f64> = COMBOS
            .iter()
            .enumerate()
            .map(|(i, c)| c.prior * combo_affinity(i, category))
            .collect();
        rng.weighted(&weights)
    };
    let combo = &COMBOS[combo_id];

    // One hue per kind group; the number of distinct hues is drawn per
    // category and capped by the group count.
    let group_hues: Vec<usize> = {
        let mut rng = root.stream(1);
        let table = hue_count_weights(category);
        let weights: Vec<f64> = table.iter().map(|&(_, w)| w).collect();
        let target = table[rng.weighted(&weights)].0;
        let n_groups = combo.groups.len();
        let distinct = target.min(n_groups).max(usize::from(n_groups > 0));
        let mut palette: Vec<usize> = (0..HUES.len()).collect();
        rng.shuffle(&mut palette);
        (0..n_groups).map(|g| palette[g % distinct]).collect()
    };

    let background = {
        let mut rng = root.stream(2);
        let top = rng.below(HUES.len());
        let bottom = if rng.next_f64() < 0.2 {
            top
        } else {
            rng.below(HUES.len())
        };
        (top, bottom)
    };

    let arrangement_level = if combo.groups.is_empty() {
        // Blank canvas: nothing to arrange; composition scores 0 by definition.
        8
    } else {
        let mut rng = root.stream(3);
        weighted_u8(&mut rng, arrangement_weights(category))
    };

    let texture_level = {
        let mut rng = root.stream(4);
        weighted_u8(&mut rng, texture_weights(category))
    };
    let noise_amplitude = texture_level as f64 / 6.0 * MAX_NOISE_AMPLITUDE;

    let motifs = {
        let mut rng = root.stream(5);
        let mut motifs = Vec::new();
        for (g, &(kind, count)) in combo.groups.iter().enumerate() {
            for _ in 0..count {
                motifs.push(MotifInstance {
                    kind,
                    hue: group_hues[g],
                    x: rng.uniform(0.30, 0.70) * IMAGE_SIZE as f64,
                    y: rng.uniform(0.30, 0.70) * IMAGE_SIZE as f64,
                    size: rng.uniform(3.0, 6.0),
                });
            }
        }
        place_at_offset(&mut motifs, arrangement_level, &mut rng);
        motifs
    };

    ArtworkParams {
        seed,
        combo_id,
        motifs,
        background,
        arrangement_level,
        texture_level,
        noise_amplitude,
    }
}

/// Translate the motifs so their centroid sits exactly at the arrangement
/// level's target offset from the canvas center.
fn place_at_offset(motifs: &mut [MotifInstance], level: u8, rng: &mut Rng) {
    if motifs.is_empty() {
        return;
    }
    let center = IMAGE_SIZE as f64 / 2.0;
    let radius = level as f64 / 8.0 * center;
    let (dx, dy) = unit_vector(rng);
    let target = (center + radius * dx, center + radius * dy);
    if motifs.len() == 1 {
        motifs[0].x = target.0;
        motifs[0].y = target.1;
        return;
    }
    let n = motifs.len() as f64;
    let cx = motifs.iter().map(|m| m.x).sum::<f64>() / n;
    let cy = motifs.iter().map(|m| m.y).sum::<f64>() / n;
    for m in motifs.iter_mut() {
        m.x += target.0 - cx;
        m.y += target.1 - cy;
    }
}

/// Uniform direction via rejection sampling; avoids trigonometry.
fn unit_vector(rng: &mut Rng) -> (f64, f64) {
    loop {
        let u = rng.uniform(-1.0, 1.0);
        let v = rng.uniform(-1.0, 1.0);
        let d2 = u * u + v * v;
        if d2 > 1e-9 && d2 <= 1.0 {
            let n = d2.sqrt();
            return (u / n, v / n);
        }
    }
}

/// Rasterize: vertical background gradient, then motifs in order, then
/// seeded per-pixel noise, clamped to [0,1].
pub fn rasterize(params: &ArtworkParams) -> Tensor {
    let s = IMAGE_SIZE;
    let mut data = vec![0.0f64; s * s * 3];
    let top = HUES[params.background.0].1;
    let bottom = HUES[params.background.1].1;
    for y in 0..s {
        let t = y as f64 / (s - 1) as f64;
        let row_color = [
            top[0] + (bottom[0] - top[0]) * t,
            top[1] + (bottom[1] - top[1]) * t,
            top[2] + (bottom[2] - top[2]) * t,
        ];
        for x in 0..s {
            let base = (y * s + x) * 3;
            data[base..base + 3].copy_from_slice(&row_color);
        }
    }
    for m in &params.motifs {
        let rgb = HUES[m.hue].1;
        for y in 0..s {
            for x in 0..s {
                let px = x as f64 + 0.5;
                let py = y as f64 + 0.5;
                if inside_motif(m, px, py) {
                    let base = (y * s + x) * 3;
                    data[base..base + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    if params.noise_amplitude > 0.0 {
        let mut rng = Rng::new(params.seed).stream(6);
        for v in &mut data {
            *v = (*v + params.noise_amplitude * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, 1.0);
        }
    }
    Tensor::new(vec![s, s, 3], data).expect("image buffer matches shape")
}

fn inside_motif(m: &MotifInstance, px: f64, py: f64) -> bool {
    let dx = px - m.x;
    let dy = py - m.y;
    let s = m.size;
    match m.kind {
        MotifKind::Circle => dx * dx + dy * dy <= s * s,
        MotifKind::Square => dx.abs() <= 0.9 * s && dy.abs() <= 0.9 * s,
        MotifKind::Triangle => {
            // Apex up: full width at the base, zero at the apex.
            dy >= -s && dy <= s && dx.abs() <= s * (dy + s) / (2.0 * s)
        }
        MotifKind::Star => {
            // Four-point star: diamond plus a thin axis-aligned cross.
            (dx.abs() + dy.abs() <= 0.8 * s)
                || (dx.abs() <= 0.22 * s && dy.abs() <= s)
                || (dy.abs() <= 0.22 * s && dx.abs() <= s)
        }
        MotifKind::House => {
            let body = dx.abs() <= 0.8 * s && dy >= -0.1 * s && dy <= 0.9 * s;
            let roof = dy >= -0.9 * s
                && dy < -0.1 * s
                && dx.abs() <= 0.8 * s * (dy + 0.9 * s) / (0.8 * s);
            body || roof
        }
        MotifKind::Tree => {
            let canopy = dy >= -s && dy <= 0.3 * s && dx.abs() <= 0.7 * s * (dy + s) / (1.3 * s);
            let trunk = dx.abs() <= 0.15 * s && dy > 0.3 * s && dy <= s;
            canopy || trunk
        }
        MotifKind::Sun => {
            let r2 = dx * dx + dy * dy;
            let core = r2 <= 0.55 * s * (0.55 * s);
            let in_disc = r2 <= s * s;
            let rays = dx.abs() <= 0.12 * s
                || dy.abs() <= 0.12 * s
                || (dx.abs() - dy.abs()).abs() <= 0.17 * s;
            core || (in_disc && rays)
        }
        MotifKind::Figure => {
            let hy = dy + 0.55 * s;
            let head = dx * dx + hy * hy <= 0.3 * s * (0.3 * s);
            let body = dx.abs() <= 0.22 * s && dy >= -0.25 * s && dy <= 0.7 * s;
            head || body
        }
    }
}

// ── PPM I/O ─────────────────────────────────────────────────────────────

/// Write a [0,1] image tensor as binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    let s = image.shape[0];
    let w = image.shape[1];
    let mut bytes = format!("P6\n{w} {s}\n255\n").into_bytes();
    bytes.extend(image.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Read a P6 or P3 PPM into a [0,1] image tensor of shape [h, w, 3].
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let magic = raw.get(..2).ok_or_else(|| Error::format("ppm: empty file"))?;
    let binary = match magic {
        b"P6" => true,
        b"P3" => false,
        _ => return Err(Error::format("ppm: expected P6 or P3 magic")),
    };

    // Header: magic, width, height, maxval; '#' comments allowed.
    let mut pos = 2;
    let mut fields = Vec::new();
    while fields.len() < 3 {
        while pos < raw.len() && (raw[pos].is_ascii_whitespace() || raw[pos] == b'#') {
            if raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("ppm: truncated header"));
        }
        let field: usize = std::str::from_utf8(&raw[start..pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format("ppm: bad header field"))?;
        fields.push(field);
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("ppm: unsupported maxval"));
    }
    let n = w * h * 3;
    let data: Vec<f64> = if binary {
        pos += 1; // single whitespace after maxval
        let pixels = raw
            .get(pos..pos + n)
            .ok_or_else(|| Error::format("ppm: truncated pixel data"))?;
        pixels.iter().map(|&b| b as f64 / maxval as f64).collect()
    } else {
        let text = std::str::from_utf8(&raw[pos..])
            .map_err(|_| Error::format("ppm: non-utf8 ascii data"))?;
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map(|v| v / maxval as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("ppm: bad ascii pixel"))?;
        if vals.len() < n {
            return Err(Error::format("ppm: truncated pixel data"));
        }
        vals[..n].to_vec()
    };
    Tensor::new(vec![h, w, 3], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_render_bit_identical_images() {
        let a = render_artwork(99, Category::Child);
        let b = render_artwork(99, Category::Child);
        assert_eq!(a.image.data, b.image.data);
        assert_eq!(a.description, b.description);
    }

    #[test]
    fn blank_canvas_without_noise_is_a_pure_gradient() {
        // Find a seed that draws the empty combo with texture level 0.
        let artwork = (0..10_000u64)
            .map(|s| render_artwork(s, Category::Child))
            .find(|a| a.params.combo_id == 0 && a.params.texture_level == 0)
            .expect("empty low-noise canvas occurs");
        assert!(artwork.params.motifs.is_empty());
        // Every row is constant.
        let s = IMAGE_SIZE;
        for y in 0..s {
            let first = &artwork.image.data[y * s * 3..y * s * 3 + 3];
            for x in 1..s {
                let px = &artwork.image.data[(y * s + x) * 3..(y * s + x) * 3 + 3];
                assert_eq!(px, first);
            }
        }
        // With an equal-hue gradient the whole image is one color.
        if artwork.params.background.0 == artwork.params.background.1 {
            let first = &artwork.image.data[..3];
            assert!(artwork.image.data.chunks(3).all(|px| px == first));
        }
    }

    #[test]
    fn image_values_stay_in_unit_range() {
        for seed in 0..50 {
            let a = render_artwork(seed, Category::Masterpiece);
            assert!(a.image.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn single_motif_at_level_zero_sits_exactly_on_center() {
        let artwork = (0..20_000u64)
            .map(|s| render_artwork(s, Category::Child))
            .find(|a| a.params.motifs.len() == 1 && a.params.arrangement_level == 0)
            .expect("single centered motif occurs");
        let m = &artwork.params.motifs[0];
        assert_eq!(m.x, IMAGE_SIZE as f64 / 2.0);
        assert_eq!(m.y, IMAGE_SIZE as f64 / 2.0);
    }

    #[test]
    fn ppm_roundtrip_preserves_quantized_pixels() {
        let art = render_artwork(5, Category::Professional);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        write_ppm(&path, &art.image).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.shape, vec![IMAGE_SIZE, IMAGE_SIZE, 3]);
        for (orig, rt) in art.image.data.iter().zip(&back.data) {
            assert!((orig - rt).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
