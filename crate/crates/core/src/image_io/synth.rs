//! Deterministic synthetic images: gradients, checkerboards, rectangles,
//! and glyph-like strokes.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Gradient,
    Checkerboard,
    Rectangles,
    Strokes,
}

impl SynthKind {
    const ALL: [SynthKind; 4] = [
        SynthKind::Gradient,
        SynthKind::Checkerboard,
        SynthKind::Rectangles,
        SynthKind::Strokes,
    ];
}

/// Two-color checkerboard with square cells of side `cell`.
pub fn checkerboard(h: usize, w: usize, cell: usize, a: [f64; 3], b: [f64; 3]) -> Image {
    let cell = cell.max(1);
    Image::from_fn(h, w, |y, x| if (y / cell + x / cell) % 2 == 0 { a } else { b })
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]
}

fn gradient(rng: &mut ChaCha8Rng, size: usize) -> Image {
    let (a, b) = (color(rng), color(rng));
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (dx, dy) = (angle.cos(), angle.sin());
    let half = size as f64 / 2.0;
    Image::from_fn(size, size, |y, x| {
        let t = ((x as f64 - half) * dx + (y as f64 - half) * dy) / size as f64 + 0.5;
        let t = t.clamp(0.0, 1.0);
        [0, 1, 2].map(|c| a[c] * (1.0 - t) + b[c] * t)
    })
}

fn rectangles(rng: &mut ChaCha8Rng, size: usize) -> Image {
    let mut canvas = gradient(rng, size).tensor().clone();
    let count = rng.random_range(3..9);
    for _ in 0..count {
        let fill = color(rng);
        let x0 = rng.random_range(0..size);
        let y0 = rng.random_range(0..size);
        let x1 = (x0 + rng.random_range(size / 8..=size / 2)).min(size);
        let y1 = (y0 + rng.random_range(size / 8..=size / 2)).min(size);
        for y in y0..y1 {
            for x in x0..x1 {
                canvas.pixel_mut(y, x).copy_from_slice(&fill);
            }
        }
    }
    Image::from_tensor(canvas).expect("canvas keeps its shape")
}

fn strokes(rng: &mut ChaCha8Rng, size: usize) -> Image {
    let bg = color(rng);
    let mut canvas = Image::constant(size, size, bg).tensor().clone();
    let count = rng.random_range(2..6);
    let s = size as f64;
    for _ in 0..count {
        let ink = color(rng);
        let thickness = rng.random_range(1.0..(s / 14.0).max(1.5));
        // A glyph is a short polyline.
        let mut px = rng.random::<f64>() * s;
        let mut py = rng.random::<f64>() * s;
        for _ in 0..rng.random_range(2..5) {
            let qx = (px + rng.random_range(-0.4..0.4) * s).clamp(0.0, s - 1.0);
            let qy = (py + rng.random_range(-0.4..0.4) * s).clamp(0.0, s - 1.0);
            for y in 0..size {
                for x in 0..size {
                    if segment_distance(x as f64, y as f64, px, py, qx, qy) <= thickness {
                        canvas.pixel_mut(y, x).copy_from_slice(&ink);
                    }
                }
            }
            px = qx;
            py = qy;
        }
    }
    Image::from_tensor(canvas).expect("canvas keeps its shape")
}

fn segment_distance(x: f64, y: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (vx, vy) = (bx - ax, by - ay);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x - ax) * vx + (y - ay) * vy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * vx, ay + t * vy);
    ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()
}

/// `count` square images of side `size`. Image `k` depends only on
/// `(seed, k, size)`, and the generator kind cycles through all four.
pub fn synth_corpus(seed: u64, count: usize, size: usize) -> Vec<Image> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            match SynthKind::ALL[k % 4] {
                SynthKind::Gradient => gradient(&mut rng, size),
                SynthKind::Checkerboard => {
                    let cell = rng.random_range(4..=16).min(size.max(1));
                    checkerboard(size, size, cell, color(&mut rng), color(&mut rng))
                }
                SynthKind::Rectangles => rectangles(&mut rng, size),
                SynthKind::Strokes => strokes(&mut rng, size),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn same_seed_same_images() {
        assert_eq!(synth_corpus(7, 2, 56), synth_corpus(7, 2, 56));
        assert_ne!(synth_corpus(7, 2, 56), synth_corpus(8, 2, 56));
    }

    #[test]
    fn prefix_stable_in_count() {
        let short = synth_corpus(3, 3, 28);
        let long = synth_corpus(3, 6, 28);
        assert_eq!(short[..], long[..3]);
    }

    #[test]
    fn checkerboard_cells_alternate() {
        let img = checkerboard(16, 16, 8, [0.0; 3], [1.0; 3]);
        assert_ne!(img.pixel(0, 0), img.pixel(0, 8));
        assert_eq!(img.pixel(0, 0), img.pixel(8, 8));
    }

    #[test]
    fn thirty_two_images_quickly() {
        let start = Instant::now();
        let corpus = synth_corpus(7, 32, 112);
        assert_eq!(corpus.len(), 32);
        assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());
    }
}
