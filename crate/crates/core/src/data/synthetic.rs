//! Procedurally generated labelled images for tests and offline demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cifar::{LabeledImageSet, IMAGE_BYTES};

/// Each class is one flat colour; every image of the class is identical.
pub fn constant_color(classes: usize, per_class: usize, seed: u64) -> LabeledImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors: Vec<[u8; 3]> = (0..classes).map(|_| rng.gen()).collect();
    let mut pixels = Vec::with_capacity(classes * per_class * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let c = i % classes;
        for &channel in &colors[c] {
            pixels.extend(std::iter::repeat(channel).take(1024));
        }
        labels.push(c as u8);
    }
    LabeledImageSet::new(pixels, labels).expect("generated extents are consistent")
}

/// Noisy class prototypes: each class owns a smooth random colour pattern;
/// images are the prototype with a small random circular shift, a random
/// brightness and contrast jitter, and per-pixel noise. Classes overlap
/// enough that retrieval is far from trivial.
pub fn textured(classes: usize, per_class: usize, noise: f64, seed: u64) -> LabeledImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..classes).map(|_| smooth_pattern(&mut rng)).collect();
    let n = classes * per_class;
    let mut pixels = Vec::with_capacity(n * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let (dy, dx) = (rng.gen_range(0..4usize), rng.gen_range(0..4usize));
        let gain = rng.gen_range(0.6..1.4);
        let offset = rng.gen_range(-0.2..0.2);
        let proto = &prototypes[c];
        for ch in 0..3 {
            for y in 0..32 {
                for x in 0..32 {
                    let v = proto[ch * 1024 + ((y + dy) % 32) * 32 + (x + dx) % 32];
                    let v = 0.5 + gain * (v - 0.5) + offset + noise * (rng.gen::<f64>() - 0.5);
                    pixels.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        labels.push(c as u8);
    }
    LabeledImageSet::new(pixels, labels).expect("generated extents are consistent")
}

fn smooth_pattern(rng: &mut ChaCha8Rng) -> Vec<f64> {
    // sum of a few random low-frequency planar waves per channel
    let mut out = vec![0.5; IMAGE_BYTES];
    for ch in 0..3 {
        for _ in 0..4 {
            let fy = rng.gen_range(0..4) as f64;
            let fx = rng.gen_range(0..4) as f64;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(0.05..0.15);
            for y in 0..32 {
                for x in 0..32 {
                    let t = std::f64::consts::TAU * (fy * y as f64 + fx * x as f64) / 32.0 + phase;
                    out[ch * 1024 + y * 32 + x] += amp * t.sin();
                }
            }
        }
    }
    out
}
