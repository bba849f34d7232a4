//! Seeded synthetic grayscale images standing in for a real medical corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Low-frequency sinusoidal texture with ±1 dither, mimicking soft tissue.
pub fn smooth_texture(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.005..0.04),
                rng.random_range(0.005..0.04),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(8.0..22.0),
            )
        })
        .collect();
    let base = rng.random_range(90.0..150.0);
    GrayImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let v: f64 = waves
            .iter()
            .map(|&(fx, fy, ph, amp)| {
                amp * (std::f64::consts::TAU * (fx * xf + fy * yf) + ph).sin()
            })
            .sum();
        clamp_u8(base + v + rng.random_range(-1.0..=1.0))
    })
    .expect("nonzero dimensions")
}

/// Linear ramp plus uniform noise of the given amplitude.
pub fn noisy_gradient(width: usize, height: usize, seed: u64, noise: u8) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0.0..255.0);
    let gx = rng.random_range(-2.0..2.0);
    let gy = rng.random_range(-2.0..2.0);
    let amp = f64::from(noise);
    GrayImage::from_fn(width, height, |x, y| {
        let n = if noise == 0 {
            0.0
        } else {
            rng.random_range(-amp..=amp)
        };
        clamp_u8(start + gx * x as f64 + gy * y as f64 + n)
    })
    .expect("nonzero dimensions")
}

/// Image categories of the synthetic retrieval corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModalityClass {
    /// Bright, smooth elliptical mass on a dark background.
    Mammography,
    /// Elongated high-contrast bars with steep but continuous edges.
    Bone,
    /// Mid-gray ring structure with speckle.
    Cardiac,
}

impl ModalityClass {
    pub const ALL: [ModalityClass; 3] = [
        ModalityClass::Mammography,
        ModalityClass::Bone,
        ModalityClass::Cardiac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModalityClass::Mammography => "mammography",
            ModalityClass::Bone => "bone",
            ModalityClass::Cardiac => "cardiac",
        }
    }
}

pub fn modality_image(class: ModalityClass, size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    match class {
        ModalityClass::Mammography => {
            let cx = s * rng.random_range(0.35..0.65);
            let cy = s * rng.random_range(0.35..0.65);
            let rx = s * rng.random_range(0.25..0.35);
            let ry = s * rng.random_range(0.3..0.42);
            let peak = rng.random_range(170.0..200.0);
            let bg = rng.random_range(15.0..30.0);
            GrayImage::from_fn(size, size, |x, y| {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                let r2 = dx * dx + dy * dy;
                let v = bg + (peak - bg) * (-r2 * 1.5).exp();
                clamp_u8(v + rng.random_range(-2.0..=2.0))
            })
        }
        ModalityClass::Bone => {
            let period = s * rng.random_range(0.18..0.26);
            let width = period * rng.random_range(0.35..0.5);
            let angle = rng.random_range(-0.3..0.3f64);
            let (sa, ca) = angle.sin_cos();
            let hi = rng.random_range(200.0..225.0);
            let lo = rng.random_range(55.0..75.0);
            GrayImage::from_fn(size, size, |x, y| {
                let u = (x as f64 * ca + y as f64 * sa).rem_euclid(period);
                // signed distance to the nearest bar edge, positive inside
                let d = if u < width {
                    u.min(width - u)
                } else {
                    -(u - width).min(period - u)
                };
                let v = lo + (hi - lo) / (1.0 + (-d / 1.5).exp());
                clamp_u8(v + rng.random_range(-3.0..=3.0))
            })
        }
        ModalityClass::Cardiac => {
            let cx = s * rng.random_range(0.4..0.6);
            let cy = s * rng.random_range(0.4..0.6);
            let r = s * rng.random_range(0.22..0.3);
            let thick = s * rng.random_range(0.06..0.09);
            let wall = rng.random_range(140.0..160.0);
            let bg = rng.random_range(90.0..105.0);
            GrayImage::from_fn(size, size, |x, y| {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let t = ((d - r) / thick).powi(2);
                let v = bg + (wall - bg) * (-t).exp();
                clamp_u8(v + rng.random_range(-6.0..=6.0))
            })
        }
    }
    .expect("nonzero dimensions")
}

/// `per_class` images of each class, grouped by class, with their labels.
pub fn modality_corpus(
    per_class: usize,
    size: usize,
    seed: u64,
) -> Vec<(ModalityClass, GrayImage)> {
    let mut out = Vec::with_capacity(per_class * ModalityClass::ALL.len());
    for (ci, class) in ModalityClass::ALL.into_iter().enumerate() {
        for i in 0..per_class {
            let s = seed
                .wrapping_mul(1_000_003)
                .wrapping_add((ci * 10_000 + i) as u64);
            out.push((class, modality_image(class, size, s)));
        }
    }
    out
}
