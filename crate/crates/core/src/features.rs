//! Texture and shape descriptors used for similarity search.
//!
//! The vector has ten components: two co-occurrence statistics (difference
//! variance and difference entropy), four gray-level moments (mean, standard
//! deviation, skewness, kurtosis), and the mean normalized central image
//! moment of each order 1 through 4.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;

/// Number of quantized gray levels in the co-occurrence matrix.
pub const GLCM_LEVELS: usize = 64;

/// Distance-1 neighbour offsets at 0°, 45°, 90° and 135°. Each is counted in
/// both directions, so the sign of an offset does not matter.
const OFFSETS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, 1), (1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("image has zero total intensity; image moments are undefined")]
    ZeroIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub diff_variance: f64,
    pub diff_entropy: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub moment_mean_1: f64,
    pub moment_mean_2: f64,
    pub moment_mean_3: f64,
    pub moment_mean_4: f64,
}

impl FeatureVector {
    pub const LEN: usize = 10;

    pub const NAMES: [&'static str; Self::LEN] = [
        "diff_variance",
        "diff_entropy",
        "mean",
        "std_dev",
        "skewness",
        "kurtosis",
        "moment_mean_1",
        "moment_mean_2",
        "moment_mean_3",
        "moment_mean_4",
    ];

    pub fn zeros() -> Self {
        Self::from_array([0.0; Self::LEN])
    }

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.diff_variance,
            self.diff_entropy,
            self.mean,
            self.std_dev,
            self.skewness,
            self.kurtosis,
            self.moment_mean_1,
            self.moment_mean_2,
            self.moment_mean_3,
            self.moment_mean_4,
        ]
    }

    pub fn from_array(v: [f64; Self::LEN]) -> Self {
        Self {
            diff_variance: v[0],
            diff_entropy: v[1],
            mean: v[2],
            std_dev: v[3],
            skewness: v[4],
            kurtosis: v[5],
            moment_mean_1: v[6],
            moment_mean_2: v[7],
            moment_mean_3: v[8],
            moment_mean_4: v[9],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn euclidean_distance(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Symmetric, normalized gray-level co-occurrence matrix over
/// [`GLCM_LEVELS`] bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    p: Vec<f64>,
}

impl CooccurrenceMatrix {
    pub fn levels(&self) -> usize {
        GLCM_LEVELS
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * GLCM_LEVELS + j]
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }

    /// `p_diff(k) = sum over |i - j| = k of p(i, j)`.
    pub fn difference_distribution(&self) -> [f64; GLCM_LEVELS] {
        let mut d = [0.0; GLCM_LEVELS];
        for i in 0..GLCM_LEVELS {
            for j in 0..GLCM_LEVELS {
                d[i.abs_diff(j)] += self.p[i * GLCM_LEVELS + j];
            }
        }
        d
    }
}

#[inline]
pub fn quantize(level: u8) -> usize {
    usize::from(level) * GLCM_LEVELS / 256
}

/// Pools symmetric counts from the four distance-1 offsets and normalizes
/// the total. A 1×1 image has no neighbour pairs and is treated as constant.
pub fn cooccurrence(img: &GrayImage) -> Result<CooccurrenceMatrix, FeatureError> {
    if img.is_empty() {
        return Err(FeatureError::EmptyImage);
    }
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut counts = vec![0u64; GLCM_LEVELS * GLCM_LEVELS];
    let mut total = 0u64;
    for y in 0..h {
        for x in 0..w {
            let a = quantize(img.get(x as usize, y as usize));
            for (dx, dy) in OFFSETS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let b = quantize(img.get(nx as usize, ny as usize));
                counts[a * GLCM_LEVELS + b] += 1;
                counts[b * GLCM_LEVELS + a] += 1;
                total += 2;
            }
        }
    }
    if total == 0 {
        let q = quantize(img.pixels()[0]);
        counts[q * GLCM_LEVELS + q] = 1;
        total = 1;
    }
    let norm = total as f64;
    Ok(CooccurrenceMatrix {
        p: counts.into_iter().map(|c| c as f64 / norm).collect(),
    })
}

/// Entropy (bits) of the gray-level difference distribution.
pub fn difference_entropy(m: &CooccurrenceMatrix) -> f64 {
    let h: f64 = m
        .difference_distribution()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    // -0.0 for a single-valued distribution
    h.max(0.0)
}

pub fn difference_variance(m: &CooccurrenceMatrix) -> f64 {
    let d = m.difference_distribution();
    let mu: f64 = d.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    d.iter()
        .enumerate()
        .map(|(k, p)| (k as f64 - mu).powi(2) * p)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrayMoments {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Population statistics of the raw gray levels. Skewness and kurtosis are
/// 0 when the image is constant.
pub fn gray_moments(img: &GrayImage) -> Result<GrayMoments, FeatureError> {
    if img.is_empty() {
        return Err(FeatureError::EmptyImage);
    }
    let n = img.len() as f64;
    let mean = img.pixels().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in img.pixels() {
        let d = f64::from(v) - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let std_dev = m2.sqrt();
    if std_dev == 0.0 {
        return Ok(GrayMoments {
            mean,
            std_dev: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        });
    }
    Ok(GrayMoments {
        mean,
        std_dev,
        skewness: m3 / (m2 * std_dev),
        kurtosis: m4 / (m2 * m2),
    })
}

/// Mean of the normalized central moments `eta_pq` for each order
/// `p + q = 1..=4`, with `x` the column and `y` the row index.
///
/// Order 1 is returned as exactly 0: first-order central moments vanish at
/// the centroid.
pub fn moment_means(img: &GrayImage) -> Result<[f64; 4], FeatureError> {
    if img.is_empty() {
        return Err(FeatureError::EmptyImage);
    }
    let (mut m00, mut m10, mut m01) = (0u64, 0u64, 0u64);
    for y in 0..img.height() {
        for (x, &v) in img.row(y).iter().enumerate() {
            let v = u64::from(v);
            m00 += v;
            m10 += x as u64 * v;
            m01 += y as u64 * v;
        }
    }
    if m00 == 0 {
        return Err(FeatureError::ZeroIntensity);
    }
    let mass = m00 as f64;
    let cx = m10 as f64 / mass;
    let cy = m01 as f64 / mass;

    // central[p][q] for p + q in 2..=4
    let mut central = [[0.0f64; 5]; 5];
    for y in 0..img.height() {
        let dy = y as f64 - cy;
        let py = [1.0, dy, dy * dy, dy * dy * dy, dy * dy * dy * dy];
        for (x, &v) in img.row(y).iter().enumerate() {
            if v == 0 {
                continue;
            }
            let v = f64::from(v);
            let dx = x as f64 - cx;
            let px = [1.0, dx, dx * dx, dx * dx * dx, dx * dx * dx * dx];
            for p in 0..=4 {
                for q in 0..=(4 - p) {
                    if p + q >= 2 {
                        central[p][q] += px[p] * py[q] * v;
                    }
                }
            }
        }
    }

    let mut out = [0.0; 4];
    for order in 2..=4usize {
        let norm = mass.powf(1.0 + order as f64 / 2.0);
        let sum: f64 = (0..=order).map(|p| central[p][order - p] / norm).sum();
        out[order - 1] = sum / (order + 1) as f64;
    }
    Ok(out)
}

pub fn extract_features(img: &GrayImage) -> Result<FeatureVector, FeatureError> {
    let glcm = cooccurrence(img)?;
    let g = gray_moments(img)?;
    let m = moment_means(img)?;
    Ok(FeatureVector {
        diff_variance: difference_variance(&glcm),
        diff_entropy: difference_entropy(&glcm),
        mean: g.mean,
        std_dev: g.std_dev,
        skewness: g.skewness,
        kurtosis: g.kurtosis,
        moment_mean_1: m[0],
        moment_mean_2: m[1],
        moment_mean_3: m[2],
        moment_mean_4: m[3],
    })
}
