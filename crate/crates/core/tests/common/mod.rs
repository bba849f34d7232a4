//! Independent reference computations and fixtures for integration tests.
//! Nothing here calls into the library's feature or codec internals.

#![allow(dead_code)]

use std::path::Path;

use medmark::synth::{modality_corpus, ModalityClass};
use medmark::{ClassLabels, CodeMap, GrayImage, Vault};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random()).unwrap()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Brute-force features, ordered as `FeatureVector::to_array`.
pub fn oracle_features(img: &GrayImage) -> [f64; 10] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let px = |x: i64, y: i64| img.pixels()[(y * w + x) as usize];

    // Every ordered pair of 8-connected neighbours; each unordered pair is
    // seen once from each end, which is the symmetric four-angle matrix.
    let mut glcm = vec![vec![0u64; 64]; 64];
    let mut total = 0u64;
    for y1 in 0..h {
        for x1 in 0..w {
            for y2 in 0..h {
                for x2 in 0..w {
                    let (dx, dy) = (x2 - x1, y2 - y1);
                    if (dx, dy) != (0, 0) && dx.abs() <= 1 && dy.abs() <= 1 {
                        glcm[(px(x1, y1) / 4) as usize][(px(x2, y2) / 4) as usize] += 1;
                        total += 1;
                    }
                }
            }
        }
    }
    if total == 0 {
        let q = (img.pixels()[0] / 4) as usize;
        glcm[q][q] = 1;
        total = 1;
    }
    let mut pdiff = [0.0f64; 64];
    for (i, row) in glcm.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            pdiff[i.abs_diff(j)] += c as f64 / total as f64;
        }
    }
    let ek: f64 = pdiff.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let ek2: f64 = pdiff
        .iter()
        .enumerate()
        .map(|(k, p)| (k * k) as f64 * p)
        .sum();
    let dvar = ek2 - ek * ek;
    let dent: f64 = pdiff
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln() / std::f64::consts::LN_2)
        .sum::<f64>()
        .max(0.0);

    // gray-level statistics from the histogram
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let n = img.len() as f64;
    let mean = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum::<f64>()
        / n;
    let cm = |k: i32| {
        hist.iter()
            .enumerate()
            .map(|(v, &c)| c as f64 * (v as f64 - mean).powi(k))
            .sum::<f64>()
            / n
    };
    let (m2, m3, m4) = (cm(2), cm(3), cm(4));
    let sd = m2.sqrt();
    let (skew, kurt) = if sd == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / sd.powi(3), m4 / (m2 * m2))
    };

    // Image moments in exact integers: mu_pq * M00^(p+q) =
    //   sum_{i,j} C(p,i) C(q,j) (-M10)^(p-i) (-M01)^(q-j) M00^(i+j) M_ij
    let mut raw = [[0i128; 5]; 5];
    for y in 0..h {
        for x in 0..w {
            let v = px(x, y) as i128;
            for (i, row) in raw.iter_mut().enumerate() {
                for (j, m) in row.iter_mut().enumerate() {
                    if i + j <= 4 {
                        *m += (x as i128).pow(i as u32) * (y as i128).pow(j as u32) * v;
                    }
                }
            }
        }
    }
    let (m00, m10, m01) = (raw[0][0], raw[1][0], raw[0][1]);
    let binom = |n: usize, k: usize| -> i128 {
        (1..=k).fold(1i128, |acc, t| acc * (n + 1 - t) as i128 / t as i128)
    };
    let scaled_mu = |p: usize, q: usize| -> i128 {
        let mut s = 0i128;
        for (i, row) in raw.iter().enumerate().take(p + 1) {
            for (j, &m) in row.iter().enumerate().take(q + 1) {
                s += binom(p, i)
                    * binom(q, j)
                    * (-m10).pow((p - i) as u32)
                    * (-m01).pow((q - j) as u32)
                    * m00.pow((i + j) as u32)
                    * m;
            }
        }
        s
    };
    let mut means = [0.0f64; 4];
    for order in 1..=4usize {
        let mass = m00 as f64;
        let eta_sum: f64 = (0..=order)
            .map(|p| {
                let mu = scaled_mu(p, order - p) as f64 / mass.powi(order as i32);
                mu / mass.powf(1.0 + order as f64 / 2.0)
            })
            .sum();
        means[order - 1] = eta_sum / (order + 1) as f64;
    }

    [
        dvar, dent, mean, sd, skew, kurt, means[0], means[1], means[2], means[3],
    ]
}

/// Largest admissible difference found by trying every gray-level pair.
fn reconstructs(l: i32, h: i32) -> bool {
    let x = l + (h + 1).div_euclid(2);
    let y = l - h.div_euclid(2);
    (0..=255).contains(&x) && (0..=255).contains(&y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCapacity {
    pub expandable: usize,
    pub changeable_only: usize,
    pub map_bits: usize,
    pub usable: usize,
}

fn varint_len(mut v: usize) -> usize {
    let mut n = 1;
    while v >= 0x80 {
        v >>= 7;
        n += 1;
    }
    n
}

/// Per-pair brute-force capacity under the expand-all policy.
pub fn oracle_capacity(img: &GrayImage) -> OracleCapacity {
    let mut map = Vec::new();
    let (mut expandable, mut changeable_only) = (0, 0);
    for y in 0..img.height() {
        for k in 0..img.width() / 2 {
            let (a, b) = (img.get(2 * k, y) as i32, img.get(2 * k + 1, y) as i32);
            let l = (a + b).div_euclid(2);
            let h = a - b;
            let exp = [0, 1].iter().all(|&bit| reconstructs(l, 2 * h + bit));
            let base = 2 * h.div_euclid(2);
            let chg = [0, 1].iter().all(|&bit| reconstructs(l, base + bit));
            map.push(exp);
            if exp {
                expandable += 1;
            } else if chg {
                changeable_only += 1;
            }
        }
    }
    // run-length body: first run counts zeros (maybe empty), then alternate
    let mut runs = Vec::new();
    let mut cur = false;
    let mut len = 0usize;
    for &b in &map {
        if b == cur {
            len += 1;
        } else {
            runs.push(len);
            cur = b;
            len = 1;
        }
    }
    if len > 0 {
        runs.push(len);
    }
    let rle: usize = runs.iter().map(|&r| varint_len(r)).sum();
    let raw = map.len().div_ceil(8);
    let map_bits = 8 * (5 + if rle < raw { rle } else { raw });
    let slots = expandable + changeable_only;
    OracleCapacity {
        expandable,
        changeable_only,
        map_bits,
        usable: slots.saturating_sub(map_bits + changeable_only),
    }
}

pub struct Corpus {
    pub src: tempfile::TempDir,
    pub vault_dir: tempfile::TempDir,
    pub vault: Vault,
    pub labels: ClassLabels,
    pub classes: Vec<ModalityClass>,
}

/// Writes a labelled synthetic corpus to disk and watermarks it into a
/// fresh vault, two images per patient code.
pub fn build_corpus(per_class: usize, size: usize, seed: u64) -> Corpus {
    let src = tempfile::tempdir().unwrap();
    let vault_dir = tempfile::tempdir().unwrap();
    let mut codes = CodeMap::default();
    let mut labels = ClassLabels::default();
    let mut classes = Vec::new();
    for (i, (class, img)) in modality_corpus(per_class, size, seed)
        .into_iter()
        .enumerate()
    {
        let name = format!("img{i:03}.pgm");
        img.save(src.path().join(&name)).unwrap();
        codes.insert(
            &name,
            format!("PAT{:03}", i / 2),
            format!("/lob/{}/{name}", class.name()),
        );
        labels.insert(&name, class.name());
        classes.push(class);
    }
    let mut vault = Vault::init(vault_dir.path()).unwrap();
    let summary = vault.watermark_all(src.path(), &codes).unwrap();
    assert!(
        summary.skipped.is_empty() && summary.failed.is_empty(),
        "{summary:?}"
    );
    Corpus {
        src,
        vault_dir,
        vault,
        labels,
        classes,
    }
}

pub fn write_labels(labels: &ClassLabels, path: &Path) {
    std::fs::write(path, labels.to_text()).unwrap();
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
