//! Query the vault by patient code or by feature similarity, and measure
//! top-D precision/recall per image class.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{extract_features, FeatureError, FeatureVector};
use crate::image::GrayImage;
use crate::vault::{Vault, VaultRecord};

/// Cutoffs used when none are given.
pub const DEFAULT_CUTOFFS: [usize; 5] = [1, 5, 10, 20, 40];
/// Random queries drawn from each class during evaluation.
pub const QUERIES_PER_CLASS: usize = 5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unknown patient code {0:?}")]
    UnknownCode(String),
    #[error("vault has no searchable records")]
    EmptyVault,
    #[error("retrieval cutoff must be at least 1")]
    ZeroCutoff,
    #[error("no class label for {0:?}")]
    UnknownLabel(String),
    #[error("query image {0:?} could not be restored: {1}")]
    QueryUnavailable(String, String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("labels: {0}")]
    Labels(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// How feature components are scaled before the Euclidean distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    #[default]
    None,
    /// Per-component z-score over the vault's feature vectors.
    ZScore,
}

#[derive(Debug, Clone)]
pub struct IndexedRecord {
    pub record: VaultRecord,
    /// Dequantized features from the watermark, if it could be decoded.
    pub features: Option<FeatureVector>,
    pub verified: bool,
}

/// Read-only view of a vault with every watermark decoded once.
#[derive(Debug, Clone)]
pub struct VaultSnapshot {
    entries: Vec<IndexedRecord>,
}

impl VaultSnapshot {
    /// Authenticates every stored image. Features come from the watermark;
    /// an undecodable image falls back to the manifest's feature cache and
    /// stays unverified.
    pub fn build(vault: &Vault) -> Self {
        let cache = &vault.manifest().feature_cache;
        let entries = vault
            .records()
            .par_iter()
            .map(|r| {
                let loaded = vault.load(r);
                let features = loaded
                    .payload
                    .map(|p| p.features)
                    .or_else(|| cache.get(&r.image_file).copied());
                IndexedRecord {
                    record: r.clone(),
                    features,
                    verified: loaded.verified,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn from_entries(entries: Vec<IndexedRecord>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[IndexedRecord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryHit {
    /// Position of the record in the vault.
    pub index: usize,
    pub record: VaultRecord,
    pub distance: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryResult {
    pub hits: Vec<QueryHit>,
}

pub fn search_by_code(snapshot: &VaultSnapshot, code: &str) -> Result<QueryResult, RetrievalError> {
    let hits: Vec<QueryHit> = snapshot
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.record.patient_code == code)
        .map(|(index, e)| QueryHit {
            index,
            record: e.record.clone(),
            distance: 0.0,
            verified: e.verified,
        })
        .collect();
    if hits.is_empty() {
        return Err(RetrievalError::UnknownCode(code.to_string()));
    }
    Ok(QueryResult { hits })
}

struct Scaler {
    mean: [f64; FeatureVector::LEN],
    scale: [f64; FeatureVector::LEN],
}

impl Scaler {
    fn fit(vectors: &[[f64; FeatureVector::LEN]], norm: Normalization) -> Self {
        let mut s = Scaler {
            mean: [0.0; FeatureVector::LEN],
            scale: [1.0; FeatureVector::LEN],
        };
        if norm == Normalization::None || vectors.is_empty() {
            return s;
        }
        let n = vectors.len() as f64;
        for k in 0..FeatureVector::LEN {
            let mean = vectors.iter().map(|v| v[k]).sum::<f64>() / n;
            let var = vectors.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / n;
            s.mean[k] = mean;
            s.scale[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        s
    }

    fn apply(&self, v: &[f64; FeatureVector::LEN]) -> [f64; FeatureVector::LEN] {
        std::array::from_fn(|k| (v[k] - self.mean[k]) / self.scale[k])
    }
}

/// The `top` records nearest to `query` in non-decreasing distance, ties in
/// vault order. Records without features are not searchable.
pub fn rank_by_features(
    snapshot: &VaultSnapshot,
    query: &FeatureVector,
    top: usize,
    norm: Normalization,
) -> Result<QueryResult, RetrievalError> {
    if top == 0 {
        return Err(RetrievalError::ZeroCutoff);
    }
    let candidates: Vec<(usize, [f64; FeatureVector::LEN])> = snapshot
        .entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.features.map(|f| (i, f.to_array())))
        .collect();
    if candidates.is_empty() {
        return Err(RetrievalError::EmptyVault);
    }
    let vectors: Vec<_> = candidates.iter().map(|(_, v)| *v).collect();
    let scaler = Scaler::fit(&vectors, norm);
    let q = scaler.apply(&query.to_array());

    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .map(|(i, v)| {
            let v = scaler.apply(v);
            let d = v
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (*i, d)
        })
        .collect();
    // stable: equal distances keep vault order
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    scored.truncate(top);

    Ok(QueryResult {
        hits: scored
            .into_iter()
            .map(|(index, distance)| {
                let e = &snapshot.entries[index];
                QueryHit {
                    index,
                    record: e.record.clone(),
                    distance,
                    verified: e.verified,
                }
            })
            .collect(),
    })
}

/// Computes the query image's features and ranks the vault against them.
pub fn search_by_features(
    snapshot: &VaultSnapshot,
    query_img: &GrayImage,
    top: usize,
    norm: Normalization,
) -> Result<QueryResult, RetrievalError> {
    if top == 0 {
        return Err(RetrievalError::ZeroCutoff);
    }
    let f = extract_features(query_img)?;
    rank_by_features(snapshot, &f, top, norm)
}

/// Class name for each stored image file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassLabels {
    labels: BTreeMap<String, String>,
}

impl ClassLabels {
    pub fn insert(&mut self, image_file: impl Into<String>, class: impl Into<String>) {
        self.labels.insert(image_file.into(), class.into());
    }

    pub fn get(&self, image_file: &str) -> Option<&str> {
        self.labels.get(image_file).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One `<image_file> <class>` pair per line; blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, RetrievalError> {
        let mut out = ClassLabels::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(file), Some(class), None) => {
                    if out
                        .labels
                        .insert(file.to_string(), class.to_string())
                        .is_some()
                    {
                        return Err(RetrievalError::Labels(format!(
                            "line {}: duplicate label for {file}",
                            n + 1
                        )));
                    }
                }
                _ => {
                    return Err(RetrievalError::Labels(format!(
                        "line {}: expected `<image_file> <class>`",
                        n + 1
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        self.labels
            .iter()
            .map(|(f, c)| format!("{f} {c}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PRPoint {
    pub class: String,
    /// Retrieved-count cutoff.
    pub d: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub seed: u64,
    pub queries_per_class: usize,
    pub normalization: Normalization,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            seed: 0,
            queries_per_class: QUERIES_PER_CLASS,
            normalization: Normalization::None,
        }
    }
}

/// Picks the evaluation queries: for each class in name order, up to
/// `per_class` distinct vault indices drawn with a seeded RNG.
pub fn draw_queries(
    snapshot: &VaultSnapshot,
    labels: &ClassLabels,
    per_class: usize,
    seed: u64,
) -> Result<BTreeMap<String, Vec<usize>>, RetrievalError> {
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in snapshot.entries.iter().enumerate() {
        let class = labels
            .get(&e.record.image_file)
            .ok_or_else(|| RetrievalError::UnknownLabel(e.record.image_file.clone()))?;
        members.entry(class.to_string()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(members
        .into_iter()
        .map(|(class, idx)| {
            let k = per_class.min(idx.len());
            let mut picked: Vec<usize> = sample(&mut rng, idx.len(), k)
                .into_iter()
                .map(|j| idx[j])
                .collect();
            picked.sort_unstable();
            (class, picked)
        })
        .collect())
}

/// Mean top-D precision and recall per class. `query_features` supplies the
/// online features of the vault member at a given index.
pub fn precision_recall_with(
    snapshot: &VaultSnapshot,
    labels: &ClassLabels,
    config: &EvalConfig,
    mut query_features: impl FnMut(usize) -> Result<FeatureVector, RetrievalError>,
) -> Result<Vec<PRPoint>, RetrievalError> {
    if config.cutoffs.is_empty() || config.cutoffs.contains(&0) {
        return Err(RetrievalError::ZeroCutoff);
    }
    let queries = draw_queries(snapshot, labels, config.queries_per_class, config.seed)?;
    let class_of: Vec<&str> = snapshot
        .entries
        .iter()
        .map(|e| {
            labels
                .get(&e.record.image_file)
                .expect("checked by draw_queries")
        })
        .collect();
    let mut class_size: HashMap<&str, usize> = HashMap::new();
    for c in &class_of {
        *class_size.entry(c).or_default() += 1;
    }
    let max_d = *config.cutoffs.iter().max().unwrap();

    let mut points = Vec::new();
    for (class, picked) in &queries {
        let size = class_size[class.as_str()] as f64;
        let mut sums = vec![(0.0f64, 0.0f64); config.cutoffs.len()];
        for &q in picked {
            let f = query_features(q)?;
            let ranked = rank_by_features(snapshot, &f, max_d, config.normalization)?;
            for (slot, &d) in config.cutoffs.iter().enumerate() {
                let relevant = ranked
                    .hits
                    .iter()
                    .take(d)
                    .filter(|h| class_of[h.index] == class)
                    .count() as f64;
                sums[slot].0 += relevant / size;
                sums[slot].1 += relevant / d as f64;
            }
        }
        let n = picked.len().max(1) as f64;
        for (slot, &d) in config.cutoffs.iter().enumerate() {
            points.push(PRPoint {
                class: class.clone(),
                d,
                recall: sums[slot].0 / n,
                precision: sums[slot].1 / n,
            });
        }
    }
    Ok(points)
}

/// Evaluation over a vault: each query is the restored original of a vault
/// member, with features computed online.
pub fn precision_recall(
    vault: &Vault,
    snapshot: &VaultSnapshot,
    labels: &ClassLabels,
    config: &EvalConfig,
) -> Result<Vec<PRPoint>, RetrievalError> {
    precision_recall_with(snapshot, labels, config, |i| {
        let record = &snapshot.entries[i].record;
        let loaded = vault.load(record);
        let img = loaded.restored.ok_or_else(|| {
            RetrievalError::QueryUnavailable(
                record.image_file.clone(),
                loaded.diagnostic.unwrap_or_default(),
            )
        })?;
        Ok(extract_features(&img)?)
    })
}

/// CSV with header `class,D,recall,precision`, one row per point.
pub fn pr_graph_export<W: Write>(points: &[PRPoint], writer: W) -> Result<(), RetrievalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["class", "D", "recall", "precision"])?;
    for p in points {
        w.write_record([
            p.class.clone(),
            p.d.to_string(),
            p.recall.to_string(),
            p.precision.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn pr_graph_string(points: &[PRPoint]) -> String {
    let mut out = Vec::new();
    pr_graph_export(points, &mut out).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("csv output is UTF-8")
}

pub fn pr_graph_import<R: Read>(reader: R) -> Result<Vec<PRPoint>, RetrievalError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let field = |i: usize| {
            row.get(i)
                .ok_or_else(|| RetrievalError::Labels(format!("short csv row {row:?}")))
        };
        let parse_err =
            |e: &dyn std::fmt::Display| RetrievalError::Labels(format!("bad csv value: {e}"));
        out.push(PRPoint {
            class: field(0)?.to_string(),
            d: field(1)?.parse().map_err(|e| parse_err(&e))?,
            recall: field(2)?.parse().map_err(|e| parse_err(&e))?,
            precision: field(3)?.parse().map_err(|e| parse_err(&e))?,
        });
    }
    Ok(out)
}
