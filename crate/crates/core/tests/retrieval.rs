mod common;

use std::collections::BTreeMap;

use medmark::features::FeatureVector;
use medmark::retrieval::{
    pr_graph_import, pr_graph_string, rank_by_features, search_by_code, IndexedRecord,
};
use medmark::{
    extract_features, precision_recall, search_by_features, EvalConfig, Normalization,
    RecordStatus, VaultRecord, VaultSnapshot,
};
use rand::seq::index::sample;

use common::*;

#[test]
fn each_original_finds_its_own_record_first() {
    let corpus = build_corpus(6, 96, 31);
    let snapshot = VaultSnapshot::build(&corpus.vault);
    let bound = 10f64.sqrt() * 2f64.powi(-17);
    let mut same_class = 0;
    for (i, rec) in corpus.vault.records().iter().enumerate() {
        let original = medmark::GrayImage::load(corpus.src.path().join(&rec.image_file)).unwrap();
        let r = search_by_features(&snapshot, &original, 2, Normalization::None).unwrap();
        assert_eq!(r.hits[0].index, i);
        assert!(
            r.hits[0].distance <= bound,
            "{} > {bound}",
            r.hits[0].distance
        );
        assert!(r.hits[0].distance <= r.hits[1].distance);
        same_class += usize::from(corpus.classes[r.hits[1].index] == corpus.classes[i]);
    }
    let n = corpus.vault.records().len();
    assert!(same_class * 10 >= n * 9, "{same_class}/{n}");
}

#[test]
fn code_search_and_oversized_cutoffs() {
    let corpus = build_corpus(2, 64, 8);
    let snapshot = VaultSnapshot::build(&corpus.vault);
    let hits = search_by_code(&snapshot, "PAT001").unwrap().hits;
    let files: Vec<&str> = hits.iter().map(|h| h.record.image_file.as_str()).collect();
    assert_eq!(files, ["img002.pgm", "img003.pgm"]);
    assert!(hits.iter().all(|h| h.verified && h.distance == 0.0));
    assert!(search_by_code(&snapshot, "PAT999").is_err());

    let q = snapshot.entries()[0].features.unwrap();
    let all = rank_by_features(&snapshot, &q, 1000, Normalization::None).unwrap();
    assert_eq!(all.hits.len(), 6);
    assert!(all.hits.windows(2).all(|w| w[0].distance <= w[1].distance));
    assert!(rank_by_features(&snapshot, &q, 0, Normalization::None).is_err());
}

fn entry(name: &str, v: [f64; 10]) -> IndexedRecord {
    IndexedRecord {
        record: VaultRecord {
            patient_code: name.to_uppercase(),
            locator: String::new(),
            image_file: name.to_string(),
            status: RecordStatus::Watermarked,
        },
        features: Some(FeatureVector::from_array(v)),
        verified: true,
    }
}

#[test]
fn ties_keep_vault_order_and_zscore_matches_hand_computation() {
    let mut a = [0.0; 10];
    let mut b = [0.0; 10];
    let mut c = [0.0; 10];
    a[0] = 1.0;
    b[0] = -1.0;
    c[1] = 100.0;
    let snapshot = VaultSnapshot::from_entries(vec![entry("a", a), entry("b", b), entry("c", c)]);
    let q = FeatureVector::zeros();

    let r = rank_by_features(&snapshot, &q, 3, Normalization::None).unwrap();
    let order: Vec<usize> = r.hits.iter().map(|h| h.index).collect();
    assert_eq!(order, [0, 1, 2]);
    assert_eq!(r.hits[2].distance, 100.0);

    // component 0: mean 0, population sd sqrt(2/3); component 1: mean 100/3, sd 100*sqrt(2)/3
    let r = rank_by_features(&snapshot, &q, 3, Normalization::ZScore).unwrap();
    let s0 = (2.0f64 / 3.0).sqrt();
    let s1 = 100.0 * 2f64.sqrt() / 3.0;
    // a and b differ from the query only in component 0, c only in component 1
    let d_ab = 1.0 / s0;
    let d_c = 100.0 / s1;
    assert!(rel_close(r.hits[0].distance, d_ab, 1e-12));
    assert_eq!((r.hits[0].index, r.hits[1].index), (0, 1));
    assert_eq!(r.hits[2].index, 2);
    assert!(rel_close(r.hits[2].distance, d_c, 1e-12));
}

#[test]
fn precision_recall_matches_brute_force() {
    let corpus = build_corpus(7, 96, 77);
    let snapshot = VaultSnapshot::build(&corpus.vault);
    let config = EvalConfig {
        cutoffs: vec![1, 3, 7, 12, 30],
        seed: 5,
        ..EvalConfig::default()
    };
    let points = precision_recall(&corpus.vault, &snapshot, &corpus.labels, &config).unwrap();

    let feats: Vec<[f64; 10]> = snapshot
        .entries()
        .iter()
        .map(|e| e.features.unwrap().to_array())
        .collect();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in corpus.classes.iter().enumerate() {
        members.entry(c.name()).or_default().push(i);
    }
    let mut rng = rng(5);
    let mut expected = Vec::new();
    for (class, idx) in &members {
        let queries: Vec<usize> = sample(&mut rng, idx.len(), 5)
            .into_iter()
            .map(|j| idx[j])
            .collect();
        for &d in &config.cutoffs {
            let (mut r, mut p) = (0.0, 0.0);
            for &q in &queries {
                let orig =
                    medmark::GrayImage::load(corpus.src.path().join(format!("img{q:03}.pgm")))
                        .unwrap();
                let f = extract_features(&orig).unwrap().to_array();
                let mut order: Vec<(f64, usize)> = feats
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        (
                            g.iter()
                                .zip(&f)
                                .map(|(x, y)| (x - y).powi(2))
                                .sum::<f64>()
                                .sqrt(),
                            i,
                        )
                    })
                    .collect();
                order.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let rel = order
                    .iter()
                    .take(d)
                    .filter(|(_, i)| corpus.classes[*i].name() == *class)
                    .count() as f64;
                r += rel / idx.len() as f64;
                p += rel / d as f64;
            }
            expected.push((class.to_string(), d, r / 5.0, p / 5.0));
        }
    }
    assert_eq!(points.len(), expected.len());
    for (got, (class, d, r, p)) in points.iter().zip(&expected) {
        assert_eq!((&got.class, got.d), (class, *d));
        assert!(
            rel_close(got.recall, *r, 1e-12) && rel_close(got.precision, *p, 1e-12),
            "{got:?} vs {r} {p}"
        );
    }

    let csv = pr_graph_string(&points);
    assert!(csv.starts_with("class,D,recall,precision\n"));
    assert_eq!(pr_graph_import(csv.as_bytes()).unwrap(), points);
}
