// Content-based search over a watermarked vault and a precision/recall
// table over the three synthetic classes.

use medmark::retrieval::{pr_graph_string, search_by_code};
use medmark::synth::{modality_corpus, modality_image, ModalityClass};
use medmark::{
    precision_recall, search_by_features, ClassLabels, EvalConfig, Normalization, Vault,
    VaultSnapshot,
};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut vault = Vault::init(dir.path()).unwrap();
    let mut labels = ClassLabels::default();
    for (i, (class, img)) in modality_corpus(8, 128, 21).into_iter().enumerate() {
        let name = format!("img{i:02}.pgm");
        vault
            .add(&img, &name, &format!("PAT{i:02}"), &format!("/lob/{name}"))
            .unwrap();
        labels.insert(name, class.name());
    }
    let snapshot = VaultSnapshot::build(&vault);

    let hit = &search_by_code(&snapshot, "PAT05").unwrap().hits[0];
    println!(
        "PAT05 is {} (verified: {})",
        hit.record.image_file, hit.verified
    );

    let query = modality_image(ModalityClass::Cardiac, 128, 999);
    println!("nearest to an unseen cardiac image:");
    for h in search_by_features(&snapshot, &query, 5, Normalization::ZScore)
        .unwrap()
        .hits
    {
        println!(
            "  {} {:<12} {:.4}",
            h.record.image_file,
            labels.get(&h.record.image_file).unwrap(),
            h.distance
        );
    }

    let config = EvalConfig {
        cutoffs: vec![1, 4, 8, 16],
        ..EvalConfig::default()
    };
    let points = precision_recall(&vault, &snapshot, &labels, &config).unwrap();
    print!("{}", pr_graph_string(&points));
}
