// Builds a small vault, erases every manifest link and rebuilds them from
// the watermarks alone.

use medmark::synth::modality_corpus;
use medmark::Vault;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut vault = Vault::init(dir.path()).unwrap();
    for (i, (class, img)) in modality_corpus(2, 96, 11).into_iter().enumerate() {
        let name = format!("{}-{i}.pgm", class.name());
        vault
            .add(&img, &name, &format!("PAT{i:03}"), &format!("/lob/{name}"))
            .unwrap();
    }
    let before = vault.manifest().clone();

    vault.manifest_mut().strip_links();
    vault.save().unwrap();
    println!("links erased; first record now {:?}", vault.records()[0]);

    let summary = vault.repair_links().unwrap();
    println!(
        "repair: {} verified, {} changed, {} adopted, {} unverified",
        summary.verified,
        summary.changed,
        summary.adopted.len(),
        summary.unverified.len()
    );
    assert_eq!(Vault::open(dir.path()).unwrap().manifest(), &before);

    let loaded = vault.load_record("PAT003").unwrap();
    println!(
        "PAT003 -> {} ({})",
        loaded.record.image_file, loaded.record.locator
    );
}
