mod common;

use std::path::Path;
use std::process::{Command, Output};

use medmark::synth::{noisy_gradient, smooth_texture};
use medmark::{extract, psnr, GrayImage};

fn medmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medmark"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap()
}

#[test]
fn embed_extract_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let [orig, marked, restored, dump] =
        ["orig.pgm", "marked.pgm", "restored.pgm", "payload.txt"].map(|n| dir.path().join(n));
    let img = smooth_texture(160, 120, 8);
    img.save(&orig).unwrap();

    let o = medmark(&[
        "embed",
        "--image",
        s(&orig),
        "--out",
        s(&marked),
        "--locator",
        "/lob/a.pgm",
        "--code",
        "P-77",
    ]);
    assert!(o.status.success(), "{o:?}");
    let report = stdout(&o);

    let o = medmark(&["verify", "--image", s(&marked)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "verified");

    let o = medmark(&[
        "extract",
        "--image",
        s(&marked),
        "--out-original",
        s(&restored),
        "--out-payload",
        s(&dump),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(GrayImage::load(&restored).unwrap(), img);
    let text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(field(&text, "patient_code"), "P-77");
    assert_eq!(field(&text, "locator"), "/lob/a.pgm");

    // the PSNR printed at embed time agrees with the psnr subcommand
    let o = medmark(&["psnr", s(&orig), s(&marked)]);
    assert_eq!(stdout(&o).trim(), field(&report, "psnr_db"));
    let lib = psnr(&img, &GrayImage::load(&marked).unwrap()).unwrap();
    assert_eq!(stdout(&o).trim(), lib.to_string());
    let o = medmark(&["psnr", s(&orig), s(&restored)]);
    assert_eq!(stdout(&o).trim(), "inf");
}

#[test]
fn tampered_image_exits_with_verification_code() {
    let dir = tempfile::tempdir().unwrap();
    let (orig, marked) = (dir.path().join("o.pgm"), dir.path().join("m.pgm"));
    smooth_texture(64, 64, 2).save(&orig).unwrap();
    assert!(medmark(&[
        "embed",
        "--image",
        s(&orig),
        "--out",
        s(&marked),
        "--code",
        "X"
    ])
    .status
    .success());

    let mut t = GrayImage::load(&marked).unwrap();
    let n = t.len();
    t.pixels_mut()[n - 5] ^= 1;
    t.save(&marked).unwrap();
    assert_eq!(
        medmark(&["verify", "--image", s(&marked)]).status.code(),
        Some(2)
    );
    // extract still dumps the decoded payload before reporting the failure
    let o = medmark(&["extract", "--image", s(&marked)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&stdout(&o), "patient_code"), "X");

    // an unwatermarked image is not authentic either
    assert_eq!(
        medmark(&["verify", "--image", s(&orig)]).status.code(),
        Some(2)
    );
}

#[test]
fn exit_codes_for_capacity_format_and_missing_records() {
    let dir = tempfile::tempdir().unwrap();
    let noisy = dir.path().join("noisy.pgm");
    noisy_gradient(32, 32, 1, 100).save(&noisy).unwrap();
    let out = dir.path().join("x.pgm");
    let o = medmark(&[
        "embed",
        "--image",
        s(&noisy),
        "--out",
        s(&out),
        "--code",
        "C",
    ]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(!out.exists());

    let junk = dir.path().join("junk.pgm");
    std::fs::write(&junk, b"P2\n2 2\n255\n0 0 0 0\n").unwrap();
    assert_eq!(
        medmark(&["verify", "--image", s(&junk)]).status.code(),
        Some(5)
    );
    assert_eq!(
        medmark(&["features", "--image", s(&dir.path().join("absent.pgm"))])
            .status
            .code(),
        Some(1)
    );

    let vault = dir.path().join("vault");
    assert!(medmark(&["vault", "init", s(&vault)]).status.success());
    assert_eq!(
        medmark(&["vault", "load", s(&vault), "--code", "NOPE"])
            .status
            .code(),
        Some(4)
    );
    std::fs::write(vault.join("manifest.json"), "{not json").unwrap();
    assert_eq!(
        medmark(&["vault", "load", s(&vault), "--code", "NOPE"])
            .status
            .code(),
        Some(5)
    );
}

#[test]
fn vault_workflow_through_the_cli() {
    let corpus = common::build_corpus(2, 64, 3);
    let v = s(corpus.vault.root());

    let o = medmark(&["vault", "search", v, "--code", "PAT001"]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.ends_with("\tverified")));

    let out = corpus.src.path().join("restored.pgm");
    let o = medmark(&["vault", "load", v, "--code", "PAT002", "--out", s(&out)]);
    assert!(o.status.success(), "{o:?}");
    let file = field(&stdout(&o), "image_file").to_string();
    assert_eq!(
        GrayImage::load(&out).unwrap(),
        GrayImage::load(corpus.src.path().join(&file)).unwrap()
    );

    // break every link, then rebuild them from the watermarks
    let before = std::fs::read_to_string(corpus.vault.manifest_path()).unwrap();
    let mut m = corpus.vault.manifest().clone();
    m.strip_links();
    std::fs::write(corpus.vault.manifest_path(), m.to_json()).unwrap();
    assert_eq!(
        medmark(&["vault", "load", v, "--code", "PAT002"])
            .status
            .code(),
        Some(4)
    );
    let o = medmark(&["vault", "repair", v]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).trim(),
        "verified: 6, changed: 6, adopted: 0, unverified: 0"
    );
    assert_eq!(
        std::fs::read_to_string(corpus.vault.manifest_path()).unwrap(),
        before
    );

    // tampering with a stored image is reported on load
    let stored = corpus.vault.image_path(&file);
    let mut t = GrayImage::load(&stored).unwrap();
    t.pixels_mut()[100] ^= 4;
    t.save(&stored).unwrap();
    assert_eq!(
        medmark(&["vault", "load", v, "--code", "PAT002"])
            .status
            .code(),
        Some(2)
    );
    let o = medmark(&["vault", "search", v, "--code", "PAT002"]);
    assert!(stdout(&o).contains("UNVERIFIED"));
}

#[test]
fn add_and_feature_query() {
    let dir = tempfile::tempdir().unwrap();
    let vault = dir.path().join("v");
    assert!(medmark(&["vault", "init", s(&vault)]).status.success());
    for i in 0..4 {
        let p = dir.path().join(format!("s{i}.pgm"));
        smooth_texture(64, 64, i).save(&p).unwrap();
        let o = medmark(&[
            "vault",
            "add",
            s(&vault),
            "--image",
            s(&p),
            "--code",
            &format!("C{i}"),
        ]);
        assert!(o.status.success(), "{o:?}");
    }
    let o = medmark(&[
        "vault",
        "add",
        s(&vault),
        "--image",
        s(&dir.path().join("s1.pgm")),
        "--code",
        "D",
    ]);
    assert!(!o.status.success());

    let o = medmark(&[
        "vault",
        "search",
        s(&vault),
        "--query",
        s(&dir.path().join("s2.pgm")),
        "--top",
        "2",
    ]);
    let out = stdout(&o);
    let first: Vec<&str> = out.lines().next().unwrap().split('\t').collect();
    assert_eq!(&first[..3], ["1", "s2.pgm", "C2"]);
    assert!(first[3].parse::<f64>().unwrap() < 1e-3);
    assert_eq!(out.lines().count(), 2);

    let marked = GrayImage::load(vault.join("images").join("s3.pgm")).unwrap();
    assert_eq!(extract(&marked).unwrap().payload.patient_code, "C3");
}
