// Embeds a payload into an image and recovers it.
//
// ```text
// cargo run --example embed_extract [input.pgm]
// ```
// Without an argument a synthetic 256x256 texture is used.

use medmark::{embed, extract, extract_features, psnr, GrayImage, Payload};

fn main() {
    let img = match std::env::args().nth(1) {
        Some(path) => GrayImage::load(&path).expect("readable 8-bit PGM"),
        None => medmark::synth::smooth_texture(256, 256, 2013),
    };
    demo(&img);
}

fn demo(img: &GrayImage) {
    let features = extract_features(img).expect("image has nonzero intensity");
    let payload = Payload::new(img, "/archive/lob/scan-0001.pgm", features, "PAT-0001");
    let (marked, report) = embed(img, &payload).expect("payload fits");
    println!(
        "embedded {} of {} usable bits ({} expanded pairs, {} overhead bits)",
        report.used_bits, report.capacity_bits, report.expanded_pairs, report.overhead_bits
    );
    println!("watermarked PSNR: {} dB", report.psnr_db);

    let out = extract(&marked).expect("watermark decodes");
    println!("verified: {}", out.verified);
    println!("recovered PSNR: {}", psnr(img, &out.restored).unwrap());
    print!("{}", out.payload.to_text());
    assert!(out.verified && out.restored == *img);
}
