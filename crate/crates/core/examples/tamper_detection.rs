// Flips single bits of a watermarked image and checks that each change is
// caught by authentication.

use medmark::{authenticate, embed, extract_features, Authentication, Payload};

fn main() {
    let img = medmark::synth::smooth_texture(128, 128, 9);
    let payload = Payload::new(&img, "/lob/t.pgm", extract_features(&img).unwrap(), "T-9");
    let (marked, _) = embed(&img, &payload).unwrap();
    println!("untouched: {}", describe(&authenticate(&marked)));

    let n = marked.len();
    for (i, bit) in [(0, 0), (n / 3, 0), (n / 2, 7), (n - 1, 3)] {
        let mut t = marked.clone();
        t.pixels_mut()[i] ^= 1 << bit;
        let verdict = authenticate(&t);
        println!("pixel {i:>5} bit {bit}: {}", describe(&verdict));
        assert!(!verdict.is_verified());
    }
}

fn describe(a: &Authentication) -> String {
    match a {
        Authentication::Verified(_) => "verified".into(),
        Authentication::Mismatch(_) => "decoded, hash mismatch".into(),
        Authentication::Undecodable(e) => format!("undecodable ({e})"),
    }
}
