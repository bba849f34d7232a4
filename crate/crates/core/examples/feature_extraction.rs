// Prints the ten texture and shape features for one image of each
// synthetic modality.

use medmark::synth::{modality_image, ModalityClass};
use medmark::{extract_features, FeatureVector};

fn main() {
    print!("{:<16}", "feature");
    for class in ModalityClass::ALL {
        print!("{:>16}", class.name());
    }
    println!();
    let vectors: Vec<FeatureVector> = ModalityClass::ALL
        .into_iter()
        .map(|c| extract_features(&modality_image(c, 128, 1)).unwrap())
        .collect();
    for (k, name) in FeatureVector::NAMES.iter().enumerate() {
        print!("{name:<16}");
        for v in &vectors {
            print!("{:>16.6}", v.to_array()[k]);
        }
        println!();
    }
}
