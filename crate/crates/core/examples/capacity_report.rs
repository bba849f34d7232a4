// How noise affects embedding capacity and location-map size.

use medmark::capacity;
use medmark::location_map::{build_map, compress};
use medmark::synth::noisy_gradient;
use medmark::watermark::pair_scan;

fn main() {
    println!("noise  expandable  changeable  unchangeable  map_bits  usable_bits");
    for noise in [0u8, 2, 8, 32, 96] {
        let img = noisy_gradient(128, 128, 3, noise);
        let c = capacity(&img);
        let scan = pair_scan(&img);
        let selected: Vec<bool> = scan.classes.iter().map(|c| c.is_expandable()).collect();
        let map = compress(&build_map(&scan.classes, &selected).unwrap());
        assert_eq!(8 * map.serialized_len(), c.map_bits);
        println!(
            "{noise:>5}  {:>10}  {:>10}  {:>12}  {:>8}  {:>11}",
            c.expandable,
            c.changeable,
            c.unchangeable,
            c.map_bits,
            c.usable_bits()
        );
    }
}
