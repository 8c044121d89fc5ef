use proptest::prelude::*;
use rram_baseband::modem::{bin_to_gray, gray_decode, gray_encode, gray_to_bin, qam16_demodulate, qam16_modulate};

fn bits_of(n: u64, width: usize) -> Vec<u8> {
    (0..width).rev().map(|i| ((n >> i) & 1) as u8).collect()
}

#[test]
fn gray_is_a_bijection_up_to_sixteen_bits() {
    for width in 1..=16usize {
        let mut seen = vec![false; 1 << width];
        for n in 0..(1u64 << width) {
            let g = bin_to_gray(&bits_of(n, width)).unwrap();
            let v = g.iter().fold(0usize, |acc, &b| acc << 1 | b as usize);
            assert!(!seen[v], "width {width}: code {v} repeated");
            seen[v] = true;
            assert_eq!(gray_to_bin(&g).unwrap(), bits_of(n, width));
            if n > 0 {
                let prev = bin_to_gray(&bits_of(n - 1, width)).unwrap();
                assert_eq!(prev.iter().zip(&g).filter(|(a, b)| a != b).count(), 1);
            }
        }
    }
}

proptest! {
    #[test]
    fn integer_codes_invert(n in any::<u64>()) {
        prop_assert_eq!(gray_decode(gray_encode(n)), n);
    }

    #[test]
    fn qam_round_trip(bits in prop::collection::vec(0u8..2, 0..64).prop_map(|mut b| { b.truncate(b.len() / 4 * 4); b })) {
        prop_assert_eq!(qam16_demodulate(&qam16_modulate(&bits).unwrap()), bits);
    }
}
