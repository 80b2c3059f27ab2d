mod common;

use common::coder_case;
use featlink_core::digital::{
    arithmetic_decode, arithmetic_encode, Bitstream, CodecError, Container, CONTAINER_HEADER_LEN,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip_is_exact(seed in any::<u64>(), len in 0usize..300) {
        let c = coder_case(seed, len);
        let stream = arithmetic_encode(&c.symbols, &c.tables).unwrap();
        prop_assert_eq!(arithmetic_decode(&stream, &c.tables, len).unwrap(), c.symbols);
    }

    #[test]
    fn length_never_exceeds_ideal_plus_32(seed in any::<u64>(), len in 0usize..300) {
        let c = coder_case(seed, len);
        let bits = arithmetic_encode(&c.symbols, &c.tables).unwrap().bit_len() as f64;
        let ideal = c.tables.ideal_bits(&c.symbols).unwrap();
        prop_assert!(bits <= ideal + 32.0, "{bits} coded vs {ideal} ideal");
    }

    #[test]
    fn corrupted_streams_terminate(seed in any::<u64>(), flip in any::<prop::sample::Index>()) {
        let c = coder_case(seed, 64);
        let stream = arithmetic_encode(&c.symbols, &c.tables).unwrap();
        prop_assume!(stream.bit_len() > 0);
        let mut bytes = stream.bytes().to_vec();
        let bit = flip.index(stream.bit_len());
        bytes[bit / 8] ^= 0x80 >> (bit % 8);
        let damaged = Bitstream::from_parts(bytes, stream.bit_len()).unwrap();
        // content is undefined; decoding must still return
        match arithmetic_decode(&damaged, &c.tables, 64) {
            Ok(s) => prop_assert_eq!(s.len(), 64),
            Err(e) => {
                let corrupt = matches!(e, CodecError::Corrupt { .. });
                prop_assert!(corrupt, "unexpected error {e}");
            }
        }
    }

    #[test]
    fn container_round_trip(seed in any::<u64>(), len in 0usize..200) {
        let c = coder_case(seed, len);
        let payload = arithmetic_encode(&c.symbols, &c.tables).unwrap();
        let box_ = Container { symbol_count: len as u32, latent_dim: c.tables.dims() as u16, payload };
        let bytes = box_.encode();
        prop_assert_eq!(bytes.len(), CONTAINER_HEADER_LEN + box_.payload.bytes().len());
        let back = Container::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &box_);
        let decoded = arithmetic_decode(&back.payload, &c.tables, back.symbol_count as usize).unwrap();
        prop_assert_eq!(decoded, c.symbols);
    }
}

#[test]
fn long_streams_stay_within_one_percent_of_ideal() {
    let mut excess = 0.0;
    let mut ideal_total = 0.0;
    for seed in 0..200 {
        let c = coder_case(seed, 1000);
        let bits = arithmetic_encode(&c.symbols, &c.tables).unwrap().bit_len() as f64;
        let ideal = c.tables.ideal_bits(&c.symbols).unwrap();
        assert!(bits <= 1.01 * ideal + 32.0, "seed {seed}: {bits} coded vs {ideal} ideal");
        excess += bits - ideal;
        ideal_total += ideal;
    }
    assert!(excess / ideal_total < 0.01, "average excess {}", excess / ideal_total);
}

#[test]
fn encoding_is_deterministic() {
    let c = coder_case(42, 500);
    let a = arithmetic_encode(&c.symbols, &c.tables).unwrap();
    let b = arithmetic_encode(&c.symbols, &c.tables).unwrap();
    assert_eq!(a, b);
}

#[test]
fn out_of_support_symbols_are_rejected() {
    let c = coder_case(1, 4);
    let l = c.tables.table(0).support();
    let err = arithmetic_encode(&[l + 1], &c.tables).unwrap_err();
    assert_eq!(err, CodecError::OutOfSupport { symbol: l + 1, support: l });
}
