use std::time::Instant;

use lisps_core::edge::{FeatureRecord, FrameFeatureSet, QuantizedBox};
use lisps_core::wire::{decode_frame, encode_frame, Decoded, FrameDecoder};
use lisps_core::Fixed3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(rng: &mut ChaCha8Rng) -> FrameFeatureSet {
    let cams = ["cam-01", "cam_2", "lobby.north", "C"];
    let ts = Fixed3::from_millis(rng.gen_range(0..4_000_000_000_000));
    let mut f = FrameFeatureSet::empty(rng.gen_range(0..1_000_000), cams[rng.gen_range(0..cams.len())], ts);
    for _ in 0..rng.gen_range(0..12) {
        let x0 = rng.gen_range(0..640_000);
        let y0 = rng.gen_range(0..480_000);
        f.insert(FeatureRecord {
            object_id: Fixed3::from_millis(rng.gen_range(0..4_000_000_000_000)),
            speed: Fixed3::from_millis(rng.gen_range(0..100_000)),
            direction_changes: rng.gen(),
            dwell: Fixed3::from_millis(rng.gen_range(0..10_000_000)),
            bbox: QuantizedBox {
                x_min: Fixed3::from_millis(x0),
                y_min: Fixed3::from_millis(y0),
                x_max: Fixed3::from_millis(x0 + rng.gen_range(1..200_000)),
                y_max: Fixed3::from_millis(y0 + rng.gen_range(1..200_000)),
            },
        });
    }
    f
}

/// Splits `bytes` at random points into chunks of 1..=64 bytes.
fn chunks<'a>(bytes: &'a [u8], rng: &mut ChaCha8Rng) -> Vec<&'a [u8]> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let n = rng.gen_range(1..=64).min(rest.len());
        let (a, b) = rest.split_at(n);
        out.push(a);
        rest = b;
    }
    out
}

#[test]
fn thousand_random_frames_round_trip_and_survive_chunking() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frames: Vec<FrameFeatureSet> = (0..1000).map(|_| random_frame(&mut rng)).collect();
    let mut stream = Vec::new();
    for f in &frames {
        let bytes = encode_frame(f);
        assert_eq!(decode_frame(&bytes), Ok(Decoded::Complete(f.clone(), bytes.len())));
        stream.extend_from_slice(&bytes);
    }
    for _ in 0..3 {
        let mut d = FrameDecoder::new();
        let mut got = Vec::new();
        for c in chunks(&stream, &mut rng) {
            d.push(c);
            while let Some(r) = d.next_frame() {
                got.push(r.unwrap().frame);
            }
        }
        assert_eq!(got, frames);
        assert_eq!(d.pending(), 0);
    }
    assert!(started.elapsed().as_secs() < 10);
}

#[test]
fn reference_bytes() {
    let mut f = FrameFeatureSet::empty(12, "cam-01", Fixed3::from_millis(1_600_000_000_200));
    f.insert(FeatureRecord {
        object_id: Fixed3::from_millis(1_600_000_000_000),
        speed: Fixed3::from_millis(5_000),
        direction_changes: 0,
        dwell: Fixed3::from_millis(200),
        bbox: QuantizedBox {
            x_min: Fixed3::from_millis(10_000),
            y_min: Fixed3::from_millis(20_000),
            x_max: Fixed3::from_millis(50_000),
            y_max: Fixed3::from_millis(120_000),
        },
    });
    assert_eq!(
        encode_frame(&f),
        b"FRAME 12\nCAM cam-01\nTS 1600000000.200\nOBJ 1600000000.000 SPEED=5.000 DIRCH=0 DWELL=0.200 BBOX=10.000,20.000,50.000,120.000\nEND 12\n"
    );
}

#[test]
fn corrupt_block_skipped_and_next_frame_decoded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_frame(&mut rng);
    let b = random_frame(&mut rng);
    let mut bytes = encode_frame(&a);
    let cut = bytes.iter().position(|&c| c == b'\n').unwrap();
    bytes[cut - 1] = b'x';
    bytes.extend_from_slice(&encode_frame(&b));
    let mut d = FrameDecoder::new();
    d.push(&bytes);
    assert!(d.next_frame().unwrap().is_err());
    let mut rest: Vec<_> = d.by_ref().collect();
    let last = rest.pop().unwrap().unwrap();
    assert_eq!(last.frame, b);
    assert!(rest.iter().all(|r| r.is_err()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunking_never_changes_the_decoded_stream(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<_> = (0..n).map(|_| random_frame(&mut rng)).collect();
        let stream: Vec<u8> = frames.iter().flat_map(encode_frame).collect();
        let mut d = FrameDecoder::new();
        let mut got = Vec::new();
        for c in chunks(&stream, &mut rng) {
            d.push(c);
            got.extend(d.by_ref().map(|r| r.unwrap().frame));
        }
        prop_assert_eq!(got, frames);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let mut d = FrameDecoder::new();
        d.push(&bytes);
        let mut guard = 0;
        while d.next_frame().is_some() {
            guard += 1;
            prop_assert!(guard <= bytes.len() + 1);
        }
    }
}
