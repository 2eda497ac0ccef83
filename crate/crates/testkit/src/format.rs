use std::time::{Duration, Instant};

use artsearch_core::npy::{self, NpyError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A shape (1-D or 2-D) with matching finite float32 payload, drawn from
/// the full bit space so subnormals, -0.0 and extremes all appear.
pub fn array() -> impl Strategy<Value = (Vec<usize>, Vec<f32>)> {
    let finite = any::<u32>()
        .prop_map(f32::from_bits)
        .prop_filter("finite", |v| v.is_finite());
    prop_oneof![
        (0usize..64).prop_map(|n| vec![n]),
        (0usize..16, 0usize..32).prop_map(|(r, c)| vec![r, c]),
    ]
    .prop_flat_map(move |shape| {
        let len = shape.iter().product::<usize>();
        (Just(shape), proptest::collection::vec(finite.clone(), len))
    })
}

/// Write then load yields the same shape and bit-identical values, both in
/// memory and through a file.
pub fn roundtrip(
    shape: Vec<usize>,
    values: Vec<f32>,
    dir: &std::path::Path,
) -> Result<(), TestCaseError> {
    let mut buf = Vec::new();
    npy::write_f32(&mut buf, &shape, &values).unwrap();
    prop_assert_eq!((buf.len() - values.len() * 4) % 64, 0);
    let (s, v) = npy::read_f32(&mut &buf[..]).unwrap();
    prop_assert_eq!(&s, &shape);
    let bits = |x: &[f32]| x.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    prop_assert_eq!(bits(&v), bits(&values));

    let path = dir.join("roundtrip.npy");
    npy::write_array_file(&path, &shape, &values).unwrap();
    let (s, v) = npy::read_f32_file(&path).unwrap();
    prop_assert_eq!(s, shape);
    prop_assert_eq!(bits(&v), bits(&values));
    Ok(())
}

fn sample_file() -> Vec<u8> {
    let mut buf = Vec::new();
    let values: Vec<f32> = (0..24).map(|i| i as f32 * 0.25).collect();
    npy::write_f32(&mut buf, &[4, 6], &values).unwrap();
    buf
}

/// Each of the 8 leading magic/version bytes, mutated to every other value,
/// is rejected. Returns the number of mutations tried.
pub fn magic_mutations_rejected() -> Result<usize, String> {
    let good = sample_file();
    let mut tried = 0;
    for pos in 0..8 {
        for value in 0..=255u8 {
            if value == good[pos] {
                continue;
            }
            let mut bad = good.clone();
            bad[pos] = value;
            tried += 1;
            match npy::read_f32(&mut &bad[..]) {
                Err(NpyError::BadMagic | NpyError::UnsupportedVersion(..)) => {}
                other => {
                    return Err(format!(
                        "byte {pos} = {value:#04x} not rejected as bad magic/version: {other:?}"
                    ))
                }
            }
        }
    }
    Ok(tried)
}

/// Every proper prefix of a valid file fails to load. Returns the number of
/// prefixes tried.
pub fn truncations_rejected() -> Result<usize, String> {
    let good = sample_file();
    for len in 0..good.len() {
        if npy::read_f32(&mut &good[..len]).is_ok() {
            return Err(format!("prefix of {len}/{} bytes loaded", good.len()));
        }
    }
    Ok(good.len())
}

/// Feeds mutated and random headers to the parser and loader for `budget`.
/// Any panic fails the run. Returns the number of inputs tried.
pub fn fuzz_header_parser(budget: Duration, seed: u64) -> Result<u64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<Vec<u8>> = vec![
        sample_file(),
        {
            let mut b = Vec::new();
            npy::write_i64(&mut b, &[3], &[0, 1, 2]).unwrap();
            b
        },
        {
            let mut b = Vec::new();
            npy::write_f32(&mut b, &[0, 512], &[]).unwrap();
            b
        },
    ];
    const TOKENS: &[&[u8]] = &[
        b"'descr'",
        b"'<f4'",
        b"'<i8'",
        b"'>f4'",
        b"'fortran_order'",
        b"True",
        b"False",
        b"'shape'",
        b"(",
        b")",
        b",",
        b"{",
        b"}",
        b":",
        b" ",
        b"\"",
        b"9999999999999999999999",
        b"-1",
        b"0",
        b"\n",
        b"\x00",
        b"\xff",
    ];
    let start = Instant::now();
    let mut iterations = 0u64;
    while start.elapsed() < budget {
        for _ in 0..256 {
            let mut input = seeds[rng.random_range(0..seeds.len())].clone();
            match rng.random_range(0..5) {
                0 => {
                    for _ in 0..rng.random_range(1..8) {
                        let i = rng.random_range(0..input.len());
                        input[i] = rng.random();
                    }
                }
                1 => {
                    let at = rng.random_range(npy::PREAMBLE_LEN..input.len());
                    let tok = TOKENS[rng.random_range(0..TOKENS.len())];
                    input.splice(at..at, tok.iter().copied());
                }
                2 => {
                    let at = rng.random_range(0..input.len());
                    input.truncate(at);
                }
                3 => {
                    // header length field pointing anywhere
                    let len: u16 = rng.random();
                    input[8..10].copy_from_slice(&len.to_le_bytes());
                }
                _ => {
                    let len = rng.random_range(0..200);
                    input = (0..len).map(|_| rng.random()).collect();
                    if rng.random_bool(0.5) && input.len() >= 10 {
                        input[..8].copy_from_slice(b"\x93NUMPY\x01\x00");
                    }
                }
            }
            let outcome = std::panic::catch_unwind(|| {
                let _ = npy::parse_header(&input);
                let _ = npy::read_f32(&mut &input[..]);
                let _ = npy::read_i64(&mut &input[..]);
            });
            if outcome.is_err() {
                return Err(format!("panic on input {input:?}"));
            }
            iterations += 1;
        }
    }
    Ok(iterations)
}
