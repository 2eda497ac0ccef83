use std::fs;
use std::path::Path;

use artsearch_core::eval::{generate_synthetic_corpus, write_synthetic_corpus, SynthParams};
use artsearch_core::store::{load_manifest, Corpus, EmbeddingMatrix, StoreError, NORM_TOLERANCE};
use proptest::prelude::*;

fn params() -> SynthParams {
    SynthParams {
        n: 40,
        dim: 12,
        local_count: 3,
        noise: 0.2,
        seed: 9,
    }
}

fn write_store(dir: &Path) -> std::path::PathBuf {
    let synth = generate_synthetic_corpus(&params()).unwrap();
    write_synthetic_corpus(&synth, dir).unwrap()
}

const STORE_FILES: [&str; 7] = [
    "image_global.npy",
    "image_local.npy",
    "image_local_offsets.npy",
    "description_global.npy",
    "description_local.npy",
    "description_local_offsets.npy",
    "catalog.jsonl",
];

#[test]
fn written_store_reopens_identically() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_store(dir.path());
    let (m, corpus) = Corpus::open(&manifest).unwrap();
    assert_eq!(m.image_count, 40);
    assert_eq!(m.global_dim, 12);
    assert!(m.normalized_at_ingest);
    let original = generate_synthetic_corpus(&params()).unwrap().corpus;
    assert_eq!(corpus, original);
}

#[test]
fn any_single_byte_change_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_store(dir.path());
    for name in STORE_FILES {
        let path = dir.path().join(name);
        let original = fs::read(&path).unwrap();
        for pos in [0, original.len() / 2, original.len() - 1] {
            let mut bad = original.clone();
            bad[pos] ^= 0x01;
            fs::write(&path, &bad).unwrap();
            match load_manifest(&manifest) {
                Err(StoreError::ChecksumMismatch { path: p, .. }) => assert_eq!(p, path),
                other => panic!("{name}@{pos}: {other:?}"),
            }
        }
        fs::write(&path, &original).unwrap();
        load_manifest(&manifest).unwrap();
    }
}

#[test]
fn missing_file_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_store(dir.path());
    fs::remove_file(dir.path().join("description_local.npy")).unwrap();
    assert!(matches!(
        load_manifest(&manifest),
        Err(StoreError::MissingFile { .. })
    ));
}

fn edit_manifest(path: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut v);
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn declared_dims_and_counts_must_match_headers() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_store(dir.path());
    edit_manifest(&manifest, |v| v["global_dim"] = 13.into());
    assert!(matches!(
        load_manifest(&manifest),
        Err(StoreError::DimMismatch {
            expected: 13,
            found: 12,
            ..
        })
    ));
    edit_manifest(&manifest, |v| {
        v["global_dim"] = 12.into();
        v["image_count"] = 41.into();
    });
    assert!(matches!(
        load_manifest(&manifest),
        Err(StoreError::CountMismatch { .. })
    ));
    edit_manifest(&manifest, |v| {
        v["image_count"] = 40.into();
        v["default_fusion_weight"] = 1.5.into();
    });
    assert!(matches!(
        load_manifest(&manifest),
        Err(StoreError::Manifest { .. })
    ));
}

#[test]
fn swapped_files_fail_even_with_valid_content() {
    // a valid store file under another store's checksum
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_store(dir.path());
    fs::copy(
        dir.path().join("description_global.npy"),
        dir.path().join("image_global.npy"),
    )
    .unwrap();
    assert!(matches!(
        load_manifest(&manifest),
        Err(StoreError::ChecksumMismatch { .. })
    ));
}

#[test]
fn synthetic_output_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_store(a.path());
    write_store(b.path());
    for name in STORE_FILES
        .iter()
        .chain(&["manifest.json", "pairs.json", "service.json"])
    {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn catalog_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.jsonl");
    fs::write(
        &path,
        "{\"external_id\":\"a\",\"description\":\"x\"}\nnot json\n",
    )
    .unwrap();
    match artsearch_core::store::Catalog::load(&path) {
        Err(StoreError::Catalog { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalized_rows_have_unit_norm(
        dim in 1usize..64,
        rows in proptest::collection::vec(proptest::collection::vec(-1e3f32..1e3, 64), 1..20),
    ) {
        let rows: Vec<Vec<f32>> = rows.into_iter().map(|r| r[..dim].to_vec()).collect();
        let (m, zeros) = EmbeddingMatrix::from_rows(dim, &rows).unwrap().normalize_rows();
        if zeros == 0 {
            prop_assert!(m.is_normalized());
            for r in m.rows() {
                let n = r.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() <= NORM_TOLERANCE, "{n}");
            }
        }
    }
}
