//! Runs alone in its own test binary so other tests cannot disturb the
//! process-wide peak RSS reading.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use artsearch_core::npy::{Dtype, Header};
use artsearch_core::store::{EmbeddingMatrix, LocalEmbeddingSet};

const ITEMS: usize = 6783;
const DIM: usize = 512;
const REGIONS: usize = 4;

fn status_kib(field: &str) -> u64 {
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    status
        .lines()
        .find_map(|l| l.strip_prefix(field))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
        .unwrap_or_else(|| panic!("{field} missing from /proc/self/status"))
}

/// Writes a float32 matrix row by row without materializing it.
fn stream_matrix(path: &Path, rows: usize) -> u64 {
    let mut w = BufWriter::new(File::create(path).unwrap());
    w.write_all(
        &Header {
            dtype: Dtype::F32,
            shape: vec![rows, DIM],
        }
        .encode(),
    )
    .unwrap();
    let mut row = vec![0f32; DIM];
    for r in 0..rows {
        for (c, v) in row.iter_mut().enumerate() {
            *v = ((r * 31 + c * 7) % 97) as f32 / 97.0 - 0.5;
        }
        w.write_all(bytemuck::cast_slice(&row)).unwrap();
    }
    w.flush().unwrap();
    std::fs::metadata(path).unwrap().len()
}

#[test]
#[cfg(target_os = "linux")]
fn loading_copies_payload_at_most_once() {
    let dir = tempfile::tempdir().unwrap();
    let global = dir.path().join("global.npy");
    let local = dir.path().join("local.npy");
    let offsets = dir.path().join("offsets.npy");
    let mut file_bytes = stream_matrix(&global, ITEMS);
    file_bytes += stream_matrix(&local, ITEMS * REGIONS);
    let offs: Vec<i64> = (0..=ITEMS as i64).map(|i| i * REGIONS as i64).collect();
    artsearch_core::npy::write_i64_file(&offsets, &[ITEMS + 1], &offs).unwrap();
    file_bytes += std::fs::metadata(&offsets).unwrap().len();

    // reset the high-water mark where the kernel allows it
    let _ = std::fs::write("/proc/self/clear_refs", "5");
    let baseline = status_kib("VmHWM:");

    let g = EmbeddingMatrix::load(&global, Some(DIM)).unwrap();
    let l = LocalEmbeddingSet::load(&local, &offsets, Some(DIM)).unwrap();
    assert_eq!(
        (g.item_count(), l.item_count(), l.region_count()),
        (ITEMS, ITEMS, ITEMS * REGIONS)
    );

    let peak_growth = (status_kib("VmHWM:") - baseline) * 1024;
    let bound = 3 * file_bytes;
    eprintln!("file bytes {file_bytes}, peak growth {peak_growth}, bound {bound}");
    assert!(peak_growth < bound, "peak growth {peak_growth} >= {bound}");
    drop((g, l));
}
