use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::features::{write_feature_file, FeatureMap};

/// One dataset row: an image id, the path of its cached feature map
/// (relative to the manifest), and at least one reference caption.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub feature_path: String,
    pub captions: Vec<String>,
}

impl CaptionRecord {
    fn validate(&self) -> Result<()> {
        if self.captions.is_empty() {
            return Err(Error::contract(format!(
                "record {} has no captions",
                self.image_id
            )));
        }
        Ok(())
    }
}

/// Reads a JSON-lines manifest, one [`CaptionRecord`] per line.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let file = fs::File::open(path.as_ref())?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(&line)?;
        rec.validate()?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[CaptionRecord]) -> Result<()> {
    let mut out = fs::File::create(path.as_ref())?;
    for rec in records {
        rec.validate()?;
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Resolves a record's feature path relative to its manifest.
pub fn resolve_feature_path(manifest: &Path, record: &CaptionRecord) -> PathBuf {
    let p = Path::new(&record.feature_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives the caption for a synthetic feature map: a hash of the feature
/// bytes seeds a draw of 3–6 words from the content pool, so the caption is
/// a fixed function of the features and the dataset is exactly learnable.
pub fn synthetic_caption(map: &FeatureMap, vocab_size: usize) -> String {
    let mut bytes = Vec::with_capacity(map.data().len() * 4);
    for v in map.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut state = fnv1a(&bytes);
    let len = 3 + (splitmix64(&mut state) % 4) as usize;
    let words: Vec<String> = (0..len)
        .map(|_| format!("w{}", splitmix64(&mut state) % vocab_size as u64))
        .collect();
    words.join(" ")
}

/// Generates `n` feature files plus a `manifest.jsonl` under `out_dir`.
/// Maps with perfect-square `L` are written as spatial `√L × √L` grids.
/// The same seed reproduces the dataset byte for byte.
pub fn gen_synthetic(
    out_dir: impl AsRef<Path>,
    n: usize,
    regions: usize,
    channels: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<Vec<CaptionRecord>> {
    if n == 0 || regions == 0 || channels == 0 || vocab_size == 0 {
        return Err(Error::contract("all synthetic dataset counts must be positive"));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (regions as f64).sqrt().round() as usize;
    let grid = if side * side == regions {
        Some((side, side))
    } else {
        None
    };
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let data: Vec<f32> = (0..regions * channels)
            .map(|_| rng.random_range(0.0f32..1.0))
            .collect();
        let map = FeatureMap::new(regions, channels, grid, data)?;
        let caption = synthetic_caption(&map, vocab_size);
        let feature_path = format!("feat_{i:04}.pycf");
        write_feature_file(&map, out_dir.join(&feature_path))?;
        records.push(CaptionRecord {
            image_id: format!("img_{i:04}"),
            feature_path,
            captions: vec![caption],
        });
    }
    write_manifest(out_dir.join("manifest.jsonl"), &records)?;
    Ok(records)
}
