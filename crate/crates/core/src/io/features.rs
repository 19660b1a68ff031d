use std::fs;
use std::path::Path;

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// File magic for cached feature maps.
pub const FEATURE_MAGIC: &[u8; 4] = b"PYCF";
pub const FEATURE_VERSION: u32 = 1;

/// An `L × d` matrix of region descriptors. When the map came from a
/// convolutional grid, `grid = (w, h)` with `w·h = L` and rows stored
/// row-major over the grid; bottom-up detector maps have no grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    regions: usize,
    channels: usize,
    grid: Option<(usize, usize)>,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(regions: usize, channels: usize, grid: Option<(usize, usize)>, data: Vec<f32>) -> Result<Self> {
        if regions == 0 || channels == 0 {
            return Err(Error::contract("feature map dimensions must be positive"));
        }
        if let Some((w, h)) = grid {
            if w * h != regions {
                return Err(Error::contract(format!(
                    "grid {w}x{h} does not cover {regions} regions"
                )));
            }
        }
        if data.len() != regions * channels {
            return Err(Error::contract(format!(
                "expected {} values, got {}",
                regions * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("feature map contains non-finite values"));
        }
        Ok(FeatureMap {
            regions,
            channels,
            grid,
            data,
        })
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Promotes to a 64-bit `[L, d]` tensor for training and inference.
    pub fn to_tensor(&self) -> Tensor {
        let values = self.data.iter().map(|&v| v as f64).collect();
        Tensor::from_vec(vec![self.regions, self.channels], values)
            .expect("feature map dimensions are validated at construction")
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                self.pos,
                format!("truncated while reading {what} ({n} bytes needed, {} left)", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses the binary feature-cache format.
///
/// Layout (little-endian): magic `PYCF`, version u32 = 1, rank u32 in {2,3},
/// rank dimension sizes as u32 (`[w,h,d]` or `[L,d]`), then `product` many
/// 32-bit floats row-major. Trailing bytes are an error.
pub fn parse_feature_bytes(bytes: &[u8]) -> Result<FeatureMap> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != FEATURE_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected {FEATURE_MAGIC:?}")));
    }
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let rank_pos = r.pos;
    let rank = r.u32("rank")?;
    if rank != 2 && rank != 3 {
        return Err(Error::format(rank_pos, format!("rank {rank} not in {{2,3}}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    for i in 0..rank {
        let dim_pos = r.pos;
        let d = r.u32("dimension")?;
        if d == 0 {
            return Err(Error::format(dim_pos, format!("dimension {i} is zero")));
        }
        dims.push(d as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(r.pos, "dimension product overflows".to_string()))?;
    let payload_pos = r.pos;
    let need = count
        .checked_mul(4)
        .ok_or_else(|| Error::format(payload_pos, "payload size overflows".to_string()))?;
    let payload = r.take(need, "float payload")?;
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos,
            format!("{} trailing bytes after payload", bytes.len() - r.pos),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for c in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    }
    let (regions, channels, grid) = if rank == 3 {
        let (w, h, d) = (dims[0], dims[1], dims[2]);
        (w * h, d, Some((w, h)))
    } else {
        (dims[0], dims[1], None)
    };
    FeatureMap::new(regions, channels, grid, data)
}

pub fn encode_feature_bytes(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    match map.grid {
        Some((w, h)) => {
            out.extend_from_slice(&3u32.to_le_bytes());
            for d in [w, h, map.channels] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        None => {
            out.extend_from_slice(&2u32.to_le_bytes());
            for d in [map.regions, map.channels] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
    }
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let bytes = fs::read(path.as_ref())?;
    parse_feature_bytes(&bytes)
}

pub fn write_feature_file(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_feature_bytes(map))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map(w: usize, h: usize, d: usize) -> FeatureMap {
        let data: Vec<f32> = (0..w * h * d).map(|i| (i as f32) * 0.25 - 3.0).collect();
        FeatureMap::new(w * h, d, Some((w, h)), data).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let map = sample_map(7, 7, 16);
        let bytes = encode_feature_bytes(&map);
        let back = parse_feature_bytes(&bytes).unwrap();
        assert_eq!(map, back);
        assert_eq!(bytes, encode_feature_bytes(&back));
    }

    #[test]
    fn bottom_up_map_reads_without_grid() {
        let data: Vec<f32> = (0..36 * 8).map(|i| i as f32).collect();
        let map = FeatureMap::new(36, 8, None, data).unwrap();
        let back = parse_feature_bytes(&encode_feature_bytes(&map)).unwrap();
        assert_eq!(back.grid(), None);
        assert_eq!(back.regions(), 36);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let map = sample_map(2, 2, 3);
        let mut bytes = encode_feature_bytes(&map);
        bytes.truncate(bytes.len() - 4); // drop one float: header claims more rows
        let err = parse_feature_bytes(&bytes).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 24),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_feature_bytes(&sample_map(2, 2, 1));
        bytes[0] = b'X';
        let err = parse_feature_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_feature_bytes(&sample_map(2, 2, 1));
        bytes.push(0);
        let err = parse_feature_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pycf");
        let map = sample_map(3, 4, 5);
        write_feature_file(&map, &path).unwrap();
        let back = read_feature_file(&path).unwrap();
        assert_eq!(map, back);
    }
}
