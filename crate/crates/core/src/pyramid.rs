//! Multi-scale pyramid feature maps via stride-1 average pooling.
//!
//! Each pooling bin turns a `w × h` grid into a `(w−b+1) × (h−b+1)` grid of
//! window means, enlarging the receptive field each attention row describes.
//! Bin 1 is the untouched input, so a `[1]` pyramid degenerates to plain
//! attention.

use crate::error::{Error, Result};
use crate::io::features::FeatureMap;

pub const POOL_STRIDE: usize = 1;
pub const POOL_PADDING: usize = 0;

/// Pooling kernel sizes, strictly increasing, each at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidConfig {
    pub bins: Vec<usize>,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig { bins: vec![1, 2, 4] }
    }
}

impl PyramidConfig {
    pub fn new(bins: Vec<usize>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::config("pyramid needs at least one bin"));
        }
        if bins[0] < 1 {
            return Err(Error::config("pyramid bins must be at least 1"));
        }
        if bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "pyramid bins must be strictly increasing, got {bins:?}"
            )));
        }
        Ok(PyramidConfig { bins })
    }

    /// Single-level pyramid: attention over the original map only.
    pub fn flat() -> Self {
        PyramidConfig { bins: vec![1] }
    }
}

/// The per-bin pooled maps plus their row-stacked concatenation
/// (level-major, then row-major within a level).
#[derive(Debug, Clone)]
pub struct PyramidFeatures {
    pub levels: Vec<FeatureMap>,
    pub stacked: FeatureMap,
}

impl PyramidFeatures {
    pub fn total_regions(&self) -> usize {
        self.stacked.regions()
    }
}

/// Average pooling with a `bin × bin` kernel, stride 1, no padding.
pub fn avg_pool2d(map: &FeatureMap, bin: usize) -> Result<FeatureMap> {
    let (w, h) = map.grid().ok_or_else(|| {
        Error::contract("avg_pool2d requires a spatial map with a grid".to_string())
    })?;
    if bin < 1 || bin > w.min(h) {
        return Err(Error::contract(format!(
            "pooling bin {bin} exceeds grid {w}x{h}"
        )));
    }
    if bin == 1 {
        return Ok(map.clone());
    }
    let d = map.channels();
    let (ow, oh) = (w - bin + 1, h - bin + 1);
    let mut out = vec![0.0f32; ow * oh * d];
    let inv = 1.0 / (bin * bin) as f64;
    for oy in 0..oh {
        for ox in 0..ow {
            let cell = &mut vec![0.0f64; d];
            for dy in 0..bin {
                for dx in 0..bin {
                    let row = map.row((oy + dy) * w + (ox + dx));
                    for (acc, &v) in cell.iter_mut().zip(row) {
                        *acc += v as f64;
                    }
                }
            }
            let base = (oy * ow + ox) * d;
            for (j, acc) in cell.iter().enumerate() {
                out[base + j] = (acc * inv) as f32;
            }
        }
    }
    FeatureMap::new(ow * oh, d, Some((ow, oh)), out)
}

/// Builds the pyramid levels and their stacked map.
///
/// Non-spatial maps (bottom-up detector features) with a perfect-square `L`
/// are reshaped to a `√L × √L` grid in stored row order before pooling; the
/// attention weights do not depend on row order, so the arbitrary placement
/// is harmless. Non-square maps only admit the flat `[1]` pyramid.
pub fn build_pyramid(map: &FeatureMap, cfg: &PyramidConfig) -> Result<PyramidFeatures> {
    let spatial: FeatureMap = match map.grid() {
        Some(_) => map.clone(),
        None => {
            if cfg.bins == [1] {
                let levels = vec![map.clone()];
                return Ok(PyramidFeatures {
                    stacked: map.clone(),
                    levels,
                });
            }
            let side = (map.regions() as f64).sqrt().round() as usize;
            if side * side != map.regions() {
                return Err(Error::contract(format!(
                    "map with {} rows and no grid cannot be pooled: rows must be a \
                     perfect square to reshape to a √L×√L grid, or use bins [1]",
                    map.regions()
                )));
            }
            FeatureMap::new(
                map.regions(),
                map.channels(),
                Some((side, side)),
                map.data().to_vec(),
            )?
        }
    };
    let (w, h) = spatial.grid().expect("spatial map has a grid");
    if let Some(&big) = cfg.bins.iter().find(|&&b| b > w.min(h)) {
        return Err(Error::contract(format!(
            "pyramid bin {big} exceeds grid {w}x{h}"
        )));
    }
    let levels: Vec<FeatureMap> = cfg
        .bins
        .iter()
        .map(|&b| avg_pool2d(&spatial, b))
        .collect::<Result<_>>()?;
    let total: usize = levels.iter().map(|l| l.regions()).sum();
    let d = spatial.channels();
    let mut data = Vec::with_capacity(total * d);
    for level in &levels {
        data.extend_from_slice(level.data());
    }
    let stacked = FeatureMap::new(total, d, None, data)?;
    Ok(PyramidFeatures { levels, stacked })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_map(w: usize, h: usize, d: usize, f: impl Fn(usize, usize, usize) -> f32) -> FeatureMap {
        let mut data = vec![0.0f32; w * h * d];
        for y in 0..h {
            for x in 0..w {
                for c in 0..d {
                    data[(y * w + x) * d + c] = f(x, y, c);
                }
            }
        }
        FeatureMap::new(w * h, d, Some((w, h)), data).unwrap()
    }

    #[test]
    fn seven_grid_bin2_gives_six_grid() {
        let map = grid_map(7, 7, 3, |x, y, c| (x + y + c) as f32);
        let pooled = avg_pool2d(&map, 2).unwrap();
        assert_eq!(pooled.grid(), Some((6, 6)));
        assert_eq!(pooled.regions(), 36);
    }

    #[test]
    fn constant_map_pools_to_same_constant() {
        let map = grid_map(5, 5, 2, |_, _, _| 3.25);
        let pooled = avg_pool2d(&map, 3).unwrap();
        assert!(pooled.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn two_by_two_mean() {
        let map = grid_map(2, 2, 1, |x, y, _| (y * 2 + x + 1) as f32); // [[1,2],[3,4]]
        let pooled = avg_pool2d(&map, 2).unwrap();
        assert_eq!(pooled.regions(), 1);
        assert_eq!(pooled.data(), &[2.5]);
    }

    #[test]
    fn bin_too_large_is_an_error() {
        let map = grid_map(3, 3, 1, |_, _, _| 0.0);
        assert!(avg_pool2d(&map, 4).is_err());
    }

    #[test]
    fn gridless_map_cannot_pool() {
        let map = FeatureMap::new(6, 2, None, vec![0.0; 12]).unwrap();
        assert!(avg_pool2d(&map, 2).is_err());
    }

    #[test]
    fn pyramid_levels_and_stack_counts() {
        let map = grid_map(7, 7, 4, |x, y, c| (x * y + c) as f32);
        let pyr = build_pyramid(&map, &PyramidConfig::default()).unwrap();
        let rows: Vec<usize> = pyr.levels.iter().map(|l| l.regions()).collect();
        assert_eq!(rows, [49, 36, 16]);
        assert_eq!(pyr.total_regions(), 101);
    }

    #[test]
    fn flat_pyramid_is_identity() {
        let map = grid_map(4, 4, 2, |x, y, c| (x + 10 * y + 100 * c) as f32);
        let pyr = build_pyramid(&map, &PyramidConfig::flat()).unwrap();
        assert_eq!(pyr.levels.len(), 1);
        assert_eq!(pyr.stacked.data(), map.data());
    }

    #[test]
    fn bin_one_level_is_exactly_the_input() {
        let map = grid_map(5, 5, 3, |x, y, c| (x as f32) * 0.3 + (y as f32) * 0.7 + c as f32);
        let pyr = build_pyramid(&map, &PyramidConfig::default()).unwrap();
        assert_eq!(pyr.levels[0].data(), map.data());
    }

    #[test]
    fn bottom_up_36_rows_reshapes_to_6x6() {
        let map = FeatureMap::new(36, 4, None, (0..36 * 4).map(|i| i as f32).collect()).unwrap();
        let pyr = build_pyramid(&map, &PyramidConfig::default()).unwrap();
        let rows: Vec<usize> = pyr.levels.iter().map(|l| l.regions()).collect();
        assert_eq!(rows, [36, 25, 9]);
        assert_eq!(pyr.total_regions(), 70);
    }

    #[test]
    fn bottom_up_non_square_rejects_pyramid_but_allows_flat() {
        let map = FeatureMap::new(10, 4, None, vec![0.5; 40]).unwrap();
        assert!(build_pyramid(&map, &PyramidConfig::default()).is_err());
        assert!(build_pyramid(&map, &PyramidConfig::flat()).is_ok());
    }

    #[test]
    fn global_pool_equals_row_mean() {
        let map = grid_map(4, 4, 3, |x, y, c| ((x * 7 + y * 3 + c) as f32) * 0.125 - 1.0);
        let pooled = avg_pool2d(&map, 4).unwrap();
        assert_eq!(pooled.regions(), 1);
        let d = map.channels();
        for c in 0..d {
            let mean: f64 = (0..map.regions()).map(|i| map.row(i)[c] as f64).sum::<f64>()
                / map.regions() as f64;
            assert!((pooled.data()[c] as f64 - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn stacked_rows_are_equal_weight_window_means() {
        let map = grid_map(5, 5, 2, |x, y, c| ((x * 11 + y * 5 + c * 3) as f32) * 0.21 - 2.0);
        let cfg = PyramidConfig::new(vec![1, 2, 3]).unwrap();
        let pyr = build_pyramid(&map, &cfg).unwrap();
        let (w, _h) = map.grid().unwrap();
        let mut row_idx = 0;
        for (level, &bin) in pyr.levels.iter().zip(&cfg.bins) {
            let (ow, oh) = level.grid().unwrap();
            for oy in 0..oh {
                for ox in 0..ow {
                    for c in 0..map.channels() {
                        let mut acc = 0.0f64;
                        for dy in 0..bin {
                            for dx in 0..bin {
                                acc += map.row((oy + dy) * w + (ox + dx))[c] as f64;
                            }
                        }
                        let expect = acc / (bin * bin) as f64;
                        let got = pyr.stacked.row(row_idx)[c] as f64;
                        assert!((got - expect).abs() < 1e-5, "row {row_idx} ch {c}");
                    }
                    row_idx += 1;
                }
            }
        }
        assert_eq!(row_idx, pyr.total_regions());
    }
}
