//! Exact nearest-source search on the sphere.
//!
//! For every pixel of an equirectangular grid, find the nearest pixel among a
//! set of sources under great-circle distance between pixel centers. Ties go
//! to the lowest pixel index. Rows are visited in order of increasing polar
//! distance; within a row the nearest source by azimuth is the only candidate,
//! and the polar gap is a lower bound that ends the scan.

use crate::equirect::DirectionTable;
use crate::error::{PanoError, Result};

#[inline]
fn chord2(a: &crate::equirect::Vec3, b: &crate::equirect::Vec3) -> f64 {
    (a - b).norm_squared()
}

/// Returns, for each pixel, the index of its nearest source pixel. Source
/// pixels map to themselves.
pub fn nearest_sources(table: &DirectionTable, is_source: &[bool]) -> Result<Vec<usize>> {
    nearest_sources_where(table, is_source, None)
}

/// Like [`nearest_sources`], but only resolves pixels where `wanted` is true;
/// the rest are set to `usize::MAX`.
pub fn nearest_sources_where(
    table: &DirectionTable,
    is_source: &[bool],
    wanted: Option<&[bool]>,
) -> Result<Vec<usize>> {
    let dims = table.dims();
    let (h, w) = (dims.height, dims.width);
    assert_eq!(is_source.len(), dims.len());
    if !is_source.iter().any(|&s| s) {
        return Err(PanoError::domain("no source pixels to extrapolate from"));
    }

    // Per row, the nearest source column at or before / at or after each
    // column, cyclically. `usize::MAX` marks rows without sources.
    let mut before = vec![usize::MAX; h * w];
    let mut after = vec![usize::MAX; h * w];
    let mut row_has = vec![false; h];
    for v in 0..h {
        let row = &is_source[v * w..(v + 1) * w];
        let Some(last) = row.iter().rposition(|&s| s) else {
            continue;
        };
        let first = row.iter().position(|&s| s).unwrap();
        row_has[v] = true;
        let mut cur = last;
        for u in 0..w {
            if row[u] {
                cur = u;
            }
            before[v * w + u] = cur;
        }
        let mut cur = first;
        for u in (0..w).rev() {
            if row[u] {
                cur = u;
            }
            after[v * w + u] = cur;
        }
    }

    let mut out = vec![0usize; dims.len()];
    for v in 0..h {
        for u in 0..w {
            let p = v * w + u;
            if is_source[p] {
                out[p] = p;
                continue;
            }
            if wanted.is_some_and(|m| !m[p]) {
                out[p] = usize::MAX;
                continue;
            }
            let here = table.dir(p);
            let polar = table.row_polar(v);
            let mut best = (f64::INFINITY, usize::MAX);
            // Expand outward, alternating above and below.
            let mut up = v as isize;
            let mut down = v + 1;
            loop {
                let gap_up = if up >= 0 {
                    polar - table.row_polar(up as usize)
                } else {
                    f64::INFINITY
                };
                let gap_down = if down < h {
                    table.row_polar(down) - polar
                } else {
                    f64::INFINITY
                };
                let (row, gap) = if gap_up <= gap_down {
                    (up as usize, gap_up)
                } else {
                    (down, gap_down)
                };
                if !gap.is_finite() {
                    break;
                }
                let bound = 2.0 * (0.5 * gap).sin();
                if bound * bound > best.0 + 1e-12 {
                    break;
                }
                if row_has[row] {
                    for q in [row * w + before[row * w + u], row * w + after[row * w + u]] {
                        let d = chord2(&here, &table.dir(q));
                        if d < best.0 || (d == best.0 && q < best.1) {
                            best = (d, q);
                        }
                    }
                }
                if gap_up <= gap_down {
                    up -= 1;
                } else {
                    down += 1;
                }
            }
            out[p] = best.1;
        }
    }
    Ok(out)
}

/// Brute-force reference used by the tests.
#[cfg(test)]
pub(crate) fn nearest_sources_brute(table: &DirectionTable, is_source: &[bool]) -> Vec<usize> {
    (0..is_source.len())
        .map(|p| {
            if is_source[p] {
                return p;
            }
            let mut best = (f64::INFINITY, usize::MAX);
            for (q, &s) in is_source.iter().enumerate() {
                if s {
                    let d = chord2(&table.dir(p), &table.dir(q));
                    if d < best.0 || (d == best.0 && q < best.1) {
                        best = (d, q);
                    }
                }
            }
            best.1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (h, density) in [(4, 0.3), (8, 0.05), (16, 0.01), (16, 0.5), (32, 0.002)] {
            let dims = Dims::with_height(h).unwrap();
            let table = DirectionTable::new(dims);
            for _ in 0..10 {
                let mut mask: Vec<bool> =
                    (0..dims.len()).map(|_| rng.random_bool(density)).collect();
                if !mask.iter().any(|&b| b) {
                    mask[rng.random_range(0..dims.len())] = true;
                }
                assert_eq!(
                    nearest_sources(&table, &mask).unwrap(),
                    nearest_sources_brute(&table, &mask)
                );
            }
        }
    }

    #[test]
    fn antipodal_sources_split_hemispheres() {
        let dims = Dims::with_height(16).unwrap();
        let table = DirectionTable::new(dims);
        let mut mask = vec![false; dims.len()];
        let a = dims.index(3, 5);
        let b = dims.index(3 + 16, 10);
        mask[a] = true;
        mask[b] = true;
        let got = nearest_sources(&table, &mask).unwrap();
        assert_eq!(got, nearest_sources_brute(&table, &mask));
        for p in 0..dims.len() {
            let da = chord2(&table.dir(p), &table.dir(a));
            let db = chord2(&table.dir(p), &table.dir(b));
            if da < db {
                assert_eq!(got[p], a);
            } else if db < da {
                assert_eq!(got[p], b);
            }
        }
    }

    #[test]
    fn empty_source_set_is_an_error() {
        let dims = Dims::with_height(2).unwrap();
        let table = DirectionTable::new(dims);
        assert!(nearest_sources(&table, &vec![false; dims.len()]).is_err());
    }
}
