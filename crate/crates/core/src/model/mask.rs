//! Binary image masks.
//!
//! Masks travel run-length encoded (`Mask`). Geometric operations work on a
//! per-row interval form (`RowMask`) so dilation and intersection cost
//! O(rows · runs) instead of O(pixels).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::BBox2;

/// Run-length encoded mask over a `width × height` grid. Each run is
/// `[start, length]` in row-major pixel order; runs are sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<[u32; 2]>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            runs: Vec::new(),
        }
    }

    /// Filled rectangle covering pixels whose centres lie inside `bbox`,
    /// clipped to the grid.
    pub fn from_rect(width: u32, height: u32, bbox: &BBox2) -> Self {
        let clamp = |v: f64, hi: u32| -> u32 { v.round().clamp(0.0, hi as f64) as u32 };
        let (x0, x1) = (clamp(bbox.x_min, width), clamp(bbox.x_max, width));
        let (y0, y1) = (clamp(bbox.y_min, height), clamp(bbox.y_max, height));
        let mut runs = Vec::new();
        if x1 > x0 {
            for y in y0..y1 {
                runs.push([y * width + x0, x1 - x0]);
            }
        }
        Mask {
            width,
            height,
            runs,
        }
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().map(|r| r[1] as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.width as u64 * self.height as u64;
        let mut prev_end = 0u64;
        for (i, r) in self.runs.iter().enumerate() {
            let (start, len) = (r[0] as u64, r[1] as u64);
            if len == 0 {
                return Err(Error::invalid("mask", format!("run {i} has zero length")));
            }
            if i > 0 && start < prev_end {
                return Err(Error::invalid(
                    "mask",
                    format!("run {i} overlaps or is unsorted"),
                ));
            }
            if start + len > total {
                return Err(Error::invalid("mask", format!("run {i} exceeds the grid")));
            }
            prev_end = start + len;
        }
        Ok(())
    }

    /// Pixel-space bounding box of the set pixels, as `[x0, y0, x1, y1)`.
    pub fn pixel_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let rows = self.to_rows();
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for (y, row) in rows.rows.iter().enumerate() {
            if let (Some(first), Some(last)) = (row.first(), row.last()) {
                let y = y as u32;
                b = Some(match b {
                    None => (first.0, y, last.1, y + 1),
                    Some((x0, y0, x1, _)) => (x0.min(first.0), y0, x1.max(last.1), y + 1),
                });
            }
        }
        b
    }

    pub fn to_rows(&self) -> RowMask {
        let mut rows = vec![Vec::new(); self.height as usize];
        let w = self.width.max(1);
        for r in &self.runs {
            let (mut start, mut len) = (r[0], r[1]);
            // Runs may wrap across row boundaries.
            while len > 0 {
                let y = start / w;
                let x = start % w;
                let take = len.min(w - x);
                if let Some(row) = rows.get_mut(y as usize) {
                    push_interval(row, (x, x + take));
                }
                start += take;
                len -= take;
            }
        }
        RowMask {
            width: self.width,
            height: self.height,
            rows,
        }
    }
}

fn push_interval(row: &mut Vec<(u32, u32)>, iv: (u32, u32)) {
    if let Some(last) = row.last_mut() {
        if iv.0 <= last.1 {
            last.1 = last.1.max(iv.1);
            return;
        }
    }
    row.push(iv);
}

/// Mask as sorted, disjoint half-open intervals per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMask {
    pub width: u32,
    pub height: u32,
    pub rows: Vec<Vec<(u32, u32)>>,
}

impl RowMask {
    pub fn area(&self) -> u64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|&(a, b)| (b - a) as u64)
            .sum()
    }

    /// Morphological dilation with a `(2δ+1) × (2δ+1)` square structuring
    /// element, clipped to the grid.
    pub fn dilate(&self, delta: u32) -> RowMask {
        if delta == 0 {
            return self.clone();
        }
        let w = self.width;
        let horizontal: Vec<Vec<(u32, u32)>> = self
            .rows
            .iter()
            .map(|row| {
                let mut out = Vec::with_capacity(row.len());
                for &(a, b) in row {
                    push_interval(&mut out, (a.saturating_sub(delta), (b + delta).min(w)));
                }
                out
            })
            .collect();

        let h = self.height as usize;
        let d = delta as usize;
        let mut rows = Vec::with_capacity(h);
        let mut scratch: Vec<(u32, u32)> = Vec::new();
        for y in 0..h {
            scratch.clear();
            let lo = y.saturating_sub(d);
            let hi = (y + d).min(h.saturating_sub(1));
            for src in &horizontal[lo..=hi] {
                scratch.extend_from_slice(src);
            }
            scratch.sort_unstable();
            let mut merged = Vec::new();
            for &iv in &scratch {
                push_interval(&mut merged, iv);
            }
            rows.push(merged);
        }
        RowMask {
            width: self.width,
            height: self.height,
            rows,
        }
    }

    pub fn intersection_area(&self, other: &RowMask) -> u64 {
        let mut total = 0u64;
        for (ra, rb) in self.rows.iter().zip(&other.rows) {
            let (mut i, mut j) = (0, 0);
            while i < ra.len() && j < rb.len() {
                let lo = ra[i].0.max(rb[j].0);
                let hi = ra[i].1.min(rb[j].1);
                if hi > lo {
                    total += (hi - lo) as u64;
                }
                if ra[i].1 < rb[j].1 {
                    i += 1;
                } else {
                    j += 1;
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_roundtrip_area_and_bounds() {
        let m = Mask::from_rect(20, 10, &BBox2::new(2.0, 3.0, 7.0, 5.0));
        assert_eq!(m.area(), 10);
        assert_eq!(m.pixel_bounds(), Some((2, 3, 7, 5)));
        m.validate().unwrap();
    }

    #[test]
    fn wrapped_runs_split_into_rows() {
        let m = Mask {
            width: 4,
            height: 3,
            runs: vec![[2, 4]],
        };
        let rows = m.to_rows();
        assert_eq!(rows.rows[0], vec![(2, 4)]);
        assert_eq!(rows.rows[1], vec![(0, 2)]);
        assert_eq!(rows.area(), 4);
    }

    #[test]
    fn dilation_of_single_pixel_is_square() {
        let m = Mask {
            width: 9,
            height: 9,
            runs: vec![[4 * 9 + 4, 1]],
        };
        let d = m.to_rows().dilate(2);
        assert_eq!(d.area(), 25);
        // clipped at the border
        let corner = Mask {
            width: 9,
            height: 9,
            runs: vec![[0, 1]],
        };
        assert_eq!(corner.to_rows().dilate(2).area(), 9);
    }

    #[test]
    fn validate_rejects_overlap() {
        let m = Mask {
            width: 4,
            height: 4,
            runs: vec![[0, 3], [2, 2]],
        };
        assert!(m.validate().is_err());
    }
}
