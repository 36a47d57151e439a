//! The two interpolation primitives behind every flow operation.
//!
//! * [`bilinear_sample`] reads a regular grid at scattered points
//!   (grid to scattered).
//! * [`grid_from_unstructured_data`] splats scattered samples onto a regular
//!   grid with bilinear weights and normalises by the accumulated weight
//!   (scattered to grid, "inverse bilinear" interpolation).
//!
//! Grids are `(H, W, C)` arrays indexed `[row, col, channel]`; point
//! coordinates are `(x = col, y = row)` in pixels.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rayon::prelude::*;

use crate::exec;
use crate::field::{Point, ValidityMask};

/// Cells whose accumulated splat weight does not exceed this are left
/// undefined.
pub const DEFAULT_WEIGHT_THRESHOLD: f64 = 1e-3;

/// How far outside the grid a sample point may fall before it counts as out
/// of bounds.
pub const OUT_OF_BOUNDS_TOL: f64 = 1e-9;

/// Splats with at least this many samples run chunked in parallel unless
/// deterministic mode is on.
const PARALLEL_MIN_SAMPLES: usize = 1 << 16;
const SPLAT_CHUNK: usize = 1 << 14;

/// One scattered data point for [`grid_from_unstructured_data`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterSample {
    pub position: Point,
    pub value: Vec<f64>,
    /// Multiplies the bilinear weights of this sample.
    pub weight_scale: f64,
}

impl ScatterSample {
    pub fn new(position: Point, value: Vec<f64>) -> Self {
        Self {
            position,
            value,
            weight_scale: 1.0,
        }
    }
}

/// Result of [`bilinear_sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    /// `N x C` interpolated values.
    pub values: Array2<f64>,
    /// Whether each point lay inside the grid before clamping.
    pub in_bounds: Vec<bool>,
}

#[inline]
pub(crate) fn in_bounds(x: f64, y: f64, h: usize, w: usize) -> bool {
    x >= -OUT_OF_BOUNDS_TOL
        && y >= -OUT_OF_BOUNDS_TOL
        && x <= (w - 1) as f64 + OUT_OF_BOUNDS_TOL
        && y <= (h - 1) as f64 + OUT_OF_BOUNDS_TOL
}

/// The four bilinear taps `(row, col, weight)` of a point clamped to the grid.
#[inline]
fn clamped_taps(x: f64, y: f64, h: usize, w: usize) -> [(usize, usize, f64); 4] {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let c0 = x.floor() as usize;
    let r0 = y.floor() as usize;
    let c1 = (c0 + 1).min(w - 1);
    let r1 = (r0 + 1).min(h - 1);
    let fx = x - c0 as f64;
    let fy = y - r0 as f64;
    [
        (r0, c0, (1.0 - fx) * (1.0 - fy)),
        (r0, c1, fx * (1.0 - fy)),
        (r1, c0, (1.0 - fx) * fy),
        (r1, c1, fx * fy),
    ]
}

/// Samples `grid` at `(x, y)` into `out`, clamping to the edge. Returns
/// whether the point was in bounds. Non-finite points yield zeros and count
/// as out of bounds.
#[inline]
pub(crate) fn sample_into(grid: &ArrayView3<'_, f64>, x: f64, y: f64, out: &mut [f64]) -> bool {
    let (h, w, _) = grid.dim();
    out.fill(0.0);
    if !(x.is_finite() && y.is_finite()) {
        return false;
    }
    for (r, c, wgt) in clamped_taps(x, y, h, w) {
        if wgt != 0.0 {
            for (k, o) in out.iter_mut().enumerate() {
                *o += wgt * grid[[r, c, k]];
            }
        }
    }
    in_bounds(x, y, h, w)
}

/// Like [`sample_into`] but only blends taps where `mask` is true, with the
/// weights renormalised over those taps. Returns the valid tap weight (0 to
/// 1); `out` is zero when it is 0.
#[inline]
pub(crate) fn sample_masked_into(
    grid: &ArrayView3<'_, f64>,
    mask: &ArrayView2<'_, bool>,
    x: f64,
    y: f64,
    out: &mut [f64],
) -> f64 {
    let (h, w, _) = grid.dim();
    out.fill(0.0);
    if !(x.is_finite() && y.is_finite()) {
        return 0.0;
    }
    let mut total = 0.0;
    for (r, c, wgt) in clamped_taps(x, y, h, w) {
        if wgt != 0.0 && mask[[r, c]] {
            total += wgt;
            for (k, o) in out.iter_mut().enumerate() {
                *o += wgt * grid[[r, c, k]];
            }
        }
    }
    if total > 0.0 && total < 1.0 {
        out.iter_mut().for_each(|o| *o /= total);
    }
    total
}

/// Bilinear interpolation of a `(H, W, C)` grid at scattered points.
///
/// Coordinates are clamped to `[0, W-1] x [0, H-1]`, so every point gets a
/// value; `in_bounds` reports the points that needed clamping by more than
/// [`OUT_OF_BOUNDS_TOL`].
///
/// # Panics
///
/// If the grid is empty.
pub fn bilinear_sample(grid: ArrayView3<'_, f64>, points: &[Point]) -> Sampled {
    let (h, w, c) = grid.dim();
    assert!(h > 0 && w > 0, "bilinear_sample needs a non-empty grid");
    let mut values = Array2::zeros((points.len(), c));
    let mut in_bounds = vec![false; points.len()];
    for ((p, mut row), flag) in points
        .iter()
        .zip(values.rows_mut())
        .zip(in_bounds.iter_mut())
    {
        *flag = sample_into(&grid, p.x, p.y, row.as_slice_mut().unwrap());
    }
    Sampled { values, in_bounds }
}

/// Accumulators for splatting onto an `(H, W, C)` grid.
struct Accumulator {
    values: Vec<f64>,
    weights: Vec<f64>,
    h: usize,
    w: usize,
    c: usize,
}

impl Accumulator {
    fn new(h: usize, w: usize, c: usize) -> Self {
        Self {
            values: vec![0.0; h * w * c],
            weights: vec![0.0; h * w],
            h,
            w,
            c,
        }
    }

    #[inline]
    fn add(&mut self, x: f64, y: f64, value: &[f64], scale: f64) {
        // Samples at or beyond one pixel outside the grid touch no cell.
        if !(x > -1.0 && y > -1.0 && x < self.w as f64 && y < self.h as f64) {
            return;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let r = y0 + dy;
            if r < 0 || r >= self.h as isize {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let col = x0 + dx;
                if col < 0 || col >= self.w as isize {
                    continue;
                }
                let wgt = wy * wx * scale;
                if wgt == 0.0 {
                    continue;
                }
                let cell = r as usize * self.w + col as usize;
                self.weights[cell] += wgt;
                let base = cell * self.c;
                for (k, v) in value.iter().enumerate() {
                    self.values[base + k] += wgt * v;
                }
            }
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        self.values
            .iter_mut()
            .zip(other.values)
            .for_each(|(a, b)| *a += b);
        self.weights
            .iter_mut()
            .zip(other.weights)
            .for_each(|(a, b)| *a += b);
        self
    }

    fn finish(self, threshold: f64) -> Splatted {
        let (h, w, c) = (self.h, self.w, self.c);
        let mut values = Array3::zeros((h, w, c));
        let mut mask = Array2::from_elem((h, w), false);
        let weights = Array2::from_shape_vec((h, w), self.weights.clone()).expect("h * w weights");
        for r in 0..h {
            for col in 0..w {
                let cell = r * w + col;
                let wsum = self.weights[cell];
                if wsum > threshold {
                    mask[[r, col]] = true;
                    for k in 0..c {
                        values[[r, col, k]] = self.values[cell * c + k] / wsum;
                    }
                }
            }
        }
        Splatted {
            values,
            mask,
            weights,
        }
    }
}

/// Output of the splatting kernel.
#[derive(Clone, Debug)]
pub(crate) struct Splatted {
    pub values: Array3<f64>,
    pub mask: ValidityMask,
    /// Accumulated bilinear weight per cell.
    pub weights: Array2<f64>,
}

/// Splats `values[i]` (a row of an `N x C` array) at `positions[i]`.
pub(crate) fn splat(
    positions: &[Point],
    values: ArrayView2<'_, f64>,
    shape: (usize, usize),
    threshold: f64,
) -> Splatted {
    let (h, w) = shape;
    let c = values.ncols();
    debug_assert_eq!(positions.len(), values.nrows());
    let accumulate = |range: std::ops::Range<usize>| {
        let mut acc = Accumulator::new(h, w, c);
        for i in range {
            let p = positions[i];
            if p.x.is_finite() && p.y.is_finite() {
                let row = values.row(i);
                match row.as_slice() {
                    Some(v) => acc.add(p.x, p.y, v, 1.0),
                    None => acc.add(p.x, p.y, &row.to_vec(), 1.0),
                }
            }
        }
        acc
    };
    let n = positions.len();
    let acc = if n >= PARALLEL_MIN_SAMPLES && !exec::is_deterministic() {
        let chunks: Vec<_> = (0..n.div_ceil(SPLAT_CHUNK))
            .into_par_iter()
            .map(|i| accumulate(i * SPLAT_CHUNK..((i + 1) * SPLAT_CHUNK).min(n)))
            .collect();
        chunks
            .into_iter()
            .reduce(Accumulator::merge)
            .unwrap_or_else(|| Accumulator::new(h, w, c))
    } else {
        accumulate(0..n)
    };
    acc.finish(threshold)
}

/// Interpolates scattered samples onto an `H x W` grid with `channels`
/// channels by inverse bilinear interpolation.
///
/// Every sample adds `value * w` and `w` to each of its four surrounding grid
/// cells, where `w` is the bilinear weight of the sample position relative to
/// that cell times `weight_scale`. Each cell ends up as accumulated value over
/// accumulated weight where the weight exceeds `weight_threshold`; all other
/// cells are zero and invalid in the returned mask. Samples lying entirely
/// outside `(-1, W) x (-1, H)` touch no cell and are dropped, as are samples
/// with non-finite positions.
///
/// Samples are processed in input order. This entry point always runs
/// sequentially; the flow operations use a chunked parallel variant for large
/// inputs unless [`exec::set_deterministic`] is on.
///
/// # Panics
///
/// If a sample's value does not have `channels` entries.
pub fn grid_from_unstructured_data(
    samples: &[ScatterSample],
    shape: (usize, usize),
    channels: usize,
    weight_threshold: f64,
) -> (Array3<f64>, ValidityMask) {
    let (h, w) = shape;
    let mut acc = Accumulator::new(h, w, channels);
    for s in samples {
        assert_eq!(
            s.value.len(),
            channels,
            "sample value has {} channels, expected {channels}",
            s.value.len()
        );
        let p = s.position;
        if p.x.is_finite() && p.y.is_finite() && s.weight_scale > 0.0 {
            acc.add(p.x, p.y, &s.value, s.weight_scale);
        }
    }
    let out = acc.finish(weight_threshold);
    (out.values, out.mask)
}
