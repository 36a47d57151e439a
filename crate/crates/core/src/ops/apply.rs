use ndarray::{Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut1, ArrayViewMut2, Axis};
use rayon::prelude::*;

use crate::error::{FlowError, Result};
use crate::exec;
use crate::field::{FlowField, Point, PointSet, Reference};
use crate::interp::{self, DEFAULT_WEIGHT_THRESHOLD};

use super::reference::switch_reference;

/// A mask warped as continuous data keeps the cells where it reaches this
/// value: bilinear sampling of the mask for target reference, splat density
/// of the valid samples for source reference.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Warped data and where it is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub data: Array3<f64>,
    pub mask: Array2<bool>,
}

/// Tracked point positions and whether each is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracked {
    pub points: PointSet,
    pub valid: Vec<bool>,
}

/// Warps `(H, W, C)` data from the first frame to the second.
///
/// Source reference splats each valid datum to `g + F(g)`; a cell is valid
/// when the splatted weight of valid data reaches [`MASK_THRESHOLD`], which
/// drops the thin fringe at the edge of the covered area. Target reference
/// samples the data bilinearly at `g - F(g)`; cells whose sample point falls
/// outside the grid, whose flow vector is invalid, or whose sample lands
/// mostly in invalid data are marked invalid. Invalid output cells hold
/// zeros.
pub fn apply(
    f: &FlowField,
    data: ArrayView3<'_, f64>,
    data_mask: Option<ArrayView2<'_, bool>>,
) -> Result<Warped> {
    apply_with_threshold(f, data, data_mask, DEFAULT_WEIGHT_THRESHOLD)
}

/// [`apply`] with an explicit weight threshold below which splatted data is
/// left undefined (source reference only).
pub fn apply_with_threshold(
    f: &FlowField,
    data: ArrayView3<'_, f64>,
    data_mask: Option<ArrayView2<'_, bool>>,
    weight_threshold: f64,
) -> Result<Warped> {
    let (h, w, _) = data.dim();
    if (h, w) != f.shape() {
        return Err(FlowError::ShapeMismatch(format!(
            "data is {h}x{w}, flow is {}x{}",
            f.height(),
            f.width()
        )));
    }
    if let Some(m) = &data_mask {
        if m.dim() != (h, w) {
            return Err(FlowError::ShapeMismatch(format!(
                "data mask is {}x{}, data is {h}x{w}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(match f.reference() {
        Reference::Source => forward_splat(
            f.vectors(),
            f.mask(),
            1.0,
            data,
            data_mask,
            weight_threshold,
        ),
        Reference::Target => backward_sample(f, data, data_mask),
    })
}

/// Applies `f` to the vectors of another flow field, carrying its mask. The
/// result keeps the reference tag of `data`.
pub fn apply_to_field(f: &FlowField, data: &FlowField) -> Result<FlowField> {
    let warped = apply(f, data.vectors(), Some(data.mask()))?;
    Ok(FlowField::from_parts(
        warped.data,
        data.reference(),
        warped.mask,
    ))
}

/// Splats `data(g)` to `g + sign * displacement(g)` for every cell where
/// both masks hold.
pub(crate) fn forward_splat(
    displacement: ArrayView3<'_, f64>,
    anchor_mask: ArrayView2<'_, bool>,
    sign: f64,
    data: ArrayView3<'_, f64>,
    data_mask: Option<ArrayView2<'_, bool>>,
    weight_threshold: f64,
) -> Warped {
    let out = splat_raw(displacement, anchor_mask, sign, data, data_mask, weight_threshold);
    let mask = ndarray::Zip::from(&out.mask)
        .and(&out.weights)
        .map_collect(|&m, &wt| m && wt >= MASK_THRESHOLD);
    let mut data = out.values;
    for ((r, col), &m) in mask.indexed_iter() {
        if !m {
            data.slice_mut(ndarray::s![r, col, ..]).fill(0.0);
        }
    }
    Warped { data, mask }
}

pub(crate) fn splat_raw(
    displacement: ArrayView3<'_, f64>,
    anchor_mask: ArrayView2<'_, bool>,
    sign: f64,
    data: ArrayView3<'_, f64>,
    data_mask: Option<ArrayView2<'_, bool>>,
    weight_threshold: f64,
) -> interp::Splatted {
    let (h, w, c) = data.dim();
    let mut positions = Vec::with_capacity(h * w);
    let mut values = Vec::with_capacity(h * w * c);
    for r in 0..h {
        for col in 0..w {
            let ok = anchor_mask[[r, col]] && data_mask.as_ref().is_none_or(|m| m[[r, col]]);
            if !ok {
                continue;
            }
            positions.push(Point::new(
                col as f64 + sign * displacement[[r, col, 0]],
                r as f64 + sign * displacement[[r, col, 1]],
            ));
            values.extend((0..c).map(|k| data[[r, col, k]]));
        }
    }
    let values = Array2::from_shape_vec((positions.len(), c), values)
        .expect("one value row per position");
    interp::splat(&positions, values.view(), (h, w), weight_threshold)
}

fn backward_sample(
    f: &FlowField,
    data: ArrayView3<'_, f64>,
    data_mask: Option<ArrayView2<'_, bool>>,
) -> Warped {
    let (h, w, c) = data.dim();
    let mut out = Array3::zeros((h, w, c));
    let mut mask = Array2::from_elem((h, w), false);
    let vectors = f.vectors();
    let flow_mask = f.mask();

    let row_op = |r: usize, mut out_row: ArrayViewMut2<'_, f64>, mut mask_row: ArrayViewMut1<'_, bool>| {
        let mut buf = vec![0.0; c];
        for col in 0..w {
            if !flow_mask[[r, col]] {
                continue;
            }
            let x = col as f64 - vectors[[r, col, 0]];
            let y = r as f64 - vectors[[r, col, 1]];
            let ok = match &data_mask {
                Some(m) => {
                    let wsum = interp::sample_masked_into(&data, m, x, y, &mut buf);
                    interp::in_bounds(x, y, h, w) && wsum >= MASK_THRESHOLD
                }
                None => interp::sample_into(&data, x, y, &mut buf),
            };
            if ok {
                mask_row[col] = true;
                for (k, v) in buf.iter().enumerate() {
                    out_row[[col, k]] = *v;
                }
            }
        }
    };

    if exec::is_deterministic() {
        for (r, (o, m)) in out
            .axis_iter_mut(Axis(0))
            .zip(mask.axis_iter_mut(Axis(0)))
            .enumerate()
        {
            row_op(r, o, m);
        }
    } else {
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(mask.axis_iter_mut(Axis(0)).into_par_iter())
            .enumerate()
            .for_each(|(r, (o, m))| row_op(r, o, m));
    }
    Warped { data: out, mask }
}

/// Moves points from the first frame to the second.
///
/// Source reference adds the flow bilinearly sampled at each point. Target
/// reference vectors are anchored at unknown first-frame positions, so the
/// field is switched to source reference first, at the cost of one splat.
/// A point is invalid if it falls outside the grid or mostly on invalid
/// vectors.
pub fn track(f: &FlowField, points: &[Point]) -> Result<Tracked> {
    let source;
    let f = match f.reference() {
        Reference::Source => f,
        Reference::Target => {
            source = switch_reference(f);
            &source
        }
    };
    let (h, w) = f.shape();
    let vectors = f.vectors();
    let mask = f.mask();
    let mut buf = [0.0; 2];
    let mut out = Vec::with_capacity(points.len());
    let mut valid = Vec::with_capacity(points.len());
    for p in points {
        let wsum = interp::sample_masked_into(&vectors, &mask, p.x, p.y, &mut buf);
        out.push(Point::new(p.x + buf[0], p.y + buf[1]));
        valid.push(interp::in_bounds(p.x, p.y, h, w) && wsum >= MASK_THRESHOLD);
    }
    Ok(Tracked { points: out, valid })
}
