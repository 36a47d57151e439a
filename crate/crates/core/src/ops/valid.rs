//! Valid source and target areas, and the padding that avoids invalid areas.
//!
//! The valid target area of a flow 1 to 2 is where the second frame receives
//! data when the flow is applied to an all-ones image; the valid source area
//! is where the first frame's data survives, i.e. the valid target area of
//! the inverse flow.

use ndarray::{Array2, Array3};

use crate::field::{FlowField, Padding, Reference, ValidityMask};
use crate::interp::{in_bounds, OUT_OF_BOUNDS_TOL};

use super::apply::{apply, splat_raw, MASK_THRESHOLD};
use super::reference::invert;

/// Where warping an all-ones image with `f` yields at least `min_weight`:
/// splat density for source reference, in-bounds sampling for target
/// reference.
fn ones_warp(f: &FlowField, min_weight: f64) -> ValidityMask {
    let (h, w) = f.shape();
    let ones = Array3::ones((h, w, 1));
    match f.reference() {
        Reference::Source => {
            let out = splat_raw(f.vectors(), f.mask(), 1.0, ones.view(), None, 0.0);
            out.weights.mapv(|wt| wt > 0.0 && wt >= min_weight)
        }
        Reference::Target => apply(f, ones.view(), None).expect("ones image matches flow shape").mask,
    }
}

/// Cells whose grid point moved along `sign * F` stays on the grid.
fn endpoint_in_bounds(f: &FlowField, sign: f64) -> ValidityMask {
    let (h, w) = f.shape();
    let v = f.vectors();
    Array2::from_shape_fn((h, w), |(r, c)| {
        f.is_valid(r, c)
            && in_bounds(
                c as f64 + sign * v[[r, c, 0]],
                r as f64 + sign * v[[r, c, 1]],
                h,
                w,
            )
    })
}

/// Valid target area via an explicit warp of an all-ones image. For
/// source-reference flows a cell needs a splatted weight of at least
/// `min_weight`; pass 0 for the literal "any weight" rule.
pub fn valid_target_general(f: &FlowField, min_weight: f64) -> ValidityMask {
    ones_warp(f, min_weight)
}

/// Valid source area via the inverse flow.
pub fn valid_source_general(f: &FlowField, min_weight: f64) -> ValidityMask {
    ones_warp(&invert(f), min_weight)
}

/// Valid target area, matching the mask [`apply`] produces. Target-reference
/// flows use the direct test "`g - F(g)` is on the grid".
pub fn valid_target(f: &FlowField) -> ValidityMask {
    match f.reference() {
        Reference::Target => endpoint_in_bounds(f, -1.0),
        Reference::Source => valid_target_general(f, MASK_THRESHOLD),
    }
}

/// Valid source area. Source-reference flows use the direct test
/// "`g + F(g)` is on the grid".
pub fn valid_source(f: &FlowField) -> ValidityMask {
    match f.reference() {
        Reference::Source => endpoint_in_bounds(f, 1.0),
        Reference::Target => valid_source_general(f, MASK_THRESHOLD),
    }
}

/// Smallest padding such that every valid vector's off-grid end (`g + F` for
/// source reference, `g - F` for target reference) lands on the padded grid.
pub fn get_padding(f: &FlowField) -> Padding {
    let sign = match f.reference() {
        Reference::Source => 1.0,
        Reference::Target => -1.0,
    };
    let (h, w) = f.shape();
    let v = f.vectors();
    let (mut min_x, mut max_x) = (0.0f64, (w - 1) as f64);
    let (mut min_y, mut max_y) = (0.0f64, (h - 1) as f64);
    for ((r, c), &valid) in f.mask().indexed_iter() {
        if valid {
            let x = c as f64 + sign * v[[r, c, 0]];
            let y = r as f64 + sign * v[[r, c, 1]];
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    let need = |excess: f64| (excess - OUT_OF_BOUNDS_TOL).max(0.0).ceil() as usize;
    Padding::new(
        need(-min_y),
        need(max_y - (h - 1) as f64),
        need(-min_x),
        need(max_x - (w - 1) as f64),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Transform;
    use ndarray::s;

    fn constant(shape: (usize, usize), v: [f64; 2], reference: Reference) -> FlowField {
        let mut a = Array3::zeros((shape.0, shape.1, 2));
        a.slice_mut(s![.., .., 0]).fill(v[0]);
        a.slice_mut(s![.., .., 1]).fill(v[1]);
        FlowField::new(a, reference, None).unwrap()
    }

    #[test]
    fn zero_flow_is_fully_valid() {
        for reference in [Reference::Source, Reference::Target] {
            let f = FlowField::zeros((5, 7), reference).unwrap();
            assert!(valid_source(&f).iter().all(|&m| m));
            assert!(valid_target(&f).iter().all(|&m| m));
            assert!(valid_source_general(&f, 0.0).iter().all(|&m| m));
            assert!(valid_target_general(&f, 0.0).iter().all(|&m| m));
            assert_eq!(get_padding(&f), Padding::default());
        }
    }

    #[test]
    fn target_constant_valid_target() {
        let f = constant((5, 10), [3.0, -2.0], Reference::Target);
        let fast = valid_target(&f);
        let general = valid_target_general(&f, MASK_THRESHOLD);
        for ((r, c), &m) in fast.indexed_iter() {
            let x = c as f64 - 3.0;
            let y = r as f64 + 2.0;
            assert_eq!(m, !(x < 0.0 || y > 4.0), "({r}, {c})");
        }
        assert_eq!(fast, general);
    }

    #[test]
    fn source_constant_valid_source_paths_agree() {
        let f = constant((6, 9), [-1.5, 2.0], Reference::Source);
        let fast = valid_source(&f);
        let general = valid_source_general(&f, MASK_THRESHOLD);
        for ((r, c), &m) in fast.indexed_iter() {
            let x = c as f64 - 1.5;
            let y = r as f64 + 2.0;
            assert_eq!(m, x >= 0.0 && y <= 5.0, "({r}, {c})");
        }
        let differ = fast.iter().zip(general.iter()).filter(|(a, b)| a != b).count();
        // Half-pixel shifts put the general path's coverage edge one column
        // further out.
        assert!(differ <= 6, "{differ} cells differ");
    }

    #[test]
    fn rotation_loses_corners() {
        let (h, w) = (40, 60);
        let f = FlowField::from_transforms(
            &[Transform::Rotation {
                cx: (w - 1) as f64 / 2.0,
                cy: (h - 1) as f64 / 2.0,
                degrees: 30.0,
            }],
            (h, w),
            Reference::Source,
            None,
        )
        .unwrap();
        for mask in [valid_source(&f), valid_target(&f)] {
            for (r, c) in [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)] {
                assert!(!mask[[r, c]], "corner ({r}, {c}) should be lost");
            }
            assert!(mask[[h / 2, w / 2]]);
        }
    }

    #[test]
    fn padding_of_constant_flows() {
        assert_eq!(
            get_padding(&constant((5, 10), [3.0, -2.0], Reference::Target)),
            Padding::new(0, 2, 3, 0)
        );
        assert_eq!(
            get_padding(&constant((5, 10), [3.0, -2.0], Reference::Source)),
            Padding::new(2, 0, 0, 3)
        );
    }

    #[test]
    fn padding_scan_matches_brute_force_oracle() {
        let f = FlowField::from_transforms(
            &[
                Transform::Rotation {
                    cx: 12.0,
                    cy: 7.0,
                    degrees: 13.0,
                },
                Transform::Translation { tx: 2.3, ty: -1.7 },
            ],
            (15, 25),
            Reference::Target,
            None,
        )
        .unwrap();
        let p = get_padding(&f);
        // Smallest integer pads that keep every g - F on the padded grid.
        let (h, w) = f.shape();
        let fits = |p: Padding| {
            (0..h).all(|r| {
                (0..w).all(|c| {
                    let [vx, vy] = f.vector(r, c);
                    let (x, y) = (c as f64 - vx, r as f64 - vy);
                    x >= -(p.left as f64)
                        && x <= (w - 1 + p.right) as f64
                        && y >= -(p.top as f64)
                        && y <= (h - 1 + p.bottom) as f64
                })
            })
        };
        assert!(fits(p));
        for k in 0..4 {
            let mut a = p.as_array();
            if a[k] > 0 {
                a[k] -= 1;
                assert!(!fits(Padding::new(a[0], a[1], a[2], a[3])));
            }
        }
    }

    #[test]
    fn fast_and_general_paths_agree_on_random_affine_flows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let (h, w) = (150, 250);
        let mut total = [0usize; 2];
        for _ in 0..200 {
            let t = [
                Transform::Rotation {
                    cx: rng.random_range(0.0..w as f64),
                    cy: rng.random_range(0.0..h as f64),
                    degrees: rng.random_range(-15.0..15.0),
                },
                Transform::Scaling {
                    cx: rng.random_range(0.0..w as f64),
                    cy: rng.random_range(0.0..h as f64),
                    factor: rng.random_range(0.9..1.1),
                },
                Transform::Translation {
                    tx: rng.random_range(-5.0..5.0),
                    ty: rng.random_range(-5.0..5.0),
                },
            ];
            let src = FlowField::from_transforms(&t, (h, w), Reference::Source, None).unwrap();
            let tgt = FlowField::from_transforms(&t, (h, w), Reference::Target, None).unwrap();
            let pairs = [
                (valid_source(&src), valid_source_general(&src, MASK_THRESHOLD)),
                (valid_target(&tgt), valid_target_general(&tgt, MASK_THRESHOLD)),
            ];
            for (k, (fast, general)) in pairs.iter().enumerate() {
                let f = if k == 0 { &src } else { &tgt };
                let sign = if k == 0 { 1.0 } else { -1.0 };
                let mut differ = 0;
                for (((r, c), a), b) in fast.indexed_iter().zip(general.iter()) {
                    if a != b {
                        differ += 1;
                        // Only cells on the grid border or whose end point sits
                        // within a pixel of it.
                        let [vx, vy] = f.vector(r, c);
                        let (x, y) = (c as f64 + sign * vx, r as f64 + sign * vy);
                        let border = x.min(y).min((w - 1) as f64 - x).min((h - 1) as f64 - y);
                        let edge = r == 0 || c == 0 || r == h - 1 || c == w - 1;
                        assert!(edge || border.abs() < 1.0, "({r}, {c}) is {border} px from the border");
                    }
                }
                total[k] += differ;
            }
        }
        // Under 1% of all cells over the whole batch.
        assert!(total.iter().all(|&d| d * 100 < 200 * h * w), "{total:?}");
    }
}
