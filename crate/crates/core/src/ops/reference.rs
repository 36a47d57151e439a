//! Reference switching and inversion.
//!
//! Both reduce to splatting a vector field along the flow. With `F` the
//! stored vectors and `g` the grid:
//!
//! | operation        | splat position | splatted value |
//! |------------------|----------------|----------------|
//! | switch, s to t   | `g + F`        | `F`            |
//! | switch, t to s   | `g - F`        | `F`            |
//! | invert, s        | `g + F`        | `-F`           |
//! | invert, t        | `g - F`        | `-F`           |
//!
//! The target-reference rows use the fact that `-F_t` of a flow 1 to 2 is
//! exactly the source-reference flow 2 to 1.

use ndarray::Array3;

use crate::field::{FlowField, Reference};
use crate::interp::DEFAULT_WEIGHT_THRESHOLD;

use super::apply::forward_splat;

fn splat_self(f: &FlowField, negate_value: bool) -> (Array3<f64>, ndarray::Array2<bool>) {
    let sign = match f.reference() {
        Reference::Source => 1.0,
        Reference::Target => -1.0,
    };
    let negated;
    let value = if negate_value {
        negated = f.vectors().mapv(|v| -v);
        negated.view()
    } else {
        f.vectors()
    };
    let out = forward_splat(
        f.vectors(),
        f.mask(),
        sign,
        value,
        None,
        DEFAULT_WEIGHT_THRESHOLD,
    );
    (out.data, out.mask)
}

/// Re-anchors the vectors on the other frame's grid. The mapping is unchanged;
/// cells of the new grid that no vector reaches become invalid.
pub fn switch_reference(f: &FlowField) -> FlowField {
    let (vectors, mask) = splat_self(f, false);
    FlowField::from_parts(vectors, f.reference().flipped(), mask)
}

/// The flow of the reverse motion, in the same reference tag. Cells of the
/// output grid that no vector reaches become invalid.
pub fn invert(f: &FlowField) -> FlowField {
    let (vectors, mask) = splat_self(f, true);
    FlowField::from_parts(vectors, f.reference(), mask)
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

    fn mean_epe_on(a: &FlowField, b: &FlowField, mask: impl Fn(usize, usize) -> bool) -> (f64, usize) {
        let (h, w) = a.shape();
        let mut sum = 0.0;
        let mut n = 0;
        for r in 0..h {
            for c in 0..w {
                if mask(r, c) {
                    let [ax, ay] = a.vector(r, c);
                    let [bx, by] = b.vector(r, c);
                    sum += (ax - bx).hypot(ay - by);
                    n += 1;
                }
            }
        }
        (sum / n.max(1) as f64, n)
    }

    #[test]
    fn zero_flow_switches_to_zero() {
        for reference in [Reference::Source, Reference::Target] {
            let f = FlowField::zeros((4, 6), reference).unwrap();
            let s = switch_reference(&f);
            assert_eq!(s.reference(), reference.flipped());
            assert_eq!(s.vectors(), f.vectors());
            assert!(s.mask().iter().all(|&m| m));
            assert_eq!(invert(&f), f);
        }
    }

    #[test]
    fn constant_switch_masks_uncovered_columns() {
        let f = constant((4, 10), [5.0, 0.0], Reference::Source);
        let s = switch_reference(&f);
        assert_eq!(s.reference(), Reference::Target);
        for r in 0..4 {
            for c in 0..10 {
                assert_eq!(s.is_valid(r, c), c >= 5, "({r}, {c})");
                if c >= 5 {
                    assert_eq!(s.vector(r, c), [5.0, 0.0]);
                }
            }
        }
        // Target to source covers the columns the vectors come from.
        let t = switch_reference(&constant((4, 10), [5.0, 0.0], Reference::Target));
        assert_eq!(t.reference(), Reference::Source);
        for c in 0..10 {
            assert_eq!(t.is_valid(0, c), c < 5);
        }
    }

    #[test]
    fn constant_inverse_is_negated() {
        for reference in [Reference::Source, Reference::Target] {
            let f = constant((6, 8), [1.25, -2.5], reference);
            let inv = invert(&f);
            assert_eq!(inv.reference(), reference);
            let mut n = 0;
            for r in 0..6 {
                for c in 0..8 {
                    if inv.is_valid(r, c) {
                        n += 1;
                        let [x, y] = inv.vector(r, c);
                        assert!((x + 1.25).abs() < 1e-12 && (y - 2.5).abs() < 1e-12);
                    }
                }
            }
            assert!(n > 20);
        }
    }

    #[test]
    fn source_affine_switch_matches_target_construction() {
        let t = [
            Transform::Rotation {
                cx: 40.0,
                cy: 30.0,
                degrees: 8.0,
            },
            Transform::Scaling {
                cx: 10.0,
                cy: 50.0,
                factor: 1.05,
            },
        ];
        let src = FlowField::from_transforms(&t, (60, 80), Reference::Source, None).unwrap();
        let tgt = FlowField::from_transforms(&t, (60, 80), Reference::Target, None).unwrap();
        let switched = switch_reference(&src);
        let (epe, n) = mean_epe_on(&switched, &tgt, |r, c| switched.is_valid(r, c));
        assert!(n > 2000, "valid area too small: {n}");
        assert!(epe < 0.05, "mean EPE {epe}");

        let back = switch_reference(&tgt);
        let (epe, n) = mean_epe_on(&back, &src, |r, c| back.is_valid(r, c));
        assert!(n > 2000 && epe < 0.05, "mean EPE {epe} over {n}");
    }

    #[test]
    fn rotation_inverse_matches_opposite_rotation() {
        let (h, w) = (60, 90);
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        for reference in [Reference::Source, Reference::Target] {
            let f = FlowField::from_transforms(
                &[Transform::Rotation { cx, cy, degrees: 20.0 }],
                (h, w),
                reference,
                None,
            )
            .unwrap();
            let oracle = FlowField::from_transforms(
                &[Transform::Rotation { cx, cy, degrees: -20.0 }],
                (h, w),
                reference,
                None,
            )
            .unwrap();
            let inv = invert(&f);
            let (epe, n) = mean_epe_on(&inv, &oracle, |r, c| inv.is_valid(r, c));
            assert!(n > 3000 && epe < 0.05, "{reference}: mean EPE {epe} over {n}");
        }
    }
}
