//! Operations on a single flow field: applying it to data, tracking points,
//! switching its reference, inverting it, and evaluating it.

mod apply;
mod fit;
mod reference;
mod valid;

pub use apply::{apply, apply_to_field, apply_with_threshold, track, Tracked, Warped, MASK_THRESHOLD};
pub use fit::{fit_matrix, MatrixFit};
pub use reference::{invert, switch_reference};
pub use valid::{
    get_padding, valid_source, valid_source_general, valid_target, valid_target_general,
};

use crate::error::Result;
use crate::field::{check_finite, FlowField};

/// Applies `func` to every vector `(x, y)`. Reference and mask are kept.
///
/// Fails if `func` produces a non-finite component under a valid mask bit.
pub fn map_vectors<F>(f: &FlowField, func: F) -> Result<FlowField>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let mut vectors = f.vectors().to_owned();
    for mut v in vectors.lanes_mut(ndarray::Axis(2)) {
        let [x, y] = func([v[0], v[1]]);
        v[0] = x;
        v[1] = y;
    }
    check_finite(vectors.view(), f.mask())?;
    Ok(FlowField::from_parts(vectors, f.reference(), f.mask().to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FlowError;
    use crate::field::Reference;
    use ndarray::{s, Array2, Array3};

    fn constant(v: [f64; 2]) -> FlowField {
        let mut a = Array3::zeros((3, 4, 2));
        a.slice_mut(s![.., .., 0]).fill(v[0]);
        a.slice_mut(s![.., .., 1]).fill(v[1]);
        let mut m = Array2::from_elem((3, 4), true);
        m[[0, 1]] = false;
        FlowField::new(a, Reference::Target, Some(m)).unwrap()
    }

    #[test]
    fn cube_components() {
        let f = constant([2.0, -1.0]);
        let g = map_vectors(&f, |[x, y]| [x.powi(3), y.powi(3)]).unwrap();
        assert!(g.vectors().lanes(ndarray::Axis(2)).into_iter().all(|v| v[0] == 8.0 && v[1] == -1.0));
        assert_eq!(g.mask(), f.mask());
        assert_eq!(g.reference(), Reference::Target);
    }

    #[test]
    fn identity_and_negation() {
        let f = constant([0.25, 3.0]);
        assert_eq!(map_vectors(&f, |v| v).unwrap(), f);
        let n = map_vectors(&f, |[x, y]| [-x, -y]).unwrap();
        assert_eq!(n.vector(2, 2), [-0.25, -3.0]);
        assert_eq!(n.mask(), f.mask());
    }

    #[test]
    fn non_finite_output_under_valid_mask_fails() {
        let f = constant([1.0, 1.0]);
        assert!(matches!(
            map_vectors(&f, |[x, _]| [x / 0.0, 0.0]),
            Err(FlowError::NonFinite { .. })
        ));
    }
}
