use nalgebra::{Matrix2, Vector2};

use crate::error::{FlowError, Result};
use crate::field::{FlowField, Reference};
use crate::transform::AffineTransform;

/// Least-squares affine fit of a flow field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixFit {
    pub transform: AffineTransform,
    /// Root-mean-square end-point residual in pixels.
    pub rms_residual: f64,
}

/// Fits the affine map `M` (first frame to second) that best explains the
/// valid vectors.
///
/// Correspondences are `g -> g + F` for source reference and `g - F -> g` for
/// target reference; all valid cells count equally. Needs at least three
/// non-collinear valid cells.
pub fn fit_matrix(f: &FlowField) -> Result<MatrixFit> {
    let v = f.vectors();
    let pairs: Vec<(Vector2<f64>, Vector2<f64>)> = f
        .mask()
        .indexed_iter()
        .filter(|(_, &m)| m)
        .map(|((r, c), _)| {
            let g = Vector2::new(c as f64, r as f64);
            let d = Vector2::new(v[[r, c, 0]], v[[r, c, 1]]);
            match f.reference() {
                Reference::Source => (g, g + d),
                Reference::Target => (g - d, g),
            }
        })
        .collect();
    if pairs.len() < 3 {
        return Err(FlowError::DegenerateFit(format!(
            "{} valid cells, need at least 3",
            pairs.len()
        )));
    }

    let n = pairs.len() as f64;
    let src_mean = pairs.iter().map(|p| p.0).sum::<Vector2<f64>>() / n;
    let dst_mean = pairs.iter().map(|p| p.1).sum::<Vector2<f64>>() / n;
    let mut cov_ss = Matrix2::zeros();
    let mut cov_ds = Matrix2::zeros();
    for (s, d) in &pairs {
        let u = s - src_mean;
        cov_ss += u * u.transpose();
        cov_ds += (d - dst_mean) * u.transpose();
    }
    // Collinear support makes the source scatter matrix rank-deficient.
    let scale = cov_ss.trace();
    if scale <= 0.0 || cov_ss.determinant() <= 1e-12 * scale * scale {
        return Err(FlowError::DegenerateFit(
            "valid cells are collinear".into(),
        ));
    }
    let inv = cov_ss.try_inverse().ok_or_else(|| {
        FlowError::DegenerateFit("valid cells are collinear".into())
    })?;
    let lin = cov_ds * inv;
    let t = dst_mean - lin * src_mean;
    let transform = AffineTransform::from_rows([
        [lin[(0, 0)], lin[(0, 1)], t.x],
        [lin[(1, 0)], lin[(1, 1)], t.y],
    ]);

    let sq: f64 = pairs
        .iter()
        .map(|(s, d)| (lin * s + t - d).norm_squared())
        .sum();
    Ok(MatrixFit {
        transform,
        rms_residual: (sq / n).sqrt(),
    })
}
