//! Affine transforms in homogeneous image coordinates.
//!
//! Points are column vectors `(x, y, 1)` with x to the right and y downwards.
//! A positive rotation angle is counter-clockwise in the usual mathematical
//! orientation, `x' = x cos a - y sin a`, `y' = x sin a + y cos a`. Because
//! the image y axis points down, this appears clockwise on screen.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use crate::error::{FlowError, Result};
use crate::field::Point;

/// Minimum |det| of the linear part for a transform to count as invertible.
pub const SINGULAR_DET: f64 = 1e-12;

/// A 3x3 homogeneous matrix with bottom row `(0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform(Matrix3<f64>);

impl AffineTransform {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Builds a transform from the top two rows `[[a, b, c], [d, e, f]]`.
    pub fn from_rows(rows: [[f64; 3]; 2]) -> Self {
        let [[a, b, c], [d, e, f]] = rows;
        Self(Matrix3::new(a, b, c, d, e, f, 0.0, 0.0, 1.0))
    }

    /// Wraps a full 3x3 matrix, rejecting anything that is not affine.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m[(2, 0)] != 0.0 || m[(2, 1)] != 0.0 || m[(2, 2)] != 1.0 {
            return Err(FlowError::InvalidArgument(
                "affine matrix bottom row must be (0, 0, 1)".into(),
            ));
        }
        Ok(Self(m))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_rows([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    /// Rotation by `degrees` about `(cx, cy)`.
    pub fn rotation(cx: f64, cy: f64, degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Self::about_center(cx, cy, [[c, -s], [s, c]])
    }

    /// Isotropic scaling by `factor` about `(cx, cy)`.
    pub fn scaling(cx: f64, cy: f64, factor: f64) -> Self {
        Self::about_center(cx, cy, [[factor, 0.0], [0.0, factor]])
    }

    fn about_center(cx: f64, cy: f64, lin: [[f64; 2]; 2]) -> Self {
        // T(c) * L * T(-c)
        let tx = cx - lin[0][0] * cx - lin[0][1] * cy;
        let ty = cy - lin[1][0] * cx - lin[1][1] * cy;
        Self::from_rows([[lin[0][0], lin[0][1], tx], [lin[1][0], lin[1][1], ty]])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Determinant of the upper-left 2x2 block.
    pub fn linear_det(&self) -> f64 {
        let m = &self.0;
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.linear_det();
        if !det.is_finite() || det.abs() <= SINGULAR_DET {
            return Err(FlowError::SingularMatrix);
        }
        let m = &self.0;
        let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
        let (d, e, f) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Ok(Self::from_rows([
            [ia, ib, -(ia * c + ib * f)],
            [id, ie, -(id * c + ie * f)],
        ]))
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn then_after(&self, other: &AffineTransform) -> Self {
        Self(self.0 * other.0)
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        Point::new(
            m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)],
            m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)],
        )
    }

    pub fn apply_homogeneous(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for AffineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..3 {
            writeln!(
                f,
                "{:>14.8} {:>14.8} {:>14.8}",
                self.0[(r, 0)],
                self.0[(r, 1)],
                self.0[(r, 2)]
            )?;
        }
        Ok(())
    }
}

/// One of the named elementary transforms accepted by
/// [`FlowField::from_transforms`](crate::FlowField::from_transforms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    Translation { tx: f64, ty: f64 },
    Rotation { cx: f64, cy: f64, degrees: f64 },
    Scaling { cx: f64, cy: f64, factor: f64 },
}

impl Transform {
    /// Builds a transform from its name and parameter list, e.g.
    /// `("rotation", [cx, cy, degrees])`.
    pub fn from_named(name: &str, params: &[f64]) -> Result<Self> {
        let expected = match name {
            "translation" => 2,
            "rotation" | "scaling" => 3,
            _ => return Err(FlowError::UnknownTransform(name.to_string())),
        };
        if params.len() != expected {
            return Err(FlowError::TransformArity {
                name: name.to_string(),
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidArgument(format!(
                "non-finite parameter in `{name}`"
            )));
        }
        Ok(match name {
            "translation" => Transform::Translation {
                tx: params[0],
                ty: params[1],
            },
            "rotation" => Transform::Rotation {
                cx: params[0],
                cy: params[1],
                degrees: params[2],
            },
            _ => Transform::Scaling {
                cx: params[0],
                cy: params[1],
                factor: params[2],
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::Translation { .. } => "translation",
            Transform::Rotation { .. } => "rotation",
            Transform::Scaling { .. } => "scaling",
        }
    }

    pub fn to_affine(&self) -> AffineTransform {
        match *self {
            Transform::Translation { tx, ty } => AffineTransform::translation(tx, ty),
            Transform::Rotation { cx, cy, degrees } => AffineTransform::rotation(cx, cy, degrees),
            Transform::Scaling { cx, cy, factor } => AffineTransform::scaling(cx, cy, factor),
        }
    }

    /// Parses the semicolon-separated list grammar
    /// `translation:tx,ty;rotation:cx,cy,deg;scaling:cx,cy,factor`.
    pub fn parse_list(s: &str) -> Result<Vec<Transform>> {
        s.split(';')
            .map(str::trim)
            .filter(|item| !item.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for Transform {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').ok_or_else(|| {
            FlowError::InvalidArgument(format!("expected `name:p1,p2,...`, got `{s}`"))
        })?;
        let params = args
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| {
                    FlowError::InvalidArgument(format!("bad number `{}` in `{s}`", p.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Transform::from_named(name.trim(), &params)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Transform::Translation { tx, ty } => write!(f, "translation:{tx},{ty}"),
            Transform::Rotation { cx, cy, degrees } => write!(f, "rotation:{cx},{cy},{degrees}"),
            Transform::Scaling { cx, cy, factor } => write!(f, "scaling:{cx},{cy},{factor}"),
        }
    }
}

/// Composes a transform list left to right as a matrix product
/// `M = T1 * T2 * ... * Tn`, so the last listed transform acts on points first.
pub fn compose_list(transforms: &[Transform]) -> AffineTransform {
    transforms
        .iter()
        .fold(AffineTransform::identity(), |m, t| m.then_after(&t.to_affine()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotation_matches_matrix_oracle() {
        // 90 degrees about the origin takes +x to +y (down on screen).
        let r = AffineTransform::rotation(0.0, 0.0, 90.0);
        let p = r.apply(Point::new(1.0, 0.0));
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);

        let (s, c) = 30f64.to_radians().sin_cos();
        let oracle = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let centre = Matrix3::new(1.0, 0.0, 5.0, 0.0, 1.0, -3.0, 0.0, 0.0, 1.0);
        let back = Matrix3::new(1.0, 0.0, -5.0, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0);
        let expected = centre * oracle * back;
        let got = AffineTransform::rotation(5.0, -3.0, 30.0);
        for (a, b) in got.matrix().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaling_keeps_centre_fixed() {
        let t = AffineTransform::scaling(110.0, 120.0, 1.02);
        let c = t.apply(Point::new(110.0, 120.0));
        assert_abs_diff_eq!(c.x, 110.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.y, 120.0, epsilon = 1e-12);
        let p = t.apply(Point::new(111.0, 120.0));
        assert_abs_diff_eq!(p.x, 111.02, epsilon = 1e-12);
    }

    #[test]
    fn inverse_roundtrips() {
        let t = AffineTransform::rotation(3.0, 4.0, 17.0)
            .then_after(&AffineTransform::scaling(-2.0, 8.0, 1.3))
            .then_after(&AffineTransform::translation(0.5, -7.0));
        let inv = t.inverse().unwrap();
        let id = inv.then_after(&t);
        for (a, b) in id.matrix().iter().zip(Matrix3::<f64>::identity().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_inverse_fails() {
        let t = AffineTransform::scaling(0.0, 0.0, 0.0);
        assert!(matches!(t.inverse(), Err(FlowError::SingularMatrix)));
    }

    #[test]
    fn list_composes_left_to_right() {
        let list = [
            Transform::Translation { tx: 1.0, ty: 0.0 },
            Transform::Scaling {
                cx: 0.0,
                cy: 0.0,
                factor: 2.0,
            },
        ];
        // T * S: scale first, then translate.
        let p = compose_list(&list).apply(Point::new(1.0, 1.0));
        assert_eq!((p.x, p.y), (3.0, 2.0));
        assert_eq!(compose_list(&[]), AffineTransform::identity());
    }

    #[test]
    fn parses_grammar() {
        let list = Transform::parse_list("translation:20,-10; rotation:1,2,30;scaling:0,0,2").unwrap();
        assert_eq!(
            list,
            vec![
                Transform::Translation { tx: 20.0, ty: -10.0 },
                Transform::Rotation {
                    cx: 1.0,
                    cy: 2.0,
                    degrees: 30.0
                },
                Transform::Scaling {
                    cx: 0.0,
                    cy: 0.0,
                    factor: 2.0
                },
            ]
        );
        for t in &list {
            assert_eq!(&t.to_string().parse::<Transform>().unwrap(), t);
        }
    }

    #[test]
    fn rejects_bad_names_and_arity() {
        assert!(matches!(
            Transform::from_named("shear", &[1.0]),
            Err(FlowError::UnknownTransform(_))
        ));
        assert!(matches!(
            Transform::from_named("rotation", &[1.0, 2.0]),
            Err(FlowError::TransformArity { expected: 3, got: 2, .. })
        ));
        assert!("translation:1,x".parse::<Transform>().is_err());
        assert!("translation".parse::<Transform>().is_err());
    }
}
