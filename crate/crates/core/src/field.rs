//! The flow field data model.
//!
//! A [`FlowField`] stores one displacement vector per pixel of an `H x W`
//! grid spanning pixel coordinates `0..=W-1` horizontally and `0..=H-1`
//! vertically. Vectors are stored interleaved as an `(H, W, 2)` array holding
//! `(x, y)` components, x positive to the right and y positive downwards.
//!
//! The [`Reference`] tag says which end of the mapping sits on the grid:
//!
//! * `Source`: vectors are anchored at grid pixels of the first frame and
//!   point to continuous positions in the second, `F = X2 - G`.
//! * `Target`: vectors are anchored at grid pixels of the second frame and
//!   point back from continuous positions in the first, `F = G - X1`.
//!
//! Fields are immutable values; every operation returns a new field.

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Zip};

use crate::error::{FlowError, Result};
use crate::transform::{compose_list, AffineTransform, Transform};

/// Per-pixel validity; `true` where the flow vector or data is defined.
pub type ValidityMask = Array2<bool>;

/// Continuous point coordinates, in pixels.
pub type PointSet = Vec<Point>;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Frame of reference of a flow field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reference {
    Source,
    Target,
}

impl Reference {
    pub fn flipped(self) -> Self {
        match self {
            Reference::Source => Reference::Target,
            Reference::Target => Reference::Source,
        }
    }

    /// Single-letter tag, `s` or `t`.
    pub fn tag(self) -> char {
        match self {
            Reference::Source => 's',
            Reference::Target => 't',
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

impl FromStr for Reference {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s" | "source" => Ok(Reference::Source),
            "t" | "target" => Ok(Reference::Target),
            other => Err(FlowError::InvalidArgument(format!(
                "reference must be `s` or `t`, got `{other}`"
            ))),
        }
    }
}

/// Border widths in pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn new(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        Self {
            top,
            bottom,
            left,
            right,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Padding::default()
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.top, self.bottom, self.left, self.right]
    }
}

impl Add for Padding {
    type Output = Padding;

    fn add(self, rhs: Padding) -> Padding {
        Padding::new(
            self.top + rhs.top,
            self.bottom + rhs.bottom,
            self.left + rhs.left,
            self.right + rhs.right,
        )
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.top, self.bottom, self.left, self.right)
    }
}

impl FromStr for Padding {
    type Err = FlowError;

    /// Parses `top,bottom,left,right`.
    fn from_str(s: &str) -> Result<Self> {
        let vals = s
            .split(',')
            .map(|v| {
                v.trim().parse::<usize>().map_err(|_| {
                    FlowError::InvalidArgument(format!("bad padding value `{}`", v.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match vals[..] {
            [t, b, l, r] => Ok(Padding::new(t, b, l, r)),
            _ => Err(FlowError::InvalidArgument(format!(
                "padding needs 4 values T,B,L,R, got `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    vectors: Array3<f64>,
    reference: Reference,
    mask: ValidityMask,
}

impl FlowField {
    /// Creates a flow field from `(H, W, 2)` vectors. A missing mask means
    /// every vector is valid.
    pub fn new(
        vectors: Array3<f64>,
        reference: Reference,
        mask: Option<ValidityMask>,
    ) -> Result<Self> {
        let (h, w, c) = vectors.dim();
        if c != 2 {
            return Err(FlowError::ShapeMismatch(format!(
                "flow vectors need 2 channels, got {c}"
            )));
        }
        if h == 0 || w == 0 {
            return Err(FlowError::ShapeMismatch(format!(
                "flow field must be at least 1x1, got {h}x{w}"
            )));
        }
        let mask = match mask {
            Some(m) if m.dim() != (h, w) => {
                return Err(FlowError::ShapeMismatch(format!(
                    "mask is {}x{}, vectors are {h}x{w}",
                    m.nrows(),
                    m.ncols()
                )))
            }
            Some(m) => m,
            None => Array2::from_elem((h, w), true),
        };
        check_finite(vectors.view(), mask.view())?;
        Ok(Self {
            vectors,
            reference,
            mask,
        })
    }

    /// Internal constructor for operation results whose invariants hold by
    /// construction.
    pub(crate) fn from_parts(vectors: Array3<f64>, reference: Reference, mask: ValidityMask) -> Self {
        debug_assert_eq!(vectors.dim().2, 2);
        debug_assert_eq!((vectors.dim().0, vectors.dim().1), mask.dim());
        Self {
            vectors,
            reference,
            mask,
        }
    }

    /// The identity flow: all-zero vectors, all valid.
    pub fn zeros(shape: (usize, usize), reference: Reference) -> Result<Self> {
        Self::new(Array3::zeros((shape.0, shape.1, 2)), reference, None)
    }

    /// Flow field of a list of named transforms, composed with
    /// [`compose_list`].
    pub fn from_transforms(
        transforms: &[Transform],
        shape: (usize, usize),
        reference: Reference,
        padding: Option<Padding>,
    ) -> Result<Self> {
        Self::from_matrix(&compose_list(transforms), shape, reference, padding)
    }

    /// Flow field of the affine map `M`, which takes first-frame points to
    /// second-frame points.
    ///
    /// Source reference stores `M g - g`; target reference stores
    /// `g - M^-1 g`. With `padding`, the grid is enlarged by the given borders
    /// and the transform is evaluated over the enlarged area, keeping the
    /// original `(0, 0)` pixel at the original coordinate origin.
    pub fn from_matrix(
        m: &AffineTransform,
        shape: (usize, usize),
        reference: Reference,
        padding: Option<Padding>,
    ) -> Result<Self> {
        let p = padding.unwrap_or_default();
        let (h, w) = (shape.0 + p.top + p.bottom, shape.1 + p.left + p.right);
        if h == 0 || w == 0 {
            return Err(FlowError::ShapeMismatch(format!(
                "flow field must be at least 1x1, got {h}x{w}"
            )));
        }
        let map = match reference {
            Reference::Source => *m,
            Reference::Target => m.inverse()?,
        };
        let mut vectors = Array3::zeros((h, w, 2));
        for r in 0..h {
            for c in 0..w {
                let g = Point::new(c as f64 - p.left as f64, r as f64 - p.top as f64);
                let q = map.apply(g);
                let (dx, dy) = match reference {
                    Reference::Source => (q.x - g.x, q.y - g.y),
                    Reference::Target => (g.x - q.x, g.y - q.y),
                };
                vectors[[r, c, 0]] = dx;
                vectors[[r, c, 1]] = dy;
            }
        }
        Self::new(vectors, reference, None)
    }

    pub fn vectors(&self) -> ArrayView3<'_, f64> {
        self.vectors.view()
    }

    pub fn mask(&self) -> ArrayView2<'_, bool> {
        self.mask.view()
    }

    pub fn reference(&self) -> Reference {
        self.reference
    }

    /// `(height, width)`.
    pub fn shape(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn height(&self) -> usize {
        self.mask.nrows()
    }

    pub fn width(&self) -> usize {
        self.mask.ncols()
    }

    #[inline]
    pub fn vector(&self, row: usize, col: usize) -> [f64; 2] {
        [self.vectors[[row, col, 0]], self.vectors[[row, col, 1]]]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.mask[[row, col]]
    }

    pub fn into_parts(self) -> (Array3<f64>, Reference, ValidityMask) {
        (self.vectors, self.reference, self.mask)
    }

    /// Same vectors and mask under a different reference tag. This is a
    /// relabelling, not a reference switch; see
    /// [`switch_reference`](crate::ops::switch_reference) for that.
    pub fn with_reference(mut self, reference: Reference) -> Self {
        self.reference = reference;
        self
    }

    /// Same field with the mask replaced.
    pub fn with_mask(self, mask: ValidityMask) -> Result<Self> {
        Self::new(self.vectors, self.reference, Some(mask))
    }

    /// Largest vector magnitude over valid cells, 0 if none are valid.
    pub fn max_magnitude(&self) -> f64 {
        let mut max = 0.0f64;
        Zip::from(self.vectors.lanes(ndarray::Axis(2)))
            .and(&self.mask)
            .for_each(|v, &m| {
                if m {
                    max = max.max(v[0].hypot(v[1]));
                }
            });
        max
    }

    /// Resamples the field to `(round(H * sy), round(W * sx))`.
    ///
    /// Pixel centres are aligned (`src = (dst + 0.5) / s - 0.5`, clamped).
    /// Vectors are blended bilinearly over valid neighbours only and then
    /// scaled per axis. The mask is resampled as 0/1 data and kept where the
    /// blended value reaches 0.5.
    pub fn resize(&self, scale: (f64, f64)) -> Result<Self> {
        let (sy, sx) = scale;
        if !(sy > 0.0 && sx > 0.0 && sy.is_finite() && sx.is_finite()) {
            return Err(FlowError::InvalidArgument(format!(
                "resize scale must be positive, got ({sy}, {sx})"
            )));
        }
        let (h, w) = self.shape();
        let nh = (h as f64 * sy).round() as usize;
        let nw = (w as f64 * sx).round() as usize;
        if nh == 0 || nw == 0 {
            return Err(FlowError::InvalidArgument(format!(
                "resize to {nh}x{nw} leaves an empty grid"
            )));
        }
        if (nh, nw) == (h, w) && sy == 1.0 && sx == 1.0 {
            return Ok(self.clone());
        }

        let taps = |dst: usize, n_src: usize, s: f64| -> (usize, usize, f64) {
            let src = ((dst as f64 + 0.5) / s - 0.5).clamp(0.0, (n_src - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_src - 1);
            (i0, i1, src - i0 as f64)
        };

        let mut vectors = Array3::zeros((nh, nw, 2));
        let mut mask = Array2::from_elem((nh, nw), false);
        for r in 0..nh {
            let (r0, r1, fy) = taps(r, h, sy);
            for c in 0..nw {
                let (c0, c1, fx) = taps(c, w, sx);
                let mut acc = [0.0f64; 2];
                let mut weight = 0.0f64;
                for (rr, wy) in [(r0, 1.0 - fy), (r1, fy)] {
                    for (cc, wx) in [(c0, 1.0 - fx), (c1, fx)] {
                        let wgt = wy * wx;
                        if wgt > 0.0 && self.mask[[rr, cc]] {
                            acc[0] += wgt * self.vectors[[rr, cc, 0]];
                            acc[1] += wgt * self.vectors[[rr, cc, 1]];
                            weight += wgt;
                        }
                    }
                }
                if weight >= 0.5 {
                    mask[[r, c]] = true;
                    vectors[[r, c, 0]] = acc[0] / weight * sx;
                    vectors[[r, c, 1]] = acc[1] / weight * sy;
                }
            }
        }
        Ok(Self::from_parts(vectors, self.reference, mask))
    }

    /// Grows the grid by `p`; new border cells hold zero vectors and are
    /// invalid.
    pub fn pad(&self, p: Padding) -> Self {
        let (h, w) = self.shape();
        let (nh, nw) = (h + p.top + p.bottom, w + p.left + p.right);
        let mut vectors = Array3::zeros((nh, nw, 2));
        let mut mask = Array2::from_elem((nh, nw), false);
        vectors
            .slice_mut(s![p.top..p.top + h, p.left..p.left + w, ..])
            .assign(&self.vectors);
        mask.slice_mut(s![p.top..p.top + h, p.left..p.left + w])
            .assign(&self.mask);
        Self::from_parts(vectors, self.reference, mask)
    }

    /// Crops `p` off each border.
    pub fn unpad(&self, p: Padding) -> Result<Self> {
        let (h, w) = self.shape();
        if p.top + p.bottom >= h || p.left + p.right >= w {
            return Err(FlowError::PaddingTooLarge {
                requested: format!("({p})"),
                available: format!("{h}x{w}"),
            });
        }
        let rows = p.top..h - p.bottom;
        let cols = p.left..w - p.right;
        Ok(Self::from_parts(
            self.vectors
                .slice(s![rows.clone(), cols.clone(), ..])
                .to_owned(),
            self.reference,
            self.mask.slice(s![rows, cols]).to_owned(),
        ))
    }
}

pub(crate) fn check_finite(vectors: ArrayView3<'_, f64>, mask: ArrayView2<'_, bool>) -> Result<()> {
    for ((r, c), &m) in mask.indexed_iter() {
        if m && !(vectors[[r, c, 0]].is_finite() && vectors[[r, c, 1]].is_finite()) {
            return Err(FlowError::NonFinite { row: r, col: c });
        }
    }
    Ok(())
}
