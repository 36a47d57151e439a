//! Dense 2D optical flow fields: construction, warping, reference switching,
//! inversion, composition, visualization and `.flo` I/O.
//!
//! A [`FlowField`] stores one `(x, y)` displacement per pixel, a validity
//! mask, and a [`Reference`] saying which frame's grid the vectors sit on.

pub mod compose;
pub mod error;
pub mod exec;
pub mod field;
pub mod interp;
pub mod io;
pub mod ops;
pub mod synthetic;
pub mod transform;
pub mod verify;
pub mod viz;

pub use compose::{combine, combine_fast_mode3_target, ComposeMode};
pub use error::{FlowError, Result};
pub use field::{FlowField, Padding, Point, PointSet, Reference, ValidityMask};
pub use transform::{compose_list, AffineTransform, Transform};
