//! Synthetic ground truth: a tissue shifted under a moving lens.
//!
//! Frames 2 and 3 are both derived from a base frame 1 through a translation
//! and a cubic lens distortion. [`lens_workflow`] builds `f(1->3)` and
//! `f(1->2)`, then composes `f(2->3)`, padding every intermediate grid so the
//! final flow has no invalid area. [`analytic_f23`] evaluates the same motion
//! pointwise without any interpolation.

use crate::compose::{combine, ComposeMode};
use crate::error::Result;
use crate::field::{FlowField, Padding, Point, Reference};
use crate::ops::{get_padding, map_vectors};
use crate::transform::{AffineTransform, Transform};

/// Parameters of the lens workflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LensScene {
    /// `(height, width)`.
    pub size: (usize, usize),
    /// Lens for frame 3: scaling `(cx, cy, factor)`, target reference.
    pub lens1: (f64, f64, f64),
    /// Lens for frame 2: scaling `(cx, cy, factor)`, source reference.
    pub lens2: (f64, f64, f64),
    /// Tissue shift from frame 1 to frame 3.
    pub trans1: (f64, f64),
    /// Tissue shift from frame 1 to frame 2.
    pub trans2: (f64, f64),
}

impl Default for LensScene {
    fn default() -> Self {
        Self {
            size: (200, 250),
            lens1: (110.0, 120.0, 1.02),
            lens2: (140.0, 160.0, 1.02),
            trans1: (20.0, -10.0),
            trans2: (-10.0, -20.0),
        }
    }
}

/// Flows produced by [`lens_workflow`], all of size `scene.size`.
#[derive(Clone, Debug)]
pub struct LensFlows {
    /// Target reference.
    pub f13: FlowField,
    /// Source reference.
    pub f12: FlowField,
    /// Target reference.
    pub f23: FlowField,
    /// Padding needed by `f(1->3)` when composing `f(2->3)`.
    pub pad1: Padding,
    /// Padding needed by the translation inside `f(1->2)`.
    pub pad2: Padding,
}

fn cube([x, y]: [f64; 2]) -> [f64; 2] {
    [x * x * x, y * y * y]
}

fn lens_flow(lens: (f64, f64, f64), size: (usize, usize), reference: Reference, padding: Option<Padding>) -> Result<FlowField> {
    let t = [Transform::Scaling {
        cx: lens.0,
        cy: lens.1,
        factor: lens.2,
    }];
    map_vectors(&FlowField::from_transforms(&t, size, reference, padding)?, cube)
}

/// Builds `f(1->3)`, `f(1->2)` and `f(2->3)` of the scene.
pub fn lens_workflow(scene: &LensScene) -> Result<LensFlows> {
    let size = scene.size;
    let translation = |(tx, ty): (f64, f64)| [Transform::Translation { tx, ty }];

    let lens = lens_flow(scene.lens1, size, Reference::Target, None)?;
    let trans = FlowField::from_transforms(&translation(scene.trans1), size, Reference::Target, None)?;
    let f13 = combine(&trans, &lens, ComposeMode::Three, None)?;

    let pad1 = get_padding(&f13);
    let trans = FlowField::from_transforms(&translation(scene.trans2), size, Reference::Source, Some(pad1))?;
    let pad2 = get_padding(&trans);
    let pad3 = pad1 + pad2;
    let lens = lens_flow(scene.lens2, size, Reference::Source, Some(pad3))?;
    let f12 = combine(&trans.pad(pad2), &lens, ComposeMode::Three, None)?.unpad(pad2)?;

    let f23 = combine(&f12, &f13.pad(pad1), ComposeMode::Two, Some(Reference::Target))?.unpad(pad1)?;
    Ok(LensFlows {
        f13,
        f12: f12.unpad(pad1)?,
        f23,
        pad1,
        pad2,
    })
}

/// `f(2->3)` of the scene, target reference, evaluated exactly at every cell.
pub fn analytic_f23(scene: &LensScene) -> Result<FlowField> {
    let (h, w) = scene.size;
    let m1 = AffineTransform::scaling(scene.lens1.0, scene.lens1.1, scene.lens1.2).inverse()?;
    let m2 = AffineTransform::scaling(scene.lens2.0, scene.lens2.1, scene.lens2.2);
    let mut v = ndarray::Array3::zeros((h, w, 2));
    for r in 0..h {
        for c in 0..w {
            let g = Point::new(c as f64, r as f64);
            // Frame 3 -> frame 1: undo the lens (target vectors g - M1^-1 g,
            // cubed), then the tissue shift.
            let q = m1.apply(g);
            let [lx, ly] = cube([g.x - q.x, g.y - q.y]);
            let x1 = Point::new(g.x - lx - scene.trans1.0, g.y - ly - scene.trans1.1);
            // Frame 1 -> frame 2: tissue shift, then the lens (source vectors
            // M2 p - p, cubed).
            let b = Point::new(x1.x + scene.trans2.0, x1.y + scene.trans2.1);
            let q = m2.apply(b);
            let [lx, ly] = cube([q.x - b.x, q.y - b.y]);
            let x2 = Point::new(b.x + lx, b.y + ly);
            v[[r, c, 0]] = g.x - x2.x;
            v[[r, c, 1]] = g.y - x2.y;
        }
    }
    FlowField::new(v, Reference::Target, None)
}
