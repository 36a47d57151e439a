//! Flow composition: `f(1->2) (+) f(2->3) = f(1->3)`.
//!
//! Given any two of the three flows, [`combine`] computes the third. The
//! [`ComposeMode`] names the unknown one. Internally every case is relabelled
//! onto three times `A`, `B`, `C` such that the unknown flow links `A` and `C`
//! and has its reference at `A`. The known flows then link `A`-`B` and
//! `B`-`C`, each in some direction and with its reference at either end. The
//! engine:
//!
//! 1. picks sign factors so both known flows add up as displacements from
//!    `A` towards `C`, flipping both when the unknown flow points `C -> A`;
//! 2. moves the `B`-`C` flow to reference `B` (reference switch) if needed;
//! 3. if the `A`-`B` flow is referenced at `A`, warps the `B`-`C` vectors
//!    from `B` to `A` with it (inverted first when it points `A -> B`);
//! 4. adds the two vector fields;
//! 5. if the `A`-`B` flow is referenced at `B`, warps the sum from `B` to `A`
//!    the same way.
//!
//! Holes opened by any warp or splat stay invalid in the output mask.

use std::fmt;

use ndarray::{Array2, Array3, Zip};

use crate::error::{FlowError, Result};
use crate::field::{FlowField, Reference};
use crate::ops::{apply_to_field, invert, switch_reference};

/// Which flow of `f(1->2) (+) f(2->3) = f(1->3)` is unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComposeMode {
    /// `f(1->2)` from `f(2->3)` and `f(1->3)`.
    One,
    /// `f(2->3)` from `f(1->2)` and `f(1->3)`.
    Two,
    /// `f(1->3)` from `f(1->2)` and `f(2->3)`.
    Three,
}

impl ComposeMode {
    pub const ALL: [ComposeMode; 3] = [ComposeMode::One, ComposeMode::Two, ComposeMode::Three];

    pub fn from_index(n: u8) -> Result<Self> {
        match n {
            1 => Ok(ComposeMode::One),
            2 => Ok(ComposeMode::Two),
            3 => Ok(ComposeMode::Three),
            _ => Err(FlowError::InvalidArgument(format!(
                "composition mode must be 1, 2 or 3, got {n}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            ComposeMode::One => 1,
            ComposeMode::Two => 2,
            ComposeMode::Three => 3,
        }
    }

    /// `(from, to)` times of the unknown flow.
    pub fn unknown(self) -> (u8, u8) {
        match self {
            ComposeMode::One => (1, 2),
            ComposeMode::Two => (2, 3),
            ComposeMode::Three => (1, 3),
        }
    }

    /// `(from, to)` times of the two known inputs, in argument order.
    pub fn known(self) -> [(u8, u8); 2] {
        match self {
            ComposeMode::One => [(2, 3), (1, 3)],
            ComposeMode::Two => [(1, 2), (1, 3)],
            ComposeMode::Three => [(1, 2), (2, 3)],
        }
    }
}

impl fmt::Display for ComposeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Assignment of the times 1, 2, 3 to the roles `A`, `B`, `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Roles {
    pub a: u8,
    pub b: u8,
    pub c: u8,
}

/// `A` is where the unknown flow's reference sits (its start for source
/// reference, its end for target reference), `C` its other end, `B` the
/// remaining time.
pub(crate) fn roles(mode: ComposeMode, output: Reference) -> Roles {
    use ComposeMode::*;
    use Reference::*;
    let (a, b, c) = match (mode, output) {
        // unknown 1->2
        (One, Source) => (1, 3, 2),
        (One, Target) => (2, 3, 1),
        // unknown 2->3
        (Two, Source) => (2, 1, 3),
        (Two, Target) => (3, 1, 2),
        // unknown 1->3
        (Three, Source) => (1, 2, 3),
        (Three, Target) => (3, 2, 1),
    };
    Roles { a, b, c }
}

struct Known<'a> {
    field: &'a FlowField,
    from: u8,
    to: u8,
}

impl Known<'_> {
    fn reference_time(&self) -> u8 {
        match self.field.reference() {
            Reference::Source => self.from,
            Reference::Target => self.to,
        }
    }

    fn links(&self, p: u8, q: u8) -> bool {
        (self.from, self.to) == (p, q) || (self.from, self.to) == (q, p)
    }
}

/// Warps a vector field referenced at `B` onto `A` using the flow that links
/// `A` and `B`. A flow pointing `B -> A` is applied as is; one pointing
/// `A -> B` is inverted (same reference tag) first.
fn warp_b_to_a(ab: &Known<'_>, a: u8, data: &FlowField) -> Result<FlowField> {
    if ab.from == a {
        apply_to_field(&invert(ab.field), data)
    } else {
        apply_to_field(ab.field, data)
    }
}

/// `sa * a + sb * b` on the intersection of both masks, zero elsewhere.
fn linear_combination(sa: f64, a: &FlowField, sb: f64, b: &FlowField, reference: Reference) -> FlowField {
    let mask: Array2<bool> = Zip::from(&a.mask())
        .and(&b.mask())
        .map_collect(|&x, &y| x && y);
    let (h, w) = a.shape();
    let (va, vb) = (a.vectors(), b.vectors());
    let vectors = Array3::from_shape_fn((h, w, 2), |(r, c, k)| {
        if mask[[r, c]] {
            sa * va[[r, c, k]] + sb * vb[[r, c, k]]
        } else {
            0.0
        }
    });
    FlowField::from_parts(vectors, reference, mask)
}

fn check_same_shape(a: &FlowField, b: &FlowField) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(FlowError::ShapeMismatch(format!(
            "cannot combine {}x{} with {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Computes the unknown flow of `f(1->2) (+) f(2->3) = f(1->3)`.
///
/// `first` and `second` are the known flows in temporal order: `f(2->3)`,
/// `f(1->3)` for mode 1; `f(1->2)`, `f(1->3)` for mode 2; `f(1->2)`,
/// `f(2->3)` for mode 3. Each may use either reference. The result uses
/// `output_reference`, defaulting to the reference of `first`.
pub fn combine(
    first: &FlowField,
    second: &FlowField,
    mode: ComposeMode,
    output_reference: Option<Reference>,
) -> Result<FlowField> {
    check_same_shape(first, second)?;
    let output = output_reference.unwrap_or(first.reference());
    let Roles { a, b, c } = roles(mode, output);
    let [(f1, t1), (f2, t2)] = mode.known();
    let k1 = Known {
        field: first,
        from: f1,
        to: t1,
    };
    let k2 = Known {
        field: second,
        from: f2,
        to: t2,
    };
    let (ab, bc) = if k1.links(a, b) { (k1, k2) } else { (k2, k1) };
    debug_assert!(ab.links(a, b) && bc.links(b, c));

    let mut s_ab = if ab.from == a { 1.0 } else { -1.0 };
    let mut s_bc = if bc.from == b { 1.0 } else { -1.0 };
    // Roles assume the unknown flow runs A -> C; target output runs C -> A.
    if output == Reference::Target {
        s_ab = -s_ab;
        s_bc = -s_bc;
    }

    let switched;
    let bc_at_b = if bc.reference_time() == c {
        switched = switch_reference(bc.field);
        &switched
    } else {
        bc.field
    };

    let ab_at_a = ab.reference_time() == a;
    let warped;
    let bc_aligned = if ab_at_a {
        warped = warp_b_to_a(&ab, a, bc_at_b)?;
        &warped
    } else {
        bc_at_b
    };

    let sum = linear_combination(s_ab, ab.field, s_bc, bc_aligned, output);
    if ab_at_a {
        Ok(sum)
    } else {
        Ok(warp_b_to_a(&ab, a, &sum)?.with_reference(output))
    }
}

/// Mode 3 for two target-reference flows in one warp and one addition:
/// `F(2->3) + f(2->3){F(1->2)}`.
pub fn combine_fast_mode3_target(f12: &FlowField, f23: &FlowField) -> Result<FlowField> {
    if f12.reference() != Reference::Target || f23.reference() != Reference::Target {
        return Err(FlowError::ReferenceMismatch(format!(
            "fast mode-3 composition needs two target-reference flows, got {} and {}",
            f12.reference(),
            f23.reference()
        )));
    }
    check_same_shape(f12, f23)?;
    let warped = apply_to_field(f23, f12)?;
    Ok(linear_combination(1.0, f23, 1.0, &warped, Reference::Target))
}
