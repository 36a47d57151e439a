//! Flow visualization: colour wheel, arrows and mask images.
//!
//! The colour wheel encodes direction as hue and magnitude as saturation at
//! full value. Hue is `atan2(-y, x)` in degrees, so a rightward vector is red
//! (0 deg) and, with y pointing down, an upward vector is 90 deg.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{FlowError, Result};
use crate::field::{FlowField, Reference, ValidityMask};

/// Colour of arrows and origin dots.
pub const ARROW_COLOR: Rgb<u8> = Rgb([0, 0, 0]);
/// Canvas colour when no background image is given.
pub const ARROW_BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

/// Converts hue (degrees), saturation and value in `[0, 1]` to 8-bit RGB.
pub fn hsv_to_rgb(hue: f64, saturation: f64, value: f64) -> Rgb<u8> {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = value * saturation;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = value - c;
    let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([q(r), q(g), q(b)])
}

/// Inverse of [`hsv_to_rgb`]: hue in `[0, 360)`, saturation and value in
/// `[0, 1]`. Grey pixels report hue 0.
pub fn rgb_to_hsv(rgb: Rgb<u8>) -> (f64, f64, f64) {
    let [r, g, b] = rgb.0.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let hue = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { d / max };
    (hue.rem_euclid(360.0), sat, max)
}

/// Colour-wheel rendering. Saturation is magnitude over `max_magnitude`,
/// clamped to 1; the default scale is the largest valid magnitude (1 for an
/// all-zero field). Invalid cells are black.
pub fn render_colorwheel(f: &FlowField, max_magnitude: Option<f64>) -> Result<RgbImage> {
    let scale = match max_magnitude {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => {
            return Err(FlowError::InvalidArgument(format!(
                "maximum magnitude must be positive, got {m}"
            )))
        }
        None => {
            let m = f.max_magnitude();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let (h, w) = f.shape();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        if !f.is_valid(r, c) {
            return Rgb([0, 0, 0]);
        }
        let [vx, vy] = f.vector(r, c);
        let hue = (-vy).atan2(vx).to_degrees();
        let sat = (vx.hypot(vy) / scale).clamp(0.0, 1.0);
        hsv_to_rgb(hue, sat, 1.0)
    }))
}

fn plot(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham line between integer end points, clipped to the image.
fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        plot(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_arrow(img: &mut RgbImage, from: (f64, f64), to: (f64, f64)) {
    let p0 = (from.0.round() as i64, from.1.round() as i64);
    let p1 = (to.0.round() as i64, to.1.round() as i64);
    draw_line(img, p0, p1, ARROW_COLOR);
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = dx.hypot(dy);
    if len < 2.0 {
        return;
    }
    let barb = (0.3 * len).clamp(2.0, 6.0);
    let back = dy.atan2(dx) + std::f64::consts::PI;
    for side in [-1.0, 1.0] {
        let a = back + side * 25f64.to_radians();
        let end = (to.0 + barb * a.cos(), to.1 + barb * a.sin());
        draw_line(img, p1, (end.0.round() as i64, end.1.round() as i64), ARROW_COLOR);
    }
}

/// Arrow rendering on a lattice with spacing `stride`, offset by half a
/// stride from the top-left corner. Each valid lattice cell gets a dot and an
/// arrow from `g` to `g + F` (source reference) or from `g - F` to `g`
/// (target reference).
pub fn render_arrows(f: &FlowField, background: Option<&RgbImage>, stride: usize) -> Result<RgbImage> {
    if stride == 0 {
        return Err(FlowError::InvalidArgument("arrow stride must be at least 1".into()));
    }
    let (h, w) = f.shape();
    let mut img = match background {
        Some(bg) => {
            if (bg.height() as usize, bg.width() as usize) != (h, w) {
                return Err(FlowError::ShapeMismatch(format!(
                    "background is {}x{}, flow is {h}x{w}",
                    bg.height(),
                    bg.width()
                )));
            }
            bg.clone()
        }
        None => RgbImage::from_pixel(w as u32, h as u32, ARROW_BACKGROUND),
    };
    let r0 = (stride / 2).min(h - 1);
    let c0 = (stride / 2).min(w - 1);
    for r in (r0..h).step_by(stride) {
        for c in (c0..w).step_by(stride) {
            if !f.is_valid(r, c) {
                continue;
            }
            let [vx, vy] = f.vector(r, c);
            let g = (c as f64, r as f64);
            let (from, to) = match f.reference() {
                Reference::Source => (g, (g.0 + vx, g.1 + vy)),
                Reference::Target => ((g.0 - vx, g.1 - vy), g),
            };
            draw_arrow(&mut img, from, to);
            plot(&mut img, c as i64, r as i64, ARROW_COLOR);
        }
    }
    Ok(img)
}

/// Mask as a grayscale image: 255 where valid, 0 elsewhere.
pub fn render_mask(mask: &ValidityMask) -> GrayImage {
    let (h, w) = mask.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask[[y as usize, x as usize]] { 255 } else { 0 }])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{s, Array2, Array3};

    fn constant(shape: (usize, usize), v: [f64; 2], reference: Reference) -> FlowField {
        let mut a = Array3::zeros((shape.0, shape.1, 2));
        a.slice_mut(s![.., .., 0]).fill(v[0]);
        a.slice_mut(s![.., .., 1]).fill(v[1]);
        FlowField::new(a, reference, None).unwrap()
    }

    fn hue_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    #[test]
    fn hsv_roundtrip_on_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), Rgb([255, 0, 0]));
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), Rgb([0, 255, 0]));
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), Rgb([0, 0, 255]));
        assert_eq!(hsv_to_rgb(360.0, 1.0, 1.0), Rgb([255, 0, 0]));
        assert_eq!(hsv_to_rgb(77.0, 0.0, 1.0), Rgb([255, 255, 255]));
        for hue in (0..360).step_by(7) {
            let (h2, s2, v2) = rgb_to_hsv(hsv_to_rgb(hue as f64, 1.0, 1.0));
            assert!(hue_diff(h2, hue as f64) < 0.5 && s2 == 1.0 && v2 == 1.0);
        }
    }

    #[test]
    fn zero_flow_is_white() {
        let img = render_colorwheel(&FlowField::zeros((4, 6), Reference::Source).unwrap(), None).unwrap();
        assert_eq!((img.width(), img.height()), (6, 4));
        assert!(img.pixels().all(|p| *p == Rgb([255, 255, 255])));
    }

    #[test]
    fn rightward_flow_is_saturated_red() {
        let img = render_colorwheel(&constant((3, 5), [4.0, 0.0], Reference::Source), Some(4.0)).unwrap();
        assert!(img.pixels().all(|p| *p == Rgb([255, 0, 0])));
    }

    #[test]
    fn hue_orientation_golden() {
        // Up on screen (negative y) is 90 deg, left 180 deg, down 270 deg.
        for (v, rgb) in [
            ([0.0, -1.0], hsv_to_rgb(90.0, 1.0, 1.0)),
            ([-1.0, 0.0], Rgb([0, 255, 255])),
            ([0.0, 1.0], hsv_to_rgb(270.0, 1.0, 1.0)),
        ] {
            let img = render_colorwheel(&constant((1, 1), v, Reference::Target), Some(1.0)).unwrap();
            assert_eq!(*img.get_pixel(0, 0), rgb);
        }
    }

    #[test]
    fn invalid_cells_are_black() {
        let mut m = Array2::from_elem((4, 4), true);
        m.row_mut(0).fill(false);
        let f = FlowField::new(Array3::from_elem((4, 4, 2), 1.0), Reference::Source, Some(m)).unwrap();
        let img = render_colorwheel(&f, None).unwrap();
        for x in 0..4 {
            assert_eq!(*img.get_pixel(x, 0), Rgb([0, 0, 0]));
            assert_ne!(*img.get_pixel(x, 1), Rgb([0, 0, 0]));
        }
        assert!(render_colorwheel(&f, Some(0.0)).is_err());
    }

    #[test]
    fn rotating_vectors_shifts_hue() {
        let f = FlowField::new(
            Array3::from_shape_fn((5, 7, 2), |(r, c, k)| {
                if k == 0 {
                    c as f64 - 3.2
                } else {
                    r as f64 - 1.9
                }
            }),
            Reference::Source,
            None,
        )
        .unwrap();
        let phi: f64 = 37.0;
        let (sn, cs) = phi.to_radians().sin_cos();
        let rotated = crate::ops::map_vectors(&f, |[x, y]| [cs * x - sn * y, sn * x + cs * y]).unwrap();
        let a = render_colorwheel(&f, Some(4.0)).unwrap();
        let b = render_colorwheel(&rotated, Some(4.0)).unwrap();
        for (pa, pb) in a.pixels().zip(b.pixels()) {
            let (ha, sa, _) = rgb_to_hsv(*pa);
            let (hb, _, _) = rgb_to_hsv(*pb);
            if sa > 0.2 {
                // Rotation by +phi in y-down coordinates turns the hue by -phi.
                assert!(hue_diff(hb, ha - phi) < 1.0, "{ha} -> {hb}");
            }
        }
    }

    #[test]
    fn zero_flow_arrows_leave_only_dots() {
        let f = FlowField::zeros((9, 9), Reference::Source).unwrap();
        let img = render_arrows(&f, None, 4).unwrap();
        let dark: Vec<(u32, u32)> = img
            .enumerate_pixels()
            .filter(|(_, _, p)| **p == ARROW_COLOR)
            .map(|(x, y, _)| (x, y))
            .collect();
        assert_eq!(dark, vec![(2, 2), (6, 2), (2, 6), (6, 6)]);
    }

    #[test]
    fn large_stride_gives_single_arrow() {
        let f = constant((5, 6), [1.0, 0.0], Reference::Source);
        let img = render_arrows(&f, None, 50).unwrap();
        let dark = img.pixels().filter(|p| **p == ARROW_COLOR).count();
        // Dot at (5, 4) and a one-pixel arrow to the clipped-off right.
        assert!((1..=2).contains(&dark), "{dark}");
        assert_eq!(*img.get_pixel(5, 4), ARROW_COLOR);
    }

    #[test]
    fn constant_arrows_are_horizontal_and_five_long() {
        let f = constant((20, 30), [5.0, 0.0], Reference::Source);
        let img = render_arrows(&f, None, 10).unwrap();
        for r in [5u32, 15] {
            for c0 in [5u32, 15] {
                for c in c0..=c0 + 5 {
                    assert_eq!(*img.get_pixel(c, r), ARROW_COLOR);
                }
                assert_ne!(*img.get_pixel(c0 + 6, r), ARROW_COLOR);
                assert_ne!(*img.get_pixel(c0 - 1, r), ARROW_COLOR);
            }
        }
        // Target reference ends the arrow at the lattice point.
        let t = render_arrows(&constant((20, 30), [5.0, 0.0], Reference::Target), None, 10).unwrap();
        for c in 10..=15 {
            assert_eq!(*t.get_pixel(c, 5), ARROW_COLOR);
        }
    }

    #[test]
    fn arrows_respect_mask_and_background() {
        let mut m = Array2::from_elem((10, 10), false);
        m[[7, 7]] = true;
        let f = FlowField::new(Array3::from_elem((10, 10, 2), 2.0), Reference::Source, Some(m)).unwrap();
        let bg = RgbImage::from_pixel(10, 10, Rgb([10, 200, 30]));
        let img = render_arrows(&f, Some(&bg), 5).unwrap();
        assert_eq!(*img.get_pixel(2, 2), Rgb([10, 200, 30]));
        assert_eq!(*img.get_pixel(7, 7), ARROW_COLOR);
        assert_eq!(*img.get_pixel(8, 8), ARROW_COLOR);
        assert_eq!(*img.get_pixel(7, 2), Rgb([10, 200, 30]));
        assert!(render_arrows(&f, Some(&RgbImage::new(3, 3)), 5).is_err());
        assert!(render_arrows(&f, None, 0).is_err());
    }

    #[test]
    fn mask_rendering() {
        let img = render_mask(&Array2::from_elem((2, 3), true));
        assert!(img.pixels().all(|p| p.0 == [255]));
        let img = render_mask(&Array2::from_elem((2, 3), false));
        assert!(img.pixels().all(|p| p.0 == [0]));
    }
}
