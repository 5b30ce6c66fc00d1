//! Binary masks, Jaccard similarity and template matching.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::font::{glyph_trajectory, CHARSET};
use super::Trajectory;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterMask {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl RasterMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(invalid(format!("{} bits for a {width}x{height} mask", bits.len())));
        }
        Ok(Self { width, height, bits })
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        if x < self.width && y < self.height {
            self.bits[y * self.width + x] = true;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Plain PBM (`P1`).
    pub fn to_pbm(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.width, self.height);
        for row in self.bits.chunks(self.width.max(1)) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

fn line(mask: &mut RasterMask, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        mask.set(x as usize, y as usize);
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

/// Draws every polyline with Bresenham lines on a `width × height` canvas
/// (unit square to pixel centres), then dilates by a disc of radius `thickness`.
pub fn rasterize(traj: &Trajectory, width: usize, height: usize, thickness: usize) -> Result<RasterMask> {
    if width < 8 || height < 8 {
        return Err(invalid(format!("raster must be at least 8x8, got {width}x{height}")));
    }
    let mut core = RasterMask::new(width, height);
    let px = |v: f64, n: usize| (v.clamp(0.0, 1.0) * (n - 1) as f64).round() as i64;
    for s in &traj.strokes {
        let pts: Vec<(i64, i64)> = s.points.iter().map(|p| (px(p.x, width), px(p.y, height))).collect();
        match pts.len() {
            0 => {}
            1 => line(&mut core, pts[0], pts[0]),
            _ => pts.windows(2).for_each(|w| line(&mut core, w[0], w[1])),
        }
    }
    if thickness == 0 {
        return Ok(core);
    }
    let r = thickness as i64;
    let disc: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut out = RasterMask::new(width, height);
    for y in 0..height {
        for x in 0..width {
            if core.get(x, y) {
                for &(dx, dy) in &disc {
                    let (u, v) = (x as i64 + dx, y as i64 + dy);
                    if u >= 0 && v >= 0 {
                        out.set(u as usize, v as usize);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `|A ∩ B| / |A ∪ B|`; two empty masks score 1.
pub fn jaccard(a: &RasterMask, b: &RasterMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(invalid(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Margin used when fitting glyphs and reconstructions to the canvas.
pub const FIT_MARGIN: f64 = 0.08;

/// Masks of all 62 characters, fitted to the canvas.
pub fn template_set(width: usize, height: usize, thickness: usize) -> Result<Vec<(char, RasterMask)>> {
    CHARSET
        .chars()
        .map(|c| {
            let t = glyph_trajectory(c)?.fit_unit(FIT_MARGIN);
            Ok((c, rasterize(&t, width, height, thickness)?))
        })
        .collect()
}

/// Ranks templates by Jaccard score, best first; ties go to the lower character code.
pub fn match_character(mask: &RasterMask, templates: &[(char, RasterMask)]) -> Result<Vec<(char, f64)>> {
    if templates.is_empty() {
        return Err(invalid("no templates to match against"));
    }
    let mut ranked: Vec<(char, f64)> = templates
        .iter()
        .map(|(c, t)| Ok((*c, jaccard(mask, t)?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::traj::Stroke;

    fn seg(a: (f64, f64), b: (f64, f64)) -> Trajectory {
        Trajectory {
            strokes: vec![Stroke::new(vec![Point::new(a.0, a.1), Point::new(b.0, b.1)], vec![0.0, 1.0]).unwrap()],
        }
    }

    #[test]
    fn horizontal_segment_fills_one_row() {
        let m = rasterize(&seg((0.0, 0.5), (1.0, 0.5)), 10, 10, 0).unwrap();
        assert_eq!(m.count(), 10);
        let rows: Vec<usize> = (0..10).filter(|&y| (0..10).any(|x| m.get(x, y))).collect();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(rasterize(&Trajectory::default(), 64, 64, 2).unwrap().is_empty());
        assert!(rasterize(&Trajectory::default(), 7, 64, 2).is_err());
        assert!(jaccard(&RasterMask::new(4, 4), &RasterMask::new(4, 5)).is_err());
        assert!(match_character(&RasterMask::new(4, 4), &[]).is_err());
    }

    #[test]
    fn pbm_header() {
        let mut m = RasterMask::new(3, 2);
        m.set(1, 1);
        assert_eq!(m.to_pbm(), "P1\n3 2\n0 0 0\n0 1 0\n");
    }
}
