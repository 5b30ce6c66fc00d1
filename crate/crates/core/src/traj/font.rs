//! Polyline font on a 4 × 8 lattice.
//!
//! Lattice point `(gx, gy)` sits at `((gx + 0.5) / 4, (gy + 0.5) / 8)`, the
//! centres of an 8-row, 4-column zone grid, so a finger tracing a glyph runs
//! along zone centres. Strokes are separated by `|`, points by spaces.

use crate::error::{Error, Result};
use crate::geom::Point;

use super::{Stroke, Trajectory};

pub const LATTICE_COLS: usize = 4;
pub const LATTICE_ROWS: usize = 8;

pub const CHARSET: &str = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

const GLYPHS: [(char, &str); 62] = [
    ('0', "1,0 2,0 3,2 3,5 2,7 1,7 0,5 0,2 1,0"),
    ('1', "0,1 1,0 1,7"),
    ('2', "0,1 1,0 2,0 3,1 3,2 0,7 3,7"),
    ('3', "0,1 1,0 2,0 3,1 3,2 2,3 1,3|2,3 3,4 3,6 2,7 1,7 0,6"),
    ('4', "2,7 2,0 0,5 3,5"),
    ('5', "3,0 0,0 0,3 2,3 3,4 3,6 2,7 0,7"),
    ('6', "3,0 1,0 0,2 0,6 1,7 2,7 3,6 3,4 2,3 0,3"),
    ('7', "0,0 3,0 1,7"),
    ('8', "1,0 2,0 3,1 3,2 2,3 1,3 0,4 0,6 1,7 2,7 3,6 3,4 2,3 1,3 0,2 0,1 1,0"),
    ('9', "3,4 1,4 0,3 0,1 1,0 2,0 3,1 3,7"),
    ('A', "0,7 0,2 1,0 2,0 3,2 3,7|0,4 3,4"),
    ('B', "0,0 0,7|0,0 2,0 3,1 3,2 2,3 0,3|2,3 3,4 3,6 2,7 0,7"),
    ('C', "3,1 2,0 1,0 0,1 0,6 1,7 2,7 3,6"),
    ('D', "0,0 0,7|0,0 2,0 3,2 3,5 2,7 0,7"),
    ('E', "3,0 0,0 0,7 3,7|0,3 2,3"),
    ('F', "3,0 0,0 0,7|0,3 2,3"),
    ('G', "3,1 2,0 1,0 0,1 0,6 1,7 2,7 3,6 3,4 2,4"),
    ('H', "0,0 0,7|3,0 3,7|0,3 3,3"),
    ('I', "0,0 2,0|1,0 1,7|0,7 2,7"),
    ('J', "3,0 3,6 2,7 1,7 0,6"),
    ('K', "0,0 0,7|3,0 0,4|1,3 3,7"),
    ('L', "0,0 0,7 3,7"),
    ('M', "0,7 0,0 1,4 2,4 3,0 3,7"),
    ('N', "0,7 0,0 3,7 3,0"),
    ('O', "1,0 2,0 3,1 3,6 2,7 1,7 0,6 0,1 1,0"),
    ('P', "0,7 0,0 2,0 3,1 3,2 2,3 0,3"),
    ('Q', "1,0 2,0 3,1 3,6 2,7 1,7 0,6 0,1 1,0|2,5 3,7"),
    ('R', "0,7 0,0 2,0 3,1 3,2 2,3 0,3|1,3 3,7"),
    ('S', "3,1 2,0 1,0 0,1 0,2 1,3 2,4 3,5 3,6 2,7 1,7 0,6"),
    ('T', "0,0 2,0|1,0 1,7"),
    ('U', "0,0 0,6 1,7 2,7 3,6 3,0"),
    ('V', "0,0 1,7 2,7 3,0"),
    ('W', "0,0 0,7 1,3 2,3 3,7 3,0"),
    ('X', "0,0 3,7|3,0 0,7"),
    ('Y', "0,0 1,3 1,7|3,0 1,3"),
    ('Z', "0,0 3,0 0,7 3,7"),
    ('a', "3,3 3,7|3,4 2,3 1,3 0,4 0,6 1,7 2,7 3,6"),
    ('b', "0,0 0,7|0,4 1,3 2,3 3,4 3,6 2,7 1,7 0,6"),
    ('c', "3,3 1,3 0,4 0,6 1,7 3,7"),
    ('d', "3,0 3,7|3,4 2,3 1,3 0,4 0,6 1,7 2,7 3,6"),
    ('e', "0,5 3,5 3,4 2,3 1,3 0,4 0,6 1,7 3,7"),
    ('f', "3,0 2,0 1,1 1,7|0,3 2,3"),
    ('g', "3,3 2,2 1,2 0,3 0,4 1,5 2,5 3,4|3,2 3,6 2,7 0,7"),
    ('h', "0,0 0,7|0,4 1,3 2,3 3,4 3,7"),
    ('i', "1,3 1,7|1,1 1,1"),
    ('j', "2,3 2,6 1,7 0,6|2,1 2,1"),
    ('k', "0,0 0,7|3,3 0,5 3,7"),
    ('l', "1,0 1,7"),
    ('m', "0,3 0,7|0,4 1,3 1,7|1,4 2,3 3,3 3,7"),
    ('n', "0,3 0,7|0,4 1,3 2,3 3,4 3,7"),
    ('o', "1,3 2,3 3,4 3,6 2,7 1,7 0,6 0,4 1,3"),
    ('p', "0,2 0,7|0,3 1,2 2,2 3,3 3,4 2,5 1,5 0,4"),
    ('q', "3,3 2,2 1,2 0,3 0,4 1,5 2,5 3,4|3,2 3,7"),
    ('r', "0,3 0,7|0,5 1,4 2,3 3,3"),
    ('s', "3,3 1,3 0,4 1,5 2,5 3,6 2,7 0,7"),
    ('t', "1,0 1,6 2,7 3,7|0,3 2,3"),
    ('u', "0,3 0,6 1,7 2,7 3,6|3,3 3,7"),
    ('v', "0,3 1,7 2,7 3,3"),
    ('w', "0,3 0,7 1,5 2,5 3,7 3,3"),
    ('x', "0,3 3,7|3,3 0,7"),
    ('y', "0,2 0,4 1,5 3,5|3,2 3,6 2,7 0,7"),
    ('z', "0,3 3,3 0,7 3,7"),
];

/// Groups whose members look alike once fitted to a bounding box.
const CONFUSABLE: [&str; 14] = [
    "0Oo", "1Il", "2Zz", "5Ss", "9gq", "Cc", "Uu", "Vv", "Ww", "Xx", "6b", "8B", "Pp", "Kk",
];

/// Raw lattice strokes of `c`.
pub fn glyph(c: char) -> Option<Vec<Vec<(u8, u8)>>> {
    let (_, def) = GLYPHS.iter().find(|(g, _)| *g == c)?;
    Some(
        def.split('|')
            .map(|stroke| {
                stroke
                    .split_whitespace()
                    .map(|p| {
                        let (x, y) = p.split_once(',').expect("well-formed glyph table");
                        (x.parse().expect("lattice x"), y.parse().expect("lattice y"))
                    })
                    .collect()
            })
            .collect(),
    )
}

pub fn lattice_point(gx: u8, gy: u8) -> Point {
    Point::new(
        (gx as f64 + 0.5) / LATTICE_COLS as f64,
        (gy as f64 + 0.5) / LATTICE_ROWS as f64,
    )
}

/// `c` in screen coordinates. Cycle indices are running point counts.
pub fn glyph_trajectory(c: char) -> Result<Trajectory> {
    let strokes = glyph(c).ok_or_else(|| Error::InvalidInput(format!("no glyph for {c:?}")))?;
    let mut k = 0.0;
    let strokes = strokes
        .into_iter()
        .map(|s| {
            let points: Vec<Point> = s.iter().map(|&(x, y)| lattice_point(x, y)).collect();
            let cycles = (0..points.len())
                .map(|_| {
                    k += 1.0;
                    k - 1.0
                })
                .collect();
            Stroke { points, cycles }
        })
        .collect();
    Ok(Trajectory { strokes })
}

/// Same character, or documented look-alikes such as `0` / `O`.
pub fn is_confusable(a: char, b: char) -> bool {
    a == b || CONFUSABLE.iter().any(|g| g.contains(a) && g.contains(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_covers_charset_on_the_lattice() {
        assert_eq!(CHARSET.len(), 62);
        for c in CHARSET.chars() {
            let g = glyph(c).unwrap_or_else(|| panic!("missing {c}"));
            for s in &g {
                assert!(!s.is_empty());
                assert!(s.iter().all(|&(x, y)| (x as usize) < LATTICE_COLS && (y as usize) < LATTICE_ROWS));
            }
        }
    }

    #[test]
    fn confusable_pairs() {
        assert!(is_confusable('0', 'O'));
        assert!(is_confusable('O', '0'));
        assert!(is_confusable('L', 'L'));
        assert!(!is_confusable('L', 'T'));
    }
}
