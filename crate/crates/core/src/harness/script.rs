//! Finger paths that trace glyphs from the built-in font.

use crate::emsim::{TouchPath, TouchSample};
use crate::error::{invalid, Result};
use crate::traj::{glyph_trajectory, Stroke, Trajectory};

/// A single-point stroke is held for this many cycles.
const DOT_CYCLES: f64 = 8.0;

/// A scripted character: the finger path plus what it should reconstruct to.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedInput {
    pub character: char,
    pub path: TouchPath,
    /// Glyph strokes in screen coordinates, cycle indices from the path start.
    pub truth: Trajectory,
    /// Inclusive cycle ranges whose midpoint falls inside a pen-down interval.
    pub contact_windows: Vec<(usize, usize)>,
}

/// Traces `c` at `pen_speed` screen units per second with `idle_cycles`
/// of no touch before, between and after strokes.
pub fn script_character(c: char, pen_speed: f64, idle_cycles: usize, touch_freq: f64) -> Result<ScriptedInput> {
    if !(pen_speed > 0.0 && touch_freq > 0.0) {
        return Err(invalid("pen_speed and touch_freq must be > 0"));
    }
    let glyph = glyph_trajectory(c)?;
    let cycle = 1.0 / touch_freq;
    let idle = idle_cycles as f64 * cycle;
    let mut samples = vec![TouchSample::idle(0.0)];
    let mut truth = Vec::new();
    let mut windows = Vec::new();
    let mut t = idle;
    for stroke in &glyph.strokes {
        let start = t;
        let mut times = Vec::with_capacity(stroke.points.len());
        for (i, &p) in stroke.points.iter().enumerate() {
            if i > 0 {
                t += stroke.points[i - 1].dist(p) / pen_speed;
            }
            times.push(t);
        }
        if t - start < DOT_CYCLES * cycle {
            t = start + DOT_CYCLES * cycle;
            let last = times.len() - 1;
            times[last] = t;
        }
        for (&p, &ti) in stroke.points.iter().zip(&times) {
            // Repeated lattice points (dots) collapse onto one sample.
            if samples.last().is_some_and(|s| s.t >= ti) {
                continue;
            }
            samples.push(TouchSample::contact(ti, p));
        }
        let mut pts = stroke.points.clone();
        let mut cyc: Vec<f64> = times.iter().map(|x| x * touch_freq).collect();
        if pts.len() == 1 {
            pts.push(pts[0]);
            cyc.push(t * touch_freq);
        }
        truth.push(Stroke::new(pts, cyc)?);
        let first = (start * touch_freq - 0.5).ceil().max(0.0) as usize;
        let last = (t * touch_freq - 0.5).floor() as usize;
        windows.push((first, last.max(first)));
        // Finger lifts over one cycle, then rests.
        samples.push(TouchSample::idle(t + cycle));
        t += cycle + idle;
    }
    samples.push(TouchSample::idle(t));
    Ok(ScriptedInput {
        character: c,
        path: TouchPath::new(samples)?,
        truth: Trajectory { strokes: truth },
        contact_windows: windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_stroke_t_has_separated_windows() {
        let s = script_character('T', 1.0, 12, 120.0).unwrap();
        assert_eq!(s.truth.strokes.len(), 2);
        assert_eq!(s.contact_windows.len(), 2);
        let gap = s.contact_windows[1].0 - s.contact_windows[0].1;
        assert!(gap >= 12, "{:?}", s.contact_windows);
        assert!(s.truth.strokes[0].start_cycle() < s.truth.strokes[1].start_cycle());
    }

    #[test]
    fn dots_are_held() {
        let s = script_character('i', 1.0, 10, 120.0).unwrap();
        let (a, b) = s.contact_windows[1];
        assert!(b - a + 1 >= 7);
    }
}
