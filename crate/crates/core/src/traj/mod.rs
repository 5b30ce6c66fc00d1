//! From per-cycle zone decisions to a scored handwriting trajectory.

pub mod font;
pub mod raster;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::emsim::ScreenSpec;
use crate::error::{invalid, Error, Result};
use crate::geom::Point;
use crate::posnet::GridLabel;
use crate::sigproc::reshape;

pub use font::{glyph, glyph_trajectory, is_confusable, CHARSET};
pub use raster::{jaccard, match_character, rasterize, template_set, RasterMask};

/// Decoded finger position for one feature cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub cycle_index: usize,
    pub point: Point,
    pub confidence: f64,
    /// Pen-down flag, filled in from stroke detection.
    pub active: bool,
}

/// Maps each zone decision to its zone centre. Cycle indices are list positions.
pub fn zones_to_points(labels: &[(GridLabel, f64)], screen: &ScreenSpec) -> Result<Vec<PositionEstimate>> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("no zone decisions".into()));
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &(g, confidence))| {
            if g.row >= screen.n_rows || g.col >= screen.n_cols {
                return Err(Error::InvalidLabel {
                    index: g.index,
                    n_class: screen.n_zones(),
                });
            }
            Ok(PositionEstimate {
                cycle_index: i,
                point: screen.zone_center(g.row, g.col),
                confidence: confidence.clamp(0.0, 1.0),
                active: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrokeParams {
    /// A cycle is pen-down when its energy exceeds `k` times the noise floor.
    pub k: f64,
    /// Pen-up runs of at most this many cycles are bridged.
    pub gap: usize,
    pub min_len: usize,
}

impl Default for StrokeParams {
    fn default() -> Self {
        Self { k: 3.0, gap: 2, min_len: 3 }
    }
}

/// Inclusive `(first, last)` cycle intervals of pen-down activity.
pub fn detect_strokes(energies: &[f64], noise_floor: f64, params: &StrokeParams) -> Result<Vec<(usize, usize)>> {
    if !(noise_floor > 0.0) {
        return Err(invalid(format!("noise floor must be > 0, got {noise_floor}")));
    }
    if energies.is_empty() {
        return Err(Error::InvalidInput("no energies".into()));
    }
    let threshold = params.k * noise_floor;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        if e > threshold {
            match runs.last_mut() {
                Some(last) if i - last.1 <= params.gap + 1 => last.1 = i,
                _ => runs.push((i, i)),
            }
        }
    }
    runs.retain(|&(a, b)| b - a + 1 >= params.min_len);
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothParams {
    pub median_window: usize,
    pub average_window: usize,
    /// Every smoothed stroke is resampled to this many points.
    pub points_per_stroke: usize,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            median_window: 3,
            average_window: 5,
            points_per_stroke: 48,
        }
    }
}

/// One pen-down polyline with the (fractional) cycle index of every point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<Point>,
    pub cycles: Vec<f64>,
}

impl Stroke {
    pub fn new(points: Vec<Point>, cycles: Vec<f64>) -> Result<Self> {
        if points.len() != cycles.len() {
            return Err(Error::InvalidInput("points and cycle indices differ in length".into()));
        }
        Ok(Self { points, cycles })
    }

    pub fn start_cycle(&self) -> f64 {
        self.cycles.first().copied().unwrap_or(f64::INFINITY)
    }
}

/// Median with edge replication.
fn median_filter(x: &[f64], window: usize) -> Vec<f64> {
    let h = window / 2;
    if h == 0 {
        return x.to_vec();
    }
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut w: Vec<f64> = (i - h as isize..=i + h as isize).map(|j| x[j.clamp(0, n - 1) as usize]).collect();
            w.sort_by(f64::total_cmp);
            w[h]
        })
        .collect()
}

/// Centred moving average whose window shrinks symmetrically near the ends.
fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let h = (window / 2).min(i).min(n - 1 - i);
            x[i - h..=i + h].iter().sum::<f64>() / (2 * h + 1) as f64
        })
        .collect()
}

fn resample(x: &[f64], n: usize) -> Result<Vec<f64>> {
    if x.len() == 1 {
        return Ok(vec![x[0]; n]);
    }
    reshape(x, n)
}

/// Median then moving-average filtering per axis, then uniform re-interpolation.
pub fn smooth(points: &[PositionEstimate], params: &SmoothParams) -> Result<Stroke> {
    if points.is_empty() {
        return Err(Error::InvalidInput("cannot smooth an empty point list".into()));
    }
    if params.points_per_stroke < 2 {
        return Err(invalid("points_per_stroke must be >= 2"));
    }
    let axis = |f: fn(&Point) -> f64| -> Result<Vec<f64>> {
        let raw: Vec<f64> = points.iter().map(|p| f(&p.point)).collect();
        let filtered = moving_average(&median_filter(&raw, params.median_window), params.average_window);
        resample(&filtered, params.points_per_stroke)
    };
    let xs = axis(|p| p.x)?;
    let ys = axis(|p| p.y)?;
    let cycles: Vec<f64> = points.iter().map(|p| p.cycle_index as f64).collect();
    let cycles = resample(&cycles, params.points_per_stroke)?;
    let pts = xs.into_iter().zip(ys).map(|(x, y)| Point::new(x, y).clamp_unit()).collect();
    Stroke::new(pts, cycles)
}

/// An ordered set of strokes; pen-up gaps are never joined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub strokes: Vec<Stroke>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.strokes.iter().map(|s| s.points.len()).sum()
    }

    fn bounds(&self) -> Option<(Point, Point)> {
        let mut it = self.strokes.iter().flat_map(|s| s.points.iter());
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y)))
        }))
    }

    /// Stretches the bounding box onto `[margin, 1 - margin]²`. A flat axis
    /// is centred instead of stretched.
    pub fn fit_unit(&self, margin: f64) -> Trajectory {
        let Some((lo, hi)) = self.bounds() else {
            return self.clone();
        };
        let span = 1.0 - 2.0 * margin;
        let map = |v: f64, lo: f64, hi: f64| {
            if hi - lo < 1e-9 {
                0.5
            } else {
                margin + span * (v - lo) / (hi - lo)
            }
        };
        Trajectory {
            strokes: self
                .strokes
                .iter()
                .map(|s| Stroke {
                    points: s.points.iter().map(|p| Point::new(map(p.x, lo.x, hi.x), map(p.y, lo.y, hi.y))).collect(),
                    cycles: s.cycles.clone(),
                })
                .collect(),
        }
    }

    /// One block per stroke, lines `x y cycle_index`, blocks separated by a blank line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.strokes.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# stroke {i}");
            for (p, c) in s.points.iter().zip(&s.cycles) {
                let _ = writeln!(out, "{} {} {}", p.x, p.y, c);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut strokes = Vec::new();
        let mut cur: Option<Stroke> = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                if let Some(s) = cur.take() {
                    strokes.push(s);
                }
                continue;
            }
            let f: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidInput(format!("{line:?}: {e}"))))
                .collect::<Result<_>>()?;
            if f.len() != 3 {
                return Err(Error::InvalidInput(format!("expected `x y cycle_index`, got {line:?}")));
            }
            let s = cur.get_or_insert_with(|| Stroke {
                points: Vec::new(),
                cycles: Vec::new(),
            });
            s.points.push(Point::new(f[0], f[1]));
            s.cycles.push(f[2]);
        }
        if let Some(s) = cur {
            strokes.push(s);
        }
        Ok(Self { strokes })
    }
}

/// Orders strokes by their first cycle.
pub fn splice(mut strokes: Vec<Stroke>) -> Result<Trajectory> {
    if strokes.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if let Some(s) = strokes.iter().find(|s| s.points.len() < 2) {
        return Err(Error::InvalidInput(format!("stroke with {} points; at least 2 needed", s.points.len())));
    }
    strokes.sort_by(|a, b| a.start_cycle().total_cmp(&b.start_cycle()));
    Ok(Trajectory { strokes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(points: &[(f64, f64)]) -> Vec<PositionEstimate> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| PositionEstimate {
                cycle_index: i,
                point: Point::new(x, y),
                confidence: 1.0,
                active: true,
            })
            .collect()
    }

    #[test]
    fn stroke_threshold_rule() {
        let p = StrokeParams::default();
        assert_eq!(detect_strokes(&[1., 1., 9., 9., 9., 1.], 1.0, &p).unwrap(), vec![(2, 4)]);
        assert!(detect_strokes(&[1.0; 20], 1.0, &p).unwrap().is_empty());
        assert!(detect_strokes(&[1.0], 0.0, &p).is_err());
    }

    #[test]
    fn closing_bridges_short_gaps_only() {
        let p = StrokeParams::default();
        let e = [9., 9., 1., 1., 9., 9., 1., 1., 1., 9., 9., 9.];
        assert_eq!(detect_strokes(&e, 1.0, &p).unwrap(), vec![(0, 5), (9, 11)]);
        // Runs shorter than three cycles are dropped.
        assert!(detect_strokes(&[1., 9., 9., 1., 1., 1.], 1.0, &p).unwrap().is_empty());
    }

    #[test]
    fn constant_and_ramp_survive_smoothing() {
        let params = SmoothParams {
            points_per_stroke: 10,
            ..SmoothParams::default()
        };
        let c = smooth(&est(&[(0.3, 0.6); 7]), &params).unwrap();
        assert!(c.points.iter().all(|p| p.x == 0.3 && p.y == 0.6));

        let ramp: Vec<(f64, f64)> = (0..10).map(|i| (0.1 + 0.05 * i as f64, 0.2 + 0.03 * i as f64)).collect();
        let s = smooth(&est(&ramp), &params).unwrap();
        for (k, p) in s.points.iter().enumerate() {
            assert!((p.x - (0.1 + 0.05 * k as f64)).abs() < 1e-9);
            assert!((p.y - (0.2 + 0.03 * k as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn splice_orders_and_rejects_empty() {
        let a = Stroke::new(vec![Point::new(0.1, 0.1), Point::new(0.2, 0.2)], vec![50.0, 51.0]).unwrap();
        let b = Stroke::new(vec![Point::new(0.5, 0.5), Point::new(0.6, 0.6)], vec![3.0, 4.0]).unwrap();
        let t = splice(vec![a.clone()]).unwrap();
        assert_eq!(t.strokes, vec![a.clone()]);
        let t = splice(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(t.strokes, vec![b, a]);
        assert!(matches!(splice(vec![]), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn text_export_round_trips() {
        let t = glyph_trajectory('A').unwrap();
        let back = Trajectory::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
    }
}
