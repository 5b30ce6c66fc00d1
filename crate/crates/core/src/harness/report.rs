//! Run reports: a text summary, JSON, and CSVs for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::attack::CharacterResult;
use super::config::RasterConfig;
use crate::error::{Error, Result};
use crate::posnet::EpochStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Rows are true zones, columns predicted zones.
    pub confusion: Vec<Vec<u64>>,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    pub distance_cm: f64,
    pub mean_jaccard: f64,
    pub top3_rate: f64,
    pub n_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub manifest_digest: Option<String>,
    pub checkpoint_digest: Option<String>,
    /// Format name to version.
    pub formats: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    /// The experiment config as TOML.
    pub config: String,
    pub raster: Option<RasterConfig>,
    pub training: Option<TrainingSummary>,
    pub characters: Vec<CharacterResult>,
    pub mean_jaccard: Option<f64>,
    pub top3_rate: Option<f64>,
    pub distance_sweep: Vec<DistancePoint>,
    /// Wall-clock seconds per stage. Not covered by [`Report::metrics_digest`].
    pub runtime_s: BTreeMap<String, f64>,
}

impl Report {
    /// Recomputes the character aggregates.
    pub fn summarize_characters(&mut self) {
        let n = self.characters.len();
        if n == 0 {
            self.mean_jaccard = None;
            self.top3_rate = None;
            return;
        }
        self.mean_jaccard = Some(self.characters.iter().map(|c| c.jaccard).sum::<f64>() / n as f64);
        self.top3_rate = Some(self.characters.iter().filter(|c| c.top3_hit).count() as f64 / n as f64);
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("report: {e}")))
    }

    /// SHA-256 over everything except wall-clock timings.
    pub fn metrics_digest(&self) -> Result<String> {
        let mut r = self.clone();
        r.runtime_s.clear();
        Ok(hex::encode(Sha256::digest(r.to_json()?.as_bytes())))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.provenance;
        let _ = writeln!(s, "touchleak report (v{})", p.tool_version);
        let _ = writeln!(s, "seed            {}", p.seed);
        let _ = writeln!(s, "config digest   {}", p.config_digest);
        if let Some(d) = &p.manifest_digest {
            let _ = writeln!(s, "manifest digest {d}");
        }
        if let Some(d) = &p.checkpoint_digest {
            let _ = writeln!(s, "model digest    {d}");
        }
        if let Some(r) = &self.raster {
            let _ = writeln!(
                s,
                "raster          {}x{}, thickness {}, bounding-box fitted",
                r.width, r.height, r.thickness
            );
        }
        if let Some(t) = &self.training {
            let _ = writeln!(s, "\ntraining: {} train / {} test vectors", t.n_train, t.n_test);
            for e in &t.history {
                let test = e.test_acc.map_or("-".to_string(), |a| format!("{a:.4}"));
                let _ = writeln!(
                    s,
                    "  epoch {:>3}  loss {:.4}  train {:.4}  test {test}",
                    e.epoch, e.loss, e.train_acc
                );
            }
            let _ = writeln!(s, "  test accuracy {:.4}", t.test_accuracy);
        }
        if !self.characters.is_empty() {
            let _ = writeln!(s, "\ncharacters:");
            for c in &self.characters {
                let top: Vec<String> = c.top_matches.iter().take(3).map(|(m, v)| format!("{m}:{v:.3}")).collect();
                let _ = writeln!(
                    s,
                    "  {:?}  strokes {}/{}  jaccard {:.4}  top3 [{}]  {}{}",
                    c.character,
                    c.n_strokes,
                    c.n_truth_strokes,
                    c.jaccard,
                    top.join(" "),
                    if c.top3_hit { "hit" } else { "miss" },
                    c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default()
                );
            }
            if let (Some(j), Some(r)) = (self.mean_jaccard, self.top3_rate) {
                let _ = writeln!(s, "  mean jaccard {j:.4}, top-3 rate {r:.3}");
            }
        }
        if !self.distance_sweep.is_empty() {
            let _ = writeln!(s, "\ndistance sweep:");
            for d in &self.distance_sweep {
                let _ = writeln!(
                    s,
                    "  {:>5.1} cm  mean jaccard {:.4}  top-3 rate {:.3}  ({} cases)",
                    d.distance_cm, d.mean_jaccard, d.top3_rate, d.n_cases
                );
            }
        }
        if !self.runtime_s.is_empty() {
            let _ = writeln!(s, "\nruntime:");
            for (k, v) in &self.runtime_s {
                let _ = writeln!(s, "  {k:<12} {v:.1} s");
            }
        }
        s
    }
}

pub fn confusion_csv(confusion: &[Vec<u64>]) -> String {
    let n = confusion.len();
    let mut s = String::from("true");
    for j in 0..n {
        let _ = write!(s, ",pred_{j}");
    }
    s.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{i},{}", cells.join(","));
    }
    s
}

pub fn distance_csv(points: &[DistancePoint]) -> String {
    let mut s = String::from("distance_cm,mean_jaccard,top3_rate,n_cases\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.distance_cm, p.mean_jaccard, p.top3_rate, p.n_cases);
    }
    s
}

/// Truth and reconstruction points of one character, one row per point.
pub fn overlay_csv(c: &CharacterResult) -> String {
    let mut s = String::from("series,stroke,x,y,cycle\n");
    for (name, t) in [("truth", &c.truth), ("reconstruction", &c.reconstruction)] {
        for (k, stroke) in t.strokes.iter().enumerate() {
            for (p, cyc) in stroke.points.iter().zip(&stroke.cycles) {
                let _ = writeln!(s, "{name},{k},{},{},{cyc}", p.x, p.y);
            }
        }
    }
    s
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,train_acc,test_acc\n");
    for e in history {
        let test = e.test_acc.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{test}", e.epoch, e.loss, e.train_acc);
    }
    s
}

/// Writes `report.txt`, `report.json` and whichever CSVs apply into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), report.to_text())?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    if let Some(t) = &report.training {
        fs::write(dir.join("confusion.csv"), confusion_csv(&t.confusion))?;
    }
    if !report.distance_sweep.is_empty() {
        fs::write(dir.join("distance.csv"), distance_csv(&report.distance_sweep))?;
    }
    if !report.characters.is_empty() {
        let overlays = dir.join("overlays");
        fs::create_dir_all(&overlays)?;
        for (i, c) in report.characters.iter().enumerate() {
            fs::write(overlays.join(format!("{i:02}_u{:04x}.csv", c.character as u32)), overlay_csv(c))?;
        }
    }
    Ok(())
}
