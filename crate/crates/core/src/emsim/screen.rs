use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::Point;

/// Which grid axis the controller scans sequentially, one TX electrode per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    /// TX electrodes run vertically; slot index = column.
    #[default]
    Columns,
    /// TX electrodes run horizontally; slot index = row.
    Rows,
}

/// Handsets with published touch-sampling rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DevicePreset {
    Iphone7,
    IphoneX,
    Xiaomi10Pro,
    SamsungS10,
    HuaweiMate30Pro,
}

impl DevicePreset {
    pub const ALL: [DevicePreset; 5] = [
        DevicePreset::Iphone7,
        DevicePreset::IphoneX,
        DevicePreset::Xiaomi10Pro,
        DevicePreset::SamsungS10,
        DevicePreset::HuaweiMate30Pro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DevicePreset::Iphone7 => "iphone-7",
            DevicePreset::IphoneX => "iphone-x",
            DevicePreset::Xiaomi10Pro => "xiaomi-10-pro",
            DevicePreset::SamsungS10 => "samsung-s10",
            DevicePreset::HuaweiMate30Pro => "huawei-mate30-pro",
        }
    }

    pub fn touch_sampling_freq(self) -> f64 {
        match self {
            DevicePreset::Iphone7 => 60.0,
            DevicePreset::Xiaomi10Pro => 180.0,
            _ => 120.0,
        }
    }

    pub fn screen_refresh_freq(self) -> f64 {
        match self {
            DevicePreset::Xiaomi10Pro => 90.0,
            _ => 60.0,
        }
    }

    /// Approximate active display area (width, height) in millimetres.
    pub fn size_mm(self) -> (f64, f64) {
        match self {
            DevicePreset::Iphone7 => (58.5, 104.1),
            DevicePreset::IphoneX => (62.1, 134.9),
            DevicePreset::Xiaomi10Pro => (69.8, 152.4),
            DevicePreset::SamsungS10 => (65.5, 142.5),
            DevicePreset::HuaweiMate30Pro => (67.4, 148.6),
        }
    }
}

impl fmt::Display for DevicePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DevicePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DevicePreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown device preset {s:?}")))
    }
}

/// Zone grid and timing of one touchscreen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub touch_sampling_freq: f64,
    /// Display refresh rate. Carried as metadata; it does not shape the leakage.
    pub screen_refresh_freq: f64,
    pub scan_axis: ScanAxis,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for ScreenSpec {
    fn default() -> Self {
        Self::from_preset(DevicePreset::IphoneX, 32, 15)
    }
}

impl ScreenSpec {
    pub fn from_preset(preset: DevicePreset, n_rows: usize, n_cols: usize) -> Self {
        let (width_mm, height_mm) = preset.size_mm();
        Self {
            n_rows,
            n_cols,
            touch_sampling_freq: preset.touch_sampling_freq(),
            screen_refresh_freq: preset.screen_refresh_freq(),
            scan_axis: ScanAxis::Columns,
            width_mm,
            height_mm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(invalid(format!("grid must be at least 1x1, got {}x{}", self.n_rows, self.n_cols)));
        }
        if !(self.touch_sampling_freq.is_finite() && self.touch_sampling_freq > 0.0) {
            return Err(invalid(format!("touch_sampling_freq must be > 0, got {}", self.touch_sampling_freq)));
        }
        Ok(())
    }

    pub fn n_zones(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Number of TX electrodes scanned per cycle.
    pub fn n_scan_slots(&self) -> usize {
        match self.scan_axis {
            ScanAxis::Columns => self.n_cols,
            ScanAxis::Rows => self.n_rows,
        }
    }

    /// Zone (row, col) containing a normalized point. Points on the far edge
    /// belong to the last zone.
    pub fn zone_of(&self, p: Point) -> (usize, usize) {
        let cell = |v: f64, n: usize| ((v.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
        (cell(p.y, self.n_rows), cell(p.x, self.n_cols))
    }

    pub fn zone_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            (col as f64 + 0.5) / self.n_cols as f64,
            (row as f64 + 0.5) / self.n_rows as f64,
        )
    }

    /// Splits a point into (scan slot index, off-axis coordinate in `[0, 1]`).
    pub fn scan_coordinates(&self, p: Point) -> (usize, f64) {
        let (row, col) = self.zone_of(p);
        match self.scan_axis {
            ScanAxis::Columns => (col, p.y.clamp(0.0, 1.0)),
            ScanAxis::Rows => (row, p.x.clamp(0.0, 1.0)),
        }
    }
}
