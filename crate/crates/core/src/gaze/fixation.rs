use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One fixation in screen space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub t_ms: f64,
    pub x_px: f64,
    pub y_px: f64,
    pub dur_ms: f64,
}

/// Monospace rendering geometry of the code area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub origin_x_px: f64,
    pub origin_y_px: f64,
    pub char_width_px: f64,
    pub line_height_px: f64,
    pub tab_width: usize,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec {
            origin_x_px: 40.0,
            origin_y_px: 30.0,
            char_width_px: 9.0,
            line_height_px: 20.0,
            tab_width: 4,
        }
    }
}

impl LayoutSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.origin_x_px,
            self.origin_y_px,
            self.char_width_px,
            self.line_height_px,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.char_width_px <= 0.0 || self.line_height_px <= 0.0 || self.tab_width == 0
        {
            return Err(Error::param(format!(
                "layout needs finite origin, positive cell size and tab width, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let layout: LayoutSpec = serde_json::from_str(&text)
            .map_err(|e| Error::data(path.display().to_string(), "layout", e.to_string()))?;
        layout
            .validate()
            .map_err(|e| Error::data(path.display().to_string(), "layout", e.to_string()))?;
        Ok(layout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("layout serializes");
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads a `t_ms,x_px,y_px,dur_ms` fixation log, checking that durations
/// are positive, coordinates finite, and onsets non-decreasing.
pub fn read_fixations(path: &Path) -> Result<Vec<Fixation>> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(&file, "csv", format!("{other:?}")),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::data(&file, "header", e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["t_ms", "x_px", "y_px", "dur_ms"] {
        return Err(Error::data(
            &file,
            "header",
            "expected `t_ms,x_px,y_px,dur_ms`",
        ));
    }
    let mut out: Vec<Fixation> = Vec::new();
    for (i, record) in reader.deserialize::<Fixation>().enumerate() {
        let row = i + 2;
        let fix = record.map_err(|e| Error::data(&file, format!("row {row}"), e.to_string()))?;
        let coords_ok = [fix.t_ms, fix.x_px, fix.y_px, fix.dur_ms]
            .iter()
            .all(|v| v.is_finite());
        if !coords_ok {
            return Err(Error::data(&file, format!("row {row}"), "non-finite value"));
        }
        if fix.dur_ms <= 0.0 {
            return Err(Error::data(
                &file,
                format!("row {row} dur_ms"),
                "must be positive",
            ));
        }
        if out.last().is_some_and(|prev| prev.t_ms > fix.t_ms) {
            return Err(Error::data(
                &file,
                format!("row {row} t_ms"),
                "fixations out of time order",
            ));
        }
        out.push(fix);
    }
    Ok(out)
}

pub fn write_fixations(path: &Path, fixations: &[Fixation]) -> Result<()> {
    let mut out = String::from("t_ms,x_px,y_px,dur_ms\n");
    for f in fixations {
        out.push_str(&format!("{},{},{},{}\n", f.t_ms, f.x_px, f.y_px, f.dur_ms));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
