//! Report emission: structured `metric=value` text plus `x,y` plot-data CSV.

use std::fmt::Display;
use std::io::Write;

use crate::Result;

#[derive(Debug, Default, Clone)]
pub struct Report {
    fields: Vec<(String, String)>,
}

impl Report {
    pub fn new(config_hash: u64) -> Self {
        let mut r = Report::default();
        r.push("config_hash", format!("{config_hash:016x}"));
        r
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.fields {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

/// Plot-data series: header `x,y` then one row per point.
pub fn plot_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}
