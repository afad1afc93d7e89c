use crate::error::{CliError, CliResult};
use kdvision::raster::Connectivity;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    /// Valley of the grey-level histogram.
    Auto,
    Fixed(u16),
}

/// Which side of the threshold holds the objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// The less populated side.
    Auto,
    Bright,
    Dark,
}

/// Ordering of nearest and example answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ranking {
    /// Prefix rings for a typed key, centered rings for an example.
    Auto,
    /// Rings of shared leading key bits.
    Prefix,
    /// Rings of neighborhoods centered on the key.
    Centered,
}

/// Every knob of the processing chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub threshold: Threshold,
    pub polarity: Polarity,
    pub smooth: usize,
    pub connectivity: Connectivity,
    pub precision: f64,
    pub attrs: Vec<String>,
    pub depth: u32,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub equalize: bool,
    pub transform: Option<PathBuf>,
    pub control_points: Option<PathBuf>,
    pub transform_order: u8,
    pub overlay: Option<u16>,
    pub ranking: Ranking,
}

pub const KEYS: [&str; 14] = [
    "threshold",
    "polarity",
    "smooth",
    "connectivity",
    "precision",
    "attrs",
    "depth",
    "bounds",
    "equalize",
    "transform",
    "control_points",
    "transform_order",
    "overlay",
    "ranking",
];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: Threshold::Auto,
            polarity: Polarity::Auto,
            smooth: 5,
            connectivity: Connectivity::Eight,
            precision: 1.0,
            attrs: ["scale", "surface", "eccentricity", "asym1", "asym2"].map(String::from).to_vec(),
            depth: 6,
            bounds: None,
            equalize: false,
            transform: None,
            control_points: None,
            transform_order: 1,
            overlay: None,
            ranking: Ranking::Auto,
        }
    }
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Config(format!("bad value `{value}` for `{key}`"))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| bad(key, value))
}

/// `lo:hi` pairs separated by commas.
pub fn parse_intervals(value: &str) -> Option<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|pair| {
            let (lo, hi) = pair.trim().split_once(':')?;
            Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
        })
        .collect()
}

/// Comma separated numbers.
pub fn parse_vector(value: &str) -> Option<Vec<f64>> {
    value.split(',').map(|v| v.trim().parse().ok()).collect()
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "threshold" => {
                self.threshold = match value {
                    "auto" => Threshold::Auto,
                    v => Threshold::Fixed(number(key, v)?),
                }
            }
            "polarity" => {
                self.polarity = match value {
                    "auto" => Polarity::Auto,
                    "bright" => Polarity::Bright,
                    "dark" => Polarity::Dark,
                    v => return Err(bad(key, v)),
                }
            }
            "smooth" => self.smooth = number(key, value)?,
            "connectivity" => {
                self.connectivity = match value {
                    "4" => Connectivity::Four,
                    "8" => Connectivity::Eight,
                    v => return Err(bad(key, v)),
                }
            }
            "precision" => self.precision = number(key, value)?,
            "attrs" => {
                self.attrs = value.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect()
            }
            "depth" => self.depth = number(key, value)?,
            "bounds" => self.bounds = Some(parse_intervals(value).ok_or_else(|| bad(key, value))?),
            "equalize" => self.equalize = number(key, value)?,
            "transform" => self.transform = Some(PathBuf::from(value)),
            "control_points" => self.control_points = Some(PathBuf::from(value)),
            "transform_order" => self.transform_order = number(key, value)?,
            "overlay" => self.overlay = Some(number(key, value)?),
            "ranking" => {
                self.ranking = match value {
                    "auto" => Ranking::Auto,
                    "prefix" => Ranking::Prefix,
                    "centered" => Ranking::Centered,
                    v => return Err(bad(key, v)),
                }
            }
            k => return Err(CliError::Config(format!("unknown key `{k}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.precision.is_finite() && self.precision > 0.0) {
            return fail("precision must be positive");
        }
        if self.smooth == 0 {
            return fail("smooth must be at least 1");
        }
        if self.depth == 0 || self.depth > 32 {
            return fail("depth must lie in 1..=32");
        }
        if !(1..=3).contains(&self.transform_order) {
            return fail("transform_order must lie in 1..=3");
        }
        if self.transform.is_some() && self.control_points.is_some() {
            return fail("give either transform or control_points");
        }
        if let Some(b) = &self.bounds {
            if b.len() != self.attrs.len() {
                return fail("bounds need one interval per attribute");
            }
            if b.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
                return fail("bounds need lo < hi");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_text("# chain\nthreshold = 120\nconnectivity = 4\nattrs = scale, surface\nbounds = 0:1, 2:3\n")
            .unwrap();
        c.set("precision", "2.5").unwrap();
        c.validate().unwrap();
        assert_eq!(c.threshold, Threshold::Fixed(120));
        assert_eq!(c.connectivity, Connectivity::Four);
        assert_eq!(c.attrs, vec!["scale", "surface"]);
        assert_eq!(c.bounds, Some(vec![(0.0, 1.0), (2.0, 3.0)]));
        assert_eq!(c.precision, 2.5);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = PipelineConfig::default();
        assert!(c.set("threshold", "high").is_err());
        assert!(c.set("colour", "red").is_err());
        assert!(c.apply_text("depth 4").is_err());
        c.set("depth", "0").unwrap();
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.set("bounds", "0:1").unwrap();
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.set("precision", "-1").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let samples = ["auto", "dark", "3", "8", "0.5", "scale", "4", "0:1", "true", "t.txt", "cp.txt", "2", "200"];
        let mut c = PipelineConfig::default();
        for (k, v) in KEYS.iter().zip(samples) {
            c.set(k, v).unwrap();
        }
    }
}
