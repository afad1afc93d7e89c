use crate::error::{Error, Result};

/// Monotone map from attribute values to their normalized mid-ranks, with
/// linear interpolation between the observed values.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizationMap {
    /// `(value, rank)` for every distinct observed value, increasing.
    knots: Vec<(f64, f64)>,
}

impl EqualizationMap {
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        let ok = !knots.is_empty()
            && knots.iter().all(|k| k.0.is_finite() && (0.0..=1.0).contains(&k.1))
            && knots.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1);
        if ok {
            Ok(EqualizationMap { knots })
        } else {
            Err(Error::parse("equalization map", 0, "knots must increase in value and rank"))
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// A single observed value: every input maps to one rank.
    pub fn is_degenerate(&self) -> bool {
        self.knots.len() == 1
    }

    pub fn forward(&self, v: f64) -> f64 {
        interpolate(&self.knots, v, |k| k.0, |k| k.1)
    }

    pub fn inverse(&self, r: f64) -> f64 {
        interpolate(&self.knots, r, |k| k.1, |k| k.0)
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64, from: impl Fn(&(f64, f64)) -> f64, to: impl Fn(&(f64, f64)) -> f64) -> f64 {
    let i = knots.partition_point(|k| from(k) < x);
    if i == 0 {
        return to(&knots[0]);
    }
    if i == knots.len() {
        return to(&knots[i - 1]);
    }
    if from(&knots[i]) == x {
        return to(&knots[i]);
    }
    let (a, b) = (&knots[i - 1], &knots[i]);
    let t = (x - from(a)) / (from(b) - from(a));
    to(a) + t * (to(b) - to(a))
}

/// Mid-rank `(less + equal / 2) / n` of every value, and the map that
/// produced it.
pub fn equalize_column(values: &[f64]) -> Result<(Vec<f64>, EqualizationMap)> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut knots = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].partition_point(|&v| v == sorted[i]) + i;
        knots.push((sorted[i], (i as f64 + (j - i) as f64 / 2.0) / n));
        i = j;
    }
    let map = EqualizationMap { knots };
    Ok((values.iter().map(|&v| map.forward(v)).collect(), map))
}

/// Equalized columns with their maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Equalization {
    pub columns: Vec<Vec<f64>>,
    pub maps: Vec<EqualizationMap>,
}

impl Equalization {
    pub fn degenerate(&self) -> Vec<bool> {
        self.maps.iter().map(EqualizationMap::is_degenerate).collect()
    }
}

pub fn equalize_columns(columns: &[Vec<f64>]) -> Result<Equalization> {
    let mut out = Equalization { columns: Vec::new(), maps: Vec::new() };
    for c in columns {
        let (col, map) = equalize_column(c)?;
        out.columns.push(col);
        out.maps.push(map);
    }
    Ok(out)
}
