//! Statistical classification of planes, attribute vectors and regions.

mod aggregate;
mod derivative;
mod discriminant;
mod histogram;
mod regression;

pub use aggregate::{aggregate_regions, AggregationNode, AggregationTree, Merge};
pub use derivative::derivative_stack;
pub use discriminant::{
    fit_discriminant, format_discriminant, identify, parse_discriminant, DiscriminantModel, Identification,
};
pub use histogram::{
    build_histogram2d, classify_histogram, relabel_pair, sequential_classify, skin_calibrate, skin_detect,
    ClassMap, Histogram2D, NON_SKIN, SKIN,
};
pub use regression::{
    auth_threshold, fit_regression, fit_regression_logged, format_auth, format_regression, parse_auth,
    parse_regression, AuthModel, RegressionModel,
};

use crate::error::{Error, Result};
use crate::raster::{GreyImage, LabelImage};

/// One band of integer values over a raster grid, with an exclusive upper
/// bound on its values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    range: u32,
    values: Vec<u32>,
}

impl Plane {
    /// Plane whose range is one past its largest value.
    pub fn new(width: usize, height: usize, values: Vec<u32>) -> Result<Self> {
        let range = values.iter().copied().max().unwrap_or(0) + 1;
        Plane::with_range(width, height, range, values)
    }

    pub fn with_range(width: usize, height: usize, range: u32, values: Vec<u32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} plane",
                values.len()
            )));
        }
        if let Some(&v) = values.iter().find(|&&v| v >= range) {
            return Err(Error::OutOfRange { value: v, limit: range as usize });
        }
        Ok(Plane { width, height, range, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.values[y * self.width + x]
    }
}

impl From<&GreyImage> for Plane {
    fn from(img: &GreyImage) -> Self {
        Plane {
            width: img.width(),
            height: img.height(),
            range: img.max_grey() as u32 + 1,
            values: img.data().iter().map(|&v| v as u32).collect(),
        }
    }
}

impl From<&LabelImage> for Plane {
    fn from(img: &LabelImage) -> Self {
        Plane {
            width: img.width(),
            height: img.height(),
            range: img.max_label() + 1,
            values: img.data().to_vec(),
        }
    }
}

fn same_grid(a: &Plane, b: &Plane) -> Result<()> {
    if a.width == b.width && a.height == b.height {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{}x{} plane against {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}
