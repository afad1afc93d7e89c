//! Moments through order 3, principal frames and shape invariants.
//!
//! Raw moments are exact integer power sums. Centering keeps exact integer
//! numerators whenever they fit in `i128`, which makes centered values
//! bit-identical under integer translations and lets the principal frame be
//! evaluated on a rotation-canonical copy of the moments, so quarter-turn
//! rotations of a mask give bit-identical invariants.

use crate::error::{Error, Result};
use crate::raster::GreyImage;
use crate::text::{fmt_f64, lines, Tokens};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, AddAssign};

/// Horizontal pixel span `x1..=x2` on row `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RunSegment {
    pub y: i64,
    pub x1: i64,
    pub x2: i64,
}

/// Coordinate power sums over an object's pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct RawMoments {
    pub m0: i128,
    pub mx: i128,
    pub my: i128,
    pub mxx: i128,
    pub mxy: i128,
    pub myy: i128,
    pub mxxx: i128,
    pub mxxy: i128,
    pub mxyy: i128,
    pub myyy: i128,
}

impl RawMoments {
    pub fn add_pixel(&mut self, x: i64, y: i64) {
        let (x, y) = (x as i128, y as i128);
        self.m0 += 1;
        self.mx += x;
        self.my += y;
        self.mxx += x * x;
        self.mxy += x * y;
        self.myy += y * y;
        self.mxxx += x * x * x;
        self.mxxy += x * x * y;
        self.mxyy += x * y * y;
        self.myyy += y * y * y;
    }

    pub fn from_pixels(pixels: impl IntoIterator<Item = (i64, i64)>) -> Self {
        let mut m = RawMoments::default();
        for (x, y) in pixels {
            m.add_pixel(x, y);
        }
        m
    }

    pub fn fields(&self) -> [i128; 10] {
        [
            self.m0, self.mx, self.my, self.mxx, self.mxy, self.myy, self.mxxx, self.mxxy,
            self.mxyy, self.myyy,
        ]
    }

    pub fn from_fields(f: [i128; 10]) -> Self {
        RawMoments {
            m0: f[0],
            mx: f[1],
            my: f[2],
            mxx: f[3],
            mxy: f[4],
            myy: f[5],
            mxxx: f[6],
            mxxy: f[7],
            mxyy: f[8],
            myyy: f[9],
        }
    }
}

impl Add for RawMoments {
    type Output = RawMoments;
    fn add(self, other: RawMoments) -> RawMoments {
        let (a, b) = (self.fields(), other.fields());
        RawMoments::from_fields(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl AddAssign for RawMoments {
    fn add_assign(&mut self, other: RawMoments) {
        *self = *self + other;
    }
}

/// Σ k^p for k in 0..=a, as the polynomial valid for every integer `a`.
fn power_prefix(a: i128, p: u32) -> i128 {
    match p {
        0 => a + 1,
        1 => a * (a + 1) / 2,
        2 => a * (a + 1) * (2 * a + 1) / 6,
        3 => {
            let t = a * (a + 1) / 2;
            t * t
        }
        _ => unreachable!("power sums stop at order 3"),
    }
}

/// Σ x^p for x in lo..=hi.
fn power_sum(lo: i64, hi: i64, p: u32) -> i128 {
    power_prefix(hi as i128, p) - power_prefix(lo as i128 - 1, p)
}

/// Moments of a set of disjoint inclusive runs, in closed form per run.
pub fn moments_from_runs(runs: &[RunSegment]) -> RawMoments {
    let mut m = RawMoments::default();
    for r in runs {
        if r.x2 < r.x1 {
            continue;
        }
        let y = r.y as i128;
        let n = power_sum(r.x1, r.x2, 0);
        let s1 = power_sum(r.x1, r.x2, 1);
        let s2 = power_sum(r.x1, r.x2, 2);
        let s3 = power_sum(r.x1, r.x2, 3);
        m.m0 += n;
        m.mx += s1;
        m.my += y * n;
        m.mxx += s2;
        m.mxy += y * s1;
        m.myy += y * y * n;
        m.mxxx += s3;
        m.mxxy += y * s2;
        m.mxyy += y * y * s1;
        m.myyy += y * y * y * n;
    }
    m
}

/// Centered numerators: second order scaled by S, third order by S².
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ExactCentered {
    second: [i128; 3],
    third: [i128; 4],
}

fn exact_centered(rm: &RawMoments) -> Option<ExactCentered> {
    let s = rm.m0;
    let mul = |a: i128, b: i128| a.checked_mul(b);
    let mul3 = |a: i128, b: i128, c: i128| a.checked_mul(b)?.checked_mul(c);
    let sq = mul(s, s)?;
    let second = [
        mul(s, rm.mxx)?.checked_sub(mul(rm.mx, rm.mx)?)?,
        mul(s, rm.mxy)?.checked_sub(mul(rm.mx, rm.my)?)?,
        mul(s, rm.myy)?.checked_sub(mul(rm.my, rm.my)?)?,
    ];
    // S²·μ_pq from the binomial translation identities
    let xxx = mul(sq, rm.mxxx)?
        .checked_sub(mul3(3 * s, rm.mx, rm.mxx)?)?
        .checked_add(mul3(2 * rm.mx, rm.mx, rm.mx)?)?;
    let xxy = mul(sq, rm.mxxy)?
        .checked_sub(mul3(2 * s, rm.mx, rm.mxy)?)?
        .checked_sub(mul3(s, rm.my, rm.mxx)?)?
        .checked_add(mul3(2 * rm.mx, rm.mx, rm.my)?)?;
    let xyy = mul(sq, rm.mxyy)?
        .checked_sub(mul3(2 * s, rm.my, rm.mxy)?)?
        .checked_sub(mul3(s, rm.mx, rm.myy)?)?
        .checked_add(mul3(2 * rm.my, rm.my, rm.mx)?)?;
    let yyy = mul(sq, rm.myyy)?
        .checked_sub(mul3(3 * s, rm.my, rm.myy)?)?
        .checked_add(mul3(2 * rm.my, rm.my, rm.my)?)?;
    Some(ExactCentered {
        second,
        third: [xxx, xxy, xyy, yyy],
    })
}

impl ExactCentered {
    /// Numerators of the same object turned a quarter turn, (x,y) → (−y,x).
    fn quarter_turn(&self) -> Self {
        let [xx, xy, yy] = self.second;
        let [xxx, xxy, xyy, yyy] = self.third;
        ExactCentered {
            second: [yy, -xy, xx],
            third: [-yyy, xyy, -xxy, xxx],
        }
    }

    fn key(&self) -> [i128; 7] {
        let [a, b, c] = self.second;
        let [d, e, f, g] = self.third;
        [a, b, c, d, e, f, g]
    }
}

/// Moments translated to the gravity center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenteredMoments {
    pub s: f64,
    pub xg: f64,
    pub yg: f64,
    pub mxx: f64,
    pub mxy: f64,
    pub myy: f64,
    pub mxxx: f64,
    pub mxxy: f64,
    pub mxyy: f64,
    pub myyy: f64,
    exact: Option<(i128, ExactCentered)>,
}

impl CenteredMoments {
    fn from_exact(s: i128, xg: f64, yg: f64, e: ExactCentered) -> Self {
        let sf = s as f64;
        let sq = sf * sf;
        let [xx, xy, yy] = e.second;
        let [xxx, xxy, xyy, yyy] = e.third;
        CenteredMoments {
            s: sf,
            xg,
            yg,
            mxx: xx as f64 / sf,
            mxy: xy as f64 / sf,
            myy: yy as f64 / sf,
            mxxx: xxx as f64 / sq,
            mxxy: xxy as f64 / sq,
            mxyy: xyy as f64 / sq,
            myyy: yyy as f64 / sq,
            exact: Some((s, e)),
        }
    }

    /// The same moments expressed for the object turned `quarters` quarter
    /// turns about its gravity center.
    fn turned(&self, quarters: u32) -> Self {
        let mut c = *self;
        for _ in 0..quarters % 4 {
            c = match c.exact {
                Some((s, e)) => CenteredMoments::from_exact(s, c.xg, c.yg, e.quarter_turn()),
                None => CenteredMoments {
                    mxx: c.myy,
                    mxy: -c.mxy,
                    myy: c.mxx,
                    mxxx: -c.myyy,
                    mxxy: c.mxyy,
                    mxyy: -c.mxxy,
                    myyy: c.mxxx,
                    ..c
                },
            };
        }
        c
    }

    fn key(&self) -> KeyOrd {
        match self.exact {
            Some((_, e)) => KeyOrd::Exact(e.key()),
            None => KeyOrd::Float([
                self.mxx, self.mxy, self.myy, self.mxxx, self.mxxy, self.mxyy, self.myyy,
            ]),
        }
    }
}

#[derive(PartialEq, PartialOrd)]
enum KeyOrd {
    Exact([i128; 7]),
    Float([f64; 7]),
}

/// Gravity center and centered moments.
pub fn center_moments(rm: &RawMoments) -> Result<CenteredMoments> {
    if rm.m0 <= 0 {
        return Err(Error::EmptyObject);
    }
    let sf = rm.m0 as f64;
    let xg = rm.mx as f64 / sf;
    let yg = rm.my as f64 / sf;
    if let Some(e) = exact_centered(rm) {
        return Ok(CenteredMoments::from_exact(rm.m0, xg, yg, e));
    }
    let f = |v: i128| v as f64;
    Ok(CenteredMoments {
        s: sf,
        xg,
        yg,
        mxx: f(rm.mxx) - sf * xg * xg,
        mxy: f(rm.mxy) - sf * xg * yg,
        myy: f(rm.myy) - sf * yg * yg,
        mxxx: f(rm.mxxx) - 3.0 * xg * f(rm.mxx) + 2.0 * sf * xg.powi(3),
        mxxy: f(rm.mxxy) - 2.0 * xg * f(rm.mxy) - yg * f(rm.mxx) + 2.0 * sf * xg * xg * yg,
        mxyy: f(rm.mxyy) - 2.0 * yg * f(rm.mxy) - xg * f(rm.myy) + 2.0 * sf * yg * yg * xg,
        myyy: f(rm.myyy) - 3.0 * yg * f(rm.myy) + 2.0 * sf * yg.powi(3),
        exact: None,
    })
}

/// Position, orientation and invariants of an object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeFeatures {
    pub xg: f64,
    pub yg: f64,
    /// Main-axis angle in `[0, 2π)`, oriented so that `a30 ≥ 0`.
    pub theta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub a30: f64,
    pub a21: f64,
    pub a12: f64,
    pub a03: f64,
    pub surface: f64,
    /// Main-axis length of the equivalent ellipse, `4·√(λ1/S)`.
    pub scale: f64,
    /// Normalized surface `S/scale²`, eccentricity `λ2/λ1`, and the main-
    /// and cross-axis asymmetries `a30, a03` over `S·(λ1/S)^{3/2}`.
    pub invariants: [f64; 4],
}

/// Order-3 moments along the axes at angle θ given by (cos θ, sin θ).
fn rotate_third(c: f64, s: f64, m: &CenteredMoments) -> [f64; 4] {
    let (c2, s2) = (c * c, s * s);
    let (p30, p03) = (c2 * c, s2 * s);
    let (p21, p12) = (c2 * s, s2 * c);
    let a30 = p30 * m.mxxx + 3.0 * p21 * m.mxxy + 3.0 * p12 * m.mxyy + p03 * m.myyy;
    let a21 = -p21 * m.mxxx + (p30 - 2.0 * p12) * m.mxxy + (2.0 * p21 - p03) * m.mxyy
        + p12 * m.myyy;
    let a12 = p12 * m.mxxx + (p03 - 2.0 * p21) * m.mxxy + (p30 - 2.0 * p12) * m.mxyy
        + p21 * m.myyy;
    let a03 = -p03 * m.mxxx + 3.0 * p12 * m.mxxy - 3.0 * p21 * m.mxyy + p30 * m.myyy;
    [a30, a21, a12, a03]
}

/// Inertia ellipse, main-axis angle and order-3 moments in the eigen frame.
pub fn principal_frame(cm: &CenteredMoments) -> ShapeFeatures {
    let (quarters, canon) = (0..4)
        .map(|k| (k, cm.turned(k)))
        .max_by(|a, b| {
            a.1.key()
                .partial_cmp(&b.1.key())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.0.cmp(&a.0))
        })
        .expect("four candidates");

    let (mxx, mxy, myy) = (canon.mxx, canon.mxy, canon.myy);
    let half_trace = 0.5 * (mxx + myy);
    let root = 0.5 * ((mxx - myy) * (mxx - myy) + 4.0 * mxy * mxy).sqrt();
    let lambda1 = half_trace + root;
    let lambda2 = (half_trace - root).max(0.0);
    let mut theta = if mxy == 0.0 && mxx == myy {
        0.0
    } else {
        0.5 * (2.0 * mxy).atan2(mxx - myy)
    };
    if theta < 0.0 {
        theta += PI;
    }
    let [mut a30, mut a21, mut a12, mut a03] = rotate_third(theta.cos(), theta.sin(), &canon);
    if a30 < 0.0 {
        theta += PI;
        a30 = -a30;
        a21 = -a21;
        a12 = -a12;
        a03 = -a03;
    }
    // back from the canonical copy to the object's own orientation
    let mut theta = (theta - quarters as f64 * FRAC_PI_2).rem_euclid(TAU);
    if theta >= TAU {
        theta = 0.0;
    }

    let s = cm.s;
    let scale = 4.0 * (lambda1 / s).sqrt();
    let invariants = if lambda1 > 0.0 {
        let sigma3 = s * (lambda1 / s).powf(1.5);
        [s / (scale * scale), lambda2 / lambda1, a30 / sigma3, a03 / sigma3]
    } else {
        [0.0; 4]
    };
    ShapeFeatures {
        xg: cm.xg,
        yg: cm.yg,
        theta,
        lambda1,
        lambda2,
        a30,
        a21,
        a12,
        a03,
        surface: s,
        scale,
        invariants,
    }
}

/// Grey-level statistics over an object's support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Radiometry {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub dispersion: f64,
    pub asymmetry: f64,
}

/// Attributes complementing the moment invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplementaryAttributes {
    /// perimeter² / surface
    pub compactness: f64,
    /// λ2/λ1 in `[0, 1]`.
    pub eccentricity: f64,
    /// Main over minor axis, λ1/λ2, when λ2 > 0.
    pub elongation: Option<f64>,
    pub radiometry: Option<Radiometry>,
}

/// Features of an object from its raw moments and perimeter.
pub fn shape_features(
    rm: &RawMoments,
    perimeter: f64,
) -> Result<(ShapeFeatures, ComplementaryAttributes)> {
    let features = principal_frame(&center_moments(rm)?);
    let eccentricity = features.invariants[1];
    let elongation = (features.lambda2 > 0.0).then(|| features.lambda1 / features.lambda2);
    Ok((
        features,
        ComplementaryAttributes {
            compactness: perimeter * perimeter / features.surface,
            eccentricity,
            elongation,
            radiometry: None,
        },
    ))
}

/// Mean, population deviation and skewness of a sample.
fn distribution(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let skew = if sigma > 0.0 {
        values.iter().map(|v| ((v - mean) / sigma).powi(3)).sum::<f64>() / n
    } else {
        0.0
    };
    (mean, sigma, skew)
}

/// Grey-level statistics over the pixels of `support`.
pub fn radiometric_attributes(support: &[(usize, usize)], img: &GreyImage) -> Result<Radiometry> {
    if support.is_empty() {
        return Err(Error::EmptyObject);
    }
    let values: Vec<f64> = support.iter().map(|&(x, y)| img.get(x, y) as f64).collect();
    let (mean, dispersion, asymmetry) = distribution(&values);
    Ok(Radiometry {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        dispersion,
        asymmetry,
    })
}

/// Surface distribution of a particle population.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleStats {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
}

pub fn particle_stats(surfaces: &[f64]) -> Result<ParticleStats> {
    if surfaces.is_empty() {
        return Err(Error::EmptyList);
    }
    let (mu, sigma, alpha) = distribution(surfaces);
    Ok(ParticleStats { mu, sigma, alpha })
}

/// Column names of a feature row after the object id.
pub const FEATURE_COLUMNS: [&str; 8] = [
    "x", "y", "angle", "scale", "surface", "eccentricity", "asym1", "asym2",
];

/// One object's feature vector in report order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureRow {
    pub id: u32,
    /// Center abscissa, center ordinate, angle in degrees, scale, then the
    /// four invariants.
    pub values: [f64; 8],
}

impl FeatureRow {
    pub fn new(id: u32, f: &ShapeFeatures) -> Self {
        let [a, b, c, d] = f.invariants;
        FeatureRow {
            id,
            values: [f.xg, f.yg, f.theta.to_degrees(), f.scale, a, b, c, d],
        }
    }
}

pub fn format_feature_rows(rows: &[FeatureRow]) -> String {
    let mut out = format!("# id {}\n", FEATURE_COLUMNS.join(" "));
    for r in rows {
        out.push_str(&r.id.to_string());
        for v in r.values {
            out.push(' ');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_feature_rows(text: &str) -> Result<Vec<FeatureRow>> {
    lines(text)
        .map(|(n, line)| {
            let mut t = Tokens::new("features", n, line);
            let id = t.parse()?;
            let mut values = [0.0; 8];
            for v in &mut values {
                *v = t.float()?;
            }
            t.finish()?;
            Ok(FeatureRow { id, values })
        })
        .collect()
}
