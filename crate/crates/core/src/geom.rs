//! Planar polynomial transforms fitted from control points.

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::raster::Raster;
use crate::text::{fmt_f64, lines, Tokens};
use crate::vectorize::Polyline;
use nalgebra::{DMatrix, DVector};

/// Exponents `(i, j)` of the monomials `pⁱqʲ` up to `order`, by degree and
/// with the power of `p` descending inside a degree.
pub fn monomials(order: u8) -> Vec<(u32, u32)> {
    (0..=order as u32)
        .flat_map(|d| (0..=d).rev().map(move |i| (i, d - i)))
        .collect()
}

/// A source point and its target.
pub type PointPair = ((f64, f64), (f64, f64));

/// Source to target coordinate pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPointSet {
    pairs: Vec<PointPair>,
}

impl ControlPointSet {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self> {
        let mut sources: Vec<(f64, f64)> = pairs.iter().map(|p| p.0).collect();
        sources.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if let Some(w) = sources.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateControlPoint(w[0].0, w[0].1));
        }
        Ok(ControlPointSet { pairs })
    }

    pub fn pairs(&self) -> &[PointPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs with source and target exchanged.
    pub fn swapped(&self) -> Result<Self> {
        ControlPointSet::new(self.pairs.iter().map(|&(a, b)| (b, a)).collect())
    }
}

/// `(p, q) → (Σ a_ij pⁱqʲ, Σ b_ij pⁱqʲ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTransform2D {
    order: u8,
    a: Vec<f64>,
    b: Vec<f64>,
    rms: f64,
}

fn check_order(order: u8) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidOrder(order))
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Maps `v` to `(v - center) / half` with the range of `values` on `[-1, 1]`.
fn normalizer(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let half = (hi - lo) / 2.0;
    ((lo + hi) / 2.0, if half > 0.0 { half } else { 1.0 })
}

impl PolyTransform2D {
    pub fn from_coefficients(order: u8, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_order(order)?;
        let n = monomials(order).len();
        if a.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "order {order} needs {n} coefficients per axis, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(PolyTransform2D { order, a, b, rms: 0.0 })
    }

    pub fn identity() -> Self {
        PolyTransform2D {
            order: 1,
            a: vec![0.0, 1.0, 0.0],
            b: vec![0.0, 0.0, 1.0],
            rms: 0.0,
        }
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Root mean square of the residual distances on the fitted pairs.
    pub fn rms(&self) -> f64 {
        self.rms
    }

    pub fn apply(&self, p: f64, q: f64) -> (f64, f64) {
        let mut r = 0.0;
        let mut s = 0.0;
        for ((i, j), (ca, cb)) in monomials(self.order).into_iter().zip(self.a.iter().zip(&self.b)) {
            let m = p.powi(i as i32) * q.powi(j as i32);
            r += ca * m;
            s += cb * m;
        }
        (r, s)
    }

    /// Jacobian determinant at `(p, q)`.
    pub fn jacobian(&self, p: f64, q: f64) -> f64 {
        let (mut rp, mut rq, mut sp, mut sq) = (0.0, 0.0, 0.0, 0.0);
        for ((i, j), (ca, cb)) in monomials(self.order).into_iter().zip(self.a.iter().zip(&self.b)) {
            if i > 0 {
                let d = i as f64 * p.powi(i as i32 - 1) * q.powi(j as i32);
                rp += ca * d;
                sp += cb * d;
            }
            if j > 0 {
                let d = j as f64 * p.powi(i as i32) * q.powi(j as i32 - 1);
                rq += ca * d;
                sq += cb * d;
            }
        }
        rp * sq - rq * sp
    }

    /// `outer ∘ self` for affine transforms.
    pub fn then_affine(&self, outer: &PolyTransform2D) -> Result<PolyTransform2D> {
        if self.order != 1 || outer.order != 1 {
            return Err(Error::InvalidOrder(self.order.max(outer.order)));
        }
        let (a, b) = (&self.a, &self.b);
        let row = |c: &[f64]| {
            vec![
                c[0] + c[1] * a[0] + c[2] * b[0],
                c[1] * a[1] + c[2] * b[1],
                c[1] * a[2] + c[2] * b[2],
            ]
        };
        Ok(PolyTransform2D {
            order: 1,
            a: row(&outer.a),
            b: row(&outer.b),
            rms: 0.0,
        })
    }
}

/// Least-squares transform of the given order, fitted in a normalized
/// source frame and expanded back to raw coordinates.
pub fn fit_transform(cps: &ControlPointSet, order: u8) -> Result<PolyTransform2D> {
    check_order(order)?;
    let mono = monomials(order);
    let m = cps.len();
    if m < mono.len() {
        return Err(Error::TooFewPoints { got: m, need: mono.len() });
    }
    let (cp, sp) = normalizer(cps.pairs.iter().map(|p| p.0 .0));
    let (cq, sq) = normalizer(cps.pairs.iter().map(|p| p.0 .1));
    let design = DMatrix::from_fn(m, mono.len(), |row, col| {
        let ((p, q), _) = cps.pairs[row];
        let (i, j) = mono[col];
        ((p - cp) / sp).powi(i as i32) * ((q - cq) / sq).powi(j as i32)
    });
    let r = DVector::from_iterator(m, cps.pairs.iter().map(|p| p.1 .0));
    let s = DVector::from_iterator(m, cps.pairs.iter().map(|p| p.1 .1));
    let na = least_squares(&design, &r)?;
    let nb = least_squares(&design, &s)?;

    let index = |i: u32, j: u32| mono.iter().position(|&e| e == (i, j)).expect("monomial within order");
    let mut a = vec![0.0; mono.len()];
    let mut b = vec![0.0; mono.len()];
    for (col, &(i, j)) in mono.iter().enumerate() {
        let scale = sp.powi(i as i32) * sq.powi(j as i32);
        for k in 0..=i {
            for l in 0..=j {
                let w = binomial(i, k) * (-cp).powi((i - k) as i32) * binomial(j, l) * (-cq).powi((j - l) as i32)
                    / scale;
                let t = index(k, l);
                a[t] += na[col] * w;
                b[t] += nb[col] * w;
            }
        }
    }
    let mut t = PolyTransform2D { order, a, b, rms: 0.0 };
    let sum: f64 = cps
        .pairs
        .iter()
        .map(|&((p, q), (r, s))| {
            let (fr, fs) = t.apply(p, q);
            (fr - r).powi(2) + (fs - s).powi(2)
        })
        .sum();
    t.rms = (sum / m as f64).sqrt();
    Ok(t)
}

pub fn apply_point(t: &PolyTransform2D, p: f64, q: f64) -> (f64, f64) {
    t.apply(p, q)
}

pub fn transform_polyline(t: &PolyTransform2D, pl: &Polyline) -> Polyline {
    Polyline {
        vertices: pl.vertices.iter().map(|&(p, q)| t.apply(p, q)).collect(),
        closed: pl.closed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WarpMode {
    /// Each target pixel looks up its nearest source pixel.
    #[default]
    Inverse,
    /// Each source pixel is written to its nearest target pixel.
    Forward,
}

/// Largest round-trip error, in pixels, accepted for a fitted inverse.
pub const INVERSE_TOLERANCE: f64 = 0.5;

/// Samples per axis used to fit and check the inverse.
const INVERSE_SAMPLES: usize = 24;

/// Inverse of `t` over the rectangle `[0, width-1] × [0, height-1]`, fitted
/// on a sample grid and checked for orientation and round-trip accuracy.
pub fn fit_inverse(t: &PolyTransform2D, width: usize, height: usize) -> Result<PolyTransform2D> {
    let coord = |k: usize, n: usize| {
        if n <= 1 {
            0.0
        } else {
            k as f64 * (n - 1) as f64 / (INVERSE_SAMPLES - 1) as f64
        }
    };
    let mut pairs = Vec::new();
    let mut sign = 0.0;
    for ky in 0..INVERSE_SAMPLES {
        for kx in 0..INVERSE_SAMPLES {
            let p = (coord(kx, width), coord(ky, height));
            let j = t.jacobian(p.0, p.1);
            if j == 0.0 || !j.is_finite() || (sign != 0.0 && j.signum() != sign) {
                return Err(Error::NotInvertible);
            }
            sign = j.signum();
            pairs.push((t.apply(p.0, p.1), p));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    pairs.dedup_by(|a, b| a.0 == b.0);
    let order = if t.order == 1 { 1 } else { 3 };
    let cps = ControlPointSet::new(pairs)?;
    let inv = fit_transform(&cps, order).map_err(|e| match e {
        Error::RankDeficient | Error::TooFewPoints { .. } => Error::NotInvertible,
        e => e,
    })?;
    // round trip on the sample grid and between its nodes
    for ky in 0..2 * INVERSE_SAMPLES - 1 {
        for kx in 0..2 * INVERSE_SAMPLES - 1 {
            let p = (coord(kx, width) / 2.0, coord(ky, height) / 2.0);
            let (r, s) = t.apply(p.0, p.1);
            let back = inv.apply(r, s);
            if (back.0 - p.0).hypot(back.1 - p.1) > INVERSE_TOLERANCE {
                return Err(Error::NotInvertible);
            }
        }
    }
    Ok(inv)
}

/// Nearest-neighbor lookup through an inverse transform.
pub fn resample<R: Raster>(inverse: &PolyTransform2D, img: &R, width: usize, height: usize) -> R {
    let mut out = img.blank_like(width, height, img.background());
    for y in 0..height {
        for x in 0..width {
            let (p, q) = inverse.apply(x as f64, y as f64);
            let (px, qy) = (p.round(), q.round());
            if px >= 0.0 && qy >= 0.0 && (px as usize) < img.width() && (qy as usize) < img.height() {
                out.set_pixel(x, y, img.pixel(px as usize, qy as usize));
            }
        }
    }
    out
}

/// Image under `t` on a `width × height` target grid.
pub fn warp_image<R: Raster>(t: &PolyTransform2D, img: &R, width: usize, height: usize, mode: WarpMode) -> Result<R> {
    match mode {
        WarpMode::Inverse => {
            let inv = fit_inverse(t, img.width(), img.height())?;
            Ok(resample(&inv, img, width, height))
        }
        WarpMode::Forward => {
            let mut out = img.blank_like(width, height, img.background());
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let (r, s) = t.apply(x as f64, y as f64);
                    let (rx, sy) = (r.round(), s.round());
                    if rx >= 0.0 && sy >= 0.0 && (rx as usize) < width && (sy as usize) < height {
                        out.set_pixel(rx as usize, sy as usize, img.pixel(x, y));
                    }
                }
            }
            Ok(out)
        }
    }
}

/// `order k`, then `a …` and `b …` coefficient rows.
pub fn format_transform(t: &PolyTransform2D) -> String {
    let row = |name: &str, c: &[f64]| {
        let vals: Vec<String> = c.iter().map(|&v| fmt_f64(v)).collect();
        format!("{name} {}\n", vals.join(" "))
    };
    format!("order {}\n{}{}", t.order, row("a", &t.a), row("b", &t.b))
}

pub fn parse_transform(text: &str) -> Result<PolyTransform2D> {
    let mut it = lines(text);
    let mut next = |what: &'static str| {
        it.next()
            .ok_or_else(|| Error::parse("transform", 0, format!("missing `{what}` line")))
    };
    let (n, line) = next("order")?;
    let mut t = Tokens::new("transform", n, line);
    t.expect("order")?;
    let order: u8 = t.parse()?;
    t.finish()?;
    check_order(order)?;
    let count = monomials(order).len();
    let mut row = |name: &'static str| -> Result<Vec<f64>> {
        let (n, line) = next(name)?;
        let mut t = Tokens::new("transform", n, line);
        t.expect(name)?;
        let v = (0..count).map(|_| t.float()).collect::<Result<Vec<_>>>()?;
        t.finish()?;
        Ok(v)
    };
    let a = row("a")?;
    let b = row("b")?;
    PolyTransform2D::from_coefficients(order, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GreyImage, LabelImage};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_pairs(f: impl Fn(f64, f64) -> (f64, f64), n: usize, lo: f64, hi: f64) -> ControlPointSet {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                let q = lo + (hi - lo) * j as f64 / (n - 1) as f64;
                pairs.push(((p, q), f(p, q)));
            }
        }
        ControlPointSet::new(pairs).unwrap()
    }

    #[test]
    fn monomial_order() {
        assert_eq!(monomials(1), vec![(0, 0), (1, 0), (0, 1)]);
        assert_eq!(monomials(2)[3..], [(2, 0), (1, 1), (0, 2)]);
        for k in 1..=3u8 {
            assert_eq!(monomials(k).len(), (k as usize + 1) * (k as usize + 2) / 2);
        }
    }

    #[test]
    fn identity_and_translation() {
        let t = fit_transform(&grid_pairs(|p, q| (p, q), 4, 0.0, 10.0), 1).unwrap();
        for (got, want) in t.a().iter().zip([0.0, 1.0, 0.0]).chain(t.b().iter().zip([0.0, 0.0, 1.0])) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(t.rms() < 1e-12);
        let t = fit_transform(&grid_pairs(|p, q| (p + 2.0, q + 3.0), 4, 0.0, 10.0), 1).unwrap();
        for (got, want) in t.a().iter().zip([2.0, 1.0, 0.0]).chain(t.b().iter().zip([3.0, 0.0, 1.0])) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(apply_point(&PolyTransform2D::identity(), 7.0, 9.0), (7.0, 9.0));
        let shift = PolyTransform2D::from_coefficients(1, vec![2.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]).unwrap();
        assert_eq!(apply_point(&shift, 0.0, 0.0), (2.0, 3.0));
    }

    #[test]
    fn fit_errors() {
        let few = ControlPointSet::new(vec![((0.0, 0.0), (0.0, 0.0)), ((1.0, 0.0), (1.0, 0.0))]).unwrap();
        assert!(matches!(fit_transform(&few, 1), Err(Error::TooFewPoints { got: 2, need: 3 })));
        let line = ControlPointSet::new((0..5).map(|i| ((i as f64, 0.0), (i as f64, 1.0))).collect()).unwrap();
        assert!(matches!(fit_transform(&line, 1), Err(Error::RankDeficient)));
        assert!(matches!(fit_transform(&line, 4), Err(Error::InvalidOrder(4))));
        assert!(matches!(
            ControlPointSet::new(vec![((1.0, 1.0), (0.0, 0.0)), ((1.0, 1.0), (2.0, 2.0))]),
            Err(Error::DuplicateControlPoint(..))
        ));
    }

    const QUAD_A: [f64; 6] = [3.0, 0.9, -0.2, 1.5e-4, -2e-4, 3e-4];
    const QUAD_B: [f64; 6] = [-7.0, 0.1, 1.1, -1e-4, 2.5e-4, 1e-4];

    fn quadratic(p: f64, q: f64) -> (f64, f64) {
        let m = [1.0, p, q, p * p, p * q, q * q];
        (
            m.iter().zip(QUAD_A).map(|(a, b)| a * b).sum(),
            m.iter().zip(QUAD_B).map(|(a, b)| a * b).sum(),
        )
    }

    #[test]
    fn recovers_quadratic() {
        let t = fit_transform(&grid_pairs(quadratic, 6, 0.0, 500.0), 2).unwrap();
        for (got, want) in t.a().iter().zip(QUAD_A).chain(t.b().iter().zip(QUAD_B)) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!(t.rms() < 1e-9);
        let direct = quadratic(123.0, 456.0);
        let got = apply_point(&t, 123.0, 456.0);
        assert!((got.0 - direct.0).abs() < 1e-9 && (got.1 - direct.1).abs() < 1e-9);
    }

    #[test]
    fn evaluation_matches_direct() {
        let t = PolyTransform2D::from_coefficients(2, QUAD_A.to_vec(), QUAD_B.to_vec()).unwrap();
        for &(p, q) in &[(0.0, 0.0), (3.5, -2.0), (100.0, 250.0)] {
            let (r, s) = apply_point(&t, p, q);
            let (dr, ds) = quadratic(p, q);
            assert!((r - dr).abs() <= 1e-12 * dr.abs().max(1.0));
            assert!((s - ds).abs() <= 1e-12 * ds.abs().max(1.0));
        }
    }

    /// Normal equations solved by LU on a well-conditioned fixture.
    #[test]
    fn agrees_with_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs: Vec<_> = (0..40)
            .map(|_| {
                let (p, q) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                ((p, q), (p * p - q + rng.random_range(-0.1..0.1), p * q * q + rng.random_range(-0.1..0.1)))
            })
            .collect();
        let cps = ControlPointSet::new(pairs.clone()).unwrap();
        let t = fit_transform(&cps, 3).unwrap();
        let mono = monomials(3);
        let a = DMatrix::from_fn(pairs.len(), mono.len(), |r, c| {
            let ((p, q), _) = pairs[r];
            p.powi(mono[c].0 as i32) * q.powi(mono[c].1 as i32)
        });
        let ata = a.transpose() * &a;
        for (axis, coef) in [(0, t.a()), (1, t.b())] {
            let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| if axis == 0 { p.1 .0 } else { p.1 .1 }));
            let x = ata.clone().lu().solve(&(a.transpose() * y)).unwrap();
            for (g, w) in coef.iter().zip(x.iter()) {
                assert!((g - w).abs() < 1e-9, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn least_squares_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<_> = (0..30)
            .map(|_| {
                let (p, q) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
                ((p, q), (2.0 * p + rng.random_range(-1.0..1.0), q - 0.5 * p + rng.random_range(-1.0..1.0)))
            })
            .collect();
        let cps = ControlPointSet::new(pairs.clone()).unwrap();
        let t = fit_transform(&cps, 2).unwrap();
        let rms = |t: &PolyTransform2D| {
            (pairs
                .iter()
                .map(|&((p, q), (r, s))| {
                    let f = t.apply(p, q);
                    (f.0 - r).powi(2) + (f.1 - s).powi(2)
                })
                .sum::<f64>()
                / pairs.len() as f64)
                .sqrt()
        };
        assert!((rms(&t) - t.rms()).abs() < 1e-12);
        for k in 0..12 {
            for delta in [1e-3, -1e-3] {
                let mut a = t.a().to_vec();
                let mut b = t.b().to_vec();
                if k < 6 { a[k] += delta } else { b[k - 6] += delta }
                let moved = PolyTransform2D::from_coefficients(2, a, b).unwrap();
                assert!(rms(&moved) >= t.rms());
            }
        }
    }

    #[test]
    fn polyline_rotation() {
        let rot = PolyTransform2D::from_coefficients(1, vec![0.0, 0.0, -1.0], vec![0.0, 1.0, 0.0]).unwrap();
        let pl = Polyline { vertices: vec![(1.0, 0.0), (2.0, 3.0), (-1.5, 4.0)], closed: true };
        let out = transform_polyline(&rot, &pl);
        assert_eq!(out.vertices, vec![(0.0, 1.0), (-3.0, 2.0), (-4.0, -1.5)]);
        assert!(out.closed);
        assert_eq!(transform_polyline(&PolyTransform2D::identity(), &pl), pl);
        let fitted = fit_transform(&grid_pairs(|p, q| (-q, p), 3, -5.0, 5.0), 1).unwrap();
        for (a, b) in transform_polyline(&fitted, &pl).vertices.iter().zip(&out.vertices) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_polyline_matches_points() {
        let a = vec![1.0, 0.5, 0.2, 0.01, 0.0, -0.02, 0.001, 0.0, 0.0, 0.002];
        let b = vec![-1.0, 0.1, 0.9, 0.0, 0.03, 0.0, 0.0, -0.001, 0.0005, 0.0];
        let t = PolyTransform2D::from_coefficients(3, a.clone(), b.clone()).unwrap();
        let pl = Polyline { vertices: vec![(1.0, 2.0), (3.0, -1.0), (0.5, 0.25)], closed: false };
        for (&(p, q), &(r, s)) in pl.vertices.iter().zip(&transform_polyline(&t, &pl).vertices) {
            let m = [1.0, p, q, p * p, p * q, q * q, p * p * p, p * p * q, p * q * q, q * q * q];
            let dr: f64 = m.iter().zip(&a).map(|(x, y)| x * y).sum();
            let ds: f64 = m.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((r - dr).abs() < 1e-12 && (s - ds).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_composition_exact() {
        let t1 = PolyTransform2D::from_coefficients(1, vec![0.5, 2.0, -0.25], vec![1.0, 0.125, 1.5]).unwrap();
        let t2 = PolyTransform2D::from_coefficients(1, vec![-3.0, 0.5, 1.0], vec![2.0, -1.0, 0.75]).unwrap();
        let c = t1.then_affine(&t2).unwrap();
        for &(p, q) in &[(0.0, 0.0), (1.0, 2.0), (-4.5, 8.25), (100.0, -3.0)] {
            let (x, y) = t1.apply(p, q);
            assert_eq!(c.apply(p, q), t2.apply(x, y));
        }
    }

    #[test]
    fn transform_text() {
        let t = PolyTransform2D::from_coefficients(2, QUAD_A.to_vec(), QUAD_B.to_vec()).unwrap();
        let text = format_transform(&t);
        assert!(text.starts_with("order 2\na 3.0 "));
        assert_eq!(parse_transform(&text).unwrap(), t);
        assert!(parse_transform("order 2\na 1 2 3\nb 1 2 3").is_err());
        assert!(parse_transform("order 9").is_err());
        assert!(parse_transform("").is_err());
    }

    fn pattern(w: usize, h: usize) -> GreyImage {
        let data = (0..w * h).map(|i| (1 + (i * 37) % 200) as u16).collect();
        GreyImage::from_vec(w, h, 255, data).unwrap()
    }

    #[test]
    fn identity_and_shift_warps() {
        let img = pattern(20, 15);
        assert_eq!(warp_image(&PolyTransform2D::identity(), &img, 20, 15, WarpMode::Inverse).unwrap(), img);
        assert_eq!(warp_image(&PolyTransform2D::identity(), &img, 20, 15, WarpMode::Forward).unwrap(), img);
        let shift = PolyTransform2D::from_coefficients(1, vec![3.0, 1.0, 0.0], vec![-2.0, 0.0, 1.0]).unwrap();
        let out = warp_image(&shift, &img, 20, 15, WarpMode::Inverse).unwrap();
        for y in 0..15 {
            for x in 0..20 {
                let want = if x >= 3 && y + 2 < 15 { img.get(x - 3, y + 2) } else { 0 };
                assert_eq!(out.get(x, y), want, "({x},{y})");
            }
        }
        let labels = LabelImage::from_vec(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(warp_image(&PolyTransform2D::identity(), &labels, 2, 2, WarpMode::Inverse).unwrap(), labels);
    }

    #[test]
    fn folding_transform_rejected() {
        // r = p² folds the plane along p = 0
        let fold = PolyTransform2D::from_coefficients(2, vec![0.0, -20.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(warp_image(&fold, &pattern(40, 10), 40, 10, WarpMode::Inverse), Err(Error::NotInvertible)));
    }

    fn rotation(deg: f64, cx: f64, cy: f64) -> PolyTransform2D {
        let (s, c) = deg.to_radians().sin_cos();
        PolyTransform2D::from_coefficients(
            1,
            vec![cx - c * cx + s * cy, c, -s],
            vec![cy - s * cx - c * cy, s, c],
        )
        .unwrap()
    }

    #[test]
    fn rotation_round_trip() {
        let (w, h) = (64, 64);
        let mut img = GreyImage::new(w, h, 255);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - 31.5, y as f64 - 31.5);
                if dx * dx + dy * dy < 26.0 * 26.0 {
                    img.set(x, y, 1 + ((x / 3 + y / 5) % 7) as u16 * 30);
                }
            }
        }
        let there = warp_image(&rotation(30.0, 31.5, 31.5), &img, w, h, WarpMode::Inverse).unwrap();
        let back = warp_image(&rotation(-30.0, 31.5, 31.5), &there, w, h, WarpMode::Inverse).unwrap();
        let inside: Vec<_> = (0..w * h).filter(|&i| img.data()[i] != 0).collect();
        let same = inside.iter().filter(|&&i| back.data()[i] == img.data()[i]).count();
        assert!(same as f64 >= 0.95 * inside.len() as f64, "{same}/{}", inside.len());
    }

    proptest! {
        #[test]
        fn recovers_random_polynomials(order in 1u8..=3, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = monomials(order).len();
            let scale = |k: usize| 1.0 / 10f64.powi(monomials(order)[k].0 as i32 + monomials(order)[k].1 as i32);
            let a: Vec<f64> = (0..n).map(|k| rng.random_range(-1.0..1.0) * scale(k)).collect();
            let b: Vec<f64> = (0..n).map(|k| rng.random_range(-1.0..1.0) * scale(k)).collect();
            let truth = PolyTransform2D::from_coefficients(order, a.clone(), b.clone()).unwrap();
            let cps = grid_pairs(|p, q| truth.apply(p, q), 5, 0.0, 20.0);
            let t = fit_transform(&cps, order).unwrap();
            for (g, w) in t.a().iter().zip(&a).chain(t.b().iter().zip(&b)) {
                prop_assert!((g - w).abs() < 1e-8);
            }
        }

        #[test]
        fn warp_never_invents_values(deg in -45.0f64..45.0, dx in -5.0f64..5.0) {
            let img = pattern(16, 12);
            let mut t = rotation(deg, 8.0, 6.0);
            t.a[0] += dx;
            let values: std::collections::HashSet<u16> = img.data().iter().copied().chain([0]).collect();
            for mode in [WarpMode::Inverse, WarpMode::Forward] {
                let out = warp_image(&t, &img, 20, 20, mode).unwrap();
                prop_assert!(out.data().iter().all(|v| values.contains(v)));
            }
        }
    }
}
