use super::regression::auth_threshold;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::text::{fmt_f64, lines, Tokens};
use nalgebra::{DMatrix, DVector};

/// Linear estimate `v̂ = G (x − M_x) + M_v` of the class indicator vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminantModel {
    pub mx: Vec<f64>,
    pub mv: Vec<f64>,
    /// `m × p`, one discriminant row per class.
    pub g: DMatrix<f64>,
    /// Largest accepted distance between `v̂` and the winning indicator.
    pub thresholds: Option<Vec<f64>>,
    /// Set when the variance matrix needed a ridge term to factor.
    pub ridge: bool,
}

/// Outcome of [`identify`]: the class (`None` for a rejection) and `v̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct Identification {
    pub class: Option<u32>,
    pub scores: Vec<f64>,
}

impl DiscriminantModel {
    pub fn classes(&self) -> usize {
        self.mv.len()
    }

    pub fn features(&self) -> usize {
        self.mx.len()
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.features() {
            return Err(Error::DimensionMismatch(format!(
                "{} attributes for a model of {}",
                x.len(),
                self.features()
            )));
        }
        let centered = DVector::from_iterator(x.len(), x.iter().zip(&self.mx).map(|(a, m)| a - m));
        let v = &self.g * centered;
        Ok(v.iter().zip(&self.mv).map(|(a, m)| a + m).collect())
    }

    /// Sets one threshold per class from a labeled pass: distances of `v̂`
    /// to the class indicator for members against non-members.
    pub fn set_thresholds(&mut self, x: &DMatrix<f64>, labels: &[u32]) -> Result<()> {
        let m = self.classes();
        check_labels(x, labels, m)?;
        let mut thresholds = Vec::with_capacity(m);
        for j in 0..m {
            let mut inside = Vec::new();
            let mut outside = Vec::new();
            for (r, &l) in labels.iter().enumerate() {
                let row: Vec<f64> = x.row(r).iter().copied().collect();
                let e = indicator_distance(&self.scores(&row)?, j);
                if l as usize == j + 1 {
                    inside.push(e);
                } else {
                    outside.push(e);
                }
            }
            if inside.is_empty() {
                return Err(Error::EmptyClass(j + 1));
            }
            let (mu1, s1) = mean_and_deviation(&inside);
            thresholds.push(if outside.is_empty() {
                f64::MAX
            } else {
                let (mu2, s2) = mean_and_deviation(&outside);
                auth_threshold(mu1, s1, mu2, s2)?
            });
        }
        self.thresholds = Some(thresholds);
        Ok(())
    }
}

fn indicator_distance(v: &[f64], class: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(k, &s)| (s - if k == class { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn mean_and_deviation(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn check_labels(x: &DMatrix<f64>, labels: &[u32], m: usize) -> Result<()> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} observations",
            labels.len(),
            x.nrows()
        )));
    }
    match labels.iter().find(|&&l| l == 0 || l as usize > m) {
        Some(&l) => Err(Error::OutOfRange { value: l, limit: m }),
        None => Ok(()),
    }
}

/// Fits the discriminant functions of `m` classes labeled `1..=m`.
pub fn fit_discriminant(x: &DMatrix<f64>, labels: &[u32], m: usize) -> Result<DiscriminantModel> {
    check_labels(x, labels, m)?;
    let (n, p) = x.shape();
    let mut sizes = vec![0usize; m];
    for &l in labels {
        sizes[l as usize - 1] += 1;
    }
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyClass(j + 1));
    }
    let nf = n as f64;
    let mx: Vec<f64> = (0..p).map(|c| x.column(c).sum() / nf).collect();
    let mv: Vec<f64> = sizes.iter().map(|&s| s as f64 / nf).collect();
    let mut rxx = DMatrix::zeros(p, p);
    let mut rxv = DMatrix::zeros(p, m);
    for r in 0..n {
        let dx = DVector::from_iterator(p, (0..p).map(|c| x[(r, c)] - mx[c]));
        let dv = DVector::from_iterator(m, (0..m).map(|k| (labels[r] as usize == k + 1) as u8 as f64 - mv[k]));
        rxx += &dx * dx.transpose();
        rxv += &dx * dv.transpose();
    }
    rxx /= nf;
    rxv /= nf;
    let (l, ridge) = match cholesky(&rxx) {
        Some(l) => (l, false),
        None => {
            let trace = rxx.trace();
            if trace <= 0.0 || p == 0 {
                return Err(Error::SingularCovariance);
            }
            let shifted = &rxx + DMatrix::identity(p, p) * (1e-9 * trace / p as f64);
            (cholesky(&shifted).ok_or(Error::SingularCovariance)?, true)
        }
    };
    let y = l.solve_lower_triangular(&rxv).ok_or(Error::SingularCovariance)?;
    let gt = l.transpose().solve_upper_triangular(&y).ok_or(Error::SingularCovariance)?;
    Ok(DiscriminantModel { mx, mv, g: gt.transpose(), thresholds: None, ridge })
}

/// Class of the largest score, the smallest id among equals, or a
/// rejection when thresholds are on and `v̂` is too far from the winner.
pub fn identify(model: &DiscriminantModel, x: &[f64], thresholds: bool) -> Result<Identification> {
    let scores = model.scores(x)?;
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    let accepted = match (&model.thresholds, thresholds) {
        (Some(s), true) => indicator_distance(&scores, best) < s[best],
        _ => true,
    };
    Ok(Identification {
        class: accepted.then_some(best as u32 + 1),
        scores,
    })
}

fn row_text(key: &str, values: impl IntoIterator<Item = f64>) -> String {
    let mut out = key.to_string();
    for v in values {
        out.push(' ');
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
    out
}

/// `discriminant v1`, `classes m features p`, `ridge`, `mx`, `mv`, `m`
/// rows `g`, and `thresholds` (values or `none`).
pub fn format_discriminant(model: &DiscriminantModel) -> String {
    let mut out = format!(
        "discriminant v1\nclasses {} features {}\nridge {}\n",
        model.classes(),
        model.features(),
        model.ridge as u8
    );
    out.push_str(&row_text("mx", model.mx.iter().copied()));
    out.push_str(&row_text("mv", model.mv.iter().copied()));
    for r in 0..model.classes() {
        out.push_str(&row_text("g", model.g.row(r).iter().copied()));
    }
    match &model.thresholds {
        Some(s) => out.push_str(&row_text("thresholds", s.iter().copied())),
        None => out.push_str("thresholds none\n"),
    }
    out
}

pub fn parse_discriminant(text: &str) -> Result<DiscriminantModel> {
    const WHAT: &str = "discriminant model";
    let mut it = lines(text);
    let mut next = |key: &str| {
        it.next()
            .ok_or_else(|| Error::parse(WHAT, 0, format!("missing `{key}` line")))
    };
    let (n, l) = next("discriminant")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("discriminant")?;
    t.expect("v1")?;
    t.finish()?;
    let (n, l) = next("classes")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("classes")?;
    let m: usize = t.parse()?;
    t.expect("features")?;
    let p: usize = t.parse()?;
    t.finish()?;
    if m == 0 || m > 1 << 16 || p > 1 << 16 {
        return Err(t.err("class or feature count out of range"));
    }
    let (n, l) = next("ridge")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("ridge")?;
    let ridge = match t.word()? {
        "0" => false,
        "1" => true,
        w => return Err(t.err(format!("ridge flag `{w}` is not 0 or 1"))),
    };
    t.finish()?;
    let mut row = |key: &'static str, len: usize| -> Result<Vec<f64>> {
        let (n, l) = next(key)?;
        let mut t = Tokens::new(WHAT, n, l);
        t.expect(key)?;
        let v = (0..len).map(|_| t.float()).collect::<Result<Vec<_>>>()?;
        t.finish()?;
        Ok(v)
    };
    let mx = row("mx", p)?;
    let mv = row("mv", m)?;
    let mut g = DMatrix::zeros(m, p);
    for r in 0..m {
        for (c, v) in row("g", p)?.into_iter().enumerate() {
            g[(r, c)] = v;
        }
    }
    let (n, l) = next("thresholds")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("thresholds")?;
    let rest = t.rest();
    let thresholds = if rest == ["none"] {
        None
    } else {
        let s = rest
            .iter()
            .map(|w| w.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::parse(WHAT, n, "unreadable threshold"))?;
        if s.len() != m {
            return Err(Error::parse(WHAT, n, "one threshold per class expected"));
        }
        Some(s)
    };
    if let Some((n, _)) = it.next() {
        return Err(Error::parse(WHAT, n, "trailing line"));
    }
    Ok(DiscriminantModel { mx, mv, g, thresholds, ridge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussians(seed: u64, per_class: usize, centers: &[(f64, f64)], sigma: f64) -> (DMatrix<f64>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let n = per_class * centers.len();
        let mut x = DMatrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for (k, c) in centers.iter().enumerate() {
            for i in 0..per_class {
                let r = k * per_class + i;
                x[(r, 0)] = c.0 + noise.sample(&mut rng);
                x[(r, 1)] = c.1 + noise.sample(&mut rng);
                labels.push(k as u32 + 1);
            }
        }
        // shuffle rows so that classes interleave
        for r in (1..n).rev() {
            let s = rng.random_range(0..=r);
            x.swap_rows(r, s);
            labels.swap(r, s);
        }
        (x, labels)
    }

    #[test]
    fn one_dimensional_boundary() {
        let xs: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 } else { 1.0 }).collect();
        let labels: Vec<u32> = (0..20).map(|i| if i < 10 { 1 } else { 2 }).collect();
        let x = DMatrix::from_column_slice(20, 1, &xs);
        let model = fit_discriminant(&x, &labels, 2).unwrap();
        // each indicator regressed on [1, x] by the normal equations
        let a = DMatrix::from_fn(20, 2, |r, c| if c == 0 { 1.0 } else { xs[r] });
        let ata = a.transpose() * &a;
        for k in 0..2 {
            let t = DVector::from_iterator(20, labels.iter().map(|&l| (l as usize == k + 1) as u8 as f64));
            let f = ata.clone().lu().solve(&(a.transpose() * t)).unwrap();
            for &probe in &[-2.0, 0.0, 0.7, 3.0] {
                let want = f[0] + f[1] * probe;
                assert!((model.scores(&[probe]).unwrap()[k] - want).abs() < 1e-9);
            }
        }
        assert_eq!(identify(&model, &[0.7], false).unwrap().class, Some(2));
        assert_eq!(identify(&model, &[-0.1], false).unwrap().class, Some(1));
        let mid = model.scores(&[0.0]).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-12 && (mid[1] - 0.5).abs() < 1e-12);
        assert!(!model.ridge);
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let model = DiscriminantModel {
            mx: vec![0.0],
            mv: vec![0.5, 0.5],
            g: DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            thresholds: None,
            ridge: false,
        };
        assert_eq!(identify(&model, &[0.0], false).unwrap().class, Some(1));
    }

    #[test]
    fn single_class() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]);
        let model = fit_discriminant(&x, &[1, 1, 1], 1).unwrap();
        for probe in [-5.0, 0.0, 9.0] {
            let id = identify(&model, &[probe], false).unwrap();
            assert_eq!(id.class, Some(1));
            assert!((id.scores[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn errors_and_ridge() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]);
        assert!(matches!(fit_discriminant(&x, &[1, 1, 1], 2), Err(Error::EmptyClass(2))));
        assert!(matches!(fit_discriminant(&x, &[1, 3, 1], 2), Err(Error::OutOfRange { value: 3, .. })));
        let flat = DMatrix::from_row_slice(3, 1, &[2.0, 2.0, 2.0]);
        assert!(matches!(fit_discriminant(&flat, &[1, 2, 1], 2), Err(Error::SingularCovariance)));
        // second attribute duplicates the first
        let twin = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let model = fit_discriminant(&twin, &[1, 1, 2, 2], 2).unwrap();
        assert!(model.ridge);
        assert_eq!(identify(&model, &[4.0, 4.0], false).unwrap().class, Some(2));
        let m = fit_discriminant(&x, &[1, 2, 2], 2).unwrap();
        assert!(matches!(identify(&m, &[1.0, 2.0], false), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn separated_gaussians() {
        let centers = [(0.0, 0.0), (3.0, 0.0)];
        let (x, labels) = gaussians(1, 200, &centers, 0.1);
        let mut model = fit_discriminant(&x, &labels, 2).unwrap();
        let (held, truth) = gaussians(2, 500, &centers, 0.1);
        let correct = (0..held.nrows())
            .filter(|&r| {
                let row: Vec<f64> = held.row(r).iter().copied().collect();
                identify(&model, &row, false).unwrap().class == Some(truth[r])
            })
            .count();
        assert!(correct as f64 >= 0.99 * held.nrows() as f64);
        for (r, &label) in labels.iter().enumerate().take(20) {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            assert_eq!(identify(&model, &row, false).unwrap().class, Some(label));
        }
        let (second, second_labels) = gaussians(3, 100, &centers, 0.1);
        model.set_thresholds(&second, &second_labels).unwrap();
        let outlier = identify(&model, &[40.0, -55.0], true).unwrap();
        assert_eq!(outlier.class, None);
        assert!(identify(&model, &[40.0, -55.0], false).unwrap().class.is_some());
        assert_eq!(identify(&model, &[3.0, 0.0], true).unwrap().class, Some(2));
        let text = format_discriminant(&model);
        assert_eq!(parse_discriminant(&text).unwrap(), model);
        assert!(parse_discriminant(&text.replace("classes 2", "classes 3")).is_err());
    }

    proptest! {
        #[test]
        fn scores_sum_to_one(seed in any::<u64>(), probe in prop::array::uniform2(-10.0f64..10.0)) {
            let (x, labels) = gaussians(seed, 15, &[(0.0, 0.0), (2.0, 1.0), (-1.0, 3.0)], 1.0);
            let model = fit_discriminant(&x, &labels, 3).unwrap();
            let s: f64 = model.scores(&probe).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn argmax_survives_affine_rescaling(seed in any::<u64>(), scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
            let centers = [(0.0, 0.0), (2.0, 1.0), (-1.0, 3.0)];
            let (x, labels) = gaussians(seed, 15, &centers, 0.8);
            let model = fit_discriminant(&x, &labels, 3).unwrap();
            let moved = fit_discriminant(&x.map(|v| scale * v + shift), &labels, 3).unwrap();
            let (probes, _) = gaussians(seed ^ 1, 5, &centers, 1.5);
            for r in 0..probes.nrows() {
                let row: Vec<f64> = probes.row(r).iter().copied().collect();
                let s = model.scores(&row).unwrap();
                let mut sorted = s.clone();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                // skip probes whose two best scores are numerically tied
                if sorted[0] - sorted[1] < 1e-6 {
                    continue;
                }
                let scaled: Vec<f64> = row.iter().map(|v| scale * v + shift).collect();
                prop_assert_eq!(
                    identify(&model, &row, false).unwrap().class,
                    identify(&moved, &scaled, false).unwrap().class
                );
            }
        }
    }
}
