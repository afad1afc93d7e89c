use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::text::{fmt_f64, lines, Tokens};
use nalgebra::{DMatrix, DVector};

/// `ŷ = a₀ + Σ aᵢ xᵢ`, with `xᵢ` replaced by `ln xᵢ` where flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel {
    pub coefficients: Vec<f64>,
    pub log: Vec<bool>,
    pub rms: f64,
}

impl RegressionModel {
    pub fn variables(&self) -> usize {
        self.log.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.log.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} variables for a model of {}",
                x.len(),
                self.log.len()
            )));
        }
        let mut y = self.coefficients[0];
        for ((&v, &log), &a) in x.iter().zip(&self.log).zip(&self.coefficients[1..]) {
            y += a * transformed(v, log)?;
        }
        Ok(y)
    }
}

fn transformed(v: f64, log: bool) -> Result<f64> {
    match log {
        false => Ok(v),
        true if v > 0.0 => Ok(v.ln()),
        true => Err(Error::NonPositiveLog(v)),
    }
}

/// Least-squares fit of `y` on the columns of `x` (one row per observation).
pub fn fit_regression(x: &DMatrix<f64>, y: &[f64]) -> Result<RegressionModel> {
    fit_regression_logged(x, y, &vec![false; x.ncols()])
}

pub fn fit_regression_logged(x: &DMatrix<f64>, y: &[f64], log: &[bool]) -> Result<RegressionModel> {
    let (n, p) = x.shape();
    if y.len() != n || log.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{n}x{p} observations with {} targets and {} flags",
            y.len(),
            log.len()
        )));
    }
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    for r in 0..n {
        for c in 0..p {
            design[(r, c + 1)] = transformed(x[(r, c)], log[c])?;
        }
    }
    let target = DVector::from_column_slice(y);
    let a = least_squares(&design, &target)?;
    let residual = &target - &design * &a;
    Ok(RegressionModel {
        coefficients: a.iter().copied().collect(),
        log: log.to_vec(),
        rms: (residual.norm_squared() / n as f64).sqrt(),
    })
}

/// Decision threshold between two Gaussian error populations.
pub fn auth_threshold(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64> {
    if sigma1 < 0.0 || sigma2 < 0.0 || sigma1 + sigma2 <= 0.0 {
        return Err(Error::Degenerate);
    }
    Ok((sigma2 * mu1 + sigma1 * mu2) / (sigma1 + sigma2))
}

fn mean_and_deviation(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Compliance test on the prediction error of one attribute from the others.
#[derive(Clone, Debug, PartialEq)]
pub struct AuthModel {
    pub reference: RegressionModel,
    pub threshold: f64,
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl AuthModel {
    /// Sets the threshold from the error populations of labeled compliant
    /// and non-compliant samples.
    pub fn fit(
        reference: RegressionModel,
        compliant: (&DMatrix<f64>, &[f64]),
        rejected: (&DMatrix<f64>, &[f64]),
    ) -> Result<AuthModel> {
        let errors = |(x, y): (&DMatrix<f64>, &[f64])| -> Result<Vec<f64>> {
            (0..x.nrows())
                .map(|r| {
                    let row: Vec<f64> = x.row(r).iter().copied().collect();
                    Ok((y[r] - reference.predict(&row)?).abs())
                })
                .collect()
        };
        let (mu1, sigma1) = mean_and_deviation(&errors(compliant)?)?;
        let (mu2, sigma2) = mean_and_deviation(&errors(rejected)?)?;
        let threshold = auth_threshold(mu1, sigma1, mu2, sigma2)?;
        Ok(AuthModel { reference, threshold, mu1, sigma1, mu2, sigma2 })
    }

    pub fn error(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok((y - self.reference.predict(x)?).abs())
    }

    pub fn authenticate(&self, x: &[f64], y: f64) -> Result<bool> {
        Ok(self.error(x, y)? < self.threshold)
    }
}

fn floats(t: &mut Tokens) -> Result<Vec<f64>> {
    t.rest()
        .into_iter()
        .map(|w| match w.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(t.err(format!("cannot read `{w}` as a number"))),
        })
        .collect()
}

fn write_regression(out: &mut String, m: &RegressionModel) {
    let coef: Vec<String> = m.coefficients.iter().map(|&v| fmt_f64(v)).collect();
    let log: Vec<&str> = m.log.iter().map(|&l| if l { "1" } else { "0" }).collect();
    out.push_str(&format!("coefficients {}\n", coef.join(" ")));
    out.push_str(format!("log {}\n", log.join(" ")).trim_end());
    out.push('\n');
    out.push_str(&format!("rms {}\n", fmt_f64(m.rms)));
}

fn read_regression<'a>(what: &'static str, it: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<RegressionModel> {
    let mut line = |key: &'static str| -> Result<(usize, &'a str)> {
        let (n, l) = it.next().ok_or_else(|| Error::parse(what, 0, format!("missing `{key}` line")))?;
        Ok((n, l))
    };
    let (n, l) = line("coefficients")?;
    let mut t = Tokens::new(what, n, l);
    t.expect("coefficients")?;
    let coefficients = floats(&mut t)?;
    if coefficients.is_empty() {
        return Err(t.err("no coefficient"));
    }
    let (n, l) = line("log")?;
    let mut t = Tokens::new(what, n, l);
    t.expect("log")?;
    let log = t
        .rest()
        .into_iter()
        .map(|w| match w {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::parse(what, n, format!("log flag `{w}` is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    if log.len() + 1 != coefficients.len() {
        return Err(Error::parse(what, n, "flag count does not match the coefficients"));
    }
    let (n, l) = line("rms")?;
    let mut t = Tokens::new(what, n, l);
    t.expect("rms")?;
    let rms = t.float()?;
    t.finish()?;
    Ok(RegressionModel { coefficients, log, rms })
}

fn expect_header<'a>(what: &'static str, it: &mut impl Iterator<Item = (usize, &'a str)>, header: &str) -> Result<()> {
    let (n, l) = it.next().ok_or_else(|| Error::parse(what, 0, "empty model"))?;
    let mut t = Tokens::new(what, n, l);
    t.expect(header)?;
    t.expect("v1")?;
    t.finish()
}

/// `regression v1`, then `coefficients`, `log` and `rms` lines.
pub fn format_regression(m: &RegressionModel) -> String {
    let mut out = String::from("regression v1\n");
    write_regression(&mut out, m);
    out
}

pub fn parse_regression(text: &str) -> Result<RegressionModel> {
    let mut it = lines(text);
    expect_header("regression", &mut it, "regression")?;
    let m = read_regression("regression", &mut it)?;
    match it.next() {
        Some((n, _)) => Err(Error::parse("regression", n, "trailing line")),
        None => Ok(m),
    }
}

/// `auth v1`, `threshold`, `stats mu1 sigma1 mu2 sigma2`, then the
/// reference regression lines.
pub fn format_auth(m: &AuthModel) -> String {
    let mut out = format!(
        "auth v1\nthreshold {}\nstats {} {} {} {}\n",
        fmt_f64(m.threshold),
        fmt_f64(m.mu1),
        fmt_f64(m.sigma1),
        fmt_f64(m.mu2),
        fmt_f64(m.sigma2)
    );
    write_regression(&mut out, &m.reference);
    out
}

pub fn parse_auth(text: &str) -> Result<AuthModel> {
    const WHAT: &str = "auth model";
    let mut it = lines(text);
    expect_header(WHAT, &mut it, "auth")?;
    let (n, l) = it.next().ok_or_else(|| Error::parse(WHAT, 0, "missing `threshold` line"))?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("threshold")?;
    let threshold = t.float()?;
    t.finish()?;
    let (n, l) = it.next().ok_or_else(|| Error::parse(WHAT, 0, "missing `stats` line"))?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("stats")?;
    let (mu1, sigma1, mu2, sigma2) = (t.float()?, t.float()?, t.float()?, t.float()?);
    t.finish()?;
    let reference = read_regression(WHAT, &mut it)?;
    if let Some((n, _)) = it.next() {
        return Err(Error::parse(WHAT, n, "trailing line"));
    }
    Ok(AuthModel { reference, threshold, mu1, sigma1, mu2, sigma2 })
}
