//! Line-oriented tokenizing shared by the text formats.

use crate::error::{Error, Result};
use std::str::FromStr;

/// Non-empty lines with `#` comments stripped, numbered from 1.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

/// Whitespace tokens of one line with typed accessors.
pub(crate) struct Tokens<'a> {
    what: &'static str,
    line: usize,
    inner: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    pub fn new(what: &'static str, line: usize, text: &'a str) -> Self {
        Tokens {
            what,
            line,
            inner: text.split_whitespace(),
        }
    }

    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.what, self.line, message)
    }

    pub fn word(&mut self) -> Result<&'a str> {
        self.inner.next().ok_or_else(|| self.err("unexpected end of line"))
    }

    pub fn expect(&mut self, keyword: &str) -> Result<()> {
        let w = self.word()?;
        if w == keyword {
            Ok(())
        } else {
            Err(self.err(format!("expected `{keyword}`, found `{w}`")))
        }
    }

    pub fn parse<T: FromStr>(&mut self) -> Result<T> {
        let w = self.word()?;
        w.parse()
            .map_err(|_| self.err(format!("cannot read `{w}` as {}", std::any::type_name::<T>())))
    }

    /// A finite float.
    pub fn float(&mut self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err("non-finite number"))
        }
    }

    pub fn rest(&mut self) -> Vec<&'a str> {
        self.inner.by_ref().collect()
    }

    pub fn finish(&mut self) -> Result<()> {
        match self.inner.next() {
            None => Ok(()),
            Some(w) => Err(self.err(format!("trailing token `{w}`"))),
        }
    }
}

/// Shortest decimal text that reads back to the same float.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:?}")
    }
}
