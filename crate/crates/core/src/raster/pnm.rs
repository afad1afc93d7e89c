//! Netpbm grey (P2/P5) and color (P3/P6) images, plus the text legend that
//! accompanies label images stored as PGM.

use super::{GreyImage, LabelImage, NOT_ASSIGNED};
use crate::error::{Error, Result};
use crate::text::{lines, Tokens};
use std::collections::BTreeMap;

/// Largest accepted pixel count, guarding allocation on hostile headers.
pub const MAX_PIXELS: usize = 1 << 28;

const WHAT: &str = "pnm";

/// A decoded netpbm image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pnm {
    Grey(GreyImage),
    /// Red, green and blue planes.
    Rgb([GreyImage; 3]),
}

impl Pnm {
    /// Grey image, converting color with integer Rec. 601 luma weights.
    pub fn into_grey(self) -> GreyImage {
        match self {
            Pnm::Grey(g) => g,
            Pnm::Rgb([r, g, b]) => {
                let data = r
                    .data()
                    .iter()
                    .zip(g.data())
                    .zip(b.data())
                    .map(|((&r, &g), &b)| {
                        ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u16
                    })
                    .collect();
                GreyImage::from_vec(r.width(), r.height(), r.max_grey(), data)
                    .expect("luma never exceeds the channel maximum")
            }
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(WHAT, 0, format!("expected a number at byte {start}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(WHAT, 0, "number too large"))
    }
}

/// Decodes P2, P3, P5 or P6 data.
pub fn decode_pnm(bytes: &[u8]) -> Result<Pnm> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::parse(WHAT, 0, "missing netpbm magic"));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'5' => (1, true),
        b'3' => (3, false),
        b'6' => (3, true),
        _ => return Err(Error::parse(WHAT, 0, "unsupported netpbm variant")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number()? as usize;
    let height = cur.number()? as usize;
    let maxval = cur.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(WHAT, 0, format!("maxval {maxval} outside 1..=65535")));
    }
    let pixels = width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or_else(|| Error::parse(WHAT, 0, "image too large"))?;
    let samples = pixels * channels;
    let mut values = Vec::with_capacity(samples.min(bytes.len()));
    if binary {
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::parse(WHAT, 0, "missing separator before raster"));
        }
        cur.pos += 1;
        let wide = maxval > 255;
        let needed = samples * if wide { 2 } else { 1 };
        let raster = bytes
            .get(cur.pos..cur.pos + needed)
            .ok_or_else(|| Error::parse(WHAT, 0, "truncated raster"))?;
        if wide {
            values.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
        } else {
            values.extend(raster.iter().map(|&b| b as u16));
        }
    } else {
        for _ in 0..samples {
            let v = cur.number()?;
            if v > maxval {
                return Err(Error::parse(WHAT, 0, format!("sample {v} above maxval {maxval}")));
            }
            values.push(v as u16);
        }
    }
    if let Some(&v) = values.iter().find(|&&v| v as u64 > maxval) {
        return Err(Error::parse(WHAT, 0, format!("sample {v} above maxval {maxval}")));
    }
    let maxval = maxval as u16;
    if channels == 1 {
        return Ok(Pnm::Grey(GreyImage::from_vec(width, height, maxval, values)?));
    }
    let plane = |c: usize| {
        let data = values.iter().skip(c).step_by(3).copied().collect();
        GreyImage::from_vec(width, height, maxval, data)
    };
    Ok(Pnm::Rgb([plane(0)?, plane(1)?, plane(2)?]))
}

/// Decodes a netpbm image as grey levels.
pub fn decode_pgm(bytes: &[u8]) -> Result<GreyImage> {
    decode_pnm(bytes).map(Pnm::into_grey)
}

/// Encodes a binary (P5) PGM.
pub fn encode_pgm(img: &GreyImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), img.max_grey()).into_bytes();
    if img.max_grey() > 255 {
        for &v in img.data() {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.data().iter().map(|&v| v as u8));
    }
    out
}

/// Population of every label present, NOT_ASSIGNED included.
pub fn label_populations(img: &LabelImage) -> BTreeMap<u32, u64> {
    let mut pop = BTreeMap::new();
    for &l in img.data() {
        *pop.entry(l).or_insert(0) += 1;
    }
    pop
}

/// One legend entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegendEntry {
    pub label: u32,
    pub population: u64,
    pub name: Option<String>,
}

/// Legend text: `labels <n>` followed by `<label> <population> [name]`.
pub fn format_legend(entries: &[LegendEntry]) -> String {
    let mut out = format!("labels {}\n", entries.len());
    for e in entries {
        match &e.name {
            Some(name) => out.push_str(&format!("{} {} {}\n", e.label, e.population, name)),
            None => out.push_str(&format!("{} {}\n", e.label, e.population)),
        }
    }
    out
}

pub fn parse_legend(text: &str) -> Result<Vec<LegendEntry>> {
    let mut it = lines(text);
    let (n_line, first) = it
        .next()
        .ok_or_else(|| Error::parse("legend", 0, "empty legend"))?;
    let mut t = Tokens::new("legend", n_line, first);
    t.expect("labels")?;
    let count: usize = t.parse()?;
    t.finish()?;
    let mut entries: Vec<LegendEntry> = Vec::new();
    for (n, line) in it {
        let mut t = Tokens::new("legend", n, line);
        let label: u32 = t.parse()?;
        let population: u64 = t.parse()?;
        let rest = t.rest();
        if entries.last().is_some_and(|e| e.label >= label) {
            return Err(t.err("labels must be strictly increasing"));
        }
        entries.push(LegendEntry {
            label,
            population,
            name: (!rest.is_empty()).then(|| rest.join(" ")),
        });
    }
    if entries.len() != count {
        return Err(Error::parse(
            "legend",
            0,
            format!("{} entries, header says {count}", entries.len()),
        ));
    }
    Ok(entries)
}

/// Label image as a PGM raster plus legend text.
pub fn encode_label_image(img: &LabelImage) -> Result<(Vec<u8>, String)> {
    let top = img.max_label();
    if top > 65535 {
        return Err(Error::OutOfRange {
            value: top,
            limit: 65535,
        });
    }
    let data = img.data().iter().map(|&l| l as u16).collect();
    let grey = GreyImage::from_vec(img.width(), img.height(), top.max(1) as u16, data)?;
    let legend: Vec<LegendEntry> = label_populations(img)
        .into_iter()
        .filter(|&(l, _)| l != NOT_ASSIGNED)
        .map(|(label, population)| LegendEntry {
            label,
            population,
            name: None,
        })
        .collect();
    Ok((encode_pgm(&grey), format_legend(&legend)))
}

/// Reads a label image and checks it against its legend.
pub fn decode_label_image(pgm: &[u8], legend: &str) -> Result<LabelImage> {
    let grey = match decode_pnm(pgm)? {
        Pnm::Grey(g) => g,
        Pnm::Rgb(_) => return Err(Error::parse(WHAT, 0, "label image must be grey")),
    };
    let img = LabelImage::from_vec(
        grey.width(),
        grey.height(),
        grey.data().iter().map(|&v| v as u32).collect(),
    )?;
    let entries = parse_legend(legend)?;
    let pop = label_populations(&img);
    let listed: BTreeMap<u32, u64> = entries.iter().map(|e| (e.label, e.population)).collect();
    let present: BTreeMap<u32, u64> = pop.into_iter().filter(|&(l, _)| l != NOT_ASSIGNED).collect();
    if listed != present {
        return Err(Error::parse("legend", 0, "legend populations disagree with the raster"));
    }
    Ok(img)
}
