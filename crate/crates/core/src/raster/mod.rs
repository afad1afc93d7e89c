//! Image containers and pixel-level operators.
//!
//! Grey images carry an explicit top grey level; binary images use the two
//! levels [`black`] (`max_grey / 2`) and [`WHITE`] (0). Label images use
//! [`NOT_ASSIGNED`] (0) as the "no label" sentinel.
//!
//! Neighborhood operators read a snapshot of their input and only look at
//! in-bounds neighbors, so results never depend on scan order.

pub mod pnm;

use crate::error::{Error, Result};

/// Label meaning "no class / no blob".
pub const NOT_ASSIGNED: u32 = 0;
/// Background level of binary images.
pub const WHITE: u16 = 0;
/// Top grey level used for binary images built from label images.
pub const BINARY_MAX_GREY: u16 = 255;

/// Object level of a binary image whose top grey level is `max_grey`.
pub fn black(max_grey: u16) -> u16 {
    max_grey / 2
}

/// Common access to grey and label grids.
pub trait Raster: Clone {
    type Pixel: Copy + PartialEq + Into<u32>;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixel(&self, x: usize, y: usize) -> Self::Pixel;
    fn set_pixel(&mut self, x: usize, y: usize, value: Self::Pixel);
    /// An image of the same kind, new size, filled with `fill`.
    fn blank_like(&self, width: usize, height: usize, fill: Self::Pixel) -> Self;
    /// Value used for pixels with no source.
    fn background(&self) -> Self::Pixel;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GreyImage {
    width: usize,
    height: usize,
    max_grey: u16,
    data: Vec<u16>,
}

impl GreyImage {
    pub fn new(width: usize, height: usize, max_grey: u16) -> Self {
        GreyImage {
            width,
            height,
            max_grey,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, max_grey: u16, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} image",
                data.len(),
                width,
                height
            )));
        }
        if let Some(&v) = data.iter().find(|&&v| v > max_grey) {
            return Err(Error::OutOfRange {
                value: v as u32,
                limit: max_grey as usize,
            });
        }
        Ok(GreyImage {
            width,
            height,
            max_grey,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn max_grey(&self) -> u16 {
        self.max_grey
    }
    pub fn data(&self) -> &[u16] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    /// Panics if `value` exceeds the top grey level.
    pub fn set(&mut self, x: usize, y: usize, value: u16) {
        assert!(value <= self.max_grey, "grey level {value} above {}", self.max_grey);
        self.data[y * self.width + x] = value;
    }
}

impl Raster for GreyImage {
    type Pixel = u16;
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixel(&self, x: usize, y: usize) -> u16 {
        self.get(x, y)
    }
    fn set_pixel(&mut self, x: usize, y: usize, value: u16) {
        self.set(x, y, value)
    }
    fn blank_like(&self, width: usize, height: usize, fill: u16) -> Self {
        GreyImage {
            width,
            height,
            max_grey: self.max_grey,
            data: vec![fill.min(self.max_grey); width * height],
        }
    }
    fn background(&self) -> u16 {
        WHITE
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    data: Vec<u32>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize) -> Self {
        LabelImage {
            width,
            height,
            data: vec![NOT_ASSIGNED; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {}x{} image",
                data.len(),
                width,
                height
            )));
        }
        Ok(LabelImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[u32] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.data[y * self.width + x]
    }
    pub fn set(&mut self, x: usize, y: usize, label: u32) {
        self.data[y * self.width + x] = label;
    }

    /// Largest label present, 0 for an empty or unassigned image.
    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(NOT_ASSIGNED)
    }
}

impl Raster for LabelImage {
    type Pixel = u32;
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixel(&self, x: usize, y: usize) -> u32 {
        self.get(x, y)
    }
    fn set_pixel(&mut self, x: usize, y: usize, value: u32) {
        self.set(x, y, value)
    }
    fn blank_like(&self, width: usize, height: usize, fill: u32) -> Self {
        LabelImage {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
    fn background(&self) -> u32 {
        NOT_ASSIGNED
    }
}

/// Pixel adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Connectivity {
    /// The four axis moves.
    Four,
    /// The eight king moves.
    Eight,
}

const FOUR: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
const EIGHT: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    /// The adjacency that makes foreground/background topology consistent.
    pub fn dual(self) -> Connectivity {
        match self {
            Connectivity::Four => Connectivity::Eight,
            Connectivity::Eight => Connectivity::Four,
        }
    }
}

/// In-bounds neighbors of `(x, y)`.
pub(crate) fn neighbors(
    width: usize,
    height: usize,
    x: usize,
    y: usize,
    conn: Connectivity,
) -> impl Iterator<Item = (usize, usize)> {
    conn.offsets().iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height)
            .then_some((nx as usize, ny as usize))
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram1D {
    pub counts: Vec<u64>,
    pub stride: usize,
}

/// Grey-level histogram over every `stride`-th pixel in row-major order.
pub fn compute_histogram(img: &GreyImage, stride: usize) -> Histogram1D {
    let stride = stride.max(1);
    let mut counts = vec![0u64; img.max_grey as usize + 1];
    for &v in img.data.iter().step_by(stride) {
        counts[v as usize] += 1;
    }
    Histogram1D { counts, stride }
}

/// Which of the two dominant histogram modes is taken as the object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ObjectMode {
    /// The less populated mode (small objects on a large background).
    #[default]
    Minor,
    /// The more populated mode.
    Major,
}

/// Centered moving average; windows are clipped at the histogram ends.
pub fn smooth_histogram(counts: &[u64], window: usize) -> Vec<f64> {
    let n = counts.len();
    let half = window / 2;
    let mut prefix = vec![0u64; n + 1];
    for (i, &c) in counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Mode {
    start: usize,
    end: usize,
    height: f64,
}

impl Mode {
    fn center(&self) -> usize {
        (self.start + self.end) / 2
    }
}

/// Plateau-aware local maxima of a sampled curve.
fn local_maxima(values: &[f64]) -> Vec<Mode> {
    let n = values.len();
    let mut modes = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[end + 1] == values[start] {
            end += 1;
        }
        let v = values[start];
        let left = (start > 0).then(|| values[start - 1]);
        let right = (end + 1 < n).then(|| values[end + 1]);
        let bounded = left.is_some() || right.is_some();
        if v > 0.0 && bounded && left.is_none_or(|l| l < v) && right.is_none_or(|r| r < v) {
            modes.push(Mode {
                start,
                end,
                height: v,
            });
        }
        start = end + 1;
    }
    modes
}

/// Valley threshold with the default object rule.
pub fn find_valley_threshold(h: &Histogram1D, smooth_window: usize) -> Result<u16> {
    find_valley_threshold_with(h, smooth_window, ObjectMode::Minor)
}

/// Grey level of the histogram valley between the object mode and its
/// neighboring mode toward the background mode.
pub fn find_valley_threshold_with(
    h: &Histogram1D,
    smooth_window: usize,
    object: ObjectMode,
) -> Result<u16> {
    let smoothed = smooth_histogram(&h.counts, smooth_window.max(1));
    let modes = local_maxima(&smoothed);
    if modes.len() < 2 {
        return Err(Error::Unimodal);
    }
    let mut ranked: Vec<usize> = (0..modes.len()).collect();
    ranked.sort_by(|&a, &b| {
        modes[b]
            .height
            .total_cmp(&modes[a].height)
            .then(modes[a].start.cmp(&modes[b].start))
    });
    // on equal heights the brighter mode ranks second and is the minor one
    let (major, minor) = (modes[ranked[0]], modes[ranked[1]]);
    let (obj, bg) = match object {
        ObjectMode::Minor => (minor, major),
        ObjectMode::Major => (major, minor),
    };
    let toward_bg = bg.start > obj.start;
    let neighbor = modes
        .iter()
        .filter(|m| {
            if toward_bg {
                m.start > obj.end && m.start <= bg.start
            } else {
                m.end < obj.start && m.end >= bg.end
            }
        })
        .min_by_key(|m| {
            if toward_bg {
                m.start - obj.end
            } else {
                obj.start - m.end
            }
        })
        .copied()
        .unwrap_or(bg);
    let (lo, hi) = if toward_bg {
        (obj.end + 1, neighbor.start)
    } else {
        (neighbor.end + 1, obj.start)
    };
    let mut best: Option<(usize, f64)> = None;
    for (g, &v) in smoothed.iter().enumerate().take(hi).skip(lo) {
        let closer = |b: usize| g.abs_diff(obj.center()) < b.abs_diff(obj.center());
        match best {
            Some((b, bv)) if v > bv || (v == bv && !closer(b)) => {}
            _ => best = Some((g, v)),
        }
    }
    let (g, _) = best.ok_or(Error::Unimodal)?;
    Ok(g as u16)
}

/// Pixels above `threshold` become the object level, the rest 0.
pub fn binarize(img: &GreyImage, threshold: u16) -> GreyImage {
    let object = black(img.max_grey);
    let data = img
        .data
        .iter()
        .map(|&v| if v > threshold { object } else { WHITE })
        .collect();
    GreyImage {
        data,
        ..img.clone()
    }
}

/// Paints the outermost rows and columns with `background`.
pub fn draw_frame<R: Raster>(img: &R, background: R::Pixel) -> Result<R> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(Error::TooSmall {
            width: w,
            height: h,
        });
    }
    let mut out = img.clone();
    for x in 0..w {
        out.set_pixel(x, 0, background);
        out.set_pixel(x, h - 1, background);
    }
    for y in 0..h {
        out.set_pixel(0, y, background);
        out.set_pixel(w - 1, y, background);
    }
    Ok(out)
}

/// Most frequent assigned label among the neighbors (smallest label on ties)
/// with its count, and the count of `own` among the same neighbors.
fn neighbor_majority(
    img: &LabelImage,
    x: usize,
    y: usize,
    conn: Connectivity,
    own: u32,
) -> Option<(u32, usize, usize)> {
    let mut tally: [(u32, usize); 8] = [(0, 0); 8];
    let mut used = 0;
    for (nx, ny) in neighbors(img.width, img.height, x, y, conn) {
        let l = img.get(nx, ny);
        if l == NOT_ASSIGNED {
            continue;
        }
        match tally[..used].iter_mut().find(|(t, _)| *t == l) {
            Some(entry) => entry.1 += 1,
            None => {
                tally[used] = (l, 1);
                used += 1;
            }
        }
    }
    let own_count = tally[..used]
        .iter()
        .find(|(l, _)| *l == own)
        .map_or(0, |e| e.1);
    tally[..used]
        .iter()
        .copied()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, c)| (l, c, own_count))
}

/// Replaces each label by the neighborhood majority when it strictly beats
/// the pixel's own label.
pub fn median_filter(img: &LabelImage, conn: Connectivity) -> LabelImage {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let own = img.get(x, y);
            if let Some((label, count, own_count)) = neighbor_majority(img, x, y, conn, own) {
                if count > own_count {
                    out.set(x, y, label);
                }
            }
        }
    }
    out
}

/// Grows assigned labels into unassigned pixels until nothing changes.
pub fn extend_labels(img: &LabelImage, conn: Connectivity) -> LabelImage {
    extend_labels_counted(img, conn).0
}

/// [`extend_labels`] also returning the number of passes run, including
/// the final pass that modified nothing.
pub fn extend_labels_counted(img: &LabelImage, conn: Connectivity) -> (LabelImage, usize) {
    let mut current = img.clone();
    let mut passes = 0;
    loop {
        passes += 1;
        let mut next = current.clone();
        let mut modified = 0usize;
        for y in 0..current.height {
            for x in 0..current.width {
                if current.get(x, y) != NOT_ASSIGNED {
                    continue;
                }
                if let Some((label, _, _)) = neighbor_majority(&current, x, y, conn, NOT_ASSIGNED)
                {
                    next.set(x, y, label);
                    modified += 1;
                }
            }
        }
        current = next;
        if modified == 0 {
            return (current, passes);
        }
    }
}

/// Binary image of one label: the label is black, everything else white.
pub fn split_to_binary(img: &LabelImage, label: u32) -> GreyImage {
    let object = black(BINARY_MAX_GREY);
    GreyImage {
        width: img.width,
        height: img.height,
        max_grey: BINARY_MAX_GREY,
        data: img
            .data
            .iter()
            .map(|&l| if l == label { object } else { WHITE })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Morphology {
    Erode,
    Dilate,
    Thin,
}

fn check_binary(img: &GreyImage) -> Result<()> {
    let object = black(img.max_grey);
    match img.data.iter().find(|&&v| v != object && v != WHITE) {
        Some(&v) => Err(Error::NotBinary(v as u32)),
        None => Ok(()),
    }
}

/// Swaps the two binary levels.
pub fn invert_binary(img: &GreyImage) -> Result<GreyImage> {
    check_binary(img)?;
    let object = black(img.max_grey);
    let data = img
        .data
        .iter()
        .map(|&v| if v == object { WHITE } else { object })
        .collect();
    Ok(GreyImage {
        data,
        ..img.clone()
    })
}

fn majority_flip(img: &GreyImage, conn: Connectivity, from: u16, to: u16) -> GreyImage {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if img.get(x, y) != from {
                continue;
            }
            let (mut same, mut other) = (0, 0);
            for (nx, ny) in neighbors(img.width, img.height, x, y, conn) {
                if img.get(nx, ny) == from {
                    same += 1;
                } else {
                    other += 1;
                }
            }
            if other > same {
                out.set(x, y, to);
            }
        }
    }
    out
}

/// Is the in-bounds pixel at `(x + dx, y + dy)` white? Outside pixels are
/// neither white nor black.
fn white_at(img: &GreyImage, x: usize, y: usize, dx: isize, dy: isize) -> bool {
    let nx = x as isize + dx;
    let ny = y as isize + dy;
    nx >= 0
        && ny >= 0
        && (nx as usize) < img.width
        && (ny as usize) < img.height
        && img.get(nx as usize, ny as usize) == WHITE
}

fn thin_pass(img: &GreyImage, first: bool) -> GreyImage {
    let object = black(img.max_grey);
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if img.get(x, y) != object {
                continue;
            }
            let west = white_at(img, x, y, -1, 0);
            let east = white_at(img, x, y, 1, 0);
            let north = white_at(img, x, y, 0, -1);
            let south = white_at(img, x, y, 0, 1);
            let candidate = if first { west || south } else { east || north };
            let median = (west && east) || (north && south);
            if candidate && !median {
                out.set(x, y, WHITE);
            }
        }
    }
    out
}

/// Binary erosion, dilation or one thinning step (two directional passes).
pub fn morphology(img: &GreyImage, mode: Morphology, conn: Connectivity) -> Result<GreyImage> {
    check_binary(img)?;
    let object = black(img.max_grey);
    Ok(match mode {
        Morphology::Erode => majority_flip(img, conn, object, WHITE),
        Morphology::Dilate => majority_flip(img, conn, WHITE, object),
        Morphology::Thin => thin_pass(&thin_pass(img, true), false),
    })
}

/// Pixel-wise union of point, line and polygon label images; points take
/// precedence over lines, lines over polygons.
pub fn compose_union(
    points: &LabelImage,
    lines: &LabelImage,
    polygons: &LabelImage,
) -> Result<LabelImage> {
    for other in [lines, polygons] {
        if other.width != points.width || other.height != points.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                points.width, points.height, other.width, other.height
            )));
        }
    }
    let data = points
        .data
        .iter()
        .zip(&lines.data)
        .zip(&polygons.data)
        .map(|((&p, &l), &g)| {
            [p, l, g]
                .into_iter()
                .find(|&v| v != NOT_ASSIGNED)
                .unwrap_or(NOT_ASSIGNED)
        })
        .collect();
    Ok(LabelImage {
        width: points.width,
        height: points.height,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grey(w: usize, h: usize, data: &[u16]) -> GreyImage {
        GreyImage::from_vec(w, h, 255, data.to_vec()).unwrap()
    }

    fn labels(w: usize, h: usize, data: &[u32]) -> LabelImage {
        LabelImage::from_vec(w, h, data.to_vec()).unwrap()
    }

    #[test]
    fn histogram_counts_and_sampling() {
        let h = compute_histogram(&grey(2, 2, &[0, 0, 1, 2]), 1);
        assert_eq!(&h.counts[..3], &[2, 1, 1]);
        assert_eq!(h.counts.iter().sum::<u64>(), 4);

        let img = grey(3, 2, &[7, 1, 2, 3, 4, 5]);
        let h = compute_histogram(&img, 6);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[7], 1);
    }

    #[test]
    fn histogram_stride_recount() {
        let data: Vec<u16> = (0..4096u32).map(|i| (i.wrapping_mul(2654435761) >> 24) as u16).collect();
        let img = grey(64, 64, &data);
        let h = compute_histogram(&img, 3);
        assert_eq!(h.counts.iter().sum::<u64>(), 4096u64.div_ceil(3));
        let mut manual = vec![0u64; 256];
        for i in (0..4096).step_by(3) {
            manual[data[i] as usize] += 1;
        }
        assert_eq!(h.counts, manual);
    }

    fn bimodal(a: usize, b: usize, spread: f64, height_a: f64, height_b: f64) -> Histogram1D {
        let counts = (0..256)
            .map(|g| {
                let ga = (-((g as f64 - a as f64) / spread).powi(2)).exp() * height_a;
                let gb = (-((g as f64 - b as f64) / spread).powi(2)).exp() * height_b;
                (ga + gb).round() as u64
            })
            .collect();
        Histogram1D { counts, stride: 1 }
    }

    /// Exhaustive search: the lowest smoothed value strictly between the two
    /// tallest peaks.
    fn valley_oracle(h: &Histogram1D, window: usize) -> Vec<usize> {
        let s = smooth_histogram(&h.counts, window);
        let peaks: Vec<usize> = (0..s.len())
            .filter(|&i| {
                s[i] > 0.0
                    && (i == 0 || s[i - 1] < s[i])
                    && (i + 1 == s.len() || s[i + 1] <= s[i])
            })
            .collect();
        let mut top = peaks.clone();
        top.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let (lo, hi) = (top[0].min(top[1]), top[0].max(top[1]));
        let m = (lo + 1..hi).map(|i| s[i]).fold(f64::INFINITY, f64::min);
        (lo + 1..hi).filter(|&i| s[i] == m).collect()
    }

    #[test]
    fn valley_in_empty_gap() {
        let mut counts = vec![0u64; 256];
        for (g, c) in counts.iter_mut().enumerate() {
            let g = g as i64;
            if g < 50 {
                *c = (1000 - 15 * (g - 10).abs()) as u64;
            } else if g > 150 {
                *c = (300 - 5 * (g - 200).abs()) as u64;
            }
        }
        let h = Histogram1D { counts, stride: 1 };
        let t = find_valley_threshold(&h, 5).unwrap();
        assert!((50..=150).contains(&t), "threshold {t}");
        assert!(valley_oracle(&h, 5).contains(&(t as usize)));
    }

    #[test]
    fn valley_symmetric_unique_minimum() {
        let h = Histogram1D {
            counts: (0..256i64).map(|g| 4 * (g - 128).unsigned_abs()).collect(),
            stride: 1,
        };
        assert_eq!(find_valley_threshold(&h, 5).unwrap(), 128);
        assert_eq!(valley_oracle(&h, 5), vec![128]);
    }

    #[test]
    fn valley_constant_is_unimodal() {
        let h = Histogram1D {
            counts: vec![17; 256],
            stride: 1,
        };
        assert!(matches!(find_valley_threshold(&h, 5), Err(Error::Unimodal)));
        let single = bimodal(100, 100, 20.0, 500.0, 0.0);
        assert!(matches!(find_valley_threshold(&single, 5), Err(Error::Unimodal)));
    }

    #[test]
    fn valley_three_modes_picks_object_side() {
        // background at 40 (largest), clutter at 120, objects at 220 (smallest)
        let counts: Vec<u64> = (0..256)
            .map(|g| {
                let f = |c: f64, s: f64, a: f64| (-((g as f64 - c) / s).powi(2)).exp() * a;
                (f(40.0, 12.0, 5000.0) + f(120.0, 12.0, 800.0) + f(220.0, 8.0, 1200.0)).round()
                    as u64
            })
            .collect();
        let h = Histogram1D { counts, stride: 1 };
        let t = find_valley_threshold(&h, 5).unwrap();
        assert!(t > 120 && t < 220, "threshold {t}");
        let t_major = find_valley_threshold_with(&h, 5, ObjectMode::Major).unwrap();
        assert!(t_major > 40 && t_major < 120, "threshold {t_major}");
    }

    #[test]
    fn binarize_levels() {
        let img = grey(3, 1, &[5, 4, 0]);
        let b = binarize(&img, 4);
        assert_eq!(b.data(), &[127, 0, 0]);
        let zeros = grey(2, 2, &[0; 4]);
        assert_eq!(binarize(&zeros, 0).data(), &[0; 4]);
    }

    #[test]
    fn frame_painting() {
        let img = labels(3, 3, &[1; 9]);
        let f = draw_frame(&img, 0).unwrap();
        assert_eq!(f.data(), &[0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let small = grey(2, 2, &[1, 2, 3, 4]);
        assert_eq!(draw_frame(&small, 9).unwrap().data(), &[9; 4]);
        assert!(matches!(
            draw_frame(&grey(1, 3, &[1, 1, 1]), 0),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn frame_touches_border_count() {
        let data: Vec<u16> = (0..20).map(|i| 10 + i as u16).collect();
        let img = grey(4, 5, &data);
        let f = draw_frame(&img, 0).unwrap();
        let border = (0..20)
            .filter(|&i| {
                let (x, y) = (i % 4, i / 4);
                x == 0 || y == 0 || x == 3 || y == 4
            })
            .count();
        assert_eq!(border, 2 * 4 + 2 * 5 - 4);
        let changed = f.data().iter().zip(img.data()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, border);
    }

    #[test]
    fn median_majority() {
        let mut img = labels(3, 3, &[1; 9]);
        img.set(1, 1, 2);
        assert_eq!(median_filter(&img, Connectivity::Four).get(1, 1), 1);
        let uniform = labels(4, 4, &[3; 16]);
        assert_eq!(median_filter(&uniform, Connectivity::Eight), uniform);
    }

    #[test]
    fn median_checkerboard_flips() {
        let data: Vec<u32> = (0..36).map(|i| 1 + ((i % 6 + i / 6) % 2) as u32).collect();
        let img = labels(6, 6, &data);
        let out = median_filter(&img, Connectivity::Four);
        for (a, b) in img.data().iter().zip(out.data()) {
            assert_ne!(a, b);
        }
    }

    #[test]
    fn extension_fills_everything() {
        let mut img = LabelImage::new(9, 7);
        img.set(0, 0, 1);
        img.set(8, 6, 2);
        let (out, passes) = extend_labels_counted(&img, Connectivity::Four);
        assert!(out.data().iter().all(|&l| l != NOT_ASSIGNED));
        assert!(passes <= 9 + 7);
        // BFS layers: each pixel takes the seed at the smaller 4-distance,
        // ties resolved by the majority rule during the pass they meet
        for y in 0..7 {
            for x in 0..9 {
                let d1 = x + y;
                let d2 = (8 - x) + (6 - y);
                if d1 < d2 {
                    assert_eq!(out.get(x, y), 1);
                } else if d2 < d1 {
                    assert_eq!(out.get(x, y), 2);
                }
            }
        }
        let empty = LabelImage::new(4, 4);
        let (same, passes) = extend_labels_counted(&empty, Connectivity::Eight);
        assert_eq!(same, empty);
        assert_eq!(passes, 1);
    }

    #[test]
    fn split_counts() {
        let img = labels(3, 2, &[3, 1, 3, 2, 3, 0]);
        let b = split_to_binary(&img, 3);
        assert_eq!(b.data().iter().filter(|&&v| v == 127).count(), 3);
        assert!(split_to_binary(&img, 9).data().iter().all(|&v| v == WHITE));
        let all = labels(2, 2, &[3; 4]);
        assert!(split_to_binary(&all, 3).data().iter().all(|&v| v == 127));
    }

    #[test]
    fn morphology_single_pixel() {
        let mut img = GreyImage::new(5, 5, 255);
        img.set(2, 2, 127);
        let eroded = morphology(&img, Morphology::Erode, Connectivity::Four).unwrap();
        assert!(eroded.data().iter().all(|&v| v == WHITE));
        let thinned = morphology(&img, Morphology::Thin, Connectivity::Four).unwrap();
        assert_eq!(thinned, img);
    }

    #[test]
    fn thin_bar_twice() {
        // vertical bar three columns wide spanning every row
        let mut img = GreyImage::new(7, 6, 255);
        for y in 0..6 {
            for x in 2..5 {
                img.set(x, y, 127);
            }
        }
        let once = morphology(&img, Morphology::Thin, Connectivity::Four).unwrap();
        let twice = morphology(&once, Morphology::Thin, Connectivity::Four).unwrap();
        for y in 0..6 {
            for x in 0..7 {
                let expect = if x == 3 { 127 } else { WHITE };
                assert_eq!(twice.get(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn morphology_rejects_third_level() {
        let img = grey(2, 1, &[0, 5]);
        assert!(matches!(
            morphology(&img, Morphology::Dilate, Connectivity::Eight),
            Err(Error::NotBinary(5))
        ));
    }

    #[test]
    fn union_priority() {
        let p = labels(3, 1, &[0, 0, 7]);
        let l = labels(3, 1, &[0, 4, 5]);
        let g = labels(3, 1, &[2, 3, 6]);
        assert_eq!(compose_union(&p, &l, &g).unwrap().data(), &[2, 4, 7]);
        let bad = labels(2, 1, &[0, 0]);
        assert!(matches!(
            compose_union(&p, &bad, &g),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn binary_image(w: usize, h: usize) -> impl Strategy<Value = GreyImage> {
        proptest::collection::vec(prop::bool::ANY, w * h).prop_map(move |bits| {
            let data = bits.into_iter().map(|b| if b { 127 } else { 0 }).collect();
            GreyImage::from_vec(w, h, 255, data).unwrap()
        })
    }

    proptest! {
        #[test]
        fn binarize_idempotent(data in proptest::collection::vec(0u16..=255, 48), t in 0u16..=255, t2 in 1u16..127) {
            let img = GreyImage::from_vec(8, 6, 255, data).unwrap();
            let once = binarize(&img, t);
            prop_assert_eq!(binarize(&once, t2), once);
        }

        #[test]
        fn erode_dilate_duality(img in binary_image(9, 7), eight in prop::bool::ANY) {
            let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
            let dilated = morphology(&img, Morphology::Dilate, conn).unwrap();
            let inverted = invert_binary(&img).unwrap();
            let dual = invert_binary(&morphology(&inverted, Morphology::Erode, conn).unwrap()).unwrap();
            prop_assert_eq!(dilated, dual);
        }

        #[test]
        fn thin_is_subset(img in binary_image(10, 8)) {
            let thinned = morphology(&img, Morphology::Thin, Connectivity::Four).unwrap();
            for (a, b) in img.data().iter().zip(thinned.data()) {
                prop_assert!(*b == WHITE || *a == 127);
            }
        }

        #[test]
        fn full_histogram_sum(data in proptest::collection::vec(0u16..=255, 0..200)) {
            let n = data.len();
            let img = GreyImage::from_vec(n, 1, 255, data).unwrap();
            prop_assert_eq!(compute_histogram(&img, 1).counts.iter().sum::<u64>(), n as u64);
        }

        #[test]
        fn extension_keeps_assigned(data in proptest::collection::vec(0u32..4, 80)) {
            let img = LabelImage::from_vec(10, 8, data).unwrap();
            let (out, passes) = extend_labels_counted(&img, Connectivity::Four);
            prop_assert!(passes <= 10 + 8 + 1);
            for (a, b) in img.data().iter().zip(out.data()) {
                if *a != NOT_ASSIGNED {
                    prop_assert_eq!(a, b);
                }
            }
            if img.data().iter().any(|&l| l != NOT_ASSIGNED) {
                prop_assert!(out.data().iter().all(|&l| l != NOT_ASSIGNED));
            }
        }
    }
}
