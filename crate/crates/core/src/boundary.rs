//! Transition lists, contour cycles and the statistics read from them.
//!
//! A transition is stored on the background pixel next to the object: a
//! rising row transition at column `c` means pixel `c` is background and
//! `c+1` object, a falling one at `c+1` means `c` is object and `c+1`
//! background. Columns follow the same rule along `y`.
//!
//! Contours follow object pixels with 4-connectivity, so background holes are
//! 8-connected. Transitions are numbered row list first, then column list.

use crate::error::{Error, Result};
use crate::moments::RunSegment;
use crate::raster::{black, GreyImage, BINARY_MAX_GREY};
use crate::text::{lines, Tokens};

/// Default cap on the number of contour cycles.
pub const CYCLE_OVERFLOW: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    /// Objects are brighter than the threshold.
    Dark,
    /// Objects are darker than the threshold.
    Bright,
}

impl Background {
    /// Whether a grey level lies on the object side. Levels equal to the
    /// threshold belong to the background.
    pub fn is_object(self, value: u16, threshold: u16) -> bool {
        match self {
            Background::Dark => value > threshold,
            Background::Bright => value < threshold,
        }
    }
}

/// Direction of a transition along its scan: background to object is rising.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Way {
    Rising,
    Falling,
}

impl Way {
    pub fn sign(self) -> i32 {
        match self {
            Way::Rising => 1,
            Way::Falling => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub way: Way,
    /// Column index.
    pub abs: usize,
    /// Row index.
    pub ord: usize,
}

/// Row and column transitions with their per-line chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSet {
    width: usize,
    height: usize,
    rows: Vec<Transition>,
    row_succ: Vec<Option<usize>>,
    row_roots: Vec<Option<usize>>,
    cols: Vec<Transition>,
    col_succ: Vec<Option<usize>>,
    col_roots: Vec<Option<usize>>,
}

impl TransitionSet {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.cols.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len() + self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, id: usize) -> Axis {
        if id < self.rows.len() {
            Axis::Row
        } else {
            Axis::Column
        }
    }

    pub fn get(&self, id: usize) -> Transition {
        if id < self.rows.len() {
            self.rows[id]
        } else {
            self.cols[id - self.rows.len()]
        }
    }

    /// Next transition on the same row or column.
    pub fn succ(&self, id: usize) -> Option<usize> {
        let nr = self.rows.len();
        if id < nr {
            self.row_succ[id]
        } else {
            self.col_succ[id - nr].map(|s| s + nr)
        }
    }

    pub fn row_root(&self, y: usize) -> Option<usize> {
        self.row_roots.get(y).copied().flatten()
    }

    pub fn col_root(&self, x: usize) -> Option<usize> {
        self.col_roots.get(x).copied().flatten().map(|s| s + self.rows.len())
    }

    /// Ids of row `y`'s transitions in chain order.
    pub fn row_chain(&self, y: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.row_root(y), |&t| self.succ(t))
    }

    /// Ids of column `x`'s transitions in chain order.
    pub fn col_chain(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.col_root(x), |&t| self.succ(t))
    }

    /// The object pixel the transition borders.
    fn object_pixel(&self, id: usize) -> (i64, i64) {
        let t = self.get(id);
        let (x, y) = (t.abs as i64, t.ord as i64);
        let step = match t.way {
            Way::Rising => 1,
            Way::Falling => -1,
        };
        match self.axis(id) {
            Axis::Row => (x + step, y),
            Axis::Column => (x, y + step),
        }
    }

    /// Row transition of `way` on row `y` bordering object pixel column `x`.
    /// Same-way transitions are visited by stepping twice along the chain.
    fn seek_row(&self, way: Way, x: i64, y: i64) -> Option<usize> {
        if y < 0 || y >= self.height as i64 {
            return None;
        }
        let mut p = self.row_root(y as usize);
        if p.is_some_and(|t| self.get(t).way != way) {
            p = p.and_then(|t| self.succ(t));
        }
        while let Some(t) = p {
            if self.object_pixel(t).0 >= x {
                break;
            }
            p = self.succ(t).and_then(|s| self.succ(s));
        }
        p.filter(|&t| self.get(t).way == way && self.object_pixel(t).0 == x)
    }

    fn seek_col(&self, way: Way, x: i64, y: i64) -> Option<usize> {
        if x < 0 || x >= self.width as i64 {
            return None;
        }
        let mut p = self.col_root(x as usize);
        if p.is_some_and(|t| self.get(t).way != way) {
            p = p.and_then(|t| self.succ(t));
        }
        while let Some(t) = p {
            if self.object_pixel(t).1 >= y {
                break;
            }
            p = self.succ(t).and_then(|s| self.succ(s));
        }
        p.filter(|&t| self.get(t).way == way && self.object_pixel(t).1 == y)
    }

    /// Continuation of a contour: central, then 4-connected, then
    /// 8-connected neighbor.
    fn probe(&self, id: usize) -> Option<usize> {
        use Way::{Falling, Rising};
        let (x, y) = self.object_pixel(id);
        match (self.axis(id), self.get(id).way) {
            (Axis::Row, Rising) => self
                .seek_col(Rising, x, y)
                .or_else(|| self.seek_row(Rising, x, y - 1))
                .or_else(|| self.seek_col(Falling, x - 1, y - 1)),
            (Axis::Row, Falling) => self
                .seek_col(Falling, x, y)
                .or_else(|| self.seek_row(Falling, x, y + 1))
                .or_else(|| self.seek_col(Rising, x + 1, y + 1)),
            (Axis::Column, Rising) => self
                .seek_row(Falling, x, y)
                .or_else(|| self.seek_col(Rising, x + 1, y))
                .or_else(|| self.seek_row(Rising, x + 1, y - 1)),
            (Axis::Column, Falling) => self
                .seek_row(Rising, x, y)
                .or_else(|| self.seek_col(Falling, x - 1, y))
                .or_else(|| self.seek_row(Falling, x - 1, y + 1)),
        }
    }
}

fn link_chains(list: &[Transition], line: impl Fn(&Transition) -> usize, lines: usize)
    -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut succ = vec![None; list.len()];
    let mut roots = vec![None; lines];
    let mut last: Vec<Option<usize>> = vec![None; lines];
    for (i, t) in list.iter().enumerate() {
        let l = line(t);
        match last[l] {
            Some(p) => succ[p] = Some(i),
            None => roots[l] = Some(i),
        }
        last[l] = Some(i);
    }
    (succ, roots)
}

/// Extracts row and column transitions of a framed image.
pub fn scan_transitions(
    img: &GreyImage,
    threshold: u16,
    background: Background,
) -> Result<TransitionSet> {
    let (w, h) = (img.width(), img.height());
    let obj = |x: usize, y: usize| background.is_object(img.get(x, y), threshold);
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && obj(x, y) {
                return Err(Error::Unframed { x, y });
            }
        }
    }
    let mut rows = Vec::new();
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            match (obj(x, y), obj(x + 1, y)) {
                (false, true) => rows.push(Transition { way: Way::Rising, abs: x, ord: y }),
                (true, false) => rows.push(Transition { way: Way::Falling, abs: x + 1, ord: y }),
                _ => {}
            }
        }
    }
    let mut cols = Vec::new();
    for x in 0..w {
        for y in 0..h.saturating_sub(1) {
            match (obj(x, y), obj(x, y + 1)) {
                (false, true) => cols.push(Transition { way: Way::Rising, abs: x, ord: y }),
                (true, false) => cols.push(Transition { way: Way::Falling, abs: x, ord: y + 1 }),
                _ => {}
            }
        }
    }
    let (row_succ, row_roots) = link_chains(&rows, |t| t.ord, h);
    let (col_succ, col_roots) = link_chains(&cols, |t| t.abs, w);
    Ok(TransitionSet {
        width: w,
        height: h,
        rows,
        row_succ,
        row_roots,
        cols,
        col_succ,
        col_roots,
    })
}

/// Status of a cycle as an object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectFlag {
    Discarded,
    Top,
    /// Directly enclosed by the given cycle.
    Inside(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleKind {
    /// Outer boundary of an object, rooted on a rising transition.
    Outer,
    /// Boundary of a hole, rooted on a falling transition.
    Hole,
}

/// Closed contours threaded through a transition set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleSet {
    pub cycle_roots: Vec<usize>,
    pub cycle_succ: Vec<Option<usize>>,
    pub cycle_of: Vec<Option<usize>>,
    pub object_flag: Vec<ObjectFlag>,
}

impl CycleSet {
    pub fn len(&self) -> usize {
        self.cycle_roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycle_roots.is_empty()
    }

    /// Transition ids of a cycle in following order.
    pub fn members(&self, cycle: usize) -> Vec<usize> {
        let root = self.cycle_roots[cycle];
        let mut out = vec![root];
        let mut t = root;
        while let Some(n) = self.cycle_succ[t] {
            if n == root {
                break;
            }
            out.push(n);
            t = n;
        }
        out
    }

    pub fn kind(&self, ts: &TransitionSet, cycle: usize) -> CycleKind {
        match ts.get(self.cycle_roots[cycle]).way {
            Way::Rising => CycleKind::Outer,
            Way::Falling => CycleKind::Hole,
        }
    }

    pub fn is_object(&self, cycle: usize) -> bool {
        self.object_flag[cycle] != ObjectFlag::Discarded
    }
}

pub fn follow_contours(ts: &TransitionSet) -> Result<CycleSet> {
    follow_contours_with_limit(ts, CYCLE_OVERFLOW)
}

/// Threads every transition into a closed cycle. Cycles start on row
/// transitions in scan order.
pub fn follow_contours_with_limit(ts: &TransitionSet, max_cycles: usize) -> Result<CycleSet> {
    let n = ts.len();
    let mut cs = CycleSet {
        cycle_roots: Vec::new(),
        cycle_succ: vec![None; n],
        cycle_of: vec![None; n],
        object_flag: Vec::new(),
    };
    for root in 0..n {
        if cs.cycle_of[root].is_some() {
            continue;
        }
        if cs.cycle_roots.len() == max_cycles {
            return Err(Error::CycleOverflow(max_cycles));
        }
        let c = cs.cycle_roots.len();
        cs.cycle_roots.push(root);
        cs.object_flag.push(ObjectFlag::Top);
        cs.cycle_of[root] = Some(c);
        let mut cur = root;
        loop {
            match ts.probe(cur) {
                Some(next) if next != root && cs.cycle_of[next].is_none() => {
                    cs.cycle_succ[cur] = Some(next);
                    cs.cycle_of[next] = Some(c);
                    cur = next;
                }
                _ => {
                    cs.cycle_succ[cur] = Some(root);
                    break;
                }
            }
        }
    }
    Ok(cs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CycleStats {
    pub perimeter: usize,
    /// Pixels enclosed by the cycle, nested cycles included.
    pub surface: u64,
    pub gx_sum: u64,
    pub gy_sum: u64,
    pub container: Option<usize>,
}

impl CycleStats {
    pub fn gravity(&self) -> Option<(f64, f64)> {
        (self.surface > 0).then(|| {
            let s = self.surface as f64;
            (self.gx_sum as f64 / s, self.gy_sum as f64 / s)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContourStats {
    pub cycles: Vec<CycleStats>,
}

impl ContourStats {
    /// Surface of a cycle minus the surfaces it directly encloses.
    pub fn net_surface(&self, cycle: usize) -> u64 {
        let inner: u64 = self
            .cycles
            .iter()
            .filter(|c| c.container == Some(cycle))
            .map(|c| c.surface)
            .sum();
        self.cycles[cycle].surface.saturating_sub(inner)
    }
}

/// Walks each row pairing every transition with the next one of its own
/// cycle, reporting the span and the cycles met in between.
fn scan_spans(
    ts: &TransitionSet,
    cs: &CycleSet,
    mut span: impl FnMut(usize, usize, usize, usize),
    mut enclosed: impl FnMut(usize, usize),
) {
    for y in 0..ts.height() {
        for pred in ts.row_chain(y) {
            let Some(c) = cs.cycle_of[pred] else { continue };
            let root_way = ts.get(cs.cycle_roots[c]).way;
            let pt = ts.get(pred);
            if pt.way != root_way {
                continue;
            }
            let mut s = ts.succ(pred);
            while let Some(t) = s {
                match cs.cycle_of[t] {
                    Some(d) if d == c => break,
                    Some(d) => enclosed(c, d),
                    None => {}
                }
                s = ts.succ(t).and_then(|u| ts.succ(u));
            }
            let Some(partner) = s else { continue };
            let (a, b) = (pt.abs, ts.get(partner).abs);
            let (lo, hi) = match root_way {
                Way::Rising => (a + 1, b.wrapping_sub(1)),
                Way::Falling => (a, b),
            };
            if b > 0 && hi >= lo {
                span(c, y, lo, hi);
            }
        }
    }
}

/// Perimeter, enclosed surface, first moments and nesting of each cycle.
/// Writes containers into the object flags and discards zero-mass cycles.
pub fn contour_stats(ts: &TransitionSet, cs: &mut CycleSet) -> ContourStats {
    let mut stats = vec![CycleStats::default(); cs.len()];
    for (c, s) in stats.iter_mut().enumerate() {
        s.perimeter = cs.members(c).len();
    }
    let mut flags = cs.object_flag.clone();
    scan_spans(
        ts,
        cs,
        |c, y, lo, hi| {
            let len = (hi - lo + 1) as u64;
            let s = &mut stats[c];
            s.surface += len;
            s.gx_sum += (lo + hi) as u64 * len / 2;
            s.gy_sum += y as u64 * len;
        },
        |c, d| {
            if flags[d] != ObjectFlag::Discarded {
                flags[d] = ObjectFlag::Inside(c);
            }
        },
    );
    for (c, s) in stats.iter_mut().enumerate() {
        if s.surface == 0 {
            flags[c] = ObjectFlag::Discarded;
        }
        if let ObjectFlag::Inside(d) = flags[c] {
            s.container = Some(d);
        }
    }
    cs.object_flag = flags;
    ContourStats { cycles: stats }
}

/// Row spans enclosed by each cycle, holes of outer cycles included.
pub fn cycle_runs(ts: &TransitionSet, cs: &CycleSet) -> Vec<Vec<RunSegment>> {
    let mut runs = vec![Vec::new(); cs.len()];
    scan_spans(
        ts,
        cs,
        |c, y, lo, hi| {
            runs[c].push(RunSegment {
                y: y as i64,
                x1: lo as i64,
                x2: hi as i64,
            })
        },
        |_, _| {},
    );
    runs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvexCandidate {
    pub transition: usize,
    pub way: Way,
    pub abs: usize,
    pub ord: usize,
    pub is_convex: bool,
}

/// Per-row extreme transitions as (min, max) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvexProfile {
    pub candidates: Vec<ConvexCandidate>,
}

impl ConvexProfile {
    pub fn vertices(&self) -> Vec<(usize, usize)> {
        self.candidates
            .iter()
            .filter(|c| c.is_convex)
            .map(|c| (c.abs, c.ord))
            .collect()
    }
}

/// Convexity of candidates along one side. A point is concave when it lies
/// strictly inward of the chord joining a candidate above to one below.
fn flag_side(points: &[(i64, i64)], inward: i64) -> Vec<bool> {
    let n = points.len();
    (0..n)
        .map(|t| {
            let (xt, yt) = points[t];
            !(0..t).any(|i1| {
                let (x1, y1) = points[i1];
                (t + 1..n).any(|i2| {
                    let (x2, y2) = points[i2];
                    let lhs = xt as i128 * (y2 - y1) as i128;
                    let chord = x1 as i128 * (y2 - yt) as i128 + x2 as i128 * (yt - y1) as i128;
                    (lhs - chord) * inward as i128 > 0
                })
            })
        })
        .collect()
}

fn convex_from(ts: &TransitionSet, keep: impl Fn(usize) -> bool) -> ConvexProfile {
    let mut pairs = Vec::new();
    for y in 0..ts.height() {
        let mut chain = ts.row_chain(y).filter(|&t| keep(t));
        if let Some(first) = chain.next() {
            let last = chain.last().unwrap_or(first);
            pairs.push((first, last));
        }
    }
    let point = |t: usize| {
        let tr = ts.get(t);
        (tr.abs as i64, tr.ord as i64)
    };
    let minima: Vec<_> = pairs.iter().map(|p| point(p.0)).collect();
    let maxima: Vec<_> = pairs.iter().map(|p| point(p.1)).collect();
    let min_flags = flag_side(&minima, 1);
    let max_flags = flag_side(&maxima, -1);
    let candidate = |t: usize, is_convex: bool| {
        let tr = ts.get(t);
        ConvexCandidate {
            transition: t,
            way: tr.way,
            abs: tr.abs,
            ord: tr.ord,
            is_convex,
        }
    };
    let candidates = pairs
        .iter()
        .enumerate()
        .flat_map(|(i, &(a, b))| [candidate(a, min_flags[i]), candidate(b, max_flags[i])])
        .collect();
    ConvexProfile { candidates }
}

/// Convex vertices over the transitions of every object cycle.
pub fn convex_vertices(ts: &TransitionSet, cs: &CycleSet) -> ConvexProfile {
    convex_from(ts, |t| cs.cycle_of[t].is_some_and(|c| cs.is_object(c)))
}

/// Convex vertices of a single cycle.
pub fn convex_vertices_of(ts: &TransitionSet, cs: &CycleSet, cycle: usize) -> ConvexProfile {
    convex_from(ts, |t| cs.cycle_of[t] == Some(cycle))
}

/// Binary image of the pixels strictly between rising/falling row pairs.
pub fn fill_contours(ts: &TransitionSet) -> Result<GreyImage> {
    let mut img = GreyImage::new(ts.width(), ts.height(), BINARY_MAX_GREY);
    let fill = black(BINARY_MAX_GREY);
    for y in 0..ts.height() {
        let chain: Vec<_> = ts.row_chain(y).map(|t| ts.get(t)).collect();
        if chain.len() % 2 != 0 {
            return Err(Error::Unbalanced(y));
        }
        for pair in chain.chunks(2) {
            let (r, f) = (pair[0], pair[1]);
            if r.way != Way::Rising || f.way != Way::Falling || f.abs <= r.abs {
                return Err(Error::Unbalanced(y));
            }
            for x in r.abs + 1..f.abs {
                img.set(x, y, fill);
            }
        }
    }
    Ok(img)
}

/// Stored coordinates of a cycle in following order, repeats collapsed.
pub fn cycle_points(ts: &TransitionSet, cs: &CycleSet, cycle: usize) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = Vec::new();
    for t in cs.members(cycle) {
        let tr = ts.get(t);
        let p = (tr.abs as i64, tr.ord as i64);
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    pts
}

/// One line per cycle: `cycle <id> : (x,y) (x,y) …`.
pub fn format_chains(ts: &TransitionSet, cs: &CycleSet) -> String {
    let mut out = String::new();
    for c in 0..cs.len() {
        out.push_str(&format!("cycle {c} :"));
        for (x, y) in cycle_points(ts, cs, c) {
            out.push_str(&format!(" ({x},{y})"));
        }
        out.push('\n');
    }
    out
}

/// A cycle number with its points.
pub type Chain = (usize, Vec<(i64, i64)>);

pub fn parse_chains(text: &str) -> Result<Vec<Chain>> {
    lines(text)
        .map(|(n, line)| {
            let mut t = Tokens::new("chains", n, line);
            t.expect("cycle")?;
            let id = t.parse()?;
            t.expect(":")?;
            let pts = t
                .rest()
                .into_iter()
                .map(|w| {
                    w.strip_prefix('(')
                        .and_then(|w| w.strip_suffix(')'))
                        .and_then(|w| w.split_once(','))
                        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                        .ok_or_else(|| t.err(format!("bad point `{w}`")))
                })
                .collect::<Result<_>>()?;
            Ok((id, pts))
        })
        .collect()
}
