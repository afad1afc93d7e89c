//! Strip-tree contour vectorization and Lucas re-digitization.

use crate::error::{Error, Result};
use crate::text::{fmt_f64, Tokens};

/// Distance extremes of a span's points on each side of its chord.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripWidths {
    pub left: f64,
    pub right: f64,
    pub left_max: usize,
    pub right_max: usize,
}

impl StripWidths {
    pub fn total(&self) -> f64 {
        self.left + self.right
    }
}

/// Signed distance from `p` to the segment `o`-`e`, negative on the left.
/// Points projecting beyond an end take their distance to that end.
fn segment_distance(o: (f64, f64), e: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = (e.0 - o.0, e.1 - o.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.0 - o.0).hypot(p.1 - o.1);
    }
    let len = len2.sqrt();
    let (a, b, c) = (dy / len, -dx / len, (e.0 * o.1 - o.0 * e.1) / len);
    let line = a * p.0 + b * p.1 + c;
    let t = ((p.0 - o.0) * dx + (p.1 - o.1) * dy) / len2;
    let reach = if t < 0.0 {
        (p.0 - o.0).hypot(p.1 - o.1)
    } else if t > 1.0 {
        (p.0 - e.0).hypot(p.1 - e.1)
    } else {
        return line;
    };
    if line < 0.0 {
        -reach
    } else {
        reach
    }
}

fn widths(points: &[(f64, f64)], origin: usize, end: usize) -> StripWidths {
    let (o, e) = (points[origin], points[end]);
    let mut w = StripWidths {
        left: 0.0,
        right: 0.0,
        left_max: origin,
        right_max: origin,
    };
    for (i, &p) in points.iter().enumerate().take(end).skip(origin) {
        let d = segment_distance(o, e, p);
        if d < 0.0 {
            if -d > w.left {
                w.left = -d;
                w.left_max = i;
            }
        } else if d > w.right {
            w.right = d;
            w.right_max = i;
        }
    }
    w
}

/// Widths of the points `span.0..=span.1` around the chord joining them.
pub fn strip_widths(points: &[(f64, f64)], span: (usize, usize)) -> Result<StripWidths> {
    let (origin, end) = span;
    if origin >= end || end >= points.len() {
        return Err(Error::TooFewPoints {
            got: end.saturating_sub(origin) + 1,
            need: 2,
        });
    }
    if points[origin] == points[end] {
        return Err(Error::ZeroLength);
    }
    Ok(widths(points, origin, end))
}

const NONE: usize = usize::MAX;

/// Binary decomposition of a point list into strips.
#[derive(Clone, Debug, PartialEq)]
pub struct StripTree {
    pub father: Vec<usize>,
    pub lftson: Vec<usize>,
    pub rgtson: Vec<usize>,
    pub origin: Vec<usize>,
    pub end: Vec<usize>,
    pub lftwidth: Vec<f64>,
    pub rgtwidth: Vec<f64>,
    pub lftmax: Vec<usize>,
    pub rgtmax: Vec<usize>,
    /// Point indices flagged as vertices, ascending.
    pub vertices: Vec<usize>,
}

impl StripTree {
    pub fn node_count(&self) -> usize {
        self.father.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.lftson[node] == NONE && self.rgtson[node] == NONE
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| self.is_leaf(n)).collect()
    }

    fn width(&self, node: usize) -> f64 {
        self.lftwidth[node] + self.rgtwidth[node]
    }

    fn push(&mut self, father: usize, origin: usize, end: usize) -> usize {
        self.father.push(father);
        self.lftson.push(NONE);
        self.rgtson.push(NONE);
        self.origin.push(origin);
        self.end.push(end);
        // not yet measured
        self.lftwidth.push(f64::INFINITY);
        self.rgtwidth.push(f64::INFINITY);
        self.lftmax.push(origin);
        self.rgtmax.push(origin);
        self.father.len() - 1
    }

    fn measure(&mut self, points: &[(f64, f64)], node: usize) {
        let w = widths(points, self.origin[node], self.end[node]);
        self.lftwidth[node] = w.left;
        self.rgtwidth[node] = w.right;
        self.lftmax[node] = w.left_max;
        self.rgtmax[node] = w.right_max;
    }

    /// Splits a node at its farthest point.
    fn divide(&mut self, node: usize) {
        let split = if self.lftwidth[node] > self.rgtwidth[node] {
            self.lftmax[node]
        } else {
            self.rgtmax[node]
        };
        let l = self.push(node, self.origin[node], split);
        let r = self.push(node, split, self.end[node]);
        self.lftson[node] = l;
        self.rgtson[node] = r;
        self.vertices.push(split);
    }
}

/// Builds the strip tree of an open point list without recursion or stack:
/// descend left after each division, then right, and on the way up replace
/// a node's width by the larger of its sons'.
pub fn build_strip_tree(points: &[(f64, f64)], precision: f64) -> Result<StripTree> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            got: points.len(),
            need: 2,
        });
    }
    let mut t = StripTree {
        father: Vec::new(),
        lftson: Vec::new(),
        rgtson: Vec::new(),
        origin: Vec::new(),
        end: Vec::new(),
        lftwidth: Vec::new(),
        rgtwidth: Vec::new(),
        lftmax: Vec::new(),
        rgtmax: Vec::new(),
        vertices: vec![0, points.len() - 1],
    };
    let root = t.push(NONE, 0, points.len() - 1);
    t.measure(points, root);
    let mut node = root;
    loop {
        if t.width(node) > precision {
            if t.is_leaf(node) {
                t.divide(node);
                node = t.lftson[node];
                t.measure(points, node);
                continue;
            }
            let r = t.rgtson[node];
            if t.width(r) > precision {
                if t.lftwidth[r].is_infinite() {
                    t.measure(points, r);
                }
                node = r;
                continue;
            }
            let l = t.lftson[node];
            t.lftwidth[node] = t.width(l).max(t.width(r));
            t.rgtwidth[node] = 0.0;
        }
        if node == root {
            break;
        }
        node = t.father[node];
    }
    t.vertices.sort_unstable();
    t.vertices.dedup();
    Ok(t)
}

/// Two end points.
pub type Segment = ((f64, f64), (f64, f64));

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Polyline {
    /// Segments as vertex pairs, including the closing one.
    pub fn segments(&self) -> Vec<Segment> {
        let v = &self.vertices;
        let mut s: Vec<_> = v.windows(2).map(|w| (w[0], w[1])).collect();
        if self.closed && v.len() > 2 {
            s.push((v[v.len() - 1], v[0]));
        }
        s
    }
}

fn as_float(points: &[(i64, i64)]) -> Vec<(f64, f64)> {
    points.iter().map(|&(x, y)| (x as f64, y as f64)).collect()
}

fn collect_vertices(points: &[(f64, f64)], indices: &[usize]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = Vec::with_capacity(indices.len());
    for &i in indices {
        if v.last() != Some(&points[i]) {
            v.push(points[i]);
        }
    }
    v
}

/// Open polyline approximating `points` within `precision`.
pub fn vectorize(points: &[(i64, i64)], precision: f64) -> Result<Polyline> {
    let pts = as_float(points);
    let tree = build_strip_tree(&pts, precision)?;
    Ok(Polyline {
        vertices: collect_vertices(&pts, &tree.vertices),
        closed: false,
    })
}

/// Closed polyline for a contour listed once around, without repeating the
/// start point.
pub fn vectorize_closed(points: &[(i64, i64)], precision: f64) -> Result<Polyline> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            got: points.len(),
            need: 2,
        });
    }
    let mut pts = as_float(points);
    pts.push(pts[0]);
    let tree = build_strip_tree(&pts, precision)?;
    let mut vertices = collect_vertices(&pts, &tree.vertices);
    if vertices.len() > 1 && vertices.first() == vertices.last() {
        vertices.pop();
    }
    Ok(Polyline {
        vertices,
        closed: true,
    })
}

/// Integer points from `p0` to `p1`, error accumulator seeded at half the
/// major extent. Slope 1 takes the horizontal branch.
pub fn digitalize_segment(p0: (i64, i64), p1: (i64, i64)) -> Vec<(i64, i64)> {
    let u = (p1.0 - p0.0).abs();
    let v = (p1.1 - p0.1).abs();
    let xinc = if p1.0 > p0.0 { 1 } else { -1 };
    let yinc = if p1.1 > p0.1 { 1 } else { -1 };
    let (mut x, mut y) = p0;
    let mut out = Vec::with_capacity(u.max(v) as usize + 1);
    out.push((x, y));
    if u >= v {
        let mut sum = u / 2;
        for _ in 0..u {
            x += xinc;
            sum += v;
            if sum >= u {
                sum -= u;
                y += yinc;
            }
            out.push((x, y));
        }
    } else {
        let mut sum = v / 2;
        for _ in 0..v {
            y += yinc;
            sum += u;
            if sum >= v {
                sum -= v;
                x += xinc;
            }
            out.push((x, y));
        }
    }
    out
}

/// Digitized polyline with joint duplicates removed.
pub fn digitalize_polyline(pl: &Polyline) -> Result<Vec<(i64, i64)>> {
    if pl.vertices.len() < 2 {
        return Err(Error::TooFewPoints {
            got: pl.vertices.len(),
            need: 2,
        });
    }
    let round = |p: (f64, f64)| (p.0.round() as i64, p.1.round() as i64);
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (a, b) in pl.segments() {
        for p in digitalize_segment(round(a), round(b)) {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
    }
    if pl.closed && out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    Ok(out)
}

/// `poly <closed|open> n x0 y0 x1 y1 …`
pub fn format_polyline(pl: &Polyline) -> String {
    let mut s = format!(
        "poly {} {}",
        if pl.closed { "closed" } else { "open" },
        pl.vertices.len()
    );
    for &(x, y) in &pl.vertices {
        s.push(' ');
        s.push_str(&fmt_f64(x));
        s.push(' ');
        s.push_str(&fmt_f64(y));
    }
    s
}

pub fn parse_polyline(line: &str) -> Result<Polyline> {
    let mut t = Tokens::new("polyline", 0, line);
    t.expect("poly")?;
    let closed = match t.word()? {
        "closed" => true,
        "open" => false,
        w => return Err(t.err(format!("expected closed or open, found `{w}`"))),
    };
    let n: usize = t.parse()?;
    if n > line.len() {
        return Err(t.err("vertex count exceeds the line"));
    }
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        vertices.push((t.float()?, t.float()?));
    }
    t.finish()?;
    Ok(Polyline { vertices, closed })
}
