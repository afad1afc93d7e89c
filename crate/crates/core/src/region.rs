//! Blob labeling and per-blob attributes on label images.

use crate::error::{Error, Result};
use crate::moments::RawMoments;
use crate::raster::{black, Connectivity, GreyImage, LabelImage, BINARY_MAX_GREY, NOT_ASSIGNED, WHITE};
use crate::text::{lines, Tokens};

/// Labels resolved to dense blob ids `1..=count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlobImage {
    labels: LabelImage,
    conn: Connectivity,
    count: u32,
}

impl BlobImage {
    pub fn labels(&self) -> &LabelImage {
        &self.labels
    }

    pub fn into_labels(self) -> LabelImage {
        self.labels
    }

    pub fn connectivity(&self) -> Connectivity {
        self.conn
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels.get(x, y)
    }
}

/// Blob id to representative id, resolved to fixed points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceTable {
    pub equivalent: Vec<u32>,
}

impl EquivalenceTable {
    fn new() -> Self {
        EquivalenceTable { equivalent: vec![0] }
    }

    fn fresh(&mut self) -> u32 {
        let id = self.equivalent.len() as u32;
        self.equivalent.push(id);
        id
    }

    fn find(&mut self, mut b: u32) -> u32 {
        let mut root = b;
        while self.equivalent[root as usize] != root {
            root = self.equivalent[root as usize];
        }
        while self.equivalent[b as usize] != root {
            let next = self.equivalent[b as usize];
            self.equivalent[b as usize] = root;
            b = next;
        }
        root
    }

    /// Merges two classes under the smaller representative.
    fn merge(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.equivalent[hi as usize] = lo;
        lo
    }

    fn resolve(&mut self) {
        for b in 0..self.equivalent.len() as u32 {
            self.find(b);
        }
    }
}

/// Single-pass labeling of the pixels where `active` holds, joining
/// predecessor neighbors for which `same` holds. Returns dense ids in order
/// of first appearance and their count.
fn label_components(
    width: usize,
    height: usize,
    conn: Connectivity,
    active: impl Fn(usize) -> bool,
    same: impl Fn(usize, usize) -> bool,
) -> (Vec<u32>, u32) {
    let mut table = EquivalenceTable::new();
    let mut ids = vec![0u32; width * height];
    let back: &[(isize, isize)] = match conn {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !active(i) {
                continue;
            }
            let mut blob = 0;
            for &(dx, dy) in back {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= width {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if ids[j] == 0 || !same(i, j) {
                    continue;
                }
                blob = if blob == 0 { table.find(ids[j]) } else { table.merge(blob, ids[j]) };
            }
            ids[i] = if blob == 0 { table.fresh() } else { blob };
        }
    }
    table.resolve();
    let mut dense = vec![0u32; table.equivalent.len()];
    let mut count = 0;
    for id in ids.iter_mut().filter(|id| **id != 0) {
        let root = table.equivalent[*id as usize] as usize;
        if dense[root] == 0 {
            count += 1;
            dense[root] = count;
        }
        *id = dense[root];
    }
    (ids, count)
}

/// Connected components of equal labels; label 0 stays unassigned.
pub fn segment_blobs(img: &LabelImage, conn: Connectivity) -> (BlobImage, u32) {
    let data = img.data();
    let (ids, count) = label_components(
        img.width(),
        img.height(),
        conn,
        |i| data[i] != NOT_ASSIGNED,
        |i, j| data[i] == data[j],
    );
    let labels = LabelImage::from_vec(img.width(), img.height(), ids).expect("same dimensions");
    (BlobImage { labels, conn, count }, count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlobRecord {
    pub id: u32,
    /// 0 for points, 1 for lines, 2 for surfaces.
    pub dimension: u8,
    pub xmin: usize,
    pub xmax: usize,
    pub ymin: usize,
    pub ymax: usize,
    /// Pixels with an assigned 8-neighbor of another blob.
    pub perimeter: u64,
    pub moments: RawMoments,
    pub father: Option<u32>,
}

/// Records indexed by blob id minus one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlobTable {
    pub blobs: Vec<BlobRecord>,
}

impl BlobTable {
    pub fn get(&self, id: u32) -> Option<&BlobRecord> {
        id.checked_sub(1).and_then(|i| self.blobs.get(i as usize))
    }
}

/// Dimension, bounding box, perimeter, raw moments and father of each blob.
pub fn blob_attributes(bi: &BlobImage) -> BlobTable {
    let (w, h) = (bi.width(), bi.height());
    let mut blobs: Vec<BlobRecord> = (1..=bi.count())
        .map(|id| BlobRecord {
            id,
            dimension: 0,
            xmin: usize::MAX,
            xmax: 0,
            ymin: usize::MAX,
            ymax: 0,
            perimeter: 0,
            moments: RawMoments::default(),
            father: None,
        })
        .collect();
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            NOT_ASSIGNED
        } else {
            bi.get(x as usize, y as usize)
        }
    };
    for y in 0..h {
        for x in 0..w {
            let b = bi.get(x, y);
            if b == NOT_ASSIGNED {
                continue;
            }
            let r = &mut blobs[b as usize - 1];
            let (xi, yi) = (x as isize, y as isize);
            let mut dim = 2u8;
            if at(xi - 1, yi) != b && at(xi + 1, yi) != b {
                dim -= 1;
            }
            if at(xi, yi - 1) != b && at(xi, yi + 1) != b {
                dim -= 1;
            }
            r.dimension = r.dimension.max(dim);
            r.xmin = r.xmin.min(x);
            r.xmax = r.xmax.max(x);
            r.ymin = r.ymin.min(y);
            r.ymax = r.ymax.max(y);
            let boundary = Connectivity::Eight.offsets().iter().any(|&(dx, dy)| {
                let n = at(xi + dx, yi + dy);
                n != NOT_ASSIGNED && n != b
            });
            if boundary {
                r.perimeter += 1;
            }
            r.moments.add_pixel(x as i64, y as i64);
        }
    }
    for (r, f) in blobs.iter_mut().zip(blob_inclusion(bi)) {
        r.father = f;
    }
    BlobTable { blobs }
}

/// Directly containing blob of every blob, indexed by id minus one.
///
/// Unassigned pixels are split into background components with the dual
/// connectivity and a frame component surrounds the image, so holes are
/// told apart from the outside. Each row is scanned with a stack of entered
/// components; leaving a component for one below it in the stack assigns
/// the father. A final pass lifts any father that an adjacency shows cannot
/// enclose its son.
pub fn blob_inclusion(bi: &BlobImage) -> Vec<Option<u32>> {
    let (w, h) = (bi.width(), bi.height());
    let blobs = bi.count() as usize;
    let data = bi.labels().data();
    let (holes, hole_count) = label_components(
        w,
        h,
        bi.connectivity().dual(),
        |i| data[i] == NOT_ASSIGNED,
        |_, _| true,
    );
    // components: 0 frame, 1..=blobs blobs, then background components
    let frame = 0usize;
    let nodes = 1 + blobs + hole_count as usize;
    let comp = |x: usize, y: usize| {
        let i = y * w + x;
        if data[i] != NOT_ASSIGNED {
            data[i] as usize
        } else {
            blobs + holes[i] as usize
        }
    };

    let mut father: Vec<Option<usize>> = vec![None; nodes];
    let assign = |father: &mut Vec<Option<usize>>, son: usize, blob: usize| match father[son] {
        None => father[son] = Some(blob),
        Some(f) if father[f] == Some(blob) => father[son] = Some(blob),
        Some(_) => {}
    };
    for y in 0..h {
        let mut stack = vec![frame];
        let mut previous = frame;
        let row = (0..w).map(|x| comp(x, y)).chain(std::iter::once(frame));
        for blob in row {
            if blob == previous {
                continue;
            }
            if let Some(pos) = stack.iter().rposition(|&s| s == blob).filter(|&p| p + 1 < stack.len()) {
                while stack.len() > pos + 1 {
                    let son = stack.pop().expect("above pos");
                    assign(&mut father, son, blob);
                }
            } else {
                stack.push(blob);
            }
            previous = blob;
        }
    }
    for f in father.iter_mut().skip(1) {
        f.get_or_insert(frame);
    }

    let mut edges = Vec::new();
    let path = bi.connectivity().dual();
    for y in 0..h {
        for x in 0..w {
            let a = comp(x, y);
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                edges.push((a, frame));
            }
            for &(dx, dy) in path.offsets() {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let b = comp(nx as usize, ny as usize);
                if a != b {
                    edges.push((a, b));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let ancestors = |father: &[Option<usize>], mut n: usize| {
        let mut chain = vec![n];
        while let Some(f) = father[n] {
            chain.push(f);
            n = f;
        }
        chain
    };
    loop {
        let mut changed = false;
        for &(b, c) in &edges {
            let Some(f) = father[b] else { continue };
            let above_c = ancestors(&father, c);
            if above_c.contains(&f) {
                continue;
            }
            let above_f = ancestors(&father, f);
            let common = *above_f
                .iter()
                .find(|a| above_c.contains(a))
                .expect("frame is a common ancestor");
            father[b] = Some(common);
            changed = true;
        }
        if !changed {
            break;
        }
    }

    (1..=blobs)
        .map(|b| {
            let mut f = father[b];
            while let Some(n) = f {
                if (1..=blobs).contains(&n) {
                    return Some(n as u32);
                }
                f = father[n];
            }
            None
        })
        .collect()
}

/// Keeps pixels having a 4-neighbor outside their blob; the image border
/// counts as unassigned.
pub fn extract_boundaries(bi: &BlobImage) -> BlobImage {
    let (w, h) = (bi.width(), bi.height());
    let mut out = bi.labels().clone();
    for y in 0..h {
        for x in 0..w {
            let b = bi.get(x, y);
            if b == NOT_ASSIGNED {
                continue;
            }
            let boundary = Connectivity::Four.offsets().iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx < 0
                    || ny < 0
                    || nx as usize >= w
                    || ny as usize >= h
                    || bi.get(nx as usize, ny as usize) != b
            });
            if !boundary {
                out.set(x, y, NOT_ASSIGNED);
            }
        }
    }
    BlobImage {
        labels: out,
        conn: bi.conn,
        count: bi.count,
    }
}

/// Ordered contour points of a blob, consuming 4-connected pixels in
/// east, south, west, north preference from its first pixel in scan order.
pub fn trace_contour(boundary: &BlobImage, id: u32) -> Result<Vec<(usize, usize)>> {
    let (w, h) = (boundary.width(), boundary.height());
    let mut left: Vec<bool> = boundary.labels().data().iter().map(|&l| l == id).collect();
    let mut remaining = left.iter().filter(|&&b| b).count();
    let start = left.iter().position(|&b| b).ok_or(Error::BrokenContour(id))?;
    let (mut x, mut y) = (start % w, start / w);
    let mut points = Vec::with_capacity(remaining);
    loop {
        points.push((x, y));
        left[y * w + x] = false;
        remaining -= 1;
        let next = Connectivity::Four.offsets().iter().find_map(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && left[ny as usize * w + nx as usize])
                .then_some((nx as usize, ny as usize))
        });
        match next {
            Some(p) => (x, y) = p,
            None => break,
        }
    }
    if remaining > 0 {
        return Err(Error::BrokenContour(id));
    }
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DimensionFilter {
    Keep,
    Exclude,
}

/// Blob ids of the blobs with (Keep) or without (Exclude) dimension `dim`.
pub fn filter_by_dimension(bi: &BlobImage, bt: &BlobTable, mode: DimensionFilter, dim: u8) -> LabelImage {
    let mut out = bi.labels().clone();
    for y in 0..bi.height() {
        for x in 0..bi.width() {
            let b = bi.get(x, y);
            let Some(r) = bt.get(b) else { continue };
            let matches = r.dimension == dim;
            let keep = match mode {
                DimensionFilter::Keep => matches,
                DimensionFilter::Exclude => !matches,
            };
            if !keep {
                out.set(x, y, NOT_ASSIGNED);
            }
        }
    }
    out
}

/// Label image from per-label binary images: each pixel takes the label of
/// the first binary image where it is black, else stays unassigned.
pub fn compose_binaries(layers: &[(u32, GreyImage)]) -> Result<LabelImage> {
    let Some((_, first)) = layers.first() else {
        return Err(Error::EmptyList);
    };
    let (w, h) = (first.width(), first.height());
    let mut out = LabelImage::new(w, h);
    for (label, img) in layers {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} layer against {w}x{h}",
                img.width(),
                img.height()
            )));
        }
        let object = black(img.max_grey());
        for y in 0..h {
            for x in 0..w {
                if out.get(x, y) == NOT_ASSIGNED && img.get(x, y) == object {
                    out.set(x, y, *label);
                }
            }
        }
    }
    Ok(out)
}

/// Framed binary crop of one blob's bounding box, with the offset of the
/// crop's origin in the blob image.
pub fn blob_mask(bi: &BlobImage, r: &BlobRecord) -> (GreyImage, (usize, usize)) {
    let (w, h) = (r.xmax - r.xmin + 3, r.ymax - r.ymin + 3);
    let mut img = GreyImage::new(w, h, BINARY_MAX_GREY);
    let object = black(BINARY_MAX_GREY);
    for y in r.ymin..=r.ymax {
        for x in r.xmin..=r.xmax {
            let v = if bi.get(x, y) == r.id { object } else { WHITE };
            img.set(x - r.xmin + 1, y - r.ymin + 1, v);
        }
    }
    (img, (r.xmin.wrapping_sub(1), r.ymin.wrapping_sub(1)))
}

/// One record per line:
/// `id dim xmin xmax ymin ymax perim m mx my mxx mxy myy mxxx mxxy mxyy myyy father`,
/// father 0 for none.
pub fn format_blob_table(bt: &BlobTable) -> String {
    let mut out = String::from("# id dim xmin xmax ymin ymax perim m mx my mxx mxy myy mxxx mxxy mxyy myyy father\n");
    for r in &bt.blobs {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}",
            r.id, r.dimension, r.xmin, r.xmax, r.ymin, r.ymax, r.perimeter
        ));
        for m in r.moments.fields() {
            out.push_str(&format!(" {m}"));
        }
        out.push_str(&format!(" {}\n", r.father.unwrap_or(0)));
    }
    out
}

pub fn parse_blob_table(text: &str) -> Result<BlobTable> {
    let blobs = lines(text)
        .map(|(n, line)| {
            let mut t = Tokens::new("blob table", n, line);
            let id = t.parse()?;
            let dimension: u8 = t.parse()?;
            if dimension > 2 {
                return Err(t.err("dimension above 2"));
            }
            let (xmin, xmax, ymin, ymax) = (t.parse()?, t.parse()?, t.parse()?, t.parse()?);
            if xmin > xmax || ymin > ymax {
                return Err(t.err("inverted bounding box"));
            }
            let perimeter = t.parse()?;
            let mut f = [0i128; 10];
            for v in &mut f {
                *v = t.parse()?;
            }
            let father: u32 = t.parse()?;
            t.finish()?;
            Ok(BlobRecord {
                id,
                dimension,
                xmin,
                xmax,
                ymin,
                ymax,
                perimeter,
                moments: RawMoments::from_fields(f),
                father: (father != 0).then_some(father),
            })
        })
        .collect::<Result<_>>()?;
    Ok(BlobTable { blobs })
}
