use super::archive::{Archive, Bounds};
use super::celltree::{check_shape, key_bit, tree_boolean, BooleanOp, Cell, CellTree};
use super::equalize::{equalize_column, EqualizationMap};
use crate::error::{Error, Result};
use crate::text::{fmt_f64, lines, Tokens};

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    id: u32,
    raw: Vec<f64>,
    unit: Vec<f64>,
    key: u128,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Node {
    child: [u32; 2],
    ids: Vec<u32>,
}

/// Content index: objects hang at the leaves of a binary tree whose level
/// `l` halves attribute `l % k` of the normalized attribute space.
#[derive(Clone, Debug, PartialEq)]
pub struct KdIndex {
    attrs: Vec<usize>,
    bounds: Bounds,
    depth: u32,
    maps: Option<Vec<EqualizationMap>>,
    nodes: Vec<Node>,
    entries: Vec<Entry>,
    clamped: usize,
}

/// Objects ranked by similarity, most similar first.
pub type SimilarityRanking = Vec<(u32, f64)>;

impl KdIndex {
    /// Empty index over `bounds.dims()` attributes, `depth` bits each.
    pub fn new(attrs: Vec<usize>, bounds: Bounds, depth: u32) -> Result<Self> {
        check_shape(attrs.len(), depth)?;
        if bounds.dims() != attrs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} bounds for {} attributes",
                bounds.dims(),
                attrs.len()
            )));
        }
        Ok(KdIndex {
            attrs,
            bounds,
            depth,
            maps: None,
            nodes: vec![Node::default()],
            entries: Vec::new(),
            clamped: 0,
        })
    }

    pub fn dims(&self) -> usize {
        self.attrs.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn maps(&self) -> Option<&[EqualizationMap]> {
        self.maps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Attribute values that fell outside the bounds and were clamped.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    fn bits(&self) -> u32 {
        self.dims() as u32 * self.depth
    }

    /// Position of `v` on `[0, 1]` per attribute and whether any clamped.
    pub fn unit(&self, v: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let unit = v
            .iter()
            .enumerate()
            .map(|(d, &x)| match &self.maps {
                Some(m) => m[d].forward(x),
                None => {
                    let (t, c) = self.bounds.normalize(d, x);
                    clamped |= c;
                    t
                }
            })
            .collect();
        (unit, clamped)
    }

    /// Grid cell of a unit position, `[0, 2^depth)` per attribute.
    pub fn cell_of(&self, unit: &[f64]) -> Vec<u32> {
        let side = 1u64 << self.depth;
        unit.iter().map(|&t| ((t * side as f64) as u64).min(side - 1) as u32).collect()
    }

    /// Interleaved key of a cell: the bit of attribute `l % k` at level `l`.
    pub fn key_of(&self, cell: &[u32]) -> u128 {
        let k = cell.len();
        let mut key = 0u128;
        for level in 0..self.bits() {
            let dim = level as usize % k;
            let bit = (cell[dim] >> (self.depth - 1 - level / k as u32)) & 1;
            key = (key << 1) | bit as u128;
        }
        key
    }

    fn key(&self, raw: &[f64]) -> (Vec<f64>, u128, bool) {
        let (unit, clamped) = self.unit(raw);
        let key = self.key_of(&self.cell_of(&unit));
        (unit, key, clamped)
    }

    pub fn add_object(&mut self, id: u32, raw: &[f64]) -> Result<()> {
        if raw.len() != self.dims() {
            return Err(Error::SchemaMismatch(format!("{} values for an index of {}", raw.len(), self.dims())));
        }
        let (unit, key, clamped) = self.key(raw);
        self.clamped += clamped as usize;
        let bits = self.bits();
        let mut at = 0usize;
        for level in 0..bits {
            let side = key_bit(key, bits, level) as usize;
            if self.nodes[at].child[side] == 0 {
                self.nodes.push(Node::default());
                let fresh = self.nodes.len() as u32 - 1;
                self.nodes[at].child[side] = fresh;
            }
            at = self.nodes[at].child[side] as usize;
        }
        self.nodes[at].ids.push(id);
        self.entries.push(Entry { id, raw: raw.to_vec(), unit, key });
        Ok(())
    }

    /// Ids stored at the leaf of `key`.
    pub fn leaf(&self, key: u128) -> &[u32] {
        let bits = self.bits();
        let mut at = 0usize;
        for level in 0..bits {
            let next = self.nodes[at].child[key_bit(key, bits, level) as usize];
            if next == 0 {
                return &[];
            }
            at = next as usize;
        }
        &self.nodes[at].ids
    }

    /// Key of every stored object, by insertion.
    pub fn keys(&self) -> Vec<(u32, u128)> {
        self.entries.iter().map(|e| (e.id, e.key)).collect()
    }

    /// Cells holding at least one object.
    pub fn occupancy(&self) -> CellTree {
        let keys: Vec<u128> = self.entries.iter().map(|e| e.key).collect();
        CellTree::from_keys(self.dims(), self.depth, &keys).expect("index shape already checked")
    }

    /// Cells meeting the closed box `intervals`.
    pub fn query_tree(&self, intervals: &[(f64, f64)]) -> Result<CellTree> {
        if intervals.len() != self.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{} intervals for an index of {}",
                intervals.len(),
                self.dims()
            )));
        }
        for (dim, &(lo, hi)) in intervals.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidInterval { dim, lo, hi });
            }
        }
        let lo: Vec<f64> = intervals.iter().map(|i| i.0).collect();
        let hi: Vec<f64> = intervals.iter().map(|i| i.1).collect();
        let (cl, ch) = (self.cell_of(&self.unit(&lo).0), self.cell_of(&self.unit(&hi).0));
        CellTree::from_box(self.dims(), self.depth, &cl.into_iter().zip(ch).collect::<Vec<_>>())
    }

    /// Ids stored in the cells of `tree`, in key order.
    pub fn collect(&self, tree: &CellTree) -> Result<Vec<u32>> {
        if tree.dims() != self.dims() || tree.depth() != self.depth {
            return Err(Error::ShapeMismatch);
        }
        let mut out = Vec::new();
        let mut stack = vec![(0usize, tree.root())];
        while let Some((at, cell)) = stack.pop() {
            match cell {
                Cell::Empty => {}
                Cell::Full => self.gather(at, &mut out),
                Cell::Split(low, high) => {
                    for (side, c) in [(1, high), (0, low)] {
                        let next = self.nodes[at].child[side];
                        if next != 0 {
                            stack.push((next as usize, c));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn gather(&self, at: usize, out: &mut Vec<u32>) {
        let mut stack = vec![at];
        while let Some(n) = stack.pop() {
            out.extend_from_slice(&self.nodes[n].ids);
            for side in [1, 0] {
                if self.nodes[n].child[side] != 0 {
                    stack.push(self.nodes[n].child[side] as usize);
                }
            }
        }
    }

    /// Objects whose values lie in the closed box, ascending ids.
    pub fn query_interval(&self, intervals: &[(f64, f64)]) -> Result<Vec<u32>> {
        let candidates = self.intersect_occupancy(intervals)?;
        let mut by_id: Vec<&Entry> = self.entries.iter().collect();
        by_id.sort_by_key(|e| e.id);
        let mut out: Vec<u32> = candidates
            .into_iter()
            .filter(|id| {
                let at = by_id.partition_point(|e| e.id < *id);
                by_id[at..]
                    .iter()
                    .take_while(|e| e.id == *id)
                    .any(|e| e.raw.iter().zip(intervals).all(|(&v, &(lo, hi))| lo <= v && v <= hi))
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn intersect_occupancy(&self, intervals: &[(f64, f64)]) -> Result<Vec<u32>> {
        let q = self.query_tree(intervals)?;
        let hit = super::celltree::tree_boolean(super::celltree::BooleanOp::Intersect, &q, Some(&self.occupancy()))?;
        self.collect(&hit)
    }

    /// Objects around `key` ring by ring, from its finest cell out to the
    /// whole space. An object first met in the neighborhood of level `l`
    /// (sharing `l` leading key bits) gets similarity `1 − 2^−l`; inside a
    /// ring, nearer normalized Euclidean positions come first, then ids.
    pub fn query_nearest(&self, key: &[f64], max: usize) -> Result<SimilarityRanking> {
        if key.len() != self.dims() {
            return Err(Error::DimensionMismatch(format!("{}-d key for an index of {}", key.len(), self.dims())));
        }
        let (unit, probe, _) = self.key(key);
        let bits = self.bits();
        let mut path = vec![0usize];
        for level in 0..bits {
            let next = self.nodes[*path.last().expect("root")].child[key_bit(probe, bits, level) as usize];
            if next == 0 {
                break;
            }
            path.push(next as usize);
        }
        let position: std::collections::HashMap<u32, Vec<&Entry>> =
            self.entries.iter().fold(std::collections::HashMap::new(), |mut m, e| {
                m.entry(e.id).or_insert_with(Vec::new).push(e);
                m
            });
        let distance = |id: u32| {
            position[&id]
                .iter()
                .map(|e| e.unit.iter().zip(&unit).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        let mut out = Vec::new();
        for level in (0..path.len()).rev() {
            let mut ring = Vec::new();
            if level == bits as usize {
                ring.extend_from_slice(&self.nodes[path[level]].ids);
            } else {
                let away = !key_bit(probe, bits, level as u32) as usize;
                let sibling = self.nodes[path[level]].child[away];
                if sibling != 0 {
                    self.gather(sibling as usize, &mut ring);
                }
            }
            let similarity = 1.0 - (-(level as f64)).exp2();
            let mut scored: Vec<(f64, u32)> = ring.into_iter().map(|id| (distance(id), id)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (_, id) in scored {
                if out.len() == max {
                    return Ok(out);
                }
                out.push((id, similarity));
            }
        }
        Ok(out)
    }
}

impl KdIndex {
    /// Cell box of the neighborhood of `cell` at precision `p` bits per
    /// attribute: the precision-`p` cell holding it and its immediate
    /// neighbors, in finest cells. `p = depth + 1` is the cell itself.
    fn neighborhood(&self, cell: &[u32], p: u32) -> Vec<(u32, u32)> {
        if p > self.depth {
            return cell.iter().map(|&c| (c, c)).collect();
        }
        let shift = self.depth - p;
        let side = 1u64 << self.depth;
        cell.iter()
            .map(|&c| {
                let q = (c as u64) >> shift;
                let lo = q.saturating_sub(1) << shift;
                let hi = ((q + 2) << shift).min(side) - 1;
                (lo as u32, hi as u32)
            })
            .collect()
    }

    /// Objects ring by ring over neighborhoods centered on `key`, built as
    /// query trees of decreasing precision: the key's finest cell, then at
    /// each precision from `depth` down to 0 the cell holding the key with
    /// its immediate neighbors. Each ring is a neighborhood minus the
    /// previous one, intersected with the stored objects; its similarity is
    /// one minus the neighborhood's share of the space volume. Inside a
    /// ring, nearer normalized Euclidean positions come first, then ids.
    pub fn query_neighborhoods(&self, key: &[f64], max: usize) -> Result<SimilarityRanking> {
        if key.len() != self.dims() {
            return Err(Error::DimensionMismatch(format!("{}-d key for an index of {}", key.len(), self.dims())));
        }
        let (unit, _) = self.unit(key);
        let cell = self.cell_of(&unit);
        let occupied = self.occupancy();
        let side = (1u64 << self.depth) as f64;
        let mut distance = std::collections::HashMap::new();
        for e in &self.entries {
            let d = e.unit.iter().zip(&unit).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let best = distance.entry(e.id).or_insert(f64::INFINITY);
            *best = d.min(*best);
        }
        let mut inner = CellTree::empty(self.dims(), self.depth)?;
        let mut out = Vec::new();
        for p in (0..=self.depth + 1).rev() {
            let ranges = self.neighborhood(&cell, p);
            let hood = CellTree::from_box(self.dims(), self.depth, &ranges)?;
            let fresh = tree_boolean(BooleanOp::Diff, &hood, Some(&inner))?;
            let ring = tree_boolean(BooleanOp::Intersect, &fresh, Some(&occupied))?;
            let volume: f64 = ranges.iter().map(|&(lo, hi)| (hi - lo + 1) as f64 / side).product();
            let mut scored: Vec<(f64, u32)> = self.collect(&ring)?.into_iter().map(|id| (distance[&id], id)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            scored.dedup_by_key(|s| s.1);
            for (_, id) in scored {
                if out.len() == max {
                    return Ok(out);
                }
                out.push((id, 1.0 - volume));
            }
            inner = hood;
        }
        Ok(out)
    }
}

/// Indexes the objects of `arc` on the attributes `attrs`.
pub fn build_index(arc: &Archive, attrs: &[usize], depth: u32) -> Result<KdIndex> {
    let bounds = select(arc, attrs)?;
    let mut idx = KdIndex::new(attrs.to_vec(), bounds, depth)?;
    for id in 0..arc.object_count() as u32 {
        let all = arc.attributes(id)?;
        let raw: Vec<f64> = attrs.iter().map(|&a| all[a]).collect();
        idx.add_object(id, &raw)?;
    }
    Ok(idx)
}

/// Like [`build_index`] with every attribute replaced by its equalized
/// rank before keying.
pub fn build_index_equalized(arc: &Archive, attrs: &[usize], depth: u32) -> Result<KdIndex> {
    let bounds = select(arc, attrs)?;
    let mut idx = KdIndex::new(attrs.to_vec(), bounds, depth)?;
    let maps = attrs
        .iter()
        .map(|&a| equalize_column(&arc.column(a)).map(|(_, m)| m))
        .collect::<Result<Vec<_>>>()?;
    idx.maps = Some(maps);
    for id in 0..arc.object_count() as u32 {
        let all = arc.attributes(id)?;
        let raw: Vec<f64> = attrs.iter().map(|&a| all[a]).collect();
        idx.add_object(id, &raw)?;
    }
    Ok(idx)
}

fn select(arc: &Archive, attrs: &[usize]) -> Result<Bounds> {
    if attrs.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(&a) = attrs.iter().find(|&&a| a >= arc.schema().len()) {
        return Err(Error::SchemaMismatch(format!(
            "attribute {a} outside a schema of {}",
            arc.schema().len()
        )));
    }
    Ok(arc.bounds().select(attrs))
}

/// `kdindex v1`, `depth`, `attrs`, `bounds`, optional `map` lines, then one
/// `object <id> <values>` line per entry.
pub fn format_index(idx: &KdIndex) -> String {
    let mut out = format!("kdindex v1\ndepth {}\nattrs", idx.depth);
    for a in &idx.attrs {
        out.push_str(&format!(" {a}"));
    }
    out.push_str("\nbounds");
    for &(lo, hi) in idx.bounds.ranges() {
        out.push_str(&format!(" {} {}", fmt_f64(lo), fmt_f64(hi)));
    }
    out.push('\n');
    if let Some(maps) = &idx.maps {
        for m in maps {
            out.push_str("map");
            for &(v, r) in m.knots() {
                out.push_str(&format!(" {} {}", fmt_f64(v), fmt_f64(r)));
            }
            out.push('\n');
        }
    }
    for e in &idx.entries {
        out.push_str(&format!("object {}", e.id));
        for &v in &e.raw {
            out.push_str(&format!(" {}", fmt_f64(v)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_index(text: &str) -> Result<KdIndex> {
    const WHAT: &str = "index";
    let mut it = lines(text).peekable();
    let mut next = |key: &str| it.next().ok_or_else(|| Error::parse(WHAT, 0, format!("missing `{key}` line")));
    let (n, l) = next("kdindex")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("kdindex")?;
    t.expect("v1")?;
    t.finish()?;
    let (n, l) = next("depth")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("depth")?;
    let depth: u32 = t.parse()?;
    t.finish()?;
    let (n, l) = next("attrs")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("attrs")?;
    let attrs = t
        .rest()
        .into_iter()
        .map(|w| w.parse::<usize>().map_err(|_| Error::parse(WHAT, n, format!("bad attribute `{w}`"))))
        .collect::<Result<Vec<_>>>()?;
    let (n, l) = next("bounds")?;
    let mut t = Tokens::new(WHAT, n, l);
    t.expect("bounds")?;
    let mut ranges = Vec::new();
    for _ in 0..attrs.len() {
        ranges.push((t.float()?, t.float()?));
    }
    t.finish()?;
    let mut idx = KdIndex::new(attrs, Bounds::new(ranges)?, depth)?;
    let mut maps = Vec::new();
    for (n, l) in it {
        let mut t = Tokens::new(WHAT, n, l);
        match t.word()? {
            "map" if idx.entries.is_empty() => {
                let w = t.rest();
                if !w.len().is_multiple_of(2) {
                    return Err(Error::parse(WHAT, n, "map needs value/rank pairs"));
                }
                let vals = w
                    .iter()
                    .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| Error::parse(WHAT, n, "unreadable map knot"))?;
                maps.push(EqualizationMap::from_knots(vals.chunks(2).map(|c| (c[0], c[1])).collect())?);
                if maps.len() > idx.dims() {
                    return Err(Error::parse(WHAT, n, "more maps than attributes"));
                }
                if maps.len() == idx.dims() {
                    idx.maps = Some(std::mem::take(&mut maps));
                }
            }
            "object" if maps.is_empty() => {
                let id: u32 = t.parse()?;
                let raw = (0..idx.dims()).map(|_| t.float()).collect::<Result<Vec<_>>>()?;
                t.finish()?;
                idx.add_object(id, &raw)?;
            }
            w => return Err(Error::parse(WHAT, n, format!("unexpected `{w}` line"))),
        }
    }
    if !maps.is_empty() {
        return Err(Error::parse(WHAT, 0, "fewer maps than attributes"));
    }
    Ok(idx)
}
