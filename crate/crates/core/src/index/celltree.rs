use crate::error::{Error, Result};

/// Region of a binary space partition: nothing, everything, or two halves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Full,
    Split(Box<Cell>, Box<Cell>),
}

impl Cell {
    fn split(low: Cell, high: Cell) -> Cell {
        match (low, high) {
            (Cell::Empty, Cell::Empty) => Cell::Empty,
            (Cell::Full, Cell::Full) => Cell::Full,
            (l, h) => Cell::Split(Box::new(l), Box::new(h)),
        }
    }

    fn not(&self) -> Cell {
        match self {
            Cell::Empty => Cell::Full,
            Cell::Full => Cell::Empty,
            Cell::Split(l, h) => Cell::split(l.not(), h.not()),
        }
    }

    fn union(&self, other: &Cell) -> Cell {
        match (self, other) {
            (Cell::Full, _) | (_, Cell::Full) => Cell::Full,
            (Cell::Empty, x) | (x, Cell::Empty) => x.clone(),
            (Cell::Split(a0, a1), Cell::Split(b0, b1)) => Cell::split(a0.union(b0), a1.union(b1)),
        }
    }

    fn intersect(&self, other: &Cell) -> Cell {
        match (self, other) {
            (Cell::Empty, _) | (_, Cell::Empty) => Cell::Empty,
            (Cell::Full, x) | (x, Cell::Full) => x.clone(),
            (Cell::Split(a0, a1), Cell::Split(b0, b1)) => Cell::split(a0.intersect(b0), a1.intersect(b1)),
        }
    }

    fn exclude(&self, other: &Cell) -> Cell {
        match (self, other) {
            (Cell::Empty, x) | (x, Cell::Empty) => x.clone(),
            (Cell::Full, x) | (x, Cell::Full) => x.not(),
            (Cell::Split(a0, a1), Cell::Split(b0, b1)) => Cell::split(a0.exclude(b0), a1.exclude(b1)),
        }
    }

    fn diff(&self, other: &Cell) -> Cell {
        match (self, other) {
            (Cell::Empty, _) | (_, Cell::Full) => Cell::Empty,
            (x, Cell::Empty) => x.clone(),
            (Cell::Full, x) => x.not(),
            (Cell::Split(a0, a1), Cell::Split(b0, b1)) => Cell::split(a0.diff(b0), a1.diff(b1)),
        }
    }
}

/// Set of cells of the `2^(dims·depth)` grid addressed by interleaved keys:
/// split `l` halves dimension `l % dims`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellTree {
    dims: usize,
    depth: u32,
    root: Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BooleanOp {
    Not,
    Union,
    Intersect,
    /// Cells in exactly one operand.
    Exclude,
    /// Cells of the first operand missing from the second.
    Diff,
}

/// Largest key width, in bits, of a tree or index.
pub const MAX_KEY_BITS: u32 = 128;

pub(crate) fn check_shape(dims: usize, depth: u32) -> Result<()> {
    if dims == 0 {
        return Err(Error::EmptySelection);
    }
    let bits = dims as u64 * depth as u64;
    if depth == 0 || depth > 32 || bits > MAX_KEY_BITS as u64 {
        return Err(Error::OutOfRange { value: bits.min(u32::MAX as u64) as u32, limit: MAX_KEY_BITS as usize });
    }
    Ok(())
}

impl CellTree {
    pub fn empty(dims: usize, depth: u32) -> Result<Self> {
        check_shape(dims, depth)?;
        Ok(CellTree { dims, depth, root: Cell::Empty })
    }

    pub fn full(dims: usize, depth: u32) -> Result<Self> {
        check_shape(dims, depth)?;
        Ok(CellTree { dims, depth, root: Cell::Full })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn root(&self) -> &Cell {
        &self.root
    }

    pub fn bits(&self) -> u32 {
        self.dims as u32 * self.depth
    }

    /// Cells whose grid coordinates lie in the closed ranges.
    pub fn from_box(dims: usize, depth: u32, ranges: &[(u32, u32)]) -> Result<Self> {
        check_shape(dims, depth)?;
        if ranges.len() != dims {
            return Err(Error::ShapeMismatch);
        }
        let side = (1u64 << depth) - 1;
        let region = vec![(0u64, side); dims];
        let wanted: Vec<(u64, u64)> = ranges.iter().map(|&(a, b)| (a as u64, b as u64)).collect();
        Ok(CellTree { dims, depth, root: box_cell(&wanted, region, 0) })
    }

    /// Cells holding the given keys.
    pub fn from_keys(dims: usize, depth: u32, keys: &[u128]) -> Result<Self> {
        check_shape(dims, depth)?;
        let mut sorted = keys.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let bits = dims as u32 * depth;
        Ok(CellTree { dims, depth, root: keys_cell(&sorted, bits, 0) })
    }

    pub fn contains(&self, key: u128) -> bool {
        let bits = self.bits();
        let mut cell = &self.root;
        let mut level = 0;
        loop {
            match cell {
                Cell::Empty => return false,
                Cell::Full => return true,
                Cell::Split(low, high) => {
                    cell = if key_bit(key, bits, level) { high } else { low };
                    level += 1;
                }
            }
        }
    }

    /// Number of covered grid cells.
    pub fn cell_count(&self) -> u128 {
        fn count(c: &Cell, rest: u32) -> u128 {
            match c {
                Cell::Empty => 0,
                Cell::Full => {
                    if rest >= 128 {
                        u128::MAX
                    } else {
                        1u128 << rest
                    }
                }
                Cell::Split(l, h) => count(l, rest - 1).saturating_add(count(h, rest - 1)),
            }
        }
        count(&self.root, self.bits())
    }

    /// Every covered key in increasing order; meant for small grids.
    pub fn cells(&self) -> Vec<u128> {
        fn walk(c: &Cell, prefix: u128, rest: u32, out: &mut Vec<u128>) {
            match c {
                Cell::Empty => {}
                Cell::Full => {
                    let base = prefix << rest;
                    out.extend((0..1u128 << rest).map(|i| base | i));
                }
                Cell::Split(l, h) => {
                    walk(l, prefix << 1, rest - 1, out);
                    walk(h, (prefix << 1) | 1, rest - 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, self.bits(), &mut out);
        out
    }
}

pub(crate) fn key_bit(key: u128, bits: u32, level: u32) -> bool {
    (key >> (bits - 1 - level)) & 1 == 1
}

fn box_cell(wanted: &[(u64, u64)], mut region: Vec<(u64, u64)>, level: usize) -> Cell {
    let inside = wanted.iter().zip(&region).all(|(w, r)| w.0 <= r.0 && r.1 <= w.1);
    if inside {
        return Cell::Full;
    }
    let disjoint = wanted.iter().zip(&region).any(|(w, r)| w.1 < r.0 || r.1 < w.0);
    if disjoint {
        return Cell::Empty;
    }
    let dim = level % wanted.len();
    let (lo, hi) = region[dim];
    let mid = lo + (hi - lo) / 2;
    let mut upper = region.clone();
    region[dim] = (lo, mid);
    upper[dim] = (mid + 1, hi);
    Cell::split(box_cell(wanted, region, level + 1), box_cell(wanted, upper, level + 1))
}

fn keys_cell(sorted: &[u128], bits: u32, level: u32) -> Cell {
    if sorted.is_empty() {
        return Cell::Empty;
    }
    if level == bits {
        return Cell::Full;
    }
    let cut = sorted.partition_point(|&k| !key_bit(k, bits, level));
    Cell::split(keys_cell(&sorted[..cut], bits, level + 1), keys_cell(&sorted[cut..], bits, level + 1))
}

/// Set operation on cell trees of the same shape; `Not` ignores `b`.
pub fn tree_boolean(op: BooleanOp, a: &CellTree, b: Option<&CellTree>) -> Result<CellTree> {
    let root = match (op, b) {
        (BooleanOp::Not, _) => a.root.not(),
        (_, None) => return Err(Error::ShapeMismatch),
        (_, Some(b)) if b.dims != a.dims || b.depth != a.depth => return Err(Error::ShapeMismatch),
        (BooleanOp::Union, Some(b)) => a.root.union(&b.root),
        (BooleanOp::Intersect, Some(b)) => a.root.intersect(&b.root),
        (BooleanOp::Exclude, Some(b)) => a.root.exclude(&b.root),
        (BooleanOp::Diff, Some(b)) => a.root.diff(&b.root),
    };
    Ok(CellTree { dims: a.dims, depth: a.depth, root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn tree(keys: &[u128]) -> CellTree {
        CellTree::from_keys(2, 3, keys).unwrap()
    }

    fn set(t: &CellTree) -> BTreeSet<u128> {
        t.cells().into_iter().collect()
    }

    #[test]
    fn complement_and_idempotence() {
        let t = tree(&[0, 5, 17, 63]);
        let all = tree_boolean(BooleanOp::Union, &t, Some(&tree_boolean(BooleanOp::Not, &t, None).unwrap())).unwrap();
        assert_eq!(all, CellTree::full(2, 3).unwrap());
        assert_eq!(tree_boolean(BooleanOp::Intersect, &t, Some(&t)).unwrap(), t);
        assert_eq!(t.cell_count(), 4);
        assert!(t.contains(17) && !t.contains(18));
        assert_eq!(CellTree::full(2, 3).unwrap().cell_count(), 64);
    }

    #[test]
    fn shapes_must_agree() {
        let a = tree(&[1]);
        let b = CellTree::from_keys(2, 4, &[1]).unwrap();
        assert!(matches!(tree_boolean(BooleanOp::Union, &a, Some(&b)), Err(Error::ShapeMismatch)));
        assert!(matches!(tree_boolean(BooleanOp::Diff, &a, None), Err(Error::ShapeMismatch)));
        assert!(matches!(CellTree::empty(0, 3), Err(Error::EmptySelection)));
        assert!(CellTree::empty(8, 17).is_err());
    }

    #[test]
    fn box_cells() {
        let t = CellTree::from_box(2, 2, &[(1, 2), (0, 0)]).unwrap();
        // key bits: x1 y1 x0 y0
        let want: BTreeSet<u128> = [(1u128, 0u128), (2, 0)]
            .iter()
            .map(|&(x, y)| ((x >> 1) << 3) | ((y >> 1) << 2) | ((x & 1) << 1) | (y & 1))
            .collect();
        assert_eq!(set(&t), want);
        assert_eq!(CellTree::from_box(2, 2, &[(0, 3), (0, 3)]).unwrap(), CellTree::full(2, 2).unwrap());
    }

    fn keys() -> impl Strategy<Value = Vec<u128>> {
        prop::collection::vec(0u128..64, 0..40)
    }

    proptest! {
        #[test]
        fn operations_match_cell_sets(a in keys(), b in keys()) {
            let (ta, tb) = (tree(&a), tree(&b));
            let (sa, sb) = (set(&ta), set(&tb));
            let full: BTreeSet<u128> = (0..64).collect();
            let run = |op| set(&tree_boolean(op, &ta, Some(&tb)).unwrap());
            prop_assert_eq!(run(BooleanOp::Union), &sa | &sb);
            prop_assert_eq!(run(BooleanOp::Intersect), &sa & &sb);
            prop_assert_eq!(run(BooleanOp::Exclude), &sa ^ &sb);
            prop_assert_eq!(run(BooleanOp::Diff), &sa - &sb);
            prop_assert_eq!(set(&tree_boolean(BooleanOp::Not, &ta, None).unwrap()), &full - &sa);
        }

        #[test]
        fn de_morgan(a in keys(), b in keys()) {
            let (ta, tb) = (tree(&a), tree(&b));
            let not = |t: &CellTree| tree_boolean(BooleanOp::Not, t, None).unwrap();
            let left = not(&tree_boolean(BooleanOp::Union, &ta, Some(&tb)).unwrap());
            let right = tree_boolean(BooleanOp::Intersect, &not(&ta), Some(&not(&tb))).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn box_matches_enumeration(x0 in 0u32..8, x1 in 0u32..8, y0 in 0u32..8, y1 in 0u32..8) {
            let (xl, xh) = (x0.min(x1), x0.max(x1));
            let (yl, yh) = (y0.min(y1), y0.max(y1));
            let t = CellTree::from_box(2, 3, &[(xl, xh), (yl, yh)]).unwrap();
            for x in 0..8u128 {
                for y in 0..8u128 {
                    let mut key = 0;
                    for b in (0..3).rev() {
                        key = (key << 2) | (((x >> b) & 1) << 1) | ((y >> b) & 1);
                    }
                    let inside = (xl as u128..=xh as u128).contains(&x) && (yl as u128..=yh as u128).contains(&y);
                    prop_assert_eq!(t.contains(key), inside);
                }
            }
        }
    }
}
