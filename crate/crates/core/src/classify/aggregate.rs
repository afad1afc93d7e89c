use crate::error::{Error, Result};
use crate::moments::{center_moments, principal_frame, RawMoments, ShapeFeatures};

/// Region of the aggregation: an input leaf or the union of two nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationNode {
    pub leaf: Option<u32>,
    pub children: Option<(usize, usize)>,
    pub moments: RawMoments,
    pub features: ShapeFeatures,
}

/// One union, made inside a quadrant at `depth` of the gravity-center tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub node: usize,
    pub depth: usize,
}

/// Leaves first, then the merged nodes in merge order; the last node is the
/// root.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationTree {
    pub nodes: Vec<AggregationNode>,
    pub merges: Vec<Merge>,
}

impl AggregationTree {
    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Features of every merged node, deepest unions first.
    pub fn feature_series(&self) -> Vec<ShapeFeatures> {
        self.merges.iter().map(|m| self.nodes[m.node].features).collect()
    }

    /// Leaf ids under `node`.
    pub fn leaves_of(&self, node: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match (self.nodes[n].leaf, self.nodes[n].children) {
                (Some(id), _) => out.push(id),
                (None, Some((a, b))) => stack.extend([b, a]),
                (None, None) => {}
            }
        }
        out
    }
}

/// Depth at which quadrant subdivision stops for coincident centers.
const MAX_DEPTH: usize = 48;

struct Quadrant {
    depth: usize,
    leaves: Vec<usize>,
    children: Vec<usize>,
}

fn subdivide(
    arena: &mut Vec<Quadrant>,
    centers: &[(f64, f64)],
    items: Vec<usize>,
    origin: (f64, f64),
    side: f64,
    depth: usize,
) -> usize {
    let slot = arena.len();
    arena.push(Quadrant { depth, leaves: Vec::new(), children: Vec::new() });
    if items.len() <= 1 || depth == MAX_DEPTH || side == 0.0 {
        arena[slot].leaves = items;
        return slot;
    }
    let half = side / 2.0;
    let mid = (origin.0 + half, origin.1 + half);
    let mut parts: [Vec<usize>; 4] = Default::default();
    for i in items {
        let (x, y) = centers[i];
        parts[(y >= mid.1) as usize * 2 + (x >= mid.0) as usize].push(i);
    }
    for (q, part) in parts.into_iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        let o = (
            if q & 1 == 1 { mid.0 } else { origin.0 },
            if q & 2 == 2 { mid.1 } else { origin.1 },
        );
        let child = subdivide(arena, centers, part, o, half, depth + 1);
        arena[slot].children.push(child);
    }
    slot
}

fn features_of(m: &RawMoments) -> Result<ShapeFeatures> {
    Ok(principal_frame(&center_moments(m)?))
}

fn gravity(m: &RawMoments) -> (f64, f64) {
    (m.mx as f64 / m.m0 as f64, m.my as f64 / m.m0 as f64)
}

/// Merges regions bottom-up along a quad-tree of their gravity centers:
/// inside each quadrant, from the deepest, the two nearest regions are
/// united until one remains. Moments are summed before any centering.
pub fn aggregate_regions(leaves: &[(u32, RawMoments)]) -> Result<AggregationTree> {
    if leaves.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut nodes = Vec::with_capacity(2 * leaves.len());
    for &(id, m) in leaves {
        if m.m0 <= 0 {
            return Err(Error::EmptyObject);
        }
        nodes.push(AggregationNode { leaf: Some(id), children: None, moments: m, features: features_of(&m)? });
    }
    let centers: Vec<(f64, f64)> = leaves.iter().map(|(_, m)| gravity(m)).collect();
    let (x0, x1, y0, y1) = centers.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    // the far edges must fall strictly inside the square
    let side = (x1 - x0).max(y1 - y0) * (1.0 + 1e-12);
    let mut arena = Vec::new();
    subdivide(&mut arena, &centers, (0..leaves.len()).collect(), (x0, y0), side, 0);

    let mut order: Vec<usize> = (0..arena.len()).collect();
    order.sort_by_key(|&q| std::cmp::Reverse(arena[q].depth));
    let mut result = vec![usize::MAX; arena.len()];
    let mut merges = Vec::new();
    for q in order {
        let mut items: Vec<usize> = arena[q].leaves.clone();
        items.extend(arena[q].children.iter().map(|&c| result[c]));
        while items.len() > 1 {
            let mut best = (f64::INFINITY, 0, 1);
            for i in 0..items.len() {
                let gi = gravity(&nodes[items[i]].moments);
                for j in i + 1..items.len() {
                    let gj = gravity(&nodes[items[j]].moments);
                    let d = (gi.0 - gj.0).hypot(gi.1 - gj.1);
                    if d < best.0 {
                        best = (d, i, j);
                    }
                }
            }
            let (_, i, j) = best;
            let (left, right) = (items[i], items[j]);
            let moments = nodes[left].moments + nodes[right].moments;
            let node = nodes.len();
            nodes.push(AggregationNode {
                leaf: None,
                children: Some((left, right)),
                moments,
                features: features_of(&moments)?,
            });
            merges.push(Merge { left, right, node, depth: arena[q].depth });
            items.remove(j);
            items[i] = node;
        }
        result[q] = items[0];
    }
    Ok(AggregationTree { nodes, merges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(x: i64, y: i64, r: i64) -> RawMoments {
        RawMoments::from_pixels((x..x + r).flat_map(|px| (y..y + r).map(move |py| (px, py))))
    }

    #[test]
    fn single_leaf() {
        let m = square(3, 4, 2);
        let t = aggregate_regions(&[(7, m)]).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(t.merges.is_empty());
        assert_eq!(t.nodes[0].features, features_of(&m).unwrap());
        assert_eq!(t.leaves_of(t.root()), vec![7]);
        assert!(matches!(aggregate_regions(&[]), Err(Error::EmptyList)));
        assert!(matches!(aggregate_regions(&[(1, RawMoments::default())]), Err(Error::EmptyObject)));
    }

    #[test]
    fn two_leaves_weighted_center() {
        let (a, b) = (square(0, 0, 2), square(10, 4, 4));
        let t = aggregate_regions(&[(1, a), (2, b)]).unwrap();
        let root = &t.nodes[t.root()];
        assert_eq!(root.moments, a + b);
        let want_x = (4.0 * 0.5 + 16.0 * 11.5) / 20.0;
        let want_y = (4.0 * 0.5 + 16.0 * 5.5) / 20.0;
        assert!((root.features.xg - want_x).abs() < 1e-12 && (root.features.yg - want_y).abs() < 1e-12);
    }

    /// Deepest level at which both centers share a quadrant of the square.
    fn shared_depth(a: (f64, f64), b: (f64, f64), origin: (f64, f64), side: f64) -> usize {
        let (mut o, mut s) = (origin, side);
        for depth in 0..MAX_DEPTH {
            let h = s / 2.0;
            let qa = (a.0 >= o.0 + h, a.1 >= o.1 + h);
            if qa != (b.0 >= o.0 + h, b.1 >= o.1 + h) {
                return depth;
            }
            o = (if qa.0 { o.0 + h } else { o.0 }, if qa.1 { o.1 + h } else { o.1 });
            s = h;
        }
        MAX_DEPTH
    }

    fn oracle_first_depth(leaves: &[(u32, RawMoments)]) -> usize {
        let c: Vec<_> = leaves.iter().map(|(_, m)| gravity(m)).collect();
        let x0 = c.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let y0 = c.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let x1 = c.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y1 = c.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let side = (x1 - x0).max(y1 - y0) * (1.0 + 1e-12);
        let mut best = 0;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                best = best.max(shared_depth(c[i], c[j], (x0, y0), side));
            }
        }
        best
    }

    #[test]
    fn cluster_merges_first() {
        let leaves = [
            (1, square(100, 100, 3)),
            (2, square(104, 101, 3)),
            (3, square(101, 105, 3)),
            (4, square(400, 380, 5)),
        ];
        let t = aggregate_regions(&leaves).unwrap();
        assert_eq!(t.merges.len(), 3);
        for m in &t.merges[..2] {
            assert!(!t.leaves_of(m.node).contains(&4));
        }
        assert_eq!(t.merges[0].depth, oracle_first_depth(&leaves));
        let mut ids = t.leaves_of(t.root());
        ids.sort();
        assert_eq!(ids, vec![1, 2, 3, 4]);
        assert_eq!(t.feature_series().len(), 3);
    }

    proptest! {
        #[test]
        fn moments_add_up(spots in prop::collection::vec((0i64..200, 0i64..200, 1i64..4), 1..12)) {
            let leaves: Vec<_> = spots.iter().enumerate().map(|(i, &(x, y, r))| (i as u32 + 1, square(x, y, r))).collect();
            let t = aggregate_regions(&leaves).unwrap();
            prop_assert_eq!(t.merges.len(), leaves.len() - 1);
            for (n, node) in t.nodes.iter().enumerate() {
                let sum = t.leaves_of(n).iter().fold(RawMoments::default(), |acc, &id| acc + leaves[id as usize - 1].1);
                prop_assert_eq!(node.moments, sum);
            }
            let mut ids = t.leaves_of(t.root());
            ids.sort();
            prop_assert_eq!(ids, (1..=leaves.len() as u32).collect::<Vec<_>>());
            if let Some(first) = t.merges.first() {
                prop_assert!(t.nodes[first.left].leaf.is_some() && t.nodes[first.right].leaf.is_some());
                prop_assert_eq!(first.depth, oracle_first_depth(&leaves));
            }
            prop_assert!(t.merges.windows(2).all(|w| w[0].depth >= w[1].depth));
        }
    }
}
