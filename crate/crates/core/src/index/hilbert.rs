use crate::error::{Error, Result};

/// Rank of cell `(x, y)` along the Hilbert curve filling the
/// `2^order × 2^order` grid.
pub fn hilbert_index_2d(order: u32, x: u32, y: u32) -> u64 {
    let n = 1u64 << order;
    let (mut x, mut y) = (x as u64, y as u64);
    let mut d = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = ((x & s) > 0) as u64;
        let ry = ((y & s) > 0) as u64;
        d += s * s * ((3 * rx) ^ ry);
        rotate(n, &mut x, &mut y, rx, ry);
        s /= 2;
    }
    d
}

/// Cell at rank `d` of the planar Hilbert curve.
pub fn hilbert_cell_2d(order: u32, d: u64) -> (u32, u32) {
    let n = 1u64 << order;
    let (mut x, mut y) = (0, 0);
    let mut t = d;
    let mut s = 1;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x as u32, y as u32)
}

fn rotate(n: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = n - 1 - *x;
            *y = n - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

/// Rank along a `k`-dimensional Hilbert curve of `2^order` cells per side
/// (transposed-axes construction).
pub fn hilbert_index(order: u32, coords: &[u32]) -> u128 {
    let k = coords.len();
    if k == 0 || order == 0 {
        return 0;
    }
    if k == 1 {
        return coords[0] as u128;
    }
    let mut x: Vec<u32> = coords.to_vec();
    let m = 1u32 << (order - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..k {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..k {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    q = m;
    while q > 1 {
        if x[k - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in &mut x {
        *v ^= t;
    }
    let mut index = 0u128;
    for bit in (0..order).rev() {
        for v in &x {
            index = (index << 1) | ((v >> bit) & 1) as u128;
        }
    }
    index
}

/// Visiting order of `points` along the Hilbert curve of their bounding box
/// sampled at `2^order` cells per side; equal ranks keep input order.
pub fn hilbert_sort(points: &[Vec<f64>], order: u32) -> Result<Vec<usize>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let k = first.len();
    if let Some(p) = points.iter().find(|p| p.len() != k) {
        return Err(Error::DimensionMismatch(format!("{}-d point among {k}-d points", p.len())));
    }
    if order == 0 || order > 32 || k as u64 * order as u64 > 128 {
        return Err(Error::OutOfRange { value: order, limit: 128 / k.max(1) });
    }
    let side = (1u64 << order) as f64;
    let top = (1u64 << order) - 1;
    let ranges: Vec<(f64, f64)> = (0..k)
        .map(|d| {
            points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[d]), hi.max(p[d])))
        })
        .collect();
    let ranks: Vec<u128> = points
        .iter()
        .map(|p| {
            let cells: Vec<u32> = p
                .iter()
                .zip(&ranges)
                .map(|(&v, &(lo, hi))| {
                    if hi > lo {
                        (((v - lo) / (hi - lo) * side) as u64).min(top) as u32
                    } else {
                        0
                    }
                })
                .collect();
            if k == 2 {
                hilbert_index_2d(order, cells[0], cells[1]) as u128
            } else {
                hilbert_index(order, &cells)
            }
        })
        .collect();
    let mut perm: Vec<usize> = (0..points.len()).collect();
    perm.sort_by_key(|&i| (ranks[i], i));
    Ok(perm)
}
