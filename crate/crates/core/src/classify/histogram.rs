use super::{same_grid, Plane};
use crate::error::{Error, Result};
use crate::raster::{black, GreyImage, LabelImage, BINARY_MAX_GREY, NOT_ASSIGNED, WHITE};
use std::collections::VecDeque;

/// Class of skin chrominances in a skin model.
pub const SKIN: u32 = 1;
/// Class of every other chrominance.
pub const NON_SKIN: u32 = 2;

/// Co-occurrence counts of value couples `(u, v)` over two planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram2D {
    side_u: usize,
    side_v: usize,
    counts: Vec<u64>,
}

impl Histogram2D {
    pub fn side_u(&self) -> usize {
        self.side_u
    }

    pub fn side_v(&self) -> usize {
        self.side_v
    }

    pub fn count(&self, u: usize, v: usize) -> u64 {
        self.counts[u * self.side_v + v]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Largest number of cells a histogram or class map may hold.
const MAX_CELLS: usize = 1 << 26;

fn check_cells(side_u: usize, side_v: usize) -> Result<()> {
    match side_u.checked_mul(side_v) {
        Some(n) if n <= MAX_CELLS => Ok(()),
        _ => Err(Error::OutOfRange {
            value: side_u.max(side_v).min(u32::MAX as usize) as u32,
            limit: MAX_CELLS,
        }),
    }
}

pub fn build_histogram2d(a: &Plane, b: &Plane) -> Result<Histogram2D> {
    same_grid(a, b)?;
    let (side_u, side_v) = (a.range() as usize, b.range() as usize);
    check_cells(side_u, side_v)?;
    let mut counts = vec![0u64; side_u * side_v];
    for (&u, &v) in a.values().iter().zip(b.values()) {
        counts[u as usize * side_v + v as usize] += 1;
    }
    Ok(Histogram2D { side_u, side_v, counts })
}

/// Class label of every `(u, v)` couple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    side_u: usize,
    side_v: usize,
    n_classes: u32,
    lut: Vec<u32>,
}

impl ClassMap {
    pub fn side_u(&self) -> usize {
        self.side_u
    }

    pub fn side_v(&self) -> usize {
        self.side_v
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.lut[u * self.side_v + v]
    }

    /// Lookup table as an image with `u` along x and `v` along y.
    pub fn to_label_image(&self) -> LabelImage {
        let mut img = LabelImage::new(self.side_u, self.side_v);
        for u in 0..self.side_u {
            for v in 0..self.side_v {
                img.set(u, v, self.get(u, v));
            }
        }
        img
    }

    pub fn from_label_image(img: &LabelImage) -> Result<Self> {
        let (side_u, side_v) = (img.width(), img.height());
        let mut lut = vec![0; side_u * side_v];
        for u in 0..side_u {
            for v in 0..side_v {
                let l = img.get(u, v);
                if l == NOT_ASSIGNED {
                    return Err(Error::parse("class map", 0, format!("cell ({u},{v}) has no class")));
                }
                lut[u * side_v + v] = l;
            }
        }
        Ok(ClassMap { side_u, side_v, n_classes: img.max_label(), lut })
    }
}

const BUCKET: usize = 16;

/// Label of the nearest seed for every cell of a `side_u × side_v` grid,
/// the smallest label winning equal distances.
fn nearest_seed_fill(side_u: usize, side_v: usize, seeds: &[(usize, usize, u32)]) -> Vec<u32> {
    let (nbu, nbv) = (side_u.div_ceil(BUCKET), side_v.div_ceil(BUCKET));
    let mut buckets: Vec<Vec<(usize, usize, u32)>> = vec![Vec::new(); nbu * nbv];
    for &s in seeds {
        buckets[(s.0 / BUCKET) * nbv + s.1 / BUCKET].push(s);
    }
    let max_ring = nbu.max(nbv);
    let mut lut = vec![0; side_u * side_v];
    for u in 0..side_u {
        for v in 0..side_v {
            let (bu, bv) = ((u / BUCKET) as isize, (v / BUCKET) as isize);
            let mut best = (u64::MAX, u32::MAX);
            for r in 0..=max_ring as isize {
                for du in -r..=r {
                    for dv in -r..=r {
                        if du.abs() != r && dv.abs() != r {
                            continue;
                        }
                        let (cu, cv) = (bu + du, bv + dv);
                        if cu < 0 || cv < 0 || cu >= nbu as isize || cv >= nbv as isize {
                            continue;
                        }
                        for &(su, sv, label) in &buckets[cu as usize * nbv + cv as usize] {
                            let d2 = (su.abs_diff(u) as u64).pow(2) + (sv.abs_diff(v) as u64).pow(2);
                            best = best.min((d2, label));
                        }
                    }
                }
                let reach = (r as u64 * BUCKET as u64 + 1).pow(2);
                if best.0 < reach {
                    break;
                }
            }
            lut[u * side_v + v] = best.1;
        }
    }
    lut
}

/// 3×3 box sums of the counts, zero outside the grid.
fn box_sums(h: &Histogram2D) -> Vec<u64> {
    let (su, sv) = (h.side_u, h.side_v);
    let mut out = vec![0u64; su * sv];
    for u in 0..su {
        for v in 0..sv {
            let mut s = 0;
            for nu in u.saturating_sub(1)..=(u + 1).min(su - 1) {
                for nv in v.saturating_sub(1)..=(v + 1).min(sv - 1) {
                    s += h.counts[nu * sv + nv];
                }
            }
            out[u * sv + v] = s;
        }
    }
    out
}

/// Smallest cell of every plateau of the box-smoothed counts that no
/// neighbor exceeds, in `(u, v)` order.
fn histogram_seeds(h: &Histogram2D) -> Vec<(usize, usize)> {
    let (su, sv) = (h.side_u, h.side_v);
    let smooth = box_sums(h);
    let mut seen = vec![false; su * sv];
    let mut seeds = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..su * sv {
        if seen[start] || smooth[start] == 0 {
            continue;
        }
        let level = smooth[start];
        let mut maximum = true;
        seen[start] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            let (u, v) = (c / sv, c % sv);
            for nu in u.saturating_sub(1)..=(u + 1).min(su - 1) {
                for nv in v.saturating_sub(1)..=(v + 1).min(sv - 1) {
                    let n = nu * sv + nv;
                    if smooth[n] > level {
                        maximum = false;
                    } else if smooth[n] == level && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        if maximum {
            seeds.push((start / sv, start % sv));
        }
    }
    seeds
}

/// Seeds classes at the maxima of the smoothed histogram and gives every
/// cell the class of its nearest seed.
pub fn classify_histogram(h: &Histogram2D) -> Result<ClassMap> {
    if h.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let seeds: Vec<_> = histogram_seeds(h)
        .into_iter()
        .zip(1..)
        .map(|((u, v), l)| (u, v, l))
        .collect();
    Ok(ClassMap {
        side_u: h.side_u,
        side_v: h.side_v,
        n_classes: seeds.len() as u32,
        lut: nearest_seed_fill(h.side_u, h.side_v, &seeds),
    })
}

pub fn relabel_pair(a: &Plane, b: &Plane, cm: &ClassMap) -> Result<LabelImage> {
    same_grid(a, b)?;
    let mut data = Vec::with_capacity(a.values().len());
    for (&u, &v) in a.values().iter().zip(b.values()) {
        if u as usize >= cm.side_u {
            return Err(Error::OutOfRange { value: u, limit: cm.side_u });
        }
        if v as usize >= cm.side_v {
            return Err(Error::OutOfRange { value: v, limit: cm.side_v });
        }
        data.push(cm.get(u as usize, v as usize));
    }
    LabelImage::from_vec(a.width(), a.height(), data)
}

fn classify_pair(a: &Plane, b: &Plane) -> Result<LabelImage> {
    let cm = classify_histogram(&build_histogram2d(a, b)?)?;
    relabel_pair(a, b, &cm)
}

/// Classifies the first two bands, then the running labels against each
/// further band.
pub fn sequential_classify(bands: &[Plane]) -> Result<LabelImage> {
    if bands.len() < 2 {
        return Err(Error::TooFewPoints { got: bands.len(), need: 2 });
    }
    let mut labels = classify_pair(&bands[0], &bands[1])?;
    for band in &bands[2..] {
        labels = classify_pair(&Plane::from(&labels), band)?;
    }
    Ok(labels)
}

/// Two-class chrominance model: couples under the masks vote skin, the
/// others vote non-skin, ties go to skin and unvoted couples take the
/// class of the nearest voted one.
pub fn skin_calibrate(views: &[(&Plane, &Plane, &GreyImage)]) -> Result<ClassMap> {
    if views.is_empty() {
        return Err(Error::EmptyList);
    }
    let side_u = views.iter().map(|v| v.0.range() as usize).max().unwrap_or(1);
    let side_v = views.iter().map(|v| v.1.range() as usize).max().unwrap_or(1);
    check_cells(side_u, side_v)?;
    let mut skin = vec![0u64; side_u * side_v];
    let mut other = vec![0u64; side_u * side_v];
    for (i, &(u, v, mask)) in views.iter().enumerate() {
        same_grid(u, v)?;
        if mask.width() != u.width() || mask.height() != u.height() {
            return Err(Error::DimensionMismatch(format!("mask {i} does not match its planes")));
        }
        if mask.data().iter().all(|&m| m == WHITE) {
            return Err(Error::EmptyMask(i));
        }
        for ((&a, &b), &m) in u.values().iter().zip(v.values()).zip(mask.data()) {
            let cell = a as usize * side_v + b as usize;
            if m != WHITE {
                skin[cell] += 1;
            } else {
                other[cell] += 1;
            }
        }
    }
    let voted: Vec<_> = (0..side_u * side_v)
        .filter(|&c| skin[c] + other[c] > 0)
        .map(|c| (c / side_v, c % side_v, if skin[c] >= other[c] { SKIN } else { NON_SKIN }))
        .collect();
    Ok(ClassMap {
        side_u,
        side_v,
        n_classes: 2,
        lut: nearest_seed_fill(side_u, side_v, &voted),
    })
}

/// Binary mask of the pixels whose chrominance the model calls skin.
pub fn skin_detect(u: &Plane, v: &Plane, model: &ClassMap) -> Result<GreyImage> {
    let labels = relabel_pair(u, v, model)?;
    let data = labels
        .data()
        .iter()
        .map(|&l| if l == SKIN { black(BINARY_MAX_GREY) } else { WHITE })
        .collect();
    GreyImage::from_vec(u.width(), u.height(), BINARY_MAX_GREY, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn plane(w: usize, h: usize, range: u32, values: Vec<u32>) -> Plane {
        Plane::with_range(w, h, range, values).unwrap()
    }

    fn brute_nearest(u: usize, v: usize, seeds: &[(usize, usize, u32)]) -> u32 {
        let mut best = (f64::INFINITY, 0);
        for &(su, sv, l) in seeds {
            let d = ((su as f64 - u as f64).powi(2) + (sv as f64 - v as f64).powi(2)).sqrt();
            if d < best.0 || (d == best.0 && l < best.1) {
                best = (d, l);
            }
        }
        best.1
    }

    #[test]
    fn histogram_counts() {
        let a = plane(3, 2, 8, vec![1, 2, 3, 4, 5, 6]);
        let h = build_histogram2d(&a, &a).unwrap();
        for u in 0..8 {
            for v in 0..8 {
                assert_eq!(h.count(u, v) > 0, u == v && (1..=6).contains(&u));
            }
        }
        let h = build_histogram2d(&plane(4, 4, 8, vec![3; 16]), &plane(4, 4, 8, vec![5; 16])).unwrap();
        assert_eq!(h.count(3, 5), 16);
        assert_eq!(h.total(), 16);
        assert!(matches!(
            build_histogram2d(&plane(2, 2, 8, vec![0; 4]), &plane(4, 1, 8, vec![0; 4])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            classify_histogram(&build_histogram2d(&plane(0, 0, 4, vec![]), &plane(0, 0, 4, vec![])).unwrap()),
            Err(Error::EmptyHistogram)
        ));
    }

    #[test]
    fn two_masses_split_by_bisector() {
        let mut a = vec![50; 40];
        let mut b = vec![50; 40];
        for i in 20..40 {
            a[i] = 200;
            b[i] = 200;
        }
        let h = build_histogram2d(&plane(8, 5, 256, a), &plane(8, 5, 256, b)).unwrap();
        let cm = classify_histogram(&h).unwrap();
        assert_eq!(cm.n_classes(), 2);
        // each mass spreads into a 3x3 plateau seeded at its smallest cell
        let seeds = [(49, 49, 1), (199, 199, 2)];
        for u in 0..256 {
            for v in 0..256 {
                assert_eq!(cm.get(u, v), brute_nearest(u, v, &seeds), "({u},{v})");
            }
        }
        assert_eq!(cm.get(50, 50), 1);
        assert_eq!(cm.get(200, 200), 2);
        assert_eq!(cm.get(0, 240), 1);
        assert_eq!(cm.get(0, 255), 2);
    }

    #[test]
    fn single_mass_and_plateau() {
        let h = build_histogram2d(&plane(3, 3, 10, vec![4; 9]), &plane(3, 3, 10, vec![6; 9])).unwrap();
        let cm = classify_histogram(&h).unwrap();
        assert_eq!(cm.n_classes(), 1);
        assert!((0..10).all(|u| (0..10).all(|v| cm.get(u, v) == 1)));
        // a 1x4 run of equal counts smooths to a single plateau maximum
        let a = plane(4, 1, 20, vec![10, 10, 10, 10]);
        let b = plane(4, 1, 20, vec![3, 4, 5, 6]);
        let h = build_histogram2d(&a, &b).unwrap();
        assert_eq!(histogram_seeds(&h), vec![(9, 4)]);
    }

    #[test]
    fn relabel_and_ranges() {
        let a = plane(2, 2, 4, vec![0, 1, 2, 3]);
        let h = build_histogram2d(&a, &a).unwrap();
        let cm = classify_histogram(&h).unwrap();
        assert_eq!(cm.n_classes(), 1);
        assert!(relabel_pair(&a, &a, &cm).unwrap().data().iter().all(|&l| l == 1));
        let wide = plane(2, 2, 9, vec![0, 1, 8, 3]);
        assert!(matches!(relabel_pair(&wide, &a, &cm), Err(Error::OutOfRange { value: 8, limit: 4 })));
        let c = plane(2, 2, 4, vec![2; 4]);
        let labels = relabel_pair(&c, &c, &cm).unwrap();
        assert!(labels.data().iter().all(|&l| l == labels.data()[0]));
        let img = cm.to_label_image();
        assert_eq!(ClassMap::from_label_image(&img).unwrap(), cm);
    }

    fn clusters(centers: &[[f64; 3]], n: usize, sigma: f64, seed: u64) -> (Vec<Plane>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut bands = vec![Vec::new(); 3];
        let mut truth = Vec::new();
        for _ in 0..n {
            let k = rng.random_range(0..centers.len());
            truth.push(k);
            for (d, band) in bands.iter_mut().enumerate() {
                band.push((centers[k][d] + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u32);
            }
        }
        (bands.into_iter().map(|b| plane(n, 1, 256, b)).collect(), truth)
    }

    /// Share of pixels whose label agrees with the majority label of their
    /// generating cluster.
    fn agreement(labels: &LabelImage, truth: &[usize], k: usize) -> f64 {
        let mut hits = 0;
        for c in 0..k {
            let mut votes = std::collections::HashMap::new();
            for (i, &t) in truth.iter().enumerate() {
                if t == c {
                    *votes.entry(labels.data()[i]).or_insert(0) += 1;
                }
            }
            hits += votes.values().max().copied().unwrap_or(0);
        }
        hits as f64 / truth.len() as f64
    }

    #[test]
    fn two_cluster_relabel() {
        let (bands, truth) = clusters(&[[60.0, 70.0, 0.0], [180.0, 170.0, 0.0]], 4000, 2.0, 3);
        let labels = sequential_classify(&bands[..2]).unwrap();
        let cm = classify_histogram(&build_histogram2d(&bands[0], &bands[1]).unwrap()).unwrap();
        assert_eq!(labels, relabel_pair(&bands[0], &bands[1], &cm).unwrap());
        assert!(agreement(&labels, &truth, 2) >= 0.99);
    }

    #[test]
    fn three_band_clusters() {
        let (bands, truth) = clusters(&[[50.0, 50.0, 50.0], [50.0, 50.0, 200.0], [200.0, 120.0, 60.0]], 6000, 2.0, 5);
        let labels = sequential_classify(&bands).unwrap();
        assert!(agreement(&labels, &truth, 3) >= 0.95);
        assert!(matches!(sequential_classify(&bands[..1]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn repeated_bands_keep_partition() {
        let (bands, _) = clusters(&[[40.0, 40.0, 0.0], [120.0, 200.0, 0.0]], 3000, 2.0, 9);
        let two = sequential_classify(&bands[..2]).unwrap();
        let four = sequential_classify(&[bands[0].clone(), bands[1].clone(), bands[0].clone(), bands[1].clone()]).unwrap();
        let mut map = std::collections::HashMap::new();
        for (&a, &b) in two.data().iter().zip(four.data()) {
            assert_eq!(*map.entry(a).or_insert(b), b);
        }
        let mut back = std::collections::HashMap::new();
        for (&a, &b) in two.data().iter().zip(four.data()) {
            assert_eq!(*back.entry(b).or_insert(a), a);
        }
    }

    fn chroma_view(seed: u64, center: (f64, f64)) -> (Plane, Plane, GreyImage) {
        let (w, h) = (40, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 3.0).unwrap();
        let mut u = Vec::new();
        let mut v = Vec::new();
        let mut mask = GreyImage::new(w, h, BINARY_MAX_GREY);
        for y in 0..h {
            for x in 0..w {
                let inside = (10..30).contains(&x) && (10..30).contains(&y);
                let c = if inside { center } else { (60.0, 190.0) };
                u.push((c.0 + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u32);
                v.push((c.1 + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u32);
                if inside {
                    mask.set(x, y, black(BINARY_MAX_GREY));
                }
            }
        }
        (plane(w, h, 256, u), plane(w, h, 256, v), mask)
    }

    #[test]
    fn skin_self_consistency() {
        let (u, v, mask) = chroma_view(1, (150.0, 110.0));
        let model = skin_calibrate(&[(&u, &v, &mask)]).unwrap();
        let detected = skin_detect(&u, &v, &model).unwrap();
        let inside: Vec<_> = (0..mask.data().len()).filter(|&i| mask.data()[i] != WHITE).collect();
        let hits = inside.iter().filter(|&&i| detected.data()[i] != WHITE).count();
        assert!(hits as f64 >= 0.99 * inside.len() as f64);
        // chrominances far from both calibrated clusters but nearer the background
        let far = plane(2, 1, 256, vec![20, 25]);
        let far_v = plane(2, 1, 256, vec![230, 235]);
        assert!(skin_detect(&far, &far_v, &model).unwrap().data().iter().all(|&p| p == WHITE));
    }

    #[test]
    fn skin_only_calibration() {
        let u = plane(2, 2, 16, vec![3, 4, 5, 6]);
        let mut mask = GreyImage::new(2, 2, BINARY_MAX_GREY);
        for y in 0..2 {
            for x in 0..2 {
                mask.set(x, y, black(BINARY_MAX_GREY));
            }
        }
        let model = skin_calibrate(&[(&u, &u, &mask)]).unwrap();
        assert!((0..16).all(|a| (0..16).all(|b| model.get(a, b) == SKIN)));
        let empty = GreyImage::new(2, 2, BINARY_MAX_GREY);
        assert!(matches!(skin_calibrate(&[(&u, &u, &empty)]), Err(Error::EmptyMask(0))));
    }

    proptest! {
        #[test]
        fn histogram_total_is_pixel_count(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<u32> = (0..w * h).map(|_| rng.random_range(0..16)).collect();
            let b: Vec<u32> = (0..w * h).map(|_| rng.random_range(0..16)).collect();
            let hist = build_histogram2d(&plane(w, h, 16, a.clone()), &plane(w, h, 16, b.clone())).unwrap();
            prop_assert_eq!(hist.total(), (w * h) as u64);
            for u in 0..16 {
                for v in 0..16 {
                    let recount = a.iter().zip(&b).filter(|&(&x, &y)| x == u && y == v).count() as u64;
                    prop_assert_eq!(hist.count(u as usize, v as usize), recount);
                }
            }
        }

        #[test]
        fn labels_partition_and_seeds_keep_their_label(seed in any::<u64>(), n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..40)).collect();
            let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..40)).collect();
            let hist = build_histogram2d(&plane(n, 1, 40, a), &plane(n, 1, 40, b)).unwrap();
            let cm = classify_histogram(&hist).unwrap();
            let seeds: Vec<_> = histogram_seeds(&hist).into_iter().zip(1..).map(|((u, v), l)| (u, v, l)).collect();
            prop_assert_eq!(cm.n_classes() as usize, seeds.len());
            for u in 0..40 {
                for v in 0..40 {
                    prop_assert_eq!(cm.get(u, v), brute_nearest(u, v, &seeds));
                }
            }
            for &(u, v, l) in &seeds {
                prop_assert_eq!(cm.get(u, v), l);
            }
        }
    }
}
