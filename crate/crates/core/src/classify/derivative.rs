use super::Plane;
use crate::error::{Error, Result};
use crate::raster::GreyImage;

/// Local mean, Sobel gradient magnitude and absolute Laplacian of `img`,
/// truncated to `order + 1` planes. Borders repeat the edge pixels.
pub fn derivative_stack(img: &GreyImage, order: u8) -> Result<Vec<Plane>> {
    if order > 2 {
        return Err(Error::InvalidOrder(order));
    }
    let (w, h) = (img.width(), img.height());
    let at = |x: usize, y: usize, dx: isize, dy: isize| -> i64 {
        let cx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
        let cy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        img.get(cx, cy) as i64
    };
    let mut mean = Vec::with_capacity(w * h);
    let mut gradient = Vec::with_capacity(w * h);
    let mut laplacian = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = |dx, dy| at(x, y, dx, dy);
            let sum: i64 = (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dx, dy))).map(|(dx, dy)| p(dx, dy)).sum();
            mean.push(((sum + 4) / 9) as u32);
            let gx = p(1, -1) + 2 * p(1, 0) + p(1, 1) - p(-1, -1) - 2 * p(-1, 0) - p(-1, 1);
            let gy = p(-1, 1) + 2 * p(0, 1) + p(1, 1) - p(-1, -1) - 2 * p(0, -1) - p(1, -1);
            gradient.push(((gx * gx + gy * gy) as f64).sqrt().round() as u32);
            laplacian.push((4 * p(0, 0) - p(1, 0) - p(-1, 0) - p(0, 1) - p(0, -1)).unsigned_abs() as u32);
        }
    }
    let mut planes = vec![Plane::with_range(w, h, img.max_grey() as u32 + 1, mean)?];
    if order >= 1 {
        planes.push(Plane::new(w, h, gradient)?);
    }
    if order >= 2 {
        planes.push(Plane::new(w, h, laplacian)?);
    }
    Ok(planes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> u16) -> GreyImage {
        let data = (0..w * h).map(|i| f(i % w, i / w)).collect();
        GreyImage::from_vec(w, h, 255, data).unwrap()
    }

    /// Direct 3×3 correlation with edge replication.
    fn correlate(img: &GreyImage, k: [[i64; 3]; 3], x: usize, y: usize) -> i64 {
        let mut s = 0;
        for (j, row) in k.iter().enumerate() {
            for (i, &c) in row.iter().enumerate() {
                let cx = (x + i).saturating_sub(1).min(img.width() - 1);
                let cy = (y + j).saturating_sub(1).min(img.height() - 1);
                s += c * img.get(cx, cy) as i64;
            }
        }
        s
    }

    #[test]
    fn constant_image() {
        let planes = derivative_stack(&image(6, 5, |_, _| 77), 2).unwrap();
        assert_eq!(planes.len(), 3);
        assert!(planes[0].values().iter().all(|&v| v == 77));
        assert!(planes[1].values().iter().all(|&v| v == 0));
        assert!(planes[2].values().iter().all(|&v| v == 0));
        assert_eq!(derivative_stack(&image(2, 2, |_, _| 1), 0).unwrap().len(), 1);
        assert!(matches!(derivative_stack(&image(2, 2, |_, _| 1), 3), Err(Error::InvalidOrder(3))));
    }

    #[test]
    fn step_edge_gradient() {
        let img = image(12, 7, |x, _| if x >= 6 { 100 } else { 0 });
        let grad = &derivative_stack(&img, 1).unwrap()[1];
        let sx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
        let sy = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];
        for y in 0..7 {
            for x in 0..12 {
                let (gx, gy) = (correlate(&img, sx, x, y), correlate(&img, sy, x, y));
                assert_eq!(grad.get(x, y), ((gx * gx + gy * gy) as f64).sqrt().round() as u32);
            }
            let top = (0..12).map(|x| grad.get(x, y)).max().unwrap();
            let cols: Vec<_> = (0..12).filter(|&x| grad.get(x, y) == top).collect();
            assert_eq!(cols, vec![5, 6]);
        }
    }

    #[test]
    fn ramp_laplacian() {
        let img = image(10, 8, |x, y| (3 * x + 2 * y) as u16);
        let lap = &derivative_stack(&img, 2).unwrap()[2];
        for y in 1..7 {
            for x in 1..9 {
                assert_eq!(lap.get(x, y), 0);
            }
        }
    }
}
