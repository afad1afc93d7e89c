#![allow(dead_code)]

use kdvision::raster::pnm::encode_pgm;
use kdvision::raster::GreyImage;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const GROUND: u16 = 30;
pub const INK: u16 = 200;

/// Outline number `kind` (0..20): an elongated blob whose stretch comes
/// from `kind % 5` and whose taper along the main axis and bend across it
/// come from `kind / 5`, edged with a few shallow lobes.
pub fn outline(kind: usize, radius: f64, angle: f64, center: (f64, f64)) -> Vec<(f64, f64)> {
    let stretch = 1.2 + 0.15 * (kind % 5) as f64;
    let (taper, bend) = [(0.15, 0.1), (0.4, 0.1), (0.15, 0.4), (0.4, 0.4)][kind / 5 % 4];
    let lobes = [3.0, 4.0, 5.0][kind % 3];
    (0..96)
        .map(|i| {
            let phi = i as f64 * std::f64::consts::TAU / 96.0;
            let r = radius * (1.0 + 0.05 * (lobes * phi).cos());
            let x = r * phi.cos() * stretch;
            let y = r * phi.sin() / stretch * (1.0 + taper * phi.cos()) + bend * r * phi.cos().powi(2);
            let (s, c) = angle.sin_cos();
            (center.0 + c * x - s * y, center.1 + s * x + c * y)
        })
        .collect()
}

fn inside(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut odd = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > y) != (b.1 > y) && x < (b.0 - a.0) * (y - a.1) / (b.1 - a.1) + a.0 {
            odd = !odd;
        }
        j = i;
    }
    odd
}

/// Polygons sampled at pixel centers, ink on ground.
pub fn render(width: usize, height: usize, polys: &[Vec<(f64, f64)>]) -> GreyImage {
    let mut img = GreyImage::new(width, height, 255);
    for y in 0..height {
        for x in 0..width {
            img.set(x, y, GROUND);
        }
    }
    for p in polys {
        let (x0, x1) = p.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v.0), b.max(v.0)));
        let (y0, y1) = p.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v.1), b.max(v.1)));
        for y in (y0.max(0.0).floor() as usize)..=(y1.ceil() as usize).min(height - 1) {
            for x in (x0.max(0.0).floor() as usize)..=(x1.ceil() as usize).min(width - 1) {
                if inside(p, x as f64, y as f64) {
                    img.set(x, y, INK);
                }
            }
        }
    }
    img
}

pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> GreyImage {
    let mut img = GreyImage::new(width, height, 255);
    for y in 0..height {
        for x in 0..width {
            let on = (x0..=x1).contains(&x) && (y0..=y1).contains(&y);
            img.set(x, y, if on { INK } else { GROUND });
        }
    }
    img
}

pub fn save(dir: &Path, name: &str, img: &GreyImage) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, encode_pgm(img)).unwrap();
    p
}

pub const CELL: f64 = 96.0;
pub const GALLERY_RADIUS: f64 = 24.0;
const COLUMNS: usize = 5;

/// Catalog fixture: outline `k` at angle `0.3 k` in cell `k` of a grid of
/// 96-pixel cells, five per row.
pub fn gallery(n: usize) -> GreyImage {
    let polys: Vec<_> = (0..n).map(|k| outline(k, GALLERY_RADIUS, 0.3 * k as f64, cell_center(k))).collect();
    render(COLUMNS * CELL as usize, n.div_ceil(COLUMNS) * CELL as usize, &polys)
}

pub fn cell_center(k: usize) -> (f64, f64) {
    ((k % COLUMNS) as f64 * CELL + CELL / 2.0, (k / COLUMNS) as f64 * CELL + CELL / 2.0)
}

/// Gallery cell holding the point.
pub fn cell_of(x: f64, y: f64) -> usize {
    (y / CELL) as usize * COLUMNS + (x / CELL) as usize
}

pub fn kdvision(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdvision")).args(args).output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = kdvision(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
