use crate::config::{PipelineConfig, Polarity, Threshold};
use kdvision::boundary::{contour_stats, follow_contours, scan_transitions, Axis, Background, Way};
use kdvision::moments::{format_feature_rows, shape_features, FeatureRow};
use kdvision::raster::{compute_histogram, find_valley_threshold, GreyImage, LabelImage};
use kdvision::region::{blob_attributes, blob_mask, format_blob_table, segment_blobs, BlobImage, BlobRecord, BlobTable};
use kdvision::vectorize::{format_polyline, parse_polyline, vectorize_closed, Polyline};
use kdvision::{Error, Result};

/// A surface object with its features and outline.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzedObject {
    pub features: FeatureRow,
    pub surface: f64,
    pub polyline: Polyline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub width: usize,
    pub height: usize,
    /// `None` when the histogram has a single mode and nothing stands out.
    pub threshold: Option<u16>,
    pub blobs: BlobTable,
    pub objects: Vec<AnalyzedObject>,
}

pub const OBJECTS_FILE: &str = "objects.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const POLYLINES_FILE: &str = "polylines.txt";

/// Object mask of `img`: 1 on object pixels, 0 elsewhere.
pub fn object_labels(img: &GreyImage, cfg: &PipelineConfig) -> Result<(LabelImage, Option<u16>)> {
    let t = match cfg.threshold {
        Threshold::Fixed(t) => t,
        Threshold::Auto => match find_valley_threshold(&compute_histogram(img, 1), cfg.smooth) {
            Ok(t) => t,
            Err(Error::Unimodal) => return Ok((LabelImage::new(img.width(), img.height()), None)),
            Err(e) => return Err(e),
        },
    };
    let above = img.data().iter().filter(|&&v| v > t).count();
    let bright = match cfg.polarity {
        Polarity::Bright => true,
        Polarity::Dark => false,
        Polarity::Auto if cfg.threshold == Threshold::Auto => 2 * above <= img.data().len(),
        Polarity::Auto => true,
    };
    let data = img.data().iter().map(|&v| ((v > t) == bright) as u32).collect();
    Ok((LabelImage::from_vec(img.width(), img.height(), data)?, Some(t)))
}

/// Inner boundary of a blob: the object pixel beside every transition of
/// its largest outer cycle, in following order.
pub fn object_contour(bi: &BlobImage, rec: &BlobRecord) -> Result<Vec<(i64, i64)>> {
    let (mask, (ox, oy)) = blob_mask(bi, rec);
    let ts = scan_transitions(&mask, 0, Background::Dark)?;
    let mut cs = follow_contours(&ts)?;
    let stats = contour_stats(&ts, &mut cs);
    let outer = (0..cs.len())
        .filter(|&c| cs.kind(&ts, c) == kdvision::boundary::CycleKind::Outer)
        .max_by_key(|&c| (stats.cycles[c].surface, std::cmp::Reverse(c)))
        .ok_or(Error::BrokenContour(rec.id))?;
    let (ox, oy) = (ox as i64, oy as i64);
    let mut points: Vec<(i64, i64)> = Vec::new();
    for id in cs.members(outer) {
        let t = ts.get(id);
        let (x, y) = (t.abs as i64, t.ord as i64);
        let inside = match (ts.axis(id), t.way) {
            (Axis::Row, Way::Rising) => (x + 1, y),
            (Axis::Row, Way::Falling) => (x - 1, y),
            (Axis::Column, Way::Rising) => (x, y + 1),
            (Axis::Column, Way::Falling) => (x, y - 1),
        };
        let p = (inside.0 + ox, inside.1 + oy);
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    while points.len() > 1 && points.first() == points.last() {
        points.pop();
    }
    Ok(points)
}

/// Segments `img` and measures every surface blob.
pub fn analyze(img: &GreyImage, cfg: &PipelineConfig) -> Result<Analysis> {
    let (labels, threshold) = object_labels(img, cfg)?;
    let (bi, _) = segment_blobs(&labels, cfg.connectivity);
    let blobs = blob_attributes(&bi);
    let mut objects = Vec::new();
    for rec in blobs.blobs.iter().filter(|r| r.dimension == 2) {
        let (f, _) = shape_features(&rec.moments, rec.perimeter as f64)?;
        let row = FeatureRow::new(rec.id, &f);
        if row.values.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let contour = object_contour(&bi, rec)?;
        let polyline = if contour.len() >= 2 {
            vectorize_closed(&contour, cfg.precision)?
        } else {
            Polyline { vertices: contour.iter().map(|&(x, y)| (x as f64, y as f64)).collect(), closed: true }
        };
        objects.push(AnalyzedObject { features: row, surface: f.surface, polyline });
    }
    Ok(Analysis { width: img.width(), height: img.height(), threshold, blobs, objects })
}

/// `<id> poly …` per object.
pub fn format_object_polylines(objects: &[AnalyzedObject]) -> String {
    objects.iter().map(|o| format!("{} {}\n", o.features.id, format_polyline(&o.polyline))).collect()
}

pub fn parse_object_polylines(text: &str) -> Result<Vec<(u32, Polyline)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            let (id, rest) = l.trim().split_once(' ').ok_or_else(|| Error::parse("polylines", n + 1, "missing id"))?;
            let id = id.parse().map_err(|_| Error::parse("polylines", n + 1, format!("bad id `{id}`")))?;
            Ok((id, parse_polyline(rest)?))
        })
        .collect()
}

/// The three report files of an analysis.
pub fn analysis_files(a: &Analysis) -> [(&'static str, String); 3] {
    let rows: Vec<FeatureRow> = a.objects.iter().map(|o| o.features).collect();
    [
        (OBJECTS_FILE, format_blob_table(&a.blobs)),
        (FEATURES_FILE, format_feature_rows(&rows)),
        (POLYLINES_FILE, format_object_polylines(&a.objects)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use kdvision::raster::BINARY_MAX_GREY;

    fn disc(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> GreyImage {
        let mut img = GreyImage::new(w, h, BINARY_MAX_GREY);
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - cx).hypot(y as f64 - cy) <= r {
                    img.set(x, y, 200);
                } else {
                    img.set(x, y, 20);
                }
            }
        }
        img
    }

    #[test]
    fn contour_pixels_belong_to_the_object() {
        let img = disc(40, 40, 19.0, 20.0, 9.0);
        let cfg = PipelineConfig::default();
        let (labels, t) = object_labels(&img, &cfg).unwrap();
        assert!(t.is_some());
        let (bi, n) = segment_blobs(&labels, cfg.connectivity);
        assert_eq!(n, 1);
        let bt = blob_attributes(&bi);
        let c = object_contour(&bi, &bt.blobs[0]).unwrap();
        for &(x, y) in &c {
            assert_eq!(bi.get(x as usize, y as usize), 1);
        }
        // every object pixel with a background 4-neighbour lies on the contour
        for y in 1..39usize {
            for x in 1..39usize {
                let edge = bi.get(x, y) == 1
                    && [(1, 0), (0, 1), (-1, 0), (0, -1)]
                        .iter()
                        .any(|&(dx, dy)| bi.get((x as i64 + dx) as usize, (y as i64 + dy) as usize) == 0);
                if edge {
                    assert!(c.contains(&(x as i64, y as i64)));
                }
            }
        }
    }

    #[test]
    fn flat_image_has_no_objects() {
        let img = GreyImage::new(16, 16, 255);
        let a = analyze(&img, &PipelineConfig::default()).unwrap();
        assert_eq!(a.threshold, None);
        assert!(a.objects.is_empty());
    }

    #[test]
    fn dark_objects_on_bright_ground() {
        let mut img = disc(30, 30, 15.0, 15.0, 5.0);
        for v in img.clone().data().iter().enumerate() {
            img.set(v.0 % 30, v.0 / 30, 255 - *v.1);
        }
        let a = analyze(&img, &PipelineConfig::default()).unwrap();
        assert_eq!(a.objects.len(), 1);
        assert!((a.objects[0].features.values[0] - 15.0).abs() < 1e-9);
    }

    #[test]
    fn polylines_round_trip() {
        let a = analyze(&disc(40, 40, 20.0, 20.0, 8.0), &PipelineConfig::default()).unwrap();
        let text = format_object_polylines(&a.objects);
        let back = parse_object_polylines(&text).unwrap();
        assert_eq!(back, a.objects.iter().map(|o| (o.features.id, o.polyline.clone())).collect::<Vec<_>>());
    }
}
