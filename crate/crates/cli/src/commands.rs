use crate::config::{PipelineConfig, Ranking};
use crate::error::{read, read_text, CliError, CliResult};
use crate::pipeline::{analysis_files, analyze, parse_object_polylines, Analysis, FEATURES_FILE, POLYLINES_FILE};
use crate::store::{load_archive, save_archive, write_atomic, ArchiveLock};
use kdvision::classify::{
    derivative_stack, fit_discriminant, format_discriminant, identify, parse_discriminant, sequential_classify,
    Identification, Plane,
};
use kdvision::geom::{
    apply_point, fit_inverse, fit_transform, parse_transform, transform_polyline, ControlPointSet, PolyTransform2D,
};
use kdvision::index::{
    build_index, build_index_equalized, format_index, parse_index, Archive, Bounds, KdIndex, ObjectRecord,
};
use kdvision::moments::{parse_feature_rows, FEATURE_COLUMNS};
use kdvision::raster::pnm::{decode_pnm, encode_label_image, encode_pgm};
use kdvision::raster::GreyImage;
use kdvision::vectorize::{digitalize_polyline, Polyline};
use kdvision::Error;
use nalgebra::DMatrix;
use std::path::Path;

pub fn load_grey(path: &Path) -> CliResult<GreyImage> {
    Ok(decode_pnm(&read(path)?)?.into_grey())
}

/// Analyzes an image and writes the object, feature and polyline reports.
pub fn run_analyze(input: &Path, out_dir: &Path, cfg: &PipelineConfig) -> CliResult<Analysis> {
    let img = load_grey(input)?;
    let a = analyze(&img, cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::File { path: out_dir.to_path_buf(), source })?;
    for (name, text) in analysis_files(&a) {
        write_atomic(&out_dir.join(name), text.as_bytes())?;
    }
    Ok(a)
}

/// Histogram classification of two or more bands, or of one band and its
/// derivatives. Writes the label raster and its legend.
pub fn run_classify(bands: &[&Path], derivative: Option<u8>, out: &Path, legend: &Path) -> CliResult<u32> {
    let planes = match (bands, derivative) {
        ([one], Some(order)) => derivative_stack(&load_grey(one)?, order)?,
        (_, Some(_)) => return Err(CliError::Config("derivative planes come from a single band".into())),
        (many, None) if many.len() >= 2 => {
            many.iter().map(|p| load_grey(p).map(|g| Plane::from(&g))).collect::<CliResult<Vec<_>>>()?
        }
        _ => return Err(CliError::Config("classify needs two bands or one band with --derivative".into())),
    };
    let labels = sequential_classify(&planes)?;
    let (pgm, text) = encode_label_image(&labels)?;
    write_atomic(out, &pgm)?;
    write_atomic(legend, text.as_bytes())?;
    Ok(labels.max_label())
}

/// Registration transform named by the config, if any.
pub fn configured_transform(cfg: &PipelineConfig) -> CliResult<Option<PolyTransform2D>> {
    if let Some(p) = &cfg.transform {
        return Ok(Some(parse_transform(&read_text(p)?)?));
    }
    if let Some(p) = &cfg.control_points {
        let text = read_text(p)?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("control points", n + 1, "expected numbers"))?;
            if v.len() != 4 {
                return Err(Error::parse("control points", n + 1, "expected `p q r s`").into());
            }
            pairs.push(((v[0], v[1]), (v[2], v[3])));
        }
        return Ok(Some(fit_transform(&ControlPointSet::new(pairs)?, cfg.transform_order)?));
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogReport {
    pub image: u32,
    pub objects: Vec<u32>,
}

/// Registers an image and its objects into an archive, creating it when
/// absent. Geometry goes through the archive's registration transform.
pub fn run_catalog(
    archive: &Path,
    input: &Path,
    analysis: Option<&Path>,
    embed: bool,
    cfg: &PipelineConfig,
) -> CliResult<CatalogReport> {
    let img = load_grey(input)?;
    let objects: Vec<(Vec<f64>, Polyline)> = match analysis {
        Some(dir) => {
            let rows = parse_feature_rows(&read_text(&dir.join(FEATURES_FILE))?)?;
            let polys = parse_object_polylines(&read_text(&dir.join(POLYLINES_FILE))?)?;
            rows.iter()
                .map(|r| {
                    let pl = polys.iter().find(|p| p.0 == r.id).map(|p| p.1.clone()).ok_or_else(|| {
                        Error::SchemaMismatch(format!("object {} has features but no polyline", r.id))
                    })?;
                    Ok((r.values.to_vec(), pl))
                })
                .collect::<CliResult<_>>()?
        }
        None => analyze(&img, cfg)?
            .objects
            .into_iter()
            .map(|o| (o.features.values.to_vec(), o.polyline))
            .collect(),
    };
    let _lock = ArchiveLock::acquire(archive)?;
    let wanted = configured_transform(cfg)?;
    let mut arc = if archive.exists() {
        let arc = load_archive(archive)?;
        if arc.schema() != FEATURE_COLUMNS {
            return Err(Error::SchemaMismatch(format!("archive schema {:?}", arc.schema())).into());
        }
        if wanted.as_ref().is_some_and(|t| t != arc.direct()) {
            return Err(Error::SchemaMismatch("archive registered with another transform".into()).into());
        }
        arc
    } else {
        let direct = wanted.unwrap_or_else(PolyTransform2D::identity);
        let inverse = fit_inverse(&direct, img.width(), img.height())?;
        let schema = FEATURE_COLUMNS.map(String::from).to_vec();
        Archive::create(schema, Bounds::covering(&[], FEATURE_COLUMNS.len())?, direct, inverse)?
    };
    let name = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let image = arc.add_image(&name, embed.then(|| encode_pgm(&img)))?;
    let direct = arc.direct().clone();
    let mut ids = Vec::new();
    for (mut attributes, pl) in objects {
        let (x, y) = apply_point(&direct, attributes[0], attributes[1]);
        attributes[0] = x;
        attributes[1] = y;
        ids.push(arc.add_object(&ObjectRecord { image, attributes, polyline: transform_polyline(&direct, &pl) })?);
    }
    let rows: Vec<Vec<f64>> = (0..arc.object_count() as u32).map(|i| arc.attributes(i).map(<[f64]>::to_vec)).collect::<kdvision::Result<_>>()?;
    arc.set_bounds(Bounds::covering(&rows, FEATURE_COLUMNS.len())?)?;
    save_archive(archive, &arc)?;
    Ok(CatalogReport { image, objects: ids })
}

/// Schema positions of the configured attribute names.
pub fn attribute_positions(arc: &Archive, names: &[String]) -> CliResult<Vec<usize>> {
    if names.is_empty() {
        return Err(Error::EmptySelection.into());
    }
    names
        .iter()
        .map(|n| {
            arc.schema()
                .iter()
                .position(|s| s == n)
                .ok_or_else(|| Error::SchemaMismatch(format!("no attribute `{n}`")).into())
        })
        .collect()
}

pub fn build_configured_index(arc: &Archive, cfg: &PipelineConfig) -> CliResult<KdIndex> {
    let attrs = attribute_positions(arc, &cfg.attrs)?;
    let idx = match (&cfg.bounds, cfg.equalize) {
        (None, false) => build_index(arc, &attrs, cfg.depth)?,
        (None, true) => build_index_equalized(arc, &attrs, cfg.depth)?,
        (Some(b), _) => {
            if cfg.equalize {
                return Err(CliError::Config("bounds and equalize exclude each other".into()));
            }
            let mut idx = KdIndex::new(attrs.clone(), Bounds::new(b.clone())?, cfg.depth)?;
            for id in 0..arc.object_count() as u32 {
                let all = arc.attributes(id)?;
                idx.add_object(id, &attrs.iter().map(|&a| all[a]).collect::<Vec<_>>())?;
            }
            idx
        }
    };
    Ok(idx)
}

pub fn run_index(archive: &Path, out: &Path, cfg: &PipelineConfig) -> CliResult<KdIndex> {
    let arc = load_archive(archive)?;
    let idx = build_configured_index(&arc, cfg)?;
    write_atomic(out, format_index(&idx).as_bytes())?;
    Ok(idx)
}

#[derive(Clone, Debug, PartialEq)]
pub enum QueryMode {
    Interval(Vec<(f64, f64)>),
    Nearest(Vec<f64>),
    /// Probe image analyzed with the pipeline; its largest object is the key.
    Example(std::path::PathBuf),
}

/// One answer: object id, its image and the similarity (1 for intervals).
#[derive(Clone, Debug, PartialEq)]
pub struct QueryHit {
    pub object: u32,
    pub image: u32,
    pub similarity: f64,
}

pub fn run_query(
    archive: &Path,
    index: &Path,
    mode: &QueryMode,
    max: usize,
    extract: Option<&Path>,
    cfg: &PipelineConfig,
) -> CliResult<Vec<QueryHit>> {
    let arc = load_archive(archive)?;
    let idx = parse_index(&read_text(index)?)?;
    if idx.len() != arc.object_count() {
        return Err(Error::SchemaMismatch(format!(
            "index holds {} objects, archive {}",
            idx.len(),
            arc.object_count()
        ))
        .into());
    }
    let ranked = match mode {
        QueryMode::Interval(iv) => idx.query_interval(iv)?.into_iter().take(max).map(|id| (id, 1.0)).collect(),
        QueryMode::Nearest(key) => match cfg.ranking {
            Ranking::Centered => idx.query_neighborhoods(key, max)?,
            _ => idx.query_nearest(key, max)?,
        },
        QueryMode::Example(probe) => {
            let a = analyze(&load_grey(probe)?, cfg)?;
            let Some(obj) = a.objects.iter().max_by(|x, y| x.surface.total_cmp(&y.surface).then(y.features.id.cmp(&x.features.id))) else {
                return Ok(Vec::new());
            };
            let key: Vec<f64> = idx.attrs().iter().map(|&d| obj.features.values[d]).collect();
            match cfg.ranking {
                Ranking::Prefix => idx.query_nearest(&key, max)?,
                _ => idx.query_neighborhoods(&key, max)?,
            }
        }
    };
    let hits = ranked
        .into_iter()
        .map(|(object, similarity)| Ok(QueryHit { object, image: arc.read_object(object)?.image, similarity }))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(path) = extract {
        let ids: Vec<u32> = hits.iter().map(|h| h.object).collect();
        save_archive(path, &arc.extract(&ids)?)?;
    }
    Ok(hits)
}

pub fn format_hits(hits: &[QueryHit]) -> String {
    let mut out = String::from("# rank object image similarity\n");
    for (rank, h) in hits.iter().enumerate() {
        out.push_str(&format!("{} {} {} {}\n", rank + 1, h.object, h.image, h.similarity));
    }
    out
}

/// Objects of one image drawn over it through the inverse registration.
/// `selection` `None` draws every object of the image.
pub fn run_render(
    archive: &Path,
    image: u32,
    selection: Option<&[u32]>,
    source: Option<&Path>,
    out: &Path,
    cfg: &PipelineConfig,
) -> CliResult<GreyImage> {
    let arc = load_archive(archive)?;
    arc.image_name(image)?;
    let mut img = match source {
        Some(p) => load_grey(p)?,
        None => arc.image(image)?,
    };
    let ids: Vec<u32> = match selection {
        Some(s) => s.to_vec(),
        None => (0..arc.object_count() as u32).filter(|&i| arc.read_object(i).is_ok_and(|o| o.image == image)).collect(),
    };
    let level = cfg.overlay.unwrap_or(img.max_grey()).min(img.max_grey());
    for id in ids {
        let rec = arc.read_object(id)?;
        if rec.image != image {
            continue;
        }
        let back = transform_polyline(arc.inverse(), &rec.polyline);
        for (x, y) in draw_points(&back)? {
            if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
                img.set(x as usize, y as usize, level);
            }
        }
    }
    write_atomic(out, &encode_pgm(&img))?;
    Ok(img)
}

fn draw_points(pl: &Polyline) -> CliResult<Vec<(i64, i64)>> {
    match pl.vertices.len() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![(pl.vertices[0].0.round() as i64, pl.vertices[0].1.round() as i64)]),
        _ => Ok(digitalize_polyline(pl)?),
    }
}

/// `id v1 … vp` rows, blank lines and `#` comments skipped.
pub fn parse_table(text: &str) -> CliResult<Vec<(u32, Vec<f64>)>> {
    let mut rows: Vec<(u32, Vec<f64>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let id = words
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| Error::parse("table", n + 1, "expected an id"))?;
        let values = words
            .map(|w| w.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::parse("table", n + 1, "expected finite numbers"))?;
        if let Some(first) = rows.first() {
            if first.1.len() != values.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {id} has {} values, row {} has {}",
                    values.len(),
                    first.0,
                    first.1.len()
                ))
                .into());
            }
        }
        rows.push((id, values));
    }
    Ok(rows)
}

fn matrix(rows: &[(u32, Vec<f64>)]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, |r| r.1.len());
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i].1[j])
}

/// Fits a discriminant on a feature table and `id class` labels.
pub fn run_train(table: &Path, labels: &Path, out: &Path, thresholds: bool) -> CliResult<usize> {
    let rows = parse_table(&read_text(table)?)?;
    let named = parse_table(&read_text(labels)?)?;
    let class_of = |id: u32| -> CliResult<u32> {
        let (_, v) = named
            .iter()
            .find(|r| r.0 == id)
            .ok_or_else(|| Error::SchemaMismatch(format!("object {id} has no label")))?;
        match v.as_slice() {
            [c] if c.fract() == 0.0 && *c >= 1.0 && *c <= u32::MAX as f64 => Ok(*c as u32),
            _ => Err(Error::parse("labels", 0, format!("label of {id} must be one class number")).into()),
        }
    };
    let classes = rows.iter().map(|r| class_of(r.0)).collect::<CliResult<Vec<_>>>()?;
    let m = classes.iter().copied().max().unwrap_or(0) as usize;
    let x = matrix(&rows);
    let mut model = fit_discriminant(&x, &classes, m)?;
    if thresholds {
        model.set_thresholds(&x, &classes)?;
    }
    write_atomic(out, format_discriminant(&model).as_bytes())?;
    Ok(model.classes())
}

pub fn run_identify(model: &Path, table: &Path, thresholds: bool) -> CliResult<Vec<(u32, Identification)>> {
    let model = parse_discriminant(&read_text(model)?)?;
    parse_table(&read_text(table)?)?
        .into_iter()
        .map(|(id, v)| Ok((id, identify(&model, &v, thresholds)?)))
        .collect()
}

pub fn format_identifications(ids: &[(u32, Identification)]) -> String {
    let mut out = String::from("# object class score\n");
    for (id, r) in ids {
        let class = r.class.map_or("none".to_string(), |c| c.to_string());
        let best = r.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!("{id} {class} {best}\n"));
    }
    out
}
