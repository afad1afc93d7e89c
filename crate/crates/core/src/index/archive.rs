//! Object archive: header, fixed-size object records, shared vertex list
//! and optional images, in one little-endian container.

use crate::error::{Error, Result};
use crate::geom::{monomials, PolyTransform2D};
use crate::raster::pnm::decode_pgm;
use crate::raster::GreyImage;
use crate::vectorize::Polyline;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"KDVARC01";
pub const VERSION: u32 = 1;
const WHAT: &str = "archive";

/// Sampling bounds `[lo, hi]` of every attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    ranges: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self> {
        for (dim, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidInterval { dim, lo, hi });
            }
        }
        Ok(Bounds { ranges })
    }

    /// Smallest bounds holding every row; flat columns get a unit width.
    pub fn covering(rows: &[Vec<f64>], dims: usize) -> Result<Self> {
        let ranges = (0..dims)
            .map(|d| {
                let (lo, hi) = rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[d]), hi.max(r[d])));
                if rows.is_empty() {
                    (0.0, 1.0)
                } else if hi > lo {
                    (lo, hi)
                } else {
                    (lo, lo + 1.0)
                }
            })
            .collect();
        Bounds::new(ranges)
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    /// `(v − lo) / (hi − lo)` clamped to `[0, 1]`, and whether it was clamped.
    pub fn normalize(&self, dim: usize, v: f64) -> (f64, bool) {
        let (lo, hi) = self.ranges[dim];
        let t = (v - lo) / (hi - lo);
        if t < 0.0 || t.is_nan() {
            (0.0, true)
        } else if t > 1.0 {
            (1.0, true)
        } else {
            (t, false)
        }
    }

    pub fn select(&self, dims: &[usize]) -> Bounds {
        Bounds { ranges: dims.iter().map(|&d| self.ranges[d]).collect() }
    }
}

/// One archived object as read back.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectRecord {
    pub image: u32,
    pub attributes: Vec<f64>,
    pub polyline: Polyline,
}

#[derive(Clone, Debug, PartialEq)]
struct ObjectEntry {
    image: u32,
    closed: bool,
    start: u64,
    count: u64,
    attributes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct ImageEntry {
    name: String,
    pgm: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    schema: Vec<String>,
    bounds: Bounds,
    direct: PolyTransform2D,
    inverse: PolyTransform2D,
    objects: Vec<ObjectEntry>,
    vertices: Vec<(f64, f64)>,
    images: Vec<ImageEntry>,
}

impl Archive {
    pub fn create(schema: Vec<String>, bounds: Bounds, direct: PolyTransform2D, inverse: PolyTransform2D) -> Result<Self> {
        if schema.len() != bounds.dims() {
            return Err(Error::SchemaMismatch(format!(
                "{} attribute names for {} bounds",
                schema.len(),
                bounds.dims()
            )));
        }
        if schema.iter().any(|n| n.is_empty() || n.chars().any(char::is_whitespace)) {
            return Err(Error::SchemaMismatch("attribute names must be non-empty words".into()));
        }
        Ok(Archive {
            schema,
            bounds,
            direct,
            inverse,
            objects: Vec::new(),
            vertices: Vec::new(),
            images: Vec::new(),
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn set_bounds(&mut self, bounds: Bounds) -> Result<()> {
        if bounds.dims() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} bounds for a schema of {}",
                bounds.dims(),
                self.schema.len()
            )));
        }
        self.bounds = bounds;
        Ok(())
    }

    pub fn direct(&self) -> &PolyTransform2D {
        &self.direct
    }

    pub fn inverse(&self) -> &PolyTransform2D {
        &self.inverse
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn add_object(&mut self, rec: &ObjectRecord) -> Result<u32> {
        if rec.attributes.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} attributes for a schema of {}",
                rec.attributes.len(),
                self.schema.len()
            )));
        }
        if rec.attributes.iter().any(|v| !v.is_finite()) {
            return Err(Error::SchemaMismatch("attributes must be finite".into()));
        }
        if self.objects.len() >= u32::MAX as usize {
            return Err(Error::IdOutOfRange { id: self.objects.len(), count: u32::MAX as usize });
        }
        self.objects.push(ObjectEntry {
            image: rec.image,
            closed: rec.polyline.closed,
            start: self.vertices.len() as u64,
            count: rec.polyline.vertices.len() as u64,
            attributes: rec.attributes.clone(),
        });
        self.vertices.extend_from_slice(&rec.polyline.vertices);
        Ok(self.objects.len() as u32 - 1)
    }

    fn entry(&self, id: u32) -> Result<&ObjectEntry> {
        self.objects.get(id as usize).ok_or(Error::IdOutOfRange {
            id: id as usize,
            count: self.objects.len(),
        })
    }

    pub fn read_object(&self, id: u32) -> Result<ObjectRecord> {
        let e = self.entry(id)?;
        Ok(ObjectRecord {
            image: e.image,
            attributes: e.attributes.clone(),
            polyline: Polyline {
                vertices: self.vertices[e.start as usize..(e.start + e.count) as usize].to_vec(),
                closed: e.closed,
            },
        })
    }

    pub fn attributes(&self, id: u32) -> Result<&[f64]> {
        Ok(&self.entry(id)?.attributes)
    }

    /// Attribute `dim` of every object, by id.
    pub fn column(&self, dim: usize) -> Vec<f64> {
        self.objects.iter().map(|o| o.attributes[dim]).collect()
    }

    /// Registers an image, optionally embedding its raster.
    pub fn add_image(&mut self, name: &str, pgm: Option<Vec<u8>>) -> Result<u32> {
        if let Some(bytes) = &pgm {
            decode_pgm(bytes)?;
        }
        self.images.push(ImageEntry { name: name.to_string(), pgm });
        Ok(self.images.len() as u32 - 1)
    }

    pub fn image_name(&self, id: u32) -> Result<&str> {
        self.images.get(id as usize).map(|i| i.name.as_str()).ok_or(Error::MissingImage(id))
    }

    pub fn image(&self, id: u32) -> Result<GreyImage> {
        match self.images.get(id as usize).and_then(|i| i.pgm.as_ref()) {
            Some(bytes) => decode_pgm(bytes),
            None => Err(Error::MissingImage(id)),
        }
    }

    /// New archive holding the listed objects, in that order, with the
    /// same header and images.
    pub fn extract(&self, ids: &[u32]) -> Result<Archive> {
        let mut out = Archive { objects: Vec::new(), vertices: Vec::new(), ..self.clone() };
        for &id in ids {
            out.add_object(&self.read_object(id)?)?;
        }
        Ok(out)
    }

    fn sections(&self) -> [Vec<u8>; 4] {
        let mut header = Vec::new();
        put_u64(&mut header, self.objects.len() as u64);
        put_u64(&mut header, self.vertices.len() as u64);
        put_u64(&mut header, self.images.len() as u64);
        put_u32(&mut header, self.schema.len() as u32);
        for (name, &(lo, hi)) in self.schema.iter().zip(self.bounds.ranges()) {
            put_str(&mut header, name);
            put_f64(&mut header, lo);
            put_f64(&mut header, hi);
        }
        for t in [&self.direct, &self.inverse] {
            header.push(t.order());
            for &c in t.a().iter().chain(t.b()) {
                put_f64(&mut header, c);
            }
        }
        let mut objects = Vec::new();
        for o in &self.objects {
            put_u32(&mut objects, o.image);
            put_u32(&mut objects, o.closed as u32);
            put_u64(&mut objects, o.start);
            put_u64(&mut objects, o.count);
            for &a in &o.attributes {
                put_f64(&mut objects, a);
            }
        }
        let mut vertices = Vec::with_capacity(16 * self.vertices.len());
        for &(x, y) in &self.vertices {
            put_f64(&mut vertices, x);
            put_f64(&mut vertices, y);
        }
        let mut images = Vec::new();
        for i in &self.images {
            put_str(&mut images, &i.name);
            match &i.pgm {
                Some(b) => {
                    put_u64(&mut images, b.len() as u64);
                    images.extend_from_slice(b);
                }
                None => put_u64(&mut images, 0),
            }
        }
        [header, objects, vertices, images]
    }

    pub fn encode(&self) -> Vec<u8> {
        let sections = self.sections();
        let mut out = Vec::from(&MAGIC[..]);
        put_u32(&mut out, VERSION);
        for s in &sections {
            put_u64(&mut out, s.len() as u64);
        }
        for s in &sections {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Archive> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err(r.err("not an archive"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let lens = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];
        let mut parts = Vec::with_capacity(4);
        for len in lens {
            parts.push(r.take_u64(len)?);
        }
        if !r.is_done() {
            return Err(r.err("trailing bytes"));
        }
        Archive::from_sections([parts[0], parts[1], parts[2], parts[3]])
    }

    fn from_sections(parts: [&[u8]; 4]) -> Result<Archive> {
        let mut h = Reader::new(parts[0]);
        let (n_obj, n_vtx, n_img) = (h.u64()?, h.u64()?, h.u64()?);
        let dims = h.u32()? as usize;
        let mut schema = Vec::new();
        let mut ranges = Vec::new();
        for _ in 0..dims {
            schema.push(h.string()?);
            ranges.push((h.f64()?, h.f64()?));
        }
        let bounds = Bounds::new(ranges)?;
        let mut transforms = Vec::new();
        for _ in 0..2 {
            let order = h.take(1)?[0];
            if !(1..=3).contains(&order) {
                return Err(h.err(format!("transform order {order}")));
            }
            let n = monomials(order).len();
            let mut c = Vec::with_capacity(2 * n);
            for _ in 0..2 * n {
                c.push(h.f64()?);
            }
            let b = c.split_off(n);
            transforms.push(PolyTransform2D::from_coefficients(order, c, b)?);
        }
        if !h.is_done() {
            return Err(h.err("trailing header bytes"));
        }
        let inverse = transforms.pop().expect("two transforms");
        let direct = transforms.pop().expect("two transforms");
        let mut arc = Archive::create(schema, bounds, direct, inverse)?;

        let record = 24 + 8 * dims as u64;
        if parts[1].len() as u64 != n_obj.saturating_mul(record) {
            return Err(Error::parse(WHAT, 0, "object section size disagrees with the header"));
        }
        if parts[2].len() as u64 != n_vtx.saturating_mul(16) {
            return Err(Error::parse(WHAT, 0, "vertex section size disagrees with the header"));
        }
        let mut o = Reader::new(parts[1]);
        let mut next = 0u64;
        for _ in 0..n_obj {
            let image = o.u32()?;
            let closed = match o.u32()? {
                0 => false,
                1 => true,
                f => return Err(o.err(format!("object flags {f}"))),
            };
            let (start, count) = (o.u64()?, o.u64()?);
            if start != next || start.checked_add(count).is_none_or(|end| end > n_vtx) {
                return Err(o.err("vertex span out of order or out of range"));
            }
            next = start + count;
            let mut attributes = Vec::with_capacity(dims);
            for _ in 0..dims {
                let a = o.f64()?;
                if !a.is_finite() {
                    return Err(o.err("non-finite attribute"));
                }
                attributes.push(a);
            }
            arc.objects.push(ObjectEntry { image, closed, start, count, attributes });
        }
        if next != n_vtx {
            return Err(Error::parse(WHAT, 0, "vertices not covered by the objects"));
        }
        let mut v = Reader::new(parts[2]);
        arc.vertices.reserve(n_vtx as usize);
        for _ in 0..n_vtx {
            arc.vertices.push((v.f64()?, v.f64()?));
        }
        let mut im = Reader::new(parts[3]);
        for _ in 0..n_img {
            let name = im.string()?;
            let len = im.u64()?;
            let pgm = if len == 0 { None } else { Some(im.take_u64(len)?.to_vec()) };
            arc.add_image(&name, pgm)?;
        }
        if !im.is_done() {
            return Err(im.err("trailing image bytes"));
        }
        Ok(arc)
    }

    /// Writes the header, objects, vertices and images sections as four
    /// files `<stem>.hdr`, `.obj`, `.vtx` and `.img` under `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        for (s, ext) in self.sections().iter().zip(EXPORT_EXTENSIONS) {
            let mut bytes = Vec::from(&MAGIC[..]);
            bytes.extend_from_slice(s);
            std::fs::write(dir.join(format!("{stem}.{ext}")), bytes)?;
        }
        Ok(())
    }

    pub fn import(dir: &Path, stem: &str) -> Result<Archive> {
        let mut files = Vec::new();
        for ext in EXPORT_EXTENSIONS {
            let bytes = std::fs::read(dir.join(format!("{stem}.{ext}")))?;
            if !bytes.starts_with(MAGIC) {
                return Err(Error::parse(WHAT, 0, format!("{stem}.{ext} is not an archive section")));
            }
            files.push(bytes);
        }
        Archive::from_sections([&files[0][8..], &files[1][8..], &files[2][8..], &files[3][8..]])
    }
}

pub const EXPORT_EXTENSIONS: [&str; 4] = ["hdr", "obj", "vtx", "img"];

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(WHAT, 0, format!("byte {}: {}", self.pos, msg.into()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_u64(&mut self, n: u64) -> Result<&'a [u8]> {
        let n = usize::try_from(n).map_err(|_| self.err("length overflow"))?;
        self.take(n)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.err("name is not UTF-8"))
    }

    fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
