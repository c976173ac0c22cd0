//! Raster types shared by every stage, image ingestion and overlay output.

use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, Rgb, RgbImage};

use crate::geometry::{bresenham, Point};
use crate::{Error, Result};

/// 8-bit single-channel image with a physical pixel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    scale: f64,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, scale: f64) -> Result<Self> {
        check_dims(width, height, pixels.len(), scale)?;
        Ok(GrayRaster {
            width,
            height,
            pixels,
            scale,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8, scale: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], scale)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// µm per pixel.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[p as usize] += 1;
        }
        h
    }

    pub fn area_um2(&self) -> f64 {
        (self.width * self.height) as f64 * self.scale * self.scale
    }
}

/// Two-phase raster: 1 is the particle (bright) phase, 0 the binder.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    bits: Vec<u8>,
    scale: f64,
}

// `scale` is always a finite positive number, so equality is reflexive.
impl Eq for GrayRaster {}
impl Eq for BinaryRaster {}
impl Eq for LabeledRaster {}

impl BinaryRaster {
    pub fn new(width: usize, height: usize, bits: Vec<u8>, scale: f64) -> Result<Self> {
        check_dims(width, height, bits.len(), scale)?;
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::param("bits", format!("value {b} is not 0 or 1")));
        }
        Ok(BinaryRaster {
            width,
            height,
            bits,
            scale,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool, scale: f64) -> Result<Self> {
        Self::new(width, height, vec![u8::from(value); width * height], scale)
    }

    /// Builds a raster from a per-pixel predicate `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, scale: f64, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(u8::from(f(x, y)));
            }
        }
        Self::new(width, height, bits, scale)
    }

    /// Parses rows of `#`/`1` (particle) and `.`/`0` (binder); whitespace is ignored.
    pub fn from_ascii(rows: &[&str], scale: f64) -> Result<Self> {
        let parsed: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| {
                r.chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| u8::from(c == '#' || c == '1'))
                    .collect()
            })
            .collect();
        let width = parsed.first().map_or(0, Vec::len);
        if parsed.iter().any(|r| r.len() != width) {
            return Err(Error::param("rows", "ragged ascii raster"));
        }
        Self::new(width, parsed.len(), parsed.concat(), scale)
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, bits: Vec<u8>, scale: f64) -> Self {
        debug_assert_eq!(bits.len(), width * height);
        BinaryRaster {
            width,
            height,
            bits,
            scale,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = u8::from(v);
    }

    /// Value at a signed coordinate; `None` outside the raster.
    pub fn at(&self, p: Point) -> Option<u8> {
        self.contains(p)
            .then(|| self.bits[p.y as usize * self.width + p.x as usize])
    }

    pub fn is_particle(&self, p: Point) -> bool {
        self.at(p) == Some(1)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn transpose(&self) -> BinaryRaster {
        let mut bits = vec![0u8; self.bits.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                bits[x * self.height + y] = self.bits[y * self.width + x];
            }
        }
        BinaryRaster::from_parts_unchecked(self.height, self.width, bits, self.scale)
    }

    /// Rotates a quarter turn counterclockwise as seen on screen: pixel
    /// `(x, y)` moves to `(y, width - 1 - x)`.
    pub fn rotate_ccw(&self) -> BinaryRaster {
        let (w, h) = (self.width, self.height);
        let mut bits = vec![0u8; self.bits.len()];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (y, w - 1 - x);
                bits[ny * h + nx] = self.bits[y * w + x];
            }
        }
        BinaryRaster::from_parts_unchecked(h, w, bits, self.scale)
    }

    /// Renders phase 1 as `hi` and phase 0 as `lo`.
    pub fn to_gray(&self, hi: u8, lo: u8) -> GrayRaster {
        let pixels = self.bits.iter().map(|&b| if b == 1 { hi } else { lo }).collect();
        GrayRaster {
            width: self.width,
            height: self.height,
            pixels,
            scale: self.scale,
        }
    }

    pub fn same_shape(&self, other: &BinaryRaster) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// Per-pixel component labels. 0 is background, `1..=count` are components.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRaster {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
    scale: f64,
}

impl LabeledRaster {
    pub(crate) fn from_parts(width: usize, height: usize, labels: Vec<u32>, count: u32, scale: f64) -> Self {
        LabeledRaster {
            width,
            height,
            labels,
            count,
            scale,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Number of components `K`.
    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Label at a signed coordinate, 0 outside the raster.
    pub fn at(&self, p: Point) -> u32 {
        if p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height {
            self.labels[p.y as usize * self.width + p.x as usize]
        } else {
            0
        }
    }
}

fn check_dims(width: usize, height: usize, len: usize, scale: f64) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    if len != width * height {
        return Err(Error::param(
            "pixels",
            format!("expected {} values for {width}x{height}, got {len}", width * height),
        ));
    }
    Ok(())
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, rounded to nearest.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Reads a PNG, JPEG or BMP file as a grayscale raster with the given scale.
pub fn load_image(path: impl AsRef<Path>, scale: f64) -> Result<GrayRaster> {
    let path = path.as_ref();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    let read_err = |source| Error::ImageRead {
        path: path.to_path_buf(),
        source,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| read_err(image::ImageError::IoError(e)))?
        .with_guessed_format()
        .map_err(|e| read_err(image::ImageError::IoError(e)))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Bmp) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let img = reader.decode().map_err(read_err)?;
    gray_from_dynamic(&img, scale)
}

pub fn gray_from_dynamic(img: &DynamicImage, scale: f64) -> Result<GrayRaster> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let pixels = if img.color().has_color() {
        img.to_rgb8().pixels().map(|p| luminance(p[0], p[1], p[2])).collect()
    } else {
        img.to_luma8().into_raw()
    };
    GrayRaster::new(w, h, pixels, scale)
}

/// Writes a raster as an 8-bit grayscale PNG.
pub fn save_gray(img: &GrayRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::GrayImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .expect("buffer length matches dimensions")
        .save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::ImageWrite {
            path: path.to_path_buf(),
            source,
        })
}

pub type Rgb8 = [u8; 3];

pub const BOUNDARY_COLOR: Rgb8 = [0, 200, 255];
pub const MARKER_COLOR: Rgb8 = [255, 0, 0];
pub const SEGMENT_COLOR: Rgb8 = [0, 255, 0];

/// One drawing primitive of an annotated overlay.
#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    /// Boundary pixels of a labeled component.
    Boundary { pixels: Vec<Point>, color: Rgb8 },
    /// A plus-shaped marker of the given arm length centered on a pixel.
    Marker { at: Point, arm: i32, color: Rgb8 },
    /// A Bresenham segment.
    Segment { from: Point, to: Point, color: Rgb8 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overlay {
    pub items: Vec<Annotation>,
}

impl Overlay {
    pub fn markers(&self) -> usize {
        self.items
            .iter()
            .filter(|a| matches!(a, Annotation::Marker { .. }))
            .count()
    }

    pub fn segments(&self) -> usize {
        self.items
            .iter()
            .filter(|a| matches!(a, Annotation::Segment { .. }))
            .count()
    }
}

/// Rasterizes `overlay` over a gray base. Pixels not covered by an
/// annotation keep their base intensity in all three channels.
pub fn render_overlay(base: &GrayRaster, overlay: &Overlay) -> RgbImage {
    let (w, h) = (base.width as u32, base.height as u32);
    let mut out = RgbImage::from_fn(w, h, |x, y| {
        let v = base.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    let mut put = |p: Point, c: Rgb8| {
        if p.x >= 0 && p.y >= 0 && (p.x as u32) < w && (p.y as u32) < h {
            out.put_pixel(p.x as u32, p.y as u32, Rgb(c));
        }
    };
    for item in &overlay.items {
        match item {
            Annotation::Boundary { pixels, color } => pixels.iter().for_each(|&p| put(p, *color)),
            Annotation::Marker { at, arm, color } => {
                for d in -arm..=*arm {
                    put(Point::new(at.x + d, at.y), *color);
                    put(Point::new(at.x, at.y + d), *color);
                }
            }
            Annotation::Segment { from, to, color } => bresenham(*from, *to).into_iter().for_each(|p| put(p, *color)),
        }
    }
    out
}

/// Writes the annotated overlay as a lossless 8-bit RGB PNG.
pub fn save_overlay(base: &GrayRaster, overlay: &Overlay, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    render_overlay(base, overlay)
        .save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::ImageWrite {
            path: path.to_path_buf(),
            source,
        })
}
