//! 8-bit rasters shared by the data, model and metrics code, plus their PNG
//! encodings: grayscale images as 8-bit gray PNG, label masks as 8-bit
//! paletted PNG whose indices are the class ids.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Number of segmentation classes.
pub const NUM_CLASSES: usize = 3;
pub const BACKGROUND: u8 = 0;
pub const CONNECTED: u8 = 1;
pub const NON_CONNECTED: u8 = 2;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "connected", "non_connected"];

/// Palette used for mask PNGs: black, red (perfused), white (not perfused).
const MASK_PALETTE: [u8; 9] = [0, 0, 0, 220, 40, 40, 255, 255, 255];

/// Row-major H×W raster of bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// 8-bit grayscale image.
pub type GrayImage = Raster;

/// Per-pixel class labels in {0, 1, 2} (or a binary 0/1 raster).
pub type LabelMask = Raster;

impl Raster {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0)
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Raster { height, width, data: vec![value; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                "raster::from_vec",
                format!("{} bytes for a {height}x{width} raster", data.len()),
            ));
        }
        Ok(Raster { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    /// Binary raster with 1 where `self == class`.
    pub fn one_vs_rest(&self, class: u8) -> Raster {
        Raster {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| u8::from(v == class)).collect(),
        }
    }

    pub fn count(&self, value: u8) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }

    /// Per-class pixel counts for labels `0..NUM_CLASSES`.
    pub fn class_counts(&self) -> [u64; NUM_CLASSES] {
        let mut counts = [0u64; NUM_CLASSES];
        for &v in &self.data {
            if let Some(c) = counts.get_mut(v as usize) {
                *c += 1;
            }
        }
        counts
    }

    pub fn flip_horizontal(&self) -> Raster {
        let mut out = self.clone();
        for row in 0..self.height {
            let line = &mut out.data[row * self.width..(row + 1) * self.width];
            line.reverse();
        }
        out
    }

    pub fn flip_vertical(&self) -> Raster {
        let mut out = Raster::new(self.height, self.width);
        for row in 0..self.height {
            let src = &self.data[row * self.width..(row + 1) * self.width];
            let dst = self.height - 1 - row;
            out.data[dst * self.width..(dst + 1) * self.width].copy_from_slice(src);
        }
        out
    }

    /// Copy of the `h×w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Raster> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::shape(
                "raster::crop",
                format!("window {h}x{w} at ({top},{left}) exceeds {}x{}", self.height, self.width),
            ));
        }
        let mut data = Vec::with_capacity(h * w);
        for row in top..top + h {
            data.extend_from_slice(&self.data[row * self.width + left..row * self.width + left + w]);
        }
        Ok(Raster { height: h, width: w, data })
    }

    /// Nearest-neighbour resize sampling source pixel centres; never blends
    /// values, so it is safe for label masks.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Raster {
        let mut out = Raster::new(height, width);
        for r in 0..height {
            let sr = ((r as f64 + 0.5) * self.height as f64 / height as f64).floor() as usize;
            let sr = sr.min(self.height - 1);
            for c in 0..width {
                let sc = ((c as f64 + 0.5) * self.width as f64 / width as f64).floor() as usize;
                out.data[r * width + c] = self.data[sr * self.width + sc.min(self.width - 1)];
            }
        }
        out
    }

    /// Bilinear resize (half-pixel centres), rounded back to bytes.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Raster {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let mut out = Raster::new(height, width);
        for r in 0..height {
            let fy = ((r as f64 + 0.5) * sy - 0.5).max(0.0);
            let y0 = (fy.floor() as usize).min(self.height - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let ly = fy - y0 as f64;
            for c in 0..width {
                let fx = ((c as f64 + 0.5) * sx - 0.5).max(0.0);
                let x0 = (fx.floor() as usize).min(self.width - 1);
                let x1 = (x0 + 1).min(self.width - 1);
                let lx = fx - x0 as f64;
                let v = |y: usize, x: usize| f64::from(self.data[y * self.width + x]);
                let top = v(y0, x0) * (1.0 - lx) + v(y0, x1) * lx;
                let bottom = v(y1, x0) * (1.0 - lx) + v(y1, x1) * lx;
                let value = top * (1.0 - ly) + bottom * ly;
                out.data[r * width + c] = value.round().clamp(0.0, 255.0) as u8;
            }
        }
        out
    }
}

fn create(op: &'static str, path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(op, parent, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(op, path, e))
}

fn encode(op: &'static str, path: &Path, raster: &Raster, palette: Option<&[u8]>) -> Result<()> {
    let writer = create(op, path)?;
    let mut encoder = png::Encoder::new(writer, raster.width as u32, raster.height as u32);
    encoder.set_depth(png::BitDepth::Eight);
    match palette {
        Some(p) => {
            encoder.set_color(png::ColorType::Indexed);
            encoder.set_palette(p.to_vec());
        }
        None => encoder.set_color(png::ColorType::Grayscale),
    }
    let mut png_writer = encoder.write_header().map_err(|e| Error::format(op, path, e))?;
    png_writer.write_image_data(&raster.data).map_err(|e| Error::format(op, path, e))?;
    png_writer.finish().map_err(|e| Error::format(op, path, e))
}

fn decode(op: &'static str, path: &Path, want: png::ColorType) -> Result<Raster> {
    let file = File::open(path).map_err(|e| Error::io(op, path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::format(op, path, e))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(op, path, e))?;
    if info.color_type != want || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            op,
            path,
            format!("expected 8-bit {want:?}, found {:?} {:?}", info.bit_depth, info.color_type),
        ));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    let mut data = Vec::with_capacity(h * w);
    for row in 0..h {
        data.extend_from_slice(&buf[row * info.line_size..row * info.line_size + w]);
    }
    Raster::from_vec(h, w, data)
}

pub fn write_gray_png(path: &Path, image: &GrayImage) -> Result<()> {
    encode("raster::write_gray_png", path, image, None)
}

pub fn read_gray_png(path: &Path) -> Result<GrayImage> {
    decode("raster::read_gray_png", path, png::ColorType::Grayscale)
}

pub fn write_mask_png(path: &Path, mask: &LabelMask) -> Result<()> {
    if let Some(&bad) = mask.data.iter().find(|&&v| v as usize >= NUM_CLASSES) {
        return Err(Error::invalid("raster::write_mask_png", format!("label {bad} outside 0..{NUM_CLASSES}")));
    }
    encode("raster::write_mask_png", path, mask, Some(&MASK_PALETTE))
}

pub fn read_mask_png(path: &Path) -> Result<LabelMask> {
    let mask = decode("raster::read_mask_png", path, png::ColorType::Indexed)?;
    if let Some(&bad) = mask.data.iter().find(|&&v| v as usize >= NUM_CLASSES) {
        return Err(Error::format("raster::read_mask_png", path, format!("label {bad} outside 0..{NUM_CLASSES}")));
    }
    Ok(mask)
}
