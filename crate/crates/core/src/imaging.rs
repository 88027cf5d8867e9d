//! Pixel buffers, PNG/JPEG I/O and hexcone HSV conversion.

use std::io::Cursor;

use image::{ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// A rectangular grid of 8-bit RGB pixels stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::MalformedImage(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::MalformedImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// An image with every pixel set to `fill`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, fill: Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, px: Rgb) {
        self.pixels[y * self.width + x] = px;
    }
}

/// A pixel in hexcone HSV coordinates.
///
/// `hue` is `None` exactly when `saturation == 0` (achromatic pixels,
/// including pure black).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvPixel {
    pub hue: Option<f64>,
    pub saturation: f64,
    pub value: f64,
}

/// Standard hexcone RGB to HSV conversion. Hue is in degrees, `[0, 360)`.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> HsvPixel {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let value = max as f64 / 255.0;
    if max == min {
        return HsvPixel {
            hue: None,
            saturation: 0.0,
            value,
        };
    }
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let delta = (max - min) as f64;
    let saturation = delta / max as f64;
    let sector = if max == r {
        (gf - bf) / delta
    } else if max == g {
        (bf - rf) / delta + 2.0
    } else {
        (rf - gf) / delta + 4.0
    };
    let mut hue = 60.0 * sector;
    if hue < 0.0 {
        hue += 360.0;
    }
    if hue >= 360.0 {
        hue -= 360.0;
    }
    HsvPixel {
        hue: Some(hue),
        saturation,
        value,
    }
}

/// Inverse hexcone conversion. An undefined hue is treated as 0°.
pub fn hsv_to_rgb(hsv: HsvPixel) -> Rgb {
    let h = hsv.hue.unwrap_or(0.0).rem_euclid(360.0);
    let s = hsv.saturation.clamp(0.0, 1.0);
    let v = hsv.value.clamp(0.0, 1.0);
    let c = v * s;
    let sector = h / 60.0;
    let x = c * (1.0 - (sector % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_byte = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to_byte(r1), to_byte(g1), to_byte(b1)]
}

/// One boolean per pixel; `true` marks a selected pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (bits.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn invert(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Intersection-over-union with another mask of the same size. Two empty
    /// masks have IoU 1.
    pub fn iou(&self, other: &PixelMask) -> Result<f64> {
        self.check_same_size(other.dimensions())?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Renders the mask as a black/white image (white = selected).
    pub fn to_image(&self) -> RgbImage {
        let pixels = self
            .bits
            .iter()
            .map(|&b| if b { [255; 3] } else { [0; 3] })
            .collect();
        RgbImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    pub(crate) fn check_same_size(&self, dims: (usize, usize)) -> Result<()> {
        if self.dimensions() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dimensions(),
            });
        }
        Ok(())
    }
}

/// Decodes a PNG or JPEG byte stream into an RGB image. Alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.is_empty() {
        return Err(Error::MalformedImage("empty byte stream".into()));
    }
    let format =
        image::guess_format(bytes).map_err(|e| Error::MalformedImage(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::MalformedImage(format!(
            "unsupported format {format:?}; expected PNG or JPEG"
        )));
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::MalformedImage(e.to_string()))?
        .into_rgb8();
    let (w, h) = decoded.dimensions();
    let pixels = decoded
        .pixels()
        .map(|p| p.0)
        .collect::<Vec<Rgb>>();
    RgbImage::new(w as usize, h as usize, pixels)
}

/// Encodes an image as an 8-bit RGB PNG.
pub fn encode_png(image: &RgbImage) -> Vec<u8> {
    let raw: Vec<u8> = image.pixels.iter().flatten().copied().collect();
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(
            &raw,
            image.width as u32,
            image.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .expect("in-memory PNG encoding of a valid RGB buffer cannot fail");
    out
}

/// Reads and decodes an image file.
pub fn read_image(path: impl AsRef<std::path::Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::MalformedImage(msg) => Error::MalformedImage(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_png(path: impl AsRef<std::path::Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png(image)).map_err(|e| Error::io(path, e))
}

/// Width in pixels of the border band for a given fraction of the short side.
/// Always at least one pixel.
pub fn border_band_width(width: usize, height: usize, band_fraction: f64) -> usize {
    let short = width.min(height) as f64;
    // the epsilon keeps products like 0.3 * 10 from rounding up to 4
    let band = (band_fraction * short - 1e-9).ceil();
    (band.max(1.0)) as usize
}

/// Selects every pixel within the border band of the image.
pub fn border_mask(image: &RgbImage, band_fraction: f64) -> PixelMask {
    let (w, h) = image.dimensions();
    let band = border_band_width(w, h, band_fraction);
    PixelMask::from_fn(w, h, |x, y| {
        x < band || y < band || x + band >= w || y + band >= h
    })
}
