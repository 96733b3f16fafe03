//! Packed 8-bit RGB images and their two on-disk encodings.
//!
//! Binary PPM (`P6`) is written as `P6\n<width> <height>\n255\n` followed by
//! `width * height * 3` bytes in row-major RGB order. The reader accepts any
//! whitespace and `#` comments between header tokens, requires a maximum
//! value of 255 and exactly one whitespace byte before the raster.
//!
//! BMP is written as an uncompressed 24-bit bottom-up bitmap: a 14-byte file
//! header, a 40-byte `BITMAPINFOHEADER`, then rows in BGR order padded to a
//! multiple of four bytes. The pixel-per-metre fields are 2835 (72 dpi). The
//! reader also accepts top-down files (negative height).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with 8 bits per channel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSize(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::Shape(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with one colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Pixel at column `x`, row `y`. Panics when out of bounds.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        assert!(self.contains(x, y), "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        assert!(self.contains(x, y), "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copies the rectangle with top-left `(x0, y0)` and the given size.
    pub fn sub_image(&self, x0: u32, y0: u32, width: u32, height: u32) -> Result<Image> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Shape(format!(
                "window {width}x{height} at ({x0}, {y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let row_bytes = width as usize * 3;
        let mut pixels = Vec::with_capacity(row_bytes * height as usize);
        for y in y0..y0 + height {
            let o = self.offset(x0, y);
            pixels.extend_from_slice(&self.pixels[o..o + row_bytes]);
        }
        Image::new(width, height, pixels)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Image> {
        let mut cursor = HeaderCursor::new(bytes);
        if cursor.token()? != b"P6" {
            return Err(Error::format(0, "not a binary PPM (missing P6 magic)"));
        }
        let width = cursor.number()?;
        let height = cursor.number()?;
        let maxval = cursor.number()?;
        if maxval != 255 {
            return Err(Error::format(0, format!("unsupported PPM maxval {maxval}")));
        }
        let raster = cursor.raster()?;
        let expected = width as usize * height as usize * 3;
        if raster.len() < expected {
            return Err(Error::format(0, "truncated PPM raster"));
        }
        Image::new(width, height, raster[..expected].to_vec())
    }

    pub fn to_bmp(&self) -> Vec<u8> {
        let stride = bmp_stride(self.width);
        let image_size = stride * self.height as usize;
        let file_size = 54 + image_size;
        let mut out = Vec::with_capacity(file_size);
        out.extend_from_slice(b"BM");
        out.extend_from_slice(&(file_size as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&54u32.to_le_bytes());
        out.extend_from_slice(&40u32.to_le_bytes());
        out.extend_from_slice(&(self.width as i32).to_le_bytes());
        out.extend_from_slice(&(self.height as i32).to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&24u16.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(image_size as u32).to_le_bytes());
        out.extend_from_slice(&2835i32.to_le_bytes());
        out.extend_from_slice(&2835i32.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        let pad = stride - self.width as usize * 3;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let [r, g, b] = self.pixel(x, y);
                out.extend_from_slice(&[b, g, r]);
            }
            out.extend(std::iter::repeat_n(0u8, pad));
        }
        out
    }

    pub fn from_bmp(bytes: &[u8]) -> Result<Image> {
        let le_u32 = |o: usize| -> Result<u32> {
            bytes
                .get(o..o + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .ok_or_else(|| Error::format(0, "truncated BMP header"))
        };
        let le_u16 = |o: usize| -> Result<u16> {
            bytes
                .get(o..o + 2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .ok_or_else(|| Error::format(0, "truncated BMP header"))
        };
        if bytes.get(0..2) != Some(b"BM") {
            return Err(Error::format(0, "not a BMP (missing BM magic)"));
        }
        let data_offset = le_u32(10)? as usize;
        let header_size = le_u32(14)?;
        if header_size < 40 {
            return Err(Error::format(0, "unsupported BMP info header"));
        }
        let width = le_u32(18)? as i32;
        let height = le_u32(22)? as i32;
        let bpp = le_u16(28)?;
        let compression = le_u32(30)?;
        if bpp != 24 || compression != 0 {
            return Err(Error::format(
                0,
                format!("only uncompressed 24-bit BMP is supported (bpp {bpp}, compression {compression})"),
            ));
        }
        if width <= 0 || height == 0 {
            return Err(Error::format(0, "invalid BMP dimensions"));
        }
        let top_down = height < 0;
        let (w, h) = (width as u32, height.unsigned_abs());
        let stride = bmp_stride(w);
        let raster = bytes
            .get(data_offset..data_offset + stride * h as usize)
            .ok_or_else(|| Error::format(0, "truncated BMP raster"))?;
        let mut img = Image::filled(w, h, [0, 0, 0])?;
        for (row, chunk) in raster.chunks_exact(stride).enumerate() {
            let y = if top_down { row as u32 } else { h - 1 - row as u32 };
            for x in 0..w {
                let o = x as usize * 3;
                img.set_pixel(x, y, [chunk[o + 2], chunk[o + 1], chunk[o]]);
            }
        }
        Ok(img)
    }

    /// Reads a `.ppm` or `.bmp` file, dispatching on the magic bytes.
    pub fn read(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        match bytes.get(0..2) {
            Some(b"BM") => Image::from_bmp(&bytes),
            _ => Image::from_ppm(&bytes),
        }
    }

    /// Writes BMP when the extension is `bmp`, PPM otherwise.
    pub fn write(&self, path: &Path) -> Result<()> {
        let is_bmp = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("bmp"));
        let bytes = if is_bmp { self.to_bmp() } else { self.to_ppm() };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn bmp_stride(width: u32) -> usize {
    (width as usize * 3).div_ceil(4) * 4
}

/// Tokenizer shared by the netpbm readers (PPM here, PBM for masks).
pub(crate) struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    pub(crate) fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(0, "truncated netpbm header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    pub(crate) fn number(&mut self) -> Result<u32> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(0, "malformed number in netpbm header"))
    }

    /// Consumes the single whitespace byte after the header and returns the rest.
    pub(crate) fn raster(&mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(Error::format(0, "missing whitespace before raster")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        let mut pixels = Vec::new();
        for i in 0..(5 * 3 * 3) {
            pixels.push((i * 7 % 256) as u8);
        }
        Image::new(5, 3, pixels).unwrap()
    }

    #[test]
    fn rejects_bad_buffer_length() {
        assert!(matches!(Image::new(2, 2, vec![0; 11]), Err(Error::Shape(_))));
        assert!(matches!(Image::new(0, 2, vec![]), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn ppm_header_is_exact() {
        let img = Image::filled(2, 1, [1, 2, 3]).unwrap();
        assert_eq!(img.to_ppm(), b"P6\n2 1\n255\n\x01\x02\x03\x01\x02\x03".to_vec());
    }

    #[test]
    fn ppm_reader_skips_comments() {
        let bytes = b"P6 # made by hand\n2 1\n# max\n255\n\x01\x02\x03\x04\x05\x06";
        let img = Image::from_ppm(bytes).unwrap();
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn ppm_and_bmp_round_trip() {
        let img = sample();
        assert_eq!(Image::from_ppm(&img.to_ppm()).unwrap(), img);
        assert_eq!(Image::from_bmp(&img.to_bmp()).unwrap(), img);
    }

    #[test]
    fn bmp_layout_is_bottom_up_bgr_padded() {
        let mut img = Image::filled(1, 2, [0, 0, 0]).unwrap();
        img.set_pixel(0, 0, [10, 20, 30]);
        let bytes = img.to_bmp();
        assert_eq!(bytes.len(), 54 + 2 * 4);
        assert_eq!(&bytes[2..6], &62u32.to_le_bytes());
        // first stored row is the bottom row
        assert_eq!(&bytes[54..58], &[0, 0, 0, 0]);
        assert_eq!(&bytes[58..62], &[30, 20, 10, 0]);
    }

    #[test]
    fn sub_image_bounds() {
        let img = sample();
        let sub = img.sub_image(1, 1, 3, 2).unwrap();
        assert_eq!(sub.pixel(0, 0), img.pixel(1, 1));
        assert_eq!(sub.pixel(2, 1), img.pixel(3, 2));
        assert!(img.sub_image(3, 0, 3, 1).is_err());
    }
}
