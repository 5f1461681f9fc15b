//! Raster types, decoding, channel separation, luma conversion and bilinear
//! patch resizing.
//!
//! Dimensions are always given height-first: a "40×36" patch is 40 rows by
//! 36 columns.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rect::Rect;

/// Height-first pixel dimensions, serialized as `"HxW"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(height: usize, width: usize) -> Self {
        Dims { height, width }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl std::str::FromStr for Dims {
    type Err = Error;

    /// Parses `HxW`, e.g. `40x36`.
    fn from_str(s: &str) -> Result<Self> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("expected HxW, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad dimension in `{s}`")))
        };
        let dims = Dims::new(parse(h)?, parse(w)?);
        if dims.height == 0 || dims.width == 0 {
            return Err(Error::InvalidDimensions(format!("zero dimension in `{s}`")));
        }
        Ok(dims)
    }
}

impl TryFrom<String> for Dims {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dims> for String {
    fn from(d: Dims) -> String {
        d.to_string()
    }
}

/// Single 8-bit intensity plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        GrayImage::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        GrayImage::new(height, width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    /// `255 - v` per pixel.
    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| 255 - v).collect(),
        }
    }

    /// Copy of the pixels inside `rect`, which must lie within the image.
    pub fn crop(&self, rect: &Rect) -> Result<GrayImage> {
        let r = checked_crop_rect(rect, self.height, self.width)?;
        GrayImage::from_fn(r.height as usize, r.width as usize, |y, x| {
            self.get(r.top as usize + y, r.left as usize + x)
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .ok_or_else(|| Error::Invariant("gray buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| encode_error(path, e))
    }
}

/// Three-plane RGB raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    planes: [GrayImage; 3],
}

/// Plane an MSER region came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Red,
    Green,
    Blue,
    Gray,
}

impl Image {
    pub fn from_planes(red: GrayImage, green: GrayImage, blue: GrayImage) -> Result<Self> {
        if red.dims() != green.dims() || red.dims() != blue.dims() {
            return Err(Error::InvalidDimensions(
                "color planes must share dimensions".into(),
            ));
        }
        Ok(Image {
            planes: [red, green, blue],
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut planes = [
            Vec::with_capacity(height * width),
            Vec::with_capacity(height * width),
            Vec::with_capacity(height * width),
        ];
        for r in 0..height {
            for c in 0..width {
                let px = f(r, c);
                for (plane, v) in planes.iter_mut().zip(px) {
                    plane.push(v);
                }
            }
        }
        let [r, g, b] = planes;
        Image::from_planes(
            GrayImage::new(height, width, r)?,
            GrayImage::new(height, width, g)?,
            GrayImage::new(height, width, b)?,
        )
    }

    pub fn from_gray(gray: &GrayImage) -> Image {
        Image {
            planes: [gray.clone(), gray.clone(), gray.clone()],
        }
    }

    pub fn height(&self) -> usize {
        self.planes[0].height
    }

    pub fn width(&self) -> usize {
        self.planes[0].width
    }

    pub fn dims(&self) -> Dims {
        self.planes[0].dims()
    }

    pub fn plane(&self, channel: Channel) -> Option<&GrayImage> {
        match channel {
            Channel::Red => Some(&self.planes[0]),
            Channel::Green => Some(&self.planes[1]),
            Channel::Blue => Some(&self.planes[2]),
            Channel::Gray => None,
        }
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        [
            self.planes[0].get(row, col),
            self.planes[1].get(row, col),
            self.planes[2].get(row, col),
        ]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, px: [u8; 3]) {
        for (plane, v) in self.planes.iter_mut().zip(px) {
            plane.set(row, col, v);
        }
    }

    pub fn crop(&self, rect: &Rect) -> Result<Image> {
        let [r, g, b] = &self.planes;
        Image::from_planes(r.crop(rect)?, g.crop(rect)?, b.crop(rect)?)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut raw = Vec::with_capacity(self.height() * self.width() * 3);
        for r in 0..self.height() {
            for c in 0..self.width() {
                raw.extend_from_slice(&self.pixel(r, c));
            }
        }
        let buf = image::RgbImage::from_raw(self.width() as u32, self.height() as u32, raw)
            .ok_or_else(|| Error::Invariant("rgb buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| encode_error(path, e))
    }
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

fn checked_crop_rect(rect: &Rect, height: usize, width: usize) -> Result<Rect> {
    if rect.is_degenerate() {
        return Err(Error::DegenerateRect(*rect));
    }
    if rect.top < 0 || rect.left < 0 || rect.bottom() > height as i64 || rect.right() > width as i64
    {
        return Err(Error::InvalidDimensions(format!(
            "crop {rect:?} outside {height}x{width} image"
        )));
    }
    Ok(*rect)
}

/// Decode a PNG or JPEG file into an RGB image. Alpha is discarded and
/// grayscale sources are replicated into all three planes.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            message: format!("unsupported format {format:?}"),
        });
    }
    let decoded =
        image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    Image::from_fn(h as usize, w as usize, |r, c| {
        rgb.get_pixel(c as u32, r as u32).0
    })
}

/// Red, green and blue planes.
pub fn split_channels(img: &Image) -> (GrayImage, GrayImage, GrayImage) {
    let [r, g, b] = img.planes.clone();
    (r, g, b)
}

/// BT.601 luma, rounded to nearest.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let [r, g, b] = &img.planes;
    let data = r
        .data
        .iter()
        .zip(&g.data)
        .zip(&b.data)
        .map(|((&r, &g), &b)| luma(r, g, b))
        .collect();
    GrayImage {
        height: img.height(),
        width: img.width(),
        data,
    }
}

#[inline]
pub(crate) fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// A small raster cut out of a scene, with one (gray) or three (RGB) planes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    height: usize,
    width: usize,
    planes: Vec<Vec<u8>>,
}

impl Patch {
    pub fn new(height: usize, width: usize, planes: Vec<Vec<u8>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::InvalidDimensions(format!(
                "patch must have 1 or 3 planes, got {}",
                planes.len()
            )));
        }
        for p in &planes {
            if p.len() != height * width {
                return Err(Error::DimensionMismatch {
                    expected: height * width,
                    got: p.len(),
                });
            }
        }
        Ok(Patch {
            height,
            width,
            planes,
        })
    }

    pub fn from_gray(img: &GrayImage) -> Patch {
        Patch {
            height: img.height,
            width: img.width,
            planes: vec![img.data.clone()],
        }
    }

    pub fn from_image(img: &Image) -> Patch {
        Patch {
            height: img.height(),
            width: img.width(),
            planes: img.planes.iter().map(|p| p.data.clone()).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, i: usize) -> &[u8] {
        &self.planes[i]
    }

    /// Single-plane view: the plane itself, or BT.601 luma of an RGB patch.
    pub fn to_gray(&self) -> GrayImage {
        let data = if self.planes.len() == 1 {
            self.planes[0].clone()
        } else {
            (0..self.height * self.width)
                .map(|i| luma(self.planes[0][i], self.planes[1][i], self.planes[2][i]))
                .collect()
        };
        GrayImage {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn to_gray_patch(&self) -> Patch {
        if self.planes.len() == 1 {
            self.clone()
        } else {
            Patch::from_gray(&self.to_gray())
        }
    }

    pub fn to_image(&self) -> Image {
        let plane = |i: usize| GrayImage {
            height: self.height,
            width: self.width,
            data: self.planes[i.min(self.planes.len() - 1)].clone(),
        };
        Image {
            planes: [plane(0), plane(1), plane(2)],
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if self.planes.len() == 1 {
            self.to_gray().save_png(path)
        } else {
            self.to_image().save_png(path)
        }
    }
}

/// Bilinear resize using pixel-center alignment with edge clamping.
///
/// Resizing to the current dimensions returns an identical patch.
pub fn resize_patch(p: &Patch, target: Dims) -> Result<Patch> {
    if target.height == 0 || target.width == 0 {
        return Err(Error::InvalidDimensions(format!(
            "resize target {target} has a zero side"
        )));
    }
    if target == p.dims() {
        return Ok(p.clone());
    }
    let ys = axis_samples(p.height, target.height);
    let xs = axis_samples(p.width, target.width);
    let planes = p
        .planes
        .iter()
        .map(|src| {
            let mut out = Vec::with_capacity(target.area());
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let a = src[y0 * p.width + x0] as f64;
                    let b = src[y0 * p.width + x1] as f64;
                    let c = src[y1 * p.width + x0] as f64;
                    let d = src[y1 * p.width + x1] as f64;
                    let top = a + (b - a) * fx;
                    let bottom = c + (d - c) * fx;
                    let v = top + (bottom - top) * fy;
                    out.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
            out
        })
        .collect();
    Patch::new(target.height, target.width, planes)
}

/// Resize a single plane.
pub fn resize_gray(img: &GrayImage, target: Dims) -> Result<GrayImage> {
    Ok(resize_patch(&Patch::from_gray(img), target)?.to_gray())
}

fn axis_samples(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn merge(r: GrayImage, g: GrayImage, b: GrayImage) -> Image {
        Image::from_planes(r, g, b).unwrap()
    }

    #[test]
    fn rgb_png_roundtrip_drops_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        let buf = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]));
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        let (r, g, b) = split_channels(&img);
        assert!(r.as_slice().iter().all(|&v| v == 255));
        assert!(g.as_slice().iter().all(|&v| v == 0));
        assert!(b.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn rgba_alpha_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        image::RgbaImage::from_pixel(3, 1, image::Rgba([10, 20, 30, 7]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.pixel(0, 2), [10, 20, 30]);
    }

    #[test]
    fn grayscale_png_yields_identical_planes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let buf = image::GrayImage::from_fn(5, 4, |x, y| image::Luma([(x * 40 + y * 3) as u8]));
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        let (r, g, b) = split_channels(&img);
        assert_eq!(r, g);
        assert_eq!(g, b);
        assert_eq!(r.get(3, 2), 2 * 40 + 3 * 3);
    }

    #[test]
    fn truncated_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.png");
        image::RgbImage::from_pixel(16, 16, image::Rgb([1, 2, 3]))
            .save(&path)
            .unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Decode { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_image(Path::new("/nonexistent/x.png")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn split_projects_checkerboard_and_zero() {
        let checker =
            GrayImage::from_fn(4, 4, |r, c| if (r + c) % 2 == 0 { 255 } else { 0 }).unwrap();
        let zero = GrayImage::filled(4, 4, 0).unwrap();
        let img = merge(checker.clone(), zero.clone(), zero.clone());
        let (r, g, b) = split_channels(&img);
        assert_eq!(r, checker);
        assert_eq!(g, zero);
        assert_eq!(b, zero);
    }

    #[test]
    fn luma_reference_values() {
        let px = |p: [u8; 3]| to_grayscale(&Image::from_fn(1, 1, |_, _| p).unwrap()).get(0, 0);
        assert_eq!(px([255, 255, 255]), 255);
        assert_eq!(px([0, 0, 0]), 0);
        assert_eq!(px([255, 0, 0]), 76);
    }

    #[test]
    fn resize_constant_and_identity() {
        let p = Patch::from_gray(&GrayImage::filled(10, 10, 128).unwrap());
        let out = resize_patch(&p, Dims::new(40, 36)).unwrap();
        assert_eq!(out.dims(), Dims::new(40, 36));
        assert!(out.plane(0).iter().all(|&v| v == 128));

        let q = Patch::from_gray(&GrayImage::from_fn(7, 5, |r, c| (r * 31 + c * 7) as u8).unwrap());
        assert_eq!(resize_patch(&q, q.dims()).unwrap(), q);
        assert!(resize_patch(&q, Dims::new(0, 3)).is_err());
    }

    /// Straightforward per-pixel bilinear reference with explicit clamping.
    fn reference_bilinear_row(src: &[f64], dst_len: usize) -> Vec<f64> {
        let n = src.len();
        (0..dst_len)
            .map(|i| {
                let x = (i as f64 + 0.5) * n as f64 / dst_len as f64 - 0.5;
                let x = x.max(0.0).min((n - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                src[lo] * (1.0 - (x - lo as f64)) + src[hi] * (x - lo as f64)
            })
            .collect()
    }

    #[test]
    fn upsample_ramp_matches_reference() {
        let p = Patch::new(1, 2, vec![vec![0, 255]]).unwrap();
        let out = resize_patch(&p, Dims::new(1, 4)).unwrap();
        let expected: Vec<u8> = reference_bilinear_row(&[0.0, 255.0], 4)
            .into_iter()
            .map(|v| v.round() as u8)
            .collect();
        assert_eq!(out.plane(0), expected.as_slice());
        assert_eq!(out.plane(0)[0], 0);
        assert_eq!(out.plane(0)[3], 255);
        assert!(out.plane(0).windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn split_merge_identity(data in proptest::collection::vec(any::<[u8; 3]>(), 16)) {
            let img = Image::from_fn(4, 4, |r, c| data[r * 4 + c]).unwrap();
            let (r, g, b) = split_channels(&img);
            prop_assert_eq!(merge(r, g, b), img);
        }

        #[test]
        fn luma_within_one_of_real(p in any::<[u8; 3]>()) {
            let img = Image::from_fn(1, 1, |_, _| p).unwrap();
            let exact = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            prop_assert!((to_grayscale(&img).get(0, 0) as f64 - exact).abs() <= 1.0);
        }

        #[test]
        fn resize_preserves_range(
            h in 1usize..8, w in 1usize..8, th in 1usize..20, tw in 1usize..20,
            seed in proptest::collection::vec(any::<u8>(), 64),
        ) {
            let src = GrayImage::from_fn(h, w, |r, c| seed[(r * w + c) % 64]).unwrap();
            let out = resize_gray(&src, Dims::new(th, tw)).unwrap();
            let (lo, hi) = (src.as_slice().iter().min().unwrap(), src.as_slice().iter().max().unwrap());
            prop_assert!(out.as_slice().iter().all(|v| v >= lo && v <= hi));
        }
    }
}
