//! Image and mask representations shared by every stage of the pipeline.
//!
//! All buffers are row-major with the origin at the top-left pixel. RGB
//! images interleave their three channels per pixel.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Color channel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "red",
            Channel::G => "green",
            Channel::B => "blue",
        }
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "expected {} channel values for a {height}x{width} RGB image, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for i in 0..height {
            for j in 0..width {
                data.extend_from_slice(&f(i, j));
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
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

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> [u8; 3] {
        let o = (i * self.width + j) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, i: usize, j: usize, rgb: [u8; 3]) {
        let o = (i * self.width + j) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked on construction")
    }

    pub fn from_rgb_image(img: &RgbImage) -> Result<Self> {
        Self::new(img.height() as usize, img.width() as usize, img.as_raw().clone())
    }

    /// Loads any image format the `image` crate understands and converts it to RGB8.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Self::from_rgb_image(&img)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb_image()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        Self::from_rgb_image(&img)
    }

    /// Bilinear resize.
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        let out = image::imageops::resize(
            &self.to_rgb_image(),
            width as u32,
            height as u32,
            image::imageops::FilterType::Triangle,
        );
        Self::from_rgb_image(&out)
    }
}

/// RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageF {
    /// Builds an image, clamping every value into `[0, 1]`. NaN maps to 0.
    pub fn new(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "expected {} channel values for a {height}x{width} RGB image, got {}",
                height * width * 3,
                data.len()
            )));
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width * 3])
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f64; 3] {
        let o = (i * self.width + j) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn get(&self, i: usize, j: usize, channel: usize) -> f64 {
        self.data[(i * self.width + j) * 3 + channel]
    }
}

/// Binary `{0, 1}` mask. A zero marks a pixel that is blacked out.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "expected {} mask values for a {height}x{width} mask, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMaskValue {
                row: pos / width,
                col: pos % width,
                value: data[pos],
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![1; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(u8::from(f(i, j)));
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, keep: bool) {
        self.data[i * self.width + j] = u8::from(keep);
    }

    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|&&v| v == 0).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.data.iter().all(|&v| v == 1)
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.get(y as usize, x as usize) * 255])
        })
    }

    /// Parses a single-channel image where 0 → 0 and 255 → 1. Any other
    /// value is rejected.
    pub fn from_gray_image(img: &GrayImage) -> Result<Self> {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let mut data = Vec::with_capacity(width * height);
        for (pos, &v) in img.as_raw().iter().enumerate() {
            match v {
                0 => data.push(0),
                255 => data.push(1),
                value => {
                    return Err(Error::InvalidMaskValue {
                        row: pos / width,
                        col: pos % width,
                        value,
                    })
                }
            }
        }
        Self::new(height, width, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        Self::from_gray_image(&img)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_gray_image()
            .write_to(&mut buf, image::ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_luma8();
        Self::from_gray_image(&img)
    }

    /// Nearest-neighbour resize.
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Self::from_fn(height, width, |i, j| {
            let si = (i * self.height) / height;
            let sj = (j * self.width) / width;
            self.get(si, sj) == 1
        })
    }
}

/// Per-channel histogram over the integer values 0..=255 with unit-width bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub channel: Channel,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(channel: Channel, values: impl IntoIterator<Item = u8>) -> Self {
        let mut counts = vec![0u64; 256];
        for v in values {
            counts[v as usize] += 1;
        }
        Self { channel, counts }
    }

    /// Bin edges `0, 1, ..., 256`; bin `v` covers `[v, v + 1)`.
    pub fn bin_edges(&self) -> Vec<u32> {
        (0..=256).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Largest value with a nonzero count.
    pub fn max_nonempty(&self) -> Option<u8> {
        self.counts.iter().rposition(|&c| c > 0).map(|v| v as u8)
    }
}

pub(crate) fn check_same_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Maps every channel value `v` to `v / 255`.
pub fn to_unit(img: &ImageU8) -> ImageF {
    ImageF {
        height: img.height,
        width: img.width,
        data: img.data.iter().map(|&v| f64::from(v) / 255.0).collect(),
    }
}

/// Quantizes to 8 bits with round-half-up after scaling by 255.
pub fn to_u8(img: &ImageF) -> ImageU8 {
    ImageU8 {
        height: img.height,
        width: img.width,
        data: img
            .data
            .iter()
            .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect(),
    }
}

/// Pixel intensity: arithmetic mean of the three channels.
pub fn pixel_intensity(img: &ImageU8, i: usize, j: usize) -> Result<f64> {
    if i >= img.height || j >= img.width {
        return Err(Error::OutOfBounds {
            row: i,
            col: j,
            height: img.height,
            width: img.width,
        });
    }
    Ok(intensity(img.pixel(i, j)))
}

pub(crate) fn channel_sum(p: [u8; 3]) -> u32 {
    u32::from(p[0]) + u32::from(p[1]) + u32::from(p[2])
}

pub(crate) fn intensity(p: [u8; 3]) -> f64 {
    f64::from(channel_sum(p)) / 3.0
}

/// Maximum pixel intensity over the whole image.
pub fn max_intensity(img: &ImageU8) -> Result<f64> {
    img.pixels()
        .map(channel_sum)
        .max()
        .map(|s| f64::from(s) / 3.0)
        .ok_or_else(|| Error::invalid("max_intensity of an empty image"))
}

/// Maximum intensity over the pixels where `mask` is 1, or `None` if the mask
/// has no ones.
pub fn max_intensity_where(img: &ImageU8, mask: &BinaryMask) -> Result<Option<f64>> {
    check_same_dims(img.dims(), mask.dims())?;
    Ok(img
        .pixels()
        .zip(mask.data())
        .filter(|(_, &m)| m == 1)
        .map(|(p, _)| channel_sum(p))
        .max()
        .map(|s| f64::from(s) / 3.0))
}

/// Hadamard product of an image with a mask broadcast over the channels.
pub fn apply_mask(img: &ImageF, mask: &BinaryMask) -> Result<ImageF> {
    check_same_dims(img.dims(), mask.dims())?;
    let mut data = img.data.clone();
    for (px, &m) in data.chunks_exact_mut(3).zip(&mask.data) {
        if m == 0 {
            px.fill(0.0);
        }
    }
    Ok(ImageF {
        height: img.height,
        width: img.width,
        data,
    })
}

/// Same as [`apply_mask`] on an 8-bit image.
pub fn apply_mask_u8(img: &ImageU8, mask: &BinaryMask) -> Result<ImageU8> {
    check_same_dims(img.dims(), mask.dims())?;
    let mut data = img.data.clone();
    for (px, &m) in data.chunks_exact_mut(3).zip(&mask.data) {
        if m == 0 {
            px.fill(0);
        }
    }
    Ok(ImageU8 {
        height: img.height,
        width: img.width,
        data,
    })
}

pub fn and_masks(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    check_same_dims(a.dims(), b.dims())?;
    Ok(BinaryMask {
        height: a.height,
        width: a.width,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x & y).collect(),
    })
}

pub fn channel_histogram(img: &ImageU8, channel: Channel) -> Histogram {
    let k = channel.index();
    Histogram::from_values(channel, img.data.chunks_exact(3).map(|p| p[k]))
}

/// Renders `img` (values in `[0, 1]`) to a PNG-compatible RGB buffer.
pub fn to_rgb_image(img: &ImageF) -> RgbImage {
    let q = to_u8(img);
    RgbImage::from_fn(q.width as u32, q.height as u32, |x, y| {
        Rgb(q.pixel(y as usize, x as usize))
    })
}
