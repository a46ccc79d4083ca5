//! PNG import/export. Samples map linearly: `v / 255` for 8-bit files and
//! `v / 65535` for 16-bit files, with no gamma transform. Alpha is dropped.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::ImageF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f32 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

pub fn read_png(path: impl AsRef<Path>) -> Result<(ImageF, BitDepth)> {
    let bytes = std::fs::read(path)?;
    decode_png(&bytes)
}

pub fn decode_png(bytes: &[u8]) -> Result<(ImageF, BitDepth)> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, depth, raw): (usize, BitDepth, Vec<u32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, BitDepth::Eight, widen(b.into_raw())),
        DynamicImage::ImageLumaA8(_) => (1, BitDepth::Eight, widen(img.to_luma8().into_raw())),
        DynamicImage::ImageRgb8(b) => (3, BitDepth::Eight, widen(b.into_raw())),
        DynamicImage::ImageRgba8(_) => (3, BitDepth::Eight, widen(img.to_rgb8().into_raw())),
        DynamicImage::ImageLuma16(b) => (1, BitDepth::Sixteen, widen(b.into_raw())),
        DynamicImage::ImageLumaA16(_) => (1, BitDepth::Sixteen, widen(img.to_luma16().into_raw())),
        DynamicImage::ImageRgb16(b) => (3, BitDepth::Sixteen, widen(b.into_raw())),
        DynamicImage::ImageRgba16(_) => (3, BitDepth::Sixteen, widen(img.to_rgb16().into_raw())),
        other => {
            return Err(Error::invalid(format!(
                "unsupported PNG color type {:?}",
                other.color()
            )))
        }
    };
    let scale = depth.max();
    let data = raw.into_iter().map(|v| v as f32 / scale).collect();
    Ok((ImageF::new(w, h, channels, data)?, depth))
}

fn widen<T: Into<u32>>(v: Vec<T>) -> Vec<u32> {
    v.into_iter().map(Into::into).collect()
}

fn quantize(v: f32, max: f32) -> u32 {
    (v.clamp(0.0, 1.0) as f64 * max as f64).round() as u32
}

pub fn encode_png(img: &ImageF, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let max = depth.max();
    let mut out = Vec::new();
    let encoder = PngEncoder::new(Cursor::new(&mut out));
    match (img.channels(), depth) {
        (1, BitDepth::Eight) => {
            let raw = img.data().iter().map(|&v| quantize(v, max) as u8).collect();
            ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, raw)
                .expect("buffer size")
                .write_with_encoder(encoder)?;
        }
        (3, BitDepth::Eight) => {
            let raw = img.data().iter().map(|&v| quantize(v, max) as u8).collect();
            ImageBuffer::<Rgb<u8>, Vec<u8>>::from_raw(w, h, raw)
                .expect("buffer size")
                .write_with_encoder(encoder)?;
        }
        (1, BitDepth::Sixteen) => {
            let raw = img.data().iter().map(|&v| quantize(v, max) as u16).collect();
            ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, raw)
                .expect("buffer size")
                .write_with_encoder(encoder)?;
        }
        (3, BitDepth::Sixteen) => {
            let raw = img.data().iter().map(|&v| quantize(v, max) as u16).collect();
            ImageBuffer::<Rgb<u16>, Vec<u16>>::from_raw(w, h, raw)
                .expect("buffer size")
                .write_with_encoder(encoder)?;
        }
        (c, _) => return Err(Error::invalid(format!("cannot write {c}-channel PNG"))),
    }
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageF, depth: BitDepth) -> Result<()> {
    std::fs::write(path, encode_png(img, depth)?)?;
    Ok(())
}

/// Rounds samples to what a PNG of `depth` can store, so in-memory results
/// match a write/read cycle exactly.
pub fn quantize_to(img: &ImageF, depth: BitDepth) -> ImageF {
    let max = depth.max();
    let data = img
        .data()
        .iter()
        .map(|&v| quantize(v, max) as f32 / max)
        .collect();
    ImageF::from_parts(img.width(), img.height(), img.channels(), data)
}
