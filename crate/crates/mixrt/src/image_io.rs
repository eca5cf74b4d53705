//! 8-bit PNG reading and writing.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use mixrt_core::render::Image;

use crate::error::{MixrtError, Result};

/// Decoded 8-bit PNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPng {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<u8>,
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_raw(path: &Path, width: u32, height: u32, channels: u8, data: &[u8]) -> Result<()> {
    let color = match channels {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        _ => return Err(MixrtError::format(path, format!("unsupported channel count {channels}"))),
    };
    assert_eq!(data.len(), width as usize * height as usize * channels as usize);
    let file = File::create(path).map_err(|e| MixrtError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| MixrtError::format(path, e))?;
    writer.write_image_data(data).map_err(|e| MixrtError::format(path, e))?;
    writer.finish().map_err(|e| MixrtError::format(path, e))?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<RawPng> {
    let file = File::open(path).map_err(|e| MixrtError::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| MixrtError::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| MixrtError::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| MixrtError::format(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(MixrtError::format(path, "only 8-bit PNG is supported"));
    }
    buf.truncate(info.buffer_size());
    Ok(RawPng {
        width: info.width,
        height: info.height,
        channels: info.color_type.samples() as u8,
        data: buf,
    })
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let data: Vec<u8> = img.pixels().iter().flat_map(|p| p.map(to_u8)).collect();
    write_raw(path, img.width(), img.height(), 3, &data)
}

/// Reads an 8-bit PNG as RGB in `[0, 1]`; gray is replicated and alpha
/// dropped.
pub fn read_image(path: &Path) -> Result<Image> {
    let raw = read_raw(path)?;
    let c = raw.channels as usize;
    let pixels = raw
        .data
        .chunks_exact(c)
        .map(|px| {
            let rgb = if c >= 3 { [px[0], px[1], px[2]] } else { [px[0]; 3] };
            rgb.map(|v| v as f64 / 255.0)
        })
        .collect();
    Ok(Image::from_pixels(raw.width, raw.height, pixels)?)
}
