//! Image and depth file I/O: 8/16-bit PNG, PPM/PGM, and PFM.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageReader};
use mpi_stereo_core::{DepthMap, ImageBuffer};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f32 {
        match self {
            Self::Eight => 255.0,
            Self::Sixteen => 65535.0,
        }
    }
}

/// How stored depth values were mapped to normalized disparity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthNormalization {
    Divide65535,
    Divide255,
    Identity,
    MinMax,
}

impl DepthNormalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Divide65535 => "divide_65535",
            Self::Divide255 => "divide_255",
            Self::Identity => "identity",
            Self::MinMax => "min_max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::Divide65535,
            Self::Divide255,
            Self::Identity,
            Self::MinMax,
        ]
        .into_iter()
        .find(|n| n.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Png,
    Pnm,
    Pfm,
}

fn format_of(path: &Path) -> Result<Format> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => Ok(Format::Png),
        Some("ppm" | "pgm" | "pnm") => Ok(Format::Pnm),
        Some("pfm") => Ok(Format::Pfm),
        _ => Err(CliError::UnsupportedFormat(path.to_path_buf())),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let image_err = |e: image::ImageError| CliError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(image_err)
}

fn is_sixteen_bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    )
}

/// Reads an RGB image. Gray and alpha inputs are converted to RGB.
pub fn read_image(path: &Path) -> Result<(ImageBuffer, BitDepth)> {
    if format_of(path)? == Format::Pfm {
        let (h, w, c, data) = read_pfm(path)?;
        let rgb: Vec<f32> = if c == 3 {
            data
        } else {
            data.iter().flat_map(|&v| [v, v, v]).collect()
        };
        return Ok((
            ImageBuffer::from_vec_clamped(h, w, 3, rgb)?,
            BitDepth::Sixteen,
        ));
    }
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if is_sixteen_bit(&img) {
        let data = img
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect();
        Ok((ImageBuffer::new(h, w, 3, data)?, BitDepth::Sixteen))
    } else {
        let data = img
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect();
        Ok((ImageBuffer::new(h, w, 3, data)?, BitDepth::Eight))
    }
}

/// Reads a depth map as normalized disparity. 16-bit images are divided by
/// 65535 and 8-bit by 255; PFM values already in `[0, 1]` are kept, other
/// PFM frames are min-max normalized.
pub fn read_depth(path: &Path) -> Result<(DepthMap, DepthNormalization)> {
    if format_of(path)? == Format::Pfm {
        let (h, w, c, data) = read_pfm(path)?;
        let first: Vec<f32> = data.chunks_exact(c).map(|px| px[0]).collect();
        if let Some(v) = first.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Image {
                path: path.to_path_buf(),
                message: format!("non-finite depth value {v}"),
            });
        }
        if first.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Ok((DepthMap::new(h, w, first)?, DepthNormalization::Identity));
        }
        let lo = first.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = first.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = hi - lo;
        let data = first
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        return Ok((DepthMap::new(h, w, data)?, DepthNormalization::MinMax));
    }
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if is_sixteen_bit(&img) {
        let data = img
            .to_rgb16()
            .into_raw()
            .chunks_exact(3)
            .map(|p| p[0] as f32 / 65535.0)
            .collect();
        Ok((DepthMap::new(h, w, data)?, DepthNormalization::Divide65535))
    } else {
        let data = img
            .to_rgb8()
            .into_raw()
            .chunks_exact(3)
            .map(|p| p[0] as f32 / 255.0)
            .collect();
        Ok((DepthMap::new(h, w, data)?, DepthNormalization::Divide255))
    }
}

fn quantize(v: f32, depth: BitDepth) -> f32 {
    (v.clamp(0.0, 1.0) * depth.max_value()).round()
}

/// Writes an RGB or gray image as PNG or PPM/PGM.
pub fn write_image(path: &Path, img: &ImageBuffer, depth: BitDepth) -> Result<()> {
    let format = format_of(path)?;
    if format == Format::Pfm {
        return write_pfm(path, img.height(), img.width(), img.channels(), img.data());
    }
    let img = if img.channels() == 4 {
        img.to_rgb()
    } else {
        img.clone()
    };
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = match (depth, img.channels()) {
        (BitDepth::Eight, 1) => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(
                w,
                h,
                img.data()
                    .iter()
                    .map(|&v| quantize(v, depth) as u8)
                    .collect(),
            )
            .expect("sized buffer"),
        ),
        (BitDepth::Eight, _) => DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(
                w,
                h,
                img.data()
                    .iter()
                    .map(|&v| quantize(v, depth) as u8)
                    .collect(),
            )
            .expect("sized buffer"),
        ),
        (BitDepth::Sixteen, 1) => DynamicImage::ImageLuma16(
            image::ImageBuffer::from_raw(
                w,
                h,
                img.data()
                    .iter()
                    .map(|&v| quantize(v, depth) as u16)
                    .collect(),
            )
            .expect("sized buffer"),
        ),
        (BitDepth::Sixteen, _) => DynamicImage::ImageRgb16(
            image::ImageBuffer::from_raw(
                w,
                h,
                img.data()
                    .iter()
                    .map(|&v| quantize(v, depth) as u16)
                    .collect(),
            )
            .expect("sized buffer"),
        ),
    };
    let image_format = match format {
        Format::Png => image::ImageFormat::Png,
        _ => image::ImageFormat::Pnm,
    };
    dynamic
        .save_with_format(path, image_format)
        .map_err(|e| CliError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Writes a depth map as a 16-bit gray PNG or a PFM.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let img = ImageBuffer::new(depth.height(), depth.width(), 1, depth.data().to_vec())?;
    write_image(path, &img, BitDepth::Sixteen)
}

/// Parses a PFM file into `(height, width, channels, top-down data)`.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_pfm(&bytes).map_err(|message| CliError::Image {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<f32>), String> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PFM header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("bad PFM magic {other:?}")),
    };
    let parse = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| format!("bad PFM dimension {t:?}"))
    };
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| format!("bad PFM scale {:?}", tokens[3]))?;
    let count = w * h * channels;
    let body = bytes
        .get(pos..pos + count * 4)
        .ok_or_else(|| format!("PFM payload shorter than {w}x{h}x{channels}"))?;
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            if scale < 0.0 {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let row = w * channels;
    let mut data = Vec::with_capacity(count);
    for y in (0..h).rev() {
        data.extend_from_slice(&values[y * row..(y + 1) * row]);
    }
    Ok((h, w, channels, data))
}

/// Writes little-endian PFM, rows bottom to top.
pub fn write_pfm(path: &Path, h: usize, w: usize, channels: usize, data: &[f32]) -> Result<()> {
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        _ => return Err(CliError::UnsupportedFormat(path.to_path_buf())),
    };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    let row = w * channels;
    for y in (0..h).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(5, 7, 3, |y, x, c| ((x * 3 + y * 5 + c) % 11) as f32 / 10.0)
            .unwrap();
        for (name, depth) in [
            ("a.png", BitDepth::Sixteen),
            ("b.png", BitDepth::Eight),
            ("c.ppm", BitDepth::Eight),
        ] {
            let p = dir.path().join(name);
            write_image(&p, &img, depth).unwrap();
            let (back, bits) = read_image(&p).unwrap();
            assert_eq!(bits, depth);
            let bound = 0.5 / depth.max_value() + 1e-7;
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= bound);
            }
        }
    }

    #[test]
    fn eight_bit_values_survive_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(3, 4, 3, |y, x, c| {
            ((x * 40 + y * 9 + c * 3) % 256) as f32 / 255.0
        })
        .unwrap();
        let p = dir.path().join("x.png");
        write_image(&p, &img, BitDepth::Eight).unwrap();
        assert_eq!(read_image(&p).unwrap().0, img);
    }

    #[test]
    fn depth_png_divides_by_65535() {
        let dir = tempfile::tempdir().unwrap();
        let d = DepthMap::from_fn(4, 4, |y, x| ((x + 4 * y) as f32 * 4096.0) / 65535.0).unwrap();
        let p = dir.path().join("d.png");
        write_depth(&p, &d).unwrap();
        let (back, norm) = read_depth(&p).unwrap();
        assert_eq!(norm, DepthNormalization::Divide65535);
        assert_eq!(back, d);
    }

    #[test]
    fn pfm_round_trip_and_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        write_pfm(&p, 2, 3, 1, &[0.0, 0.5, 1.0, 0.25, 0.75, 0.1]).unwrap();
        let (d, norm) = read_depth(&p).unwrap();
        assert_eq!(norm, DepthNormalization::Identity);
        assert_eq!(d.data(), &[0.0, 0.5, 1.0, 0.25, 0.75, 0.1]);

        write_pfm(&p, 1, 3, 1, &[2.0, 4.0, 6.0]).unwrap();
        let (d, norm) = read_depth(&p).unwrap();
        assert_eq!(norm, DepthNormalization::MinMax);
        assert_eq!(d.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn big_endian_pfm() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.25f32.to_be_bytes());
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        assert_eq!(parse_pfm(&bytes).unwrap(), (1, 2, 1, vec![0.25, 0.5]));
        assert!(parse_pfm(b"P5\n1 1\n1\n").is_err());
        assert!(parse_pfm(b"Pf\n4 4\n-1\n\0\0").is_err());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(matches!(
            read_image(Path::new("frame.tiff")),
            Err(CliError::UnsupportedFormat(_))
        ));
    }
}
