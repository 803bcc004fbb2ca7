//! Binary PGM/PPM ingestion and conversion to planar [C,H,W] tensors.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit image, row-major, channel-interleaved. `channels` is 1 or 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedImage {
                reason: format!("channels must be 1 or 3, got {channels}"),
            });
        }
        if data.len() != height * width * channels {
            return Err(Error::LengthMismatch {
                expected: height * width * channels,
                found: data.len(),
            });
        }
        Ok(ImageU8 {
            height,
            width,
            channels,
            data,
        })
    }
}

/// Loads a binary PGM (P5) or PPM (P6) file with maxval 255.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let mut cursor = 0usize;
    let magic = take_token(&bytes, &mut cursor).ok_or(Error::BadMagic { path: path.into() })?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(Error::BadMagic { path: path.into() }),
    };
    let width = parse_dim(&bytes, &mut cursor, path)?;
    let height = parse_dim(&bytes, &mut cursor, path)?;
    let maxval = parse_dim(&bytes, &mut cursor, path)?;
    if maxval != 255 {
        return Err(Error::UnsupportedImage {
            reason: format!("maxval must be 255, got {maxval}"),
        });
    }
    // exactly one whitespace byte separates the header from the raster
    cursor += 1;
    let expected = width * height * channels;
    let found = bytes.len().saturating_sub(cursor);
    if found < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found,
        });
    }
    ImageU8::new(height, width, channels, bytes[cursor..cursor + expected].to_vec())
}

/// Writes a binary PGM/PPM file; round-trips with [`load_image`].
pub fn save_image(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", img.width, img.height);
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&img.data))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Converts to a planar [C,H,W] tensor with values in [0,1].
pub fn image_to_tensor(img: &ImageU8) -> Tensor {
    let (c, h, w) = (img.channels, img.height, img.width);
    let mut data = vec![0.0f32; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[ch * h * w + y * w + x] = img.data[(y * w + x) * c + ch] as f32 / 255.0;
            }
        }
    }
    Tensor::new(vec![c, h, w], data).expect("finite by construction")
}

/// Converts a planar [C,H,W] tensor back to bytes with clamping and
/// round-half-up; inverse of [`image_to_tensor`] on byte data.
pub fn tensor_to_image(t: &Tensor) -> Result<ImageU8> {
    let shape = t.shape();
    if shape.len() != 3 {
        return Err(Error::DimensionMismatch {
            context: "tensor_to_image expects rank-3 [C,H,W]",
            expected: 3,
            got: shape.len(),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if c != 1 && c != 3 {
        return Err(Error::UnsupportedImage {
            reason: format!("channels must be 1 or 3, got {c}"),
        });
    }
    let data = t.data();
    let mut out = vec![0u8; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v = data[ch * h * w + y * w + x].clamp(0.0, 1.0);
                out[(y * w + x) * c + ch] = (v * 255.0 + 0.5).floor() as u8;
            }
        }
    }
    ImageU8::new(h, w, c, out)
}

fn take_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    skip_space_and_comments(bytes, cursor);
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        None
    } else {
        Some(String::from_utf8_lossy(&bytes[start..*cursor]).into_owned())
    }
}

fn skip_space_and_comments(bytes: &[u8], cursor: &mut usize) {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
        } else {
            break;
        }
    }
}

fn parse_dim(bytes: &[u8], cursor: &mut usize, path: &Path) -> Result<usize> {
    take_token(bytes, cursor)
        .and_then(|tok| tok.parse::<usize>().ok())
        .ok_or(Error::BadMagic { path: path.into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_2x2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x40\x80\xff").unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(
            img,
            ImageU8::new(2, 2, 1, vec![0, 64, 128, 255]).unwrap()
        );
    }

    #[test]
    fn p6_red_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ppm");
        std::fs::write(&path, b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.data, vec![255, 0, 0]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.ppm");
        let data: Vec<u8> = (0..4 * 5 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = ImageU8::new(4, 5, 3, data).unwrap();
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn rejects_bad_maxval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(
            load_image(&path),
            Err(Error::UnsupportedImage { .. })
        ));
    }

    #[test]
    fn rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\n\x00\x01").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn scaling_endpoints() {
        let img = ImageU8::new(1, 2, 1, vec![0, 255]).unwrap();
        let t = image_to_tensor(&img);
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], 1.0);
    }

    #[test]
    fn scaling_midpoint_matches_f64_quotient() {
        let img = ImageU8::new(1, 1, 1, vec![128]).unwrap();
        let t = image_to_tensor(&img);
        let expected = (128.0f64 / 255.0) as f32;
        assert_eq!(t.data()[0], expected);
    }

    #[test]
    fn byte_round_trip_through_tensor() {
        let data: Vec<u8> = (0..=255).collect();
        let img = ImageU8::new(16, 16, 1, data).unwrap();
        let back = tensor_to_image(&image_to_tensor(&img)).unwrap();
        assert_eq!(back, img);
    }
}
