//! File formats: PFM for float rasters, 8-bit PNG previews and masks.
//!
//! PFM files are written little-endian (negative scale `-1.0`) with rows
//! stored bottom-to-top as the format prescribes. Only 1- and 3-channel
//! images can be represented. All writers go through a temp file in the
//! destination directory followed by a rename.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{ExtendedColorType, ImageEncoder};

use crate::error::{PanoError, Result};
use crate::image::{Dims, EquirectImage, Mask};

fn format_err(path: &Path, message: impl Into<String>) -> PanoError {
    PanoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| format_err(path, "not a file path"))?
        .to_string_lossy();
    let tmp: PathBuf = match dir {
        Some(d) => d.join(format!(".{name}.tmp-{}", std::process::id())),
        None => PathBuf::from(format!(".{name}.tmp-{}", std::process::id())),
    };
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn encode_pfm(img: &EquirectImage) -> Result<Vec<u8>> {
    let tag = match img.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(PanoError::domain(format!(
                "PFM stores 1 or 3 channels, image has {c}"
            )))
        }
    };
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * c * 4);
    for row in img.rows().rev() {
        for &x in row {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm(img: &EquirectImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pfm(img)?)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<EquirectImage> {
    let path = path.as_ref();
    let mut reader = BufReader::new(fs::File::open(path)?);
    decode_pfm(&mut reader).map_err(|e| match e {
        PanoError::Format { message, .. } => format_err(path, message),
        other => other,
    })
}

pub fn decode_pfm(reader: &mut impl BufRead) -> Result<EquirectImage> {
    let here = Path::new("<pfm>");
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let channels = match line.trim() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format_err(here, format!("bad PFM tag {other:?}"))),
    };
    line.clear();
    reader.read_line(&mut line)?;
    let parts: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format_err(here, format!("bad PFM size line {:?}", line.trim())))?;
    let [w, h] = parts[..] else {
        return Err(format_err(here, "PFM size line needs width and height"));
    };
    line.clear();
    reader.read_line(&mut line)?;
    let scale: f32 = line
        .trim()
        .parse()
        .map_err(|_| format_err(here, format!("bad PFM scale {:?}", line.trim())))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(here, "PFM scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    let dims = Dims::new(h, w)?;
    let mut buf = vec![0u8; h * w * channels * 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| format_err(here, "truncated PFM payload"))?;
    let row_len = w * channels;
    let mut data = vec![0.0f64; h * row_len];
    for (file_row, chunk) in buf.chunks_exact(row_len * 4).enumerate() {
        let v = h - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let bytes = [b[0], b[1], b[2], b[3]];
            let x = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
            data[v * row_len + i] = x as f64;
        }
    }
    EquirectImage::from_vec(dims, channels, data)
}

/// How float values are mapped to 8-bit preview pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preview {
    /// `(exposure · x)^(1/2.2)`, clamped to [0, 1].
    Gamma { exposure: f64 },
    /// `(x + 1) / 2` for signed unit data such as normals.
    Signed,
}

impl Preview {
    /// Gamma preview whose exposure maps the 99th percentile to white.
    pub fn auto(img: &EquirectImage) -> Preview {
        let mut vals: Vec<f64> = img.data().iter().copied().filter(|x| *x > 0.0).collect();
        if vals.is_empty() {
            return Preview::Gamma { exposure: 1.0 };
        }
        let k = ((vals.len() - 1) as f64 * 0.99) as usize;
        let (_, p99, _) = vals.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
        Preview::Gamma {
            exposure: 1.0 / *p99,
        }
    }

    /// Maps one value to an 8-bit level.
    pub fn encode(&self, x: f64) -> u8 {
        let y = match *self {
            Preview::Gamma { exposure } => (exposure * x).max(0.0).powf(1.0 / 2.2),
            Preview::Signed => 0.5 * (x + 1.0),
        };
        (y.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

fn png_bytes(
    width: usize,
    height: usize,
    pixels: &[u8],
    color: ExtendedColorType,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        pixels,
        width as u32,
        height as u32,
        color,
    )?;
    Ok(out)
}

/// 8-bit PNG preview of a 1- or 3-channel image, optionally with an alpha
/// channel taken from `alpha`.
pub fn write_png_preview(
    img: &EquirectImage,
    preview: Preview,
    alpha: Option<&Mask>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let gray = img.channels() == 1;
    if !gray && img.channels() != 3 {
        return Err(PanoError::domain("previews need 1 or 3 channels"));
    }
    if let Some(m) = alpha {
        m.check_dims(img.dims())?;
    }
    let mut px = Vec::with_capacity(h * w * 4);
    for i in 0..h * w {
        let p = img.at(i);
        if gray {
            px.push(preview.encode(p[0]));
        } else {
            px.extend(p.iter().map(|&x| preview.encode(x)));
        }
        if let Some(m) = alpha {
            px.push(if m.get(i) { 255 } else { 0 });
        }
    }
    let color = match (gray, alpha.is_some()) {
        (true, false) => ExtendedColorType::L8,
        (true, true) => ExtendedColorType::La8,
        (false, false) => ExtendedColorType::Rgb8,
        (false, true) => ExtendedColorType::Rgba8,
    };
    write_atomic(path.as_ref(), &png_bytes(w, h, &px, color)?)
}

/// RGBA PNG from raw rows (used for non-panoramic outputs such as probes).
pub fn write_png_rgba(
    width: usize,
    height: usize,
    rgba: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(
        path.as_ref(),
        &png_bytes(width, height, rgba, ExtendedColorType::Rgba8)?,
    )
}

/// Mask as a single-channel PNG with values 0 and 255.
pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let d = mask.dims();
    let px: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    write_atomic(
        path.as_ref(),
        &png_bytes(d.width, d.height, &px, ExtendedColorType::L8)?,
    )
}

/// Reads a mask PNG; any non-zero luma counts as set.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let img = image::open(path.as_ref())?.to_luma8();
    let dims = Dims::new(img.height() as usize, img.width() as usize)?;
    Mask::from_vec(dims, img.as_raw().iter().map(|&x| x > 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn pfm_round_trip_preserves_orientation() {
        let dims = Dims::new(2, 4).unwrap();
        let img = EquirectImage::from_fn(dims, 3, |u, v, p| {
            p[0] = u as f64;
            p[1] = v as f64;
            p[2] = 0.25;
        })
        .unwrap();
        let bytes = encode_pfm(&img).unwrap();
        assert!(bytes.starts_with(b"PF\n4 2\n-1.0\n"));
        // First stored row is the bottom one.
        let first = f32::from_le_bytes(bytes[12 + 4..12 + 8].try_into().unwrap());
        assert_eq!(first, 1.0);
        let back = decode_pfm(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pfm_big_endian_and_errors() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let img = decode_pfm(&mut Cursor::new(bytes.clone())).unwrap();
        assert_eq!(img.data(), &[1.5, -2.0]);

        assert!(decode_pfm(&mut Cursor::new(bytes[..bytes.len() - 1].to_vec())).is_err());
        assert!(decode_pfm(&mut Cursor::new(b"P6\n2 1\n1.0\n".to_vec())).is_err());
        let two = EquirectImage::zeros(Dims::new(1, 2).unwrap(), 2).unwrap();
        assert!(encode_pfm(&two).is_err());
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(2, 4).unwrap();
        let mask = Mask::from_vec(dims, (0..8).map(|i| i % 3 == 0).collect()).unwrap();
        let path = dir.path().join("m.png");
        write_mask_png(&mask, &path).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), mask);
        // No temp files left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
