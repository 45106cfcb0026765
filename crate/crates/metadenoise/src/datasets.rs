//! CSV signal files and binary PGM images.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use metadenoise_core::Tensor;

use crate::{Error, Result};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses comma-separated records, one signal per line.
pub fn parse_signals(text: &str, path: &Path) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(path, format!("line {}: malformed number `{}`", i + 1, f)))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(Tensor::vector(values)?);
    }
    if out.is_empty() {
        return Err(metadenoise_core::Error::Argument(format!("{}: no signals", path.display())).into());
    }
    Ok(out)
}

pub fn load_signal_dataset(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    parse_signals(&text, path)
}

/// One line per signal with shortest round-trip formatting.
pub fn save_signal_dataset(path: impl AsRef<Path>, signals: &[Tensor]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for s in signals {
        let fields: Vec<String> = s.data().iter().map(|v| v.to_string()).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// header tokens are separated by whitespace; `#` starts a comment up to the line end
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Decodes a binary PGM (P5) to `[rows, cols]` with values in `[0, 1]`.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |m: &str| Error::format(path, format!("not a valid P5 PGM: {}", m));
    if !bytes.starts_with(b"P5") {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut field = |name: &str| -> Result<usize> {
        header_token(bytes, &mut pos).and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| bad(&format!("bad {}", name)))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("dimensions and maxval must be in range"));
    }
    // exactly one whitespace byte before the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("truncated header"));
    }
    pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let count = width.checked_mul(height).ok_or_else(|| bad("image too large"))?;
    let raster = &bytes[pos..];
    if raster.len() < count * depth {
        return Err(bad(&format!("raster has {} bytes, expected {}", raster.len(), count * depth)));
    }
    let scale = maxval as f64;
    let data: Vec<f64> = if depth == 1 {
        raster[..count].iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster[..2 * count].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale).collect()
    };
    if data.iter().any(|&v| v > 1.0) {
        return Err(bad("sample exceeds maxval"));
    }
    Ok(Tensor::matrix(height, width, data)?)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    parse_pgm(&read(path)?, path)
}

/// Writes values clamped to `[0, 1]` and quantized to `maxval` (8 or 16 bit).
pub fn encode_pgm(image: &Tensor, maxval: u16) -> Result<Vec<u8>> {
    let (h, w) = match *image.shape() {
        [h, w] => (h, w),
        _ => return Err(metadenoise_core::Error::Dimension(format!("PGM needs a 2-D image, got {:?}", image.shape())).into()),
    };
    if maxval == 0 {
        return Err(metadenoise_core::Error::Argument("PGM maxval must be positive".into()).into());
    }
    let mut out = format!("P5\n{} {}\n{}\n", w, h, maxval).into_bytes();
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u16;
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn save_pgm(path: impl AsRef<Path>, image: &Tensor, maxval: u16) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(image, maxval)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// `*.pgm` files of a directory in filename order.
pub fn load_image_dataset(dir: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    if files.is_empty() {
        return Err(metadenoise_core::Error::Argument(format!("{}: no PGM images", dir.display())).into());
    }
    files.sort();
    files.iter().map(load_pgm).collect()
}
