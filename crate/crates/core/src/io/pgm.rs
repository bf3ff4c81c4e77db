//! Netpbm grayscale images: plain (`P2`) and raw (`P5`), 8 or 16 bits.

use std::io::Write;

use super::parse_error;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples.
    pub pixels: Vec<u16>,
}

impl Pgm {
    /// Samples scaled to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        let m = f64::from(self.maxval);
        self.pixels.iter().map(|&p| f64::from(p) / m).collect()
    }

    /// Quantizes values in `[0, 1]` (clamped) to `maxval` levels.
    pub fn from_unit(width: usize, height: usize, values: &[f64], maxval: u16) -> Self {
        let m = f64::from(maxval);
        Self {
            width,
            height,
            maxval,
            pixels: values.iter().map(|&v| (v.clamp(0.0, 1.0) * m).round() as u16).collect(),
        }
    }
}

/// Header tokens with `#` comments stripped, and the byte offset after the
/// single whitespace byte that ends the header.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_error("pgm", 0, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    Ok((tokens, pos + 1))
}

pub fn read(bytes: &[u8]) -> Result<Pgm> {
    let (tok, body) = header_tokens(bytes, 4)?;
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_error("pgm", 0, format!("bad header field `{s}`")))
    };
    let (width, height, maxval) = (num(&tok[1])?, num(&tok[2])?, num(&tok[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(parse_error("pgm", 0, format!("maxval {maxval} out of range")));
    }
    let count = width * height;
    let pixels: Vec<u16> = match tok[0].as_str() {
        "P2" => {
            let text = std::str::from_utf8(&bytes[body.min(bytes.len())..])
                .map_err(|_| parse_error("pgm", 0, "plain PGM is not text"))?;
            text.split_whitespace()
                .take(count)
                .map(|t| t.parse::<u16>().map_err(|_| parse_error("pgm", 0, format!("bad sample `{t}`"))))
                .collect::<Result<_>>()?
        }
        "P5" => {
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let data = bytes.get(body..body + need).ok_or_else(|| parse_error("pgm", 0, "truncated raster"))?;
            if wide {
                data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            } else {
                data.iter().map(|&b| u16::from(b)).collect()
            }
        }
        other => return Err(parse_error("pgm", 0, format!("unsupported magic `{other}`"))),
    };
    if pixels.len() != count {
        return Err(parse_error("pgm", 0, format!("expected {count} samples, found {}", pixels.len())));
    }
    if pixels.iter().any(|&p| usize::from(p) > maxval) {
        return Err(parse_error("pgm", 0, "sample exceeds maxval"));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn read_file(path: &std::path::Path) -> Result<Pgm> {
    read(&std::fs::read(path)?).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })
}

/// Raw `P5`, big-endian when `maxval > 255`.
pub fn write_p5<W: Write>(img: &Pgm, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n{}\n", img.width, img.height, img.maxval)?;
    if img.maxval > 255 {
        let bytes: Vec<u8> = img.pixels.iter().flat_map(|p| p.to_be_bytes()).collect();
        out.write_all(&bytes)?;
    } else {
        let bytes: Vec<u8> = img.pixels.iter().map(|&p| p as u8).collect();
        out.write_all(&bytes)?;
    }
    Ok(())
}

/// Plain `P2`, one row per line.
pub fn write_p2<W: Write>(img: &Pgm, mut out: W) -> Result<()> {
    writeln!(out, "P2\n{} {}\n{}", img.width, img.height, img.maxval)?;
    for row in img.pixels.chunks(img.width.max(1)) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
