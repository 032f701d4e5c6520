//! Binary PPM (P6, 8-bit) image IO. The in-memory `Image` payload is the
//! PPM pixel stream, so writes are header + raw copy.

use std::path::Path;

use dsc_core::sim::Image;

use crate::error::{CliError, Result};

pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.rgb);
    out
}

pub fn decode(data: &[u8]) -> Result<Image> {
    // Header: "P6" <ws> width <ws> height <ws> maxval <single ws> payload.
    let mut pos = 0usize;
    let mut token = |data: &[u8]| -> Result<String> {
        while pos < data.len() && (data[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
        }
        while pos < data.len() && (data[pos] as char).is_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !(data[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::format("ppm: truncated header"));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    if token(data)? != "P6" {
        return Err(CliError::format("ppm: not a P6 file"));
    }
    let width: usize = token(data)?
        .parse()
        .map_err(|_| CliError::format("ppm: bad width"))?;
    let height: usize = token(data)?
        .parse()
        .map_err(|_| CliError::format("ppm: bad height"))?;
    let maxval: usize = token(data)?
        .parse()
        .map_err(|_| CliError::format("ppm: bad maxval"))?;
    if maxval != 255 {
        return Err(CliError::format("ppm: only 8-bit images supported"));
    }
    pos += 1; // the single whitespace after maxval
    let need = width * height * 3;
    if data.len() < pos + need {
        return Err(CliError::format("ppm: truncated payload"));
    }
    Ok(Image {
        width,
        height,
        rgb: data[pos..pos + need].to_vec(),
    })
}

pub fn write(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode(img)).map_err(|e| CliError::io(&path.display().to_string(), e))
}

pub fn read(path: &Path) -> Result<Image> {
    let data =
        std::fs::read(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    decode(&data)
}
