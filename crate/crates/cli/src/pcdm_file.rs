//! The PCDM binary file: magic "PCDM", u16 version, u32 rows, u32 cols,
//! f32 azimuth min/max, f32 elevations[rows], f32 depth[rows*cols]
//! row-major, u8 mask[rows*cols] row-major. Little-endian throughout.
//! Reads validate the depth/mask invariants and reject corrupt files.

use std::path::Path;

use dsc_core::pcdm::{LidarGeometry, Pcdm};

use crate::bytes::{Reader, Writer};
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"PCDM";
pub const VERSION: u16 = 1;

pub fn encode(pcdm: &Pcdm, geometry: &LidarGeometry) -> Result<Vec<u8>> {
    if pcdm.rows != geometry.rows() || pcdm.cols != geometry.cols {
        return Err(CliError::format(format!(
            "pcdm grid {}x{} does not match geometry {}x{}",
            pcdm.rows,
            pcdm.cols,
            geometry.rows(),
            geometry.cols
        )));
    }
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(pcdm.rows as u32);
    w.u32(pcdm.cols as u32);
    w.f32(geometry.az_min as f32);
    w.f32(geometry.az_max as f32);
    for &e in &geometry.elevations {
        w.f32(e as f32);
    }
    for &d in &pcdm.depth {
        w.f32(d);
    }
    w.bytes(&pcdm.mask);
    Ok(w.buf)
}

/// Decode and validate. The format does not carry a max range; the returned
/// geometry uses infinity, callers that know the sensor override it.
pub fn decode(data: &[u8]) -> Result<(Pcdm, LidarGeometry)> {
    let mut r = Reader::new(data, "pcdm");
    let magic = r.bytes(4)?;
    if magic != MAGIC {
        return Err(CliError::format("pcdm: bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CliError::format(format!(
            "pcdm: unsupported version {version}"
        )));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows == 0 || cols == 0 || rows * cols > 64 << 20 {
        return Err(CliError::format(format!("pcdm: bad grid {rows}x{cols}")));
    }
    let az_min = r.f32()? as f64;
    let az_max = r.f32()? as f64;
    let mut elevations = Vec::with_capacity(rows);
    for _ in 0..rows {
        elevations.push(r.f32()? as f64);
    }
    let mut depth = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        depth.push(r.f32()?);
    }
    let mask = r.bytes(rows * cols)?.to_vec();
    r.finish()?;
    let geometry = LidarGeometry {
        elevations,
        az_min,
        az_max,
        cols,
        max_range: f64::INFINITY,
    };
    geometry.validate().map_err(CliError::from)?;
    let pcdm = Pcdm {
        rows,
        cols,
        depth,
        mask,
    };
    pcdm.validate(geometry.max_range).map_err(CliError::from)?;
    Ok((pcdm, geometry))
}

pub fn write(path: &Path, pcdm: &Pcdm, geometry: &LidarGeometry) -> Result<()> {
    let data = encode(pcdm, geometry)?;
    std::fs::write(path, data).map_err(|e| CliError::io(&path.display().to_string(), e))
}

pub fn read(path: &Path) -> Result<(Pcdm, LidarGeometry)> {
    let data =
        std::fs::read(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    decode(&data)
}
