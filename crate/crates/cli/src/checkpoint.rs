//! The DSCW named-tensor container used for model weights and the momentum
//! sidecar: magic "DSCW", u16 version, u32 tensor count; per tensor a u16
//! name length, the name bytes, u8 ndim, u32 dims, then the f32 payload.
//! Little-endian, payload in canonical parameter order.

use std::path::{Path, PathBuf};

use crate::bytes::{Reader, Writer};
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"DSCW";
pub const VERSION: u16 = 1;

pub type TensorEntry = (String, Vec<usize>, Vec<f32>);

pub fn encode(entries: &[TensorEntry]) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(entries.len() as u32);
    for (name, dims, data) in entries {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(CliError::format(format!("tensor name too long: {name}")));
        }
        if dims.len() > u8::MAX as usize {
            return Err(CliError::format(format!("tensor rank too high: {name}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(CliError::format(format!(
                "tensor {name}: dims {:?} do not match payload {}",
                dims,
                data.len()
            )));
        }
        w.u16(nb.len() as u16);
        w.bytes(nb);
        w.u8(dims.len() as u8);
        for &d in dims {
            w.u32(d as u32);
        }
        for &v in data {
            w.f32(v);
        }
    }
    Ok(w.buf)
}

pub fn decode(data: &[u8]) -> Result<Vec<TensorEntry>> {
    let mut r = Reader::new(data, "dscw");
    if r.bytes(4)? != MAGIC {
        return Err(CliError::format("dscw: bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CliError::format(format!(
            "dscw: unsupported version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?.to_vec())
            .map_err(|_| CliError::format("dscw: tensor name is not UTF-8"))?;
        let ndim = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        if n > 256 << 20 {
            return Err(CliError::format(format!("dscw: tensor {name} too large")));
        }
        let mut payload = Vec::with_capacity(n);
        for _ in 0..n {
            payload.push(r.f32()?);
        }
        entries.push((name, dims, payload));
    }
    r.finish()?;
    Ok(entries)
}

pub fn write(path: &Path, entries: &[TensorEntry]) -> Result<()> {
    std::fs::write(path, encode(entries)?)
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}

pub fn read(path: &Path) -> Result<Vec<TensorEntry>> {
    let data =
        std::fs::read(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    decode(&data)
}

/// Checkpoint file family for one iteration: weights, momentum sidecar,
/// structured-text meta.
pub struct CheckpointPaths {
    pub weights: PathBuf,
    pub momentum: PathBuf,
    pub meta: PathBuf,
}

pub fn checkpoint_paths(dir: &Path, iteration: usize) -> CheckpointPaths {
    CheckpointPaths {
        weights: dir.join(format!("ckpt_{iteration:08}.dscw")),
        momentum: dir.join(format!("ckpt_{iteration:08}.mom.dscw")),
        meta: dir.join(format!("ckpt_{iteration:08}.meta")),
    }
}

/// Find the latest checkpoint iteration in a directory by filename.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<usize>> {
    let mut best = None;
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(None),
    };
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(&dir.display().to_string(), e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(rest) = name.strip_prefix("ckpt_") {
            if let Some(iter_str) = rest.strip_suffix(".dscw") {
                if !iter_str.contains('.') {
                    if let Ok(it) = iter_str.parse::<usize>() {
                        best = Some(best.map_or(it, |b: usize| b.max(it)));
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Iteration encoded in a weights filename, e.g. `ckpt_00001000.dscw`.
pub fn iteration_of(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_string_lossy().into_owned();
    let rest = name.strip_prefix("ckpt_")?.strip_suffix(".dscw")?;
    if rest.contains('.') {
        return None;
    }
    rest.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trips_byte_exact() {
        let entries = vec![
            ("a.w".to_string(), vec![2, 3], vec![1.0, -2.5, 0.0, 4.0, 5.5, -0.125]),
            ("a.b".to_string(), vec![3], vec![0.0, 1.0, 2.0]),
        ];
        let bytes = encode(&entries).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(entries, back);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn bad_magic_rejected() {
        let entries = vec![("x".to_string(), vec![1], vec![7.0])];
        let mut bytes = encode(&entries).unwrap();
        bytes[1] = b'?';
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn latest_picks_the_highest_iteration() {
        let dir = std::env::temp_dir().join(format!("dscw_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for it in [100, 2000, 350] {
            let p = checkpoint_paths(&dir, it);
            write(&p.weights, &[]).unwrap();
            write(&p.momentum, &[]).unwrap();
        }
        assert_eq!(latest_checkpoint(&dir).unwrap(), Some(2000));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
