//! Dataset manifest: a structured-text file recording the generator
//! parameters, sensor dimensions and the train/val split, enough to rebuild
//! the rig geometry and reload the dataset deterministically.

use std::path::Path;

use dsc_core::config::Doc;
use dsc_core::sim::RigSpec;

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest";

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub scale: f64,
    pub samples: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub hdl_rows: usize,
    pub hdl_cols: usize,
    pub scala_rows: usize,
    pub scala_cols: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Manifest {
    pub fn rig(&self) -> RigSpec {
        RigSpec::at_scale(self.scale)
    }

    pub fn sample_dir(&self, root: &Path, index: usize) -> std::path::PathBuf {
        root.join(index.to_string())
    }

    pub fn encode(&self) -> String {
        let list = |v: &[usize]| {
            v.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!(
            "# dataset manifest\nversion = {}\nseed = {}\nscale = {}\nsamples = {}\n\
             image_height = {}\nimage_width = {}\nhdl_rows = {}\nhdl_cols = {}\n\
             scala_rows = {}\nscala_cols = {}\ntrain = {}\nval = {}\n",
            self.version,
            self.seed,
            self.scale,
            self.samples,
            self.image_height,
            self.image_width,
            self.hdl_rows,
            self.hdl_cols,
            self.scala_rows,
            self.scala_cols,
            list(&self.train),
            list(&self.val),
        )
    }

    pub fn decode(text: &str) -> Result<Manifest> {
        let doc = Doc::parse(text).map_err(CliError::from)?;
        let top = doc
            .sections
            .first()
            .ok_or_else(|| CliError::format("manifest: empty document"))?;
        let get = |key: &str| -> Result<&str> {
            top.get(key)
                .map(|e| e.value.as_str())
                .ok_or_else(|| CliError::format(format!("manifest: missing `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| CliError::format(format!("manifest: bad `{key}`")))
        };
        let list = |key: &str| -> Result<Vec<usize>> {
            let v = get(key)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| CliError::format(format!("manifest: bad `{key}`")))
                })
                .collect()
        };
        let m = Manifest {
            version: num("version")? as u32,
            seed: get("seed")?
                .parse()
                .map_err(|_| CliError::format("manifest: bad `seed`"))?,
            scale: get("scale")?
                .parse()
                .map_err(|_| CliError::format("manifest: bad `scale`"))?,
            samples: num("samples")?,
            image_height: num("image_height")?,
            image_width: num("image_width")?,
            hdl_rows: num("hdl_rows")?,
            hdl_cols: num("hdl_cols")?,
            scala_rows: num("scala_rows")?,
            scala_cols: num("scala_cols")?,
            train: list("train")?,
            val: list("val")?,
        };
        if m.version != 1 {
            return Err(CliError::format(format!(
                "manifest: unsupported version {}",
                m.version
            )));
        }
        for &i in m.train.iter().chain(&m.val) {
            if i >= m.samples {
                return Err(CliError::format(format!(
                    "manifest: split index {i} out of range"
                )));
            }
        }
        Ok(m)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        std::fs::write(&path, self.encode())
            .map_err(|e| CliError::io(&path.display().to_string(), e))
    }

    pub fn read(root: &Path) -> Result<Manifest> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::io(&path.display().to_string(), e))?;
        Manifest::decode(&text)
    }
}
