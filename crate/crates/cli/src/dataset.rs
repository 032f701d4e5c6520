//! Dataset generation and loading.
//!
//! Layout: `<dir>/<index>/left.ppm`, `right.ppm`, `scala.pcdm`,
//! `hdl64.pcdm` plus a `manifest` file at the root. Generation is
//! parallel across sample indices (each sample is pure in its seed) and
//! byte-identical regardless of thread count.

use std::collections::BTreeSet;
use std::path::Path;

use dsc_core::pcdm::Pcdm;
use dsc_core::rng::SplitMix64;
use dsc_core::sim::{generate_sample, Image, RigSpec, Sample};
use dsc_core::train::TrainData;

use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::{pcdm_file, ppm};

pub const TRAIN_FRACTION: f64 = 0.75;

/// Deterministic 75/25 split of `0..n` from the dataset seed.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(dsc_core::rng::substream(seed, 0x5011D));
    rng.shuffle(&mut order);
    let n_train = (n as f64 * TRAIN_FRACTION) as usize;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn write_sample(dir: &Path, sample: &Sample, rig: &RigSpec) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    ppm::write(&dir.join("left.ppm"), &sample.left)?;
    ppm::write(&dir.join("right.ppm"), &sample.right)?;
    pcdm_file::write(&dir.join("scala.pcdm"), &sample.scala, &rig.scala)?;
    pcdm_file::write(&dir.join("hdl64.pcdm"), &sample.hdl64, &rig.hdl)?;
    Ok(())
}

/// Generate `n` samples under `root` and write the manifest.
pub fn generate(root: &Path, n: usize, seed: u64, scale: f64, threads: usize) -> Result<Manifest> {
    let rig = RigSpec::at_scale(scale);
    std::fs::create_dir_all(root).map_err(|e| CliError::io(&root.display().to_string(), e))?;
    let threads = threads.max(1);
    // Chunked parallel generation, sequential writes in index order.
    let chunk = (threads * 4).max(8);
    let mut at = 0usize;
    while at < n {
        let hi = (at + chunk).min(n);
        let indices: Vec<usize> = (at..hi).collect();
        let samples: Vec<(usize, Sample)> = if threads == 1 {
            indices
                .iter()
                .map(|&i| (i, generate_sample(seed, i as u64, &rig)))
                .collect()
        } else {
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for t in 0..threads {
                    let idxs: Vec<usize> = indices
                        .iter()
                        .copied()
                        .filter(|i| i % threads == t)
                        .collect();
                    let rig = &rig;
                    handles.push(scope.spawn(move || {
                        idxs.into_iter()
                            .map(|i| (i, generate_sample(seed, i as u64, rig)))
                            .collect::<Vec<_>>()
                    }));
                }
                let mut all: Vec<(usize, Sample)> = Vec::with_capacity(indices.len());
                for h in handles {
                    all.extend(h.join().expect("generator thread panicked"));
                }
                all.sort_by_key(|(i, _)| *i);
                all
            })
        };
        for (i, sample) in &samples {
            write_sample(&root.join(i.to_string()), sample, &rig)?;
        }
        at = hi;
    }
    let (train, val) = split_indices(n, seed);
    let manifest = Manifest {
        version: 1,
        seed,
        scale,
        samples: n,
        image_height: rig.camera.height,
        image_width: rig.camera.width,
        hdl_rows: rig.hdl.rows(),
        hdl_cols: rig.hdl.cols,
        scala_rows: rig.scala.rows(),
        scala_cols: rig.scala.cols,
        train,
        val,
    };
    manifest.write(root)?;
    Ok(manifest)
}

/// Sensors a model needs from each sample directory.
#[derive(Clone, Debug, Default)]
pub struct SensorSet {
    pub left: bool,
    pub right: bool,
    pub scala: bool,
}

impl SensorSet {
    pub fn from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<SensorSet> {
        let mut set = SensorSet::default();
        for id in ids {
            match id {
                "camera_left" => set.left = true,
                "camera_right" => set.right = true,
                "scala" => set.scala = true,
                other => {
                    return Err(CliError::new(
                        crate::error::Category::Sensor,
                        format!("unknown sensor id `{other}` (expected camera_left, camera_right or scala)"),
                    ))
                }
            }
        }
        Ok(set)
    }
}

fn missing_sensor(dir: &Path, sensor: &str, file: &str) -> CliError {
    CliError::new(
        crate::error::Category::Sensor,
        format!(
            "dataset sample {} is missing sensor `{sensor}` (no {file})",
            dir.display()
        ),
    )
}

/// Load one sample directory, reading only the needed sensors; the
/// ground-truth scanner is always required. Unneeded sensors are left as
/// empty placeholders.
pub fn load_sample(dir: &Path, needed: &SensorSet, m: &Manifest) -> Result<Sample> {
    let read_image = |file: &str, sensor: &str, want: bool| -> Result<Image> {
        if !want {
            return Ok(Image {
                width: 0,
                height: 0,
                rgb: Vec::new(),
            });
        }
        let path = dir.join(file);
        if !path.exists() {
            return Err(missing_sensor(dir, sensor, file));
        }
        let img = ppm::read(&path)?;
        if (img.height, img.width) != (m.image_height, m.image_width) {
            return Err(CliError::data(format!(
                "{}: image is {}x{}, manifest says {}x{}",
                path.display(),
                img.height,
                img.width,
                m.image_height,
                m.image_width
            )));
        }
        Ok(img)
    };
    let left = read_image("left.ppm", "camera_left", needed.left)?;
    let right = read_image("right.ppm", "camera_right", needed.right)?;
    let scala = if needed.scala {
        let path = dir.join("scala.pcdm");
        if !path.exists() {
            return Err(missing_sensor(dir, "scala", "scala.pcdm"));
        }
        let (p, _) = pcdm_file::read(&path)?;
        if (p.rows, p.cols) != (m.scala_rows, m.scala_cols) {
            return Err(CliError::data(format!(
                "{}: grid {}x{} does not match manifest",
                path.display(),
                p.rows,
                p.cols
            )));
        }
        p
    } else {
        Pcdm::zeros(0, 0)
    };
    let hdl_path = dir.join("hdl64.pcdm");
    if !hdl_path.exists() {
        return Err(missing_sensor(dir, "hdl64", "hdl64.pcdm"));
    }
    let (hdl64, _) = pcdm_file::read(&hdl_path)?;
    if (hdl64.rows, hdl64.cols) != (m.hdl_rows, m.hdl_cols) {
        return Err(CliError::data(format!(
            "{}: grid {}x{} does not match manifest",
            hdl_path.display(),
            hdl64.rows,
            hdl64.cols
        )));
    }
    Ok(Sample {
        left,
        right,
        scala,
        hdl64,
    })
}

/// Load the whole dataset into memory for training/evaluation.
pub fn load(root: &Path, needed: &SensorSet) -> Result<(Manifest, TrainData)> {
    let manifest = Manifest::read(root)?;
    let rig = manifest.rig();
    let mut samples = Vec::with_capacity(manifest.samples);
    for i in 0..manifest.samples {
        samples.push(load_sample(
            &manifest.sample_dir(root, i),
            needed,
            &manifest,
        )?);
    }
    Ok((
        manifest.clone(),
        TrainData {
            samples,
            train_idx: manifest.train.clone(),
            val_idx: manifest.val.clone(),
            hdl_geom: rig.hdl,
            scala_geom: rig.scala,
        },
    ))
}

/// Validate that split lists partition the sample range without overlap.
pub fn check_split(m: &Manifest) -> Result<()> {
    let train: BTreeSet<usize> = m.train.iter().copied().collect();
    let val: BTreeSet<usize> = m.val.iter().copied().collect();
    if train.intersection(&val).next().is_some() {
        return Err(CliError::data("manifest train/val splits overlap"));
    }
    if train.len() + val.len() != m.samples {
        return Err(CliError::data(
            "manifest splits do not cover every sample exactly once",
        ));
    }
    Ok(())
}
