//! Point-cloud export: ASCII PLY with float x/y/z properties, and plain
//! x,y,z CSV. Comment lines carry the resolved run parameters so outputs
//! are self-describing.

use std::path::Path;

use dsc_core::pcdm::PointCloud;

use crate::error::{CliError, Result};

pub fn encode_ply(cloud: &PointCloud, comments: &[String]) -> String {
    let mut s = String::from("ply\nformat ascii 1.0\n");
    for c in comments {
        s.push_str("comment ");
        s.push_str(c);
        s.push('\n');
    }
    s.push_str(&format!("element vertex {}\n", cloud.len()));
    s.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in &cloud.points {
        s.push_str(&format!("{} {} {}\n", p[0] as f32, p[1] as f32, p[2] as f32));
    }
    s
}

pub fn encode_csv(cloud: &PointCloud, comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        s.push_str("# ");
        s.push_str(c);
        s.push('\n');
    }
    s.push_str("x,y,z\n");
    for p in &cloud.points {
        s.push_str(&format!("{},{},{}\n", p[0] as f32, p[1] as f32, p[2] as f32));
    }
    s
}

pub fn write_ply(path: &Path, cloud: &PointCloud, comments: &[String]) -> Result<()> {
    std::fs::write(path, encode_ply(cloud, comments))
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}

pub fn write_csv(path: &Path, cloud: &PointCloud, comments: &[String]) -> Result<()> {
    std::fs::write(path, encode_csv(cloud, comments))
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}
