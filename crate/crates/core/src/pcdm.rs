//! Point Cloud as a Dense Matrix: polar projection of 3-D returns onto a
//! (laser row, azimuth column) grid holding a depth matrix and a binary
//! return mask, plus the inverse reconstruction and horizontal cropping.
//!
//! Conventions: sensor frame is x forward, y left, z up. Column 0 sits at
//! the maximum azimuth (leftmost), columns increase rightward. Rows follow
//! the laser elevation table, strictly decreasing top to bottom. Cell
//! collisions keep the nearest return. Depth values are stored as f32, all
//! geometry math runs in f64.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::DscError;

/// A 3-D point cloud in the sensor frame, meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Optional per-point reflectivity in [0,1], parallel to `points`.
    pub reflectivity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Scanner geometry: per-row elevation angles and the azimuth span covered
/// by the columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarGeometry {
    /// Per-row elevation in radians, strictly decreasing top to bottom.
    pub elevations: Vec<f64>,
    /// Azimuth of the right edge of the last column, radians.
    pub az_min: f64,
    /// Azimuth of the left edge of column 0, radians.
    pub az_max: f64,
    pub cols: usize,
    pub max_range: f64,
}

impl LidarGeometry {
    /// Uniform elevation table from `elev_top` down to `elev_bottom`.
    pub fn uniform(
        rows: usize,
        cols: usize,
        elev_top: f64,
        elev_bottom: f64,
        az_min: f64,
        az_max: f64,
        max_range: f64,
    ) -> Self {
        let mut elevations = Vec::with_capacity(rows);
        if rows == 1 {
            elevations.push((elev_top + elev_bottom) / 2.0);
        } else {
            let step = (elev_top - elev_bottom) / (rows - 1) as f64;
            for r in 0..rows {
                elevations.push(elev_top - step * r as f64);
            }
        }
        LidarGeometry {
            elevations,
            az_min,
            az_max,
            cols,
            max_range,
        }
    }

    pub fn rows(&self) -> usize {
        self.elevations.len()
    }

    pub fn validate(&self) -> Result<(), DscError> {
        if self.elevations.is_empty() || self.cols == 0 {
            return Err(DscError::Geometry {
                message: String::from("geometry needs at least one row and one column"),
            });
        }
        if !(self.az_max > self.az_min) {
            return Err(DscError::Geometry {
                message: String::from("azimuth span must be positive"),
            });
        }
        if !(self.max_range > 0.0) {
            return Err(DscError::Geometry {
                message: String::from("max_range must be positive"),
            });
        }
        for pair in self.elevations.windows(2) {
            if !(pair[0] > pair[1]) {
                return Err(DscError::Geometry {
                    message: String::from("elevations must strictly decrease top to bottom"),
                });
            }
        }
        if self.elevations.iter().any(|e| !e.is_finite()) {
            return Err(DscError::Geometry {
                message: String::from("elevations must be finite"),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn col_width(&self) -> f64 {
        (self.az_max - self.az_min) / self.cols as f64
    }

    /// Azimuth of a column center.
    #[inline]
    pub fn cell_azimuth(&self, col: usize) -> f64 {
        self.az_max - (col as f64 + 0.5) * self.col_width()
    }

    /// Unit ray direction through a cell center.
    pub fn cell_dir(&self, row: usize, col: usize) -> [f64; 3] {
        let e = self.elevations[row];
        let az = self.cell_azimuth(col);
        let (se, ce) = (libm::sin(e), libm::cos(e));
        let (sa, ca) = (libm::sin(az), libm::cos(az));
        [ce * ca, ce * sa, se]
    }

    /// Column for an azimuth, or None outside the span.
    pub fn azimuth_col(&self, theta: f64) -> Option<usize> {
        if theta < self.az_min || theta > self.az_max {
            return None;
        }
        let c = ((self.az_max - theta) / self.col_width()) as usize;
        Some(c.min(self.cols - 1))
    }

    /// Nearest elevation row for `phi`, or None when `phi` falls outside the
    /// vertical field of view (half an adjacent row gap beyond each end).
    pub fn nearest_row(&self, phi: f64) -> Option<usize> {
        let n = self.elevations.len();
        if n == 1 {
            // Single-row scanners accept half a column width of slack.
            if (phi - self.elevations[0]).abs() <= self.col_width() / 2.0 {
                return Some(0);
            }
            return None;
        }
        let top_gap = self.elevations[0] - self.elevations[1];
        let bottom_gap = self.elevations[n - 2] - self.elevations[n - 1];
        if phi > self.elevations[0] + top_gap / 2.0
            || phi < self.elevations[n - 1] - bottom_gap / 2.0
        {
            return None;
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (r, &e) in self.elevations.iter().enumerate() {
            let d = (phi - e).abs();
            if d < best_d {
                best_d = d;
                best = r;
            }
        }
        Some(best)
    }
}

/// Paired depth matrix (meters, 0 at non-returns) and binary return mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Pcdm {
    pub rows: usize,
    pub cols: usize,
    /// Row-major depth, f32 like the on-disk format.
    pub depth: Vec<f32>,
    /// Row-major mask, 0 or 1.
    pub mask: Vec<u8>,
}

impl Pcdm {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Pcdm {
            rows,
            cols,
            depth: vec![0.0; rows * cols],
            mask: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn set_return(&mut self, r: usize, c: usize, depth: f32) {
        let i = self.idx(r, c);
        self.depth[i] = depth;
        self.mask[i] = 1;
    }

    pub fn returns(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Check the representation invariants: mask is binary, depth > 0 iff
    /// mask = 1, depth finite and within `max_range`.
    pub fn validate(&self, max_range: f64) -> Result<(), DscError> {
        if self.depth.len() != self.rows * self.cols || self.mask.len() != self.rows * self.cols {
            return Err(DscError::Geometry {
                message: String::from("pcdm buffers do not match rows*cols"),
            });
        }
        for i in 0..self.depth.len() {
            let d = self.depth[i];
            let m = self.mask[i];
            if m > 1 {
                return Err(DscError::Geometry {
                    message: format!("pcdm mask at {i} is {m}, must be 0 or 1"),
                });
            }
            if !d.is_finite() {
                return Err(DscError::Geometry {
                    message: format!("pcdm depth at {i} is not finite"),
                });
            }
            if m == 1 && !(d > 0.0) {
                return Err(DscError::Geometry {
                    message: format!("pcdm cell {i} has mask 1 but depth {d}"),
                });
            }
            if m == 0 && d != 0.0 {
                return Err(DscError::Geometry {
                    message: format!("pcdm cell {i} has mask 0 but depth {d}"),
                });
            }
            if m == 1 && d as f64 > max_range {
                return Err(DscError::Geometry {
                    message: format!("pcdm depth {d} exceeds max range {max_range}"),
                });
            }
        }
        Ok(())
    }
}

/// Project a point cloud onto the polar grid. Points outside the field of
/// view or beyond max range are dropped; colliding points keep the nearest.
pub fn project(cloud: &PointCloud, geometry: &LidarGeometry) -> Result<Pcdm, DscError> {
    geometry.validate()?;
    let mut pcdm = Pcdm::zeros(geometry.rows(), geometry.cols);
    for p in &cloud.points {
        let (x, y, z) = (p[0], p[1], p[2]);
        if !x.is_finite() || !y.is_finite() || !z.is_finite() {
            return Err(DscError::Geometry {
                message: String::from("point cloud contains non-finite coordinates"),
            });
        }
        let r = libm::sqrt(x * x + y * y + z * z);
        if !(r > 0.0) || r > geometry.max_range {
            continue;
        }
        let theta = libm::atan2(y, x);
        let phi = libm::asin(z / r);
        let (Some(col), Some(row)) = (geometry.azimuth_col(theta), geometry.nearest_row(phi))
        else {
            continue;
        };
        let i = pcdm.idx(row, col);
        if pcdm.mask[i] == 0 || (r as f32) < pcdm.depth[i] {
            pcdm.depth[i] = r as f32;
            pcdm.mask[i] = 1;
        }
    }
    Ok(pcdm)
}

/// Reconstruct one point per valid cell at the cell-center ray times depth.
pub fn unproject(pcdm: &Pcdm, geometry: &LidarGeometry) -> Result<PointCloud, DscError> {
    geometry.validate()?;
    pcdm.validate(geometry.max_range)?;
    if pcdm.rows != geometry.rows() || pcdm.cols != geometry.cols {
        return Err(DscError::ShapeMismatch {
            context: "unproject: pcdm vs geometry",
            expected: vec![geometry.rows(), geometry.cols],
            got: vec![pcdm.rows, pcdm.cols],
        });
    }
    let mut points = Vec::with_capacity(pcdm.returns());
    for r in 0..pcdm.rows {
        for c in 0..pcdm.cols {
            let i = pcdm.idx(r, c);
            if pcdm.mask[i] == 1 {
                let dir = geometry.cell_dir(r, c);
                let d = pcdm.depth[i] as f64;
                points.push([dir[0] * d, dir[1] * d, dir[2] * d]);
            }
        }
    }
    Ok(PointCloud {
        points,
        reflectivity: None,
    })
}

/// Drop columns whose centers fall outside a horizontal field of view
/// centered on the forward axis. Cell centers and widths are preserved, so
/// cropped grids re-bin exactly.
pub fn crop_to_fov(
    pcdm: &Pcdm,
    geometry: &LidarGeometry,
    horizontal_fov: f64,
) -> Result<(Pcdm, LidarGeometry), DscError> {
    geometry.validate()?;
    if pcdm.rows != geometry.rows() || pcdm.cols != geometry.cols {
        return Err(DscError::ShapeMismatch {
            context: "crop_to_fov: pcdm vs geometry",
            expected: vec![geometry.rows(), geometry.cols],
            got: vec![pcdm.rows, pcdm.cols],
        });
    }
    let half = horizontal_fov / 2.0;
    if !(horizontal_fov > 0.0) || -half < geometry.az_min || half > geometry.az_max {
        return Err(DscError::Geometry {
            message: format!(
                "crop fov {horizontal_fov} not contained in span [{}, {}]",
                geometry.az_min, geometry.az_max
            ),
        });
    }
    let keep: Vec<usize> = (0..geometry.cols)
        .filter(|&c| geometry.cell_azimuth(c).abs() <= half)
        .collect();
    if keep.is_empty() {
        return Err(DscError::Geometry {
            message: String::from("crop fov keeps no columns"),
        });
    }
    // Columns are contiguous because cell_azimuth decreases monotonically.
    let first = keep[0];
    let last = *keep.last().unwrap();
    let w = geometry.col_width();
    let new_cols = last - first + 1;
    let new_geom = LidarGeometry {
        elevations: geometry.elevations.clone(),
        az_max: geometry.az_max - first as f64 * w,
        az_min: geometry.az_max - (last + 1) as f64 * w,
        cols: new_cols,
        max_range: geometry.max_range,
    };
    let mut out = Pcdm::zeros(pcdm.rows, new_cols);
    for r in 0..pcdm.rows {
        for (nc, oc) in (first..=last).enumerate() {
            let src = pcdm.idx(r, oc);
            let dst = out.idx(r, nc);
            out.depth[dst] = pcdm.depth[src];
            out.mask[dst] = pcdm.mask[src];
        }
    }
    Ok((out, new_geom))
}
