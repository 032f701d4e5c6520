//! Depth-estimation metrics, return-classifier error, and automotive metric
//! zones.
//!
//! Metrics are evaluated over ground-truth-valid cells only (the return
//! classifier over all cells). Predicted depth is clamped to >= 1 mm before
//! logs and inverses. Reductions use pairwise summation so results do not
//! depend on how work is split across threads.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::{Doc, Section};
use crate::pcdm::{LidarGeometry, Pcdm};
use crate::DscError;

/// Clamp floor for predicted depth ahead of logs/inverses.
pub const DEPTH_CLAMP_M: f64 = 0.001;

/// Distance band plus horizontal field of view centered on the forward axis.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricZone {
    pub name: String,
    pub min_m: f64,
    pub max_m: f64,
    pub hfov_deg: f64,
}

impl MetricZone {
    pub fn validate(&self) -> Result<(), DscError> {
        if !(self.min_m >= 0.0 && self.max_m > self.min_m) {
            return Err(DscError::Invalid {
                message: format!("zone {}: need 0 <= min < max", self.name),
            });
        }
        if !(self.hfov_deg > 0.0) {
            return Err(DscError::Invalid {
                message: format!("zone {}: fov must be positive", self.name),
            });
        }
        Ok(())
    }
}

/// The three shipped automotive zones.
pub fn default_zones() -> Vec<MetricZone> {
    alloc::vec![
        MetricZone {
            name: "Parking Assist".to_string(),
            min_m: 0.0,
            max_m: 10.0,
            hfov_deg: 44.0,
        },
        MetricZone {
            name: "Collision Detection (Urban)".to_string(),
            min_m: 0.0,
            max_m: 30.0,
            hfov_deg: 27.66,
        },
        MetricZone {
            name: "Adaptive Cruise Control (Highway)".to_string(),
            min_m: 0.0,
            max_m: 100.0,
            hfov_deg: 11.06,
        },
    ]
}

/// Parse `[zone <name>]` sections with `min`, `max`, `hfov` keys (meters,
/// meters, degrees).
pub fn zones_from_doc(doc: &Doc) -> Result<Vec<MetricZone>, DscError> {
    fn num(sec: &Section, key: &str) -> Result<f64, DscError> {
        let e = sec.require(key)?;
        e.value.parse::<f64>().map_err(|_| DscError::Config {
            line: e.line,
            message: format!("zone `{}`: bad number for {key}", sec.arg.as_deref().unwrap_or("")),
        })
    }
    let mut zones = Vec::new();
    for sec in doc.sections_named("zone") {
        let name = sec.arg.clone().ok_or(DscError::Config {
            line: sec.line,
            message: "zone section needs a name: [zone <name>]".to_string(),
        })?;
        let z = MetricZone {
            name,
            min_m: num(sec, "min")?,
            max_m: num(sec, "max")?,
            hfov_deg: num(sec, "hfov")?,
        };
        z.validate()?;
        zones.push(z);
    }
    Ok(zones)
}

/// The four depth metrics over one evaluation set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DepthMetrics {
    /// Relative absolute error, percent.
    pub abs_rel_pct: f64,
    /// Relative squared error, percent.
    pub sq_rel_pct: f64,
    /// Root mean squared inverse-depth error, 1/km.
    pub irmse_inv_km: f64,
    /// Scale-invariant logarithmic error, 100 * sqrt(variance form).
    pub silog: f64,
    pub n: usize,
}

/// Pairwise (cascade) summation; deterministic and accurate.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Core metric computation over parallel prediction / ground-truth arrays
/// (meters). Errors on an empty set.
pub fn depth_metrics(pred: &[f64], gt: &[f64]) -> Result<DepthMetrics, DscError> {
    if pred.len() != gt.len() {
        return Err(DscError::ShapeMismatch {
            context: "depth_metrics",
            expected: alloc::vec![gt.len()],
            got: alloc::vec![pred.len()],
        });
    }
    let n = pred.len();
    if n == 0 {
        return Err(DscError::EmptyEvaluation);
    }
    let nf = n as f64;
    let mut abs_terms = Vec::with_capacity(n);
    let mut sq_terms = Vec::with_capacity(n);
    let mut inv_terms = Vec::with_capacity(n);
    let mut d_terms = Vec::with_capacity(n);
    let mut d2_terms = Vec::with_capacity(n);
    for i in 0..n {
        let y_star = gt[i];
        let y = pred[i];
        let yc = y.max(DEPTH_CLAMP_M);
        abs_terms.push((y - y_star).abs() / y_star);
        sq_terms.push((y - y_star) * (y - y_star) / (y_star * y_star));
        let inv_diff = 1000.0 / yc - 1000.0 / y_star;
        inv_terms.push(inv_diff * inv_diff);
        let d = libm::log(yc) - libm::log(y_star);
        d_terms.push(d);
        d2_terms.push(d * d);
    }
    let mean_d = pairwise_sum(&d_terms) / nf;
    let mean_d2 = pairwise_sum(&d2_terms) / nf;
    let var = (mean_d2 - mean_d * mean_d).max(0.0);
    Ok(DepthMetrics {
        abs_rel_pct: 100.0 * pairwise_sum(&abs_terms) / nf,
        sq_rel_pct: 100.0 * pairwise_sum(&sq_terms) / nf,
        irmse_inv_km: libm::sqrt(pairwise_sum(&inv_terms) / nf),
        silog: 100.0 * libm::sqrt(var),
        n,
    })
}

/// Percent of cells where the thresholded classifier disagrees with the
/// ground-truth mask, over all cells. `sigmoid(x) >= 0.5` iff `x >= 0`.
pub fn return_classifier_error(logits: &[f64], mask: &[u8]) -> Result<f64, DscError> {
    if logits.len() != mask.len() {
        return Err(DscError::ShapeMismatch {
            context: "return_classifier_error",
            expected: alloc::vec![mask.len()],
            got: alloc::vec![logits.len()],
        });
    }
    if logits.is_empty() {
        return Err(DscError::EmptyEvaluation);
    }
    let mut wrong = 0usize;
    for (x, &m) in logits.iter().zip(mask) {
        let predicted = *x >= 0.0;
        if predicted != (m == 1) {
            wrong += 1;
        }
    }
    Ok(100.0 * wrong as f64 / logits.len() as f64)
}

/// Indices of ground-truth-valid cells whose range and cell-center azimuth
/// fall inside the zone.
pub fn zone_filter(gt: &Pcdm, geometry: &LidarGeometry, zone: &MetricZone) -> Vec<usize> {
    let half = zone.hfov_deg.to_radians() / 2.0;
    let mut keep = Vec::new();
    for r in 0..gt.rows {
        for c in 0..gt.cols {
            let i = gt.idx(r, c);
            if gt.mask[i] != 1 {
                continue;
            }
            let range = gt.depth[i] as f64;
            if range < zone.min_m || range > zone.max_m {
                continue;
            }
            if geometry.cell_azimuth(c).abs() <= half {
                keep.push(i);
            }
        }
    }
    keep
}

/// Result of one zone: None when the zone matched no cells (absent, not 0).
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneResult {
    pub name: String,
    pub n: usize,
    pub abs_rel_pct: Option<f64>,
}

/// Full evaluation report: overall metrics, classifier error, zone map.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub overall: DepthMetrics,
    pub return_error_pct: f64,
    pub zones: Vec<ZoneResult>,
}

/// Pooled evaluation of predicted grids against ground truth PCDMs.
/// `pairs` holds (pred_depth, pred_logits, gt) per sample; cells pool across
/// samples in sample order.
pub fn evaluate_pooled(
    pairs: &[(&[f32], &[f32], &Pcdm)],
    geometry: &LidarGeometry,
    zones: &[MetricZone],
) -> Result<MetricsReport, DscError> {
    let mut pred_valid = Vec::new();
    let mut gt_valid = Vec::new();
    let mut logits_all = Vec::new();
    let mut mask_all = Vec::new();
    // Zone cell indices refer into the pooled valid-cell arrays.
    let mut zone_sets: Vec<Vec<usize>> = zones.iter().map(|_| Vec::new()).collect();
    for (pred, logits, gt) in pairs {
        if pred.len() != gt.depth.len() || logits.len() != gt.depth.len() {
            return Err(DscError::ShapeMismatch {
                context: "evaluate_pooled",
                expected: alloc::vec![gt.depth.len()],
                got: alloc::vec![pred.len()],
            });
        }
        let base = pred_valid.len();
        let mut cell_to_valid: Vec<usize> = alloc::vec![usize::MAX; gt.depth.len()];
        for i in 0..gt.depth.len() {
            logits_all.push(logits[i] as f64);
            mask_all.push(gt.mask[i]);
            if gt.mask[i] == 1 {
                cell_to_valid[i] = pred_valid.len();
                pred_valid.push(pred[i] as f64);
                gt_valid.push(gt.depth[i] as f64);
            }
        }
        for (zi, zone) in zones.iter().enumerate() {
            for i in zone_filter(gt, geometry, zone) {
                zone_sets[zi].push(cell_to_valid[i]);
            }
        }
        let _ = base;
    }
    let overall = depth_metrics(&pred_valid, &gt_valid)?;
    let return_error_pct = return_classifier_error(&logits_all, &mask_all)?;
    let mut zone_results = Vec::new();
    for (zone, set) in zones.iter().zip(&zone_sets) {
        if set.is_empty() {
            zone_results.push(ZoneResult {
                name: zone.name.clone(),
                n: 0,
                abs_rel_pct: None,
            });
        } else {
            let zp: Vec<f64> = set.iter().map(|&i| pred_valid[i]).collect();
            let zg: Vec<f64> = set.iter().map(|&i| gt_valid[i]).collect();
            let m = depth_metrics(&zp, &zg)?;
            zone_results.push(ZoneResult {
                name: zone.name.clone(),
                n: m.n,
                abs_rel_pct: Some(m.abs_rel_pct),
            });
        }
    }
    Ok(MetricsReport {
        overall,
        return_error_pct,
        zones: zone_results,
    })
}
