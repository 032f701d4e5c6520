//! Metrics report emission: a structured-text key/value file and an aligned
//! plain-text table (overall metric columns first, then the per-zone
//! relative-error table).

use dsc_core::metrics::MetricsReport;
use dsc_core::resource::ResourceCount;

pub fn encode_kv(report: &MetricsReport, resources: Option<ResourceCount>) -> String {
    let mut s = String::new();
    s.push_str(&format!("n_evaluated = {}\n", report.overall.n));
    s.push_str(&format!("abs_error_rel_pct = {}\n", report.overall.abs_rel_pct));
    s.push_str(&format!("sq_error_rel_pct = {}\n", report.overall.sq_rel_pct));
    s.push_str(&format!("irmse_inv_km = {}\n", report.overall.irmse_inv_km));
    s.push_str(&format!("silog = {}\n", report.overall.silog));
    s.push_str(&format!(
        "return_classifier_error_pct = {}\n",
        report.return_error_pct
    ));
    if let Some(r) = resources {
        s.push_str(&format!("gflop = {}\n", r.gflops()));
        s.push_str(&format!("parameter_mb = {}\n", r.param_mb()));
        s.push_str(&format!("parameters = {}\n", r.params));
    }
    for z in &report.zones {
        s.push_str(&format!("\n[zone {}]\n", z.name));
        s.push_str(&format!("cells = {}\n", z.n));
        match z.abs_rel_pct {
            Some(v) => s.push_str(&format!("abs_error_rel_pct = {v}\n")),
            None => s.push_str("abs_error_rel_pct = absent\n"),
        }
    }
    s
}

pub fn encode_table(report: &MetricsReport, resources: Option<ResourceCount>) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:>12} {:>11} {:>8} {:>8} {:>10} {:>8} {:>10}\n",
        "absErrorRel", "sqErrorRel", "iRMSE", "SILog", "ReturnErr", "GFLOP", "Params(MB)"
    ));
    let (gflop, mb) = match resources {
        Some(r) => (format!("{:.3}", r.gflops()), format!("{:.3}", r.param_mb())),
        None => ("-".to_string(), "-".to_string()),
    };
    s.push_str(&format!(
        "{:>12.4} {:>11.4} {:>8.4} {:>8.4} {:>10.4} {:>8} {:>10}\n",
        report.overall.abs_rel_pct,
        report.overall.sq_rel_pct,
        report.overall.irmse_inv_km,
        report.overall.silog,
        report.return_error_pct,
        gflop,
        mb
    ));
    s.push('\n');
    s.push_str(&format!(
        "{:<36} {:>12} {:>10}\n",
        "Zone", "absErrorRel", "cells"
    ));
    for z in &report.zones {
        match z.abs_rel_pct {
            Some(v) => s.push_str(&format!("{:<36} {:>12.4} {:>10}\n", z.name, v, z.n)),
            None => s.push_str(&format!("{:<36} {:>12} {:>10}\n", z.name, "absent", z.n)),
        }
    }
    s.push_str(&format!(
        "{:<36} {:>12.4} {:>10}\n",
        "Overall",
        report.overall.abs_rel_pct,
        report.overall.n
    ));
    s
}
