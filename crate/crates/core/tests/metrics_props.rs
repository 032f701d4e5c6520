//! Metric-suite properties: equivalence with brute-force elementwise
//! oracles on random instances, the stated scale behaviors, permutation
//! invariance, and zone reconstruction from disjoint exhaustive zones.

use dsc_core::metrics::{
    depth_metrics, return_classifier_error, zone_filter, MetricZone, DEPTH_CLAMP_M,
};
use dsc_core::pcdm::{LidarGeometry, Pcdm};
use dsc_core::rng::SplitMix64;
use proptest::prelude::*;

/// Brute-force oracle: sequential sums straight from the metric formulas.
fn oracle(pred: &[f64], gt: &[f64]) -> (f64, f64, f64, f64) {
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut inv = 0.0;
    let mut sd = 0.0;
    let mut sd2 = 0.0;
    for (&y, &ys) in pred.iter().zip(gt) {
        let yc = y.max(DEPTH_CLAMP_M);
        abs += (y - ys).abs() / ys;
        sq += (y - ys) * (y - ys) / (ys * ys);
        inv += (1000.0 / yc - 1000.0 / ys) * (1000.0 / yc - 1000.0 / ys);
        let d = yc.ln() - ys.ln();
        sd += d;
        sd2 += d * d;
    }
    (
        100.0 * abs / n,
        100.0 * sq / n,
        (inv / n).sqrt(),
        100.0 * (sd2 / n - (sd / n) * (sd / n)).max(0.0).sqrt(),
    )
}

fn random_pair(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(seed);
    let mut pred = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.next_in(1.0, 110.0);
        gt.push(t);
        pred.push(t * rng.next_in(0.6, 1.5) + rng.next_in(-2.0, 2.0));
    }
    (pred, gt)
}

#[test]
fn all_metrics_match_the_brute_force_oracle_on_100_instances() {
    for seed in 0..100u64 {
        let (pred, gt) = random_pair(seed, 100);
        let m = depth_metrics(&pred, &gt).unwrap();
        let (abs, sq, inv, silog) = oracle(&pred, &gt);
        assert!((m.abs_rel_pct - abs).abs() < 1e-9, "seed {seed}");
        assert!((m.sq_rel_pct - sq).abs() < 1e-9, "seed {seed}");
        assert!((m.irmse_inv_km - inv).abs() < 1e-9, "seed {seed}");
        assert!((m.silog - silog).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn return_error_matches_direct_counting_on_100_instances() {
    for seed in 0..100u64 {
        let mut rng = SplitMix64::new(seed ^ 0xC1A5);
        let n = 100;
        let mut logits = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for _ in 0..n {
            logits.push(rng.next_in(-5.0, 5.0));
            mask.push((rng.next_f64() < 0.5) as u8);
        }
        let got = return_classifier_error(&logits, &mask).unwrap();
        let expected = 100.0
            * logits
                .iter()
                .zip(&mask)
                .filter(|(&x, &m)| (x >= 0.0) != (m == 1))
                .count() as f64
            / n as f64;
        assert_eq!(got, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Joint rescaling leaves relative errors unchanged; iRMSE scales by
    /// 1/c; SILog is invariant under prediction-only rescaling.
    #[test]
    fn scale_behaviors(seed in 0u64..100_000, c in 0.1f64..10.0) {
        let (pred, gt) = random_pair(seed, 40);
        let m = depth_metrics(&pred, &gt).unwrap();
        let pred_c: Vec<f64> = pred.iter().map(|v| v * c).collect();
        let gt_c: Vec<f64> = gt.iter().map(|v| v * c).collect();
        // Keep predictions clear of the clamp floor under the rescale.
        prop_assume!(pred_c.iter().all(|&v| v > 2.0 * DEPTH_CLAMP_M));
        prop_assume!(pred.iter().all(|&v| v > 2.0 * DEPTH_CLAMP_M));
        let joint = depth_metrics(&pred_c, &gt_c).unwrap();
        prop_assert!((joint.abs_rel_pct - m.abs_rel_pct).abs() < 1e-9 * m.abs_rel_pct.max(1.0));
        prop_assert!((joint.sq_rel_pct - m.sq_rel_pct).abs() < 1e-9 * m.sq_rel_pct.max(1.0));
        prop_assert!((joint.irmse_inv_km - m.irmse_inv_km / c).abs() < 1e-9 * m.irmse_inv_km.max(1.0));
        let pred_only: Vec<f64> = pred.iter().map(|v| v * c).collect();
        let scaled = depth_metrics(&pred_only, &gt).unwrap();
        prop_assert!((scaled.silog - m.silog).abs() < 1e-9 * m.silog.max(1.0));
    }

    /// Metrics are permutation-invariant over cells.
    #[test]
    fn permutation_invariance(seed in 0u64..100_000) {
        let (pred, gt) = random_pair(seed, 64);
        let m1 = depth_metrics(&pred, &gt).unwrap();
        let mut order: Vec<usize> = (0..pred.len()).collect();
        let mut rng = SplitMix64::new(seed ^ 0xFACE);
        rng.shuffle(&mut order);
        let pred_p: Vec<f64> = order.iter().map(|&i| pred[i]).collect();
        let gt_p: Vec<f64> = order.iter().map(|&i| gt[i]).collect();
        let m2 = depth_metrics(&pred_p, &gt_p).unwrap();
        prop_assert!((m1.abs_rel_pct - m2.abs_rel_pct).abs() < 1e-9);
        prop_assert!((m1.sq_rel_pct - m2.sq_rel_pct).abs() < 1e-9);
        prop_assert!((m1.irmse_inv_km - m2.irmse_inv_km).abs() < 1e-9);
        prop_assert!((m1.silog - m2.silog).abs() < 1e-9);
    }
}

/// Disjoint exhaustive range bands reconstruct the overall mean-based
/// metrics when weighted by cell counts.
#[test]
fn zone_union_reconstructs_mean_metrics() {
    let geom = LidarGeometry::uniform(
        4,
        25,
        0.1,
        -0.2,
        -core::f64::consts::FRAC_PI_4,
        core::f64::consts::FRAC_PI_4,
        120.0,
    );
    let mut rng = SplitMix64::new(31);
    let mut gt = Pcdm::zeros(4, 25);
    let mut pred = vec![0.0f64; 100];
    for i in 0..100 {
        // Depths avoid the band boundaries at 10 and 30 m.
        let d = loop {
            let d = rng.next_in(0.5, 115.0);
            if (d - 10.0).abs() > 0.2 && (d - 30.0).abs() > 0.2 {
                break d;
            }
        };
        gt.depth[i] = d as f32;
        gt.mask[i] = 1;
        pred[i] = d * rng.next_in(0.8, 1.25);
    }
    let bands = [
        ("near", 0.0, 10.0),
        ("mid", 10.0, 30.0),
        ("far", 30.0, 120.0),
    ];
    let full_fov = 90.0;
    let mut weighted_abs = 0.0;
    let mut weighted_sq = 0.0;
    let mut total = 0usize;
    for (name, lo, hi) in bands {
        let zone = MetricZone {
            name: name.into(),
            min_m: lo,
            max_m: hi,
            hfov_deg: full_fov,
        };
        let cells = zone_filter(&gt, &geom, &zone);
        if cells.is_empty() {
            continue;
        }
        let zp: Vec<f64> = cells.iter().map(|&i| pred[i]).collect();
        let zg: Vec<f64> = cells.iter().map(|&i| gt.depth[i] as f64).collect();
        let m = depth_metrics(&zp, &zg).unwrap();
        weighted_abs += m.abs_rel_pct * m.n as f64;
        weighted_sq += m.sq_rel_pct * m.n as f64;
        total += m.n;
    }
    assert_eq!(total, 100, "bands must partition all valid cells");
    let gt_all: Vec<f64> = gt.depth.iter().map(|&v| v as f64).collect();
    let overall = depth_metrics(&pred, &gt_all).unwrap();
    assert!((weighted_abs / 100.0 - overall.abs_rel_pct).abs() < 1e-9);
    assert!((weighted_sq / 100.0 - overall.sq_rel_pct).abs() < 1e-9);
}

/// A zone covering the full field of view and range reproduces the overall
/// metric; a hand-built case checks direct membership.
#[test]
fn full_coverage_zone_equals_overall() {
    let geom = LidarGeometry::uniform(
        2,
        10,
        0.1,
        -0.1,
        -core::f64::consts::FRAC_PI_4,
        core::f64::consts::FRAC_PI_4,
        120.0,
    );
    let mut rng = SplitMix64::new(7);
    let mut gt = Pcdm::zeros(2, 10);
    let mut pred = vec![0.0f64; 20];
    for i in 0..20 {
        let d = rng.next_in(1.0, 100.0);
        gt.depth[i] = d as f32;
        gt.mask[i] = 1;
        pred[i] = d + rng.next_in(-1.0, 1.0);
    }
    let zone = MetricZone {
        name: "everything".into(),
        min_m: 0.0,
        max_m: 120.0,
        hfov_deg: 90.0,
    };
    let cells = zone_filter(&gt, &geom, &zone);
    assert_eq!(cells.len(), 20);
}

#[test]
fn collision_detection_zone_excludes_a_far_cell() {
    // Three-cell grid; the 50 m cell at azimuth 0 is outside the 0-30 m
    // collision-detection band even though its azimuth qualifies.
    let geom = LidarGeometry::uniform(
        1,
        3,
        0.0,
        0.0,
        -0.05,
        0.05,
        120.0,
    );
    let mut gt = Pcdm::zeros(1, 3);
    gt.set_return(0, 0, 12.0);
    gt.set_return(0, 1, 50.0);
    gt.set_return(0, 2, 8.0);
    let zone = MetricZone {
        name: "Collision Detection (Urban)".into(),
        min_m: 0.0,
        max_m: 30.0,
        hfov_deg: 27.66,
    };
    let cells = zone_filter(&gt, &geom, &zone);
    assert_eq!(cells, vec![0, 2]);
}
