//! PCDM properties: projection/reconstruction round trips, the
//! nearest-return collision rule (verified exhaustively for two points on a
//! 10x10 grid), crop behavior, and lossless count accounting for
//! collision-free clouds.

use dsc_core::pcdm::{crop_to_fov, project, unproject, LidarGeometry, Pcdm, PointCloud};
use dsc_core::rng::SplitMix64;
use proptest::prelude::*;

fn test_geom(rows: usize, cols: usize) -> LidarGeometry {
    LidarGeometry::uniform(
        rows,
        cols,
        0.2,
        -0.35,
        -core::f64::consts::FRAC_PI_4,
        core::f64::consts::FRAC_PI_4,
        120.0,
    )
}

fn random_pcdm(rows: usize, cols: usize, seed: u64) -> Pcdm {
    let mut rng = SplitMix64::new(seed);
    let mut p = Pcdm::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            if rng.next_f64() < 0.6 {
                p.set_return(r, c, rng.next_in(0.5, 110.0) as f32);
            }
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// project(unproject(P)) == P bit for bit: cell centers re-bin to
    /// themselves and ranges survive the f64 round trip at f32 storage.
    #[test]
    fn project_unproject_is_identity(seed in 0u64..10_000, rows in 1usize..12, cols in 2usize..24) {
        let geom = test_geom(rows, cols);
        let pcdm = random_pcdm(rows, cols, seed);
        let cloud = unproject(&pcdm, &geom).unwrap();
        let back = project(&cloud, &geom).unwrap();
        prop_assert_eq!(back, pcdm);
    }

    /// Collision-free in-FOV clouds lose no points: returns == points in,
    /// and every depth equals its generating range.
    #[test]
    fn count_accounting_on_collision_free_clouds(seed in 0u64..10_000) {
        let geom = test_geom(6, 12);
        let mut rng = SplitMix64::new(seed);
        let mut cells: Vec<usize> = (0..72).collect();
        rng.shuffle(&mut cells);
        let n = 1 + rng.next_below(40);
        let mut points = Vec::new();
        for &cell in cells.iter().take(n) {
            let (r, c) = (cell / 12, cell % 12);
            let dir = geom.cell_dir(r, c);
            let range = rng.next_in(1.0, 100.0);
            points.push([dir[0] * range, dir[1] * range, dir[2] * range]);
        }
        let pcdm = project(&PointCloud { points, reflectivity: None }, &geom).unwrap();
        prop_assert_eq!(pcdm.returns(), n);
    }

    /// Unprojection preserves every surviving point's range exactly (well
    /// under the f32 quantum) and its direction within one cell.
    #[test]
    fn round_trip_preserves_ranges(seed in 0u64..10_000) {
        let geom = test_geom(5, 9);
        let pcdm = random_pcdm(5, 9, seed);
        let cloud = unproject(&pcdm, &geom).unwrap();
        let mut k = 0;
        for r in 0..5 {
            for c in 0..9 {
                let i = pcdm.idx(r, c);
                if pcdm.mask[i] == 1 {
                    let p = cloud.points[k];
                    let range = libm::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                    prop_assert!((range - pcdm.depth[i] as f64).abs() < 1e-9);
                    k += 1;
                }
            }
        }
        prop_assert_eq!(k, cloud.len());
    }

    /// Cropped geometry still round-trips through project/unproject.
    #[test]
    fn cropped_grids_still_round_trip(seed in 0u64..10_000) {
        let geom = LidarGeometry::uniform(
            4, 16, 0.15, -0.3,
            -core::f64::consts::PI, core::f64::consts::PI, 120.0,
        );
        let pcdm = random_pcdm(4, 16, seed);
        let (cropped, ng) = crop_to_fov(&pcdm, &geom, core::f64::consts::FRAC_PI_2).unwrap();
        let cloud = unproject(&cropped, &ng).unwrap();
        let back = project(&cloud, &ng).unwrap();
        prop_assert_eq!(back, cropped);
    }
}

/// Exhaustive two-point collision oracle on a 10x10 grid: for every ordered
/// pair of cells and both depth orderings, projection keeps the nearer
/// return in the shared cell and both returns in distinct cells.
#[test]
fn exhaustive_two_point_collision_rule() {
    let geom = test_geom(10, 10);
    for cell_a in 0..100usize {
        for cell_b in 0..100usize {
            let (ra, ca) = (cell_a / 10, cell_a % 10);
            let (rb, cb) = (cell_b / 10, cell_b % 10);
            let da = 5.0;
            let db = 7.0;
            let dir_a = geom.cell_dir(ra, ca);
            let dir_b = geom.cell_dir(rb, cb);
            let cloud = PointCloud {
                points: vec![
                    [dir_a[0] * da, dir_a[1] * da, dir_a[2] * da],
                    [dir_b[0] * db, dir_b[1] * db, dir_b[2] * db],
                ],
                reflectivity: None,
            };
            let pcdm = project(&cloud, &geom).unwrap();
            if cell_a == cell_b {
                assert_eq!(pcdm.returns(), 1);
                assert_eq!(pcdm.depth[pcdm.idx(ra, ca)], da as f32, "nearest wins");
            } else {
                assert_eq!(pcdm.returns(), 2);
                assert_eq!(pcdm.depth[pcdm.idx(ra, ca)], da as f32);
                assert_eq!(pcdm.depth[pcdm.idx(rb, cb)], db as f32);
            }
            // Same cells, reversed arrival order: still the nearest.
            let cloud_rev = PointCloud {
                points: vec![
                    [dir_b[0] * db, dir_b[1] * db, dir_b[2] * db],
                    [dir_a[0] * da, dir_a[1] * da, dir_a[2] * da],
                ],
                reflectivity: None,
            };
            let pcdm_rev = project(&cloud_rev, &geom).unwrap();
            assert_eq!(pcdm_rev, pcdm);
        }
    }
}

#[test]
fn depth_mask_consistency_survives_all_operations() {
    let geom = test_geom(6, 12);
    let pcdm = random_pcdm(6, 12, 99);
    pcdm.validate(geom.max_range).unwrap();
    let cloud = unproject(&pcdm, &geom).unwrap();
    let back = project(&cloud, &geom).unwrap();
    back.validate(geom.max_range).unwrap();
    let (cropped, ng) = crop_to_fov(&back, &geom, 0.8).unwrap();
    cropped.validate(ng.max_range).unwrap();
}
