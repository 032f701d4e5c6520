//! Deterministic synthetic data: seeded scenes of boxes, cylinders and poles
//! on a ground plane, rendered through analytic ray casting into camera
//! images and LIDAR PCDMs.
//!
//! The rig places both LIDARs at the origin and the two cameras at
//! y = +-baseline/2 with shared orientation (x forward, y left, z up).
//! Every random decision flows from the sample seed; there is no global
//! state, so sample generation is pure and order-independent.

use alloc::vec;
use alloc::vec::Vec;

use crate::pcdm::{LidarGeometry, Pcdm};
use crate::rng::{cell_hash, hash_unit, substream, SplitMix64};

/// Reference scale-1 sensor constants.
pub const HDL_ROWS: usize = 64;
pub const HDL_COLS: usize = 256;
pub const HDL_ELEV_TOP_DEG: f64 = 2.0;
pub const HDL_ELEV_BOTTOM_DEG: f64 = -24.9; // 26.9-degree vertical FOV
pub const HDL_MAX_RANGE_M: f64 = 120.0;
pub const SCALA_ROWS: usize = 4;
pub const SCALA_COLS: usize = 192;
pub const SCALA_VFOV_DEG: f64 = 3.2;
pub const SCALA_MAX_RANGE_M: f64 = 80.0;
pub const IMAGE_HEIGHT: usize = 576;
pub const IMAGE_WIDTH: usize = 768;
pub const CAMERA_HFOV_DEG: f64 = 90.0;
pub const BASELINE_M: f64 = 0.54;
pub const GROUND_HEIGHT_M: f64 = 1.7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub hfov: f64,
    pub baseline: f64,
}

/// Sensor rig: HDL-style ground-truth scanner, low-resolution 4-beam
/// scanner, stereo cameras. All PCDMs are emitted already cropped to the
/// camera's horizontal field of view.
#[derive(Clone, Debug, PartialEq)]
pub struct RigSpec {
    pub hdl: LidarGeometry,
    pub scala: LidarGeometry,
    pub camera: CameraSpec,
    pub scale: f64,
}

impl RigSpec {
    /// Rig at a given spatial scale. The 4-beam scanner keeps its physical
    /// laser count; only its column count scales.
    pub fn at_scale(scale: f64) -> Self {
        let half_span = (CAMERA_HFOV_DEG / 2.0).to_radians();
        let round = |v: usize| ((v as f64 * scale + 0.5) as usize).max(1);
        let hdl = LidarGeometry::uniform(
            round(HDL_ROWS),
            round(HDL_COLS),
            HDL_ELEV_TOP_DEG.to_radians(),
            HDL_ELEV_BOTTOM_DEG.to_radians(),
            -half_span,
            half_span,
            HDL_MAX_RANGE_M,
        );
        let scala = LidarGeometry::uniform(
            SCALA_ROWS,
            round(SCALA_COLS),
            (SCALA_VFOV_DEG / 2.0).to_radians(),
            (-SCALA_VFOV_DEG / 2.0).to_radians(),
            -half_span,
            half_span,
            SCALA_MAX_RANGE_M,
        );
        RigSpec {
            hdl,
            scala,
            camera: CameraSpec {
                width: round(IMAGE_WIDTH),
                height: round(IMAGE_HEIGHT),
                hfov: CAMERA_HFOV_DEG.to_radians(),
                baseline: BASELINE_M,
            },
            scale,
        }
    }

    pub fn paper_scale() -> Self {
        RigSpec::at_scale(1.0)
    }

    pub fn desk_scale() -> Self {
        RigSpec::at_scale(0.25)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Axis-aligned box.
    Box { center: [f64; 3], half: [f64; 3] },
    /// Vertical capped cylinder; poles are thin tall cylinders.
    Cylinder {
        cx: f64,
        cy: f64,
        radius: f64,
        z0: f64,
        z1: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub albedo: [f64; 3],
    /// Probability that a LIDAR ray hitting this surface actually returns.
    pub reflectivity: f64,
    pub texture_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// Sensor height above the ground plane (plane sits at z = -height).
    pub ground_height: f64,
    pub ground_albedo: [f64; 3],
    pub ground_reflectivity: f64,
    pub ground_texture_seed: u64,
    pub objects: Vec<SceneObject>,
    pub rig: RigSpec,
}

/// Raw 8-bit RGB image, interleaved rows, identical to the PPM payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

/// One dataset sample: stereo images, the 4-beam input PCDM, the
/// high-resolution ground-truth PCDM.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub left: Image,
    pub right: Image,
    pub scala: Pcdm,
    pub hdl64: Pcdm,
}

/// Seeded scene: 3..=15 primitives placed ahead of the rig unless an
/// explicit object count override is given.
pub fn generate_scene(seed: u64, rig: &RigSpec, object_count: Option<usize>) -> SceneSpec {
    let mut rng = SplitMix64::new(substream(seed, 0xA11CE));
    let n = object_count.unwrap_or_else(|| 3 + rng.next_below(13));
    let ground_z = -GROUND_HEIGHT_M;
    let half_span = rig.camera.hfov / 2.0;
    let mut objects = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = rng.next_below(3);
        let x = rng.next_in(6.0, 38.0);
        let y_max = x * libm::tan(half_span) * 0.85;
        let y = rng.next_in(-y_max, y_max);
        let shape = match kind {
            0 => {
                let half = [
                    rng.next_in(0.35, 1.8),
                    rng.next_in(0.35, 1.8),
                    rng.next_in(0.4, 1.6),
                ];
                Shape::Box {
                    center: [x, y, ground_z + half[2]],
                    half,
                }
            }
            1 => {
                let radius = rng.next_in(0.35, 1.2);
                let h = rng.next_in(0.8, 3.0);
                Shape::Cylinder {
                    cx: x,
                    cy: y,
                    radius,
                    z0: ground_z,
                    z1: ground_z + h,
                }
            }
            _ => {
                let radius = rng.next_in(0.06, 0.15);
                let h = rng.next_in(2.0, 5.5);
                Shape::Cylinder {
                    cx: x,
                    cy: y,
                    radius,
                    z0: ground_z,
                    z1: ground_z + h,
                }
            }
        };
        objects.push(SceneObject {
            shape,
            albedo: [
                rng.next_in(0.25, 0.95),
                rng.next_in(0.25, 0.95),
                rng.next_in(0.25, 0.95),
            ],
            reflectivity: rng.next_in(0.7, 1.0),
            texture_seed: rng.next_u64(),
        });
    }
    SceneSpec {
        seed,
        ground_height: GROUND_HEIGHT_M,
        ground_albedo: [
            rng.next_in(0.25, 0.55),
            rng.next_in(0.25, 0.55),
            rng.next_in(0.25, 0.55),
        ],
        ground_reflectivity: rng.next_in(0.85, 1.0),
        ground_texture_seed: rng.next_u64(),
        objects,
        rig: rig.clone(),
    }
}

/// A ray-scene intersection. `object` is None for the ground plane.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: f64,
    pub object: Option<usize>,
    pub normal: [f64; 3],
    pub point: [f64; 3],
}

const T_EPS: f64 = 1e-9;

fn ray_plane_z(origin: [f64; 3], dir: [f64; 3], z: f64) -> Option<f64> {
    if dir[2].abs() < 1e-15 {
        return None;
    }
    let t = (z - origin[2]) / dir[2];
    (t > T_EPS).then_some(t)
}

fn ray_box(origin: [f64; 3], dir: [f64; 3], center: [f64; 3], half: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    let mut axis = 0usize;
    let mut sign = 0.0;
    for a in 0..3 {
        let lo = center[a] - half[a];
        let hi = center[a] + half[a];
        if dir[a].abs() < 1e-15 {
            if origin[a] < lo || origin[a] > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (t0, t1, s) = if inv >= 0.0 {
            ((lo - origin[a]) * inv, (hi - origin[a]) * inv, -1.0)
        } else {
            ((hi - origin[a]) * inv, (lo - origin[a]) * inv, 1.0)
        };
        if t0 > tmin {
            tmin = t0;
            axis = a;
            sign = s;
        }
        tmax = tmax.min(t1);
        if tmin > tmax {
            return None;
        }
    }
    if tmin <= T_EPS {
        return None; // origin inside or box behind
    }
    let mut normal = [0.0; 3];
    normal[axis] = sign;
    Some((tmin, normal))
}

fn ray_cylinder(
    origin: [f64; 3],
    dir: [f64; 3],
    cx: f64,
    cy: f64,
    radius: f64,
    z0: f64,
    z1: f64,
) -> Option<(f64, [f64; 3])> {
    let ox = origin[0] - cx;
    let oy = origin[1] - cy;
    let mut best: Option<(f64, [f64; 3])> = None;
    let a = dir[0] * dir[0] + dir[1] * dir[1];
    if a > 1e-16 {
        let b = 2.0 * (ox * dir[0] + oy * dir[1]);
        let c = ox * ox + oy * oy - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = libm::sqrt(disc);
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if t > T_EPS {
                    let z = origin[2] + t * dir[2];
                    if z >= z0 && z <= z1 {
                        let nx = (ox + t * dir[0]) / radius;
                        let ny = (oy + t * dir[1]) / radius;
                        if best.map(|(bt, _)| t < bt).unwrap_or(true) {
                            best = Some((t, [nx, ny, 0.0]));
                        }
                        break; // nearest in-range side hit
                    }
                }
            }
        }
    }
    // Caps.
    for (zc, nz) in [(z1, 1.0), (z0, -1.0)] {
        if let Some(t) = ray_plane_z(origin, dir, zc) {
            let px = origin[0] + t * dir[0] - cx;
            let py = origin[1] + t * dir[1] - cy;
            if px * px + py * py <= radius * radius && best.map(|(bt, _)| t < bt).unwrap_or(true) {
                best = Some((t, [0.0, 0.0, nz]));
            }
        }
    }
    best
}

/// Nearest intersection of a ray with the scene, ground plane included.
pub fn cast_ray(scene: &SceneSpec, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let ground_z = -scene.ground_height;
    if dir[2] < 0.0 {
        if let Some(t) = ray_plane_z(origin, dir, ground_z) {
            best = Some(Hit {
                t,
                object: None,
                normal: [0.0, 0.0, 1.0],
                point: [origin[0] + t * dir[0], origin[1] + t * dir[1], ground_z],
            });
        }
    }
    for (i, obj) in scene.objects.iter().enumerate() {
        let hit = match obj.shape {
            Shape::Box { center, half } => ray_box(origin, dir, center, half),
            Shape::Cylinder {
                cx,
                cy,
                radius,
                z0,
                z1,
            } => ray_cylinder(origin, dir, cx, cy, radius, z0, z1),
        };
        if let Some((t, normal)) = hit {
            if best.as_ref().map(|b| t < b.t).unwrap_or(true) {
                best = Some(Hit {
                    t,
                    object: Some(i),
                    normal,
                    point: [
                        origin[0] + t * dir[0],
                        origin[1] + t * dir[1],
                        origin[2] + t * dir[2],
                    ],
                });
            }
        }
    }
    best
}

/// Planar texture coordinates on the hit surface.
fn surface_uv(hit: &Hit, scene: &SceneSpec) -> (f64, f64) {
    match hit.object.map(|i| scene.objects[i].shape) {
        None => (hit.point[0], hit.point[1]),
        Some(Shape::Box { .. }) => {
            let n = hit.normal;
            if n[0].abs() > 0.5 {
                (hit.point[1], hit.point[2])
            } else if n[1].abs() > 0.5 {
                (hit.point[0], hit.point[2])
            } else {
                (hit.point[0], hit.point[1])
            }
        }
        Some(Shape::Cylinder { cx, cy, radius, .. }) => {
            if hit.normal[2].abs() > 0.5 {
                (hit.point[0], hit.point[1])
            } else {
                let ang = libm::atan2(hit.point[1] - cy, hit.point[0] - cx);
                (ang * radius, hit.point[2])
            }
        }
    }
}

/// Fixed light direction for Lambert shading.
const LIGHT: [f64; 3] = [-0.3432, 0.1961, 0.9186];

fn shade(scene: &SceneSpec, hit: &Hit) -> [f64; 3] {
    let (albedo, tex_seed) = match hit.object {
        Some(i) => (scene.objects[i].albedo, scene.objects[i].texture_seed),
        None => (scene.ground_albedo, scene.ground_texture_seed),
    };
    let ndotl =
        (hit.normal[0] * LIGHT[0] + hit.normal[1] * LIGHT[1] + hit.normal[2] * LIGHT[2]).max(0.0);
    let light = 0.35 + 0.65 * ndotl;
    let (u, v) = surface_uv(hit, scene);
    // 0.5 m texture cells; multiplicative contrast in [0.7, 1.3].
    let cu = libm::floor(u * 2.0) as i64 as u64;
    let cv = libm::floor(v * 2.0) as i64 as u64;
    let tex = 1.0 + 0.3 * (2.0 * hash_unit(cell_hash(tex_seed, cu, cv)) - 1.0);
    let atten = 1.0 / (1.0 + 0.012 * hit.t);
    let mut rgb = [0.0; 3];
    for c in 0..3 {
        rgb[c] = (albedo[c] * light * tex * atten).clamp(0.0, 1.0);
    }
    rgb
}

const SKY: [f64; 3] = [0.05, 0.06, 0.08];

/// Render one camera (0 = left at +baseline/2, 1 = right at -baseline/2).
pub fn render_camera(scene: &SceneSpec, camera_index: usize) -> Image {
    render_camera_traced(scene, camera_index).0
}

/// Camera render that also reports per-pixel hit object and range, used by
/// the geometric-consistency tests.
pub fn render_camera_traced(
    scene: &SceneSpec,
    camera_index: usize,
) -> (Image, Vec<Option<usize>>, Vec<f64>) {
    let cam = &scene.rig.camera;
    let (w, h) = (cam.width, cam.height);
    let y_off = if camera_index == 0 {
        cam.baseline / 2.0
    } else {
        -cam.baseline / 2.0
    };
    let origin = [0.0, y_off, 0.0];
    let f = w as f64 / (2.0 * libm::tan(cam.hfov / 2.0));
    let cx = w as f64 / 2.0;
    let cy = h as f64 / 2.0;
    let mut rgb = vec![0u8; w * h * 3];
    let mut ids = vec![None; w * h];
    let mut ranges = vec![f64::INFINITY; w * h];
    for py in 0..h {
        for px in 0..w {
            let dy = (cx - (px as f64 + 0.5)) / f;
            let dz = (cy - (py as f64 + 0.5)) / f;
            let norm = libm::sqrt(1.0 + dy * dy + dz * dz);
            let dir = [1.0 / norm, dy / norm, dz / norm];
            let value = match cast_ray(scene, origin, dir) {
                Some(hit) => {
                    ids[py * w + px] = hit.object;
                    ranges[py * w + px] = hit.t;
                    shade(scene, &hit)
                }
                None => SKY,
            };
            for c in 0..3 {
                rgb[(py * w + px) * 3 + c] = (value[c] * 255.0 + 0.5) as u8;
            }
        }
    }
    (
        Image {
            width: w,
            height: h,
            rgb,
        },
        ids,
        ranges,
    )
}

/// Render a LIDAR PCDM: one ray per cell from the origin along the cell
/// center, nearest analytic hit, with a seeded Bernoulli dropout firing at
/// probability 1 - reflectivity. `sensor_tag` separates dropout streams of
/// different sensors on the same scene.
pub fn render_lidar(scene: &SceneSpec, geometry: &LidarGeometry, sensor_tag: u64) -> Pcdm {
    render_lidar_traced(scene, geometry, sensor_tag).0
}

/// LIDAR render that also reports which object each returning cell hit.
pub fn render_lidar_traced(
    scene: &SceneSpec,
    geometry: &LidarGeometry,
    sensor_tag: u64,
) -> (Pcdm, Vec<Option<usize>>) {
    let rows = geometry.rows();
    let cols = geometry.cols;
    let mut pcdm = Pcdm::zeros(rows, cols);
    let mut ids = vec![None; rows * cols];
    let dropout_seed = substream(scene.seed, sensor_tag);
    for r in 0..rows {
        for c in 0..cols {
            let dir = geometry.cell_dir(r, c);
            let Some(hit) = cast_ray(scene, [0.0, 0.0, 0.0], dir) else {
                continue;
            };
            if hit.t > geometry.max_range {
                continue;
            }
            let reflectivity = match hit.object {
                Some(i) => scene.objects[i].reflectivity,
                None => scene.ground_reflectivity,
            };
            let u = hash_unit(cell_hash(dropout_seed, r as u64, c as u64));
            if u < reflectivity {
                pcdm.set_return(r, c, hit.t as f32);
                ids[r * cols + c] = hit.object;
            }
        }
    }
    (pcdm, ids)
}

/// Dropout stream tags for the two scanners.
pub const HDL_TAG: u64 = 1;
pub const SCALA_TAG: u64 = 2;

/// Generate the full sample for one dataset index.
pub fn generate_sample(dataset_seed: u64, index: u64, rig: &RigSpec) -> Sample {
    let scene = generate_scene(substream(dataset_seed, index.wrapping_add(1)), rig, None);
    Sample {
        left: render_camera(&scene, 0),
        right: render_camera(&scene, 1),
        scala: render_lidar(&scene, &rig.scala, SCALA_TAG),
        hdl64: render_lidar(&scene, &rig.hdl, HDL_TAG),
    }
}
