use std::collections::HashMap;

use flatlift_core::condition::ForegroundMask;
use flatlift_core::fixtures;
use flatlift_core::mesh::{inflate_silhouette, normalize_mesh, thinness_report, InflateParams};
use flatlift_core::model::TriMesh;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn transformed(m: &TriMesh, rot: &Rotation3<f64>, scale: f64, shift: [f64; 3]) -> TriMesh {
    let vertices = m
        .vertices
        .iter()
        .map(|v| {
            let p = rot * Vector3::new(v[0], v[1], v[2]) * scale;
            [p.x + shift[0], p.y + shift[1], p.z + shift[2]]
        })
        .collect();
    TriMesh { vertices, ..m.clone() }
}

fn arb_cloud() -> impl Strategy<Value = TriMesh> {
    (proptest::array::uniform3(0.2f64..5.0), proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 4..60)).prop_map(
        |(axes, pts)| {
            let vertices: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] * axes[0], p[1] * axes[1], p[2] * axes[2]]).collect();
            let n = vertices.len() as u32;
            let triangles = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
            TriMesh { vertices, triangles, vertex_colors: None }
        },
    )
}

#[test]
fn unit_cube_and_slab() {
    let cube = thinness_report(&fixtures::cuboid(1.0, 1.0, 1.0)).unwrap();
    assert!((cube.thinness_ratio - 1.0).abs() <= 1e-6);
    assert!(!cube.flagged_thin);
    let slab = thinness_report(&fixtures::cuboid(1.0, 1.0, 0.01)).unwrap();
    assert!((slab.thinness_ratio - 0.01).abs() <= 1e-3);
    assert!(slab.flagged_thin);
}

fn edge_use(m: &TriMesh) -> HashMap<(u32, u32), usize> {
    let mut uses = HashMap::new();
    for t in &m.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    uses
}

fn arb_blob() -> impl Strategy<Value = ForegroundMask> {
    proptest::collection::vec((6.0f64..34.0, 6.0f64..34.0, 3.0f64..10.0), 1..4).prop_map(|circles| {
        let fg: Vec<bool> = (0..40 * 40)
            .map(|i| {
                let (x, y) = ((i % 40) as f64 + 0.5, (i / 40) as f64 + 0.5);
                circles.iter().any(|&(cx, cy, r)| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
            })
            .collect();
        ForegroundMask::from_bools(40, 40, &fg)
    })
}

#[test]
fn inflated_disk_is_thick_symmetric_and_closed() {
    let img = fixtures::disk(64, 24.0, [10, 10, 10], fixtures::WHITE);
    let mask = flatlift_core::condition::foreground_mask(&img);
    let m = inflate_silhouette(&mask, &InflateParams::default()).unwrap();
    assert!(thinness_report(&m).unwrap().thinness_ratio >= 0.3);
    assert!(edge_use(&m).values().all(|&n| n == 2));
    let mut front = m.vertices.clone();
    let mut mirrored: Vec<[f64; 3]> = m.vertices.iter().map(|v| [v[0], v[1], -v[2]]).collect();
    let key = |a: &[f64; 3], b: &[f64; 3]| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal);
    front.sort_by(key);
    mirrored.sort_by(key);
    for (a, b) in front.iter().zip(&mirrored) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn thinness_ignores_rotation_scale_and_translation(
        m in arb_cloud(),
        angles in proptest::array::uniform3(-std::f64::consts::PI..std::f64::consts::PI),
        scale in 0.01f64..100.0,
        shift in proptest::array::uniform3(-50.0f64..50.0),
    ) {
        let rot = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
        let a = thinness_report(&m).unwrap();
        let b = thinness_report(&transformed(&m, &rot, scale, shift)).unwrap();
        prop_assert!((a.thinness_ratio - b.thinness_ratio).abs() <= 1e-6, "{a:?} vs {b:?}");
        for k in 0..3 {
            prop_assert!((a.principal_extents[k] * scale - b.principal_extents[k]).abs() <= 1e-6 * scale.max(1.0) * a.principal_extents[0].max(1.0));
        }
    }

    #[test]
    fn inflated_blobs_are_valid_closed_meshes(mask in arb_blob(), step in 1u32..4) {
        let m = inflate_silhouette(&mask, &InflateParams { grid_step: step, ..Default::default() }).unwrap();
        m.validate().unwrap();
        prop_assert!(edge_use(&m).values().all(|&n| n == 2));
        // already normalized, so normalizing again changes nothing
        let again = normalize_mesh(&m).unwrap();
        for (a, b) in m.vertices.iter().zip(&again.vertices) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-9);
            }
        }
    }
}
