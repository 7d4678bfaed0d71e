//! Invariants checked over randomized inputs.

use num_complex::Complex64;
use proptest::prelude::*;
use sasvolt::beamform::{backproject, ReconVolume};
use sasvolt::geometry::{Aabb, Grid, Vec3};
use sasvolt::metrics::{chamfer, iou, Occupancy};
use sasvolt::optim::{Adam, AdamConfig};
use sasvolt::render::{transmittance, EllipsoidFrame};
use sasvolt::scene::extract_mesh;
use sasvolt::signal::{analytic, convolve, drc, make_lfm, AnalyticSeries, TimeSeries, Window};
use sasvolt::simulator::{MeasurementSet, Processing, SensorPose, SeriesData};

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3(1.0).prop_filter_map("degenerate direction", |v| v.try_normalize())
}

fn naive_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn fft_convolution_matches_direct_sum(
        a in prop::collection::vec(-1.0f64..1.0, 9..200),
        b in prop::collection::vec(-1.0f64..1.0, 9..80),
    ) {
        let fast = convolve(&a, &b);
        let slow = naive_convolve(&a, &b);
        prop_assert_eq!(fast.len(), slow.len());
        for (f, s) in fast.iter().zip(&slow) {
            prop_assert!((f - s).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_signal_keeps_the_real_part(x in prop::collection::vec(-1.0f64..1.0, 2..300)) {
        let ts = TimeSeries::new(x.clone(), 50e3, 0.0).unwrap();
        let z = analytic(&ts).unwrap();
        for (zi, xi) in z.samples.iter().zip(&x) {
            prop_assert!((zi.re - xi).abs() < 1e-10);
        }
    }

    #[test]
    fn ellipsoid_points_satisfy_the_path_identity(
        tx in vec3(1.0),
        rx in vec3(1.0),
        dir in unit(),
        margin in 1e-3f64..2.0,
    ) {
        let frame = EllipsoidFrame::new(tx, rx);
        let r = tx.distance(rx) / 2.0 + margin;
        let l = frame.depth(tx, dir, r).unwrap();
        prop_assert!(l >= 0.0);
        let x = tx + dir * l;
        prop_assert!((x.distance(tx) + x.distance(rx) - 2.0 * r).abs() < 1e-9);
    }

    #[test]
    fn transmittance_starts_at_one_and_never_grows(
        mags in prop::collection::vec(-5.0f64..5.0, 1..40),
        zeta in 0.0f64..50.0,
    ) {
        let depths: Vec<f64> = (0..mags.len()).map(|k| 0.1 + 0.01 * k as f64).collect();
        let t = transmittance(&mags, &depths, zeta).unwrap();
        prop_assert_eq!(t[0], 1.0);
        for w in t.windows(2) {
            prop_assert!(w[1] <= w[0] && w[1] > 0.0);
        }
    }

    #[test]
    fn chamfer_is_symmetric_and_zero_on_itself(
        a in prop::collection::vec(vec3(1.0), 1..60),
        b in prop::collection::vec(vec3(1.0), 1..60),
    ) {
        let ab = chamfer(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - chamfer(&b, &a).unwrap()).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn iou_is_a_symmetric_fraction(
        a in prop::collection::vec(any::<bool>(), 27),
        b in prop::collection::vec(any::<bool>(), 27),
    ) {
        let (oa, ob) = (Occupancy { dims: [3; 3], cells: a }, Occupancy { dims: [3; 3], cells: b });
        let v = iou(&oa, &ob).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&ob, &oa).unwrap());
        prop_assert_eq!(iou(&oa, &oa).unwrap(), 1.0);
    }

    #[test]
    fn grid_indices_round_trip(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9, half in 0.01f64..3.0) {
        let grid = Grid::new([nx, ny, nz], Aabb::cube(Vec3::new(0.3, -0.2, 0.1), half)).unwrap();
        for i in 0..grid.len() {
            let [x, y, z] = grid.coords(i);
            prop_assert_eq!(grid.index(x, y, z), i);
            prop_assert_eq!(grid.voxel_of(grid.center_of(i)), Some(i));
        }
    }

    #[test]
    fn extracted_isosurfaces_are_closed(
        values in prop::collection::vec(0.0f64..1.0, 216),
        threshold in 0.05f64..0.95,
    ) {
        let grid = Grid::new([6; 3], Aabb::cube(Vec3::ZERO, 1.0)).unwrap();
        let voxels = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let volume = ReconVolume::new(grid, voxels).unwrap();
        if let Ok(mesh) = extract_mesh(&volume, threshold) {
            prop_assert_eq!(mesh.boundary_edge_count(), 0);
        }
    }

    #[test]
    fn dynamic_range_compression_keeps_sign_and_order(
        x in prop::collection::vec(-10.0f64..10.0, 1..50),
        kappa in 0.05f64..1.0,
    ) {
        let ts = TimeSeries::new(x.clone(), 1.0, 0.0).unwrap();
        let y = drc(&ts, kappa).unwrap();
        for (i, (&a, &b)) in x.iter().zip(&y.samples).enumerate() {
            prop_assert_eq!(a.signum(), b.signum());
            for (&c, &d) in x[i..].iter().zip(&y.samples[i..]) {
                if a < c {
                    prop_assert!(b <= d);
                }
            }
        }
    }

    #[test]
    fn first_adam_step_has_length_lr(g in prop::collection::vec(-1e3f64..1e3, 1..20), lr in 1e-4f64..1.0) {
        prop_assume!(g.iter().all(|v| v.abs() > 1e-3));
        let mut p = vec![0.0; g.len()];
        let mut adam = Adam::new(g.len(), AdamConfig { eps: 1e-12, ..AdamConfig::with_lr(lr) });
        adam.step(&mut p, &g);
        for (pi, gi) in p.iter().zip(&g) {
            prop_assert!((pi + lr * gi.signum()).abs() < 1e-9 * lr.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn backprojection_is_linear_in_the_data(
        seed_samples in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 400),
        gain in -3.0f64..3.0,
    ) {
        let pulse = make_lfm(10e3, 30e3, 1e-3, 100e3, Window::None).unwrap();
        let poses = vec![
            SensorPose::monostatic(Vec3::new(-0.5, 0.0, 0.0), Vec3::X, 0.8).unwrap(),
            SensorPose::monostatic(Vec3::new(0.0, -0.5, 0.1), Vec3::Y, 0.8).unwrap(),
        ];
        let make = |g: f64| {
            let series: Vec<AnalyticSeries> = (0..2)
                .map(|p| {
                    let s = seed_samples.iter().map(|&(re, im)| Complex64::new(re, im * (p + 1) as f64) * g).collect();
                    AnalyticSeries::new(s, 100e3, 0.0).unwrap()
                })
                .collect();
            MeasurementSet::new(poses.clone(), SeriesData::Analytic(series), pulse.clone(), 343.0, Aabb::cube(Vec3::ZERO, 0.1), Processing::Matched)
                .unwrap()
        };
        let grid = Grid::new([5; 3], Aabb::cube(Vec3::ZERO, 0.1)).unwrap();
        let base = backproject(&make(1.0), &grid).unwrap();
        let scaled = backproject(&make(gain), &grid).unwrap();
        for (a, b) in base.voxels.iter().zip(&scaled.voxels) {
            prop_assert!((a * gain - b).norm() < 1e-9 * (1.0 + a.norm()));
        }
    }
}
