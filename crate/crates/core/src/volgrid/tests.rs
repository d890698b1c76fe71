use super::*;
use approx::assert_abs_diff_eq;
use ndarray::Array3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn volume_from_fn(
    shape: (usize, usize, usize),
    spacing: (f64, f64, f64),
    mut f: impl FnMut(usize, usize, usize) -> f64,
) -> Volume {
    let geom = Geometry::axis_aligned(shape, spacing);
    let data = Array3::from_shape_fn(shape, |(d, h, w)| f(d, h, w));
    Volume::new(data, spacing, geom.affine).unwrap()
}

fn random_volume(shape: (usize, usize, usize), seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    volume_from_fn(shape, (1.0, 1.0, 1.0), |_, _, _| rng.gen::<f64>())
}

#[test]
fn volume_invariants_rejected() {
    let geom = Geometry::axis_aligned((2, 2, 2), (1.0, 1.0, 1.0));
    assert!(Volume::new(Array3::zeros((2, 2, 2)), (0.0, 1.0, 1.0), geom.affine).is_err());
    let mut bad = Array3::zeros((2, 2, 2));
    bad[[0, 0, 0]] = f64::NAN;
    assert!(Volume::new(bad, (1.0, 1.0, 1.0), geom.affine).is_err());
    let singular = Matrix4::zeros();
    assert!(Volume::new(Array3::zeros((2, 2, 2)), (1.0, 1.0, 1.0), singular).is_err());
}

#[test]
fn nifti_roundtrip_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.nii");
    // Values chosen f32-representable so the 32-bit payload is lossless.
    let v = volume_from_fn((3, 4, 5), (2.0, 1.5, 1.0), |d, h, w| {
        (d as f64) * 8.0 + (h as f64) * 0.5 + (w as f64) * 0.25
    });
    write_volume(&v, &p).unwrap();
    let r = read_volume(&p).unwrap();
    assert_eq!(r.data, v.data);
    assert_eq!(r.shape(), v.shape());
    assert_eq!(r.spacing, v.spacing);
    assert_eq!(r.affine, v.affine);
}

#[test]
fn nifti_writes_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume((4, 5, 6), 7);
    let p1 = dir.path().join("a.nii");
    let p2 = dir.path().join("b.nii");
    write_volume(&v, &p1).unwrap();
    write_volume(&v, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn nifti_mask_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.nii");
    let geom = Geometry::axis_aligned((3, 3, 3), (1.0, 1.0, 1.0));
    let mut m = BinaryMask::empty(&geom);
    m.data[[1, 2, 0]] = true;
    m.data[[0, 0, 0]] = true;
    write_mask(&m, &p).unwrap();
    let r = read_mask(&p).unwrap();
    assert_eq!(r.data, m.data);
}

#[test]
fn nifti_4d_payload_rejected_by_read_volume() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.nii");
    let f0 = random_volume((3, 3, 3), 1);
    let f1 = f0.with_data(f0.data.mapv(|x| x + 1.0));
    let s = DynamicSeries::new(vec![f0, f1], vec![1.0, 2.0]).unwrap();
    write_series(&s, &p).unwrap();
    match read_volume(&p) {
        Err(Error::NiftiNot3d { ndim, .. }) => assert_eq!(ndim, 4),
        other => panic!("expected NiftiNot3d, got {other:?}"),
    }
    let r = read_series(&p).unwrap();
    assert_eq!(r.frames.len(), 2);
    assert_eq!(r.frame_mid_times_min, vec![1.0, 2.0]);
    assert_eq!(r.frames[1].data, s.frames[1].data);
}

/// Cross-check against an independently hand-built NIfTI file: the bytes are
/// assembled here from the standard header layout, not by our writer.
#[test]
fn nifti_reader_matches_hand_built_reference_file() {
    let shape_xyz = (3usize, 2usize, 2usize); // nx, ny, nz
    let n = shape_xyz.0 * shape_xyz.1 * shape_xyz.2;
    let mut bytes = vec![0u8; 352 + 4 * n];
    bytes[0..4].copy_from_slice(&348i32.to_le_bytes());
    // dim[0]=3, dim[1..3]=(3,2,2)
    let dims: [i16; 8] = [3, 3, 2, 2, 1, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        bytes[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    bytes[70..72].copy_from_slice(&16i16.to_le_bytes()); // float32
    bytes[72..74].copy_from_slice(&32i16.to_le_bytes());
    let pixdims: [f32; 8] = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdims.iter().enumerate() {
        bytes[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    bytes[108..112].copy_from_slice(&352.0f32.to_le_bytes()); // vox_offset
    bytes[112..116].copy_from_slice(&1.0f32.to_le_bytes()); // scl_slope
    bytes[254..256].copy_from_slice(&1i16.to_le_bytes()); // sform_code
    let srow: [[f32; 4]; 3] = [
        [1.0, 0.0, 0.0, -10.0],
        [0.0, 1.0, 0.0, 5.0],
        [0.0, 0.0, 1.0, 0.0],
    ];
    for (r, row) in srow.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            bytes[280 + 16 * r + 4 * c..284 + 16 * r + 4 * c].copy_from_slice(&v.to_le_bytes());
        }
    }
    bytes[344..348].copy_from_slice(b"n+1\0");
    // Payload: value = linear index, x fastest.
    for i in 0..n {
        bytes[352 + 4 * i..356 + 4 * i].copy_from_slice(&(i as f32).to_le_bytes());
    }

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ref.nii");
    std::fs::write(&p, &bytes).unwrap();
    let v = read_volume(&p).unwrap();
    assert_eq!(v.shape(), (2, 2, 3)); // (D, H, W)
    assert_eq!(v.spacing, (1.0, 1.0, 1.0));
    // index = x + y*nx + z*nx*ny must land at [z][y][x]
    for d in 0..2 {
        for h in 0..2 {
            for w in 0..3 {
                assert_eq!(v.data[[d, h, w]], (w + h * 3 + d * 6) as f64);
            }
        }
    }
    assert_eq!(v.affine[(0, 3)], -10.0);
    assert_eq!(v.affine[(1, 3)], 5.0);
    assert_eq!(v.affine[(0, 0)], 1.0);
}

#[test]
fn nifti_rejects_garbage_and_unsupported_datatype() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.nii");
    std::fs::write(&p, b"not a nifti").unwrap();
    assert!(matches!(read_volume(&p), Err(Error::Nifti { .. })));

    // Valid header but int16 datatype.
    let v = random_volume((2, 2, 2), 3);
    let q = dir.path().join("dt.nii");
    write_volume(&v, &q).unwrap();
    let mut bytes = std::fs::read(&q).unwrap();
    bytes[70..72].copy_from_slice(&4i16.to_le_bytes());
    std::fs::write(&q, &bytes).unwrap();
    assert!(matches!(
        read_volume(&q),
        Err(Error::NiftiDatatype { code: 4, .. })
    ));
}

#[test]
fn resample_identity_geometry_is_identity() {
    let v = random_volume((4, 5, 6), 11);
    let r = resample(&v, &v.geometry(), ResampleMode::Trilinear).unwrap();
    assert_abs_diff_eq!(
        r.data.as_slice().unwrap(),
        v.data.as_slice().unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn resample_constant_stays_constant_in_interior() {
    let v = volume_from_fn((8, 8, 8), (1.0, 1.0, 1.0), |_, _, _| 3.5);
    // Target grid strictly inside the source support.
    let mut affine = Matrix4::identity();
    affine[(0, 3)] = 1.3;
    affine[(1, 3)] = 1.1;
    affine[(2, 3)] = 0.7;
    let target = Geometry {
        shape: (5, 5, 5),
        spacing: (1.0, 1.0, 1.0),
        affine,
    };
    let r = resample(&v, &target, ResampleMode::Trilinear).unwrap();
    for &x in r.data.iter() {
        assert_abs_diff_eq!(x, 3.5, epsilon = 1e-12);
    }
}

/// Analytic oracle: a ramp along one axis upsampled 2x must match the exact
/// linear interpolant at interior points.
#[test]
fn resample_ramp_matches_analytic_interpolant() {
    let v = volume_from_fn((4, 4, 8), (1.0, 1.0, 1.0), |_, _, w| w as f64);
    // 2x upsampling along w: spacing 0.5, aligned world origin.
    let mut affine = Matrix4::identity();
    affine[(0, 0)] = 0.5;
    let target = Geometry {
        shape: (4, 4, 14),
        spacing: (1.0, 1.0, 0.5),
        affine,
    };
    let r = resample(&v, &target, ResampleMode::Trilinear).unwrap();
    for d in 0..4 {
        for h in 0..4 {
            for w in 0..14 {
                let x = w as f64 * 0.5; // world/source coordinate
                assert_abs_diff_eq!(r.data[[d, h, w]], x, epsilon = 1e-6);
            }
        }
    }
}

#[test]
fn resample_nearest_mask_stays_binary() {
    let geom = Geometry::axis_aligned((6, 6, 6), (1.0, 1.0, 1.0));
    let mut m = BinaryMask::empty(&geom);
    m.data[[2, 3, 4]] = true;
    m.data[[1, 1, 1]] = true;
    let target = Geometry::axis_aligned((3, 3, 3), (2.0, 2.0, 2.0));
    let r = resample_mask(&m, &target).unwrap();
    assert_eq!(r.shape(), (3, 3, 3));
    // Values of a nearest-resampled 0/1 volume are exactly {0, 1}: carried by type.
    assert!(r.count() <= 2);
}

#[test]
fn bbox_single_voxel_and_full_grid() {
    let geom = Geometry::axis_aligned((8, 8, 8), (1.0, 1.0, 1.0));
    let mut m = BinaryMask::empty(&geom);
    m.data[[3, 4, 5]] = true;
    let b = bbox_of_mask(&m, 0).unwrap();
    assert_eq!(b, VoxelBox { min: [3, 4, 5], max: [3, 4, 5] });

    let full = BinaryMask {
        data: Array3::from_elem((8, 8, 8), true),
        spacing: geom.spacing,
        affine: geom.affine,
    };
    let b = bbox_of_mask(&full, 2).unwrap();
    assert_eq!(b, VoxelBox { min: [0, 0, 0], max: [7, 7, 7] });

    let empty = BinaryMask::empty(&geom);
    assert!(matches!(bbox_of_mask(&empty, 0), Err(Error::EmptyMask)));
}

/// Brute-force scan oracle for the bounding box of random sparse masks.
#[test]
fn bbox_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let geom = Geometry::axis_aligned((10, 12, 9), (1.0, 1.0, 1.0));
        let mut m = BinaryMask::empty(&geom);
        for _ in 0..8 {
            let d = rng.gen_range(0..10);
            let h = rng.gen_range(0..12);
            let w = rng.gen_range(0..9);
            m.data[[d, h, w]] = true;
        }
        if m.is_empty() {
            continue;
        }
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for ((d, h, w), &b) in m.data.indexed_iter() {
            if b {
                for (a, x) in [d, h, w].into_iter().enumerate() {
                    lo[a] = lo[a].min(x);
                    hi[a] = hi[a].max(x);
                }
            }
        }
        let b = bbox_of_mask(&m, 0).unwrap();
        assert_eq!(b.min, lo);
        assert_eq!(b.max, hi);
    }
}

#[test]
fn crop_full_grid_is_identity_and_composes() {
    let v = random_volume((5, 6, 7), 21);
    let full = VoxelBox { min: [0, 0, 0], max: [4, 5, 6] };
    let c = crop(&v, &full).unwrap();
    assert_eq!(c.data, v.data);
    assert_eq!(c.affine, v.affine);

    let b1 = VoxelBox { min: [1, 2, 0], max: [4, 5, 5] };
    let c1 = crop(&v, &b1).unwrap();
    let sub_full = VoxelBox { min: [0, 0, 0], max: [3, 3, 5] };
    let c2 = crop(&c1, &sub_full).unwrap();
    assert_eq!(c1.data, c2.data);
    assert_eq!(c1.affine, c2.affine);

    // Cropped voxel (0,0,0) equals the original voxel at the box minimum,
    // and at the same world position.
    assert_eq!(c1.data[[0, 0, 0]], v.data[[1, 2, 0]]);
    let w_orig = v.geometry().voxel_to_world(1.0, 2.0, 0.0);
    let w_crop = c1.geometry().voxel_to_world(0.0, 0.0, 0.0);
    for a in 0..3 {
        assert_abs_diff_eq!(w_orig[a], w_crop[a], epsilon = 1e-12);
    }

    let oob = VoxelBox { min: [0, 0, 0], max: [5, 5, 6] };
    assert!(crop(&v, &oob).is_err());
}

#[test]
fn case_pair_rejects_tumor_outside_brain() {
    let geom = Geometry::axis_aligned((4, 4, 4), (1.0, 1.0, 1.0));
    let v = Volume::zeros(&geom);
    let mut brain = BinaryMask::empty(&geom);
    brain.data[[1, 1, 1]] = true;
    let mut tumor = BinaryMask::empty(&geom);
    tumor.data[[2, 2, 2]] = true;
    let case = CasePair {
        mri: [v.clone(), v.clone(), v.clone(), v.clone()],
        pet: v,
        brain_mask: brain,
        tumor_mask: tumor,
        patient_id: "p0".into(),
        mri_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        pet_date: NaiveDate::from_ymd_opt(2020, 1, 10).unwrap(),
        tracer: Tracer::FmisoLike,
    };
    assert!(case.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// write then read is the identity for f32-representable payloads.
    #[test]
    fn prop_nifti_roundtrip(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = volume_from_fn((3, 4, 5), (1.0, 1.0, 1.0), |_, _, _| {
            f32::from_bits(rng.gen::<u32>() % 0x7f00_0000) as f64
        });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        write_volume(&v, &p).unwrap();
        let r = read_volume(&p).unwrap();
        prop_assert_eq!(r.data, v.data);
    }

    /// bbox with margin 0 is tight: shrinking any side excludes support.
    #[test]
    fn prop_bbox_tight(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = Geometry::axis_aligned((8, 8, 8), (1.0, 1.0, 1.0));
        let mut m = BinaryMask::empty(&geom);
        for _ in 0..5 {
            m.data[[rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(0..8)]] = true;
        }
        let b = bbox_of_mask(&m, 0).unwrap();
        for ((d, h, w), &x) in m.data.indexed_iter() {
            if x {
                prop_assert!(b.contains([d, h, w]));
            }
        }
        // Some support voxel touches each face of the box.
        for a in 0..3 {
            let on_min = m.data.indexed_iter().any(|((d, h, w), &x)| x && [d, h, w][a] == b.min[a]);
            let on_max = m.data.indexed_iter().any(|((d, h, w), &x)| x && [d, h, w][a] == b.max[a]);
            prop_assert!(on_min && on_max);
        }
    }
}
