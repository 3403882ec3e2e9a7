mod common;

use proptest::prelude::*;

use pulmofuse::ensemble::{compute_weights, fuse_both, EnsembleWeights, ModelScores};
use pulmofuse::metrics::dice;
use pulmofuse::morphology::{
    connected_components_bits, distance_transform_bits, skeletonize_bits, Connectivity,
};
use pulmofuse::nifti::{read_nifti_bytes, write_nifti_bytes, Endianness, NiftiHeader};
use pulmofuse::patching::{extract_patch, plan_patches, stitch};
use pulmofuse::volume_ops::{apply_augmentation, clip_scale_hu, project_sum, AugmentationSpec, Plane};
use pulmofuse::{Dims, Volume, VoxelData};

use common::*;

fn shape_strategy(max: usize) -> impl Strategy<Value = [usize; 3]> {
    (1..=max, 1..=max, 1..=max).prop_map(|(a, b, c)| [a, b, c])
}

fn voxel_data(kind: u8, n: usize, seed: u64) -> VoxelData {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    match kind {
        0 => VoxelData::U8((0..n).map(|_| rng.gen()).collect()),
        1 => VoxelData::I16((0..n).map(|_| rng.gen()).collect()),
        _ => VoxelData::F32((0..n).map(|_| f32::from_bits(rng.gen::<u32>() & 0xBF7F_FFFF)).collect()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nifti_round_trip_is_bit_exact(
        shape in shape_strategy(9),
        kind in 0u8..3,
        big in any::<bool>(),
        gz in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let dims = Dims(shape);
        let v = Volume::new(dims, [0.5, 1.25, 2.0], voxel_data(kind, dims.len(), seed)).unwrap();
        let mut h = NiftiHeader::for_volume(&v);
        h.endianness = if big { Endianness::Big } else { Endianness::Little };
        let bytes = write_nifti_bytes(&h, &v, gz).unwrap();
        let (h2, back) = read_nifti_bytes(&bytes).unwrap();
        prop_assert_eq!(h2.endianness, h.endianness);
        prop_assert_eq!(back.kind(), v.kind());
        match (back.data(), v.data()) {
            (VoxelData::F32(a), VoxelData::F32(b)) => {
                let a: Vec<u32> = a.iter().map(|x| x.to_bits()).collect();
                let b: Vec<u32> = b.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn stitch_of_extracted_patches_is_identity(
        shape in shape_strategy(14),
        patch_frac in (1usize..=14, 1usize..=14, 1usize..=14),
        stride in (1usize..=14, 1usize..=14, 1usize..=14),
        seed in any::<u64>(),
    ) {
        let patch = [
            patch_frac.0.min(shape[0]),
            patch_frac.1.min(shape[1]),
            patch_frac.2.min(shape[2]),
        ];
        let stride = [stride.0.min(patch[0]), stride.1.min(patch[1]), stride.2.min(patch[2])];
        let dims = Dims(shape);
        let VoxelData::F32(values) = voxel_data(2, dims.len(), seed) else { unreachable!() };
        let values: Vec<f32> = values.into_iter().map(|x| if x.is_finite() { x } else { 0.0 }).collect();
        let v = Volume::from_f32(dims, [1.0; 3], values).unwrap();
        let grid = plan_patches(shape, patch, stride).unwrap();
        prop_assert!(grid.coverage().iter().all(|&c| c >= 1));
        let patches: Vec<Volume> = grid
            .origins
            .iter()
            .map(|&o| extract_patch(&v, o, patch).unwrap())
            .collect();
        let back = stitch(&grid, &patches, v.spacing()).unwrap();
        prop_assert_eq!(back.as_f32().unwrap(), v.as_f32().unwrap());
    }

    #[test]
    fn cca_matches_flood_fill(
        shape in shape_strategy(10),
        density in 0.05f64..0.7,
        conn in prop::sample::select(vec![6u32, 18, 26]),
        seed in any::<u64>(),
    ) {
        let bits = random_mask(shape, density, seed);
        let lm = connected_components_bits(&bits, Dims(shape), Connectivity::from_count(conn).unwrap());
        prop_assert_eq!(lm.labels, flood_fill_labels(&bits, shape, conn));
    }

    #[test]
    fn edt_matches_brute_force(
        shape in shape_strategy(8),
        density in 0.3f64..0.95,
        spacing in (0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0),
        seed in any::<u64>(),
    ) {
        let bits = random_mask(shape, density, seed);
        let spacing = [spacing.0, spacing.1, spacing.2];
        let got = distance_transform_bits(&bits, Dims(shape), spacing);
        let want = brute_edt(&bits, shape, spacing);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn skeleton_is_a_subset_and_keeps_components(
        shape in shape_strategy(9),
        density in 0.3f64..0.9,
        seed in any::<u64>(),
    ) {
        let bits = random_mask(shape, density, seed);
        let dims = Dims(shape);
        let sk = skeletonize_bits(&bits, dims);
        prop_assert!(sk.iter().zip(&bits).all(|(&s, &b)| s <= b));
        let before = connected_components_bits(&bits, dims, Connectivity::TwentySix).num_components();
        let after = connected_components_bits(&sk, dims, Connectivity::TwentySix).num_components();
        prop_assert_eq!(before, after);
        prop_assert_eq!(skeletonize_bits(&sk, dims), sk);
    }

    #[test]
    fn fused_soft_map_stays_in_unit_range(
        n in 1usize..7,
        scores in prop::collection::vec(1.0f64..100.0, 7),
        seed in any::<u64>(),
    ) {
        let dims = Dims::new(4, 3, 2);
        let preds: Vec<Volume> = (0..n)
            .map(|k| {
                let VoxelData::U8(raw) = voxel_data(0, dims.len(), seed ^ k as u64) else { unreachable!() };
                Volume::from_f32(dims, [1.0; 3], raw.iter().map(|&b| b as f32 / 255.0).collect()).unwrap()
            })
            .collect();
        let w = compute_weights(&ModelScores::new(scores[..n].to_vec()).unwrap()).unwrap();
        let refs: Vec<&Volume> = preds.iter().collect();
        let (mask, soft) = fuse_both(&refs, &w).unwrap();
        prop_assert!(soft.as_f32().unwrap().iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(mask.as_u8().unwrap().iter().all(|&b| b <= 1));
    }

    #[test]
    fn clip_scale_is_monotone_and_bounded(
        values in prop::collection::vec(-3000i16..3000, 1..40),
        lo in -1500f64..0.0,
        width in 1.0f64..3000.0,
    ) {
        let n = values.len();
        let v = Volume::from_i16(Dims::new(n, 1, 1), [1.0; 3], values.clone()).unwrap();
        let out = clip_scale_hu(&v, lo, lo + width).unwrap();
        let s = out.values();
        prop_assert!(s.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for i in 0..n {
            for j in 0..n {
                if values[i] <= values[j] {
                    prop_assert!(s[i] <= s[j]);
                }
            }
        }
    }

    #[test]
    fn double_flip_is_identity(shape in shape_strategy(7), axes in any::<[bool; 3]>(), seed in any::<u64>()) {
        let dims = Dims(shape);
        let VoxelData::U8(raw) = voxel_data(0, dims.len(), seed) else { unreachable!() };
        let v = Volume::from_f32(dims, [1.0; 3], raw.iter().map(|&b| b as f32 / 255.0).collect()).unwrap();
        let n = clip_scale_hu(&v, 0.0, 1.0).unwrap();
        let spec = AugmentationSpec { flip_axes: axes, ..Default::default() };
        let twice = apply_augmentation(&apply_augmentation(&n, &spec).unwrap(), &spec).unwrap();
        prop_assert_eq!(twice.values(), n.values());
    }

    #[test]
    fn projections_preserve_total(shape in shape_strategy(8), seed in any::<u64>()) {
        let dims = Dims(shape);
        let VoxelData::U8(raw) = voxel_data(0, dims.len(), seed) else { unreachable!() };
        let v = Volume::from_u8(dims, [1.0; 3], raw).unwrap();
        let total = v.sum();
        for plane in [Plane::Axial, Plane::Coronal, Plane::Sagittal] {
            prop_assert_eq!(project_sum(&v, plane).unwrap().sum(), total);
        }
    }

    #[test]
    fn dice_is_symmetric_and_bounded(shape in shape_strategy(6), s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = Volume::from_u8(Dims(shape), [1.0; 3], random_mask(shape, 0.4, s1)).unwrap();
        let b = Volume::from_u8(Dims(shape), [1.0; 3], random_mask(shape, 0.4, s2)).unwrap();
        let d = dice(&a, &b).unwrap();
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice_bits(a.as_u8().unwrap(), b.as_u8().unwrap()));
    }

    #[test]
    fn explicit_weights_must_sum_to_one(w in prop::collection::vec(0.0f64..1.0, 1..6)) {
        let total: f64 = w.iter().sum();
        let ok = EnsembleWeights::new(w.clone()).is_ok();
        prop_assert_eq!(ok, (total - 1.0).abs() <= 1e-12);
    }
}
