//! Fixed-size patch grids over a volume and overlap-averaged stitching.
//!
//! Origins along each axis are `0, stride, 2*stride, ...`; the last origin
//! is pulled back so the final patch ends flush with the volume boundary.
//! Patches never read outside the volume and no padding is invented.

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume, VoxelData};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub volume_shape: [usize; 3],
    pub patch_shape: [usize; 3],
    /// Patch corners, ordered by (z, y, x).
    pub origins: Vec<[usize; 3]>,
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        if o >= last {
            out.push(last);
            break;
        }
        out.push(o);
        o += stride;
    }
    out
}

/// Strides must lie in `1..=patch` per axis so that every voxel is covered.
pub fn plan_patches(volume_shape: [usize; 3], patch_shape: [usize; 3], stride: [usize; 3]) -> Result<PatchGrid> {
    if (0..3).any(|k| stride[k] == 0 || stride[k] > patch_shape[k]) {
        return Err(Error::InvalidStride(stride));
    }
    if (0..3).any(|k| patch_shape[k] == 0 || patch_shape[k] > volume_shape[k]) {
        return Err(Error::PatchLargerThanVolume {
            patch: patch_shape,
            volume: volume_shape,
        });
    }
    let per_axis: Vec<Vec<usize>> = (0..3)
        .map(|k| axis_origins(volume_shape[k], patch_shape[k], stride[k]))
        .collect();
    let mut origins = Vec::with_capacity(per_axis.iter().map(Vec::len).product());
    for &z in &per_axis[2] {
        for &y in &per_axis[1] {
            for &x in &per_axis[0] {
                origins.push([x, y, z]);
            }
        }
    }
    Ok(PatchGrid {
        volume_shape,
        patch_shape,
        origins,
    })
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Per-voxel number of covering patches.
    pub fn coverage(&self) -> Vec<u32> {
        let dims = Dims(self.volume_shape);
        let mut count = vec![0u32; dims.len()];
        for o in &self.origins {
            for z in o[2]..o[2] + self.patch_shape[2] {
                for y in o[1]..o[1] + self.patch_shape[1] {
                    let row = dims.index(o[0], y, z);
                    for c in &mut count[row..row + self.patch_shape[0]] {
                        *c += 1;
                    }
                }
            }
        }
        count
    }
}

/// Copy the sub-block starting at `origin`. Spacing is inherited and the
/// affine translated to the patch corner.
pub fn extract_patch(v: &Volume, origin: [usize; 3], patch_shape: [usize; 3]) -> Result<Volume> {
    let shape = v.shape();
    if (0..3).any(|k| origin[k] + patch_shape[k] > shape[k] || patch_shape[k] == 0) {
        return Err(Error::OutOfBounds {
            origin,
            patch: patch_shape,
            volume: shape,
        });
    }
    let src = v.dims();
    let dst = Dims(patch_shape);
    macro_rules! copy {
        ($d:expr) => {{
            let mut out = Vec::with_capacity(dst.len());
            for z in 0..patch_shape[2] {
                for y in 0..patch_shape[1] {
                    let s = src.index(origin[0], origin[1] + y, origin[2] + z);
                    out.extend_from_slice(&$d[s..s + patch_shape[0]]);
                }
            }
            out
        }};
    }
    let data = match v.data() {
        VoxelData::U8(d) => VoxelData::U8(copy!(d)),
        VoxelData::I16(d) => VoxelData::I16(copy!(d)),
        VoxelData::F32(d) => VoxelData::F32(copy!(d)),
    };
    let mut affine = *v.affine();
    for row in affine.iter_mut().take(3) {
        for a in 0..3 {
            row[3] += row[a] * origin[a] as f64;
        }
    }
    Volume::with_affine(dst, v.spacing(), affine, data)
}

/// Running per-voxel sum and coverage count. Sums are kept in f64 so that
/// averaging identical values returns them exactly.
///
/// A single accumulator is single-owner; parallel producers should each
/// fill their own accumulator over a disjoint patch subset and [`merge`]
/// them.
///
/// [`merge`]: StitchAccumulator::merge
#[derive(Debug, Clone)]
pub struct StitchAccumulator {
    dims: Dims,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl StitchAccumulator {
    pub fn new(volume_shape: [usize; 3]) -> Self {
        let dims = Dims(volume_shape);
        StitchAccumulator {
            dims,
            sum: vec![0.0; dims.len()],
            count: vec![0; dims.len()],
        }
    }

    pub fn add(&mut self, origin: [usize; 3], patch: &Volume) -> Result<()> {
        let p = patch.shape();
        let shape = self.dims.0;
        if (0..3).any(|k| origin[k] + p[k] > shape[k]) {
            return Err(Error::OutOfBounds {
                origin,
                patch: p,
                volume: shape,
            });
        }
        let pd = patch.dims();
        for z in 0..p[2] {
            for y in 0..p[1] {
                let dst = self.dims.index(origin[0], origin[1] + y, origin[2] + z);
                let src = pd.index(0, y, z);
                for x in 0..p[0] {
                    self.sum[dst + x] += patch.get_f64(src + x);
                    self.count[dst + x] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &StitchAccumulator) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(self.dims.0, other.dims.0));
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        Ok(())
    }

    pub fn min_count(&self) -> u32 {
        self.count.iter().copied().min().unwrap_or(0)
    }

    /// Per-voxel mean. Voxels no patch touched come out as 0.
    pub fn finalize(self) -> Vec<f32> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64) as f32 })
            .collect()
    }
}

/// Reassemble one float prediction per grid origin into a full volume,
/// averaging where patches overlap. `spacing` is applied to the output.
pub fn stitch(grid: &PatchGrid, patches: &[Volume], spacing: [f64; 3]) -> Result<Volume> {
    if patches.len() != grid.len() {
        return Err(Error::MissingPatch {
            expected: grid.len(),
            found: patches.len(),
        });
    }
    let mut acc = StitchAccumulator::new(grid.volume_shape);
    for (o, p) in grid.origins.iter().zip(patches) {
        if p.shape() != grid.patch_shape {
            return Err(Error::ShapeMismatch(p.shape(), grid.patch_shape));
        }
        acc.add(*o, p)?;
    }
    Volume::from_f32(Dims(grid.volume_shape), spacing, acc.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_patch() {
        let g = plan_patches([96; 3], [96; 3], [96; 3]).unwrap();
        assert_eq!(g.origins, vec![[0, 0, 0]]);
    }

    #[test]
    fn last_origin_clamped() {
        let g = plan_patches([160, 96, 96], [96; 3], [96; 3]).unwrap();
        assert_eq!(g.origins, vec![[0, 0, 0], [64, 0, 0]]);
    }

    #[test]
    fn ct_sized_grid() {
        let g = plan_patches([512, 512, 228], [128; 3], [128; 3]).unwrap();
        assert_eq!(g.len(), 32);
        assert_eq!(g.origins.last().unwrap()[2], 100);
        let zs: Vec<usize> = g.origins.iter().map(|o| o[2]).collect();
        assert!(zs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            plan_patches([10, 10, 10], [11, 4, 4], [4; 3]),
            Err(Error::PatchLargerThanVolume { .. })
        ));
        assert!(matches!(
            plan_patches([10, 10, 10], [4; 3], [4, 0, 4]),
            Err(Error::InvalidStride(_))
        ));
        assert!(matches!(
            plan_patches([10, 10, 10], [4; 3], [4, 5, 4]),
            Err(Error::InvalidStride(_))
        ));
        let v = Volume::from_u8(Dims::new(4, 4, 4), [1.0; 3], vec![0; 64]).unwrap();
        assert!(matches!(
            extract_patch(&v, [3, 0, 0], [2, 2, 2]),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn extract_from_ramp() {
        let dims = Dims::new(4, 3, 2);
        let data: Vec<f32> = (0..dims.len()).map(|i| i as f32).collect();
        let v = Volume::from_f32(dims, [1.0; 3], data).unwrap();
        let p = extract_patch(&v, [1, 0, 0], [2, 2, 2]).unwrap();
        // value = x + 4y + 12z
        assert_eq!(p.as_f32().unwrap(), &[1.0, 2.0, 5.0, 6.0, 13.0, 14.0, 17.0, 18.0]);
        let corner = extract_patch(&v, [2, 1, 0], [2, 2, 2]).unwrap();
        assert_eq!(*corner.as_f32().unwrap().last().unwrap(), 23.0);
        assert_eq!(extract_patch(&v, [0, 0, 0], [4, 3, 2]).unwrap(), v);
    }

    #[test]
    fn overlap_is_averaged() {
        let g = PatchGrid {
            volume_shape: [3, 1, 1],
            patch_shape: [2, 1, 1],
            origins: vec![[0, 0, 0], [1, 0, 0]],
        };
        let a = Volume::from_f32(Dims::new(2, 1, 1), [1.0; 3], vec![0.2; 2]).unwrap();
        let b = Volume::from_f32(Dims::new(2, 1, 1), [1.0; 3], vec![0.6; 2]).unwrap();
        let out = stitch(&g, &[a, b], [1.0; 3]).unwrap();
        let v = out.as_f32().unwrap();
        assert_eq!(v[0], 0.2);
        assert!((v[1] - 0.4).abs() < 1e-7);
        assert_eq!(v[2], 0.6);
    }

    #[test]
    fn constant_patches() {
        let g = plan_patches([7, 5, 6], [4, 3, 4], [3, 2, 3]).unwrap();
        let p = Volume::from_f32(Dims::new(4, 3, 4), [1.0; 3], vec![0.3; 48]).unwrap();
        let out = stitch(&g, &vec![p; g.len()], [1.0; 3]).unwrap();
        assert!(out.as_f32().unwrap().iter().all(|&x| x == 0.3));
    }

    #[test]
    fn stitch_errors() {
        let g = plan_patches([4, 4, 4], [2, 2, 2], [2, 2, 2]).unwrap();
        let p = Volume::from_f32(Dims::new(2, 2, 2), [1.0; 3], vec![0.0; 8]).unwrap();
        assert!(matches!(
            stitch(&g, &[p.clone()], [1.0; 3]),
            Err(Error::MissingPatch { expected: 8, found: 1 })
        ));
        let q = Volume::from_f32(Dims::new(2, 2, 1), [1.0; 3], vec![0.0; 4]).unwrap();
        let mut ps = vec![p; 7];
        ps.push(q);
        assert!(matches!(stitch(&g, &ps, [1.0; 3]), Err(Error::ShapeMismatch(..))));
    }
}
