//! CT preprocessing, augmentation transforms and sum projections.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume, VoxelData};

pub const DEFAULT_HU_RANGE: (f64, f64) = (-1000.0, 1000.0);
pub const MAX_ROTATION_DEGREES: f64 = 30.0;
pub const MAX_INTENSITY_SHIFT_HU: f64 = 10.0;

/// A float-32 volume whose values all lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedVolume(Volume);

impl NormalizedVolume {
    pub fn new(v: Volume) -> Result<Self> {
        let data = v
            .as_f32()
            .ok_or_else(|| Error::InvalidParameter("normalized volume must be float-32".into()))?;
        if let Some(i) = data.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidParameter(format!(
                "voxel {i} = {} outside [0, 1]",
                data[i]
            )));
        }
        Ok(NormalizedVolume(v))
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    pub fn values(&self) -> &[f32] {
        self.0.as_f32().expect("checked on construction")
    }
}

/// Clamp to `[lo, hi]` then rescale linearly onto `[0, 1]`.
pub fn clip_scale_hu(v: &Volume, lo: f64, hi: f64) -> Result<NormalizedVolume> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::DegenerateRange { lo, hi });
    }
    let width = hi - lo;
    let out: Vec<f32> = (0..v.len())
        .map(|i| ((v.get_f64(i).clamp(lo, hi) - lo) / width) as f32)
        .collect();
    Ok(NormalizedVolume(v.like(VoxelData::F32(out))?))
}

/// Kept index range per axis, relative to the original volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropRecord {
    pub original_shape: [usize; 3],
    pub kept: [Range<usize>; 3],
}

impl CropRecord {
    pub fn full(shape: [usize; 3]) -> Self {
        CropRecord {
            original_shape: shape,
            kept: [0..shape[0], 0..shape[1], 0..shape[2]],
        }
    }

    /// `x0:x1,y0:y1,z0:z1 of nx,ny,nz`
    pub fn to_line(&self) -> String {
        let r = &self.kept;
        let s = self.original_shape;
        format!(
            "{}:{},{}:{},{}:{} of {},{},{}",
            r[0].start, r[0].end, r[1].start, r[1].end, r[2].start, r[2].end, s[0], s[1], s[2]
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("malformed crop record {line:?}"));
        let (ranges, shape) = line.trim().split_once(" of ").ok_or_else(bad)?;
        let nums = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
                .collect()
        };
        let shape = nums(shape)?;
        let parts: Vec<&str> = ranges.split(',').collect();
        if shape.len() != 3 || parts.len() != 3 {
            return Err(bad());
        }
        let mut kept = [0..0, 0..0, 0..0];
        for (k, p) in parts.iter().enumerate() {
            let (a, b) = p.split_once(':').ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a >= b || b > shape[k] {
                return Err(bad());
            }
            kept[k] = a..b;
        }
        Ok(CropRecord {
            original_shape: [shape[0], shape[1], shape[2]],
            kept,
        })
    }
}

/// Drop leading and trailing z-slices in which every voxel equals the
/// volume's global minimum.
pub fn crop_uninformative_slices(v: &Volume) -> Result<(Volume, CropRecord)> {
    let (min, _) = v.min_max().ok_or(Error::EmptyVolume)?;
    let [nx, ny, nz] = v.shape();
    let plane = nx * ny;
    let informative = |z: usize| (z * plane..(z + 1) * plane).any(|i| v.get_f64(i) != min);
    let first = (0..nz).find(|&z| informative(z)).ok_or(Error::AllUninformative)?;
    let last = (0..nz).rev().find(|&z| informative(z)).expect("first exists");
    let record = CropRecord {
        original_shape: [nx, ny, nz],
        kept: [0..nx, 0..ny, first..last + 1],
    };
    let cropped = crop_z(v, first, last + 1)?;
    Ok((cropped, record))
}

fn crop_z(v: &Volume, z0: usize, z1: usize) -> Result<Volume> {
    let [nx, ny, _] = v.shape();
    let r = z0 * nx * ny..z1 * nx * ny;
    let data = match v.data() {
        VoxelData::U8(d) => VoxelData::U8(d[r].to_vec()),
        VoxelData::I16(d) => VoxelData::I16(d[r].to_vec()),
        VoxelData::F32(d) => VoxelData::F32(d[r].to_vec()),
    };
    let mut affine = *v.affine();
    for row in affine.iter_mut().take(3) {
        row[3] += row[2] * z0 as f64;
    }
    Volume::with_affine(Dims::new(nx, ny, z1 - z0), v.spacing(), affine, data)
}

/// Place `v` back into its original extent, filling removed voxels with
/// `fill` (cast to the volume's element kind).
pub fn uncrop(v: &Volume, record: &CropRecord, fill: f64) -> Result<Volume> {
    let kept_shape: [usize; 3] = std::array::from_fn(|k| record.kept[k].len());
    if v.shape() != kept_shape {
        return Err(Error::ShapeMismatch(v.shape(), kept_shape));
    }
    let out_dims = Dims(record.original_shape);
    let k = &record.kept;
    let src_dims = v.dims();
    macro_rules! place {
        ($d:expr, $fill:expr) => {{
            let mut out = vec![$fill; out_dims.len()];
            for z in 0..kept_shape[2] {
                for y in 0..kept_shape[1] {
                    let s = src_dims.index(0, y, z);
                    let t = out_dims.index(k[0].start, y + k[1].start, z + k[2].start);
                    out[t..t + kept_shape[0]].copy_from_slice(&$d[s..s + kept_shape[0]]);
                }
            }
            out
        }};
    }
    let data = match v.data() {
        VoxelData::U8(d) => VoxelData::U8(place!(d, fill as u8)),
        VoxelData::I16(d) => VoxelData::I16(place!(d, fill as i16)),
        VoxelData::F32(d) => VoxelData::F32(place!(d, fill as f32)),
    };
    let mut affine = *v.affine();
    for row in affine.iter_mut().take(3) {
        for a in 0..3 {
            row[3] -= row[a] * k[a].start as f64;
        }
    }
    Volume::with_affine(out_dims, v.spacing(), affine, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidParameter(format!("unknown axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    /// Flip along x, y, z.
    pub flip_axes: [bool; 3],
    pub rotation_degrees: f64,
    pub rotation_axis: Axis,
    pub intensity_shift_hu: f64,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            flip_axes: [false; 3],
            rotation_degrees: 0.0,
            rotation_axis: Axis::Z,
            intensity_shift_hu: 0.0,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    /// Draw flips (each with probability 1/2), an angle in [-30, 30] and an
    /// intensity shift in [-10, 10] HU from a ChaCha8 stream seeded by `seed`.
    pub fn sample(seed: u64, rotation_axis: Axis) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flip_axes = [rng.gen_bool(0.5), rng.gen_bool(0.5), rng.gen_bool(0.5)];
        let rotation_degrees = rng.gen_range(-MAX_ROTATION_DEGREES..=MAX_ROTATION_DEGREES);
        let intensity_shift_hu = rng.gen_range(-MAX_INTENSITY_SHIFT_HU..=MAX_INTENSITY_SHIFT_HU);
        AugmentationSpec {
            flip_axes,
            rotation_degrees,
            rotation_axis,
            intensity_shift_hu,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_degrees.abs() <= MAX_ROTATION_DEGREES) {
            return Err(Error::SpecOutOfRange(format!(
                "rotation {} deg outside [-30, 30]",
                self.rotation_degrees
            )));
        }
        if !(self.intensity_shift_hu.abs() <= MAX_INTENSITY_SHIFT_HU) {
            return Err(Error::SpecOutOfRange(format!(
                "intensity shift {} HU outside [-10, 10]",
                self.intensity_shift_hu
            )));
        }
        Ok(())
    }
}

/// Flips, then rotation about the volume centre, then intensity shift.
///
/// Rotation works in physical (mm) coordinates so anisotropic spacing does
/// not shear the image; samples are trilinear and anything mapped from
/// outside the grid reads as 0. The HU shift is applied as `shift / 2000` in
/// normalized units and the result re-clamped to `[0, 1]`.
pub fn apply_augmentation(v: &NormalizedVolume, spec: &AugmentationSpec) -> Result<NormalizedVolume> {
    spec.validate()?;
    let dims = v.volume().dims();
    let mut data = v.values().to_vec();
    for axis in 0..3 {
        if spec.flip_axes[axis] {
            data = flip(&data, dims, axis);
        }
    }
    if spec.rotation_degrees != 0.0 {
        data = rotate(&data, dims, v.volume().spacing(), spec.rotation_axis, spec.rotation_degrees);
    }
    if spec.intensity_shift_hu != 0.0 {
        let delta = (spec.intensity_shift_hu / (DEFAULT_HU_RANGE.1 - DEFAULT_HU_RANGE.0)) as f32;
        for x in &mut data {
            *x = (*x + delta).clamp(0.0, 1.0);
        }
    }
    Ok(NormalizedVolume(v.volume().like(VoxelData::F32(data))?))
}

fn flip(data: &[f32], dims: Dims, axis: usize) -> Vec<f32> {
    let n = dims.0;
    let mut out = vec![0.0f32; data.len()];
    for z in 0..n[2] {
        for y in 0..n[1] {
            for x in 0..n[0] {
                let mut p = [x, y, z];
                p[axis] = n[axis] - 1 - p[axis];
                out[dims.index(p[0], p[1], p[2])] = data[dims.index(x, y, z)];
            }
        }
    }
    out
}

fn rotate(data: &[f32], dims: Dims, spacing: [f64; 3], axis: Axis, degrees: f64) -> Vec<f32> {
    let (a, b) = match axis {
        Axis::X => (1, 2),
        Axis::Y => (2, 0),
        Axis::Z => (0, 1),
    };
    let n = dims.0;
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let centre: [f64; 3] = std::array::from_fn(|k| (n[k] as f64 - 1.0) * 0.5 * spacing[k]);
    let mut out = vec![0.0f32; data.len()];
    for z in 0..n[2] {
        for y in 0..n[1] {
            for x in 0..n[0] {
                let p = [x as f64, y as f64, z as f64];
                let mut q = p;
                // inverse map: rotate the output position by -theta
                let u = p[a] * spacing[a] - centre[a];
                let w = p[b] * spacing[b] - centre[b];
                q[a] = (cos * u + sin * w + centre[a]) / spacing[a];
                q[b] = (-sin * u + cos * w + centre[b]) / spacing[b];
                out[dims.index(x, y, z)] = trilinear(data, dims, q);
            }
        }
    }
    out
}

/// Trilinear sample at fractional index `q`; taps outside the grid count as 0.
fn trilinear(data: &[f32], dims: Dims, q: [f64; 3]) -> f32 {
    let n = dims.0;
    let base: [f64; 3] = std::array::from_fn(|k| q[k].floor());
    let frac: [f64; 3] = std::array::from_fn(|k| q[k] - base[k]);
    if (0..3).any(|k| base[k] < -1.0 || base[k] > n[k] as f64 - 1.0) {
        return 0.0;
    }
    let mut acc = 0.0f64;
    for corner in 0..8usize {
        let mut weight = 1.0;
        let mut idx = [0i64; 3];
        for k in 0..3 {
            let bit = (corner >> k) & 1;
            weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            idx[k] = base[k] as i64 + bit as i64;
        }
        if weight == 0.0 || !dims.contains(idx) {
            continue;
        }
        acc += weight * data[dims.index(idx[0] as usize, idx[1] as usize, idx[2] as usize)] as f64;
    }
    acc as f32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    /// Sum along z; image axes (x, y).
    Axial,
    /// Sum along y; image axes (x, z).
    Coronal,
    /// Sum along x; image axes (y, z).
    Sagittal,
}

impl Plane {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "axial" => Ok(Plane::Axial),
            "coronal" => Ok(Plane::Coronal),
            "sagittal" => Ok(Plane::Sagittal),
            other => Err(Error::InvalidParameter(format!("unknown plane {other:?}"))),
        }
    }
}

/// A 2D image, row-major with `width` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image2 {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[col + self.width * row]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Min-max rescale onto 0..=255 (all zeros for a constant image).
    pub fn to_u8_normalized(&self) -> Vec<u8> {
        let lo = self.pixels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        self.pixels
            .iter()
            .map(|&p| {
                if span > 0.0 {
                    ((p - lo) / span * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }

    /// Binary PGM (P5, maxval 255) of the min-max normalized image.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.to_u8_normalized())
    }
}

/// Sum voxels along the axis normal to `plane`, accumulating in f64.
pub fn project_sum(v: &Volume, plane: Plane) -> Result<Image2> {
    if v.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let [nx, ny, nz] = v.shape();
    let dims = v.dims();
    let (width, height) = match plane {
        Plane::Axial => (nx, ny),
        Plane::Coronal => (nx, nz),
        Plane::Sagittal => (ny, nz),
    };
    let mut pixels = vec![0.0f64; width * height];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let val = v.get_f64(dims.index(x, y, z));
                let pix = match plane {
                    Plane::Axial => x + width * y,
                    Plane::Coronal => x + width * z,
                    Plane::Sagittal => y + width * z,
                };
                pixels[pix] += val;
            }
        }
    }
    Ok(Image2 {
        width,
        height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: [usize; 3], data: Vec<f32>) -> Volume {
        Volume::from_f32(Dims(dims), [1.0; 3], data).unwrap()
    }

    #[test]
    fn clip_scale_examples() {
        let v = Volume::from_i16(Dims::new(4, 1, 1), [1.0; 3], vec![-1500, 0, 250, 1200]).unwrap();
        let n = clip_scale_hu(&v, -1000.0, 1000.0).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 0.625, 1.0]);
    }

    #[test]
    fn clip_scale_rejects_degenerate_range() {
        let v = vol([1, 1, 1], vec![0.0]);
        assert!(matches!(clip_scale_hu(&v, 5.0, 5.0), Err(Error::DegenerateRange { .. })));
        assert!(matches!(clip_scale_hu(&v, 6.0, 5.0), Err(Error::DegenerateRange { .. })));
    }

    #[test]
    fn crop_removes_constant_minimum_slices() {
        let (nx, ny, nz) = (3, 2, 10);
        let mut data = vec![-1024.0f32; nx * ny * nz];
        for z in 3..nz - 2 {
            data[z * nx * ny + (z % 5)] = 40.0;
        }
        let v = vol([nx, ny, nz], data);
        let (c, rec) = crop_uninformative_slices(&v).unwrap();
        assert_eq!(rec.kept[2], 3..8);
        assert_eq!(c.shape(), [3, 2, 5]);
        let back = uncrop(&c, &rec, -1024.0).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn crop_identity_when_boundaries_informative() {
        let data: Vec<f32> = (0..27).map(|i| (i % 4) as f32).collect();
        let v = vol([3, 3, 3], data);
        let (c, rec) = crop_uninformative_slices(&v).unwrap();
        assert_eq!(c, v);
        assert_eq!(rec, CropRecord::full([3, 3, 3]));
    }

    #[test]
    fn crop_uniform_volume_is_error() {
        let v = vol([2, 2, 4], vec![-1000.0; 16]);
        assert!(matches!(crop_uninformative_slices(&v), Err(Error::AllUninformative)));
    }

    #[test]
    fn crop_record_line_round_trip() {
        let rec = CropRecord {
            original_shape: [5, 6, 7],
            kept: [0..5, 0..6, 2..6],
        };
        assert_eq!(CropRecord::parse_line(&rec.to_line()).unwrap(), rec);
        assert!(CropRecord::parse_line("0:5 of 5").is_err());
    }

    #[test]
    fn identity_augmentation() {
        let data: Vec<f32> = (0..60).map(|i| (i as f32) / 60.0).collect();
        let n = NormalizedVolume::new(vol([3, 4, 5], data)).unwrap();
        let out = apply_augmentation(&n, &AugmentationSpec::default()).unwrap();
        assert_eq!(out, n);
    }

    #[test]
    fn double_flip_is_identity() {
        let data: Vec<f32> = (0..60).map(|i| (i as f32) / 60.0).collect();
        let n = NormalizedVolume::new(vol([3, 4, 5], data)).unwrap();
        for axis in 0..3 {
            let mut spec = AugmentationSpec::default();
            spec.flip_axes[axis] = true;
            let once = apply_augmentation(&n, &spec).unwrap();
            assert_ne!(once, n);
            assert_eq!(apply_augmentation(&once, &spec).unwrap(), n);
        }
    }

    #[test]
    fn flip_x_reverses_rows() {
        let n = NormalizedVolume::new(vol([3, 1, 1], vec![0.0, 0.5, 1.0])).unwrap();
        let spec = AugmentationSpec {
            flip_axes: [true, false, false],
            ..Default::default()
        };
        assert_eq!(apply_augmentation(&n, &spec).unwrap().values(), &[1.0, 0.5, 0.0]);
    }

    #[test]
    fn rotation_by_90_permutes_exactly() {
        // 3x3 single slice: 90 degrees about z maps grid points onto grid points.
        let data: Vec<f32> = (0..9).map(|i| i as f32 / 8.0).collect();
        let n = NormalizedVolume::new(vol([3, 3, 1], data)).unwrap();
        let r = rotate(n.values(), Dims::new(3, 3, 1), [1.0; 3], Axis::Z, 90.0);
        // output(x, y) = input(R^-1 (x, y)) with R a +90 deg turn about the centre
        let expected = [6.0, 3.0, 0.0, 7.0, 4.0, 1.0, 8.0, 5.0, 2.0].map(|v: f32| v / 8.0);
        for (a, b) in r.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn intensity_shift_clamps() {
        let n = NormalizedVolume::new(vol([3, 1, 1], vec![0.0, 0.5, 0.999])).unwrap();
        let spec = AugmentationSpec {
            intensity_shift_hu: 10.0,
            ..Default::default()
        };
        let out = apply_augmentation(&n, &spec).unwrap();
        let d = 0.005f32;
        assert_eq!(out.values(), &[d, 0.5 + d, 1.0]);
    }

    #[test]
    fn spec_out_of_range() {
        let n = NormalizedVolume::new(vol([1, 1, 1], vec![0.2])).unwrap();
        let spec = AugmentationSpec {
            rotation_degrees: 31.0,
            ..Default::default()
        };
        assert!(matches!(apply_augmentation(&n, &spec), Err(Error::SpecOutOfRange(_))));
        let spec = AugmentationSpec {
            intensity_shift_hu: -10.5,
            ..Default::default()
        };
        assert!(matches!(apply_augmentation(&n, &spec), Err(Error::SpecOutOfRange(_))));
    }

    #[test]
    fn sampled_specs_in_range_and_reproducible() {
        for seed in 0..200 {
            let s = AugmentationSpec::sample(seed, Axis::Z);
            s.validate().unwrap();
            assert_eq!(s, AugmentationSpec::sample(seed, Axis::Z));
        }
    }

    #[test]
    fn projection_of_ones() {
        let v = vol([4, 4, 4], vec![1.0; 64]);
        let p = project_sum(&v, Plane::Axial).unwrap();
        assert_eq!((p.width, p.height), (4, 4));
        assert!(p.pixels.iter().all(|&x| x == 4.0));
    }

    #[test]
    fn projection_of_single_voxel() {
        let mut data = vec![0.0; 5 * 6 * 7];
        let dims = Dims::new(5, 6, 7);
        data[dims.index(1, 2, 3)] = 2.5;
        let v = vol([5, 6, 7], data);
        for (plane, col, row) in [
            (Plane::Axial, 1, 2),
            (Plane::Coronal, 1, 3),
            (Plane::Sagittal, 2, 3),
        ] {
            let p = project_sum(&v, plane).unwrap();
            assert_eq!(p.pixels.iter().filter(|&&x| x != 0.0).count(), 1);
            assert_eq!(p.get(col, row), 2.5);
        }
    }

    #[test]
    fn pgm_layout() {
        let img = Image2 {
            width: 2,
            height: 1,
            pixels: vec![3.0, 5.0],
        };
        let mut out = Vec::new();
        img.write_pgm(&mut out).unwrap();
        assert_eq!(out, b"P5\n2 1\n255\n\x00\xff");
    }
}
