//! Dense 3D voxel grids.
//!
//! A [`Volume`] carries CT intensities, probability maps and label masks
//! alike. Voxels are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`.

use crate::error::{Error, Result};

/// Per-axis voxel counts `(nx, ny, nz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims([nx, ny, nz])
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.0[0]
    }
    #[inline]
    pub fn ny(&self) -> usize {
        self.0[1]
    }
    #[inline]
    pub fn nz(&self) -> usize {
        self.0[2]
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.0[0] * (y + self.0[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let nx = self.0[0];
        let ny = self.0[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.0[a])
    }
}

/// Element kinds a [`Volume`] can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    U8,
    I16,
    F32,
}

impl ElementKind {
    pub fn nifti_code(self) -> i16 {
        match self {
            ElementKind::U8 => 2,
            ElementKind::I16 => 4,
            ElementKind::F32 => 16,
        }
    }

    pub fn bitpix(self) -> i16 {
        match self {
            ElementKind::U8 => 8,
            ElementKind::I16 => 16,
            ElementKind::F32 => 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ElementKind {
        match self {
            VoxelData::U8(_) => ElementKind::U8,
            VoxelData::I16(_) => ElementKind::I16,
            VoxelData::F32(_) => ElementKind::F32,
        }
    }
}

pub type Affine = [[f64; 4]; 4];

pub fn diagonal_affine(spacing: [f64; 3]) -> Affine {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// A 3D voxel grid with physical spacing (mm/voxel) and an orientation
/// affine. The affine is carried through processing untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: [f64; 3],
    affine: Affine,
    data: VoxelData,
}

impl Volume {
    pub fn new(dims: Dims, spacing: [f64; 3], data: VoxelData) -> Result<Self> {
        Self::with_affine(dims, spacing, diagonal_affine(spacing), data)
    }

    pub fn with_affine(
        dims: Dims,
        spacing: [f64; 3],
        affine: Affine,
        data: VoxelData,
    ) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::InconsistentHeader(format!(
                "{} elements for shape {:?}",
                data.len(),
                dims.0
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InconsistentHeader(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        Ok(Volume {
            dims,
            spacing,
            affine,
            data,
        })
    }

    pub fn from_f32(dims: Dims, spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        Self::new(dims, spacing, VoxelData::F32(data))
    }

    pub fn from_u8(dims: Dims, spacing: [f64; 3], data: Vec<u8>) -> Result<Self> {
        Self::new(dims, spacing, VoxelData::U8(data))
    }

    pub fn from_i16(dims: Dims, spacing: [f64; 3], data: Vec<i16>) -> Result<Self> {
        Self::new(dims, spacing, VoxelData::I16(data))
    }

    /// A volume with the same geometry as `self` but different contents.
    pub fn like(&self, data: VoxelData) -> Result<Self> {
        Self::with_affine(self.dims, self.spacing, self.affine, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn shape(&self) -> [usize; 3] {
        self.dims.0
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn set_affine(&mut self, affine: Affine) {
        self.affine = affine;
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }

    pub fn kind(&self) -> ElementKind {
        self.data.kind()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            VoxelData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            VoxelData::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i16(&self) -> Option<&[i16]> {
        match &self.data {
            VoxelData::I16(v) => Some(v),
            _ => None,
        }
    }

    #[inline]
    pub fn get_f64(&self, i: usize) -> f64 {
        match &self.data {
            VoxelData::U8(v) => v[i] as f64,
            VoxelData::I16(v) => v[i] as f64,
            VoxelData::F32(v) => v[i] as f64,
        }
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.get_f64(self.dims.index(x, y, z))
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.data {
            VoxelData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| x as f32).collect(),
            VoxelData::F32(v) => v.clone(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_f64(i)).collect()
    }

    /// Foreground indicator: 1 where the voxel is non-zero, else 0.
    pub fn to_binary(&self) -> Vec<u8> {
        match &self.data {
            VoxelData::U8(v) => v.iter().map(|&x| (x != 0) as u8).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| (x != 0) as u8).collect(),
            VoxelData::F32(v) => v.iter().map(|&x| (x != 0.0) as u8).collect(),
        }
    }

    pub fn count_nonzero(&self) -> usize {
        (0..self.len()).filter(|&i| self.get_f64(i) != 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        (0..self.len()).map(|i| self.get_f64(i)).sum()
    }

    /// Minimum and maximum voxel values; `None` for an empty volume.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.len() {
            let v = self.get_f64(i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    pub fn check_same_shape(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(self.dims.0, other.dims.0));
        }
        Ok(())
    }
}

/// A binary mask volume (u8, values 0/1) built from an indicator buffer.
pub fn mask_like(reference: &Volume, bits: Vec<u8>) -> Result<Volume> {
    reference.like(VoxelData::U8(bits))
}
