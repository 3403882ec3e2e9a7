//! Synthetic vessel phantoms and a seeded mock predictor.
//!
//! A phantom is a trunk tube plus branch tubes, each a polyline swept by a
//! linearly interpolated radius. Positions are in mm with voxel `(x, y, z)`
//! centred at `(x*sx, y*sy, z*sz)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::morphology::{RegionLabelMap, REGION_BRANCH, REGION_MAIN};
use crate::volume::{Dims, Volume, VoxelData};

pub const DEFAULT_BACKGROUND_HU: f64 = -1000.0;
pub const DEFAULT_VESSEL_HU: f64 = 300.0;
pub const DEFAULT_NOISE_SIGMA_HU: f64 = 20.0;

pub const PRESETS: [&str; 2] = ["cylinder", "y-bifurcation"];

#[derive(Debug, Clone, PartialEq)]
pub struct TubeSpec {
    pub polyline: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
}

impl TubeSpec {
    pub fn new(polyline: Vec<[f64; 3]>, radii: Vec<f64>) -> Result<Self> {
        let t = TubeSpec { polyline, radii };
        t.validate()?;
        Ok(t)
    }

    /// A straight tube of constant radius.
    pub fn straight(from: [f64; 3], to: [f64; 3], radius: f64) -> Result<Self> {
        Self::new(vec![from, to], vec![radius, radius])
    }

    pub fn validate(&self) -> Result<()> {
        if self.polyline.len() < 2 {
            return Err(Error::InvalidPhantom("a tube needs at least 2 points".into()));
        }
        if self.radii.len() != self.polyline.len() {
            return Err(Error::InvalidPhantom(format!(
                "{} radii for {} points",
                self.radii.len(),
                self.polyline.len()
            )));
        }
        if self.radii.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidPhantom("radii must be positive".into()));
        }
        if self.polyline.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPhantom("non-finite polyline point".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// Distance from `p` to the nearest point of the polyline.
    pub fn distance_to_axis(&self, p: [f64; 3]) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| {
                let (t, _) = project(p, w[0], w[1]);
                dist(p, lerp3(w[0], w[1], t))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `p` lies within the swept radius of any segment.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..self.polyline.len() - 1).any(|k| self.segment_contains(k, p))
    }

    fn segment_contains(&self, k: usize, p: [f64; 3]) -> bool {
        let (a, b) = (self.polyline[k], self.polyline[k + 1]);
        let (t, d2) = project(p, a, b);
        let r = self.radii[k] + t * (self.radii[k + 1] - self.radii[k]);
        d2 <= r * r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub trunk: TubeSpec,
    pub branches: Vec<TubeSpec>,
    pub background_hu: f64,
    pub vessel_hu: f64,
    pub noise_sigma_hu: f64,
    pub noise_seed: u64,
}

impl PhantomSpec {
    pub fn new(dims: Dims, spacing: [f64; 3], trunk: TubeSpec, branches: Vec<TubeSpec>) -> Self {
        PhantomSpec {
            dims,
            spacing,
            trunk,
            branches,
            background_hu: DEFAULT_BACKGROUND_HU,
            vessel_hu: DEFAULT_VESSEL_HU,
            noise_sigma_hu: DEFAULT_NOISE_SIGMA_HU,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidPhantom("empty volume shape".into()));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidPhantom(format!("spacing {:?}", self.spacing)));
        }
        if !(self.vessel_hu > self.background_hu) {
            return Err(Error::InvalidPhantom(format!(
                "vessel HU {} must exceed background HU {}",
                self.vessel_hu, self.background_hu
            )));
        }
        if !(self.noise_sigma_hu >= 0.0) || !self.noise_sigma_hu.is_finite() {
            return Err(Error::InvalidPhantom(format!("noise sigma {}", self.noise_sigma_hu)));
        }
        self.trunk.validate()?;
        let tol = 1e-6 * self.spacing.iter().copied().fold(1.0, f64::max);
        for (i, b) in self.branches.iter().enumerate() {
            b.validate()?;
            if self.trunk.distance_to_axis(b.polyline[0]) > tol {
                return Err(Error::InvalidPhantom(format!(
                    "branch {i} does not start on the trunk polyline"
                )));
            }
        }
        let extent: Vec<f64> = (0..3)
            .map(|a| (self.dims.0[a] - 1) as f64 * self.spacing[a])
            .collect();
        for (name, tube) in std::iter::once(("trunk".to_string(), &self.trunk))
            .chain(self.branches.iter().enumerate().map(|(i, b)| (format!("branch {i}"), b)))
        {
            for p in &tube.polyline {
                if (0..3).any(|a| p[a] < 0.0 || p[a] > extent[a]) {
                    return Err(Error::TubeOutOfBounds(format!(
                        "{name} point {p:?} outside [0, {extent:?}] mm"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The phantom images: CT-like HU values (int16), the binary vessel mask
/// and its trunk / branch regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub hu: Volume,
    pub mask: Volume,
    pub regions: RegionLabelMap,
}

pub fn rasterize_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let dims = spec.dims;
    let mut labels = vec![0u8; dims.len()];
    paint(&spec.trunk, REGION_MAIN, dims, spec.spacing, &mut labels);
    for b in &spec.branches {
        paint(b, REGION_BRANCH, dims, spec.spacing, &mut labels);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let noise = if spec.noise_sigma_hu > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma_hu).map_err(|e| Error::InvalidPhantom(e.to_string()))?)
    } else {
        None
    };
    let hu: Vec<i16> = labels
        .iter()
        .map(|&l| {
            let base = if l != 0 { spec.vessel_hu } else { spec.background_hu };
            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            (base + n).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect();
    let mask: Vec<u8> = labels.iter().map(|&l| (l != 0) as u8).collect();
    Ok(Phantom {
        hu: Volume::from_i16(dims, spec.spacing, hu)?,
        mask: Volume::from_u8(dims, spec.spacing, mask)?,
        regions: RegionLabelMap::new(Volume::from_u8(dims, spec.spacing, labels)?)?,
    })
}

/// Label voxels inside `tube` with `region` unless already labelled.
fn paint(tube: &TubeSpec, region: u8, dims: Dims, spacing: [f64; 3], labels: &mut [u8]) {
    for k in 0..tube.polyline.len() - 1 {
        let (a, b) = (tube.polyline[k], tube.polyline[k + 1]);
        let r = tube.radii[k].max(tube.radii[k + 1]);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for ax in 0..3 {
            let min = a[ax].min(b[ax]) - r;
            let max = a[ax].max(b[ax]) + r;
            let n = dims.0[ax] as f64;
            lo[ax] = (min / spacing[ax]).floor().clamp(0.0, n - 1.0) as usize;
            hi[ax] = (max / spacing[ax]).ceil().clamp(0.0, n - 1.0) as usize;
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let i = dims.index(x, y, z);
                    if labels[i] != 0 {
                        continue;
                    }
                    let p = [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]];
                    if tube.segment_contains(k, p) {
                        labels[i] = region;
                    }
                }
            }
        }
    }
}

/// Straight cylinder along z, centred in x/y, 1 mm isotropic, with a
/// margin of `radius + 3` voxels around it.
pub fn cylinder_spec(radius: f64, length: f64) -> Result<PhantomSpec> {
    let margin = (radius + 3.0).ceil();
    let side = (2.0 * margin + 1.0) as usize;
    let nz = (length + 2.0 * margin).ceil() as usize + 1;
    let c = margin;
    let trunk = TubeSpec::straight([c, c, margin], [c, c, margin + length], radius)?;
    Ok(PhantomSpec::new(Dims::new(side, side, nz), [1.0; 3], trunk, Vec::new()))
}

/// A trunk along z splitting into two symmetric branches in the x-z plane.
pub fn y_bifurcation_spec(trunk_radius: f64, branch_radius: f64) -> Result<PhantomSpec> {
    let trunk_len = 26.0;
    let spread = 12.0;
    let rise = 20.0;
    let margin = (trunk_radius + 3.0).ceil();
    let nx = (2.0 * (spread + margin)) as usize + 1;
    let ny = (2.0 * margin) as usize + 1;
    let nz = (trunk_len + rise + 2.0 * margin) as usize + 1;
    let cx = spread + margin;
    let cy = margin;
    let split = [cx, cy, margin + trunk_len];
    let trunk = TubeSpec::straight([cx, cy, margin], split, trunk_radius)?;
    let left = TubeSpec::straight(split, [cx - spread, cy, split[2] + rise], branch_radius)?;
    let right = TubeSpec::straight(split, [cx + spread, cy, split[2] + rise], branch_radius)?;
    Ok(PhantomSpec::new(Dims::new(nx, ny, nz), [1.0; 3], trunk, vec![left, right]))
}

/// Named presets: `cylinder` (radius 3, length 40) and `y-bifurcation`
/// (trunk radius 4, branch radius 1.5).
pub fn preset(name: &str, seed: u64) -> Result<PhantomSpec> {
    let mut spec = match name {
        "cylinder" => cylinder_spec(3.0, 40.0)?,
        "y-bifurcation" => y_bifurcation_spec(4.0, 1.5)?,
        other => {
            return Err(Error::InvalidPhantom(format!(
                "unknown preset {other:?}; expected one of {PRESETS:?}"
            )))
        }
    };
    spec.noise_seed = seed;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Corruption {
    /// Probability of flipping each voxel on the mask boundary (either side).
    pub boundary_flip_prob: f64,
    /// Number of 3x3x3 false-positive blobs placed away from the mask.
    pub detach_blob_count: usize,
}

impl Corruption {
    pub fn is_zero(&self) -> bool {
        self.boundary_flip_prob == 0.0 && self.detach_blob_count == 0
    }
}

/// Weight of the corrupted binary mask in the smoothed output; the rest is
/// its 3x3x3 box mean. Any value above 0.5 keeps `output >= 0.5` equal to
/// the corrupted mask.
const MOCK_SELF_WEIGHT: f64 = 0.6;

/// Seed of the `index`-th mock prediction derived from a base seed.
pub fn mock_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(1000).wrapping_add(index as u64 + 1)
}

/// A stand-in for a network's probability map: the mask with seeded
/// boundary flips and detached blobs, softened by a box filter. Thresholding
/// the output at 0.5 recovers the corrupted mask exactly. Zero corruption
/// returns the mask as float-32.
pub fn mock_predict(gt: &Volume, corruption: Corruption, seed: u64) -> Result<Volume> {
    if !(0.0..=1.0).contains(&corruption.boundary_flip_prob) {
        return Err(Error::InvalidParameter(format!(
            "flip probability {} outside [0, 1]",
            corruption.boundary_flip_prob
        )));
    }
    let mut bits = gt.to_binary();
    if corruption.is_zero() {
        return gt.like(VoxelData::F32(bits.iter().map(|&b| b as f32).collect()));
    }
    let dims = gt.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if corruption.boundary_flip_prob > 0.0 {
        let boundary: Vec<usize> = (0..bits.len()).filter(|&i| on_boundary(&bits, dims, i)).collect();
        for i in boundary {
            if rng.gen::<f64>() < corruption.boundary_flip_prob {
                bits[i] ^= 1;
            }
        }
    }

    let [nx, ny, nz] = dims.0;
    if corruption.detach_blob_count > 0 && nx >= 5 && ny >= 5 && nz >= 5 {
        let mut placed = 0;
        let mut attempts = 0;
        while placed < corruption.detach_blob_count && attempts < 10_000 {
            attempts += 1;
            let c = [rng.gen_range(2..nx - 2), rng.gen_range(2..ny - 2), rng.gen_range(2..nz - 2)];
            if any_set(&bits, dims, c, 2) {
                continue;
            }
            set_cube(&mut bits, dims, c, 1);
            placed += 1;
        }
        if placed < corruption.detach_blob_count {
            log::warn!(
                "placed {placed} of {} detached blobs; volume too crowded",
                corruption.detach_blob_count
            );
        }
    }

    let out: Vec<f32> = (0..bits.len())
        .map(|i| {
            let c = dims.coords(i);
            let (mut sum, mut n) = (0u32, 0u32);
            for_cube(dims, c, 1, |j| {
                sum += bits[j] as u32;
                n += 1;
            });
            let mean = sum as f64 / n as f64;
            (MOCK_SELF_WEIGHT * bits[i] as f64 + (1.0 - MOCK_SELF_WEIGHT) * mean) as f32
        })
        .collect();
    gt.like(VoxelData::F32(out))
}

fn on_boundary(bits: &[u8], dims: Dims, i: usize) -> bool {
    let c = dims.coords(i);
    let v = bits[i];
    for (ax, d) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
        let mut p = [c[0] as i64, c[1] as i64, c[2] as i64];
        p[ax] += d;
        if dims.contains(p) && bits[dims.index(p[0] as usize, p[1] as usize, p[2] as usize)] != v {
            return true;
        }
    }
    false
}

fn for_cube(dims: Dims, c: [usize; 3], half: usize, mut f: impl FnMut(usize)) {
    let lo = |a: usize| c[a].saturating_sub(half);
    let hi = |a: usize| (c[a] + half).min(dims.0[a] - 1);
    for z in lo(2)..=hi(2) {
        for y in lo(1)..=hi(1) {
            for x in lo(0)..=hi(0) {
                f(dims.index(x, y, z));
            }
        }
    }
}

fn any_set(bits: &[u8], dims: Dims, c: [usize; 3], half: usize) -> bool {
    let mut hit = false;
    for_cube(dims, c, half, |j| hit |= bits[j] != 0);
    hit
}

fn set_cube(bits: &mut [u8], dims: Dims, c: [usize; 3], half: usize) {
    for_cube(dims, c, half, |j| bits[j] = 1);
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// Clamped segment parameter of the closest point to `p`, and the squared
/// distance to it.
fn project(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = lerp3(a, b, t);
    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
    (t, d2)
}
